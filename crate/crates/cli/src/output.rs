//! Output helpers. Every CSV starts with a `# config_digest` line and every
//! PLY carries the digest as a header comment.

use std::io::Write;
use std::path::Path;

use crate::error::CliResult;

pub fn digest_comment(digest: &str) -> String {
    format!("config_digest {digest}")
}

pub fn write_csv(path: &Path, digest: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# {}", digest_comment(digest))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping `#` comment lines.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
