use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use usx_core::metrics::{wilcoxon_signed_rank, Region};
use usx_core::Error;

use crate::error::{CliError, CliResult};
use crate::output::{fmt_f, read_csv, write_csv};

pub const STATS_HEADER: [&str; 11] = [
    "region",
    "metric",
    "n",
    "mean_a",
    "mean_b",
    "w_plus",
    "w_minus",
    "statistic",
    "p_value",
    "exact",
    "note",
];

const METRICS: [&str; 3] = ["cd_x1e4", "emd_x1e4", "f1"];

/// `(id, region, metric) -> value` for one method; undefined cells are absent.
type Cells = BTreeMap<(String, String, String), f64>;

fn pairs_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("pairs.csv")
    } else {
        p.to_path_buf()
    }
}

/// Loads one method's cells plus its full id list from a `pairs.csv`.
fn load_method(path: &Path, method: Option<&str>) -> CliResult<(String, Vec<String>, Cells)> {
    let path = pairs_path(path);
    let (header, rows) = read_csv(&path)?;
    let col = |n: &str| {
        header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CliError::data(format!("{}: missing column {n}", path.display())))
    };
    let (im, ii, ir) = (col("method")?, col("id")?, col("region")?);
    let metric_cols = METRICS.iter().map(|m| col(m)).collect::<CliResult<Vec<_>>>()?;
    let mut methods: Vec<&str> = rows.iter().map(|r| r[im].as_str()).collect();
    methods.sort();
    methods.dedup();
    let method = match method {
        Some(m) if methods.contains(&m) => m.to_string(),
        Some(m) => return Err(CliError::data(format!("{}: no method {m:?} (have {methods:?})", path.display()))),
        None if methods.len() == 1 => methods[0].to_string(),
        None => {
            return Err(CliError::usage(format!(
                "{} holds several methods {methods:?}; choose one with --method-a/--method-b",
                path.display()
            )))
        }
    };
    let mut ids = Vec::new();
    let mut cells = Cells::new();
    for r in rows.iter().filter(|r| r[im] == method) {
        if !ids.contains(&r[ii]) {
            ids.push(r[ii].clone());
        }
        for (m, &c) in METRICS.iter().zip(&metric_cols) {
            if r[c] == "NA" {
                continue;
            }
            let v: f64 = r[c]
                .parse()
                .map_err(|_| CliError::data(format!("{}: bad value {:?}", path.display(), r[c])))?;
            cells.insert((r[ii].clone(), r[ir].clone(), m.to_string()), v);
        }
    }
    ids.sort();
    Ok((method, ids, cells))
}

/// Paired two-sided signed-rank tests of method A against method B for every
/// region and metric. Differences are `A - B`.
pub fn run(a: &Path, b: &Path, method_a: Option<&str>, method_b: Option<&str>, out: Option<&Path>, digest: &str) -> CliResult<()> {
    let (name_a, ids_a, cells_a) = load_method(a, method_a)?;
    let (name_b, ids_b, cells_b) = load_method(b, method_b)?;
    if ids_a != ids_b {
        return Err(CliError::data(format!(
            "vertebra ids differ between {name_a} ({} ids) and {name_b} ({} ids)",
            ids_a.len(),
            ids_b.len()
        )));
    }
    let mut rows = Vec::new();
    let mut any = false;
    let mut smallest = usize::MAX;
    for region in Region::ALL {
        for metric in METRICS {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for id in &ids_a {
                let key = (id.clone(), region.name().to_string(), metric.to_string());
                if let (Some(&va), Some(&vb)) = (cells_a.get(&key), cells_b.get(&key)) {
                    x.push(va);
                    y.push(vb);
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { "NA".to_string() } else { fmt_f(v.iter().sum::<f64>() / v.len() as f64) };
            let mut row = vec![region.name().to_string(), metric.to_string(), x.len().to_string(), mean(&x), mean(&y)];
            match wilcoxon_signed_rank(&x, &y) {
                Ok(w) => {
                    any = true;
                    row.extend([
                        fmt_f(w.w_plus),
                        fmt_f(w.w_minus),
                        fmt_f(w.statistic()),
                        fmt_f(w.p_value),
                        w.exact.to_string(),
                        String::new(),
                    ]);
                    println!(
                        "{:<6} {:<9} n={:<4} W+={:<8} W-={:<8} p={:.4e}{}",
                        row[0],
                        row[1],
                        w.n,
                        w.w_plus,
                        w.w_minus,
                        w.p_value,
                        if w.exact { " (exact)" } else { "" }
                    );
                }
                Err(Error::InsufficientPairs(n)) => {
                    smallest = smallest.min(n);
                    row.extend(std::iter::repeat("NA".to_string()).take(5));
                    row.push(format!("insufficient pairs ({n})"));
                    println!("{:<6} {:<9} insufficient pairs ({n})", row[0], row[1]);
                }
                Err(e) => return Err(e.into()),
            }
            rows.push(row);
        }
    }
    if !any {
        return Err(Error::InsufficientPairs(smallest).into());
    }
    if let Some(out) = out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_csv(out, digest, &STATS_HEADER, &rows)?;
    }
    println!("A = {name_a}, B = {name_b}, differences A - B");
    Ok(())
}
