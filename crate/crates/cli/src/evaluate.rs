use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use usx_core::dataset::{sample_dir, Split};
use usx_core::geom::io::read_ply_cloud;
use usx_core::metrics::{aggregate, evaluate, EvalOptions, EvalRow, Region};
use usx_core::sample::VertebraSample;

use crate::complete::select_ids;
use crate::error::{CliError, CliResult, Context};
use crate::output::{fmt_f, fmt_opt, write_csv};

pub const TABLE_HEADER: [&str; 9] = [
    "method",
    "region",
    "n",
    "cd_x1e4_mean",
    "cd_x1e4_std",
    "emd_x1e4_mean",
    "emd_x1e4_std",
    "f1_mean",
    "f1_std",
];

pub const PAIRS_HEADER: [&str; 6] = ["method", "id", "region", "cd_x1e4", "emd_x1e4", "f1"];

/// `NAME=DIR`.
pub fn parse_pred(arg: &str) -> CliResult<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() && !name.contains(',') => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => Err(CliError::usage(format!("--pred expects NAME=DIR, got {arg:?}"))),
    }
}

fn eval_one(data: &Path, pred: &Path, id: &str, opts: &EvalOptions) -> CliResult<EvalRow> {
    let gt = VertebraSample::load(&sample_dir(data, id)).ctx(format!("sample {id}"))?.complete;
    let path = pred.join(id).join("refined.ply");
    let p = read_ply_cloud(&path).ctx(format!("prediction {}", path.display()))?;
    Ok(evaluate(&p.cloud, &gt, opts)?)
}

/// Per-vertebra rows for each id, in input order, computed on `jobs` threads.
pub fn eval_rows(data: &Path, pred: &Path, ids: &[String], opts: &EvalOptions, jobs: usize) -> CliResult<Vec<EvalRow>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<EvalRow>>>> = Mutex::new((0..ids.len()).map(|_| None).collect());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(id) = ids.get(i) else { break };
        let r = eval_one(data, pred, id, opts);
        slots.lock().unwrap()[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 1..jobs.max(1) {
            s.spawn(work);
        }
        work();
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub fn run(
    data: &Path,
    preds: &[(String, PathBuf)],
    split: Option<Split>,
    opts: &EvalOptions,
    out: &Path,
    jobs: usize,
    digest: &str,
) -> CliResult<()> {
    if preds.is_empty() {
        return Err(CliError::usage("at least one --pred NAME=DIR is required"));
    }
    let mut names: Vec<&str> = preds.iter().map(|(n, _)| n.as_str()).collect();
    names.sort();
    names.dedup();
    if names.len() != preds.len() {
        return Err(CliError::usage("--pred names must be unique"));
    }
    let ids = select_ids(data, split)?;
    if ids.is_empty() {
        return Err(CliError::data("no samples in the selected split"));
    }
    std::fs::create_dir_all(out)?;
    let mut table = Vec::new();
    let mut pairs = Vec::new();
    for (name, dir) in preds {
        let rows = eval_rows(data, dir, &ids, opts, jobs)?;
        for region in Region::ALL {
            match aggregate(&rows, region) {
                Some(a) => table.push(vec![
                    name.clone(),
                    region.name().to_string(),
                    a.n.to_string(),
                    fmt_f(a.cd_mean),
                    fmt_f(a.cd_std),
                    fmt_f(a.emd_mean),
                    fmt_f(a.emd_std),
                    fmt_f(a.f1_mean),
                    fmt_f(a.f1_std),
                ]),
                None => {
                    let mut row = vec![name.clone(), region.name().to_string(), "0".to_string()];
                    row.extend(std::iter::repeat("NA".to_string()).take(6));
                    table.push(row);
                }
            }
        }
        for (id, row) in ids.iter().zip(&rows) {
            for region in Region::ALL {
                let m = row.get(region);
                pairs.push(vec![
                    name.clone(),
                    id.clone(),
                    region.name().to_string(),
                    fmt_opt(m.map(|m| m.cd)),
                    fmt_opt(m.map(|m| m.emd)),
                    fmt_opt(m.map(|m| m.f1)),
                ]);
            }
        }
    }
    write_csv(&out.join("table.csv"), digest, &TABLE_HEADER, &table)?;
    write_csv(&out.join("pairs.csv"), digest, &PAIRS_HEADER, &pairs)?;
    println!("evaluated {} methods on {} vertebrae -> {}", preds.len(), ids.len(), out.display());
    for r in &table {
        println!("{:<12} {:<6} CD {:>10} EMD {:>10} F1 {:>8}", r[0], r[1], short(&r[3]), short(&r[5]), short(&r[7]));
    }
    Ok(())
}

fn short(s: &str) -> String {
    s.parse::<f64>().map_or_else(|_| s.to_string(), |v| format!("{v:.4}"))
}
