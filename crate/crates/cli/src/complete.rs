use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use usx_core::dataset::{sample_dir, Split};
use usx_core::geom::io::{write_ply_cloud, PlyWriteOptions};
use usx_core::joint::Source;
use usx_core::rng::stream_rng;
use usx_core::sample::VertebraSample;
use usx_core::PointCloud;
use usx_net::{checkpoint, complete, standard_noise, Model};

use crate::error::{CliError, CliResult, Context};
use crate::output::{digest_comment, write_json};
use crate::train::load_manifest;

/// Which samples to complete.
#[derive(Debug, Clone)]
pub enum Selection {
    Split(Option<Split>),
    Dirs(Vec<PathBuf>),
}

pub fn parse_split(s: &str) -> CliResult<Option<Split>> {
    match s {
        "train" => Ok(Some(Split::Train)),
        "val" => Ok(Some(Split::Val)),
        "test" => Ok(Some(Split::Test)),
        "all" => Ok(None),
        _ => Err(CliError::usage(format!("unknown split {s:?} (train|val|test|all)"))),
    }
}

pub fn select_ids(data: &Path, split: Option<Split>) -> CliResult<Vec<String>> {
    let manifest = load_manifest(data)?;
    Ok(match split {
        Some(s) => manifest.ids(s).into_iter().map(str::to_string).collect(),
        None => manifest.samples.iter().map(|e| e.id.clone()).collect(),
    })
}

fn write_prediction(dir: &Path, sample: &VertebraSample, coarse: &PointCloud, refined: &PointCloud, comments: &[String]) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let plain = PlyWriteOptions {
        comments: comments.to_vec(),
        ..Default::default()
    };
    write_ply_cloud(dir.join("coarse.ply"), coarse, &plain)?;
    write_ply_cloud(dir.join("refined.ply"), refined, &plain)?;
    let joint = PointCloud::concat(&[&sample.us_partial, &sample.xray_partial, coarse]);
    let sources: Vec<u8> = [
        (Source::Us, sample.us_partial.len()),
        (Source::Xray, sample.xray_partial.len()),
        (Source::Coarse, coarse.len()),
    ]
    .iter()
    .flat_map(|&(s, n)| std::iter::repeat(s as u8).take(n))
    .collect();
    write_ply_cloud(
        dir.join("joint.ply"),
        &joint,
        &PlyWriteOptions {
            comments: comments.to_vec(),
            sources: Some(&sources),
            colors: true,
        },
    )?;
    Ok(())
}

/// Completes each selected vertebra, writing `<out>/<id>/{coarse,refined,joint}.ply`
/// and `<out>/timing.json` (inference wall-clock per vertebra).
pub fn run(model_path: &Path, data: &Path, selection: &Selection, out: &Path, seed: u64, deterministic: bool) -> CliResult<()> {
    let model: Model = checkpoint::load(model_path).ctx(format!("checkpoint {}", model_path.display()))?;
    let dirs: Vec<PathBuf> = match selection {
        Selection::Dirs(d) => d.clone(),
        Selection::Split(s) => select_ids(data, *s)?
            .into_iter()
            .map(|id| sample_dir(data, &id))
            .collect(),
    };
    if dirs.is_empty() {
        return Err(CliError::data("no samples selected"));
    }
    std::fs::create_dir_all(out)?;
    let digest: String = model.config.digest().iter().map(|b| format!("{b:02x}")).collect();
    let comments = vec![digest_comment(&digest)];
    let mut timing = BTreeMap::new();
    for dir in &dirs {
        let sample = VertebraSample::load(dir).ctx(format!("sample {}", dir.display()))?;
        let id = sample.meta.level_id.clone();
        let xray = model.config.mode.uses_xray().then_some(&sample.xray_partial);
        let noise = (!deterministic).then(|| standard_noise(&mut stream_rng(seed, &format!("complete-{id}")), model.config.latent_dim));
        let t0 = Instant::now();
        let c = complete(&model, &sample.us_partial, xray, noise.as_ref())?;
        let secs = t0.elapsed().as_secs_f64();
        write_prediction(&out.join(&id), &sample, &c.coarse, &c.refined, &comments)?;
        timing.insert(id, secs);
    }
    let max = timing.values().copied().fold(0.0, f64::max);
    let mean = timing.values().sum::<f64>() / timing.len() as f64;
    write_json(
        &out.join("timing.json"),
        &serde_json::json!({
            "model_digest": digest,
            "deterministic": deterministic,
            "seconds": timing,
            "mean_seconds": mean,
            "max_seconds": max,
        }),
    )?;
    println!(
        "completed {} vertebrae into {} (mean {:.3} s, max {:.3} s)",
        dirs.len(),
        out.display(),
        mean,
        max
    );
    Ok(())
}
