use std::path::{Path, PathBuf};

use usx_core::dataset::{build_dataset, generate_toy_spine, load_spine_meshes, SpineInput};
use usx_core::geom::io::read_mesh;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{CliError, CliResult, Context};
use crate::output::digest_comment;

fn load_spine(path: &Path) -> CliResult<SpineInput> {
    if path.is_dir() {
        return load_spine_meshes(path).ctx(format!("mesh directory {}", path.display()));
    }
    let mesh = read_mesh(path).ctx(format!("mesh {}", path.display()))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    Ok(SpineInput {
        id,
        levels: vec![mesh],
        provenance: serde_json::json!({ "source": "file", "file": path.display().to_string() }),
    })
}

pub fn toy_spines(cfg: &ExperimentConfig) -> CliResult<Vec<SpineInput>> {
    (0..cfg.dataset.toy_spines)
        .map(|i| {
            Ok(SpineInput {
                id: format!("toy{i:04}"),
                levels: generate_toy_spine(&cfg.dataset.toy, cfg.seed, i)?,
                provenance: serde_json::json!({ "generator": "toy-spine", "index": i, "seed": cfg.seed }),
            })
        })
        .collect()
}

/// Meshes given on the command line win over the configured toy source.
pub fn run(cfg: &ExperimentConfig, out: &Path, jobs: usize, meshes: &[PathBuf]) -> CliResult<()> {
    let spines = if !meshes.is_empty() {
        meshes.iter().map(|p| load_spine(p)).collect::<CliResult<Vec<_>>>()?
    } else if cfg.dataset.source == DataSource::Toy {
        toy_spines(cfg)?
    } else {
        return Err(CliError::usage("dataset.source is \"meshes\" but no mesh paths were given"));
    };
    if spines.is_empty() {
        return Err(CliError::usage("nothing to simulate"));
    }
    let digest = cfg.digest();
    let report = build_dataset(
        &spines,
        &cfg.build_config(),
        out,
        jobs,
        &[("config".to_string(), digest.clone())],
        &[digest_comment(&digest)],
    )?;
    println!(
        "simulated {} samples ({} failed) into {}",
        report.manifest.samples.len(),
        report.failed.len(),
        out.display()
    );
    if !report.failed.is_empty() {
        for (id, why) in &report.failed {
            eprintln!("failed: {id}: {why}");
        }
        return Err(CliError::data(format!("{} samples failed", report.failed.len())));
    }
    Ok(())
}
