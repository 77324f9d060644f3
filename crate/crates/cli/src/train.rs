use std::path::Path;

use usx_core::dataset::{sample_dir, DatasetManifest, Split};
use usx_core::sample::VertebraSample;
use usx_net::{checkpoint, Mode, NetError, TrainSample};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, Context};
use crate::output::{fmt_f, write_csv};

pub fn load_manifest(data: &Path) -> CliResult<DatasetManifest> {
    DatasetManifest::load(&data.join("manifest.json")).ctx(format!("manifest in {}", data.display()))
}

pub fn load_split(data: &Path, manifest: &DatasetManifest, split: Split) -> CliResult<Vec<VertebraSample>> {
    manifest
        .ids(split)
        .into_iter()
        .map(|id| VertebraSample::load(&sample_dir(data, id)).ctx(format!("sample {id}")))
        .collect()
}

pub const LOG_HEADER: [&str; 8] = [
    "epoch",
    "steps",
    "kl_weight",
    "train_loss",
    "train_cd_refined",
    "train_cd_coarse",
    "train_kl",
    "val_cd",
];

pub fn run(cfg: &ExperimentConfig, data: &Path, out: &Path, mode: Mode) -> CliResult<()> {
    let manifest = load_manifest(data)?;
    let to_mats = |s: Vec<VertebraSample>| s.iter().map(TrainSample::from_sample).collect::<Vec<_>>();
    let train_set = to_mats(load_split(data, &manifest, Split::Train)?);
    let val_set = to_mats(load_split(data, &manifest, Split::Val)?);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CliError::data("train and val splits must be non-empty"));
    }
    std::fs::create_dir_all(out)?;
    let net = cfg.net_config(mode);
    let result = usx_net::train(&net, &train_set, &val_set, &cfg.train_config());
    let outcome = match result {
        Ok(o) => o,
        Err(NetError::TrainingDiverged {
            epoch,
            step,
            last_good,
        }) => {
            if let Some(m) = &last_good {
                checkpoint::save(m, &out.join("model.vxc"))?;
                eprintln!("last good checkpoint written to {}", out.join("model.vxc").display());
            }
            return Err(NetError::TrainingDiverged {
                epoch,
                step,
                last_good: None,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    let digest = cfg.digest();
    let rows: Vec<Vec<String>> = outcome
        .log
        .iter()
        .map(|l| {
            vec![
                l.epoch.to_string(),
                l.steps.to_string(),
                fmt_f(l.kl_weight),
                fmt_f(l.train_loss),
                fmt_f(l.train_cd_refined),
                fmt_f(l.train_cd_coarse),
                fmt_f(l.train_kl),
                fmt_f(l.val_cd),
            ]
        })
        .collect();
    write_csv(&out.join("train_log.csv"), &digest, &LOG_HEADER, &rows)?;
    checkpoint::save(&outcome.model, &out.join("model.vxc"))?;
    let best = &outcome.log[outcome.best_epoch];
    println!(
        "trained {} ({} epochs, best epoch {} val CD {:.6}) -> {}",
        mode.name(),
        outcome.log.len(),
        outcome.best_epoch,
        best.val_cd,
        out.display()
    );
    Ok(())
}
