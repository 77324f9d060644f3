//! Dataset assembly: procedural toy vertebrae, external mesh ingestion,
//! train/val/test splitting and per-sample persistence.

mod build;
mod split;
mod toy;

pub use build::{
    assemble_external_sample, build_dataset, build_spine_samples, load_spine_meshes, sample_dir, BuildConfig,
    BuildReport, Counts, SpineInput,
};
pub use split::{make_split, DatasetManifest, ManifestEntry, Split, SplitRatios};
pub use toy::{generate_toy_spine, generate_toy_vertebra, icosphere, ProcessSpec, ToySpineConfig, ToyVertebraSpec};
