//! Variational two-stage point-cloud completion with early (feature) and
//! late (point) fusion of ultrasound and X-ray observations, on a small
//! reverse-mode autodiff engine.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod infer;
pub mod mat;
pub mod model;
pub mod params;
pub mod tape;
pub mod train;

pub use error::{NetError, Result};
pub use infer::{complete, Completion};
pub use mat::Mat;
pub use model::{loss, GaussianLatent, Mode, Model, NetConfig, Phase};
pub use tape::{Tape, Var};
pub use train::{evaluate_cd, standard_noise, train, train_from, EpochLog, TrainConfig, TrainOutcome, TrainSample};
