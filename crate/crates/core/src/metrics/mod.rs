//! Evaluation: Chamfer distance, Earth Mover's Distance, F1-score,
//! arch/body decomposition and the Wilcoxon signed-rank test.

mod distance;
pub mod emd;
mod regions;
mod report;
mod wilcoxon;

pub use distance::{chamfer, f1_score, nearest_sq_distances};
pub use emd::{emd, EmdMode, EmdOptions};
pub use regions::{split_arch_body, split_at, RegionSplit};
pub use report::{aggregate, evaluate, Aggregate, EvalOptions, EvalRow, Region, RegionMetrics, REPORT_SCALE};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N, MIN_PAIRS};
