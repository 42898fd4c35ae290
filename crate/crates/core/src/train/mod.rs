//! Losses, metrics, the training loop, hyper-parameter sweeps and
//! per-scenario evaluation.

pub mod loss;
pub mod metrics;
pub mod scenario;
pub mod sweep;
pub mod trainer;

pub use loss::{circular_alpha_target, loss_graph, loss_value, LossKind, SEAM_MARGIN};
pub use metrics::{accuracy, angular_mae, confusion_matrix, dist_error, mae, MetricsReport, MetricsSummary};
pub use scenario::{scenario_eval, tags_of, PositionRecord, ScenarioEval};
pub use sweep::{best_cell, dropout_grid, full_grid, gamma_grid, sweep, RowKind, SweepCell, SweepResult, SweepRow};
pub use trainer::{evaluate, run_seed, train, train_seeds, Selection, EpochLog, MultiSeedOutcome, TrainConfig, TrainOutcome};
