//! Rule learning, voter-count scaling and participation retraining runs.

pub mod config;
pub mod dataset;
pub mod grid;
pub mod report;
pub mod train;

pub use config::{LossMode, TrainConfig};
pub use dataset::{build_dataset, build_split, generate_profiles, Dataset};
pub use grid::{cell_config, cell_seed, run_cells, run_grid, GridConfig};
pub use report::{curves_csv, participation_csv, report_json, summary_csv, write_text};
pub use train::{
    batch_loss, batch_loss_and_grad, evaluate, evaluate_dataset, evaluate_rule, retrain_participation,
    train, train_with_data, BatchLoss, EpochRecord, ExperimentReport, LearnedRule, RunKind, TestMetrics,
};
