//! Losses, optimizer, training pipeline, and evaluation metrics.

pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;

pub use losses::{
    loss_er, loss_ini, loss_mod_o, loss_mod_q, loss_mod_rho, record_operator_loss, record_rho_loss,
    total_variation, OperatorSamples,
};
pub use metrics::{avg_fidelity, avg_frobenius_error, coherence_l1, concurrence, expectation, fidelity};
pub use optimizer::{adamw_step, cosine_lr, AdamState, TrainConfig};
pub use pipeline::{
    compare_architectures, comparison_config, operator_trajectories, rho_trajectory, train_operators,
    train_rho, ComparisonReport, ComparisonRun, ComparisonSummary, LossBreakdown, RunRecord, Trained,
};
