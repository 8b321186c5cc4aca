//! Losses, optimizer, schedule, training loop and evaluation.

mod config;
mod eval;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use config::{TrainConfig, PRESETS};
pub use eval::{
    evaluate, horizon_frame, zero_velocity_baseline, EvalReport, EvalRow, Metric, AVERAGE,
    DEFAULT_HORIZONS_MS, METHOD_BASELINE, METHOD_MODEL,
};
pub use gradcheck::{gradient_check, rel_error, GradCheck, REL_ERROR_FLOOR};
pub use loss::{
    frame_abs_error, frame_joint_distance, loss_mae, loss_mpjpe, loss_value, loss_var, mae_var,
    mean_joint_distance, mpjpe_var, LossKind,
};
pub use optim::{clip_global_norm, global_norm, lr_at_epoch, Adam, AdamConfig};
pub use trainer::{train, AttentionStats, EpochStats, Pipeline, Sample, TrainReport};
