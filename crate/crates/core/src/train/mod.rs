//! Optimization, metrics, divergence detection and resumable training state.

pub mod clock;
pub mod engine;
pub mod metrics;
pub mod optimizer;
pub mod state;

pub use clock::{Clock, StepClock, StopSignal, SystemClock};
pub use engine::{eval_batches, evaluate, fit_epoch, run_epoch, EvalMetrics, PassMetrics, TrainConfig, TrainState};
pub use metrics::{
    detect_divergence, masked_accuracy, perplexity, Divergence, EpochMetrics, DIVERGENCE_PATIENCE,
    DIVERGENCE_THRESHOLD,
};
pub use optimizer::{adam_step, clip_grad_norm, AdamConfig, OptimizerState, DEFAULT_LEARNING_RATE};
pub use state::{load_state, save_state};
