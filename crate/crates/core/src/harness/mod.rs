//! Grid expansion, budgets, the run registry and sweep execution.

pub mod grid;
pub mod prepare;
pub mod registry;
pub mod spec;
pub mod sweep;

pub use grid::{expand_grid, Budget, GridPoint, Override, SweepGrid, DEFAULT_EPOCH_CAP, EXTENDED_EPOCH_CAP};
pub use prepare::{prepare_data, DataOptions, PreparedData, SPLIT_FILE, SRC_VOCAB_FILE, TGT_VOCAB_FILE};
pub use registry::{
    read_metrics, run_id, MetricLine, Registry, RunRecord, RunStatus, METRICS_FILE, REGISTRY_FILE,
};
pub use spec::{BudgetSpec, SweepSpec, TrainSpec};
pub use sweep::{
    execute_sweep, load_plan, resume_sweep, run_dir, state_dir, SweepControl, SweepOutcome, SweepPlan, PLAN_FILE,
    RUNS_DIR,
};
