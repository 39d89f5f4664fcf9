//! Seeded experiments, memory accounting, rate fits, ablations and gradient
//! checks.

mod ablation;
mod gradcheck;
mod memory;
mod rate;
mod run;
mod spec;

pub use ablation::{
    ablation_suite, AblationConfig, AblationRow, AblationTable, Variant, DEFAULT_ETA_GRID,
};
pub use gradcheck::{
    default_check_specs, grad_check_problems, grad_check_suite, CheckKind, CheckResult,
    GradCheckReport,
};
pub use memory::{memory_account, memory_account_for, memory_report, MemoryReport, MethodMemory};
pub use rate::{
    linear_fit, rate_check, rate_check_on, RateConfig, RateFit, RatePoint, DEFAULT_RATE_C,
    DEFAULT_T_GRID,
};
pub use run::{
    format_float, run_experiment, run_on_problem, write_metrics_csv, Divergence, RunMetrics,
    StepRecord, METRICS_HEADER,
};
pub use spec::{OptimizerSpec, ProblemSpec};
