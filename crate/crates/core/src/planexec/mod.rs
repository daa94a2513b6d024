//! Plan construction, the classical baselines, quasi-static execution and
//! scoring.

pub mod baselines;
pub mod execute;
pub mod metrics;
pub mod plan;
pub mod run;

pub use baselines::{classical_iterative, classical_random, default_budget};
pub use execute::{execute, ExecutionResult, NoiseModel, ObjectError, ORN_TOL, POS_TOL};
pub use metrics::{bucketize, evaluate, Aggregate, Bucket, MeanStd, MetricsReport, LEVEL_BUCKETS, OBJECT_BUCKETS};
pub use plan::{exact_assignment, scl_plan, scl_plan_detailed, GraphSource, Plan, PlanOutcome, PlanStep};
pub use run::{report, run_dataset, run_entry, EvalConfig, EvalReport, Planner, PlannerKind};

#[cfg(test)]
mod tests;
