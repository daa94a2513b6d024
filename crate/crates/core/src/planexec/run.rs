use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{classical_iterative, classical_random};
use super::execute::{execute, ExecutionResult, NoiseModel};
use super::metrics::{bucketize, evaluate, Aggregate, Bucket, LEVEL_BUCKETS, OBJECT_BUCKETS};
use super::plan::{scl_plan, GraphSource, PlanOutcome};
use crate::depgraph::DEFAULT_TSTAR;
use crate::error::Result;
use crate::geometry::Catalog;
use crate::graphnet::ModelParams;
use crate::scenegen::dataset::mix_seed;
use crate::scenegen::{observe, DatasetEntry, ObservationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Scl,
    /// The learned graph replaced by the ground-truth graph.
    Oracle,
    Random,
    Iterative,
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Scl => "scl",
            PlannerKind::Oracle => "oracle",
            PlannerKind::Random => "random",
            PlannerKind::Iterative => "iterative",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scl" => Ok(PlannerKind::Scl),
            "oracle" => Ok(PlannerKind::Oracle),
            "random" => Ok(PlannerKind::Random),
            "iterative" => Ok(PlannerKind::Iterative),
            _ => Err(format!("unknown planner {s:?} (expected scl, oracle, random or iterative)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub tstar: f64,
    pub noise: NoiseModel,
    pub observation: ObservationConfig,
    /// Baseline budget as a multiple of the object count.
    pub budget_factor: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            tstar: DEFAULT_TSTAR,
            noise: NoiseModel::default(),
            observation: ObservationConfig::default(),
            budget_factor: 2,
        }
    }
}

pub enum Planner<'a> {
    Scl(&'a ModelParams),
    Oracle,
    Random,
    Iterative,
}

impl Planner<'_> {
    pub fn kind(&self) -> PlannerKind {
        match self {
            Planner::Scl(_) => PlannerKind::Scl,
            Planner::Oracle => PlannerKind::Oracle,
            Planner::Random => PlannerKind::Random,
            Planner::Iterative => PlannerKind::Iterative,
        }
    }
}

/// Plans and executes one dataset entry. Seeds derive from the entry seed and
/// `cfg.seed` only, so results do not depend on scheduling.
pub fn run_entry(entry: &DatasetEntry, catalog: &Catalog, planner: &Planner<'_>, cfg: &EvalConfig) -> Result<ExecutionResult> {
    let base = mix_seed(cfg.seed, entry.seed);
    let exec_seed = mix_seed(base, 3);
    let n = entry.target.len();
    let budget = cfg.budget_factor * n;
    match planner {
        Planner::Scl(_) | Planner::Oracle => {
            let oi = observe(&entry.initial, catalog, &cfg.observation, mix_seed(base, 1))?;
            let ot = observe(&entry.target, catalog, &cfg.observation, mix_seed(base, 2))?;
            let source = match planner {
                Planner::Scl(params) => GraphSource::Model { params, tstar: cfg.tstar },
                _ => GraphSource::Given(&entry.graph),
            };
            match scl_plan(&oi, &ot, catalog, source)? {
                PlanOutcome::Planned(plan) => execute(&plan, &entry.initial, &entry.target, catalog, cfg.noise, exec_seed),
                PlanOutcome::CircularDependency => Ok(ExecutionResult::circular(&entry.target)),
            }
        }
        Planner::Random => Ok(classical_random(&entry.initial, &entry.target, catalog, budget, cfg.noise, exec_seed)?.1),
        Planner::Iterative => Ok(classical_iterative(&entry.initial, &entry.target, catalog, budget, cfg.noise, exec_seed)?.1),
    }
}

/// All entries in parallel; output in entry order.
pub fn run_dataset(entries: &[DatasetEntry], catalog: &Catalog, planner: &Planner<'_>, cfg: &EvalConfig) -> Result<Vec<ExecutionResult>> {
    entries.par_iter().map(|e| run_entry(e, catalog, planner, cfg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub planner: PlannerKind,
    /// How baseline steps are counted.
    pub step_accounting: String,
    pub config: EvalConfig,
    pub overall: Aggregate,
    pub by_objects: Vec<Bucket>,
    pub by_levels: Vec<Bucket>,
}

pub const STEP_ACCOUNTING: &str = "one step per feasibility check, including failed checks; \
a passing check places the object in the same step; skipping already placed objects is free";

pub fn report(planner: PlannerKind, cfg: &EvalConfig, results: &[ExecutionResult]) -> Result<EvalReport> {
    Ok(EvalReport {
        planner,
        step_accounting: STEP_ACCOUNTING.into(),
        config: cfg.clone(),
        overall: evaluate(results)?,
        by_objects: bucketize(results, &OBJECT_BUCKETS, |r| r.n),
        by_levels: bucketize(results, &LEVEL_BUCKETS, |r| r.levels),
    })
}
