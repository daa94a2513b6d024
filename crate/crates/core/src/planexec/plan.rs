use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{correspond, CorrespondenceMap, RigidTransform};
use crate::depgraph::{is_dag, threshold_graph, topo_levels, DependencyGraph};
use crate::error::{Error, Result};
use crate::geometry::Catalog;
use crate::graphnet::{initial_graph, predict, DependencyProbabilities, ModelParams, PositionalEncoder};
use crate::scenegen::{Observation, Scene};

/// Pick the initial object `object`, move it by `delta` onto target slot `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub object: usize,
    pub target: usize,
    #[serde(flatten)]
    pub delta: RigidTransform,
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks selections and slots are in range and used once, `k` never
    /// decreases and every motion is finite.
    pub fn validate(&self, n_initial: usize, n_target: usize) -> Result<()> {
        let mut used = vec![false; n_initial];
        let mut filled = vec![false; n_target];
        let mut last_k = 0;
        for (s, step) in self.steps.iter().enumerate() {
            if step.object >= n_initial || step.target >= n_target {
                return Err(Error::InvalidPlan(format!(
                    "step {s} references object {} / slot {} outside the scenes",
                    step.object, step.target
                )));
            }
            if std::mem::replace(&mut used[step.object], true) {
                return Err(Error::InvalidPlan(format!("step {s} selects object {} again", step.object)));
            }
            if std::mem::replace(&mut filled[step.target], true) {
                return Err(Error::InvalidPlan(format!("step {s} fills slot {} again", step.target)));
            }
            if step.k < last_k {
                return Err(Error::InvalidPlan(format!("step {s} has k {} after k {last_k}", step.k)));
            }
            last_k = step.k;
            if !step.delta.is_finite() {
                return Err(Error::InvalidPlan(format!("step {s} has a non-finite motion")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, None, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, None, e))
    }
}

/// Where the dependency graph comes from.
#[derive(Clone, Copy)]
pub enum GraphSource<'a> {
    Model { params: &'a ModelParams, tstar: f64 },
    /// A known graph over target objects, e.g. the oracle.
    Given(&'a DependencyGraph),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Planned(Plan),
    CircularDependency,
}

/// Everything the planner derived for one scene pair.
#[derive(Debug, Clone)]
pub struct PlanDetails {
    pub outcome: PlanOutcome,
    pub graph: DependencyGraph,
    pub probabilities: Option<DependencyProbabilities>,
    pub correspondences: CorrespondenceMap,
}

/// Correspondence, graph inference, cycle check and hierarchical ordering.
pub fn scl_plan_detailed(
    initial: &Observation,
    target: &Observation,
    catalog: &Catalog,
    source: GraphSource<'_>,
) -> Result<PlanDetails> {
    let correspondences = correspond(initial, target, catalog)?;
    let n = target.objects.len();
    let (graph, probabilities) = match source {
        GraphSource::Model { params, tstar } => {
            let encoder = PositionalEncoder::new(params.config.encoder.clone())?;
            let g = initial_graph(target, &encoder, params.config.num_classes)?;
            let rho = predict(params, &g)?;
            (threshold_graph(&rho, tstar), Some(rho))
        }
        GraphSource::Given(g) => {
            if g.n() != n {
                return Err(Error::InvalidArgument(format!(
                    "graph has {} nodes, target scene has {n} objects",
                    g.n()
                )));
            }
            (g.clone(), None)
        }
    };
    if !is_dag(&graph) {
        return Ok(PlanDetails {
            outcome: PlanOutcome::CircularDependency,
            graph,
            probabilities,
            correspondences,
        });
    }
    // Graph nodes are positions in the target observation.
    let order = topo_levels(&graph)?;
    let mut steps = Vec::with_capacity(n);
    for &(node, k) in &order.entries {
        let slot = target.objects[node].object;
        let c = correspondences
            .for_target(slot)
            .ok_or_else(|| Error::CorrespondenceFailure(format!("no correspondence for target object {slot}")))?;
        steps.push(PlanStep {
            object: c.initial,
            target: slot,
            delta: c.delta,
            k,
        });
    }
    Ok(PlanDetails {
        outcome: PlanOutcome::Planned(Plan { steps }),
        graph,
        probabilities,
        correspondences,
    })
}

pub fn scl_plan(initial: &Observation, target: &Observation, catalog: &Catalog, source: GraphSource<'_>) -> Result<PlanOutcome> {
    Ok(scl_plan_detailed(initial, target, catalog, source)?.outcome)
}

/// Ground-truth pairing of initial and target instances: per class, in index
/// order. Instances of a class are interchangeable.
pub fn exact_assignment(initial: &Scene, target: &Scene) -> Result<Vec<(usize, usize, RigidTransform)>> {
    if initial.class_counts() != target.class_counts() {
        return Err(Error::CorrespondenceFailure(format!(
            "class counts differ: initial {:?}, target {:?}",
            initial.class_counts(),
            target.class_counts()
        )));
    }
    let mut pool: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for o in initial.objects.iter().rev() {
        pool.entry(o.class_id).or_default().push(o.index);
    }
    let mut out = Vec::with_capacity(target.len());
    for t in &target.objects {
        let i = pool.get_mut(&t.class_id).and_then(|v| v.pop()).expect("counts match");
        let delta = t.pose.compose(&initial.objects[i].pose.inverse());
        out.push((i, t.index, delta));
    }
    Ok(out)
}
