use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::execute::{ExecutionResult, NoiseModel, Workspace};
use super::plan::{exact_assignment, Plan, PlanStep};
use crate::error::Result;
use crate::geometry::{Catalog, Pose};
use crate::scenegen::Scene;

/// Default step budget: twice the object count.
pub fn default_budget(n: usize) -> usize {
    2 * n
}

struct Task {
    object: usize,
    slot: usize,
    class_id: usize,
    delta: Pose,
    pose: Pose,
}

fn tasks(initial: &Scene, target: &Scene) -> Result<Vec<Task>> {
    Ok(exact_assignment(initial, target)?
        .into_iter()
        .map(|(object, slot, delta)| Task {
            object,
            slot,
            class_id: target.objects[slot].class_id,
            delta,
            pose: target.objects[slot].pose,
        })
        .collect())
}

/// Checks one task; on success places it and records the step.
fn attempt(ws: &mut Workspace, task: &Task, executed: &mut Plan) -> Result<bool> {
    if !ws.feasible(task.class_id, &task.pose)? {
        ws.consume_failed_check();
        return Ok(false);
    }
    ws.place(task.slot, task.class_id, &task.pose)?;
    let k = executed.steps.len();
    executed.steps.push(PlanStep {
        object: task.object,
        target: task.slot,
        delta: task.delta,
        k,
    });
    Ok(true)
}

/// Draws unplaced objects at random. An object failing the feasibility check
/// leaves the pool until the next successful placement.
pub fn classical_random(
    initial: &Scene,
    target: &Scene,
    catalog: &Catalog,
    budget: usize,
    noise: NoiseModel,
    seed: u64,
) -> Result<(Plan, ExecutionResult)> {
    let tasks = tasks(initial, target)?;
    let mut ws = Workspace::new(catalog, target, noise, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a5d_0b1c);
    let mut remaining: Vec<usize> = (0..tasks.len()).collect();
    let mut pool = remaining.clone();
    let mut executed = Plan::default();
    while !remaining.is_empty() {
        if ws.result.steps >= budget {
            ws.result.budget_exhausted = true;
            break;
        }
        if pool.is_empty() {
            // Nothing left can stand; only reachable after a collapse.
            break;
        }
        let pick = pool.swap_remove(rng.random_range(0..pool.len()));
        if attempt(&mut ws, &tasks[pick], &mut executed)? {
            remaining.retain(|&t| t != pick);
            pool = remaining.clone();
        }
    }
    Ok((executed, ws.result))
}

/// Scans unplaced objects in index order, restarting from the first after
/// every successful placement. Each check is a step; already placed objects
/// are skipped at no cost.
pub fn classical_iterative(
    initial: &Scene,
    target: &Scene,
    catalog: &Catalog,
    budget: usize,
    noise: NoiseModel,
    seed: u64,
) -> Result<(Plan, ExecutionResult)> {
    let mut tasks = tasks(initial, target)?;
    tasks.sort_by_key(|t| t.object);
    let mut ws = Workspace::new(catalog, target, noise, seed)?;
    let mut done = vec![false; tasks.len()];
    let mut executed = Plan::default();
    'outer: while done.iter().any(|d| !d) {
        for (k, task) in tasks.iter().enumerate() {
            if done[k] {
                continue;
            }
            if ws.result.steps >= budget {
                ws.result.budget_exhausted = true;
                break 'outer;
            }
            if attempt(&mut ws, task, &mut executed)? {
                done[k] = true;
                continue 'outer;
            }
        }
        // A full pass without placement: nothing left can stand.
        break;
    }
    Ok((executed, ws.result))
}
