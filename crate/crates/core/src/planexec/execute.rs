use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plan::Plan;
use crate::error::{Error, Result};
use crate::geometry::support::{clip_convex, contacts_of, is_stable, polygon_area, MIN_CONTACT_AREA};
use crate::geometry::{orientation_distance, Body, Catalog, ObjectClass, Pose};
use crate::scenegen::{Scene, SceneObject};

/// Success thresholds on each object's achieved pose.
pub const POS_TOL: f64 = 0.01;
pub const ORN_TOL: f64 = 0.03;

/// Largest drop onto a surface below an object released without contact.
pub const SETTLE_DROP: f64 = 5e-3;

/// Gaussian actuation error: horizontal translation and yaw about the
/// object's center. Zero by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_pos: f64,
    pub sigma_rot: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_pos >= 0.0 && self.sigma_rot >= 0.0) || !self.sigma_pos.is_finite() || !self.sigma_rot.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid noise model {self:?}")));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_pos == 0.0 && self.sigma_rot == 0.0
    }
}

/// Achieved-vs-target error of one placed object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectError {
    pub pos: f64,
    /// Orientation distance, minimized over the class symmetries.
    pub orn: f64,
}

impl ObjectError {
    pub fn within_tolerance(&self) -> bool {
        self.pos <= POS_TOL && self.orn <= ORN_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    /// Number of target objects.
    pub n: usize,
    /// Number of levels in the target structure.
    pub levels: usize,
    /// Placed objects that stayed up, at their achieved poses.
    pub achieved: Scene,
    /// Per target slot: error of the object placed there, if it stayed up.
    pub errors: Vec<Option<ObjectError>>,
    pub steps: usize,
    pub circular_dependency: bool,
    pub budget_exhausted: bool,
    /// Target slots whose object was unstable when released.
    pub collapsed: Vec<usize>,
}

impl ExecutionResult {
    /// Result of a plan that could not be produced.
    pub fn circular(target: &Scene) -> Self {
        let mut r = Self::empty(target);
        r.circular_dependency = true;
        r
    }

    fn empty(target: &Scene) -> Self {
        ExecutionResult {
            n: target.len(),
            levels: target.num_levels(),
            achieved: Scene {
                bounds: target.bounds,
                objects: Vec::new(),
                seed: target.seed,
            },
            errors: vec![None; target.len()],
            steps: 0,
            circular_dependency: false,
            budget_exhausted: false,
            collapsed: Vec::new(),
        }
    }

    pub fn placed(&self) -> usize {
        self.errors.iter().filter(|e| e.is_some()).count()
    }
}

pub(crate) fn symmetric_orientation_distance(cls: &ObjectClass, achieved: &UnitQuaternion<f64>, target: &UnitQuaternion<f64>) -> f64 {
    if cls.symmetries.is_empty() {
        return orientation_distance(achieved, target);
    }
    cls.symmetries
        .iter()
        .map(|s| orientation_distance(&(achieved * s), target))
        .fold(f64::INFINITY, f64::min)
}

/// Quasi-static build site: objects already placed and their bodies.
pub(crate) struct Workspace<'a> {
    catalog: &'a Catalog,
    target: &'a Scene,
    noise: NoiseModel,
    pos_noise: Normal<f64>,
    rot_noise: Normal<f64>,
    rng: ChaCha8Rng,
    bodies: Vec<(usize, Body)>,
    pub result: ExecutionResult,
}

impl<'a> Workspace<'a> {
    pub fn new(catalog: &'a Catalog, target: &'a Scene, noise: NoiseModel, seed: u64) -> Result<Self> {
        noise.validate()?;
        Ok(Workspace {
            catalog,
            target,
            noise,
            pos_noise: Normal::new(0.0, noise.sigma_pos).expect("validated"),
            rot_noise: Normal::new(0.0, noise.sigma_rot).expect("validated"),
            rng: ChaCha8Rng::seed_from_u64(seed),
            bodies: Vec::new(),
            result: ExecutionResult::empty(target),
        })
    }

    /// Whether an object of `class_id` would stand at `pose` on what is
    /// already placed.
    pub fn feasible(&self, class_id: usize, pose: &Pose) -> Result<bool> {
        let body = Body::new(self.catalog.get(class_id)?, pose);
        let contacts = contacts_of(&body, self.bodies.iter().map(|(k, b)| (*k, b)));
        Ok(is_stable(&body, &contacts))
    }

    fn perturb(&mut self, pose: &Pose) -> Pose {
        if self.noise.is_zero() {
            return *pose;
        }
        let dx = self.pos_noise.sample(&mut self.rng);
        let dy = self.pos_noise.sample(&mut self.rng);
        let yaw = self.rot_noise.sample(&mut self.rng);
        let r = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        Pose::new(pose.t + Vector3::new(dx, dy, 0.0), r * pose.q)
    }

    /// Lowers a body released without any contact onto the highest surface
    /// within [`SETTLE_DROP`] below it.
    fn settle(&self, cls: &ObjectClass, pose: Pose, body: Body) -> (Pose, Body) {
        let mut best: Option<f64> = (body.min_z >= 0.0 && body.min_z <= SETTLE_DROP).then_some(0.0);
        for (_, b) in &self.bodies {
            if b.max_z <= body.min_z
                && body.min_z - b.max_z <= SETTLE_DROP
                && polygon_area(&clip_convex(&body.bottom, &b.top)) > MIN_CONTACT_AREA
            {
                best = Some(best.map_or(b.max_z, |h: f64| h.max(b.max_z)));
            }
        }
        match best {
            Some(h) => {
                let p = Pose::new(pose.t - Vector3::new(0.0, 0.0, body.min_z - h), pose.q);
                (p, Body::new(cls, &p))
            }
            None => (pose, body),
        }
    }

    /// Releases the object for target slot `slot` at `pose` (before noise).
    /// Returns whether it stayed up; one step is consumed either way.
    pub fn place(&mut self, slot: usize, class_id: usize, pose: &Pose) -> Result<bool> {
        let cls = self.catalog.get(class_id)?;
        self.result.steps += 1;
        let pose = self.perturb(pose);
        let mut body = Body::new(cls, &pose);
        let mut pose = pose;
        let mut contacts = contacts_of(&body, self.bodies.iter().map(|(k, b)| (*k, b)));
        if contacts.is_empty() {
            (pose, body) = self.settle(cls, pose, body);
            contacts = contacts_of(&body, self.bodies.iter().map(|(k, b)| (*k, b)));
        }
        if !is_stable(&body, &contacts) {
            self.result.collapsed.push(slot);
            return Ok(false);
        }
        let t = &self.target.objects[slot];
        self.result.errors[slot] = Some(ObjectError {
            pos: (pose.t - t.pose.t).norm(),
            orn: symmetric_orientation_distance(cls, &pose.q, &t.pose.q),
        });
        self.result.achieved.objects.push(SceneObject {
            index: self.result.achieved.objects.len(),
            class_id,
            pose,
            level: t.level,
        });
        self.bodies.push((slot, body));
        Ok(true)
    }

    pub fn consume_failed_check(&mut self) {
        self.result.steps += 1;
    }
}

/// Applies the plan's steps in order. Each released object must be stable on
/// the ground and earlier placements or it is removed; one step per placement.
pub fn execute(plan: &Plan, initial: &Scene, target: &Scene, catalog: &Catalog, noise: NoiseModel, seed: u64) -> Result<ExecutionResult> {
    plan.validate(initial.len(), target.len())?;
    let mut ws = Workspace::new(catalog, target, noise, seed)?;
    for step in &plan.steps {
        let o = &initial.objects[step.object];
        if o.class_id != target.objects[step.target].class_id {
            return Err(Error::InvalidPlan(format!(
                "object {} of class {} cannot fill slot {} of class {}",
                step.object, o.class_id, step.target, target.objects[step.target].class_id
            )));
        }
        let pose = step.delta.compose(&o.pose);
        ws.place(step.target, o.class_id, &pose)?;
    }
    Ok(ws.result)
}
