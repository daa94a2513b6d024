use std::collections::BTreeSet;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{Bounds, Scene, SceneObject};
use crate::error::{Error, Result};
use crate::geometry::support::{
    contacts_of, inner_clearance, polygon_area, polygon_centroid, polygon_distance, resting_contact, support_polygon, Point2, Support,
};
use crate::geometry::{collide, fit_plane, Body, Catalog, ObjectClass, PointCloud, Pose, COLLISION_TOL};

/// Rejection-sampling budget per placement slot.
pub const ATTEMPTS_PER_SLOT: usize = 200;
/// A supporter stays available while at least this fraction of its top is uncovered.
pub const MIN_UNCOVERED_FRACTION: f64 = 0.3;
/// Maximum height difference between the two tops of a supporting pair.
pub const PAIR_HEIGHT_TOL: f64 = 5e-3;
/// Maximum tilt of the fitted support plane.
pub const MAX_PLANE_TILT: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Points sampled on each supporter's top face for the plane fit.
const PLANE_SAMPLES: usize = 16;
/// Tops smaller than this cannot carry anything.
const MIN_TOP_AREA: f64 = 1e-4;
/// Every contact of a placed object must be at least this large, so small
/// pose errors cannot remove it.
pub const MIN_SUPPORT_AREA: f64 = 1e-4;
/// Clearance of a new object's center of mass inside its support polygon,
/// stricter than the stability margin for the same reason.
pub const PLACEMENT_MARGIN: f64 = 3e-3;

/// Level count, per-level caps, seed and workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub levels: usize,
    pub caps: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bounds: Bounds,
}

impl GenSpec {
    pub fn new(caps: Vec<usize>, seed: u64) -> Self {
        GenSpec {
            levels: caps.len(),
            caps,
            seed,
            bounds: Bounds::default(),
        }
    }

    /// Default caps for a `levels`-level structure.
    pub fn with_levels(levels: usize, seed: u64) -> Self {
        let caps = (0..levels).map(default_cap).collect();
        GenSpec::new(caps, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GenSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("a structure needs at least one level".into()));
        }
        if self.caps.len() != self.levels {
            return Err(Error::InvalidArgument(format!(
                "{} levels but {} caps",
                self.levels,
                self.caps.len()
            )));
        }
        self.bounds.validate()
    }
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec::with_levels(3, 0)
    }
}

fn default_cap(level: usize) -> usize {
    match level {
        0 => 5,
        1 => 3,
        2 => 2,
        _ => 1,
    }
}

struct Placed {
    class_id: usize,
    pose: Pose,
    level: usize,
    body: Body,
}

struct Builder<'a> {
    catalog: &'a Catalog,
    bounds: Bounds,
    placed: Vec<Placed>,
    rng: ChaCha8Rng,
}

impl<'a> Builder<'a> {
    fn random_class(&mut self) -> &'a ObjectClass {
        let i = self.rng.random_range(0..self.catalog.classes.len());
        &self.catalog.classes[i]
    }

    fn yaw(&mut self) -> UnitQuaternion<f64> {
        let a = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a)
    }

    fn collision_free(&self, cls: &ObjectClass, pose: &Pose) -> bool {
        self.placed
            .iter()
            .all(|p| !collide((cls, pose), (&self.catalog.classes[p.class_id], &p.pose), COLLISION_TOL))
    }

    /// Random flat placement on the ground; `None` after the attempt budget.
    fn ground_slot(&mut self, classes: Option<&'a ObjectClass>) -> Option<Placed> {
        for _ in 0..ATTEMPTS_PER_SLOT {
            let cls = classes.unwrap_or_else(|| self.random_class());
            let base = *cls.stable_orientations.choose(&mut self.rng)?;
            let q = self.yaw() * base;
            let rel = cls.footprint(&q);
            let (lo, hi) = (self.bounds.min, self.bounds.max);
            let x = self.rng.random_range(lo[0]..hi[0]);
            let y = self.rng.random_range(lo[1]..hi[1]);
            let pose = Pose::new(Vector3::new(x, y, -rel.min_z), q);
            let body = Body::new(cls, &pose);
            if !self.bounds.contains_body(&body) || !self.collision_free(cls, &pose) {
                continue;
            }
            return Some(Placed {
                class_id: cls.id,
                pose,
                level: 0,
                body,
            });
        }
        None
    }

    fn available(&self, a: usize) -> bool {
        let top = self.placed[a].body.top_area();
        if top < MIN_TOP_AREA {
            return false;
        }
        let covered: f64 = self
            .placed
            .iter()
            .filter_map(|p| resting_contact(&p.body, &self.placed[a].body))
            .map(|r| polygon_area(&r))
            .sum();
        top - covered >= MIN_UNCOVERED_FRACTION * top
    }

    fn sample_in_polygon(&mut self, poly: &[Point2], z: f64, out: &mut Vec<Vector3<f64>>) {
        let areas: Vec<f64> = (1..poly.len() - 1)
            .map(|k| polygon_area(&[poly[0], poly[k], poly[k + 1]]).abs())
            .collect();
        let total: f64 = areas.iter().sum();
        for _ in 0..PLANE_SAMPLES {
            let mut r = self.rng.random::<f64>() * total;
            let mut k = 0;
            while k + 1 < areas.len() && r > areas[k] {
                r -= areas[k];
                k += 1;
            }
            let (a, b, c) = (poly[0], poly[k + 1], poly[k + 2]);
            let (u, v): (f64, f64) = (self.rng.random(), self.rng.random());
            let su = u.sqrt();
            let p = a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v);
            out.push(Vector3::new(p.x, p.y, z));
        }
    }

    /// Tries to rest one new object on exactly `supporters`.
    fn place_on(&mut self, supporters: &[usize], level: usize, top_layer: bool) -> Option<Placed> {
        let tops: Vec<Vec<Point2>> = supporters.iter().map(|&s| self.placed[s].body.top.clone()).collect();
        let centers: Vec<Point2> = tops.iter().map(|t| polygon_centroid(t)).collect();
        let want: BTreeSet<Support> = supporters.iter().map(|&s| Support::Object(s)).collect();
        for _ in 0..ATTEMPTS_PER_SLOT {
            let cls = self.random_class();
            let allowed = cls.allowed_orientations(top_layer);
            let base = *allowed.choose(&mut self.rng)?;

            let mut pts = Vec::with_capacity(PLANE_SAMPLES * supporters.len());
            for (k, &s) in supporters.iter().enumerate() {
                let z = self.placed[s].body.max_z;
                self.sample_in_polygon(&tops[k], z, &mut pts);
            }
            let Ok(plane) = fit_plane(&PointCloud::new(pts)) else { continue };
            if plane.tilt() > MAX_PLANE_TILT {
                continue;
            }
            let tilt = UnitQuaternion::rotation_between(&Vector3::z(), &plane.normal).unwrap_or_else(UnitQuaternion::identity);

            let (yaw, center) = if supporters.len() == 2 {
                let flat = cls.footprint(&base);
                let (axis, length) = principal_axis(&flat.bottom);
                if polygon_distance(&tops[0], &tops[1]) > length {
                    continue;
                }
                let d = centers[1] - centers[0];
                let jitter = self.rng.random_range(-0.1..0.1);
                let flip = if self.rng.random_bool(0.5) { std::f64::consts::PI } else { 0.0 };
                let angle = d.y.atan2(d.x) - axis.y.atan2(axis.x) + jitter + flip;
                let offset = Vector2::new(self.rng.random_range(-3e-3..3e-3), self.rng.random_range(-3e-3..3e-3));
                (
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
                    (centers[0] + centers[1]) * 0.5 + offset,
                )
            } else {
                let (lo, hi) = bbox(&tops[0]);
                let half = (hi - lo) * 0.5 * 0.3;
                let offset = Vector2::new(
                    self.rng.random_range(-half.x..=half.x),
                    self.rng.random_range(-half.y..=half.y),
                );
                (self.yaw(), centers[0] + offset)
            };

            let q = tilt * yaw * base;
            let rel = cls.footprint(&q);
            let Some(h) = plane.height_at(center.x, center.y) else { continue };
            let pose = Pose::new(Vector3::new(center.x, center.y, h - rel.min_z), q);
            let body = Body::new(cls, &pose);
            if !self.bounds.contains_body(&body) || !self.collision_free(cls, &pose) {
                continue;
            }
            let contacts = contacts_of(&body, self.placed.iter().enumerate().map(|(i, p)| (i, &p.body)));
            let got: BTreeSet<Support> = contacts.iter().map(|c| c.support).collect();
            if got != want || contacts.iter().any(|c| c.area() < MIN_SUPPORT_AREA)
                || inner_clearance(support_polygon(&contacts).vertices(), &body.com.xy()) <= PLACEMENT_MARGIN
            {
                continue;
            }
            if self.placed.iter().any(|p| resting_contact(&p.body, &body).is_some()) {
                continue;
            }
            return Some(Placed {
                class_id: cls.id,
                pose,
                level,
                body,
            });
        }
        None
    }
}

/// Unit direction of largest spread of a polygon's vertices and its extent along it.
fn principal_axis(poly: &[Point2]) -> (Vector2<f64>, f64) {
    if poly.is_empty() {
        return (Vector2::x(), 0.0);
    }
    let c = poly.iter().sum::<Vector2<f64>>() / poly.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in poly {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let axis = Vector2::new(theta.cos(), theta.sin());
    let proj: Vec<f64> = poly.iter().map(|p| p.dot(&axis)).collect();
    let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (axis, hi - lo)
}

fn bbox(poly: &[Point2]) -> (Point2, Point2) {
    poly.iter().fold(
        (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    )
}

/// Builds a multi-level structure level by level: ground objects by rejection
/// sampling, then each higher level first on pairs of lower-level objects and
/// then on single ones.
pub fn generate_structure(spec: &GenSpec, catalog: &Catalog) -> Result<Scene> {
    spec.validate()?;
    if catalog.is_empty() {
        return Err(Error::InvalidArgument("empty catalog".into()));
    }
    let mut b = Builder {
        catalog,
        bounds: spec.bounds,
        placed: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    for _ in 0..spec.caps[0] {
        if let Some(p) = b.ground_slot(None) {
            b.placed.push(p);
        }
    }
    if b.placed.is_empty() {
        return Err(Error::GenerationFailure(format!(
            "no ground placement succeeded (cap {})",
            spec.caps[0]
        )));
    }

    for level in 1..spec.levels {
        let cap = spec.caps[level];
        let top_layer = level + 1 == spec.levels;
        let below: Vec<usize> = (0..b.placed.len()).filter(|&i| b.placed[i].level == level - 1).collect();
        let mut count = 0;

        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (x, &i) in below.iter().enumerate() {
            for &j in &below[x + 1..] {
                pairs.push((i, j));
            }
        }
        pairs.shuffle(&mut b.rng);
        for (i, j) in pairs {
            if count >= cap {
                break;
            }
            if !b.available(i) || !b.available(j) {
                continue;
            }
            if (b.placed[i].body.max_z - b.placed[j].body.max_z).abs() > PAIR_HEIGHT_TOL {
                continue;
            }
            if let Some(p) = b.place_on(&[i, j], level, top_layer) {
                b.placed.push(p);
                count += 1;
            }
        }

        let mut singles = below.clone();
        singles.shuffle(&mut b.rng);
        for a in singles {
            if count >= cap {
                break;
            }
            if !b.available(a) {
                continue;
            }
            if let Some(p) = b.place_on(&[a], level, top_layer) {
                b.placed.push(p);
                count += 1;
            }
        }
        if count == 0 {
            break;
        }
    }

    Ok(Scene {
        bounds: spec.bounds,
        objects: b
            .placed
            .into_iter()
            .enumerate()
            .map(|(index, p)| SceneObject {
                index,
                class_id: p.class_id,
                pose: p.pose,
                level: p.level,
            })
            .collect(),
        seed: spec.seed,
    })
}

/// The target's class instances placed flat at random, in shuffled order.
pub fn scatter_initial(target: &Scene, catalog: &Catalog, seed: u64) -> Result<Scene> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("cannot scatter an empty scene".into()));
    }
    let mut classes: Vec<usize> = target.objects.iter().map(|o| o.class_id).collect();
    let mut b = Builder {
        catalog,
        bounds: target.bounds,
        placed: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    classes.shuffle(&mut b.rng);
    for &c in &classes {
        let cls = catalog.get(c)?;
        match b.ground_slot(Some(cls)) {
            Some(p) => b.placed.push(p),
            None => {
                return Err(Error::GenerationFailure(format!(
                    "workspace too small to scatter {} objects (placed {})",
                    classes.len(),
                    b.placed.len()
                )))
            }
        }
    }
    Ok(Scene {
        bounds: target.bounds,
        objects: b
            .placed
            .into_iter()
            .enumerate()
            .map(|(index, p)| SceneObject {
                index,
                class_id: p.class_id,
                pose: p.pose,
                level: 0,
            })
            .collect(),
        seed,
    })
}
