//! Rigid registration of canonical class samples to observed clouds and
//! rotation-minimizing instance correspondence between two scenes.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, Catalog, PointCloud, Pose};
use crate::scenegen::observe::default_cloud;
use crate::scenegen::Observation;

/// A rigid motion; identical to a pose.
pub type RigidTransform = Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub transform: RigidTransform,
    /// Root-mean-square residual after alignment.
    pub rms: f64,
}

/// Least-squares rigid transform mapping `source[k]` onto `target[k]`.
pub fn register(source: &PointCloud, target: &PointCloud) -> Result<Registration> {
    let n = source.len();
    if n != target.len() {
        return Err(Error::RegistrationFailure(format!(
            "point counts differ: {n} vs {}",
            target.len()
        )));
    }
    if n < 3 {
        return Err(Error::RegistrationFailure(format!("need at least 3 points, got {n}")));
    }
    let cs = source.centroid();
    let ct = target.centroid();
    let mut h = Matrix3::zeros();
    for (s, t) in source.points.iter().zip(&target.points) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::RegistrationFailure("point configuration has rank < 2".into()));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let t = ct - q * cs;
    let transform = Pose::new(t, q);
    let sq: f64 = source
        .points
        .iter()
        .zip(&target.points)
        .map(|(s, p)| (transform.apply(s) - p).norm_squared())
        .sum();
    Ok(Registration {
        transform,
        rms: (sq / n as f64).sqrt(),
    })
}

/// `2·acos(|w|)` of the rotation part, in `[0, π]`.
pub fn rotation_magnitude(r: &RigidTransform) -> f64 {
    rotation_angle(&r.q)
}

/// Pose of every observed object, by registering the observed points against
/// the matching points of the class's canonical sample.
pub fn estimate_poses(obs: &Observation, catalog: &Catalog) -> Result<Vec<Pose>> {
    obs.objects
        .iter()
        .map(|o| {
            if o.fully_occluded {
                return Err(Error::RegistrationFailure(format!("object {} is fully occluded", o.object)));
            }
            let (canon, _) = default_cloud(catalog.get(o.class_id)?, obs.n_points)?;
            let source = PointCloud::new(o.sample_indices.iter().map(|&k| canon.points[k]).collect());
            register(&source, &o.cloud)
                .map(|r| r.transform)
                .map_err(|e| Error::RegistrationFailure(format!("object {}: {e}", o.object)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub initial: usize,
    pub target: usize,
    /// Motion taking the initial instance onto the target instance.
    pub delta: RigidTransform,
    /// Estimated target pose of the canonical sample.
    pub target_pose: Pose,
    /// Estimated initial pose of the canonical sample.
    pub initial_pose: Pose,
    /// Rotation magnitude of `delta` modulo the class symmetries.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    /// One pair per target object, ordered by target index.
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceMap {
    pub fn total_rotation(&self) -> f64 {
        self.pairs.iter().map(|p| p.rotation).sum()
    }

    /// Pair whose target is `target`.
    pub fn for_target(&self, target: usize) -> Option<&Correspondence> {
        self.pairs.iter().find(|p| p.target == target)
    }
}

/// Integer cost ordering assignments by total rotation, then total translation.
fn assignment_cost(rotation: f64, translation: f64) -> i64 {
    const ROT_UNIT: f64 = 1e-6;
    const TRANS_UNIT: f64 = 1e-5;
    const ROT_WEIGHT: i64 = 10_000_000;
    (rotation / ROT_UNIT).round() as i64 * ROT_WEIGHT + (translation / TRANS_UNIT).round().min(1e6) as i64
}

/// Class-consistent matching of initial to target instances that minimizes
/// total symmetry-reduced rotation, solved exactly per class.
pub fn correspond(initial: &Observation, target: &Observation, catalog: &Catalog) -> Result<CorrespondenceMap> {
    let count = |o: &Observation| {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, ob) in o.objects.iter().enumerate() {
            m.entry(ob.class_id).or_default().push(k);
        }
        m
    };
    let (ci, ct) = (count(initial), count(target));
    let sizes = |m: &BTreeMap<usize, Vec<usize>>| -> BTreeMap<usize, usize> { m.iter().map(|(k, v)| (*k, v.len())).collect() };
    if sizes(&ci) != sizes(&ct) {
        return Err(Error::CorrespondenceFailure(format!(
            "class counts differ: initial {:?}, target {:?}",
            sizes(&ci),
            sizes(&ct)
        )));
    }
    let pi = estimate_poses(initial, catalog)?;
    let pt = estimate_poses(target, catalog)?;

    let mut pairs = Vec::with_capacity(target.objects.len());
    for (class_id, tgt) in &ct {
        let cls = catalog.get(*class_id)?;
        let ini = &ci[class_id];
        let delta = |t: usize, i: usize| pt[t].compose(&pi[i].inverse());
        let rot = |t: usize, i: usize| cls.symmetric_rotation_angle(&pi[i].q, &pt[t].q);
        let costs: Vec<i64> = tgt
            .iter()
            .flat_map(|&t| ini.iter().map(move |&i| (t, i)))
            .map(|(t, i)| assignment_cost(rot(t, i), delta(t, i).t.norm()))
            .collect();
        let m = Matrix::from_vec(tgt.len(), ini.len(), costs)
            .map_err(|e| Error::CorrespondenceFailure(format!("{e:?}")))?;
        let (_, assign) = kuhn_munkres_min(&m);
        for (row, &col) in assign.iter().enumerate() {
            let (t, i) = (tgt[row], ini[col]);
            pairs.push(Correspondence {
                initial: initial.objects[i].object,
                target: target.objects[t].object,
                delta: delta(t, i),
                target_pose: pt[t],
                initial_pose: pi[i],
                rotation: rot(t, i),
            });
        }
    }
    pairs.sort_by_key(|p| p.target);
    Ok(CorrespondenceMap { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::catalog::face_down;
    use crate::geometry::{default_catalog, orientation_distance};
    use crate::scenegen::{observe, Bounds, ObservationConfig, Scene, SceneObject};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
                .collect(),
        )
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let q = UnitQuaternion::from_scaled_axis(axis.normalize() * rng.random_range(0.0..PI));
        Pose::new(
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            q,
        )
    }

    #[test]
    fn self_registration_is_identity() {
        let c = random_cloud(1, 50);
        let r = register(&c, &c).unwrap();
        assert!(r.rms < 1e-12);
        assert!(r.transform.t.norm() < 1e-12);
        assert!(rotation_magnitude(&r.transform) < 1e-7);
    }

    #[test]
    fn pure_translation_recovered() {
        let c = random_cloud(2, 50);
        let shifted = c.transformed(&Pose::from_translation(Vector3::new(0.0, 0.0, 2.0)));
        let r = register(&c, &shifted).unwrap();
        assert!((r.transform.t - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-9);
        assert!(rotation_magnitude(&r.transform) < 1e-7);
    }

    #[test]
    fn noisy_quarter_turn_recovered() {
        let c = random_cloud(3, 200);
        let g = Pose::new(Vector3::zeros(), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        let noise = Normal::new(0.0, 5e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = PointCloud::new(
            c.points
                .iter()
                .map(|p| g.apply(p) + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect(),
        );
        let r = register(&c, &target).unwrap();
        let angle = rotation_magnitude(&r.transform);
        assert!((angle - FRAC_PI_2).abs() < 0.5f64.to_radians(), "{angle}");
    }

    #[test]
    fn degenerate_configurations_fail() {
        let line = PointCloud::new((0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect());
        assert!(matches!(register(&line, &line), Err(Error::RegistrationFailure(_))));
        let two = PointCloud::new(vec![Vector3::zeros(), Vector3::x()]);
        assert!(register(&two, &two).is_err());
        let c = random_cloud(5, 10);
        let d = random_cloud(5, 9);
        assert!(register(&c, &d).is_err());
    }

    #[test]
    fn planar_points_register() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = PointCloud::new((0..30).map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0)).collect());
        let g = random_pose(&mut rng);
        let r = register(&c, &c.transformed(&g)).unwrap();
        assert!(r.rms < 1e-9);
        assert!(orientation_distance(&r.transform.q, &g.q) < 1e-9);
    }

    #[test]
    fn rotation_magnitude_examples() {
        assert_eq!(rotation_magnitude(&Pose::identity()), 0.0);
        for axis in [Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()] {
            let r = Pose::new(Vector3::zeros(), UnitQuaternion::from_axis_angle(&axis, PI));
            assert!((rotation_magnitude(&r) - PI).abs() < 1e-9);
        }
        let q = Pose::new(Vector3::zeros(), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2));
        assert!((rotation_magnitude(&q) - FRAC_PI_2).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn noiseless_recovery_is_exact(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_cloud(seed ^ 1, 40);
            let g = random_pose(&mut rng);
            let r = register(&c, &c.transformed(&g)).unwrap();
            prop_assert!(r.rms < 1e-6);
            prop_assert!((r.transform.t - g.t).norm() < 1e-6);
            prop_assert!(orientation_distance(&r.transform.q, &g.q) < 1e-6);
        }

        #[test]
        fn registration_is_left_equivariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_cloud(seed ^ 2, 30);
            let noise = Normal::new(0.0, 1e-3).unwrap();
            let t = PointCloud::new(s.transformed(&random_pose(&mut rng)).points.iter()
                .map(|p| p + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)))
                .collect());
            let g = random_pose(&mut rng);
            let a = register(&s, &t.transformed(&g)).unwrap().transform;
            let b = g.compose(&register(&s, &t).unwrap().transform);
            prop_assert!((a.t - b.t).norm() < 1e-9);
            prop_assert!(orientation_distance(&a.q, &b.q) < 1e-9);
        }
    }

    fn scene(objs: &[(usize, [f64; 3], UnitQuaternion<f64>)]) -> Scene {
        Scene {
            bounds: Bounds::default(),
            objects: objs
                .iter()
                .enumerate()
                .map(|(index, &(class_id, t, q))| SceneObject {
                    index,
                    class_id,
                    pose: Pose::new(Vector3::from(t), q),
                    level: 0,
                })
                .collect(),
            seed: 0,
        }
    }

    fn yaw(a: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a)
    }

    fn exact(s: &Scene, cat: &Catalog) -> Observation {
        observe(s, cat, &ObservationConfig::exact(64), 0).unwrap()
    }

    #[test]
    fn single_cube_same_orientation() {
        let cat = default_catalog();
        let a = scene(&[(1, [0.0, 0.0, 0.015], yaw(0.3))]);
        let b = scene(&[(1, [0.1, 0.0, 0.015], yaw(0.3))]);
        let m = correspond(&exact(&a, &cat), &exact(&b, &cat), &cat).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert!(m.pairs[0].rotation < 1e-6);
        assert!((m.pairs[0].delta.t - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn cylinders_cross_to_avoid_rotation() {
        // Lying cylinders: yaw about the world axis is not a symmetry.
        let cat = default_catalog();
        let lying = face_down(-Vector3::x());
        let a = scene(&[(4, [0.0, 0.0, 0.015], lying), (4, [0.2, 0.0, 0.015], yaw(FRAC_PI_2) * lying)]);
        let b = scene(&[(4, [0.0, 0.1, 0.015], yaw(FRAC_PI_2) * lying), (4, [0.2, 0.1, 0.015], lying)]);
        let m = correspond(&exact(&a, &cat), &exact(&b, &cat), &cat).unwrap();
        let map: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.initial, p.target)).collect();
        assert_eq!(map, vec![(1, 0), (0, 1)]);
        assert!(m.total_rotation() < 1e-6);
    }

    #[test]
    fn class_mismatch_is_reported() {
        let cat = default_catalog();
        let a = scene(&[(1, [0.0, 0.0, 0.015], yaw(0.0))]);
        let b = scene(&[(7, [0.0, 0.0, 0.04], yaw(0.0))]);
        assert!(matches!(
            correspond(&exact(&a, &cat), &exact(&b, &cat), &cat),
            Err(Error::CorrespondenceFailure(_))
        ));
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn assignment_is_optimal_against_brute_force() {
        let cat = default_catalog();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..30 {
            // Planks lying on their side: yaw matters modulo π.
            let n = 3 + trial % 4;
            let cls = 2;
            let base = cat.get(cls).unwrap().stable_orientations[0];
            let mk = |rng: &mut ChaCha8Rng, y: f64| -> Vec<(usize, [f64; 3], UnitQuaternion<f64>)> {
                (0..n)
                    .map(|k| (cls, [k as f64 * 0.1 - 0.25, y, 0.015], yaw(rng.random_range(-PI..PI)) * base))
                    .collect()
            };
            let a = scene(&mk(&mut rng, 0.0));
            let b = scene(&mk(&mut rng, 0.2));
            let m = correspond(&exact(&a, &cat), &exact(&b, &cat), &cat).unwrap();
            let c = cat.get(cls).unwrap();
            let best = permutations(n)
                .into_iter()
                .map(|p| {
                    (0..n)
                        .map(|t| c.symmetric_rotation_angle(&a.objects[p[t]].pose.q, &b.objects[t].pose.q))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(m.total_rotation() <= best + 1e-5, "trial {trial}");
            let mut used: Vec<usize> = m.pairs.iter().map(|p| p.initial).collect();
            used.sort();
            assert_eq!(used, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn delta_maps_initial_pose_onto_target_pose() {
        let cat = default_catalog();
        let a = scene(&[(0, [0.0, 0.0, 0.03], yaw(1.0)), (3, [0.2, 0.0, 0.01], yaw(-0.4))]);
        let b = scene(&[(3, [0.0, 0.2, 0.05], yaw(0.2)), (0, [0.1, 0.1, 0.03], yaw(2.0))]);
        let m = correspond(&exact(&a, &cat), &exact(&b, &cat), &cat).unwrap();
        for p in &m.pairs {
            let achieved = p.delta.compose(&a.objects[p.initial].pose);
            let goal = b.objects[p.target].pose;
            assert!((achieved.t - goal.t).norm() < 1e-9);
            assert!(orientation_distance(&achieved.q, &goal.q) < 1e-9);
        }
    }
}
