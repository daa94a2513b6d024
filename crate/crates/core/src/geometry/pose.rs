use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `||q|| - 1` accepted by [`quat_distance`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Rigid placement of an object: rotation about the object's centroid, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub t: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
}

/// JSON layout: `{"t": [x, y, z], "q": [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseRepr {
    pub t: [f64; 3],
    pub q: [f64; 4],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            t: [p.t.x, p.t.y, p.t.z],
            q: quat_to_wxyz(&p.q),
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = String;

    fn try_from(r: PoseRepr) -> std::result::Result<Self, String> {
        let q = quat_from_wxyz(r.q).map_err(|e| e.to_string())?;
        if r.t.iter().any(|v| !v.is_finite()) {
            return Err("non-finite translation".into());
        }
        Ok(Pose {
            t: Vector3::from(r.t),
            q,
        })
    }
}

pub fn quat_to_wxyz(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let q = q.quaternion();
    [q.w, q.i, q.j, q.k]
}

/// Builds a unit quaternion without renormalizing, so stored values round-trip bit-exactly.
pub fn quat_from_wxyz(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    if q.iter().any(|v| !v.is_finite()) || (raw.norm() - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidArgument(format!(
            "quaternion {q:?} is not unit-norm"
        )));
    }
    Ok(UnitQuaternion::new_unchecked(raw))
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Pose { t, q }
    }

    pub fn identity() -> Self {
        Pose {
            t: Vector3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose {
            t,
            q: UnitQuaternion::identity(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            t: self.t + self.q * other.t,
            q: renormalize(self.q * other.q),
        }
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.q.inverse();
        Pose {
            t: -(qi * self.t),
            q: qi,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.q * p + self.t
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.apply(&p.coords))
    }

    /// Rotation angle of `q`, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.t.iter().all(|v| v.is_finite()) && quat_to_wxyz(&self.q).iter().all(|v| v.is_finite())
    }
}

/// Products of unit quaternions drift off the unit sphere; pull them back.
fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    2.0 * q.w.abs().min(1.0).acos()
}

/// Normalized quaternion distance `min(||q1+q2||, ||q1-q2||) / √2`, in `[0, 1]`.
pub fn quat_distance(q1: &Quaternion<f64>, q2: &Quaternion<f64>) -> Result<f64> {
    for q in [q1, q2] {
        if !(q.norm() - 1.0).abs().le(&UNIT_NORM_TOL) {
            return Err(Error::InvalidArgument(format!(
                "quat_distance needs unit quaternions, got norm {}",
                q.norm()
            )));
        }
    }
    Ok(quat_distance_unchecked(q1, q2))
}

pub(crate) fn quat_distance_unchecked(q1: &Quaternion<f64>, q2: &Quaternion<f64>) -> f64 {
    let plus = (q1 + q2).norm();
    let minus = (q1 - q2).norm();
    plus.min(minus) / std::f64::consts::SQRT_2
}

/// Orientation distance between two poses.
pub fn orientation_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    quat_distance_unchecked(a.quaternion(), b.quaternion())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn q(w: f64, x: f64, y: f64, z: f64) -> Quaternion<f64> {
        Quaternion::new(w, x, y, z)
    }

    #[test]
    fn distance_of_identical_is_zero() {
        let a = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
        assert_eq!(quat_distance(a.quaternion(), a.quaternion()).unwrap(), 0.0);
    }

    #[test]
    fn distance_identity_vs_half_turn_about_z_is_one() {
        let d = quat_distance(&q(1.0, 0.0, 0.0, 0.0), &q(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(d, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_of_antipodal_is_zero() {
        let a = UnitQuaternion::from_euler_angles(0.7, 0.1, -2.0);
        let neg = -a.into_inner();
        assert_eq!(quat_distance(a.quaternion(), &neg).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_non_unit() {
        let err = quat_distance(&q(1.0, 0.1, 0.0, 0.0), &q(1.0, 0.0, 0.0, 0.0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rotation_angle_examples() {
        assert_eq!(rotation_angle(&UnitQuaternion::identity()), 0.0);
        let half = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), PI);
        assert_relative_eq!(rotation_angle(&half), PI, epsilon = 1e-12);
        let quarter = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert_relative_eq!(rotation_angle(&quarter), FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn pose_json_roundtrip_is_bit_exact() {
        let p = Pose::new(
            Vector3::new(0.1, -0.2, 0.0300000000000001),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(quat_to_wxyz(&p.q), quat_to_wxyz(&back.q));
        assert_eq!(p.t, back.t);
    }

    fn unit_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)))
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (unit_quat(), -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_map(|(q, x, y, z)| Pose::new(Vector3::new(x, y, z), q))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn quat_distance_is_pseudometric(a in unit_quat(), b in unit_quat(), c in unit_quat()) {
            let (a, b, c) = (a.into_inner(), b.into_inner(), c.into_inner());
            let ab = quat_distance(&a, &b).unwrap();
            let ba = quat_distance(&b, &a).unwrap();
            let bc = quat_distance(&b, &c).unwrap();
            let ac = quat_distance(&a, &c).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert_eq!(ab, ba);
            prop_assert!(quat_distance(&a, &a).unwrap() == 0.0);
            prop_assert!(quat_distance(&a, &(-a)).unwrap() == 0.0);
            prop_assert!((quat_distance(&a, &(-b)).unwrap() - ab).abs() < 1e-15);
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn pose_compose_inverse_cancels(p1 in pose(), p2 in pose()) {
            let back = p1.compose(&p2).compose(&p2.inverse());
            prop_assert!((back.t - p1.t).norm() < 1e-9);
            prop_assert!(orientation_distance(&back.q, &p1.q) < 1e-9);
            prop_assert!((back.q.into_inner().norm() - 1.0).abs() < 1e-9);
        }
    }
}
