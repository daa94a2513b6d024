//! Geometric substrate: primitives, poses, sampling, collision, plane fitting and
//! quasi-static support analysis.
//!
//! The world up axis is +z ([`UP`]); the ground plane is `z = 0`.

pub mod catalog;
pub mod collide;
pub mod mesh;
pub mod plane;
pub mod pose;
pub mod sample;
pub mod support;

use nalgebra::Vector3;

pub use catalog::{default_catalog, Catalog, ObjectClass};
pub use collide::collide;
pub use mesh::ConvexMesh;
pub use plane::{fit_plane, Plane};
pub use pose::{orientation_distance, quat_distance, rotation_angle, Pose};
pub use sample::{sample_surface, PointCloud};
pub use support::{stable_on, Body, SupportPolygon};

/// Gravity acts along `-UP`.
pub const UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Collision tolerance used when placing objects (meters).
pub const COLLISION_TOL: f64 = 1e-3;
