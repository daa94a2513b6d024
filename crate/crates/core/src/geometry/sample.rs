use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::ObjectClass;
use super::pose::Pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_object: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        PointCloud {
            points,
            source_object: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len().max(1) as f64
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            source_object: self.source_object,
        }
    }
}

/// A surface sample with the mesh face each point came from.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    pub cloud: PointCloud,
    pub faces: Vec<usize>,
}

/// `n` points drawn area-uniformly from the class mesh, moved by `pose`.
pub fn sample_surface(cls: &ObjectClass, pose: &Pose, n: usize, seed: u64) -> Result<PointCloud> {
    Ok(sample_surface_with_faces(cls, pose, n, seed)?.cloud)
}

pub fn sample_surface_with_faces(cls: &ObjectClass, pose: &Pose, n: usize, seed: u64) -> Result<SurfaceSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let mesh = &cls.mesh;
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "class {} has a degenerate mesh",
            cls.name
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= r).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.faces[f].map(|i| mesh.vertices[i]);
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let su = u.sqrt();
        let p = a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v);
        points.push(pose.apply(&p));
        faces.push(f);
    }
    Ok(SurfaceSample {
        cloud: PointCloud::new(points),
        faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::cuboid;

    fn unit_cube() -> ObjectClass {
        ObjectClass::unconstrained(0, "unit_cube", cuboid(1.0, 1.0, 1.0))
    }

    #[test]
    fn cube_samples_lie_on_surface() {
        let pc = sample_surface(&unit_cube(), &Pose::identity(), 1024, 3).unwrap();
        assert_eq!(pc.len(), 1024);
        for p in &pc.points {
            let m = p.x.abs().max(p.y.abs()).max(p.z.abs());
            assert!((m - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn translated_cube_centroid() {
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 2.0));
        let pc = sample_surface(&unit_cube(), &pose, 1024, 5).unwrap();
        let z = pc.centroid().z;
        assert!((1.9..=2.1).contains(&z), "{z}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_surface(&unit_cube(), &Pose::identity(), 64, 9).unwrap();
        let b = sample_surface(&unit_cube(), &Pose::identity(), 64, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_points_is_an_error() {
        assert!(sample_surface(&unit_cube(), &Pose::identity(), 0, 1).is_err());
    }

    #[test]
    fn degenerate_mesh_is_an_error() {
        let mut cls = unit_cube();
        for v in &mut cls.mesh.vertices {
            v.z = 0.0;
            v.y = 0.0;
        }
        assert!(sample_surface(&cls, &Pose::identity(), 8, 1).is_err());
    }
}
