use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geometry::sample::sample_surface_with_faces;
use crate::geometry::{Catalog, ObjectClass, PointCloud, Pose};

/// Seed of the canonical per-class surface sample.
const CANONICAL_SEED: u64 = 0x5c1_0b5e_7ca7_a106;

/// Partial-observation model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationConfig {
    pub n_points: usize,
    pub noise_sigma: f64,
    pub culling: bool,
    /// Directions from the scene towards each viewpoint.
    pub views: Vec<[f64; 3]>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            n_points: 256,
            noise_sigma: 5e-4,
            culling: true,
            views: default_views(),
        }
    }
}

impl ObservationConfig {
    /// Complete, noiseless observation.
    pub fn exact(n_points: usize) -> Self {
        ObservationConfig {
            n_points,
            noise_sigma: 0.0,
            culling: false,
            views: default_views(),
        }
    }
}

/// Three cameras at 45° elevation spaced 120° apart in azimuth.
pub fn default_views() -> Vec<[f64; 3]> {
    let el = std::f64::consts::FRAC_PI_4;
    (0..3)
        .map(|k| {
            let az = k as f64 * 2.0 * std::f64::consts::PI / 3.0;
            [az.cos() * el.cos(), az.sin() * el.cos(), el.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectObservation {
    pub object: usize,
    pub class_id: usize,
    pub cloud: PointCloud,
    /// Index of each observed point in the class's canonical sample.
    pub sample_indices: Vec<usize>,
    pub fully_occluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub objects: Vec<ObjectObservation>,
    /// Fraction of sampled points removed by culling.
    pub occlusion_fraction: f64,
    /// Size of the canonical per-class sample the points were drawn from.
    pub n_points: usize,
}

/// Canonical surface sample of a class in its default pose, shared by the
/// observation model and registration.
pub fn default_cloud(cls: &ObjectClass, n_points: usize) -> Result<(PointCloud, Vec<usize>)> {
    let s = sample_surface_with_faces(cls, &Pose::identity(), n_points, CANONICAL_SEED ^ cls.id as u64)?;
    Ok((s.cloud, s.faces))
}

pub fn observe(scene: &Scene, catalog: &Catalog, config: &ObservationConfig, seed: u64) -> Result<Observation> {
    if config.n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be at least 1".into()));
    }
    if !(config.noise_sigma >= 0.0) || !config.noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid noise sigma {}", config.noise_sigma)));
    }
    let views: Vec<Vector3<f64>> = config.views.iter().map(|v| Vector3::from(*v)).collect();
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut dropped) = (0usize, 0usize);
    let mut objects = Vec::with_capacity(scene.len());
    for o in &scene.objects {
        let cls = catalog.get(o.class_id)?;
        let (cloud, faces) = default_cloud(cls, config.n_points)?;
        let normals: Vec<Vector3<f64>> = (0..cls.mesh.faces.len()).map(|f| o.pose.q * cls.mesh.face_normal(f)).collect();
        let mut points = Vec::with_capacity(cloud.len());
        let mut sample_indices = Vec::with_capacity(cloud.len());
        for (k, p) in cloud.points.iter().enumerate() {
            total += 1;
            let n = &normals[faces[k]];
            if config.culling && views.iter().all(|v| n.dot(v) <= 0.0) {
                dropped += 1;
                continue;
            }
            let mut q = o.pose.apply(p);
            if config.noise_sigma > 0.0 {
                q += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
            points.push(q);
            sample_indices.push(k);
        }
        let mut cloud = PointCloud::new(points);
        cloud.source_object = Some(o.index);
        objects.push(ObjectObservation {
            object: o.index,
            class_id: o.class_id,
            fully_occluded: cloud.is_empty(),
            cloud,
            sample_indices,
        });
    }
    Ok(Observation {
        objects,
        occlusion_fraction: if total == 0 { 0.0 } else { dropped as f64 / total as f64 },
        n_points: config.n_points,
    })
}
