use std::collections::HashMap;

use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::Observation;

/// Length unit for descriptor statistics (meters).
pub const DESCRIPTOR_SCALE: f64 = 0.1;
/// Descriptor width beyond the class one-hot: extents, spread, point fraction.
pub const DESCRIPTOR_GEOMETRY: usize = 7;

/// Sinusoidal encoding of a 3D point along icosahedral directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoderConfig {
    /// Icosahedron subdivision count: 0 → 12, 1 → 42, 2 → 162 directions.
    pub subdivisions: usize,
    pub min_degree: u32,
    pub max_degree: u32,
    pub scale: f64,
    pub offset: f64,
}

impl Default for PositionalEncoderConfig {
    fn default() -> Self {
        PositionalEncoderConfig {
            subdivisions: 2,
            min_degree: 0,
            max_degree: 5,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl PositionalEncoderConfig {
    pub fn num_directions(&self) -> usize {
        10 * 4usize.pow(self.subdivisions as u32) + 2
    }

    pub fn dim(&self) -> usize {
        self.num_directions() * (self.max_degree - self.min_degree + 1) as usize * 2
    }
}

#[derive(Debug, Clone)]
pub struct PositionalEncoder {
    config: PositionalEncoderConfig,
    directions: Vec<Vector3<f64>>,
}

impl PositionalEncoder {
    pub fn new(config: PositionalEncoderConfig) -> Result<Self> {
        if config.max_degree < config.min_degree || config.max_degree > 30 {
            return Err(Error::InvalidArgument(format!(
                "invalid degree range {}..={}",
                config.min_degree, config.max_degree
            )));
        }
        if config.subdivisions > 5 {
            return Err(Error::InvalidArgument("at most 5 icosahedron subdivisions".into()));
        }
        let directions = icosphere(config.subdivisions);
        Ok(PositionalEncoder { config, directions })
    }

    pub fn config(&self) -> &PositionalEncoderConfig {
        &self.config
    }

    pub fn directions(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    /// `[sin(2^l A x), cos(2^l A x)]` for each degree `l`, concatenated.
    pub fn encode(&self, x: &Vector3<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.encode_into(x, out.as_slice_mut().unwrap());
        out
    }

    pub fn encode_into(&self, x: &Vector3<f64>, out: &mut [f64]) {
        let d = self.directions.len();
        let x = x * self.config.scale + Vector3::repeat(self.config.offset);
        let proj: Vec<f64> = self.directions.iter().map(|a| a.dot(&x)).collect();
        for (b, l) in (self.config.min_degree..=self.config.max_degree).enumerate() {
            let f = (1u64 << l) as f64;
            let base = b * 2 * d;
            for (k, p) in proj.iter().enumerate() {
                let (s, c) = (f * p).sin_cos();
                out[base + k] = s;
                out[base + d + k] = c;
            }
        }
    }
}

/// Encoding of `x` under the default configuration.
pub fn positional_encode(x: &Vector3<f64>) -> Array1<f64> {
    PositionalEncoder::new(PositionalEncoderConfig::default())
        .expect("default configuration is valid")
        .encode(x)
}

/// Unit vertices of a subdivided icosahedron, in construction order.
pub fn icosphere(subdivisions: usize) -> Vec<Vector3<f64>> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let mut m = |i: usize, j: usize| -> usize {
                let key = (i.min(j), i.max(j));
                *mid.entry(key).or_insert_with(|| {
                    verts.push((verts[i] + verts[j]).normalize());
                    verts.len() - 1
                })
            };
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// Per-object node features `[w ‖ b]` of a scene, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub rows: Array2<f64>,
}

impl NodeFeatures {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Rows reordered so that new row `perm[i]` is old row `i`.
    pub fn permuted(&self, perm: &[usize]) -> NodeFeatures {
        let mut rows = self.rows.clone();
        for (i, &p) in perm.iter().enumerate() {
            rows.row_mut(p).assign(&self.rows.row(i));
        }
        NodeFeatures { rows }
    }
}

/// Fully connected directed scene graph over the node features.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGraph {
    pub features: NodeFeatures,
}

impl InitialGraph {
    pub fn n(&self) -> usize {
        self.features.n()
    }

    /// All ordered pairs `(i, j)`, `i ≠ j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect()
    }
}

/// Class one-hot, observed extents, spread about the centroid and the observed
/// fraction of the canonical sample.
pub fn descriptor(class_id: usize, num_classes: usize, points: &[Vector3<f64>], n_points: usize) -> Result<Vec<f64>> {
    if class_id >= num_classes {
        return Err(Error::InvalidArgument(format!(
            "class {class_id} outside a {num_classes}-class encoding"
        )));
    }
    let mut w = vec![0.0; num_classes + DESCRIPTOR_GEOMETRY];
    w[class_id] = 1.0;
    if points.is_empty() {
        return Ok(w);
    }
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut var = Vector3::zeros();
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
        var += (p - c).component_mul(&(p - c));
    }
    let ext = (hi - lo) / DESCRIPTOR_SCALE;
    let std = (var / n).map(f64::sqrt) / DESCRIPTOR_SCALE;
    for k in 0..3 {
        w[num_classes + k] = ext[k];
        w[num_classes + 3 + k] = std[k];
    }
    w[num_classes + 6] = n / n_points.max(1) as f64;
    Ok(w)
}

/// Builds the initial graph from per-object observations.
pub fn initial_graph(obs: &Observation, encoder: &PositionalEncoder, num_classes: usize) -> Result<InitialGraph> {
    let dw = num_classes + DESCRIPTOR_GEOMETRY;
    let mut rows = Array2::zeros((obs.objects.len(), dw + encoder.dim()));
    for (r, o) in obs.objects.iter().enumerate() {
        let w = descriptor(o.class_id, num_classes, &o.cloud.points, obs.n_points)?;
        let mut row = rows.row_mut(r);
        let row = row.as_slice_mut().unwrap();
        row[..dw].copy_from_slice(&w);
        encoder.encode_into(&o.cloud.centroid(), &mut row[dw..]);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite features for object {}", o.object)));
        }
    }
    Ok(InitialGraph {
        features: NodeFeatures { rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn icosphere_sizes_and_unit_norm() {
        for (s, n) in [(0, 12), (1, 42), (2, 162)] {
            let v = icosphere(s);
            assert_eq!(v.len(), n);
            assert!(v.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
            // distinct directions
            for i in 0..n {
                for j in i + 1..n {
                    assert!((v[i] - v[j]).norm() > 1e-3);
                }
            }
        }
    }

    #[test]
    fn default_dimension() {
        assert_eq!(PositionalEncoderConfig::default().dim(), 1944);
        let c = PositionalEncoderConfig {
            subdivisions: 1,
            ..Default::default()
        };
        assert_eq!(c.dim(), 504);
    }

    #[test]
    fn origin_encodes_to_zero_sines_and_unit_cosines() {
        let e = PositionalEncoder::new(PositionalEncoderConfig::default()).unwrap();
        let v = e.encode(&Vector3::zeros());
        let d = e.directions().len();
        for b in 0..6 {
            for k in 0..d {
                assert_eq!(v[b * 2 * d + k], 0.0);
                assert_eq!(v[b * 2 * d + d + k], 1.0);
            }
        }
    }

    /// Analytic Jacobian of the encoding, used as the oracle for finite differences.
    fn jacobian(e: &PositionalEncoder, x: &Vector3<f64>) -> Array2<f64> {
        let d = e.directions().len();
        let mut j = Array2::zeros((e.dim(), 3));
        for l in 0..=5u32 {
            let f = (1u64 << l) as f64;
            for (k, a) in e.directions().iter().enumerate() {
                let p = f * a.dot(x);
                for c in 0..3 {
                    j[(l as usize * 2 * d + k, c)] = f * a[c] * p.cos();
                    j[(l as usize * 2 * d + d + k, c)] = -f * a[c] * p.sin();
                }
            }
        }
        j
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn entries_in_unit_range(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            let e = PositionalEncoder::new(PositionalEncoderConfig { subdivisions: 1, ..Default::default() }).unwrap();
            prop_assert!(e.encode(&Vector3::new(x, y, z)).iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn small_steps_follow_the_jacobian(x in -0.3f64..0.3, y in -0.3f64..0.3, z in 0.0f64..0.3,
                                           dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0) {
            let e = PositionalEncoder::new(PositionalEncoderConfig { subdivisions: 1, ..Default::default() }).unwrap();
            let p = Vector3::new(x, y, z);
            let delta = Vector3::new(dx, dy, dz) * 1e-6;
            let diff = e.encode(&(p + delta)) - e.encode(&p);
            let lin = jacobian(&e, &p).dot(&Array1::from(vec![delta.x, delta.y, delta.z]));
            // second-order remainder is at most 2^10 |δ|² per entry
            let err = (&diff - &lin).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(err <= 1024.0 * delta.norm_squared() + 1e-12);
            // Lipschitz bound 2^6 · ||A|| · ||δ|| · dim
            let bound = 64.0 * (e.directions().len() as f64).sqrt() * delta.norm() * e.dim() as f64;
            prop_assert!(diff.iter().map(|v| v * v).sum::<f64>().sqrt() <= bound);
        }
    }

    #[test]
    fn descriptor_layout() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.02, 0.04, 0.06)];
        let w = descriptor(3, 8, &pts, 4).unwrap();
        assert_eq!(w.len(), 15);
        assert_eq!(&w[..8], &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((w[8] - 0.2).abs() < 1e-12 && (w[9] - 0.4).abs() < 1e-12 && (w[10] - 0.6).abs() < 1e-12);
        assert!((w[11] - 0.1).abs() < 1e-12 && (w[13] - 0.3).abs() < 1e-12);
        assert_eq!(w[14], 0.5);
        assert!(descriptor(8, 8, &pts, 4).is_err());
    }
}
