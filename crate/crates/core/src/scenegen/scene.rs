use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pose::{quat_from_wxyz, quat_to_wxyz};
use crate::geometry::{Body, Catalog, Pose};

/// Axis-aligned workspace box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Bounds {
    /// 0.6 m × 0.6 m tabletop centered on the origin, 0.5 m tall.
    fn default() -> Self {
        Bounds {
            min: [-0.3, -0.3, 0.0],
            max: [0.3, 0.3, 0.5],
        }
    }
}

impl Bounds {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        const SLACK: f64 = 1e-9;
        (0..3).all(|k| p[k] >= self.min[k] - SLACK && p[k] <= self.max[k] + SLACK)
    }

    pub fn contains_body(&self, body: &Body) -> bool {
        body.vertices.iter().all(|v| self.contains(v))
    }

    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|k| !(self.max[k] > self.min[k])) {
            return Err(Error::InvalidArgument(format!("empty bounds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneObjectRepr", into = "SceneObjectRepr")]
pub struct SceneObject {
    pub index: usize,
    pub class_id: usize,
    pub pose: Pose,
    pub level: usize,
}

#[derive(Serialize, Deserialize)]
struct SceneObjectRepr {
    index: usize,
    class_id: usize,
    t: [f64; 3],
    q: [f64; 4],
    level: usize,
}

impl From<SceneObject> for SceneObjectRepr {
    fn from(o: SceneObject) -> Self {
        SceneObjectRepr {
            index: o.index,
            class_id: o.class_id,
            t: [o.pose.t.x, o.pose.t.y, o.pose.t.z],
            q: quat_to_wxyz(&o.pose.q),
            level: o.level,
        }
    }
}

impl TryFrom<SceneObjectRepr> for SceneObject {
    type Error = String;

    fn try_from(r: SceneObjectRepr) -> std::result::Result<Self, String> {
        let q = quat_from_wxyz(r.q).map_err(|e| e.to_string())?;
        Ok(SceneObject {
            index: r.index,
            class_id: r.class_id,
            pose: Pose::new(Vector3::from(r.t), q),
            level: r.level,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bounds: Bounds,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Number of occupied levels.
    pub fn num_levels(&self) -> usize {
        self.objects.iter().map(|o| o.level + 1).max().unwrap_or(0)
    }

    pub fn bodies(&self, catalog: &Catalog) -> Result<Vec<Body>> {
        self.objects
            .iter()
            .map(|o| Ok(Body::new(catalog.get(o.class_id)?, &o.pose)))
            .collect()
    }

    /// Instance count per class id.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for o in &self.objects {
            *m.entry(o.class_id).or_insert(0) += 1;
        }
        m
    }

    /// Checks index contiguity, class ids and poses.
    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        self.bounds.validate()?;
        for (i, o) in self.objects.iter().enumerate() {
            if o.index != i {
                return Err(Error::InvalidArgument(format!(
                    "object indices must be contiguous from 0; found {} at position {i}",
                    o.index
                )));
            }
            catalog.get(o.class_id)?;
            if !o.pose.is_finite() {
                return Err(Error::InvalidArgument(format!("object {i} has a non-finite pose")));
            }
        }
        Ok(())
    }
}
