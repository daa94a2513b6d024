//! Object primitives and their allowed resting orientations.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::mesh::{cuboid, regular_prism, square_pyramid, triangular_prism, ConvexMesh};
use super::pose::{orientation_distance, quat_from_wxyz, quat_to_wxyz, Pose};
use super::support::{com_supported, Body, SupportPolygon};
use crate::error::{Error, Result};

/// Minimum bottom footprint (m²) of an allowed resting orientation.
pub const MIN_FOOTPRINT_AREA: f64 = 4e-4;

pub const CYLINDER_SIDES: usize = 24;

#[derive(Debug, Clone)]
pub struct ObjectClass {
    pub id: usize,
    pub name: String,
    pub mesh: ConvexMesh,
    /// Orientations allowed below the top layer (and for scattered objects).
    pub stable_orientations: Vec<UnitQuaternion<f64>>,
    /// Extra orientations allowed only in the final layer.
    pub top_orientations: Vec<UnitQuaternion<f64>>,
    /// Object-frame rotations mapping the mesh onto itself.
    pub symmetries: Vec<UnitQuaternion<f64>>,
    face_axes: Vec<Vector3<f64>>,
    edge_axes: Vec<Vector3<f64>>,
    radius: f64,
}

impl PartialEq for ObjectClass {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.name == other.name
            && self.mesh == other.mesh
            && self.stable_orientations == other.stable_orientations
            && self.top_orientations == other.top_orientations
            && self.symmetries == other.symmetries
    }
}

impl ObjectClass {
    pub fn new(
        id: usize,
        name: impl Into<String>,
        mesh: ConvexMesh,
        stable_orientations: Vec<UnitQuaternion<f64>>,
        top_orientations: Vec<UnitQuaternion<f64>>,
        symmetries: Vec<UnitQuaternion<f64>>,
    ) -> Self {
        let mesh = mesh.centered();
        let (face_axes, edge_axes) = mesh.sat_axes();
        let radius = mesh.bounding_radius();
        ObjectClass {
            id,
            name: name.into(),
            mesh,
            stable_orientations,
            top_orientations,
            symmetries,
            face_axes,
            edge_axes,
            radius,
        }
    }

    /// A class resting in its mesh orientation with no declared symmetry.
    pub fn unconstrained(id: usize, name: impl Into<String>, mesh: ConvexMesh) -> Self {
        let id_q = vec![UnitQuaternion::identity()];
        Self::new(id, name, mesh, id_q.clone(), Vec::new(), id_q)
    }

    pub fn face_axes(&self) -> &[Vector3<f64>] {
        &self.face_axes
    }

    pub fn edge_axes(&self) -> &[Vector3<f64>] {
        &self.edge_axes
    }

    pub fn bounding_radius(&self) -> f64 {
        self.radius
    }

    /// Orientations usable in a layer; the top layer also admits `top_orientations`.
    pub fn allowed_orientations(&self, top_layer: bool) -> Vec<UnitQuaternion<f64>> {
        let mut out = self.stable_orientations.clone();
        if top_layer {
            out.extend(self.top_orientations.iter().copied());
        }
        out
    }

    /// Rotation angle from `from` to `to`, minimized over the class symmetries.
    pub fn symmetric_rotation_angle(&self, from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> f64 {
        let syms: &[UnitQuaternion<f64>] = if self.symmetries.is_empty() {
            &[UnitQuaternion::identity()][..]
        } else {
            &self.symmetries
        };
        syms.iter()
            .map(|s| super::pose::rotation_angle(&(to * s * from.inverse())))
            .fold(f64::INFINITY, f64::min)
    }

    /// Footprint polygon and its area when resting in `q` at the origin.
    pub fn footprint(&self, q: &UnitQuaternion<f64>) -> Body {
        Body::new(self, &Pose::new(Vector3::zeros(), *q))
    }

    fn check_orientation(&self, q: &UnitQuaternion<f64>, min_area: f64) -> Result<()> {
        let body = self.footprint(q);
        let area = body.bottom_area();
        if area < min_area {
            return Err(Error::InvalidArgument(format!(
                "class {} orientation {:?} has footprint {area:.2e} m² below {min_area:.2e}",
                self.name,
                quat_to_wxyz(q)
            )));
        }
        let poly = SupportPolygon::from_points(&body.bottom);
        if !com_supported(&body.com, &poly) {
            return Err(Error::InvalidArgument(format!(
                "class {} orientation {:?} is not statically stable",
                self.name,
                quat_to_wxyz(q)
            )));
        }
        Ok(())
    }

    pub fn validate(&self, min_area: f64) -> Result<()> {
        self.mesh.validate()?;
        if self.stable_orientations.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class {} has no stable orientation",
                self.name
            )));
        }
        for q in self.stable_orientations.iter().chain(&self.top_orientations) {
            self.check_orientation(q, min_area)?;
        }
        for s in &self.symmetries {
            let moved: Vec<Vector3<f64>> = self.mesh.vertices.iter().map(|v| s * v).collect();
            let maps_onto = moved
                .iter()
                .all(|m| self.mesh.vertices.iter().any(|v| (v - m).norm() < 1e-9));
            if !maps_onto {
                return Err(Error::InvalidArgument(format!(
                    "class {}: declared symmetry {:?} does not preserve the mesh",
                    self.name,
                    quat_to_wxyz(s)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub classes: Vec<ObjectClass>,
}

impl Catalog {
    pub fn get(&self, id: usize) -> Result<&ObjectClass> {
        self.classes
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown object class {id}")))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidArgument(format!(
                    "class ids must be contiguous from 0; found {} at position {i}",
                    c.id
                )));
            }
            c.validate(MIN_FOOTPRINT_AREA)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let repr = CatalogRepr {
            classes: self.classes.iter().map(ClassRepr::from).collect(),
        };
        serde_json::to_string_pretty(&repr).expect("catalog serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let repr: CatalogRepr = serde_json::from_str(text).map_err(|e| Error::json(path, None, e))?;
        let classes = repr
            .classes
            .into_iter()
            .map(ClassRepr::into_class)
            .collect::<Result<Vec<_>>>()?;
        let cat = Catalog { classes };
        cat.validate()?;
        Ok(cat)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl Default for Catalog {
    fn default() -> Self {
        default_catalog()
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogRepr {
    classes: Vec<ClassRepr>,
}

#[derive(Serialize, Deserialize)]
struct ClassRepr {
    id: usize,
    name: String,
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    stable_orientations: Vec<[f64; 4]>,
    top_orientations: Vec<[f64; 4]>,
    #[serde(default)]
    symmetries: Vec<[f64; 4]>,
}

impl From<&ObjectClass> for ClassRepr {
    fn from(c: &ObjectClass) -> Self {
        let qs = |v: &[UnitQuaternion<f64>]| v.iter().map(quat_to_wxyz).collect();
        ClassRepr {
            id: c.id,
            name: c.name.clone(),
            vertices: c.mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            faces: c.mesh.faces.clone(),
            stable_orientations: qs(&c.stable_orientations),
            top_orientations: qs(&c.top_orientations),
            symmetries: qs(&c.symmetries),
        }
    }
}

impl ClassRepr {
    fn into_class(self) -> Result<ObjectClass> {
        let qs = |v: Vec<[f64; 4]>| v.into_iter().map(quat_from_wxyz).collect::<Result<Vec<_>>>();
        let mesh = ConvexMesh {
            vertices: self.vertices.into_iter().map(Vector3::from).collect(),
            faces: self.faces,
        };
        let mut symmetries = qs(self.symmetries)?;
        if symmetries.is_empty() {
            symmetries.push(UnitQuaternion::identity());
        }
        Ok(ObjectClass::new(
            self.id,
            self.name,
            mesh,
            qs(self.stable_orientations)?,
            qs(self.top_orientations)?,
            symmetries,
        ))
    }
}

/// Rotation that turns outward normal `n` (object frame) to face straight down.
pub fn face_down(n: Vector3<f64>) -> UnitQuaternion<f64> {
    let down = -Vector3::z();
    UnitQuaternion::rotation_between(&n, &down)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI))
}

fn yaw(angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
}

fn flip() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

/// `count` rotations about z, optionally each combined with a half turn about x.
fn dihedral(count: usize, with_flip: bool) -> Vec<UnitQuaternion<f64>> {
    let mut out = Vec::new();
    for k in 0..count {
        let r = yaw(2.0 * PI * k as f64 / count as f64);
        out.push(r);
        if with_flip {
            out.push(r * flip());
        }
    }
    out
}

/// The 24 proper rotations of the cube, by closure over quarter turns.
fn cube_group() -> Vec<UnitQuaternion<f64>> {
    let gens = [
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
    ];
    let mut group = vec![UnitQuaternion::identity()];
    let mut frontier = group.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for h in &gens {
                let cand = UnitQuaternion::new_normalize((h * g).into_inner());
                if group.iter().all(|e| orientation_distance(e, &cand) > 1e-9) {
                    group.push(cand);
                    next.push(cand);
                }
            }
        }
        frontier = next;
    }
    group
}

/// The built-in set of eight primitives.
pub fn default_catalog() -> Catalog {
    let up = face_down(-Vector3::z());
    let side = face_down(-Vector3::x());
    let d4 = dihedral(4, true);

    let pyramid = square_pyramid(0.04, 0.04);
    // Outward normal of the +x triangular face.
    let pyr_side = Vector3::new(0.04, 0.0, 0.02).normalize();

    let classes = vec![
        ObjectClass::new(0, "small_cuboid", cuboid(0.03, 0.03, 0.06), vec![up, side], vec![], d4.clone()),
        ObjectClass::new(1, "cube", cuboid(0.03, 0.03, 0.03), vec![up], vec![], cube_group()),
        ObjectClass::new(2, "long_plank", cuboid(0.03, 0.03, 0.12), vec![side], vec![up], d4.clone()),
        ObjectClass::new(3, "wide_slab", cuboid(0.06, 0.06, 0.02), vec![up], vec![side], d4.clone()),
        ObjectClass::new(
            4,
            "cylinder",
            regular_prism(0.015, 0.06, CYLINDER_SIDES),
            vec![up],
            vec![],
            dihedral(CYLINDER_SIDES, true),
        ),
        ObjectClass::new(5, "square_pyramid", pyramid, vec![face_down(pyr_side)], vec![up], dihedral(4, false)),
        ObjectClass::new(
            6,
            "triangular_prism",
            triangular_prism(0.04, 0.04, 0.04),
            vec![up, face_down(-Vector3::y())],
            vec![],
            vec![UnitQuaternion::identity(), yaw(PI)],
        ),
        ObjectClass::new(7, "tall_cuboid", cuboid(0.04, 0.04, 0.08), vec![up, side], vec![], d4),
    ];
    Catalog { classes }
}
