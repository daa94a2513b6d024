use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

const CONVEXITY_TOL: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-9;

/// Closed convex triangle mesh in the object frame, centroid at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexMesh {
    pub vertices: Vec<Vector3<f64>>,
    /// Triangles, counter-clockwise seen from outside.
    pub faces: Vec<[usize; 3]>,
}

impl ConvexMesh {
    /// Builds a mesh from convex polygonal faces (any winding), triangulating by fan,
    /// orienting outward and moving the volume centroid to the origin.
    pub fn from_polygons(vertices: Vec<Vector3<f64>>, polygons: &[Vec<usize>]) -> Result<Self> {
        let inside = vertices.iter().sum::<Vector3<f64>>() / vertices.len().max(1) as f64;
        let mut faces = Vec::new();
        for poly in polygons {
            if poly.len() < 3 {
                return Err(Error::DegenerateGeometry("face with fewer than 3 vertices".into()));
            }
            for k in 1..poly.len() - 1 {
                let mut tri = [poly[0], poly[k], poly[k + 1]];
                let n = tri_normal(&vertices, tri);
                if n.dot(&(vertices[tri[0]] - inside)) < 0.0 {
                    tri.swap(1, 2);
                }
                faces.push(tri);
            }
        }
        let mesh = ConvexMesh { vertices, faces };
        Ok(mesh.centered())
    }

    /// Returns a copy with the volume centroid moved to the origin.
    pub fn centered(mut self) -> Self {
        let c = self.centroid();
        if c.norm() > 1e-12 {
            for v in &mut self.vertices {
                *v -= c;
            }
        }
        self
    }

    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = self.tri(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Volume centroid (uniform density).
    pub fn centroid(&self) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        let mut vol = 0.0;
        for f in &self.faces {
            let [a, b, c] = self.tri(f);
            let v = a.dot(&b.cross(&c)) / 6.0;
            acc += v * (a + b + c) / 4.0;
            vol += v;
        }
        if vol.abs() < 1e-300 {
            return Vector3::zeros();
        }
        acc / vol
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.tri(&self.faces[f]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        tri_normal(&self.vertices, self.faces[f]).normalize()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn tri(&self, f: &[usize; 3]) -> [Vector3<f64>; 3] {
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Checks closedness (each directed edge matched by its reverse), convexity and volume.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 4 || self.faces.is_empty() {
            return Err(Error::DegenerateGeometry("mesh needs at least 4 vertices".into()));
        }
        for f in &self.faces {
            if f.iter().any(|&i| i >= self.vertices.len()) {
                return Err(Error::DegenerateGeometry("face index out of range".into()));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 || directed.get(&(b, a)) != Some(&1) {
                return Err(Error::DegenerateGeometry(format!(
                    "mesh is not closed at edge ({a}, {b})"
                )));
            }
        }
        let scale = self.bounding_radius().max(1e-12);
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_normal(fi);
            let p = self.vertices[f[0]];
            if self
                .vertices
                .iter()
                .any(|v| n.dot(&(v - p)) > CONVEXITY_TOL * scale)
            {
                return Err(Error::DegenerateGeometry(format!("mesh is not convex at face {fi}")));
            }
        }
        if self.volume() <= 0.0 {
            return Err(Error::DegenerateGeometry("mesh has no volume".into()));
        }
        Ok(())
    }

    /// Distinct face normal directions (parallel duplicates removed) and distinct
    /// directions of true edges (fan-triangulation diagonals excluded).
    pub fn sat_axes(&self) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        let normals: Vec<Vector3<f64>> = (0..self.faces.len()).map(|f| self.face_normal(f)).collect();
        let mut face_axes: Vec<Vector3<f64>> = Vec::new();
        for n in &normals {
            push_unique_direction(&mut face_axes, *n);
        }
        let mut adjacent: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adjacent.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut keys: Vec<_> = adjacent.keys().copied().collect();
        keys.sort_unstable();
        let mut edge_axes = Vec::new();
        for key in keys {
            let fs = &adjacent[&key];
            let coplanar = fs.len() == 2 && normals[fs[0]].dot(&normals[fs[1]]) > 1.0 - 1e-9;
            if coplanar {
                continue;
            }
            let d = (self.vertices[key.1] - self.vertices[key.0]).normalize();
            push_unique_direction(&mut edge_axes, d);
        }
        (face_axes, edge_axes)
    }
}

fn push_unique_direction(set: &mut Vec<Vector3<f64>>, d: Vector3<f64>) {
    if set.iter().all(|e| e.cross(&d).norm() > PARALLEL_TOL) {
        set.push(d);
    }
}

fn tri_normal(vertices: &[Vector3<f64>], f: [usize; 3]) -> Vector3<f64> {
    let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    (b - a).cross(&(c - a))
}

/// Right prism over a convex counter-clockwise polygon, extruded along z and centered.
pub fn extrude(polygon: &[Vector2<f64>], height: f64) -> Result<ConvexMesh> {
    let n = polygon.len();
    let mut vertices = Vec::with_capacity(2 * n);
    for z in [-height / 2.0, height / 2.0] {
        for p in polygon {
            vertices.push(Vector3::new(p.x, p.y, z));
        }
    }
    let mut polys = vec![(0..n).collect::<Vec<_>>(), (n..2 * n).collect::<Vec<_>>()];
    for i in 0..n {
        let j = (i + 1) % n;
        polys.push(vec![i, j, n + j, n + i]);
    }
    ConvexMesh::from_polygons(vertices, &polys)
}

pub fn cuboid(x: f64, y: f64, z: f64) -> ConvexMesh {
    let (hx, hy) = (x / 2.0, y / 2.0);
    let rect = [
        Vector2::new(-hx, -hy),
        Vector2::new(hx, -hy),
        Vector2::new(hx, hy),
        Vector2::new(-hx, hy),
    ];
    extrude(&rect, z).expect("rectangle prism is valid")
}

pub fn regular_prism(radius: f64, height: f64, sides: usize) -> ConvexMesh {
    let poly: Vec<Vector2<f64>> = (0..sides)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            Vector2::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    extrude(&poly, height).expect("regular prism is valid")
}

/// Square pyramid with its base in a horizontal plane and apex up.
pub fn square_pyramid(base: f64, height: f64) -> ConvexMesh {
    let h = base / 2.0;
    let vertices = vec![
        Vector3::new(-h, -h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(-h, h, 0.0),
        Vector3::new(0.0, 0.0, height),
    ];
    let polys = vec![
        vec![0, 1, 2, 3],
        vec![0, 1, 4],
        vec![1, 2, 4],
        vec![2, 3, 4],
        vec![3, 0, 4],
    ];
    ConvexMesh::from_polygons(vertices, &polys).expect("pyramid is valid")
}

/// Isosceles triangular prism: triangle (base `width`, apex height `height`) in the
/// x–z plane, extruded `length` along y. The rectangular base faces -z.
pub fn triangular_prism(width: f64, height: f64, length: f64) -> ConvexMesh {
    let (w, l) = (width / 2.0, length / 2.0);
    let vertices = vec![
        Vector3::new(-w, -l, 0.0),
        Vector3::new(w, -l, 0.0),
        Vector3::new(0.0, -l, height),
        Vector3::new(-w, l, 0.0),
        Vector3::new(w, l, 0.0),
        Vector3::new(0.0, l, height),
    ];
    let polys = vec![
        vec![0, 1, 2],
        vec![3, 4, 5],
        vec![0, 1, 4, 3],
        vec![1, 2, 5, 4],
        vec![2, 0, 3, 5],
    ];
    ConvexMesh::from_polygons(vertices, &polys).expect("prism is valid")
}
