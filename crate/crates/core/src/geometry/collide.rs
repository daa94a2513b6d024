//! Separating-axis intersection test for posed convex polyhedra.

use nalgebra::Vector3;

use super::catalog::ObjectClass;
use super::pose::Pose;

/// True iff the two shapes, each shrunk by `tol`, intersect.
///
/// Candidate axes are the face normals of both shapes and the cross products of
/// their edge directions. Along each axis the shrunk projections overlap only if
/// the original overlap exceeds `2 * tol`.
pub fn collide(a: (&ObjectClass, &Pose), b: (&ObjectClass, &Pose), tol: f64) -> bool {
    let (ca, pa) = a;
    let (cb, pb) = b;
    let gap = (pa.t - pb.t).norm() - ca.bounding_radius() - cb.bounding_radius();
    if gap >= -2.0 * tol {
        return false;
    }
    let va: Vec<Vector3<f64>> = ca.mesh.vertices.iter().map(|v| pa.apply(v)).collect();
    let vb: Vec<Vector3<f64>> = cb.mesh.vertices.iter().map(|v| pb.apply(v)).collect();

    let separated = |axis: &Vector3<f64>| -> bool {
        let (amin, amax) = project(&va, axis);
        let (bmin, bmax) = project(&vb, axis);
        amax.min(bmax) - amin.max(bmin) <= 2.0 * tol
    };

    for n in ca.face_axes() {
        if separated(&(pa.q * n)) {
            return false;
        }
    }
    for n in cb.face_axes() {
        if separated(&(pb.q * n)) {
            return false;
        }
    }
    for ea in ca.edge_axes() {
        let ea = pa.q * ea;
        for eb in cb.edge_axes() {
            let axis = ea.cross(&(pb.q * eb));
            let len = axis.norm();
            if len < 1e-9 {
                continue;
            }
            if separated(&(axis / len)) {
                return false;
            }
        }
    }
    true
}

fn project(vertices: &[Vector3<f64>], axis: &Vector3<f64>) -> (f64, f64) {
    vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
