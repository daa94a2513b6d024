use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::sample::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    /// Unit normal; vertical component non-negative unless the plane is vertical.
    pub normal: Vector3<f64>,
    /// Signed distance from the origin: `normal · p = offset` on the plane.
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Angle between the normal and the up axis.
    pub fn tilt(&self) -> f64 {
        self.normal.z.clamp(-1.0, 1.0).acos()
    }

    /// Height of the plane above `(x, y)`; `None` for vertical planes.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        (self.normal.z.abs() > 1e-12)
            .then(|| (self.offset - self.normal.x * x - self.normal.y * y) / self.normal.z)
    }
}

/// Total least-squares plane through the points (smallest principal axis of the scatter).
pub fn fit_plane(points: &PointCloud) -> Result<Plane> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "plane fit needs at least 3 points, got {n}"
        )));
    }
    let c = points.centroid();
    let mut cov = Matrix3::zeros();
    for p in &points.points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let spread = eig.eigenvalues[largest];
    if !(spread > 0.0) || eig.eigenvalues[middle] <= 1e-12 * spread {
        return Err(Error::DegenerateGeometry("points are collinear or coincident".into()));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(smallest).into_owned().normalize();
    if normal.z < 0.0 {
        normal = -normal;
    }
    Ok(Plane {
        normal,
        offset: normal.dot(&c),
    })
}
