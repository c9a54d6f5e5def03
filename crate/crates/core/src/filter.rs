//! Background and support-plane removal producing the filtered cloud.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
#[cfg(test)]
use crate::geometry::Frame;

/// Plane in Hessian normal form: `{x : normal . x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "plane normal must be unit length (norm {n})"
            )));
        }
        Ok(Plane { normal, offset })
    }

    /// Horizontal table at height z (world +z up).
    pub fn horizontal(z: f64) -> Self {
        Plane {
            normal: Vector3::z(),
            offset: z,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Known table pose plus the depth and plane tolerances used for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceModel {
    pub support_plane: Plane,
    /// Points farther than this from the camera are background (m).
    pub background_depth: f64,
    /// Points within this distance of the plane are table points (m).
    pub plane_tolerance: f64,
    /// Axis-aligned reachability box in world coordinates (min, max).
    pub bounds: (Vector3<f64>, Vector3<f64>),
}

impl WorkspaceModel {
    pub fn new(
        support_plane: Plane,
        background_depth: f64,
        plane_tolerance: f64,
        bounds: (Vector3<f64>, Vector3<f64>),
    ) -> Result<Self> {
        if background_depth <= 0.0 || plane_tolerance <= 0.0 {
            return Err(Error::InvalidArgument(
                "workspace tolerances must be positive".into(),
            ));
        }
        Ok(WorkspaceModel {
            support_plane,
            background_depth,
            plane_tolerance,
            bounds,
        })
    }

    /// Table at z=0, 1.5 m background cutoff, 1 cm plane tolerance,
    /// 1 m reach box centered above the table.
    pub fn default_tabletop() -> Self {
        WorkspaceModel {
            support_plane: Plane::horizontal(0.0),
            background_depth: 1.5,
            plane_tolerance: 0.01,
            bounds: (
                Vector3::new(-0.5, -0.5, -0.01),
                Vector3::new(0.5, 0.5, 1.0),
            ),
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = self.bounds;
        p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
    }
}

/// Remove background (range from `camera_origin` beyond the cutoff) and
/// support-plane points. Order of the surviving points is preserved.
pub fn filter_cloud(
    cloud: &PointCloud,
    ws: &WorkspaceModel,
    camera_origin: &Vector3<f64>,
) -> PointCloud {
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            (*p - camera_origin).norm() <= ws.background_depth
                && ws.support_plane.signed_distance(p).abs() > ws.plane_tolerance
        })
        .copied()
        .collect();
    PointCloud::new(points, cloud.frame)
}

/// Least-squares plane refit over points near the configured plane.
/// Off by default in the pipeline; provided for non-calibrated setups.
pub fn refine_plane(cloud: &PointCloud, ws: &WorkspaceModel) -> Option<Plane> {
    let near: Vec<&Vector3<f64>> = cloud
        .points
        .iter()
        .filter(|p| ws.support_plane.signed_distance(p).abs() <= 2.0 * ws.plane_tolerance)
        .collect();
    if near.len() < 3 {
        return None;
    }
    let centroid = near.iter().copied().sum::<Vector3<f64>>() / near.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in &near {
        let d = *p - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let mut normal = eig.eigenvectors.column(min_i).into_owned().normalize();
    if normal.dot(&ws.support_plane.normal) < 0.0 {
        normal = -normal;
    }
    Some(Plane {
        normal,
        offset: normal.dot(&centroid),
    })
}
