//! Camera models, rigid transforms and pixel/point conversions.
//!
//! Conventions used everywhere in this crate:
//! - camera frame: +z forward (optical axis), +x right, +y down (image-aligned)
//! - depth values are z-depth along the optical axis, in meters; 0.0 marks
//!   an invalid pixel
//! - all interchange is in meters

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform: rotation (unit quaternion) plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
        }
    }

    pub fn from_parts(qw: f64, qx: f64, qy: f64, qz: f64, t: Vector3<f64>) -> Self {
        let q = UnitQuaternion::new_normalize(Quaternion::new(qw, qx, qy, qz));
        Pose {
            rotation: q,
            translation: t,
        }
    }

    /// Build a pose from a rotation matrix (re-orthonormalized via quaternion).
    pub fn from_matrix(rot: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_matrix(rot);
        Pose {
            rotation: q,
            translation: t,
        }
    }

    /// `self` then `other` applied to points: (self * other)(p) = self(other(p)).
    pub fn compose(&self, other: &Pose) -> Pose {
        let rot = self.rotation * other.rotation;
        Pose {
            rotation: UnitQuaternion::new_normalize(rot.into_inner()),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }
}

/// Pinhole camera: intrinsics in pixels plus a camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world transform.
    pub pose: Pose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: Pose,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(Error::InvalidArgument(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Kinect-like 640x480 defaults.
    pub fn default_vga(pose: Pose) -> Self {
        CameraModel::new(525.0, 525.0, 319.5, 239.5, 640, 480, pose).unwrap()
    }

    /// Camera position in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        self.pose.translation
    }

    /// Optical axis (+z of the camera frame) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.pose.transform_vector(&Vector3::z())
    }
}

/// Lift a pixel with depth to a camera-frame 3D point.
pub fn backproject(u: f64, v: f64, d: f64, cam: &CameraModel) -> Result<Vector3<f64>> {
    if d <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "non-positive depth {d} at pixel ({u}, {v})"
        )));
    }
    Ok(Vector3::new(
        (u - cam.cx) * d / cam.fx,
        (v - cam.cy) * d / cam.fy,
        d,
    ))
}

/// Project a camera-frame point to (u, v, z-depth).
pub fn project(p: &Vector3<f64>, cam: &CameraModel) -> Result<(f64, f64, f64)> {
    if p.z <= 0.0 {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((
        cam.fx * p.x / p.z + cam.cx,
        cam.fy * p.y / p.z + cam.cy,
        p.z,
    ))
}

/// H x W range map; depth measured along the optical axis, invalid = 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "depth buffer length {} != {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidArgument(
                "depth values must be finite and non-negative".into(),
            ));
        }
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.data[v * self.width + u] = d;
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

/// Coordinate frame tag for point clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Camera,
    World,
}

/// Unordered 3D point set with a declared frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Self {
        PointCloud { points, frame }
    }

    pub fn empty(frame: Frame) -> Self {
        PointCloud {
            points: Vec::new(),
            frame,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose, frame: Frame) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            frame,
        }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.points.is_empty() {
            return Vector3::zeros();
        }
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }
}

/// Backproject every valid pixel; invalid pixels are skipped.
pub fn depth_to_cloud(img: &DepthImage, cam: &CameraModel, to_world: bool) -> Result<PointCloud> {
    if img.width != cam.width || img.height != cam.height {
        return Err(Error::InvalidArgument(format!(
            "depth image {}x{} does not match camera {}x{}",
            img.width, img.height, cam.width, cam.height
        )));
    }
    let mut points = Vec::with_capacity(img.valid_count());
    for v in 0..img.height {
        for u in 0..img.width {
            let d = img.get(u, v);
            if d > 0.0 {
                let p = backproject(u as f64, v as f64, d, cam)?;
                points.push(if to_world {
                    cam.pose.transform_point(&p)
                } else {
                    p
                });
            }
        }
    }
    Ok(PointCloud::new(
        points,
        if to_world { Frame::World } else { Frame::Camera },
    ))
}

/// Camera-to-world pose looking from `eye` toward `target`, image-up aligned
/// with the projection of `up` (camera -y maps to up).
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> Result<Pose> {
    let forward = target - eye;
    if forward.norm() < 1e-12 {
        return Err(Error::InvalidArgument("look_at: eye equals target".into()));
    }
    let f = Unit::new_normalize(forward).into_inner();
    // Fall back to a fixed reference when the view is along `up`.
    let mut up_ref = *up;
    if (up_ref.normalize().dot(&f)).abs() > 1.0 - 1e-9 {
        up_ref = Vector3::x();
        if (up_ref.dot(&f)).abs() > 1.0 - 1e-9 {
            up_ref = Vector3::y();
        }
    }
    let up_proj = up_ref - f * up_ref.dot(&f);
    let y_cam = -(Unit::new_normalize(up_proj).into_inner());
    let x_cam = y_cam.cross(&f);
    let rot = Matrix3::from_columns(&[x_cam, y_cam, f]);
    Ok(Pose::from_matrix(&rot, *eye))
}
