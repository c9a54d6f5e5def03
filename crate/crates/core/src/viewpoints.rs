//! Virtual camera placement on the upper half of a regular dodecahedron.
//!
//! The six upper-half face midpoints of a regular dodecahedron are the top
//! vertex plus the upper ring of a regular icosahedron: one zenith view and
//! five views at polar angle arccos(1/sqrt(5)) with 72 degree azimuth
//! spacing.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraModel, Pose};

/// Shared pinhole intrinsics for virtual cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn vga() -> Self {
        Intrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        }
    }

    pub fn of(cam: &CameraModel) -> Self {
        Intrinsics {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
        }
    }

    pub fn camera(&self, pose: Pose) -> Result<CameraModel> {
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)
    }
}

/// Set of virtual cameras on a sphere of `radius` around `center`.
/// Camera 0 is always the top-down view.
#[derive(Debug, Clone)]
pub struct ViewpointSet {
    pub cameras: Vec<CameraModel>,
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl ViewpointSet {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

fn build(
    positions: Vec<Vector3<f64>>,
    center: Vector3<f64>,
    radius: f64,
    up: &Vector3<f64>,
    intr: &Intrinsics,
) -> Result<ViewpointSet> {
    let cameras = positions
        .into_iter()
        .map(|p| {
            let pose = look_at(&p, &center, up)?;
            intr.camera(pose)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewpointSet {
        cameras,
        center,
        radius,
    })
}

/// Orthonormal frame with `w` as the third axis and `azimuth_ref` projected
/// as the first.
fn frame(w: &Vector3<f64>, azimuth_ref: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut u = azimuth_ref - w * azimuth_ref.dot(w);
    if u.norm() < 1e-9 {
        let alt = if w.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        u = alt - w * alt.dot(w);
    }
    let u = u.normalize();
    (u, w.cross(&u))
}

/// The six upper-half dodecahedron face-midpoint viewpoints: zenith first,
/// then a ring of five at polar angle arccos(1/sqrt(5)), azimuths 72 degrees
/// apart starting at `azimuth_ref` (world +x when None).
pub fn sample_dodecahedron(
    center: Vector3<f64>,
    radius: f64,
    up: Vector3<f64>,
    azimuth_ref: Option<Vector3<f64>>,
    intr: &Intrinsics,
) -> Result<ViewpointSet> {
    if radius <= 0.0 {
        return Err(Error::InvalidArgument("viewpoint radius must be positive".into()));
    }
    let w = up.normalize();
    let (u, v) = frame(&w, &azimuth_ref.unwrap_or_else(Vector3::x));
    let polar = (1.0 / 5.0f64.sqrt()).acos();
    let (sin_p, cos_p) = (polar.sin(), polar.cos());
    let mut positions = vec![center + w * radius];
    for i in 0..5 {
        let az = (i as f64) * 72.0f64.to_radians();
        let dir = (u * az.cos() + v * az.sin()) * sin_p + w * cos_p;
        positions.push(center + dir * radius);
    }
    build(positions, center, radius, &w, intr)
}

/// A single top-down viewpoint, identical to viewpoint 0 of
/// [`sample_dodecahedron`].
pub fn sample_top_only(
    center: Vector3<f64>,
    radius: f64,
    up: Vector3<f64>,
    intr: &Intrinsics,
) -> Result<ViewpointSet> {
    if radius <= 0.0 {
        return Err(Error::InvalidArgument("viewpoint radius must be positive".into()));
    }
    let w = up.normalize();
    build(vec![center + w * radius], center, radius, &w, intr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> ViewpointSet {
        sample_dodecahedron(
            Vector3::new(0.1, -0.2, 0.0),
            0.7,
            Vector3::z(),
            None,
            &Intrinsics::vga(),
        )
        .unwrap()
    }

    #[test]
    fn six_viewpoints_on_the_sphere_looking_at_center() {
        let s = set();
        assert_eq!(s.len(), 6);
        for cam in &s.cameras {
            assert!(((cam.position() - s.center).norm() - 0.7).abs() < 1e-9);
            let axis = cam.optical_axis();
            let to_center = (s.center - cam.position()).normalize();
            assert!(axis.cross(&to_center).norm() < 1e-6);
        }
    }

    #[test]
    fn viewpoint_zero_is_the_top_view() {
        let s = set();
        let axis = s.cameras[0].optical_axis();
        assert!((axis + Vector3::z()).norm() < 1e-9);
    }

    #[test]
    fn ring_polar_angles_and_azimuth_gaps() {
        let s = set();
        let expected_polar = (1.0 / 5.0f64.sqrt()).acos();
        let mut azimuths = Vec::new();
        for cam in &s.cameras[1..] {
            let d = (cam.position() - s.center) / 0.7;
            let polar = d.z.acos();
            assert!((polar - expected_polar).abs() < 1e-9);
            azimuths.push(d.y.atan2(d.x));
        }
        for i in 0..5 {
            let gap = (azimuths[(i + 1) % 5] - azimuths[i]).rem_euclid(std::f64::consts::TAU);
            assert!((gap - 72.0f64.to_radians()).abs() < 1e-9, "gap {gap}");
        }
        // positions pairwise distinct and above the plane
        for i in 0..6 {
            assert!(s.cameras[i].position().z > 0.0);
            for j in (i + 1)..6 {
                assert!((s.cameras[i].position() - s.cameras[j].position()).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn ring_matches_icosahedron_vertices() {
        // exact upper-ring icosahedron vertices: (0, +-1, +-phi) cyclic,
        // normalized, rotated so one vertex is at the zenith
        let s = sample_dodecahedron(Vector3::zeros(), 1.0, Vector3::z(), None, &Intrinsics::vga())
            .unwrap();
        // cos(polar) must equal 1/sqrt(5), the icosahedron ring height
        for cam in &s.cameras[1..] {
            assert!((cam.position().z - 1.0 / 5.0f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn top_only_equals_dodecahedron_viewpoint_zero() {
        let center = Vector3::new(0.05, 0.02, 0.0);
        let intr = Intrinsics::vga();
        let top = sample_top_only(center, 0.7, Vector3::z(), &intr).unwrap();
        let dodeca = sample_dodecahedron(center, 0.7, Vector3::z(), None, &intr).unwrap();
        assert_eq!(top.len(), 1);
        let a = &top.cameras[0];
        let b = &dodeca.cameras[0];
        assert!((a.position() - b.position()).norm() < 1e-12);
        assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-12);
        assert!(((a.position() - center).norm() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn azimuth_reference_rotates_ring_rigidly() {
        let intr = Intrinsics::vga();
        let base = sample_dodecahedron(Vector3::zeros(), 1.0, Vector3::z(), None, &intr).unwrap();
        let angle = 0.37f64;
        let rotated_ref = Vector3::new(angle.cos(), angle.sin(), 0.0);
        let rot = sample_dodecahedron(Vector3::zeros(), 1.0, Vector3::z(), Some(rotated_ref), &intr)
            .unwrap();
        let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        for (a, b) in base.cameras.iter().zip(rot.cameras.iter()) {
            assert!((rz * a.position() - b.position()).norm() < 1e-9);
        }
    }
}
