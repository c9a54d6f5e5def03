//! Grasp planning on depth images: a gradient-based antipodal baseline
//! planner, lifting of image-frame grasps to 6-DOF world poses, reachability
//! checks, and best-candidate selection across viewpoints.

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::WorkspaceModel;
use crate::geometry::{backproject, CameraModel, DepthImage, Pose};
use crate::render::SceneEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperParams {
    /// Maximum jaw opening (m).
    pub max_width: f64,
    /// Minimum useful jaw opening (m): narrower detections are treated as
    /// noise slivers and rejected.
    pub min_width: f64,
    /// Finger thickness (m), used by the swept-volume check.
    pub finger_thickness: f64,
    /// Finger length (m) along the approach axis.
    pub finger_length: f64,
    /// Minimum clearance from the support plane during the approach (m).
    pub clearance: f64,
    /// Candidates kept per viewpoint.
    pub top_k: usize,
    /// Maximum approach tilt from straight-down (degrees).
    pub max_tilt_deg: f64,
    /// How far fingertips descend past the shallowest depth between the
    /// jaws (m).
    pub depth_offset: f64,
    /// Depth discontinuity marking an object edge (m).
    pub edge_threshold: f64,
    /// Antipodal gradient tolerance (degrees).
    pub antipodal_tol_deg: f64,
    /// Straight-line approach distance checked for plane clearance (m).
    pub approach_standoff: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        GripperParams {
            max_width: 0.08,
            min_width: 0.01,
            finger_thickness: 0.01,
            finger_length: 0.04,
            clearance: 0.005,
            top_k: 64,
            max_tilt_deg: 80.0,
            depth_offset: 0.02,
            edge_threshold: 0.01,
            antipodal_tol_deg: 15.0,
            approach_standoff: 0.15,
        }
    }
}

/// A parallel-jaw grasp: 4-DOF image-frame parameters plus, once lifted,
/// a 6-DOF world pose whose +z is the approach axis and +x the jaw axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub viewpoint_index: usize,
    /// Grasp center pixel.
    pub u: usize,
    pub v: usize,
    /// Jaw-axis rotation in the image plane, canonical in [0, pi).
    pub angle: f64,
    /// Grasp depth along the optical axis (m).
    pub depth: f64,
    /// Score in [0, 1].
    pub quality: f64,
    /// Jaw opening (m).
    pub width: f64,
    pub world_pose: Option<Pose>,
    pub reachable: bool,
}

/// Behavior contract for planners: 4-DOF candidates on valid pixels with
/// qualities in [0, 1]; `world_pose` left unset.
pub trait GraspPlanner {
    fn plan(&self, img: &DepthImage, cam: &CameraModel) -> Vec<GraspCandidate>;
}

/// The baseline antipodal planner (see [`plan_antipodal`]).
#[derive(Debug, Clone, Copy, Default)]
pub struct AntipodalPlanner {
    pub params: GripperParams,
}

impl GraspPlanner for AntipodalPlanner {
    fn plan(&self, img: &DepthImage, cam: &CameraModel) -> Vec<GraspCandidate> {
        plan_antipodal(img, cam, &self.params)
    }
}

/// Outward edge direction per pixel: mean offset toward deeper-or-invalid
/// neighbors when the discontinuity exceeds the threshold. A pixel is an
/// edge if an 8-neighbor is deeper; the direction is averaged over a 5x5
/// window, whose finer angular quantization keeps off-center chords of
/// curved silhouettes from scoring as perfectly antipodal.
fn edge_map(img: &DepthImage, threshold: f64) -> Vec<Option<Vector2<f64>>> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![None; w * h];
    let deeper = |u: usize, v: usize, d: f64, du: i64, dv: i64| -> bool {
        let (nu, nv) = (u as i64 + du, v as i64 + dv);
        if nu < 0 || nv < 0 || nu >= w as i64 || nv >= h as i64 {
            true
        } else {
            let (nu, nv) = (nu as usize, nv as usize);
            !img.is_valid(nu, nv) || img.get(nu, nv) - d > threshold
        }
    };
    for v in 0..h {
        for u in 0..w {
            if !img.is_valid(u, v) {
                continue;
            }
            let d = img.get(u, v);
            let is_edge = (-1i64..=1)
                .flat_map(|dv| (-1i64..=1).map(move |du| (du, dv)))
                .any(|(du, dv)| (du, dv) != (0, 0) && deeper(u, v, d, du, dv));
            if !is_edge {
                continue;
            }
            let mut dir = Vector2::zeros();
            for dv in -2i64..=2 {
                for du in -2i64..=2 {
                    if (du, dv) != (0, 0) && deeper(u, v, d, du, dv) {
                        dir += Vector2::new(du as f64, dv as f64).normalize();
                    }
                }
            }
            if dir.norm() > 1e-9 {
                out[v * w + u] = Some(dir.normalize());
            }
        }
    }
    out
}

/// Detect antipodal depth-edge pairs. Quality is
/// `cos^2(gradient misalignment) * exp(-width / max_width)` scaled by a
/// Gaussian centering term on the distance to the edge centroid; the top-K
/// candidates are returned in deterministic order (quality descending, then
/// proximity to the edge centroid, then pixel coordinates).
pub fn plan_antipodal(
    img: &DepthImage,
    cam: &CameraModel,
    p: &GripperParams,
) -> Vec<GraspCandidate> {
    if img.valid_count() == 0 {
        return Vec::new();
    }
    let (w, h) = (img.width, img.height);
    let edges = edge_map(img, p.edge_threshold);
    let edge_px: Vec<(usize, usize)> = (0..w * h)
        .filter(|i| edges[*i].is_some())
        .map(|i| (i % w, i / w))
        .collect();
    if edge_px.is_empty() {
        return Vec::new();
    }
    let centroid = {
        let mut c = Vector2::zeros();
        for &(u, v) in &edge_px {
            c += Vector2::new(u as f64, v as f64);
        }
        c / edge_px.len() as f64
    };
    let f = (cam.fx + cam.fy) / 2.0;
    let cos_tol = p.antipodal_tol_deg.to_radians().cos();

    let mut seen: HashSet<(usize, usize, usize, usize)> = HashSet::new();
    let mut cands: Vec<(GraspCandidate, f64)> = Vec::new();
    for &(u0, v0) in &edge_px {
        let out0 = edges[v0 * w + u0].unwrap();
        let inward = -out0;
        let d0 = img.get(u0, v0);
        // metric max width at this depth, in pixels
        let max_px = (p.max_width * f / d0).ceil() as usize;
        let mut min_depth = d0;
        for step in 2..=max_px {
            let q = Vector2::new(u0 as f64, v0 as f64) + inward * step as f64;
            let (uq, vq) = (q.x.round() as i64, q.y.round() as i64);
            if uq < 0 || vq < 0 || uq >= w as i64 || vq >= h as i64 {
                break;
            }
            let (uq, vq) = (uq as usize, vq as usize);
            if img.is_valid(uq, vq) {
                min_depth = min_depth.min(img.get(uq, vq));
            }
            let Some(out1) = edges[vq * w + uq] else {
                continue;
            };
            let anti = -out0.dot(&out1);
            if anti < cos_tol {
                continue;
            }
            let key = if (u0, v0) <= (uq, vq) {
                (u0, v0, uq, vq)
            } else {
                (uq, vq, u0, v0)
            };
            if !seen.insert(key) {
                break;
            }
            let depth = min_depth + p.depth_offset;
            let span = Vector2::new(uq as f64 - u0 as f64, vq as f64 - v0 as f64);
            let width = span.norm() * depth / f;
            if width > p.max_width {
                break;
            }
            if width < p.min_width {
                // sliver pair; keep marching toward the far edge
                continue;
            }
            let (cu, cv) = (
                ((u0 + uq) as f64 / 2.0).round() as usize,
                ((v0 + vq) as f64 / 2.0).round() as usize,
            );
            if !img.is_valid(cu, cv) {
                break;
            }
            let angle = span.y.atan2(span.x).rem_euclid(std::f64::consts::PI);
            let dist2 = (Vector2::new(cu as f64, cv as f64) - centroid).norm_squared();
            // centering: grasps near the edge centroid sit on the object
            // body, where curvature keeps contact normals inside the
            // friction cone; quantized edge directions cannot distinguish
            // those from off-center chords, so score it explicitly
            let dist_m = dist2.sqrt() * depth / f;
            let centering = (-(4.0 * dist_m / p.max_width).powi(2)).exp();
            let quality = anti * anti * (-width / p.max_width).exp() * centering;
            cands.push((
                GraspCandidate {
                    viewpoint_index: 0,
                    u: cu,
                    v: cv,
                    angle,
                    depth,
                    quality,
                    width,
                    world_pose: None,
                    reachable: false,
                },
                dist2,
            ));
            break; // nearest opposing edge only
        }
    }
    cands.sort_by(|(a, da), (b, db)| {
        b.quality
            .partial_cmp(&a.quality)
            .unwrap()
            .then(da.partial_cmp(db).unwrap())
            .then(a.u.cmp(&b.u))
            .then(a.v.cmp(&b.v))
            .then(a.angle.partial_cmp(&b.angle).unwrap())
    });
    cands.truncate(p.top_k);
    cands.into_iter().map(|(c, _)| c).collect()
}

/// Lift a 4-DOF image-frame grasp to a 6-DOF world pose: position from
/// backprojection, approach axis = camera optical axis, jaw axis = the
/// image-plane angle rotated into the world. The angle is canonicalized to
/// [0, pi) first, so antipodal-equivalent grasps lift to the same pose.
pub fn lift_grasp(c: &GraspCandidate, cam: &CameraModel) -> Result<GraspCandidate> {
    if !(c.depth > 0.0 && c.depth.is_finite()) {
        return Err(Error::Lift(format!("invalid grasp depth {}", c.depth)));
    }
    let p_cam = backproject(c.u as f64, c.v as f64, c.depth, cam)?;
    let position = cam.pose.transform_point(&p_cam);
    let angle = c.angle.rem_euclid(std::f64::consts::PI);
    let jaw_cam = Vector3::new(angle.cos(), angle.sin(), 0.0);
    let jaw = cam.pose.transform_vector(&jaw_cam);
    let approach = cam.optical_axis();
    let y = approach.cross(&jaw).normalize();
    let x = y.cross(&approach);
    let rot = Matrix3::from_columns(&[x, y, approach]);
    Ok(GraspCandidate {
        angle,
        world_pose: Some(Pose::from_matrix(&rot, position)),
        ..c.clone()
    })
}

/// Reachability: position inside the workspace box, approach tilt within the
/// limit, and the swept gripper (jaws widened by the clearance) stays above
/// the support plane along the whole approach.
pub fn reachable(
    c: &GraspCandidate,
    ws: &WorkspaceModel,
    scene: &SceneEstimate,
    p: &GripperParams,
) -> bool {
    let Some(pose) = &c.world_pose else {
        return false;
    };
    if !ws.contains(&pose.translation) {
        return false;
    }
    let rot = pose.rotation_matrix();
    let approach = rot.column(2).into_owned();
    let jaw = rot.column(0).into_owned();
    let down = -ws.support_plane.normal;
    let tilt = approach.dot(&down).clamp(-1.0, 1.0).acos();
    if tilt > p.max_tilt_deg.to_radians() {
        return false;
    }
    let half_jaw = c.width / 2.0 + p.finger_thickness + p.clearance;
    let plane = &scene.support_plane;
    let steps = 20;
    for i in 0..=steps {
        let t = p.approach_standoff * i as f64 / steps as f64;
        let center = pose.translation - approach * t;
        for side in [-1.0, 1.0] {
            let corner = center + jaw * (side * half_jaw);
            // fingertips may dip toward the plane only at the grasp point
            let margin = if i == 0 { 0.0 } else { p.clearance };
            if plane.signed_distance(&corner) < margin {
                return false;
            }
        }
    }
    true
}

/// The reachable candidate with the highest quality across all viewpoint
/// sets; ties broken by lower viewpoint index, then lower u, then lower v.
pub fn select_best(sets: &[Vec<GraspCandidate>]) -> Result<GraspCandidate> {
    sets.iter()
        .flatten()
        .filter(|c| c.reachable)
        .min_by(|a, b| {
            b.quality
                .partial_cmp(&a.quality)
                .unwrap()
                .then(a.viewpoint_index.cmp(&b.viewpoint_index))
                .then(a.u.cmp(&b.u))
                .then(a.v.cmp(&b.v))
                .then(a.angle.partial_cmp(&b.angle).unwrap())
        })
        .cloned()
        .ok_or(Error::NoGrasp)
}
