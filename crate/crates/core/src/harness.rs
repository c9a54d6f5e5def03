//! Synthetic experiment harness: seeded tabletop scene generation, a
//! friction-cone grasp-success oracle standing in for physical execution,
//! and the single-object / clutter experiment drivers.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, PipelineConfig};
use crate::error::{Error, Result};
use crate::filter::Plane;
use crate::geometry::{look_at, CameraModel, Pose};
use crate::grasp::{GraspCandidate, GripperParams};
use crate::mesh::TriangleMesh;
use crate::pipeline::{plan, StageTimings};
use crate::render::{build_bvh, render_depth, Ray, SceneEstimate};
use crate::shapes;

/// Primitive object descriptors (dimensions in meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObjectSpec {
    Box { extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
}

impl ObjectSpec {
    pub fn mesh(&self) -> TriangleMesh {
        match self {
            ObjectSpec::Box { extents } => shapes::box_mesh(Vector3::from(*extents)),
            ObjectSpec::Cylinder { radius, height } => shapes::cylinder_mesh(*radius, *height, 48),
            ObjectSpec::Sphere { radius } => shapes::icosphere(*radius, 3),
        }
    }

    /// Rest height of the center above the plane.
    pub fn half_height(&self) -> f64 {
        match self {
            ObjectSpec::Box { extents } => extents[2] / 2.0,
            ObjectSpec::Cylinder { height, .. } => height / 2.0,
            ObjectSpec::Sphere { radius } => *radius,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ObjectSpec::Box { extents } => {
                format!("box-{:.0}x{:.0}x{:.0}", extents[0] * 1000.0, extents[1] * 1000.0, extents[2] * 1000.0)
            }
            ObjectSpec::Cylinder { radius, height } => {
                format!("cyl-{:.0}x{:.0}", radius * 1000.0, height * 1000.0)
            }
            ObjectSpec::Sphere { radius } => format!("sphere-{:.0}", radius * 1000.0),
        }
    }
}

/// The desk-scale object set used by the experiment drivers.
pub fn standard_objects() -> Vec<ObjectSpec> {
    vec![
        ObjectSpec::Box { extents: [0.05, 0.03, 0.06] },
        ObjectSpec::Box { extents: [0.04, 0.04, 0.04] },
        ObjectSpec::Cylinder { radius: 0.02, height: 0.08 },
        ObjectSpec::Cylinder { radius: 0.03, height: 0.05 },
        ObjectSpec::Sphere { radius: 0.03 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Placements {
    /// Explicit object poses (resting heights are the caller's business).
    Poses(Vec<Pose>),
    /// Rejection-sampled non-overlapping placements with random yaw.
    RandomDrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<ObjectSpec>,
    pub placements: Placements,
    /// Real-camera elevation above the plane (degrees).
    pub camera_elevation_deg: f64,
    /// Yaw applied to single-object placements (degrees).
    pub object_yaw_deg: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// One object at the table center with the given yaw.
    pub fn single(object: ObjectSpec, elevation_deg: f64, yaw_deg: f64, seed: u64) -> Self {
        let pose = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians()),
            Vector3::new(0.0, 0.0, object.half_height()),
        );
        SceneSpec {
            objects: vec![object],
            placements: Placements::Poses(vec![pose]),
            camera_elevation_deg: elevation_deg,
            object_yaw_deg: yaw_deg,
            seed,
        }
    }
}

const CAMERA_DISTANCE: f64 = 0.7;
const DROP_RANGE: f64 = 0.12;
const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

fn aabbs_overlap(a: &(Vector3<f64>, Vector3<f64>), b: &(Vector3<f64>, Vector3<f64>)) -> bool {
    (0..3).all(|i| a.0[i] <= b.1[i] && b.0[i] <= a.1[i])
}

/// Real camera at the requested elevation, looking at the table center from
/// the +x side.
pub fn real_camera(elevation_deg: f64) -> Result<CameraModel> {
    let el = elevation_deg.to_radians();
    let eye = Vector3::new(CAMERA_DISTANCE * el.cos(), 0.0, CAMERA_DISTANCE * el.sin());
    // straight-down view: the usual world-up reference degenerates
    let up = if el.cos().abs() < 1e-6 { Vector3::x() } else { Vector3::z() };
    let pose = look_at(&eye, &Vector3::zeros(), &up)?;
    Ok(CameraModel::default_vga(pose))
}

/// Instantiate ground truth and the real camera for a scene spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<(SceneEstimate, CameraModel)> {
    let mut objects: Vec<(TriangleMesh, Pose)> = Vec::new();
    match &spec.placements {
        Placements::Poses(poses) => {
            if poses.len() != spec.objects.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} poses for {} objects",
                    poses.len(),
                    spec.objects.len()
                )));
            }
            for (obj, pose) in spec.objects.iter().zip(poses) {
                objects.push((obj.mesh(), *pose));
            }
        }
        Placements::RandomDrop => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut aabbs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::new();
            for obj in &spec.objects {
                let mesh = obj.mesh();
                let mut placed = false;
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let pose = Pose::new(
                        UnitQuaternion::from_axis_angle(
                            &Vector3::z_axis(),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        ),
                        Vector3::new(
                            rng.gen_range(-DROP_RANGE..DROP_RANGE),
                            rng.gen_range(-DROP_RANGE..DROP_RANGE),
                            obj.half_height(),
                        ),
                    );
                    let world = TriangleMesh {
                        vertices: mesh.vertices.clone(),
                        triangles: mesh.triangles.clone(),
                        pose: pose.compose(&mesh.pose),
                    };
                    let aabb = world.world_aabb();
                    if aabbs.iter().all(|b| !aabbs_overlap(&aabb, b)) {
                        aabbs.push(aabb);
                        objects.push((mesh.clone(), pose));
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(Error::Placement(MAX_PLACEMENT_ATTEMPTS));
                }
            }
        }
    }
    let truth = SceneEstimate::new(objects, Plane::horizontal(0.0));
    Ok((truth, real_camera(spec.camera_elevation_deg)?))
}

/// Close the jaws along the jaw axis and return the index of the object
/// grasped with force closure, if any.
///
/// For finger offsets along the approach axis, rays are cast inward from
/// both jaw positions. Success requires a sample where both rays contact the
/// same object with surface normals inside the friction cone `arctan(mu)`
/// around the closing directions, and no sampled ray may touch a different
/// object (the swept jaw volume must be clear).
pub fn oracle_contact(
    g: &GraspCandidate,
    truth: &SceneEstimate,
    mu: f64,
    gp: &GripperParams,
) -> Option<usize> {
    let pose = g.world_pose.as_ref()?;
    if truth.objects.is_empty() {
        return None;
    }
    let mut obj_scene = truth.clone();
    obj_scene.render_support_plane = false; // jaws vs objects only
    let bvh = build_bvh(&obj_scene).ok()?;
    let rot = pose.rotation_matrix();
    let jaw = rot.column(0).into_owned();
    let approach = rot.column(2).into_owned();
    // jaws open fully before closing, as a real executor would; planned
    // widths are estimates and systematically narrow on curved silhouettes
    let w = gp.max_width;
    let cone = mu.atan();

    let steps = 8;
    let mut touched: Option<usize> = None;
    let mut closed: Option<usize> = None;
    for i in 0..=steps {
        let s = gp.finger_length * i as f64 / steps as f64;
        let center = pose.translation - approach * s;
        let mut pair: Vec<(f64, usize, Vector3<f64>, Vector3<f64>)> = Vec::new();
        for side in [-1.0, 1.0] {
            let origin = center + jaw * (side * w / 2.0);
            let dir = -jaw * side; // closing direction
            if let Some(hit) = bvh.nearest_hit(&Ray { origin, dir }) {
                if hit.t <= w {
                    let tri = &bvh.triangles[hit.triangle];
                    pair.push((hit.t, tri.object, tri.normal(), dir));
                }
            }
        }
        for (_, obj, _, _) in &pair {
            match touched {
                None => touched = Some(*obj),
                Some(prev) if prev == *obj => {}
                // a second object inside the closing sweep: not clear
                Some(_) => return None,
            }
        }
        if pair.len() == 2 {
            let (ta, oa, na, da) = pair[0];
            let (tb, ob, nb, db) = pair[1];
            // force closure: both contacts on one object, jaws able to
            // close onto it, and each closing direction within the
            // friction cone of the inward surface normal
            if oa == ob
                && ta + tb <= w
                && da.dot(&-na).clamp(-1.0, 1.0).acos() <= cone
                && db.dot(&-nb).clamp(-1.0, 1.0).acos() <= cone
            {
                closed = Some(oa);
            }
        }
    }
    closed
}

/// Binary success: force-closure contact on some object.
pub fn oracle_success(g: &GraspCandidate, truth: &SceneEstimate, mu: f64, gp: &GripperParams) -> bool {
    oracle_contact(g, truth, mu, gp).is_some()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub scene_id: usize,
    pub method: Method,
    pub object: String,
    pub elevation_deg: f64,
    pub yaw_deg: f64,
    pub no_grasp: bool,
    pub success: bool,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClutterResult {
    pub scene_id: usize,
    pub method: Method,
    pub elevation_deg: f64,
    pub cleared: usize,
    pub total: usize,
    pub attempts: usize,
    pub clearance: f64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trials: Vec<TrialResult>,
    pub clutter: Vec<ClutterResult>,
}

impl ExperimentReport {
    /// Success rate of one method over the single-object trials.
    pub fn success_rate(&self, method: Method) -> f64 {
        let ours: Vec<_> = self.trials.iter().filter(|t| t.method == method).collect();
        if ours.is_empty() {
            return 0.0;
        }
        ours.iter().filter(|t| t.success).count() as f64 / ours.len() as f64
    }

    pub fn success_rate_at(&self, method: Method, elevation_deg: f64) -> f64 {
        let ours: Vec<_> = self
            .trials
            .iter()
            .filter(|t| t.method == method && (t.elevation_deg - elevation_deg).abs() < 1e-9)
            .collect();
        if ours.is_empty() {
            return 0.0;
        }
        ours.iter().filter(|t| t.success).count() as f64 / ours.len() as f64
    }

    pub fn mean_clearance(&self, method: Method) -> f64 {
        let ours: Vec<_> = self.clutter.iter().filter(|c| c.method == method).collect();
        if ours.is_empty() {
            return 0.0;
        }
        ours.iter().map(|c| c.clearance).sum::<f64>() / ours.len() as f64
    }

    /// Deterministic summary table (no timing columns; those vary by run
    /// and live in the per-trial JSON).
    pub fn summary_csv(&self) -> String {
        let mut out = String::new();
        if !self.trials.is_empty() || self.clutter.is_empty() {
            out.push_str("scene_id,method,object,elevation_deg,yaw_deg,no_grasp,success\n");
            for t in &self.trials {
                out.push_str(&format!(
                    "{},{},{},{:.1},{:.1},{},{}\n",
                    t.scene_id, t.method, t.object, t.elevation_deg, t.yaw_deg, t.no_grasp, t.success
                ));
            }
        }
        if !self.clutter.is_empty() {
            out.push_str("scene_id,method,elevation_deg,cleared,total,attempts,clearance\n");
            for c in &self.clutter {
                out.push_str(&format!(
                    "{},{},{:.1},{},{},{},{:.4}\n",
                    c.scene_id, c.method, c.elevation_deg, c.cleared, c.total, c.attempts, c.clearance
                ));
            }
        }
        out
    }
}

/// One single-object trial: plan with `method` on the rendered real-camera
/// image and score against ground truth.
fn run_trial(
    scene_id: usize,
    spec: &SceneSpec,
    method: Method,
    cfg: &PipelineConfig,
) -> Result<TrialResult> {
    let (truth, cam) = generate_scene(spec)?;
    let img = render_depth(&truth, &cam)?;
    let trial_cfg = PipelineConfig {
        seed: cfg.seed ^ (scene_id as u64) << 8,
        ..cfg.clone()
    };
    let (no_grasp, success, timings) = match plan(&img, &cam, &trial_cfg, method) {
        Ok(out) => (
            false,
            oracle_success(&out.best, &truth, cfg.experiment.friction_mu, &cfg.gripper),
            out.timings,
        ),
        Err(Error::NoGrasp) => (true, false, StageTimings::default()),
        Err(e) => return Err(e),
    };
    Ok(TrialResult {
        scene_id,
        method,
        object: spec.objects[0].name(),
        elevation_deg: spec.camera_elevation_deg,
        yaw_deg: spec.object_yaw_deg,
        no_grasp,
        success,
        timings,
    })
}

/// Clutter protocol: repeatedly plan, execute via the oracle, and remove
/// grasped objects until the budget is exhausted or the table is clear.
fn run_clutter(
    scene_id: usize,
    spec: &SceneSpec,
    method: Method,
    cfg: &PipelineConfig,
) -> Result<ClutterResult> {
    let (mut truth, cam) = generate_scene(spec)?;
    let total = truth.objects.len();
    let mut cleared = 0usize;
    let mut attempts = 0usize;
    let mut timings = StageTimings::default();
    while attempts < cfg.experiment.budget && !truth.objects.is_empty() {
        let img = render_depth(&truth, &cam)?;
        let attempt_cfg = PipelineConfig {
            seed: cfg.seed ^ ((scene_id as u64) << 16) ^ (attempts as u64) << 4,
            ..cfg.clone()
        };
        let out = match plan(&img, &cam, &attempt_cfg, method) {
            Ok(out) => out,
            Err(Error::NoGrasp) => break,
            Err(e) => return Err(e),
        };
        attempts += 1;
        timings.total_s += out.timings.total_s;
        if let Some(obj) =
            oracle_contact(&out.best, &truth, cfg.experiment.friction_mu, &cfg.gripper)
        {
            truth.objects.remove(obj);
            cleared += 1;
        }
    }
    Ok(ClutterResult {
        scene_id,
        method,
        elevation_deg: spec.camera_elevation_deg,
        cleared,
        total,
        attempts,
        clearance: cleared as f64 / total as f64,
        timings,
    })
}

/// Drive the full comparison: every elevation x yaw x object (single-object
/// mode) or every elevation x seeded scene (clutter mode), all three methods
/// each. Deterministic given `cfg.seed`.
pub fn run_experiment(cfg: &PipelineConfig) -> Result<ExperimentReport> {
    let exp = &cfg.experiment;
    let mut report = ExperimentReport::default();
    if exp.clutter {
        let mut jobs = Vec::new();
        let mut scene_id = 0usize;
        for &elev in &exp.elevations_deg {
            for s in 0..exp.clutter_scenes {
                let objects: Vec<ObjectSpec> = (0..exp.clutter_objects)
                    .map(|i| standard_objects()[i % standard_objects().len()].clone())
                    .collect();
                let spec = SceneSpec {
                    objects,
                    placements: Placements::RandomDrop,
                    camera_elevation_deg: elev,
                    object_yaw_deg: 0.0,
                    seed: cfg.seed ^ ((s as u64 + 1) << 24),
                };
                for method in Method::ALL {
                    jobs.push((scene_id, spec.clone(), method));
                }
                scene_id += 1;
            }
        }
        report.clutter = jobs
            .par_iter()
            .map(|(id, spec, method)| run_clutter(*id, spec, *method, cfg))
            .collect::<Result<Vec<_>>>()?;
    } else {
        let mut jobs = Vec::new();
        let mut scene_id = 0usize;
        for &elev in &exp.elevations_deg {
            for &yaw in &exp.yaws_deg {
                for obj in standard_objects() {
                    let spec = SceneSpec::single(obj, elev, yaw, cfg.seed);
                    for method in Method::ALL {
                        jobs.push((scene_id, spec.clone(), method));
                    }
                    scene_id += 1;
                }
            }
        }
        report.trials = jobs
            .par_iter()
            .map(|(id, spec, method)| run_trial(*id, spec, *method, cfg))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(report)
}
