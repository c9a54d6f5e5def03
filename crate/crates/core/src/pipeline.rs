//! End-to-end plan orchestration: filter -> segment -> complete -> render ->
//! corrupt -> plan -> select, shared by the CLI and the experiment harness.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{complete_region, GeometricCompleter};
use crate::config::{Method, PipelineConfig};
use crate::error::{Error, Result};
use crate::filter::filter_cloud;
use crate::geometry::{depth_to_cloud, CameraModel, DepthImage, Frame, PointCloud, Pose};
use crate::grasp::{lift_grasp, plan_antipodal, reachable, select_best, GraspCandidate};
use crate::noise::{corrupt, NoiseParams};
use crate::render::{render_depth, SceneEstimate};
use crate::segmentation::{segment, Segmentation};
use crate::viewpoints::{sample_dodecahedron, sample_top_only, Intrinsics, ViewpointSet};

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub filter_s: f64,
    pub segment_s: f64,
    pub complete_s: f64,
    pub render_s: f64,
    pub plan_s: f64,
    pub total_s: f64,
}

/// Everything a plan run produces, kept for artifact dumps and tests.
#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub filtered: PointCloud,
    pub segmentation: Segmentation,
    pub regions: Vec<PointCloud>,
    pub scene: SceneEstimate,
    pub views: ViewpointSet,
    pub clean: Vec<DepthImage>,
    pub noisy: Vec<DepthImage>,
    /// Lifted candidates per viewpoint, reachability evaluated.
    pub candidates: Vec<Vec<GraspCandidate>>,
    pub best: GraspCandidate,
    pub timings: StageTimings,
}

/// Build the estimated scene from a filtered world-frame cloud.
pub fn estimate_scene(
    filtered: &PointCloud,
    view_dir: Vector3<f64>,
    cfg: &PipelineConfig,
) -> Result<(Segmentation, Vec<PointCloud>, SceneEstimate)> {
    let ws = cfg.workspace.model()?;
    let seg = segment(filtered, &cfg.segmentation)?;
    let mut regions = Vec::new();
    let mut objects = Vec::new();
    for (i, idx) in seg.regions.iter().enumerate() {
        let region = PointCloud::new(
            idx.iter().map(|&j| filtered.points[j]).collect(),
            Frame::World,
        );
        if region.len() < cfg.completion.min_points {
            log::debug!("skipping region {i}: only {} points", region.len());
            continue;
        }
        let completer = GeometricCompleter::new(
            view_dir,
            ws.support_plane,
            cfg.seed ^ (i as u64 + 1),
        )?;
        match complete_region(&region, &completer, &cfg.completion) {
            // meshes carry world-frame vertices; the estimated pose is
            // reported separately, so the scene pose stays identity
            Ok((mesh, _pose)) => {
                objects.push((mesh, Pose::identity()));
                regions.push(region);
            }
            Err(e) => log::warn!("region {i} completion failed: {e}"),
        }
    }
    if objects.is_empty() {
        return Err(Error::NoGrasp);
    }
    let mut scene = SceneEstimate::new(objects, ws.support_plane);
    scene.render_support_plane = cfg.viewpoints.render_support_plane;
    Ok((seg, regions, scene))
}

/// Plan candidates on one image and lift them into the world.
fn plan_view(
    img: &DepthImage,
    cam: &CameraModel,
    viewpoint_index: usize,
    scene: &SceneEstimate,
    cfg: &PipelineConfig,
) -> Result<Vec<GraspCandidate>> {
    let ws = cfg.workspace.model()?;
    plan_antipodal(img, cam, &cfg.gripper)
        .into_iter()
        .map(|c| {
            let mut lifted = lift_grasp(
                &GraspCandidate {
                    viewpoint_index,
                    ..c
                },
                cam,
            )?;
            lifted.reachable = reachable(&lifted, &ws, scene, &cfg.gripper);
            Ok(lifted)
        })
        .collect()
}

/// Run the full pipeline on one posed depth image.
///
/// `real-view` plans directly on the input image (the scene estimate used for
/// reachability is the bare support plane); `top-only` and `all-views` run
/// scene completion and plan on rendered virtual views with sensor noise.
pub fn plan(
    img: &DepthImage,
    cam: &CameraModel,
    cfg: &PipelineConfig,
    method: Method,
) -> Result<PlanOutput> {
    let t_total = std::time::Instant::now();
    if img.valid_count() == 0 {
        return Err(Error::EmptyInput("depth image has no valid pixels".into()));
    }
    let ws = cfg.workspace.model()?;

    if method == Method::RealView {
        let scene = SceneEstimate::new(vec![], ws.support_plane);
        let t_plan = std::time::Instant::now();
        let candidates = vec![plan_view(img, cam, 0, &scene, cfg)?];
        let plan_s = t_plan.elapsed().as_secs_f64();
        let best = select_best(&candidates)?;
        return Ok(PlanOutput {
            filtered: PointCloud::empty(Frame::World),
            segmentation: Segmentation { regions: vec![] },
            regions: vec![],
            scene,
            views: ViewpointSet {
                cameras: vec![cam.clone()],
                center: cam.position() + cam.optical_axis(),
                radius: 0.0,
            },
            clean: vec![img.clone()],
            noisy: vec![img.clone()],
            candidates,
            best,
            timings: StageTimings {
                plan_s,
                total_s: t_total.elapsed().as_secs_f64(),
                ..Default::default()
            },
        });
    }

    let t = std::time::Instant::now();
    let cloud = depth_to_cloud(img, cam, true)?;
    let filtered = filter_cloud(&cloud, &ws, &cam.position());
    let filter_s = t.elapsed().as_secs_f64();
    if filtered.is_empty() {
        return Err(Error::NoGrasp);
    }

    let t = std::time::Instant::now();
    let (segmentation, regions, scene) = estimate_scene(&filtered, cam.optical_axis(), cfg)?;
    let (segment_s, complete_s) = (0.0, t.elapsed().as_secs_f64());

    let center = scene.center();
    let up = ws.support_plane.normal;
    let intr = Intrinsics::of(cam);
    let views = match method {
        Method::TopOnly => sample_top_only(center, cfg.viewpoints.radius, up, &intr)?,
        _ => sample_dodecahedron(center, cfg.viewpoints.radius, up, None, &intr)?,
    };

    let t = std::time::Instant::now();
    let noise_base = NoiseParams {
        seed: cfg.seed,
        ..cfg.noise
    };
    let per_view: Vec<(DepthImage, DepthImage, Vec<GraspCandidate>)> = views
        .cameras
        .par_iter()
        .enumerate()
        .map(|(i, vcam)| {
            let clean = render_depth(&scene, vcam)?;
            let noisy = corrupt(&clean, &noise_base.for_viewpoint(i))?;
            let cands = plan_view(&noisy, vcam, i, &scene, cfg)?;
            Ok((clean, noisy, cands))
        })
        .collect::<Result<_>>()?;
    let render_s = t.elapsed().as_secs_f64();

    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut candidates = Vec::new();
    for (c, n, k) in per_view {
        clean.push(c);
        noisy.push(n);
        candidates.push(k);
    }
    let best = select_best(&candidates)?;

    Ok(PlanOutput {
        filtered,
        segmentation,
        regions,
        scene,
        views,
        clean,
        noisy,
        candidates,
        best,
        timings: StageTimings {
            filter_s,
            segment_s,
            complete_s,
            render_s,
            plan_s: 0.0,
            total_s: t_total.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Plane;
    use crate::geometry::look_at;
    use crate::shapes;

    /// Ground-truth box on the table rendered from an elevated camera.
    fn truth_image(elevation_deg: f64) -> (DepthImage, CameraModel, SceneEstimate) {
        let mesh = shapes::box_mesh(Vector3::new(0.05, 0.03, 0.06));
        let pose = Pose::new(
            nalgebra::UnitQuaternion::identity(),
            Vector3::new(0.0, 0.0, 0.03),
        );
        let truth = SceneEstimate::new(vec![(mesh, pose)], Plane::horizontal(0.0));
        let el = elevation_deg.to_radians();
        let eye = Vector3::new(0.7 * el.cos(), 0.0, 0.7 * el.sin());
        let up = if elevation_deg >= 89.0 { Vector3::x() } else { Vector3::z() };
        let cam_pose = look_at(&eye, &Vector3::zeros(), &up).unwrap();
        let cam = CameraModel::default_vga(cam_pose);
        let img = render_depth(&truth, &cam).unwrap();
        (img, cam, truth)
    }

    #[test]
    fn all_views_plan_finds_a_reachable_grasp_near_the_box() {
        let (img, cam, _) = truth_image(45.0);
        let cfg = PipelineConfig::default();
        let out = plan(&img, &cam, &cfg, Method::AllViews).unwrap();
        assert_eq!(out.views.len(), 6);
        assert_eq!(out.clean.len(), 6);
        assert!(out.best.reachable);
        let p = out.best.world_pose.unwrap().translation;
        assert!(
            (p - Vector3::new(0.0, 0.0, 0.03)).norm() < 0.06,
            "best grasp at {p:?}"
        );
        assert!(out.scene.objects.len() == 1);
        assert!(out.scene.objects[0].0.is_watertight());
    }

    #[test]
    fn top_only_shares_viewpoint_zero_with_all_views() {
        let (img, cam, _) = truth_image(45.0);
        let cfg = PipelineConfig::default();
        let top = plan(&img, &cam, &cfg, Method::TopOnly).unwrap();
        let all = plan(&img, &cam, &cfg, Method::AllViews).unwrap();
        assert_eq!(top.views.len(), 1);
        let (a, b) = (&top.views.cameras[0], &all.views.cameras[0]);
        assert!((a.position() - b.position()).norm() < 1e-12);
        assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-12);
        // same virtual camera and seed: identical viewpoint-0 noisy image
        assert_eq!(top.noisy[0], all.noisy[0]);
        assert_eq!(top.candidates[0], all.candidates[0]);
    }

    #[test]
    fn plan_is_deterministic() {
        let (img, cam, _) = truth_image(30.0);
        let cfg = PipelineConfig {
            seed: 33,
            ..Default::default()
        };
        let a = plan(&img, &cam, &cfg, Method::AllViews).unwrap();
        let b = plan(&img, &cam, &cfg, Method::AllViews).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.noisy, b.noisy);
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn real_view_plans_on_the_input_image() {
        let (img, cam, _) = truth_image(90.0);
        let cfg = PipelineConfig::default();
        let out = plan(&img, &cam, &cfg, Method::RealView).unwrap();
        assert_eq!(out.views.len(), 1);
        assert_eq!(out.clean[0], img);
        assert!(out.best.reachable);
        // approach axis is the real camera's optical axis
        let approach = out
            .best
            .world_pose
            .unwrap()
            .rotation_matrix()
            .column(2)
            .into_owned();
        assert!((approach - cam.optical_axis()).norm() < 1e-9);
    }

    #[test]
    fn empty_image_is_rejected() {
        let (_, cam, _) = truth_image(45.0);
        let img = DepthImage::new(cam.width, cam.height);
        let cfg = PipelineConfig::default();
        assert!(matches!(
            plan(&img, &cam, &cfg, Method::AllViews),
            Err(Error::EmptyInput(_))
        ));
    }
}
