//! Command-line front end: plan grasps on one posed depth image, run the
//! synthetic experiment suite, or re-run individual stages on saved
//! artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use tabletop_grasp::config::{Method, PipelineConfig};
use tabletop_grasp::error::Error;
use tabletop_grasp::filter::Plane;
use tabletop_grasp::geometry::{project, CameraModel, DepthImage, Frame, PointCloud, Pose};
use tabletop_grasp::harness::run_experiment;
use tabletop_grasp::io;
use tabletop_grasp::pipeline::{plan, PlanOutput};
use tabletop_grasp::render::{render_depth, SceneEstimate};
use tabletop_grasp::segmentation::segment;
use tabletop_grasp::Result;

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum LogLevel {
    Quiet,
    Normal,
    Debug,
}

#[derive(Parser)]
#[command(name = "tabletop-grasp", version, about = "Grasp planning on virtual views of a completed tabletop scene")]
struct Cli {
    /// Pipeline configuration file (.toml or .json); defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config method: real-view, top-only or all-views.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Output directory; a run subdirectory is created inside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "normal")]
    log: LogLevel,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline on one posed depth image (.png + camera sidecar,
    /// or .pcd with --camera) and dump all stage artifacts.
    Plan {
        input: PathBuf,
        /// Camera sidecar JSON; defaults to the input path with a .json
        /// extension.
        #[arg(long)]
        camera: Option<PathBuf>,
    },
    /// Run the synthetic benchmark over all methods and write summary.csv.
    Experiment,
    /// Segment a filtered cloud (.pcd) into per-object region clouds.
    Segment { input: PathBuf },
    /// Shape-complete one region cloud (.ply or .pcd) into a watertight mesh.
    Complete {
        input: PathBuf,
        /// Camera sidecar JSON for the observing view.
        #[arg(long)]
        camera: PathBuf,
        /// Region index, used to derive the per-region sampling seed.
        #[arg(long, default_value_t = 0)]
        region_index: usize,
    },
    /// Render clean depth images of a saved scene from saved viewpoints.
    Render {
        scene: PathBuf,
        viewpoints: PathBuf,
    },
}

/// Scene manifest written by `plan` and consumed by `render`: support plane
/// plus mesh files relative to the manifest.
#[derive(Debug, Serialize, Deserialize)]
struct SceneDump {
    plane: Plane,
    render_support_plane: bool,
    meshes: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = match cli.log {
        LogLevel::Quiet => log::LevelFilter::Off,
        LogLevel::Normal => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(filter).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::NoGrasp => 4,
                Error::Config(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = &cli.method {
        cfg.method = m.parse()?;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    match &cli.cmd {
        Cmd::Plan { input, camera } => cmd_plan(&cfg, input, camera.as_deref()),
        Cmd::Experiment => cmd_experiment(&cfg),
        Cmd::Segment { input } => cmd_segment(&cfg, input),
        Cmd::Complete {
            input,
            camera,
            region_index,
        } => cmd_complete(&cfg, input, camera, *region_index),
        Cmd::Render { scene, viewpoints } => cmd_render(scene, viewpoints),
    }
}

/// Create `<out>/<config digest>-<unix seconds>/` and drop a manifest there.
fn make_run_dir(cfg: &PipelineConfig, command: &str) -> Result<PathBuf> {
    let base = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let dir = base.join(format!("{}-{stamp}", cfg.digest()));
    std::fs::create_dir_all(&dir)?;
    let manifest = serde_json::json!({
        "command": command,
        "config_digest": cfg.digest(),
        "config": cfg,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(dir)
}

fn load_input(input: &Path, camera: Option<&Path>) -> Result<(DepthImage, CameraModel)> {
    let ext = input
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => {
            let img = io::read_depth_png(input)?;
            let sidecar = camera
                .map(Path::to_path_buf)
                .unwrap_or_else(|| input.with_extension("json"));
            let cam = io::read_sidecar(&sidecar)?;
            if cam.width != img.width || cam.height != img.height {
                return Err(Error::InvalidArgument(format!(
                    "camera is {}x{} but image is {}x{}",
                    cam.width, cam.height, img.width, img.height
                )));
            }
            Ok((img, cam))
        }
        "pcd" | "ply" => {
            let sidecar = camera.ok_or_else(|| {
                Error::InvalidArgument("--camera is required for point cloud input".into())
            })?;
            let cam = io::read_sidecar(sidecar)?;
            let cloud = if ext == "pcd" {
                io::read_pcd(input)?
            } else {
                io::read_ply(input)?
            };
            Ok((cloud_to_depth(&cloud, &cam)?, cam))
        }
        other => Err(Error::InvalidArgument(format!(
            "unsupported input extension {other:?} (expected .png, .pcd or .ply)"
        ))),
    }
}

/// Project a world-frame cloud into the camera, keeping the nearest point
/// per pixel.
fn cloud_to_depth(cloud: &PointCloud, cam: &CameraModel) -> Result<DepthImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud has no points".into()));
    }
    let to_cam = cam.pose.inverse();
    let mut img = DepthImage::new(cam.width, cam.height);
    for p in &cloud.points {
        let pc = to_cam.transform_point(p);
        let Ok((u, v, d)) = project(&pc, cam) else {
            continue;
        };
        let (ui, vi) = (u.round() as i64, v.round() as i64);
        if ui < 0 || vi < 0 || ui >= cam.width as i64 || vi >= cam.height as i64 {
            continue;
        }
        let (ui, vi) = (ui as usize, vi as usize);
        let old = img.get(ui, vi);
        if old == 0.0 || d < old {
            img.set(ui, vi, d);
        }
    }
    Ok(img)
}

fn dump_plan(dir: &Path, out: &PlanOutput, cfg: &PipelineConfig) -> Result<()> {
    io::write_pcd(&dir.join("filtered.pcd"), &out.filtered)?;
    let regions_dir = dir.join("regions");
    let meshes_dir = dir.join("meshes");
    let views_dir = dir.join("views");
    std::fs::create_dir_all(&regions_dir)?;
    std::fs::create_dir_all(&meshes_dir)?;
    std::fs::create_dir_all(&views_dir)?;

    for (i, region) in out.regions.iter().enumerate() {
        io::write_ply(&regions_dir.join(format!("region_{i}.ply")), region)?;
    }
    let mut mesh_names = Vec::new();
    for (i, (mesh, _pose)) in out.scene.objects.iter().enumerate() {
        let name = format!("meshes/region_{i}.stl");
        io::write_stl(&dir.join(&name), mesh)?;
        mesh_names.push(name);
    }
    let scene_dump = SceneDump {
        plane: out.scene.support_plane,
        render_support_plane: out.scene.render_support_plane,
        meshes: mesh_names,
    };
    std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&scene_dump)?)?;
    io::write_viewpoints(&dir.join("viewpoints.json"), &out.views)?;

    for i in 0..out.views.len() {
        io::write_depth_png(&views_dir.join(format!("view_{i}_clean.png")), &out.clean[i])?;
        io::write_depth_png(&views_dir.join(format!("view_{i}_noisy.png")), &out.noisy[i])?;
        io::write_sidecar(
            &views_dir.join(format!("view_{i}.json")),
            &out.views.cameras[i],
        )?;
    }
    let flat: Vec<_> = out.candidates.iter().flatten().cloned().collect();
    io::write_candidates_csv(&dir.join("candidates.csv"), &flat)?;
    std::fs::write(
        dir.join("best_grasp.json"),
        serde_json::to_string_pretty(&out.best)?,
    )?;
    std::fs::write(
        dir.join("timings.json"),
        serde_json::to_string_pretty(&out.timings)?,
    )?;
    log::info!("method {}: {} candidates across {} views", cfg.method, flat.len(), out.views.len());
    Ok(())
}

fn cmd_plan(cfg: &PipelineConfig, input: &Path, camera: Option<&Path>) -> Result<()> {
    let (img, cam) = load_input(input, camera)?;
    // plan before touching the filesystem so a failed run leaves no
    // half-written artifact directory
    let out = plan(&img, &cam, cfg, cfg.method)?;
    let dir = make_run_dir(cfg, "plan")?;
    dump_plan(&dir, &out, cfg)?;
    let pose = out.best.world_pose.expect("selected grasp is lifted");
    println!(
        "best grasp: view {} pixel ({}, {}) width {:.3} m quality {:.3}",
        out.best.viewpoint_index, out.best.u, out.best.v, out.best.width, out.best.quality
    );
    println!(
        "world pose: t = [{:.4}, {:.4}, {:.4}], q = [{:.4}, {:.4}, {:.4}, {:.4}]",
        pose.translation.x,
        pose.translation.y,
        pose.translation.z,
        pose.rotation.w,
        pose.rotation.i,
        pose.rotation.j,
        pose.rotation.k,
    );
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_experiment(cfg: &PipelineConfig) -> Result<()> {
    let report = run_experiment(cfg)?;
    let dir = make_run_dir(cfg, "experiment")?;
    std::fs::write(dir.join("summary.csv"), report.summary_csv())?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    for method in Method::ALL {
        if cfg.experiment.clutter {
            println!(
                "{method}: mean clearance {:.3} over {} scenes",
                report.mean_clearance(method),
                report.clutter.iter().filter(|c| c.method == method).count(),
            );
        } else {
            let mut per_elev = String::new();
            for &e in &cfg.experiment.elevations_deg {
                per_elev.push_str(&format!(
                    " {e:.0}deg={:.2}",
                    report.success_rate_at(method, e)
                ));
            }
            println!(
                "{method}: success rate {:.3} ({per_elev} )",
                report.success_rate(method)
            );
        }
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_segment(cfg: &PipelineConfig, input: &Path) -> Result<()> {
    let cloud = io::read_pcd(input)?;
    let seg = segment(&cloud, &cfg.segmentation)?;
    let dir = make_run_dir(cfg, "segment")?;
    let regions_dir = dir.join("regions");
    std::fs::create_dir_all(&regions_dir)?;
    for (i, idx) in seg.regions.iter().enumerate() {
        let region = PointCloud::new(
            idx.iter().map(|&j| cloud.points[j]).collect(),
            Frame::World,
        );
        io::write_ply(&regions_dir.join(format!("region_{i}.ply")), &region)?;
    }
    println!("{} regions from {} points", seg.regions.len(), cloud.len());
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_complete(
    cfg: &PipelineConfig,
    input: &Path,
    camera: &Path,
    region_index: usize,
) -> Result<()> {
    use tabletop_grasp::completion::{complete_region, GeometricCompleter};
    let region = match input.extension().and_then(|e| e.to_str()) {
        Some("pcd") => io::read_pcd(input)?,
        _ => io::read_ply(input)?,
    };
    let cam = io::read_sidecar(camera)?;
    let ws = cfg.workspace.model()?;
    let completer = GeometricCompleter::new(
        cam.optical_axis(),
        ws.support_plane,
        cfg.seed ^ (region_index as u64 + 1),
    )?;
    let (mesh, pose) = complete_region(&region, &completer, &cfg.completion)?;
    let dir = make_run_dir(cfg, "complete")?;
    io::write_stl(&dir.join(format!("region_{region_index}.stl")), &mesh)?;
    std::fs::write(
        dir.join(format!("region_{region_index}_pose.json")),
        serde_json::to_string_pretty(&pose)?,
    )?;
    println!(
        "mesh: {} vertices, {} triangles, watertight: {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        mesh.is_watertight()
    );
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_render(scene_path: &Path, viewpoints_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(scene_path)?;
    let dump: SceneDump = serde_json::from_str(&text)?;
    let base = scene_path.parent().unwrap_or(Path::new("."));
    let mut objects = Vec::new();
    for name in &dump.meshes {
        objects.push((io::read_stl(&base.join(name))?, Pose::identity()));
    }
    let mut scene = SceneEstimate::new(objects, dump.plane);
    scene.render_support_plane = dump.render_support_plane;
    let views = io::read_viewpoints(viewpoints_path)?;
    let out_dir = base.join("rendered");
    std::fs::create_dir_all(&out_dir)?;
    for (i, cam) in views.cameras.iter().enumerate() {
        let img = render_depth(&scene, cam)?;
        io::write_depth_png(&out_dir.join(format!("view_{i}_clean.png")), &img)?;
    }
    println!(
        "rendered {} views of {} objects to {}",
        views.len(),
        scene.objects.len(),
        out_dir.display()
    );
    Ok(())
}
