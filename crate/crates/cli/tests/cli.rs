//! End-to-end CLI behavior: exit codes, artifact layout, and stage chaining
//! against the single binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::Vector3;
use tabletop_grasp::geometry::{CameraModel, Frame, PointCloud};
use tabletop_grasp::harness::{generate_scene, ObjectSpec, SceneSpec};
use tabletop_grasp::io;
use tabletop_grasp::render::render_depth;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tabletop-grasp"));
    c.args(["--log", "quiet"]);
    c
}

/// Render one box scene and write `input.png` + `input.json` into `dir`.
fn write_input(dir: &Path) -> (PathBuf, CameraModel) {
    let spec = SceneSpec::single(
        ObjectSpec::Box { extents: [0.05, 0.03, 0.06] },
        45.0,
        20.0,
        7,
    );
    let (truth, cam) = generate_scene(&spec).unwrap();
    let img = render_depth(&truth, &cam).unwrap();
    let png = dir.join("input.png");
    io::write_depth_png(&png, &img).unwrap();
    io::write_sidecar(&dir.join("input.json"), &cam).unwrap();
    (png, cam)
}

/// The single run directory created under `out`.
fn run_dir(out: &Path) -> PathBuf {
    let mut entries: Vec<_> = std::fs::read_dir(out).unwrap().collect();
    assert_eq!(entries.len(), 1, "expected exactly one run directory");
    entries.pop().unwrap().unwrap().path()
}

#[test]
fn plan_writes_all_artifacts_and_chains_into_render_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (png, _cam) = write_input(dir.path());
    let out = dir.path().join("out");

    let status = bin()
        .args(["--seed", "3", "--method", "all-views", "--out"])
        .arg(&out)
        .arg("plan")
        .arg(&png)
        .status()
        .unwrap();
    assert!(status.success());

    let run = run_dir(&out);
    for name in [
        "manifest.json",
        "filtered.pcd",
        "scene.json",
        "viewpoints.json",
        "candidates.csv",
        "best_grasp.json",
        "timings.json",
        "regions/region_0.ply",
        "meshes/region_0.stl",
        "views/view_0_clean.png",
        "views/view_0_noisy.png",
        "views/view_5_clean.png",
    ] {
        assert!(run.join(name).exists(), "missing artifact {name}");
    }
    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("best_grasp.json")).unwrap())
            .unwrap();
    assert_eq!(best["reachable"], serde_json::Value::Bool(true));

    // chaining: render the saved scene from the saved viewpoints; meshes go
    // through an f32 STL round trip, so compare depths within the 1 mm PNG
    // quantization rather than byte-for-byte
    let status = bin()
        .arg("render")
        .arg(run.join("scene.json"))
        .arg(run.join("viewpoints.json"))
        .status()
        .unwrap();
    assert!(status.success());
    for i in 0..6 {
        let a = io::read_depth_png(&run.join(format!("views/view_{i}_clean.png"))).unwrap();
        let b = io::read_depth_png(&run.join(format!("rendered/view_{i}_clean.png"))).unwrap();
        assert_eq!(a.width, b.width);
        let diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1.5e-3, "view {i} differs by {diff} m");
    }

    // chaining: re-complete the saved region with the pipeline's region-0
    // seed; the STL must come back watertight
    let complete_out = dir.path().join("complete");
    let status = bin()
        .args(["--seed", "3", "--out"])
        .arg(&complete_out)
        .arg("complete")
        .arg(run.join("regions/region_0.ply"))
        .arg("--camera")
        .arg(dir.path().join("input.json"))
        .args(["--region-index", "0"])
        .status()
        .unwrap();
    assert!(status.success());
    let stl = run_dir(&complete_out).join("region_0.stl");
    let mesh = io::read_stl(&stl).unwrap();
    assert!(mesh.is_watertight());
    // same seed path as the monolithic run: identical geometry up to f32
    let planned = io::read_stl(&run.join("meshes/region_0.stl")).unwrap();
    assert_eq!(mesh.triangles.len(), planned.triangles.len());
}

#[test]
fn segment_splits_a_saved_cloud_into_region_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut pts = Vec::new();
    for i in 0..200 {
        let t = i as f64 / 200.0;
        pts.push(Vector3::new(t * 0.04, 0.0, 0.02));
        pts.push(Vector3::new(t * 0.04, 0.2, 0.02));
    }
    let pcd = dir.path().join("cloud.pcd");
    io::write_pcd(&pcd, &PointCloud::new(pts, Frame::World)).unwrap();
    let out = dir.path().join("out");
    let status = bin().arg("--out").arg(&out).arg("segment").arg(&pcd).status().unwrap();
    assert!(status.success());
    let run = run_dir(&out);
    assert!(run.join("regions/region_0.ply").exists());
    assert!(run.join("regions/region_1.ply").exists());
    assert!(!run.join("regions/region_2.ply").exists());
}

#[test]
fn exit_codes_distinguish_failure_modes() {
    let dir = tempfile::tempdir().unwrap();

    // 2: unreadable input
    let status = bin().arg("plan").arg(dir.path().join("nope.png")).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // 2: segmenting an empty cloud
    let empty = dir.path().join("empty.pcd");
    io::write_pcd(&empty, &PointCloud::empty(Frame::World)).unwrap();
    let status = bin().arg("segment").arg(&empty).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // 3: malformed config
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 1\n").unwrap();
    let status = bin().arg("--config").arg(&bad).arg("experiment").status().unwrap();
    assert_eq!(status.code(), Some(3));

    // 4: nothing to grasp on a bare table
    let (png, _cam) = write_input(dir.path());
    let plane_scene = tabletop_grasp::render::SceneEstimate::new(
        vec![],
        tabletop_grasp::filter::Plane::horizontal(0.0),
    );
    let cam = io::read_sidecar(&dir.path().join("input.json")).unwrap();
    let bare = render_depth(&plane_scene, &cam).unwrap();
    io::write_depth_png(&png, &bare).unwrap();
    let out = dir.path().join("out4");
    let status = bin().arg("--out").arg(&out).arg("plan").arg(&png).status().unwrap();
    assert_eq!(status.code(), Some(4));
    // failure before artifact creation: no run directory
    assert!(!out.exists());
}
