//! File formats: depth PNG + camera sidecar, PCD / PLY point clouds,
//! STL / OBJ mesh export, RLE voxel-grid dumps, viewpoint JSON, and the
//! grasp-candidate CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, DepthImage, Frame, PointCloud, Pose};
use crate::grasp::GraspCandidate;
use crate::mesh::TriangleMesh;
use crate::viewpoints::ViewpointSet;
use crate::voxel::VoxelGrid;

// ---------------------------------------------------------------- depth PNG

/// Write a depth image as 16-bit grayscale PNG, millimeter quantization.
/// Invalid pixels (0.0) map to 0; depths are clamped to 65.535 m.
pub fn write_depth_png(path: &Path, img: &DepthImage) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        img.width as u32,
        img.height as u32,
    );
    for (u, v, px) in buf.enumerate_pixels_mut() {
        let mm = (img.get(u as usize, v as usize) * 1000.0).round();
        *px = image::Luma([mm.clamp(0.0, 65535.0) as u16]);
    }
    buf.save(path)?;
    Ok(())
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = DepthImage::new(w, h);
    for (u, v, px) in img.enumerate_pixels() {
        out.set(u as usize, v as usize, px.0[0] as f64 / 1000.0);
    }
    Ok(out)
}

/// JSON sidecar schema: intrinsics plus the camera-to-world pose.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraSidecar {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Unit quaternion (w, x, y, z).
    pub rotation: [f64; 4],
    /// Translation in meters.
    pub translation: [f64; 3],
}

impl CameraSidecar {
    pub fn of(cam: &CameraModel) -> Self {
        let q = cam.pose.rotation.quaternion();
        CameraSidecar {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: [q.w, q.i, q.j, q.k],
            translation: cam.pose.translation.into(),
        }
    }

    pub fn camera(&self) -> Result<CameraModel> {
        let [qw, qx, qy, qz] = self.rotation;
        let pose = Pose::from_parts(qw, qx, qy, qz, Vector3::from(self.translation));
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)
    }
}

pub fn write_sidecar(path: &Path, cam: &CameraModel) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, &CameraSidecar::of(cam))?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<CameraModel> {
    let f = BufReader::new(File::open(path)?);
    let sc: CameraSidecar = serde_json::from_reader(f)?;
    sc.camera()
}

// --------------------------------------------------------------------- PCD

/// ASCII PCD (x y z float fields), meters.
pub fn write_pcd(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    let n = cloud.len();
    write!(
        f,
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n\
         FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n\
         WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    )?;
    for p in &cloud.points {
        writeln!(f, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
    }
    Ok(())
}

pub fn read_pcd(path: &Path) -> Result<PointCloud> {
    let f = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    let mut in_data = false;
    let mut expected = None;
    for line in f.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if let Some(rest) = line.strip_prefix("POINTS") {
                expected = Some(rest.trim().parse::<usize>().map_err(|e| {
                    Error::Format(format!("pcd: bad POINTS count: {e}"))
                })?);
            } else if let Some(rest) = line.strip_prefix("DATA") {
                if rest.trim() != "ascii" {
                    return Err(Error::Format("pcd: only DATA ascii supported".into()));
                }
                in_data = true;
            }
            continue;
        }
        let mut it = line.split_whitespace().map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Format(format!("pcd: bad float {t:?}: {e}")))
        });
        match (it.next(), it.next(), it.next()) {
            (Some(x), Some(y), Some(z)) => points.push(Vector3::new(x?, y?, z?)),
            _ => return Err(Error::Format(format!("pcd: short row {line:?}"))),
        }
    }
    if let Some(n) = expected {
        if n != points.len() {
            return Err(Error::Format(format!(
                "pcd: POINTS {n} but {} rows",
                points.len()
            )));
        }
    }
    Ok(PointCloud::new(points, Frame::World))
}

// --------------------------------------------------------------------- PLY

/// Binary little-endian PLY with float32 vertex positions, meters.
pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write!(
        f,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )?;
    for p in &cloud.points {
        for c in [p.x, p.y, p.z] {
            f.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let mut f = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    // header is ASCII lines terminated by "end_header"
    loop {
        let mut line = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            f.read_exact(&mut byte)
                .map_err(|_| Error::Format("ply: truncated header".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            line.push(byte[0]);
        }
        let line = String::from_utf8_lossy(&line).trim().to_string();
        let done = line == "end_header";
        header.push(line);
        if done {
            break;
        }
    }
    if header.first().map(String::as_str) != Some("ply") {
        return Err(Error::Format("ply: missing magic".into()));
    }
    if !header.iter().any(|l| l == "format binary_little_endian 1.0") {
        return Err(Error::Format("ply: only binary_little_endian supported".into()));
    }
    let n = header
        .iter()
        .find_map(|l| l.strip_prefix("element vertex "))
        .ok_or_else(|| Error::Format("ply: missing vertex element".into()))?
        .parse::<usize>()
        .map_err(|e| Error::Format(format!("ply: bad vertex count: {e}")))?;
    let mut points = Vec::with_capacity(n);
    let mut buf = [0u8; 12];
    for _ in 0..n {
        f.read_exact(&mut buf)
            .map_err(|_| Error::Format("ply: truncated vertex data".into()))?;
        let x = f32::from_le_bytes(buf[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(buf[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(buf[8..12].try_into().unwrap());
        points.push(Vector3::new(x as f64, y as f64, z as f64));
    }
    Ok(PointCloud::new(points, Frame::World))
}

// --------------------------------------------------------------- STL / OBJ

/// Binary STL of the mesh in world coordinates.
pub fn write_stl(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&[0u8; 80])?;
    f.write_all(&(mesh.triangles.len() as u32).to_le_bytes())?;
    let verts = mesh.world_vertices();
    for tri in &mesh.triangles {
        let [a, b, c] = [
            verts[tri[0] as usize],
            verts[tri[1] as usize],
            verts[tri[2] as usize],
        ];
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 1e-12 { n.normalize() } else { Vector3::zeros() };
        for v in [n, a, b, c] {
            for comp in [v.x, v.y, v.z] {
                f.write_all(&(comp as f32).to_le_bytes())?;
            }
        }
        f.write_all(&[0u8; 2])?; // attribute byte count
    }
    Ok(())
}

/// Binary STL back to an indexed mesh: vertices welded by exact f32 bits.
pub fn read_stl(path: &Path) -> Result<TriangleMesh> {
    let mut f = BufReader::new(File::open(path)?);
    let mut head = [0u8; 84];
    f.read_exact(&mut head)
        .map_err(|_| Error::Format("stl: truncated header".into()))?;
    let count = u32::from_le_bytes(head[80..84].try_into().unwrap()) as usize;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut index: std::collections::HashMap<[u32; 3], u32> = std::collections::HashMap::new();
    let mut triangles = Vec::with_capacity(count);
    let mut rec = [0u8; 50];
    for _ in 0..count {
        f.read_exact(&mut rec)
            .map_err(|_| Error::Format("stl: truncated facet".into()))?;
        let mut tri = [0u32; 3];
        for (k, t) in tri.iter_mut().enumerate() {
            let off = 12 + 12 * k; // skip the normal
            let bits = [
                u32::from_le_bytes(rec[off..off + 4].try_into().unwrap()),
                u32::from_le_bytes(rec[off + 4..off + 8].try_into().unwrap()),
                u32::from_le_bytes(rec[off + 8..off + 12].try_into().unwrap()),
            ];
            *t = *index.entry(bits).or_insert_with(|| {
                vertices.push(Vector3::new(
                    f32::from_bits(bits[0]) as f64,
                    f32::from_bits(bits[1]) as f64,
                    f32::from_bits(bits[2]) as f64,
                ));
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(tri);
    }
    TriangleMesh::new(vertices, triangles, Pose::identity())
}

/// ASCII OBJ of the mesh in world coordinates.
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for v in mesh.world_vertices() {
        writeln!(f, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(f, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

// ----------------------------------------------------------------- RLE grid

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridDump {
    pub dim: usize,
    pub voxel_size: f64,
    pub origin: [f64; 3],
    /// Run-length pairs (count, value) over x-fastest cell order.
    pub runs: Vec<(usize, f64)>,
}

pub fn write_grid_rle(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for &v in grid.values() {
        match runs.last_mut() {
            Some((n, last)) if *last == v => *n += 1,
            _ => runs.push((1, v)),
        }
    }
    let dump = GridDump {
        dim: grid.dim,
        voxel_size: grid.voxel_size,
        origin: grid.origin.into(),
        runs,
    };
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer(f, &dump)?;
    Ok(())
}

pub fn read_grid_rle(path: &Path) -> Result<VoxelGrid> {
    let f = BufReader::new(File::open(path)?);
    let dump: GridDump = serde_json::from_reader(f)?;
    let mut grid = VoxelGrid::new(dump.dim, dump.voxel_size, Vector3::from(dump.origin))?;
    let total: usize = dump.runs.iter().map(|(n, _)| n).sum();
    if total != dump.dim * dump.dim * dump.dim {
        return Err(Error::Format(format!(
            "grid rle: {total} cells encoded, grid has {}",
            dump.dim.pow(3)
        )));
    }
    let mut i = 0;
    let values = grid.values_mut();
    for (n, v) in dump.runs {
        values[i..i + n].fill(v);
        i += n;
    }
    Ok(grid)
}

// ----------------------------------------------------------- viewpoint JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewpointDump {
    pub center: [f64; 3],
    pub radius: f64,
    pub cameras: Vec<CameraSidecar>,
}

pub fn write_viewpoints(path: &Path, set: &ViewpointSet) -> Result<()> {
    let dump = ViewpointDump {
        center: set.center.into(),
        radius: set.radius,
        cameras: set.cameras.iter().map(CameraSidecar::of).collect(),
    };
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, &dump)?;
    Ok(())
}

pub fn read_viewpoints(path: &Path) -> Result<ViewpointSet> {
    let f = BufReader::new(File::open(path)?);
    let dump: ViewpointDump = serde_json::from_reader(f)?;
    Ok(ViewpointSet {
        cameras: dump
            .cameras
            .iter()
            .map(CameraSidecar::camera)
            .collect::<Result<Vec<_>>>()?,
        center: Vector3::from(dump.center),
        radius: dump.radius,
    })
}

// ------------------------------------------------------------ candidate CSV

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRow {
    viewpoint: usize,
    u: usize,
    v: usize,
    angle_rad: f64,
    depth_m: f64,
    quality: f64,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    width_m: f64,
    reachable: bool,
}

impl CandidateRow {
    fn of(c: &GraspCandidate) -> Self {
        let (t, q) = match &c.world_pose {
            Some(p) => (p.translation, *p.rotation.quaternion()),
            None => (Vector3::zeros(), nalgebra::Quaternion::identity()),
        };
        CandidateRow {
            viewpoint: c.viewpoint_index,
            u: c.u,
            v: c.v,
            angle_rad: c.angle,
            depth_m: c.depth,
            quality: c.quality,
            x: t.x,
            y: t.y,
            z: t.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            width_m: c.width,
            reachable: c.reachable,
        }
    }

    fn candidate(&self) -> GraspCandidate {
        GraspCandidate {
            viewpoint_index: self.viewpoint,
            u: self.u,
            v: self.v,
            angle: self.angle_rad,
            depth: self.depth_m,
            quality: self.quality,
            width: self.width_m,
            world_pose: Some(Pose::from_parts(
                self.qw,
                self.qx,
                self.qy,
                self.qz,
                Vector3::new(self.x, self.y, self.z),
            )),
            reachable: self.reachable,
        }
    }
}

pub fn write_candidates_csv(path: &Path, candidates: &[GraspCandidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in candidates {
        w.serialize(CandidateRow::of(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates_csv(path: &Path) -> Result<Vec<GraspCandidate>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<CandidateRow>() {
        out.push(row?.candidate());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use crate::shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.0..2.0),
                    )
                })
                .collect(),
            Frame::World,
        )
    }

    #[test]
    fn depth_png_round_trips_to_millimeter_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.png");
        let mut img = DepthImage::new(33, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for v in 0..21 {
            for u in 0..33 {
                if rng.gen_bool(0.8) {
                    img.set(u, v, rng.gen_range(0.2..3.0));
                }
            }
        }
        write_depth_png(&path, &img).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert_eq!(back.width, 33);
        for v in 0..21 {
            for u in 0..33 {
                assert!((back.get(u, v) - img.get(u, v)).abs() <= 0.0005 + 1e-12);
                assert_eq!(back.is_valid(u, v), img.is_valid(u, v));
            }
        }
    }

    #[test]
    fn sidecar_round_trips_the_camera() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cam.json");
        let pose = look_at(
            &Vector3::new(0.3, -0.4, 0.9),
            &Vector3::zeros(),
            &Vector3::z(),
        )
        .unwrap();
        let cam = CameraModel::default_vga(pose);
        write_sidecar(&path, &cam).unwrap();
        let back = read_sidecar(&path).unwrap();
        assert_eq!(back.width, cam.width);
        assert!((back.position() - cam.position()).norm() < 1e-12);
        assert!(back.pose.rotation.angle_to(&cam.pose.rotation) < 1e-12);
    }

    #[test]
    fn pcd_and_ply_round_trip_at_f32_precision() {
        let dir = tempdir().unwrap();
        let cloud = random_cloud(500, 7);
        for (name, write, read) in [
            (
                "c.pcd",
                write_pcd as fn(&Path, &PointCloud) -> Result<()>,
                read_pcd as fn(&Path) -> Result<PointCloud>,
            ),
            ("c.ply", write_ply, read_ply),
        ] {
            let path = dir.path().join(name);
            write(&path, &cloud).unwrap();
            let back = read(&path).unwrap();
            assert_eq!(back.len(), cloud.len());
            for (a, b) in cloud.points.iter().zip(&back.points) {
                assert!((a - b).norm() < 1e-6, "{name}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn stl_round_trips_watertight_meshes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.stl");
        let mesh = shapes::icosphere(0.05, 2);
        write_stl(&path, &mesh).unwrap();
        let back = read_stl(&path).unwrap();
        assert_eq!(back.triangles.len(), mesh.triangles.len());
        assert!(back.is_watertight());
        assert!((back.signed_volume() - mesh.signed_volume()).abs() < 1e-9);
    }

    #[test]
    fn obj_export_is_parseable_one_indexed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mesh = shapes::box_mesh(Vector3::new(0.1, 0.1, 0.1));
        write_obj(&path, &mesh).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12);
        assert!(!text.contains("f 0"));
    }

    #[test]
    fn grid_rle_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.json");
        let mut g = VoxelGrid::new(12, 0.01, Vector3::new(-0.05, 0.02, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in g.values_mut() {
            if rng.gen_bool(0.2) {
                *v = rng.gen_range(0.1..1.0f64);
            }
        }
        write_grid_rle(&path, &g).unwrap();
        let back = read_grid_rle(&path).unwrap();
        assert!(back.same_geometry(&g));
        for (i, (a, b)) in g.values().iter().zip(back.values()).enumerate() {
            assert_eq!(a, b, "cell {i}");
        }
    }

    #[test]
    fn viewpoints_round_trip() {
        use crate::viewpoints::{sample_dodecahedron, Intrinsics};
        let dir = tempdir().unwrap();
        let path = dir.path().join("views.json");
        let set = sample_dodecahedron(
            Vector3::new(0.1, 0.0, 0.0),
            0.7,
            Vector3::z(),
            None,
            &Intrinsics::vga(),
        )
        .unwrap();
        write_viewpoints(&path, &set).unwrap();
        let back = read_viewpoints(&path).unwrap();
        assert_eq!(back.cameras.len(), 6);
        for (a, b) in set.cameras.iter().zip(&back.cameras) {
            assert!((a.position() - b.position()).norm() < 1e-12);
            assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-12);
        }
    }

    #[test]
    fn candidate_csv_round_trips_and_has_the_documented_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cands.csv");
        let pose = Pose::from_parts(0.9, 0.1, 0.2, 0.3, Vector3::new(0.1, -0.2, 0.05));
        let cands = vec![GraspCandidate {
            viewpoint_index: 3,
            u: 120,
            v: 77,
            angle: 1.1,
            depth: 0.84,
            quality: 0.66,
            width: 0.031,
            world_pose: Some(pose),
            reachable: true,
        }];
        write_candidates_csv(&path, &cands).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "viewpoint,u,v,angle_rad,depth_m,quality,x,y,z,qw,qx,qy,qz,width_m,reachable"
        ));
        let back = read_candidates_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        let (a, b) = (&cands[0], &back[0]);
        assert_eq!((a.viewpoint_index, a.u, a.v), (b.viewpoint_index, b.u, b.v));
        assert!((a.quality - b.quality).abs() < 1e-12);
        let (pa, pb) = (a.world_pose.unwrap(), b.world_pose.unwrap());
        assert!((pa.translation - pb.translation).norm() < 1e-12);
        assert!(pa.rotation.angle_to(&pb.rotation) < 1e-9);
        assert!(b.reachable);
    }
}
