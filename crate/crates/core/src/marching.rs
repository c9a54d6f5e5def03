//! Marching cubes isosurface extraction over occupancy grids.
//!
//! Uses the classic 256-case tables with linear interpolation on the field
//! values. The field is zero-padded by one lattice layer so every isosurface
//! is closed. Vertices are welded per global lattice edge, which keeps the
//! output edge-manifold.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::mc_tables::{EDGE_TABLE, TRI_TABLE};
use crate::mesh::TriangleMesh;
use crate::voxel::VoxelGrid;

/// Cube corner offsets in lattice coordinates (classic ordering: corners
/// 0-3 on the lower z face counterclockwise, 4-7 above them).
const CORNERS: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Corner pairs for the 12 cube edges.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Keep interpolated vertices strictly off the lattice points so welded
/// triangles cannot collapse to zero area.
const T_CLAMP: f64 = 1e-3;

/// Extract the isosurface of `grid` at `iso`, zero-padding one layer.
/// Vertices are in world coordinates.
pub fn extract_isosurface(grid: &VoxelGrid, iso: f64) -> Result<TriangleMesh> {
    if !(0.0 < iso && iso < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "iso level must be in (0, 1), got {iso}"
        )));
    }
    let d = grid.dim;
    let lattice = d + 2; // padded field sample count per axis
    // Fields averaged from binary samples routinely tie the iso level
    // exactly; an untied value keeps vertices off the lattice points, where
    // they would otherwise pinch the surface into zero-width slits.
    let snap = iso + 0.25 * iso.min(1.0 - iso);
    let value = |ix: usize, iy: usize, iz: usize| -> f64 {
        if ix == 0 || iy == 0 || iz == 0 || ix > d || iy > d || iz > d {
            0.0
        } else {
            let v = grid.get(ix - 1, iy - 1, iz - 1);
            if v == iso {
                snap
            } else {
                v
            }
        }
    };
    let world = |ix: usize, iy: usize, iz: usize| -> Vector3<f64> {
        grid.origin
            + Vector3::new(
                (ix as f64 - 0.5) * grid.voxel_size,
                (iy as f64 - 0.5) * grid.voxel_size,
                (iz as f64 - 0.5) * grid.voxel_size,
            )
    };

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut vertex_of_edge: HashMap<(usize, usize, usize, u8), u32> = HashMap::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for cz in 0..lattice - 1 {
        for cy in 0..lattice - 1 {
            for cx in 0..lattice - 1 {
                let mut cube_index = 0usize;
                let mut vals = [0.0f64; 8];
                for (c, &(ox, oy, oz)) in CORNERS.iter().enumerate() {
                    vals[c] = value(cx + ox, cy + oy, cz + oz);
                    if vals[c] < iso {
                        cube_index |= 1 << c;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }

                let mut edge_vertex = [u32::MAX; 12];
                for (e, &(ca, cb)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[cube_index] & (1 << e) == 0 {
                        continue;
                    }
                    let a = (
                        cx + CORNERS[ca].0,
                        cy + CORNERS[ca].1,
                        cz + CORNERS[ca].2,
                    );
                    let b = (
                        cx + CORNERS[cb].0,
                        cy + CORNERS[cb].1,
                        cz + CORNERS[cb].2,
                    );
                    // canonical direction: from the lower lattice point
                    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                    let axis = if hi.0 > lo.0 {
                        0u8
                    } else if hi.1 > lo.1 {
                        1
                    } else {
                        2
                    };
                    let key = (lo.0, lo.1, lo.2, axis);
                    let vid = *vertex_of_edge.entry(key).or_insert_with(|| {
                        let va = value(lo.0, lo.1, lo.2);
                        let vb = value(hi.0, hi.1, hi.2);
                        let t = ((iso - va) / (vb - va)).clamp(T_CLAMP, 1.0 - T_CLAMP);
                        let p = world(lo.0, lo.1, lo.2) * (1.0 - t) + world(hi.0, hi.1, hi.2) * t;
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    });
                    edge_vertex[e] = vid;
                }

                let tri = &TRI_TABLE[cube_index];
                let mut k = 0;
                while tri[k] >= 0 {
                    triangles.push([
                        edge_vertex[tri[k] as usize],
                        edge_vertex[tri[k + 1] as usize],
                        edge_vertex[tri[k + 2] as usize],
                    ]);
                    k += 3;
                }
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    TriangleMesh::new(vertices, triangles, Pose::identity())
}

/// Merge the observed points into the mean grid, then run marching cubes.
pub fn mesh_from_grid(mean: &VoxelGrid, region: &PointCloud, iso: f64) -> Result<TriangleMesh> {
    let mut merged = mean.clone();
    for p in &region.points {
        if let Some((x, y, z)) = merged.world_to_grid(p) {
            merged.set(x, y, z, 1.0);
        }
    }
    let mesh = extract_isosurface(&merged, iso)?.cleaned();
    if mesh.triangles.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Analytic sphere occupancy: fractional values near the boundary so the
    /// linear interpolation reconstructs the smooth surface.
    fn sphere_grid(dim: usize, r: f64) -> VoxelGrid {
        let side = 2.5 * r;
        let vs = side / dim as f64;
        let mut g = VoxelGrid::new(dim, vs, Vector3::repeat(-side / 2.0)).unwrap();
        for z in 0..dim {
            for y in 0..dim {
                for x in 0..dim {
                    let c = g.grid_to_world(x, y, z);
                    let occ = 0.5 - (c.norm() - r) / vs;
                    g.set(x, y, z, occ.clamp(0.0, 1.0));
                }
            }
        }
        g
    }

    #[test]
    fn constant_zero_field_is_empty_surface() {
        let g = VoxelGrid::new(16, 0.01, Vector3::zeros()).unwrap();
        assert!(matches!(
            extract_isosurface(&g, 0.5),
            Err(Error::EmptySurface)
        ));
    }

    #[test]
    fn single_voxel_gives_closed_genus_zero_surface() {
        let mut g = VoxelGrid::new(8, 0.01, Vector3::zeros()).unwrap();
        g.set(4, 4, 4, 1.0);
        let mesh = extract_isosurface(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.signed_volume() > 0.0, "outward orientation expected");
    }

    #[test]
    fn sphere_area_and_volume_converge() {
        let r = 0.1;
        let mesh = extract_isosurface(&sphere_grid(64, r), 0.5).unwrap();
        assert!(mesh.is_watertight());
        let area = mesh.surface_area();
        let volume = mesh.signed_volume();
        let a_exact = 4.0 * std::f64::consts::PI * r * r;
        let v_exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        assert!(
            (area - a_exact).abs() / a_exact < 0.05,
            "area {area} vs {a_exact}"
        );
        assert!(
            (volume - v_exact).abs() / v_exact < 0.05,
            "volume {volume} vs {v_exact}"
        );
    }

    #[test]
    fn half_space_surface_is_planar_within_half_voxel() {
        let dim = 24;
        let vs = 0.01;
        let mut g = VoxelGrid::new(dim, vs, Vector3::zeros()).unwrap();
        let plane_z = 0.12;
        for z in 0..dim {
            for y in 0..dim {
                for x in 0..dim {
                    if g.grid_to_world(x, y, z).z <= plane_z {
                        g.set(x, y, z, 1.0);
                    }
                }
            }
        }
        let mesh = extract_isosurface(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
        // interior vertices (away from the padded boundary walls) lie on the plane
        let margin = 2.0 * vs;
        let side = dim as f64 * vs;
        for v in &mesh.vertices {
            let interior = v.x > margin && v.x < side - margin && v.y > margin && v.y < side - margin
                && v.z > margin;
            if interior {
                assert!(
                    (v.z - plane_z).abs() <= vs / 2.0 + 1e-9,
                    "vertex {v:?} off plane {plane_z}"
                );
            }
        }
    }

    #[test]
    fn random_grids_are_watertight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..100 {
            let mut g = VoxelGrid::new(10, 0.01, Vector3::zeros()).unwrap();
            for v in g.values_mut() {
                *v = if rng.gen_bool(0.3) { 1.0 } else { 0.0 };
            }
            match extract_isosurface(&g, 0.5) {
                Ok(mesh) => assert!(mesh.is_watertight()),
                Err(Error::EmptySurface) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn mesh_from_grid_inserts_observed_points() {
        let g = VoxelGrid::new(16, 0.01, Vector3::zeros()).unwrap();
        // empty grid + a blob of observed points still produces a surface
        let pts: Vec<Vector3<f64>> = (0..50)
            .map(|i| Vector3::new(0.08, 0.08, 0.04 + (i % 5) as f64 * 0.01))
            .collect();
        let region = PointCloud::new(pts, Frame::World);
        let mesh = mesh_from_grid(&g, &region, 0.5).unwrap();
        assert!(mesh.is_watertight());
    }

    #[test]
    fn constant_zero_mesh_from_grid_errors() {
        let g = VoxelGrid::new(16, 0.01, Vector3::zeros()).unwrap();
        let region = PointCloud::empty(Frame::World);
        assert!(mesh_from_grid(&g, &region, 0.5).is_err());
    }
}
