//! Indexed triangle surfaces with watertightness and integral checks.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Indexed triangle surface. Vertices are in meters; `pose` places the mesh
/// in the world (identity when vertices are already world coordinates).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub pose: Pose,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>, pose: Pose) -> Result<Self> {
        let n = vertices.len() as u32;
        for t in &triangles {
            if t[0] >= n || t[1] >= n || t[2] >= n {
                return Err(Error::InvalidArgument(format!(
                    "triangle index out of range: {t:?} (n={n})"
                )));
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            pose,
        })
    }

    pub fn triangle_vertices(&self, i: usize) -> [Vector3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// World-space vertices after applying the pose.
    pub fn world_vertices(&self) -> Vec<Vector3<f64>> {
        self.vertices
            .iter()
            .map(|v| self.pose.transform_point(v))
            .collect()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(i);
        (b - a).cross(&(c - a)).norm() / 2.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Signed volume via the divergence theorem; positive for outward-facing
    /// counterclockwise winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle_vertices(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume().abs()
    }

    /// Closed and edge-manifold: every undirected edge shared by exactly two
    /// triangles with opposite directions.
    pub fn is_watertight(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if e.0 == e.1 {
                    return false;
                }
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &count)| {
            count == 1 && directed.get(&(b, a)) == Some(&1)
        })
    }

    /// Euler characteristic V - E + F (undirected edge count).
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Drop zero-area triangles (area <= 1e-12 m^2) and unused vertices.
    pub fn cleaned(&self) -> TriangleMesh {
        let keep: Vec<[u32; 3]> = (0..self.triangles.len())
            .filter(|&i| self.triangle_area(i) > 1e-12)
            .map(|i| self.triangles[i])
            .collect();
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(keep.len());
        for t in keep {
            let mut nt = [0u32; 3];
            for k in 0..3 {
                let old = t[k] as usize;
                if remap[old] == u32::MAX {
                    remap[old] = vertices.len() as u32;
                    vertices.push(self.vertices[old]);
                }
                nt[k] = remap[old];
            }
            triangles.push(nt);
        }
        TriangleMesh {
            vertices,
            triangles,
            pose: self.pose,
        }
    }

    /// Axis-aligned bounds of the world-space vertices.
    pub fn world_aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in self.world_vertices() {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        (lo, hi)
    }
}
