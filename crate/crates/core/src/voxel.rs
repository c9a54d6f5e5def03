//! Occupancy grids on a cubic lattice and point-cloud voxelization.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// D^3 occupancy field with values in [0, 1], axis-aligned in world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dim: usize,
    pub voxel_size: f64,
    pub origin: Vector3<f64>,
    occupancy: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dim: usize, voxel_size: f64, origin: Vector3<f64>) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be >= 8 (got {dim})"
            )));
        }
        if voxel_size <= 0.0 {
            return Err(Error::InvalidArgument("voxel_size must be positive".into()));
        }
        Ok(VoxelGrid {
            dim,
            voxel_size,
            origin,
            occupancy: vec![0.0; dim * dim * dim],
        })
    }

    #[inline]
    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dim * (y + self.dim * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.occupancy[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.occupancy[i] = v.clamp(0.0, 1.0);
    }

    pub fn values(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.occupancy
    }

    /// Grid cell containing a world point, or None if outside the lattice.
    pub fn world_to_grid(&self, p: &Vector3<f64>) -> Option<(usize, usize, usize)> {
        let rel = (p - self.origin) / self.voxel_size;
        let (x, y, z) = (rel.x.floor(), rel.y.floor(), rel.z.floor());
        let d = self.dim as f64;
        if x < 0.0 || y < 0.0 || z < 0.0 || x >= d || y >= d || z >= d {
            return None;
        }
        Some((x as usize, y as usize, z as usize))
    }

    /// World position of a voxel center.
    pub fn grid_to_world(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                (x as f64 + 0.5) * self.voxel_size,
                (y as f64 + 0.5) * self.voxel_size,
                (z as f64 + 0.5) * self.voxel_size,
            )
    }

    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.dim == other.dim
            && self.voxel_size == other.voxel_size
            && self.origin == other.origin
    }

    /// Occupied cells at the 0.5 binarization threshold, ascending index order.
    pub fn occupied_cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for z in 0..self.dim {
            for y in 0..self.dim {
                for x in 0..self.dim {
                    if self.get(x, y, z) > 0.5 {
                        out.push((x, y, z));
                    }
                }
            }
        }
        out
    }

    /// True if every cell occupied in `self` (at 0.5) is occupied in `other`.
    pub fn is_subset_of(&self, other: &VoxelGrid) -> bool {
        self.same_geometry(other)
            && self
                .occupancy
                .iter()
                .zip(other.occupancy.iter())
                .all(|(a, b)| *a <= 0.5 || *b > 0.5)
    }
}

/// Voxelize a region into a cubic grid over its AABB padded 10% per side.
pub fn voxelize(region: &PointCloud, dim: usize) -> Result<VoxelGrid> {
    if region.is_empty() {
        return Err(Error::EmptyInput("voxelize: empty region".into()));
    }
    let mut lo = region.points[0];
    let mut hi = region.points[0];
    for p in &region.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max().max(1e-3);
    let side = extent * 1.2;
    let center = (lo + hi) / 2.0;
    let origin = center - Vector3::repeat(side / 2.0);
    let voxel_size = side / dim as f64;
    let mut grid = VoxelGrid::new(dim, voxel_size, origin)?;
    for p in &region.points {
        let rel = (p - origin) / voxel_size;
        // clamp handles points landing exactly on the far boundary
        let x = (rel.x.floor() as i64).clamp(0, dim as i64 - 1) as usize;
        let y = (rel.y.floor() as i64).clamp(0, dim as i64 - 1) as usize;
        let z = (rel.z.floor() as i64).clamp(0, dim as i64 - 1) as usize;
        grid.set(x, y, z, 1.0);
    }
    Ok(grid)
}

/// Per-voxel arithmetic mean of a set of geometry-identical grids.
pub fn mean_shape(samples: &[VoxelGrid]) -> Result<VoxelGrid> {
    let first = samples
        .first()
        .ok_or_else(|| Error::EmptyInput("mean_shape: no samples".into()))?;
    for s in &samples[1..] {
        if !s.same_geometry(first) {
            return Err(Error::GridMismatch(
                "samples differ in dim, voxel_size or origin".into(),
            ));
        }
    }
    let mut mean = first.clone();
    let n = samples.len() as f64;
    for (i, v) in mean.values_mut().iter_mut().enumerate() {
        *v = samples.iter().map(|s| s.values()[i]).sum::<f64>() / n;
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point_occupies_exactly_one_voxel() {
        let cloud = PointCloud::new(vec![Vector3::new(0.1, 0.2, 0.3)], Frame::World);
        let grid = voxelize(&cloud, 40).unwrap();
        assert_eq!(grid.occupied_cells().len(), 1);
    }

    #[test]
    fn opposite_corners_map_to_opposite_voxels() {
        let cloud = PointCloud::new(
            vec![Vector3::zeros(), Vector3::new(0.1, 0.1, 0.1)],
            Frame::World,
        );
        let grid = voxelize(&cloud, 40).unwrap();
        let cells = grid.occupied_cells();
        assert_eq!(cells.len(), 2);
        // padded 10% per side: points sit 1/12 of the side from each cube face
        let (a, b) = (cells[0], cells[1]);
        assert!(a.0 < 8 && a.1 < 8 && a.2 < 8, "low corner cell {a:?}");
        assert!(b.0 > 31 && b.1 > 31 && b.2 > 31, "high corner cell {b:?}");
    }

    #[test]
    fn sphere_surface_matches_binning_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = 0.05;
        let pts: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize();
                v * r
            })
            .collect();
        let cloud = PointCloud::new(pts.clone(), Frame::World);
        let grid = voxelize(&cloud, 40).unwrap();
        // brute-force per-point floor-indexing oracle
        let mut expected = std::collections::HashSet::new();
        for p in &pts {
            let rel = (p - grid.origin) / grid.voxel_size;
            expected.insert((
                (rel.x.floor() as i64).clamp(0, 39) as usize,
                (rel.y.floor() as i64).clamp(0, 39) as usize,
                (rel.z.floor() as i64).clamp(0, 39) as usize,
            ));
        }
        let got: std::collections::HashSet<_> = grid.occupied_cells().into_iter().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn world_grid_maps_are_exact_inverses_on_centers() {
        let grid = VoxelGrid::new(16, 0.01, Vector3::new(-0.3, 0.2, 0.05)).unwrap();
        for z in 0..16 {
            for y in 0..16 {
                for x in 0..16 {
                    let w = grid.grid_to_world(x, y, z);
                    assert_eq!(grid.world_to_grid(&w), Some((x, y, z)));
                }
            }
        }
    }

    #[test]
    fn mean_of_identical_grids_is_that_grid() {
        let cloud = PointCloud::new(
            vec![
                Vector3::zeros(),
                Vector3::new(0.05, 0.0, 0.0),
                Vector3::new(0.0, 0.05, 0.02),
            ],
            Frame::World,
        );
        let g = voxelize(&cloud, 16).unwrap();
        let mean = mean_shape(&[g.clone(), g.clone(), g.clone()]).unwrap();
        assert_eq!(mean, g);
    }

    #[test]
    fn mean_of_zeros_and_ones_is_half() {
        let zeros = VoxelGrid::new(8, 0.01, Vector3::zeros()).unwrap();
        let mut ones = zeros.clone();
        ones.values_mut().fill(1.0);
        let mean = mean_shape(&[zeros, ones]).unwrap();
        assert!(mean.values().iter().all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn mean_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut samples = Vec::new();
        for _ in 0..5 {
            let mut g = VoxelGrid::new(8, 0.01, Vector3::zeros()).unwrap();
            for v in g.values_mut() {
                *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            }
            samples.push(g);
        }
        let mean = mean_shape(&samples).unwrap();
        for i in 0..8 * 8 * 8 {
            let mut acc = 0.0;
            for s in &samples {
                acc += s.values()[i];
            }
            assert!((mean.values()[i] - acc / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_rejects_mismatched_geometry() {
        let a = VoxelGrid::new(8, 0.01, Vector3::zeros()).unwrap();
        let b = VoxelGrid::new(8, 0.02, Vector3::zeros()).unwrap();
        assert!(mean_shape(&[a, b]).is_err());
    }
}
