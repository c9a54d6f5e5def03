//! Region-growing segmentation over a fixed-radius neighbor graph.
//!
//! Seeds are processed in ascending point-index order so the output is
//! deterministic for a given input and parameter set.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Euclidean gating radius for the neighbor graph (m).
    pub radius: f64,
    /// Optional normal-angle gate in degrees; None disables the criterion.
    pub normal_angle_deg: Option<f64>,
    /// Neighbor count for PCA normal estimation.
    pub normal_k: usize,
    /// Regions smaller than this are merged into the nearest region.
    pub min_region_size: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            radius: 0.02,
            normal_angle_deg: Some(30.0),
            normal_k: 10,
            min_region_size: 50,
        }
    }
}

/// Partition of the input cloud into per-object index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub regions: Vec<Vec<usize>>,
}

impl Segmentation {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Uniform-grid spatial hash for radius and k-nearest queries.
pub(crate) struct SpatialHash<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> SpatialHash<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, cell)).or_default().push(i);
        }
        SpatialHash { points, cell, map }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Indices within `radius` of point `i`, excluding `i`, ascending order.
    pub fn neighbors_within(&self, i: usize, radius: f64) -> Vec<usize> {
        let p = &self.points[i];
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let (kx, ky, kz) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.map.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in ids {
                            if j != i && (self.points[j] - p).norm_squared() <= r2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The k nearest neighbors of point `i` (including `i` itself).
    pub fn k_nearest(&self, i: usize, k: usize) -> Vec<usize> {
        let p = &self.points[i];
        let mut reach = 1i64;
        loop {
            let (kx, ky, kz) = Self::key(p, self.cell);
            let mut cand = Vec::new();
            for dx in -reach..=reach {
                for dy in -reach..=reach {
                    for dz in -reach..=reach {
                        if let Some(ids) = self.map.get(&(kx + dx, ky + dy, kz + dz)) {
                            cand.extend_from_slice(ids);
                        }
                    }
                }
            }
            if cand.len() >= k || reach as usize > 64 || cand.len() == self.points.len() {
                cand.sort_by(|&a, &b| {
                    let da = (self.points[a] - p).norm_squared();
                    let db = (self.points[b] - p).norm_squared();
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                });
                cand.truncate(k);
                return cand;
            }
            reach *= 2;
        }
    }
}

/// Per-point normals by PCA over the k nearest neighbors. Sign is arbitrary;
/// the region-growing gate uses |dot| so it does not matter.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Vec<Vector3<f64>> {
    let hash = SpatialHash::new(&cloud.points, 0.02);
    (0..cloud.len())
        .map(|i| {
            let nn = hash.k_nearest(i, k.max(3));
            let centroid =
                nn.iter().map(|&j| cloud.points[j]).sum::<Vector3<f64>>() / nn.len() as f64;
            let mut cov = Matrix3::<f64>::zeros();
            for &j in &nn {
                let d = cloud.points[j] - centroid;
                cov += d * d.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let mut min_i = 0;
            for c in 1..3 {
                if eig.eigenvalues[c] < eig.eigenvalues[min_i] {
                    min_i = c;
                }
            }
            let n = eig.eigenvectors.column(min_i).into_owned();
            if n.norm() > 1e-12 {
                n.normalize()
            } else {
                Vector3::z()
            }
        })
        .collect()
}

/// Partition the cloud by region growing. Undersized regions are merged into
/// the nearest surviving region (by centroid distance) so the result is a
/// true partition.
pub fn segment(cloud: &PointCloud, params: &SegmentationParams) -> Result<Segmentation> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("segment: empty point cloud".into()));
    }
    let n = cloud.len();
    let normals = match params.normal_angle_deg {
        Some(_) => Some(estimate_normals(cloud, params.normal_k)),
        None => None,
    };
    let cos_gate = params
        .normal_angle_deg
        .map(|a| a.to_radians().cos())
        .unwrap_or(-1.0);

    let hash = SpatialHash::new(&cloud.points, params.radius.max(1e-9));
    let mut region_of = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();

    for seed in 0..n {
        if region_of[seed] != usize::MAX {
            continue;
        }
        let rid = regions.len();
        let mut members = vec![seed];
        region_of[seed] = rid;
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(cur) = queue.pop_front() {
            for j in hash.neighbors_within(cur, params.radius) {
                if region_of[j] != usize::MAX {
                    continue;
                }
                if let Some(ns) = &normals {
                    if ns[cur].dot(&ns[j]).abs() < cos_gate {
                        continue;
                    }
                }
                region_of[j] = rid;
                members.push(j);
                queue.push_back(j);
            }
        }
        members.sort_unstable();
        regions.push(members);
    }

    // Merge undersized residuals into the nearest adequate region.
    let centroid = |ids: &[usize]| -> Vector3<f64> {
        ids.iter().map(|&i| cloud.points[i]).sum::<Vector3<f64>>() / ids.len() as f64
    };
    let adequate: Vec<usize> = (0..regions.len())
        .filter(|&r| regions[r].len() >= params.min_region_size)
        .collect();
    if !adequate.is_empty() && adequate.len() < regions.len() {
        let targets: Vec<(usize, Vector3<f64>)> =
            adequate.iter().map(|&r| (r, centroid(&regions[r]))).collect();
        let mut merged: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
        for (r, members) in regions.iter().enumerate() {
            if members.len() >= params.min_region_size {
                continue;
            }
            let c = centroid(members);
            let best = targets
                .iter()
                .min_by(|a, b| {
                    let da = (a.1 - c).norm_squared();
                    let db = (b.1 - c).norm_squared();
                    da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
                })
                .unwrap()
                .0;
            merged[best].extend_from_slice(&regions[r]);
        }
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(adequate.len());
        for &r in &adequate {
            let mut ids = regions[r].clone();
            ids.extend_from_slice(&merged[r]);
            ids.sort_unstable();
            out.push(ids);
        }
        regions = out;
    }

    // Stable region order: by lowest contained index.
    regions.sort_by_key(|ids| ids[0]);
    Ok(Segmentation { regions })
}

/// True iff the regions cover every input index exactly once.
pub fn validate_partition(seg: &Segmentation, cloud: &PointCloud) -> bool {
    let n = cloud.len();
    let mut seen = vec![false; n];
    for region in &seg.regions {
        for &i in region {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

/// Brute-force connected components of the fixed-radius graph (test oracle,
/// also used by the acceptance suite).
pub fn connected_components_oracle(cloud: &PointCloud, radius: f64) -> Vec<Vec<usize>> {
    let n = cloud.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let r2 = radius * radius;
    for i in 0..n {
        for j in (i + 1)..n {
            if (cloud.points[i] - cloud.points[j]).norm_squared() <= r2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort_by_key(|g| g[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cluster(rng: &mut ChaCha8Rng, center: Vector3<f64>, n: usize, spread: f64) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                center
                    + Vector3::new(
                        rng.gen_range(-spread..spread),
                        rng.gen_range(-spread..spread),
                        rng.gen_range(-spread..spread),
                    )
            })
            .collect()
    }

    fn geometric_params() -> SegmentationParams {
        SegmentationParams {
            normal_angle_deg: None,
            min_region_size: 1,
            ..Default::default()
        }
    }

    #[test]
    fn two_separated_clusters_give_two_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut pts = cluster(&mut rng, Vector3::zeros(), 200, 0.008);
        pts.extend(cluster(&mut rng, Vector3::new(0.3, 0.0, 0.0), 200, 0.008));
        let cloud = PointCloud::new(pts, Frame::World);
        let params = geometric_params();
        let seg = segment(&cloud, &params).unwrap();
        assert_eq!(seg.len(), 2);
        let oracle = connected_components_oracle(&cloud, params.radius);
        assert_eq!(seg.regions, oracle);
    }

    #[test]
    fn one_dense_cluster_gives_one_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = PointCloud::new(cluster(&mut rng, Vector3::zeros(), 300, 0.005), Frame::World);
        let seg = segment(&cloud, &geometric_params()).unwrap();
        assert_eq!(seg.len(), 1);
    }

    #[test]
    fn isolated_points_each_form_a_region() {
        let pts: Vec<Vector3<f64>> = (0..20)
            .map(|i| Vector3::new(i as f64 * 0.1, 0.0, 0.0))
            .collect();
        let cloud = PointCloud::new(pts, Frame::World);
        let seg = segment(&cloud, &geometric_params()).unwrap();
        assert_eq!(seg.len(), 20);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let cloud = PointCloud::empty(Frame::World);
        assert!(segment(&cloud, &SegmentationParams::default()).is_err());
    }

    #[test]
    fn undersized_residuals_are_merged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = cluster(&mut rng, Vector3::zeros(), 200, 0.008);
        // 3 stray points near (but not connected to) the main cluster
        pts.push(Vector3::new(0.06, 0.0, 0.0));
        pts.push(Vector3::new(0.065, 0.0, 0.0));
        pts.push(Vector3::new(0.07, 0.0, 0.0));
        let n = pts.len();
        let cloud = PointCloud::new(pts, Frame::World);
        let params = SegmentationParams {
            normal_angle_deg: None,
            min_region_size: 50,
            ..Default::default()
        };
        let seg = segment(&cloud, &params).unwrap();
        assert_eq!(seg.len(), 1);
        assert_eq!(seg.regions[0].len(), n);
        assert!(validate_partition(&seg, &cloud));
    }

    #[test]
    fn validate_partition_rejects_duplicates_and_gaps() {
        let cloud = PointCloud::new(
            vec![
                Vector3::zeros(),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            Frame::World,
        );
        let ok = Segmentation {
            regions: vec![vec![0, 1], vec![2]],
        };
        assert!(validate_partition(&ok, &cloud));
        let dup = Segmentation {
            regions: vec![vec![0, 1], vec![1, 2]],
        };
        assert!(!validate_partition(&dup, &cloud));
        let missing = Segmentation {
            regions: vec![vec![0], vec![2]],
        };
        assert!(!validate_partition(&missing, &cloud));
    }

    #[test]
    fn segment_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pts = cluster(&mut rng, Vector3::zeros(), 400, 0.01);
        pts.extend(cluster(&mut rng, Vector3::new(0.2, 0.1, 0.0), 350, 0.01));
        let cloud = PointCloud::new(pts, Frame::World);
        let params = SegmentationParams::default();
        let a = segment(&cloud, &params).unwrap();
        let b = segment(&cloud, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_oracle_on_fuzzed_clouds() {
        let params = geometric_params();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = rng.gen_range(1..=4usize);
            let mut pts = Vec::new();
            for c in 0..k {
                let center = Vector3::new(c as f64 * rng.gen_range(0.05..0.4), 0.0, 0.0);
                let count = rng.gen_range(30..200);
                pts.extend(cluster(&mut rng, center, count, 0.01));
            }
            let cloud = PointCloud::new(pts, Frame::World);
            let seg = segment(&cloud, &params).unwrap();
            assert!(validate_partition(&seg, &cloud));
            assert_eq!(seg.regions, connected_components_oracle(&cloud, params.radius));
        }
    }
}
