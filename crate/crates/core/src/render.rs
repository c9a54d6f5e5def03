//! BVH-accelerated depth rendering of an estimated scene.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::Plane;
use crate::geometry::{CameraModel, DepthImage, Pose};
use crate::mesh::TriangleMesh;

/// Object id assigned to support-plane triangles.
pub const PLANE_OBJECT: usize = usize::MAX;

/// Estimated scene: completed meshes with their poses plus the support plane.
#[derive(Debug, Clone)]
pub struct SceneEstimate {
    pub objects: Vec<(TriangleMesh, Pose)>,
    pub support_plane: Plane,
    /// Render the support plane as geometry (a large quad).
    pub render_support_plane: bool,
}

impl SceneEstimate {
    pub fn new(objects: Vec<(TriangleMesh, Pose)>, support_plane: Plane) -> Self {
        SceneEstimate {
            objects,
            support_plane,
            render_support_plane: true,
        }
    }

    /// Centroid of all object AABB centers (world frame).
    pub fn center(&self) -> Vector3<f64> {
        if self.objects.is_empty() {
            return self.support_plane.normal * self.support_plane.offset;
        }
        let mut acc = Vector3::zeros();
        for (mesh, pose) in &self.objects {
            let world = TriangleMesh {
                vertices: mesh.vertices.clone(),
                triangles: mesh.triangles.clone(),
                pose: pose.compose(&mesh.pose),
            };
            let (lo, hi) = world.world_aabb();
            acc += (lo + hi) / 2.0;
        }
        acc / self.objects.len() as f64
    }
}

/// World-space triangle tagged with the object it came from.
#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub c: Vector3<f64>,
    pub object: usize,
}

impl Triangle {
    /// Unit normal following the winding (outward for watertight meshes).
    pub fn normal(&self) -> Vector3<f64> {
        (self.b - self.a).cross(&(self.c - self.a)).normalize()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Not necessarily unit length; hit parameters are in units of `dir`.
    pub dir: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
}

/// Barycentric slack: wide enough that a ray passing exactly through a
/// shared edge registers on at least one of the adjacent triangles even
/// after rounding (rays aligned with mesh lattice planes are common when
/// rendering marching-cubes output from axis-aligned viewpoints).
const BARY_EPS: f64 = 1e-9;

/// Moller-Trumbore with inclusive edge bounds so shared edges cannot produce
/// pinholes (both adjacent triangles report the boundary hit).
pub fn intersect_triangle(ray: &Ray, tri: &Triangle) -> Option<f64> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let pvec = ray.dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri.a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.dir.dot(&qvec) * inv_det;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t > 1e-12 {
        Some(t)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vector3::repeat(f64::INFINITY),
            hi: Vector3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow_tri(&mut self, t: &Triangle) {
        for p in [&t.a, &t.b, &t.c] {
            self.lo = self.lo.inf(p);
            self.hi = self.hi.sup(p);
        }
    }

    fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.lo[i] <= other.lo[i] + 1e-12 && self.hi[i] >= other.hi[i] - 1e-12)
    }

    /// Slab test; returns entry parameter if the ray hits before `t_max`.
    fn hit(&self, ray: &Ray, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            let inv = 1.0 / ray.dir[i];
            let (mut near, mut far) = (
                (self.lo[i] - ray.origin[i]) * inv,
                (self.hi[i] - ray.origin[i]) * inv,
            );
            if inv < 0.0 {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum BvhNode {
    Leaf {
        aabb: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        aabb: Aabb,
        left: usize,
        right: usize,
    },
}

/// Bounding volume hierarchy over world-space triangles. Median split on
/// the longest axis, at most 4 triangles per leaf.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Triangles in leaf order.
    pub triangles: Vec<Triangle>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mut triangles: Vec<Triangle>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyInput("bvh: no triangles".into()));
        }
        let mut nodes = Vec::new();
        let n = triangles.len();
        Self::build_range(&mut triangles, 0, n, &mut nodes);
        Ok(Bvh { nodes, triangles })
    }

    fn build_range(
        tris: &mut [Triangle],
        start: usize,
        end: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> usize {
        let mut aabb = Aabb::empty();
        for t in &tris[start..end] {
            aabb.grow_tri(t);
        }
        let idx = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(BvhNode::Leaf {
                aabb,
                start,
                count: end - start,
            });
            return idx;
        }
        let ext = aabb.hi - aabb.lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        tris[start..end].select_nth_unstable_by(mid - start, |a, b| {
            let ca = a.a[axis] + a.b[axis] + a.c[axis];
            let cb = b.a[axis] + b.b[axis] + b.c[axis];
            ca.partial_cmp(&cb).unwrap()
        });
        nodes.push(BvhNode::Inner {
            aabb,
            left: 0,
            right: 0,
        });
        let left = Self::build_range(tris, start, mid, nodes);
        let right = Self::build_range(tris, mid, end, nodes);
        if let BvhNode::Inner {
            left: l, right: r, ..
        } = &mut nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    /// Nearest hit along the ray, if any.
    pub fn nearest_hit(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let t_max = best.map(|h| h.t).unwrap_or(f64::INFINITY);
            match &self.nodes[ni] {
                BvhNode::Leaf { aabb, start, count } => {
                    if aabb.hit(ray, t_max).is_none() {
                        continue;
                    }
                    for i in *start..*start + *count {
                        if let Some(t) = intersect_triangle(ray, &self.triangles[i]) {
                            if best.map(|h| t < h.t).unwrap_or(true) {
                                best = Some(Hit { t, triangle: i });
                            }
                        }
                    }
                }
                BvhNode::Inner { aabb, left, right } => {
                    if aabb.hit(ray, t_max).is_none() {
                        continue;
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        best
    }

    /// Exhaustive scan over every triangle (reference path for tests).
    pub fn brute_force_hit(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            if let Some(t) = intersect_triangle(ray, tri) {
                if best.map(|h| t < h.t).unwrap_or(true) {
                    best = Some(Hit { t, triangle: i });
                }
            }
        }
        best
    }

    /// Exhaustive containment check of every node box (test support).
    pub fn boxes_contain_triangles(&self) -> bool {
        fn check(bvh: &Bvh, ni: usize, nodes_aabb: &mut Vec<Aabb>) -> Aabb {
            match &bvh.nodes[ni] {
                BvhNode::Leaf { aabb, start, count } => {
                    let mut content = Aabb::empty();
                    for t in &bvh.triangles[*start..*start + *count] {
                        content.grow_tri(t);
                    }
                    assert!(aabb.contains(&content));
                    nodes_aabb.push(*aabb);
                    *aabb
                }
                BvhNode::Inner { aabb, left, right } => {
                    let l = check(bvh, *left, nodes_aabb);
                    let r = check(bvh, *right, nodes_aabb);
                    assert!(aabb.contains(&l) && aabb.contains(&r));
                    nodes_aabb.push(*aabb);
                    *aabb
                }
            }
        }
        let mut v = Vec::new();
        check(self, 0, &mut v);
        true
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Flatten the scene into tagged world-space triangles. The support plane,
/// when rendered, becomes a large quad centered under the scene.
pub fn scene_triangles(scene: &SceneEstimate) -> Vec<Triangle> {
    let mut out = Vec::new();
    for (oi, (mesh, pose)) in scene.objects.iter().enumerate() {
        let full = pose.compose(&mesh.pose);
        for t in &mesh.triangles {
            out.push(Triangle {
                a: full.transform_point(&mesh.vertices[t[0] as usize]),
                b: full.transform_point(&mesh.vertices[t[1] as usize]),
                c: full.transform_point(&mesh.vertices[t[2] as usize]),
                object: oi,
            });
        }
    }
    if scene.render_support_plane {
        let n = scene.support_plane.normal;
        let center = {
            let c = scene.center();
            c - n * scene.support_plane.signed_distance(&c)
        };
        let mut u = n.cross(&Vector3::x());
        if u.norm() < 1e-6 {
            u = n.cross(&Vector3::y());
        }
        let u = u.normalize();
        let v = n.cross(&u);
        let half = 5.0;
        let q = [
            center - u * half - v * half,
            center + u * half - v * half,
            center + u * half + v * half,
            center - u * half + v * half,
        ];
        out.push(Triangle {
            a: q[0],
            b: q[1],
            c: q[2],
            object: PLANE_OBJECT,
        });
        out.push(Triangle {
            a: q[0],
            b: q[2],
            c: q[3],
            object: PLANE_OBJECT,
        });
    }
    out
}

pub fn build_bvh(scene: &SceneEstimate) -> Result<Bvh> {
    Bvh::build(scene_triangles(scene))
}

fn render_with<F>(cam: &CameraModel, hit_fn: F) -> DepthImage
where
    F: Fn(&Ray) -> Option<Hit> + Sync,
{
    let origin = cam.position();
    let rot = cam.pose.rotation_matrix();
    let mut img = DepthImage::new(cam.width, cam.height);
    let width = cam.width;
    img.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(v, row)| {
            for (u, px) in row.iter_mut().enumerate() {
                // dir has unit z in the camera frame, so the ray parameter
                // equals z-depth directly
                let dir_cam = Vector3::new(
                    (u as f64 - cam.cx) / cam.fx,
                    (v as f64 - cam.cy) / cam.fy,
                    1.0,
                );
                let ray = Ray {
                    origin,
                    dir: rot * dir_cam,
                };
                if let Some(hit) = hit_fn(&ray) {
                    *px = hit.t;
                }
            }
        });
    img
}

/// Render a z-depth image of the scene; 0.0 where no geometry is hit.
pub fn render_depth(scene: &SceneEstimate, cam: &CameraModel) -> Result<DepthImage> {
    if scene.objects.is_empty() && !scene.render_support_plane {
        return Ok(DepthImage::new(cam.width, cam.height));
    }
    let tris = scene_triangles(scene);
    if tris.is_empty() {
        return Ok(DepthImage::new(cam.width, cam.height));
    }
    let bvh = Bvh::build(tris)?;
    Ok(render_with(cam, |ray| bvh.nearest_hit(ray)))
}

/// Render against a prebuilt BVH (used when many views share one scene).
pub fn render_depth_bvh(bvh: &Bvh, cam: &CameraModel) -> DepthImage {
    render_with(cam, |ray| bvh.nearest_hit(ray))
}

/// Brute-force reference renderer (bit-identical to the BVH path).
pub fn render_depth_brute_force(scene: &SceneEstimate, cam: &CameraModel) -> Result<DepthImage> {
    let tris = scene_triangles(scene);
    if tris.is_empty() {
        return Ok(DepthImage::new(cam.width, cam.height));
    }
    let bvh = Bvh {
        nodes: vec![BvhNode::Leaf {
            aabb: Aabb::empty(),
            start: 0,
            count: 0,
        }],
        triangles: tris,
    };
    Ok(render_with(cam, |ray| bvh.brute_force_hit(ray)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use crate::shapes;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn down_cam(height: f64) -> CameraModel {
        let pose = look_at(
            &Vector3::new(0.0, 0.0, height),
            &Vector3::zeros(),
            &Vector3::z(),
        )
        .unwrap();
        CameraModel::default_vga(pose)
    }

    #[test]
    fn single_triangle_bvh_is_a_leaf() {
        let tri = Triangle {
            a: Vector3::zeros(),
            b: Vector3::x(),
            c: Vector3::y(),
            object: 0,
        };
        let bvh = Bvh::build(vec![tri]).unwrap();
        assert_eq!(bvh.node_count(), 1);
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        let mesh = shapes::icosphere(0.5, 3);
        let scene = SceneEstimate {
            objects: vec![(mesh, Pose::identity())],
            support_plane: Plane::horizontal(-1.0),
            render_support_plane: false,
        };
        let bvh = build_bvh(&scene).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let ray = Ray {
                origin: Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(1.0..3.0),
                ),
                dir: Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..-0.1),
                ),
            };
            let a = bvh.nearest_hit(&ray).map(|h| h.t);
            let b = bvh.brute_force_hit(&ray).map(|h| h.t);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn node_boxes_contain_descendants() {
        let mesh = shapes::icosphere(0.3, 2);
        let scene = SceneEstimate::new(vec![(mesh, Pose::identity())], Plane::horizontal(-1.0));
        let bvh = build_bvh(&scene).unwrap();
        assert!(bvh.boxes_contain_triangles());
    }

    #[test]
    fn plane_behind_camera_renders_empty() {
        // camera looks up, plane below it
        let pose = look_at(
            &Vector3::new(0.0, 0.0, 1.0),
            &Vector3::new(0.0, 0.0, 2.0),
            &Vector3::x(),
        )
        .unwrap();
        let cam = CameraModel::default_vga(pose);
        let scene = SceneEstimate::new(vec![], Plane::horizontal(0.0));
        let img = render_depth(&scene, &cam).unwrap();
        assert_eq!(img.valid_count(), 0);
    }

    #[test]
    fn horizontal_plane_has_constant_z_depth() {
        let cam = down_cam(1.0);
        let scene = SceneEstimate::new(vec![], Plane::horizontal(0.0));
        let img = render_depth(&scene, &cam).unwrap();
        for v in [0usize, 239, 479] {
            for u in [0usize, 319, 639] {
                assert!(
                    (img.get(u, v) - 1.0).abs() < 1e-9,
                    "pixel ({u},{v}) = {}",
                    img.get(u, v)
                );
            }
        }
    }

    #[test]
    fn icosphere_depth_matches_analytic_sphere() {
        let center = Vector3::new(0.0, 0.0, 0.0);
        let r = 1.0;
        let cam = {
            let pose = look_at(&Vector3::new(0.0, 0.0, 2.0), &center, &Vector3::x()).unwrap();
            CameraModel::default_vga(pose)
        };
        let mesh = shapes::icosphere(r, 5);
        let scene = SceneEstimate {
            objects: vec![(mesh, Pose::identity())],
            support_plane: Plane::horizontal(-2.0),
            render_support_plane: false,
        };
        let img = render_depth(&scene, &cam).unwrap();
        let origin = cam.position();
        let rot = cam.pose.rotation_matrix();
        let mut checked = 0;
        for v in (0..cam.height).step_by(7) {
            for u in (0..cam.width).step_by(7) {
                let dir = rot * Vector3::new(
                    (u as f64 - cam.cx) / cam.fx,
                    (v as f64 - cam.cy) / cam.fy,
                    1.0,
                );
                // analytic ray-sphere intersection in ray-parameter units
                let oc = origin - center;
                let (a, b, c) = (dir.dot(&dir), 2.0 * oc.dot(&dir), oc.dot(&oc) - r * r);
                let disc = b * b - 4.0 * a * c;
                let d = img.get(u, v);
                // skip grazing rays: faceting error diverges at the
                // silhouette, so check only impact parameters <= 0.8 r
                let impact = (oc.norm_squared() - oc.dot(&dir.normalize()).powi(2)).sqrt();
                if disc > 1e-4 && impact <= 0.8 * r {
                    let t = (-b - disc.sqrt()) / (2.0 * a);
                    assert!(
                        (d - t).abs() < 1.5e-3,
                        "pixel ({u},{v}): rendered {d}, analytic {t}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn rendering_invariant_under_triangle_reordering() {
        let mesh = shapes::box_mesh(Vector3::new(0.2, 0.3, 0.15));
        let cam = down_cam(1.0);
        let scene = SceneEstimate::new(
            vec![(mesh.clone(), Pose::identity())],
            Plane::horizontal(-0.075),
        );
        let img1 = render_depth(&scene, &cam).unwrap();
        let mut rev = mesh;
        rev.triangles.reverse();
        let scene2 = SceneEstimate::new(vec![(rev, Pose::identity())], Plane::horizontal(-0.075));
        let img2 = render_depth(&scene2, &cam).unwrap();
        assert_eq!(img1, img2);
    }

    #[test]
    fn sphere_silhouette_area_matches_projection() {
        // watertight sphere fully inside the frustum: valid-pixel count
        // matches the analytically projected disc area within 2%
        let r = 0.3;
        let dist: f64 = 2.0;
        let cam = down_cam(dist);
        let mesh = shapes::icosphere(r, 4);
        let scene = SceneEstimate {
            objects: vec![(mesh, Pose::identity())],
            support_plane: Plane::horizontal(-1.0),
            render_support_plane: false,
        };
        let img = render_depth(&scene, &cam).unwrap();
        let count = img.valid_count() as f64;
        // silhouette of a sphere: disc of radius r/sqrt(d^2 - r^2) in
        // normalized image coordinates, scaled by fx*fy pixels
        let k = r / (dist * dist - r * r).sqrt();
        let expected = std::f64::consts::PI * k * k * cam.fx * cam.fy;
        assert!(
            (count - expected).abs() / expected < 0.02,
            "count {count} vs {expected}"
        );
    }
}
