//! Procedural primitive meshes (watertight, outward winding, centered at
//! the local origin).

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::geometry::Pose;
use crate::mesh::TriangleMesh;

/// Axis-aligned box with the given full extents, centered at the origin.
pub fn box_mesh(extents: Vector3<f64>) -> TriangleMesh {
    let h = extents / 2.0;
    let v = vec![
        Vector3::new(-h.x, -h.y, -h.z),
        Vector3::new(h.x, -h.y, -h.z),
        Vector3::new(h.x, h.y, -h.z),
        Vector3::new(-h.x, h.y, -h.z),
        Vector3::new(-h.x, -h.y, h.z),
        Vector3::new(h.x, -h.y, h.z),
        Vector3::new(h.x, h.y, h.z),
        Vector3::new(-h.x, h.y, h.z),
    ];
    let t = vec![
        // bottom (z-)
        [0, 2, 1],
        [0, 3, 2],
        // top (z+)
        [4, 5, 6],
        [4, 6, 7],
        // front (y-)
        [0, 1, 5],
        [0, 5, 4],
        // right (x+)
        [1, 2, 6],
        [1, 6, 5],
        // back (y+)
        [2, 3, 7],
        [2, 7, 6],
        // left (x-)
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh::new(v, t, Pose::identity()).unwrap()
}

/// Closed cylinder along +z, centered at the origin.
pub fn cylinder_mesh(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    let n = segments.max(3);
    let h = height / 2.0;
    let mut v = Vec::with_capacity(2 * n + 2);
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        v.push(Vector3::new(radius * a.cos(), radius * a.sin(), -h));
    }
    for i in 0..n {
        let a = std::f64::consts::TAU * i as f64 / n as f64;
        v.push(Vector3::new(radius * a.cos(), radius * a.sin(), h));
    }
    let bottom_center = v.len() as u32;
    v.push(Vector3::new(0.0, 0.0, -h));
    let top_center = v.len() as u32;
    v.push(Vector3::new(0.0, 0.0, h));

    let mut t = Vec::with_capacity(4 * n);
    for i in 0..n as u32 {
        let j = (i + 1) % n as u32;
        let (b0, b1) = (i, j);
        let (t0, t1) = (i + n as u32, j + n as u32);
        // side
        t.push([b0, b1, t1]);
        t.push([b0, t1, t0]);
        // caps
        t.push([bottom_center, b1, b0]);
        t.push([top_center, t0, t1]);
    }
    TriangleMesh::new(v, t, Pose::identity()).unwrap()
}

/// Icosphere: subdivided icosahedron scaled to `radius`, centered at origin.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut v: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|p| p.normalize())
    .collect();
    let mut t: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(t.len() * 4);
        for tri in &t {
            let mut mids = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = ((v[a as usize] + v[b as usize]) / 2.0).normalize();
                    v.push(m);
                    (v.len() - 1) as u32
                });
            }
            next.push([tri[0], mids[0], mids[2]]);
            next.push([tri[1], mids[1], mids[0]]);
            next.push([tri[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        t = next;
    }
    for p in &mut v {
        *p *= radius;
    }
    TriangleMesh::new(v, t, Pose::identity()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn box_is_watertight_with_correct_volume() {
        let m = box_mesh(Vector3::new(0.04, 0.06, 0.1));
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 0.04 * 0.06 * 0.1).abs() < 1e-12);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn cylinder_is_watertight_with_near_exact_volume() {
        let (r, h) = (0.03, 0.12);
        let m = cylinder_mesh(r, h, 48);
        assert!(m.is_watertight());
        // inscribed polygon: area deficit is sin(tau/n)/(tau/n)
        let poly = 0.5 * 48.0 * (std::f64::consts::TAU / 48.0).sin() * r * r;
        assert!((m.signed_volume() - poly * h).abs() < 1e-12);
        assert!((m.signed_volume() - PI * r * r * h).abs() / (PI * r * r * h) < 0.01);
    }

    #[test]
    fn icosphere_converges_to_sphere() {
        let r = 0.05;
        let m = icosphere(r, 4);
        assert!(m.is_watertight());
        let vol = 4.0 / 3.0 * PI * r * r * r;
        assert!((m.signed_volume() - vol).abs() / vol < 0.01);
        for v in &m.vertices {
            assert!((v.norm() - r).abs() < 1e-12);
        }
    }
}
