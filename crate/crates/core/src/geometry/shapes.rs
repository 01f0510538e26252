//! Procedural closed meshes used by tests, the dataset generator and the
//! self-test. All are centered at the origin with outward winding.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Point3;

use super::TriangleMesh;

/// Axis-aligned box with full extents `(ex, ey, ez)`.
pub fn box_mesh(ex: f64, ey: f64, ez: f64) -> TriangleMesh {
    let (hx, hy, hz) = (ex / 2.0, ey / 2.0, ez / 2.0);
    let vertices = vec![
        Point3::new(-hx, -hy, -hz),
        Point3::new(hx, -hy, -hz),
        Point3::new(hx, hy, -hz),
        Point3::new(-hx, hy, -hz),
        Point3::new(-hx, -hy, hz),
        Point3::new(hx, -hy, hz),
        Point3::new(hx, hy, hz),
        Point3::new(-hx, hy, hz),
    ];
    let faces = vec![
        // -z
        [0, 2, 1],
        [0, 3, 2],
        // +z
        [4, 5, 6],
        [4, 6, 7],
        // -y
        [0, 1, 5],
        [0, 5, 4],
        // +y
        [3, 6, 2],
        [3, 7, 6],
        // -x
        [0, 4, 7],
        [0, 7, 3],
        // +x
        [1, 2, 6],
        [1, 6, 5],
    ];
    TriangleMesh::new(vertices, faces).expect("box with positive extents is valid")
}

pub fn unit_cube() -> TriangleMesh {
    box_mesh(1.0, 1.0, 1.0)
}

/// Subdivided icosahedron with vertices on the sphere of `radius`.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(nalgebra::Vector3::new(x, y, z).normalize()))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
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
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = (verts[a].coords + verts[b].coords).normalize();
                verts.push(Point3::from(m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = midpoint(f[0], f[1], &mut verts);
            let bc = midpoint(f[1], f[2], &mut verts);
            let ca = midpoint(f[2], f[0], &mut verts);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in &mut verts {
        v.coords *= radius;
    }
    orient_outward(&verts, &mut faces);
    TriangleMesh::new(verts, faces).expect("icosphere is valid")
}

/// Closed cylinder around the z axis: `segments`-gon prism with fan caps.
/// Has an exact `segments`-fold rotational symmetry about z.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    assert!(segments >= 3, "cylinder needs at least 3 segments");
    let hz = height / 2.0;
    let mut verts = Vec::with_capacity(2 * segments + 2);
    for k in 0..segments {
        let a = 2.0 * PI * k as f64 / segments as f64;
        verts.push(Point3::new(radius * a.cos(), radius * a.sin(), -hz));
    }
    for k in 0..segments {
        let a = 2.0 * PI * k as f64 / segments as f64;
        verts.push(Point3::new(radius * a.cos(), radius * a.sin(), hz));
    }
    let bottom = verts.len();
    verts.push(Point3::new(0.0, 0.0, -hz));
    let top = verts.len();
    verts.push(Point3::new(0.0, 0.0, hz));
    let mut faces = Vec::with_capacity(4 * segments);
    for k in 0..segments {
        let k1 = (k + 1) % segments;
        let (b0, b1, t0, t1) = (k, k1, segments + k, segments + k1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom, b1, b0]);
        faces.push([top, t0, t1]);
    }
    TriangleMesh::new(verts, faces).expect("cylinder is valid")
}

/// Flips faces whose normal points toward the origin. Only meaningful for
/// star-shaped meshes around the origin.
fn orient_outward(verts: &[Point3<f64>], faces: &mut [[usize; 3]]) {
    for f in faces.iter_mut() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let n = (b - a).cross(&(c - a));
        let centroid = (a.coords + b.coords + c.coords) / 3.0;
        if n.dot(&centroid) < 0.0 {
            f.swap(1, 2);
        }
    }
}
