use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::bvh::{intersect_triangle, Aabb, Bvh, RayShear};
use super::{Pose, Ray};
use crate::error::{Error, Result};

/// Closed triangle surface in the object frame (meters).
///
/// Face normals come from the winding order (counter-clockwise seen from
/// outside). The BVH is built at construction, so a mesh is immutable and
/// can be shared across render threads.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Vector3<f64>>,
    diameter: f64,
    open_edges: usize,
    bounds: Aabb,
    bvh: Bvh,
}

/// Nearest ray/surface intersection in the camera (world) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Point3<f64>,
    /// Outward geometric normal.
    pub normal: Vector3<f64>,
    pub face: usize,
    /// True when the ray crosses the surface from outside to inside.
    pub entering: bool,
}

impl Hit {
    /// Normal flipped to oppose the ray direction.
    pub fn facing_normal(&self) -> Vector3<f64> {
        if self.entering {
            self.normal
        } else {
            -self.normal
        }
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices or no faces".into()));
        }
        if let Some(p) = vertices.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("non-finite vertex {p}")));
        }
        let mut face_normals = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex out of range ({f:?}, {} vertices)",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex index {f:?}")));
            }
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let len = n.norm();
            if !(len > 0.0) {
                return Err(Error::InvalidMesh(format!("face {fi} has zero area")));
            }
            face_normals.push(n / len);
        }
        let diameter = max_pairwise_distance(&vertices);
        if !(diameter > 0.0) {
            return Err(Error::InvalidMesh("mesh diameter is zero".into()));
        }
        let open_edges = count_open_edges(&faces);
        let bounds = Aabb::from_points(vertices.iter());
        let tris: Vec<[Point3<f64>; 3]> = faces
            .iter()
            .map(|f| [vertices[f[0]], vertices[f[1]], vertices[f[2]]])
            .collect();
        let bvh = Bvh::build(&tris);
        Ok(TriangleMesh {
            vertices,
            faces,
            face_normals,
            diameter,
            open_edges,
            bounds,
            bvh,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normals
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Every edge shared by exactly two faces with opposite orientation.
    pub fn is_closed(&self) -> bool {
        self.open_edges == 0
    }

    pub fn open_edge_count(&self) -> usize {
        self.open_edges
    }

    pub fn ensure_closed(&self) -> Result<()> {
        if self.is_closed() {
            Ok(())
        } else {
            Err(Error::OpenMesh {
                open_edges: self.open_edges,
            })
        }
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Closest object-frame hit beyond `t_min`, skipping `exclude`.
    pub fn intersect_local(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        exclude: Option<usize>,
    ) -> Option<(f64, usize)> {
        let shear = RayShear::new(dir);
        self.bvh.closest(origin, dir, t_min, |face| {
            if Some(face) == exclude {
                return None;
            }
            intersect_triangle(origin, &shear, &self.triangle(face), t_min)
        })
    }

    /// Reference intersection that tests every triangle; same tie rule as
    /// the BVH path (smallest `t`, then lowest face index).
    pub fn intersect_exhaustive(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        exclude: Option<usize>,
    ) -> Option<(f64, usize)> {
        let shear = RayShear::new(dir);
        let mut best: Option<(f64, usize)> = None;
        for face in 0..self.faces.len() {
            if Some(face) == exclude {
                continue;
            }
            if let Some(t) = intersect_triangle(origin, &shear, &self.triangle(face), t_min) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, face));
                }
            }
        }
        best
    }

    /// Nearest hit of a camera-frame ray against the mesh placed at `pose`.
    pub fn intersect(&self, ray: &Ray, pose: &Pose, t_min: f64, exclude: Option<usize>) -> Option<Hit> {
        let origin = pose.inverse_transform_point(&ray.origin);
        let dir = pose.rotation().transpose() * ray.direction;
        let (t, face) = self.intersect_local(&origin, &dir, t_min, exclude)?;
        let normal = pose.transform_vector(&self.face_normals[face]);
        Some(Hit {
            t,
            point: ray.at(t),
            normal,
            face,
            entering: ray.direction.dot(&normal) < 0.0,
        })
    }
}

/// Nearest intersection of `ray` with `mesh` at `pose`, or `None` on a miss.
pub fn ray_mesh_intersect(ray: &Ray, mesh: &TriangleMesh, pose: &Pose) -> Option<Hit> {
    mesh.intersect(ray, pose, 0.0, None)
}

fn max_pairwise_distance(points: &[Point3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

fn count_open_edges(faces: &[[usize; 3]]) -> usize {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut open = 0;
    for (&(a, b), &n) in &directed {
        let twin = directed.get(&(b, a)).copied().unwrap_or(0);
        if n != 1 || twin != 1 {
            open += 1;
        }
    }
    open
}
