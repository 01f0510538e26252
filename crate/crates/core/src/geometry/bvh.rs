//! Axis-aligned bounding-volume hierarchy over mesh triangles.
//!
//! Built once per mesh in the object frame with a median split along the
//! longest centroid axis. Construction only depends on the triangle list, so
//! two builds of the same mesh produce identical trees.

use nalgebra::{Point3, Vector3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    fn longest_axis(&self) -> usize {
        self.extent().imax()
    }

    /// Slab test; returns the entry distance if the box overlaps `[t_min, t_max]`.
    #[inline]
    pub fn hit(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for a in 0..3 {
            let t0 = (self.min[a] - origin[a]) * inv_dir[a];
            let t1 = (self.max[a] - origin[a]) * inv_dir[a];
            // 0 * inf: the origin lies on the slab boundary with a parallel
            // ray, which counts as inside.
            if t0.is_nan() || t1.is_nan() {
                continue;
            }
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            if near > lo {
                lo = near;
            }
            if far < hi {
                hi = far;
            }
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(triangles: &[[Point3<f64>; 3]]) -> Bvh {
        let boxes: Vec<Aabb> = triangles.iter().map(|t| Aabb::from_points(t.iter())).collect();
        let centroids: Vec<Point3<f64>> = boxes.iter().map(Aabb::center).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build_node(&mut nodes, &mut order, 0, triangles.len(), &boxes, &centroids);
        }
        Bvh { nodes, order }
    }

    /// Visits candidate triangles front to back. `test` returns the hit distance
    /// of a triangle; the closest hit `(t, triangle)` wins, ties go to the
    /// lower triangle index.
    pub fn closest<F>(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_min: f64, mut test: F) -> Option<(f64, usize)>
    where
        F: FnMut(usize) -> Option<f64>,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize)> = None;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        if let Some(t) = self.nodes[0].bounds().hit(origin, &inv_dir, t_min, f64::INFINITY) {
            stack.push((0, t));
        }
        while let Some((idx, entry)) = stack.pop() {
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            // Equal entry distance may still hold a lower-index tie.
            if entry > limit {
                continue;
            }
            match &self.nodes[idx] {
                Node::Leaf { start, count, .. } => {
                    for &tri in &self.order[*start..*start + *count] {
                        if let Some(t) = test(tri) {
                            let better = match best {
                                None => true,
                                Some((bt, bi)) => t < bt || (t == bt && tri < bi),
                            };
                            if better {
                                best = Some((t, tri));
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let limit = best.map_or(f64::INFINITY, |b| b.0);
                    let hl = self.nodes[*left].bounds().hit(origin, &inv_dir, t_min, limit);
                    let hr = self.nodes[*right].bounds().hit(origin, &inv_dir, t_min, limit);
                    match (hl, hr) {
                        (Some(a), Some(b)) => {
                            // Push the farther child first so the nearer pops next.
                            if a <= b {
                                stack.push((*right, b));
                                stack.push((*left, a));
                            } else {
                                stack.push((*left, a));
                                stack.push((*right, b));
                            }
                        }
                        (Some(a), None) => stack.push((*left, a)),
                        (None, Some(b)) => stack.push((*right, b)),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Point3<f64>],
) -> usize {
    let slice = &mut order[start..end];
    let bounds = slice.iter().fold(Aabb::empty(), |acc, &i| acc.merge(&boxes[i]));
    let idx = nodes.len();
    if slice.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start,
            count: slice.len(),
        });
        return idx;
    }
    let cbounds = Aabb::from_points(slice.iter().map(|&i| &centroids[i]));
    let axis = cbounds.longest_axis();
    slice.sort_by(|&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let mid = start + slice.len() / 2;
    nodes.push(Node::Leaf {
        bounds,
        start,
        count: 0,
    });
    let left = build_node(nodes, order, start, mid, boxes, centroids);
    let right = build_node(nodes, order, mid, end, boxes, centroids);
    nodes[idx] = Node::Inner {
        bounds,
        left,
        right,
    };
    idx
}

/// Watertight ray/triangle test (Woop, Benthin and Wald). Shared edges are
/// never missed by both adjacent triangles. Returns `t` when the hit lies in
/// `(t_min, inf)`.
#[inline]
pub fn intersect_triangle(
    origin: &Point3<f64>,
    shear: &RayShear,
    tri: &[Point3<f64>; 3],
    t_min: f64,
) -> Option<f64> {
    let (kx, ky, kz) = (shear.kx, shear.ky, shear.kz);
    let a = tri[0] - origin;
    let b = tri[1] - origin;
    let c = tri[2] - origin;
    let ax = a[kx] - shear.sx * a[kz];
    let ay = a[ky] - shear.sy * a[kz];
    let bx = b[kx] - shear.sx * b[kz];
    let by = b[ky] - shear.sy * b[kz];
    let cx = c[kx] - shear.sx * c[kz];
    let cy = c[ky] - shear.sy * c[kz];
    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let az = shear.sz * a[kz];
    let bz = shear.sz * b[kz];
    let cz = shear.sz * c[kz];
    let t = (u * az + v * bz + w * cz) / det;
    if t > t_min && t.is_finite() {
        Some(t)
    } else {
        None
    }
}

/// Per-ray constants of the watertight test.
#[derive(Debug, Clone, Copy)]
pub struct RayShear {
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
}

impl RayShear {
    pub fn new(dir: &Vector3<f64>) -> Self {
        let kz = dir.iamax();
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if dir[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        RayShear {
            kx,
            ky,
            kz,
            sx: dir[kx] / dir[kz],
            sy: dir[ky] / dir[kz],
            sz: 1.0 / dir[kz],
        }
    }
}
