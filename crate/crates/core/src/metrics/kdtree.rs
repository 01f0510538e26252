use nalgebra::Point3;

/// Static 3-D tree for exact nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    pub fn new(points: &[Point3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
        };
        tree.build(&mut idx, 0);
        tree
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let pts = &self.points;
        idx.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let node = self.nodes.len();
        self.nodes.push(Node {
            point: idx[mid],
            axis,
            left: None,
            right: None,
        });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    /// Distance from `q` to the nearest stored point.
    pub fn nearest_distance(&self, q: &Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        best.sqrt()
    }

    fn search(&self, node: usize, q: &Point3<f64>, best: &mut f64) {
        let n = self.nodes[node];
        let p = &self.points[n.point];
        let d2 = (p - q).norm_squared();
        if d2 < *best {
            *best = d2;
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        if let Some(c) = near {
            self.search(c, q, best);
        }
        if let Some(c) = far {
            if diff * diff <= *best {
                self.search(c, q, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3<f64>> = (0..300)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = Point3::new(rng.gen::<f64>() * 1.4 - 0.2, rng.gen(), rng.gen());
            let brute = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.nearest_distance(&q), brute);
        }
    }

    #[test]
    fn duplicates_and_empty() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let tree = KdTree::new(&[p, p, p]);
        assert_eq!(tree.nearest_distance(&p), 0.0);
        assert_eq!(KdTree::new(&[]).nearest_distance(&p), f64::INFINITY);
    }
}
