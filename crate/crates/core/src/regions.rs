//! Surface-region maps: the visible surface split into `K` fragments around
//! farthest-point-sampled anchors, labeled per pixel via a dense
//! object-coordinate (correspondence) render.

use nalgebra::Point3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, CameraIntrinsics, Pose, TriangleMesh};
use crate::render::render_surface_points;
use crate::rng::{self, Domain};

pub const DEFAULT_REGION_COUNT: usize = 64;

/// Greedy farthest-point sampling. The first anchor is the point nearest the
/// centroid; each next anchor maximizes the distance to the chosen set.
/// `seed` only matters when several points tie exactly.
pub fn farthest_point_sampling(points: &[Point3<f64>], k: usize, seed: u64) -> Result<Vec<Point3<f64>>> {
    if k == 0 {
        return Err(Error::InvalidConfig("region count must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot pick {k} anchors from {} points",
            points.len()
        )));
    }
    let mut rng = rng::stream(seed, Domain::Anchors, 0);
    let mut pick = |scores: &[f64], maximize: bool| -> usize {
        let best = scores
            .iter()
            .copied()
            .fold(if maximize { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                if maximize {
                    a.max(b)
                } else {
                    a.min(b)
                }
            });
        let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
        if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.gen_range(0..ties.len())]
        }
    };
    let n = points.len() as f64;
    let centroid = Point3::from(points.iter().map(|p| p.coords).sum::<nalgebra::Vector3<f64>>() / n);
    let to_centroid: Vec<f64> = points.iter().map(|p| (p - centroid).norm_squared()).collect();
    let first = pick(&to_centroid, false);
    let mut anchors = vec![points[first]];
    let mut min_dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while anchors.len() < k {
        let next = pick(&min_dist, true);
        if min_dist[next] == 0.0 {
            return Err(Error::Degenerate(format!(
                "only {} distinct points available for {k} anchors",
                anchors.len()
            )));
        }
        let a = points[next];
        anchors.push(a);
        for (d, p) in min_dist.iter_mut().zip(points) {
            *d = d.min((p - a).norm_squared());
        }
    }
    Ok(anchors)
}

/// Per-pixel object coordinates of the first visible surface point,
/// normalized to `[0, 1]^3` by the mesh bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub width: usize,
    pub height: usize,
    pub coords: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
    pub bounds: Aabb,
}

impl CorrespondenceMap {
    /// Object-frame point of a valid pixel.
    pub fn denormalize(&self, i: usize) -> Option<Point3<f64>> {
        self.valid[i].then(|| denormalize(&self.bounds, self.coords[i]))
    }
}

fn normalize(bounds: &Aabb, p: &Point3<f64>) -> [f64; 3] {
    let e = bounds.extent();
    let mut out = [0.5; 3];
    for a in 0..3 {
        if e[a] > 0.0 {
            out[a] = ((p[a] - bounds.min[a]) / e[a]).clamp(0.0, 1.0);
        }
    }
    out
}

fn denormalize(bounds: &Aabb, c: [f64; 3]) -> Point3<f64> {
    let e = bounds.extent();
    Point3::new(
        bounds.min.x + c[0] * e.x,
        bounds.min.y + c[1] * e.y,
        bounds.min.z + c[2] * e.z,
    )
}

pub fn render_correspondence(mesh: &TriangleMesh, pose: &Pose, intr: &CameraIntrinsics) -> CorrespondenceMap {
    let bounds = mesh.bounds();
    let hits = render_surface_points(mesh, pose, intr);
    let valid = hits.iter().map(Option::is_some).collect();
    let coords = hits
        .iter()
        .map(|h| h.map_or([0.0; 3], |p| normalize(&bounds, &p)))
        .collect();
    CorrespondenceMap {
        width: intr.width,
        height: intr.height,
        coords,
        valid,
        bounds,
    }
}

/// Hard region labels: 0 for background, `1..=K` for the nearest anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub anchors: Vec<Point3<f64>>,
}

impl RegionMap {
    pub fn region_count(&self) -> usize {
        self.anchors.len()
    }

    /// Pixel count per label, index 0 = background.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.anchors.len() + 1];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

/// Index of the nearest anchor; ties resolve to the lowest index.
pub fn nearest_anchor(p: &Point3<f64>, anchors: &[Point3<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, a) in anchors.iter().enumerate() {
        let d = (p - a).norm_squared();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

pub fn regions_from_correspondence(corr: &CorrespondenceMap, anchors: &[Point3<f64>], bounds: &Aabb) -> RegionMap {
    let labels = corr
        .coords
        .iter()
        .zip(&corr.valid)
        .map(|(c, &v)| {
            if v {
                nearest_anchor(&denormalize(bounds, *c), anchors) as u32 + 1
            } else {
                0
            }
        })
        .collect();
    RegionMap {
        width: corr.width,
        height: corr.height,
        labels,
        anchors: anchors.to_vec(),
    }
}

/// Correspondence render followed by nearest-anchor labeling.
pub fn render_regions(mesh: &TriangleMesh, pose: &Pose, intr: &CameraIntrinsics, anchors: &[Point3<f64>]) -> RegionMap {
    let corr = render_correspondence(mesh, pose, intr);
    regions_from_correspondence(&corr, anchors, &corr.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;
    use nalgebra::Vector3;

    #[test]
    fn single_anchor_is_centroid_nearest() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.4, 0.1, 0.0),
            Point3::new(5.0, 0.0, 0.0),
        ];
        // Centroid (1.6, 0.025, 0): nearest is (1, 0, 0).
        assert_eq!(farthest_point_sampling(&pts, 1, 0).unwrap(), vec![pts[1]]);
    }

    #[test]
    fn second_anchor_is_farthest_from_first() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.5, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        let got = farthest_point_sampling(&pts, 2, 3).unwrap();
        // Centroid is the midpoint, which starts the set.
        assert_eq!(got[0], pts[1]);
        // Brute force over the remaining points: maximize distance to the first anchor.
        let best = pts
            .iter()
            .map(|p| (p - got[0]).norm())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((got[1] - got[0]).norm(), best);
        assert!(got[1] == pts[0] || got[1] == pts[2]);
        let third = farthest_point_sampling(&pts, 3, 3).unwrap();
        assert_eq!(&third[..2], &got[..]);
    }

    #[test]
    fn all_points_with_non_increasing_gaps() {
        let mesh = shapes::icosphere(1, 1.0);
        let pts = mesh.vertices();
        let anchors = farthest_point_sampling(pts, pts.len(), 9).unwrap();
        assert_eq!(anchors.len(), pts.len());
        let mut gaps = Vec::new();
        for k in 1..anchors.len() {
            let gap = anchors[..k].iter().map(|a| (a - anchors[k]).norm()).fold(f64::INFINITY, f64::min);
            gaps.push(gap);
        }
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn too_many_anchors() {
        let pts = vec![Point3::origin(); 3];
        assert!(farthest_point_sampling(&pts, 4, 0).is_err());
        assert!(farthest_point_sampling(&pts, 2, 0).is_err());
    }

    #[test]
    fn seed_breaks_exact_ties_only() {
        let mesh = shapes::unit_cube();
        let a = farthest_point_sampling(mesh.vertices(), 4, 1).unwrap();
        let b = farthest_point_sampling(mesh.vertices(), 4, 1).unwrap();
        assert_eq!(a, b);
        let seeds: std::collections::HashSet<String> = (0..20)
            .map(|s| format!("{:?}", farthest_point_sampling(mesh.vertices(), 1, s).unwrap()))
            .collect();
        // All eight cube corners tie for the centroid.
        assert!(seeds.len() > 1);
    }

    #[test]
    fn cube_front_face_has_constant_z_coordinate() {
        let mesh = shapes::unit_cube();
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 3.0));
        let intr = CameraIntrinsics::centered(40.0, 32, 32);
        let corr = render_correspondence(&mesh, &pose, &intr);
        let n = corr.valid.iter().filter(|&&v| v).count();
        assert!(n > 0);
        for i in 0..corr.coords.len() {
            if corr.valid[i] {
                assert!(corr.coords[i][2].abs() < 1e-12);
            } else {
                assert_eq!(corr.coords[i], [0.0; 3]);
            }
        }
        assert!(!corr.valid[0]);
    }

    #[test]
    fn one_region_labels_everything_one() {
        let mesh = shapes::icosphere(2, 0.1);
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
        let intr = CameraIntrinsics::centered(80.0, 32, 32);
        let anchors = farthest_point_sampling(mesh.vertices(), 1, 0).unwrap();
        let r = render_regions(&mesh, &pose, &intr, &anchors);
        assert!(r.labels.iter().all(|&l| l <= 1));
        assert!(r.labels.contains(&1));
    }

    #[test]
    fn anchor_point_gets_its_own_label() {
        let anchors = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert_eq!(nearest_anchor(&anchors[1], &anchors), 1);
        // Equidistant: lowest index.
        assert_eq!(nearest_anchor(&Point3::new(0.5, 0.0, 0.0), &anchors), 0);
    }
}
