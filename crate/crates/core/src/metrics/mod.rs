//! Pose-error metrics: ADD, ADD-S, MSSD, MSPD, VSD, Average Recall and
//! keypoint MAE.

mod kdtree;

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use crate::regions::farthest_point_sampling;
use crate::render::render_depth;

pub use kdtree::KdTree;

/// Fraction of the diameter used by the ADD(-S) recall.
pub const ADD_THRESHOLD: f64 = 0.1;
/// Model points above this count are resampled for ADD-family metrics.
pub const MAX_MODEL_POINTS: usize = 10_000;

fn ensure_points(points: &[Point3<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("model point set is empty".into()));
    }
    Ok(())
}

pub fn add(pose_gt: &Pose, pose_est: &Pose, points: &[Point3<f64>]) -> Result<f64> {
    ensure_points(points)?;
    let sum: f64 = points
        .iter()
        .map(|p| (pose_gt.transform_point(p) - pose_est.transform_point(p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean distance from each ground-truth point to the closest estimated
/// point, using a kd-tree.
pub fn add_s(pose_gt: &Pose, pose_est: &Pose, points: &[Point3<f64>]) -> Result<f64> {
    ensure_points(points)?;
    let est: Vec<Point3<f64>> = points.iter().map(|p| pose_est.transform_point(p)).collect();
    let tree = KdTree::new(&est);
    let sum: f64 = points
        .iter()
        .map(|p| tree.nearest_distance(&pose_gt.transform_point(p)))
        .sum();
    Ok(sum / points.len() as f64)
}

/// Quadratic-time reference for [`add_s`].
pub fn add_s_brute(pose_gt: &Pose, pose_est: &Pose, points: &[Point3<f64>]) -> Result<f64> {
    ensure_points(points)?;
    let est: Vec<Point3<f64>> = points.iter().map(|p| pose_est.transform_point(p)).collect();
    let sum: f64 = points
        .iter()
        .map(|p| {
            let g = pose_gt.transform_point(p);
            est.iter().map(|e| (e - g).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(sum / points.len() as f64)
}

/// Fraction of `distances` strictly below `threshold_fraction * diameter`.
pub fn add_recall(distances: &[f64], diameter: f64, threshold_fraction: f64) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    let limit = threshold_fraction * diameter;
    distances.iter().filter(|&&d| d < limit).count() as f64 / distances.len() as f64
}

/// Continuous rotational symmetry about an axis through the object origin,
/// sampled at `steps` equally spaced angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSymmetry {
    pub axis: [f64; 3],
    pub steps: usize,
}

/// Object-frame rotations under which the object looks the same.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetrySpec {
    /// Row-major rotation matrices. The identity is implied.
    pub discrete: Vec<[[f64; 3]; 3]>,
    pub continuous: Vec<ContinuousSymmetry>,
}

impl SymmetrySpec {
    pub fn none() -> Self {
        SymmetrySpec::default()
    }

    pub fn discrete(rotations: &[Matrix3<f64>]) -> Self {
        SymmetrySpec {
            discrete: rotations
                .iter()
                .map(|m| std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])))
                .collect(),
            continuous: Vec::new(),
        }
    }

    pub fn continuous(axis: Vector3<f64>, steps: usize) -> Self {
        SymmetrySpec {
            discrete: Vec::new(),
            continuous: vec![ContinuousSymmetry {
                axis: [axis.x, axis.y, axis.z],
                steps,
            }],
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.transforms().map(|t| t.len() > 1).unwrap_or(false)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.discrete {
            let m = Matrix3::from_fn(|r, c| m[r][c]);
            let err = (m.transpose() * m - Matrix3::identity()).abs().max();
            if !(err < 1e-9) || !((m.determinant() - 1.0).abs() < 1e-9) {
                return Err(Error::InvalidConfig("symmetry transform is not a proper rotation".into()));
            }
        }
        for c in &self.continuous {
            let a = Vector3::from(c.axis);
            if !(a.norm() > 0.0) || !a.iter().all(|v| v.is_finite()) || c.steps < 1 {
                return Err(Error::InvalidConfig(
                    "continuous symmetry needs a nonzero axis and steps >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// All listed transforms, identity first. Discrete transforms are
    /// combined with every sample of each continuous axis.
    pub fn transforms(&self) -> Result<Vec<Matrix3<f64>>> {
        self.validate()?;
        let mut out = vec![Matrix3::identity()];
        out.extend(self.discrete.iter().map(|m| Matrix3::from_fn(|r, c| m[r][c])));
        for c in &self.continuous {
            let axis = Unit::new_normalize(Vector3::from(c.axis));
            let base = out.clone();
            for k in 1..c.steps {
                let angle = std::f64::consts::TAU * k as f64 / c.steps as f64;
                let r = *Rotation3::from_axis_angle(&axis, angle).matrix();
                out.extend(base.iter().map(|m| r * m));
            }
        }
        Ok(out)
    }
}

/// `min_S max_x ‖(R_est S) x + t_est − (R_gt x + t_gt)‖`.
pub fn mssd(pose_gt: &Pose, pose_est: &Pose, points: &[Point3<f64>], sym: &SymmetrySpec) -> Result<f64> {
    ensure_points(points)?;
    let gt: Vec<Point3<f64>> = points.iter().map(|p| pose_gt.transform_point(p)).collect();
    let mut best = f64::INFINITY;
    for s in sym.transforms()? {
        let r = pose_est.rotation() * s;
        let worst = points
            .iter()
            .zip(&gt)
            .map(|(p, g)| (r * p.coords + pose_est.translation() - g.coords).norm())
            .fold(0.0, f64::max);
        best = best.min(worst);
    }
    Ok(best)
}

/// Like [`mssd`] but measured between 2-D projections, in pixels.
pub fn mspd(
    pose_gt: &Pose,
    pose_est: &Pose,
    points: &[Point3<f64>],
    sym: &SymmetrySpec,
    intr: &CameraIntrinsics,
) -> Result<f64> {
    ensure_points(points)?;
    let gt: Vec<Point2<f64>> = points
        .iter()
        .map(|p| intr.project(&pose_gt.transform_point(p)))
        .collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    for s in sym.transforms()? {
        let r = pose_est.rotation() * s;
        let mut worst: f64 = 0.0;
        for (p, g) in points.iter().zip(&gt) {
            let e = intr.project(&Point3::from(r * p.coords + pose_est.translation()))?;
            worst = worst.max((e - g).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Fraction of the union of the two visibility masks (depth > 0) where the
/// object is missing from either map or the depths differ by at least `tau`.
pub fn vsd(depth_gt: &[f64], depth_est: &[f64], tau: f64) -> Result<f64> {
    if depth_gt.len() != depth_est.len() {
        return Err(Error::InvalidConfig(format!(
            "depth maps differ in size: {} vs {}",
            depth_gt.len(),
            depth_est.len()
        )));
    }
    let mut union = 0usize;
    let mut bad = 0usize;
    for (&g, &e) in depth_gt.iter().zip(depth_est) {
        let (vg, ve) = (g > 0.0, e > 0.0);
        if vg || ve {
            union += 1;
            if !(vg && ve) || (g - e).abs() >= tau {
                bad += 1;
            }
        }
    }
    Ok(if union == 0 { 0.0 } else { bad as f64 / union as f64 })
}

/// Threshold grids for Average Recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArThresholds {
    /// VSD misalignment tolerance, as fractions of the diameter.
    pub vsd_tau: Vec<f64>,
    /// VSD correctness thresholds.
    pub vsd_theta: Vec<f64>,
    /// MSSD thresholds, as fractions of the diameter.
    pub mssd: Vec<f64>,
    /// MSPD thresholds, as multiples of image diagonal / 640.
    pub mspd: Vec<f64>,
}

fn steps_of(first: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| first + step * k as f64).collect()
}

impl Default for ArThresholds {
    fn default() -> Self {
        ArThresholds {
            vsd_tau: steps_of(0.05, 0.05, 10),
            vsd_theta: steps_of(0.05, 0.05, 10),
            mssd: steps_of(0.05, 0.05, 10),
            mspd: steps_of(5.0, 5.0, 10),
        }
    }
}

/// Per-instance metric values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub add: f64,
    pub add_s: f64,
    pub mssd: f64,
    pub mspd: f64,
    /// VSD at each `vsd_tau` threshold.
    pub vsd: Vec<f64>,
    /// Fraction of the VSD (tau, theta) grid passed.
    pub vsd_recall: f64,
    pub mae: Option<f64>,
    pub diameter: f64,
    pub symmetric: bool,
}

impl InstanceMetrics {
    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn add_or_add_s(&self) -> f64 {
        if self.symmetric {
            self.add_s
        } else {
            self.add
        }
    }
}

fn grid_recall(values: impl Iterator<Item = bool>) -> f64 {
    let (mut n, mut pass) = (0usize, 0usize);
    for ok in values {
        n += 1;
        pass += ok as usize;
    }
    if n == 0 {
        0.0
    } else {
        pass as f64 / n as f64
    }
}

fn vsd_recall(vsd_by_tau: &[f64], thetas: &[f64]) -> f64 {
    grid_recall(vsd_by_tau.iter().flat_map(|&e| thetas.iter().map(move |&t| e < t)))
}

/// Recalls of the three AR components, each averaged over its threshold
/// grid and over instances: `(vsd, mssd, mspd)`.
pub fn ar_components(
    instances: &[InstanceMetrics],
    diameters: &[f64],
    intr: &CameraIntrinsics,
    grid: &ArThresholds,
) -> Result<(f64, f64, f64)> {
    if instances.len() != diameters.len() {
        return Err(Error::InvalidConfig("one diameter per instance is required".into()));
    }
    if instances.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let r = intr.diagonal() / 640.0;
    let n = instances.len() as f64;
    let vsd = instances.iter().map(|m| vsd_recall(&m.vsd, &grid.vsd_theta)).sum::<f64>() / n;
    let mssd = instances
        .iter()
        .zip(diameters)
        .map(|(m, d)| grid_recall(grid.mssd.iter().map(|t| m.mssd < t * d)))
        .sum::<f64>()
        / n;
    let mspd = instances
        .iter()
        .map(|m| grid_recall(grid.mspd.iter().map(|t| m.mspd < t * r)))
        .sum::<f64>()
        / n;
    Ok((vsd, mssd, mspd))
}

/// Average Recall: mean of the VSD, MSSD and MSPD recalls.
pub fn ar_score(
    instances: &[InstanceMetrics],
    diameters: &[f64],
    intr: &CameraIntrinsics,
    grid: &ArThresholds,
) -> Result<f64> {
    let (a, b, c) = ar_components(instances, diameters, intr, grid)?;
    Ok((a + b + c) / 3.0)
}

/// Mean absolute per-coordinate error between the projections of `kps_3d`
/// under `pose_est` and the reference 2-D keypoints.
pub fn mae_keypoints(
    kps_3d: &[Point3<f64>],
    pose_est: &Pose,
    intr: &CameraIntrinsics,
    kps_2d: &[Point2<f64>],
) -> Result<f64> {
    if kps_3d.is_empty() || kps_3d.len() != kps_2d.len() {
        return Err(Error::InvalidConfig(format!(
            "keypoint counts must match and be nonzero ({} 3-D vs {} 2-D)",
            kps_3d.len(),
            kps_2d.len()
        )));
    }
    let mut sum = 0.0;
    for (p, q) in kps_3d.iter().zip(kps_2d) {
        let e = intr.project(&pose_est.transform_point(p))?;
        sum += (e.x - q.x).abs() + (e.y - q.y).abs();
    }
    Ok(sum / (2 * kps_3d.len()) as f64)
}

/// Points used for ADD-family metrics: the mesh vertices, or a farthest-point
/// subsample when there are more than `max_points`. The label describes the
/// choice.
pub fn model_points(mesh: &TriangleMesh, max_points: usize, seed: u64) -> Result<(Vec<Point3<f64>>, String)> {
    let v = mesh.vertices();
    if v.len() <= max_points {
        Ok((v.to_vec(), format!("vertices:{}", v.len())))
    } else {
        Ok((farthest_point_sampling(v, max_points, seed)?, format!("fps:{max_points}")))
    }
}

/// Everything needed to score one estimate.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub mesh: &'a TriangleMesh,
    pub points: &'a [Point3<f64>],
    pub pose_gt: &'a Pose,
    pub pose_est: &'a Pose,
    pub intr: &'a CameraIntrinsics,
    pub symmetry: &'a SymmetrySpec,
    /// Object-frame 3-D keypoints and their reference 2-D positions.
    pub keypoints: Option<(&'a [Point3<f64>], &'a [Point2<f64>])>,
}

pub fn evaluate_instance(inst: &Instance<'_>, grid: &ArThresholds) -> Result<InstanceMetrics> {
    let d = inst.mesh.diameter();
    let depth_gt = render_depth(inst.mesh, inst.pose_gt, inst.intr);
    let depth_est = render_depth(inst.mesh, inst.pose_est, inst.intr);
    let vsd_values = grid
        .vsd_tau
        .iter()
        .map(|t| vsd(&depth_gt, &depth_est, t * d))
        .collect::<Result<Vec<_>>>()?;
    let mae = match inst.keypoints {
        Some((k3, k2)) => Some(mae_keypoints(k3, inst.pose_est, inst.intr, k2)?),
        None => None,
    };
    Ok(InstanceMetrics {
        add: add(inst.pose_gt, inst.pose_est, inst.points)?,
        add_s: add_s(inst.pose_gt, inst.pose_est, inst.points)?,
        mssd: mssd(inst.pose_gt, inst.pose_est, inst.points, inst.symmetry)?,
        mspd: mspd(inst.pose_gt, inst.pose_est, inst.points, inst.symmetry, inst.intr)?,
        vsd_recall: vsd_recall(&vsd_values, &grid.vsd_theta),
        vsd: vsd_values,
        mae,
        diameter: d,
        symmetric: inst.symmetry.is_symmetric(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instances: Vec<InstanceMetrics>,
    /// ADD (ADD-S for symmetric objects) below 0.1 diameter.
    pub add_recall_01d: f64,
    pub ar: f64,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    /// Mean over instances that carry keypoints.
    pub mae: Option<f64>,
    pub model_points: String,
}

/// Scores every instance (in parallel, results kept in input order) and
/// aggregates. AR uses the image diagonal of each instance's intrinsics.
pub fn evaluate(instances: &[Instance<'_>], grid: &ArThresholds, model_points: &str) -> Result<MetricReport> {
    let per: Vec<InstanceMetrics> = instances
        .par_iter()
        .map(|i| evaluate_instance(i, grid))
        .collect::<Result<_>>()?;
    let n = per.len().max(1) as f64;
    let add_recall_01d = if per.is_empty() {
        0.0
    } else {
        per.iter()
            .filter(|m| m.add_or_add_s() < ADD_THRESHOLD * m.diameter)
            .count() as f64
            / n
    };
    let (mut v, mut s, mut p) = (0.0, 0.0, 0.0);
    for (m, inst) in per.iter().zip(instances) {
        let (a, b, c) = ar_components(std::slice::from_ref(m), &[m.diameter], inst.intr, grid)?;
        v += a;
        s += b;
        p += c;
    }
    let (v, s, p) = if per.is_empty() { (0.0, 0.0, 0.0) } else { (v / n, s / n, p / n) };
    let maes: Vec<f64> = per.iter().filter_map(|m| m.mae).collect();
    let mae = (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64);
    Ok(MetricReport {
        add_recall_01d,
        ar: (v + s + p) / 3.0,
        ar_vsd: v,
        ar_mssd: s,
        ar_mspd: p,
        mae,
        model_points: model_points.to_string(),
        instances: per,
    })
}
