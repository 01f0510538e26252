//! Forward loss functions over mattes and poses.
//!
//! Conventions (`gt` first, `est` second):
//! - flow and attenuation losses are gated by the ground-truth mask;
//! - the mask loss is taken over the whole image with a soft estimate;
//! - `Normalization::Mean` divides by the gated pixel count (the whole image
//!   for the mask loss), `Sum` keeps the plain L1 norm.
//!
//! Reductions use row-major pairwise summation so results do not depend on
//! how the caller parallelizes.

use nalgebra::{Matrix3, Point3};
use serde::{Deserialize, Serialize};

use crate::compositing::composite;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::RfaMaps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Mean,
    Sum,
}

/// Scale-invariant translation parameters: object-center offset from the crop
/// center in crop units, and crop-zoom-scaled depth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseDeltas {
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_z: f64,
}

/// Rotation plus translation deltas, as supervised by the pose loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLabel {
    pub rotation: Matrix3<f64>,
    pub deltas: PoseDeltas,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub flow: f64,
    pub rho: f64,
    pub mask: f64,
    pub inter: f64,
    pub rot: f64,
    pub center: f64,
    pub z: f64,
    pub pose: f64,
    pub comp: f64,
    pub total: f64,
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn normalize(sum: f64, count: f64, norm: Normalization) -> f64 {
    match norm {
        Normalization::Sum => sum,
        Normalization::Mean if count > 0.0 => sum / count,
        Normalization::Mean => 0.0,
    }
}

fn gate_total(gt: &RfaMaps) -> f64 {
    pairwise_sum(&gt.mask)
}

pub fn loss_flow(gt: &RfaMaps, est: &RfaMaps, norm: Normalization) -> Result<f64> {
    gt.ensure_same_size(est)?;
    let terms: Vec<f64> = (0..gt.len())
        .map(|i| {
            let g = gt.mask[i];
            g * ((est.flow[i][0] - gt.flow[i][0]).abs() + (est.flow[i][1] - gt.flow[i][1]).abs())
        })
        .collect();
    Ok(normalize(pairwise_sum(&terms), gate_total(gt), norm))
}

pub fn loss_rho(gt: &RfaMaps, est: &RfaMaps, norm: Normalization) -> Result<f64> {
    gt.ensure_same_size(est)?;
    let terms: Vec<f64> = (0..gt.len())
        .map(|i| gt.mask[i] * (est.rho[i] - gt.rho[i]).abs())
        .collect();
    Ok(normalize(pairwise_sum(&terms), gate_total(gt), norm))
}

pub fn loss_mask(gt: &RfaMaps, est: &RfaMaps, norm: Normalization) -> Result<f64> {
    gt.ensure_same_size(est)?;
    let terms: Vec<f64> = gt.mask.iter().zip(&est.mask).map(|(g, e)| (e - g).abs()).collect();
    Ok(normalize(pairwise_sum(&terms), gt.len() as f64, norm))
}

/// Flow + attenuation + mask.
pub fn loss_inter(gt: &RfaMaps, est: &RfaMaps, norm: Normalization) -> Result<f64> {
    Ok(loss_flow(gt, est, norm)? + loss_rho(gt, est, norm)? + loss_mask(gt, est, norm)?)
}

/// Mean over model points of `|R_gt x - R_est x|_1`.
pub fn loss_rot(r_gt: &Matrix3<f64>, r_est: &Matrix3<f64>, points: &[Point3<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Degenerate("rotation loss needs at least one model point".into()));
    }
    let terms: Vec<f64> = points
        .iter()
        .map(|p| (r_gt * p.coords - r_est * p.coords).abs().sum())
        .collect();
    Ok(pairwise_sum(&terms) / points.len() as f64)
}

pub fn loss_center(gt: &PoseDeltas, est: &PoseDeltas) -> f64 {
    (gt.delta_x - est.delta_x).abs() + (gt.delta_y - est.delta_y).abs()
}

pub fn loss_z(gt: &PoseDeltas, est: &PoseDeltas) -> f64 {
    (gt.delta_z - est.delta_z).abs()
}

/// Rotation + center + depth.
pub fn loss_pose(gt: &PoseLabel, est: &PoseLabel, points: &[Point3<f64>]) -> Result<f64> {
    Ok(loss_rot(&gt.rotation, &est.rotation, points)? + loss_center(&gt.deltas, &est.deltas) + loss_z(&gt.deltas, &est.deltas))
}

/// Composites both mattes over `background`, gates each result by its own
/// mask and takes the L1 difference. `Mean` divides by (pixels in either
/// mask) x channels.
pub fn loss_comp(gt: &RfaMaps, est: &RfaMaps, background: &Image, norm: Normalization) -> Result<f64> {
    gt.ensure_same_size(est)?;
    let c_gt = composite(gt, background)?;
    let c_est = composite(est, background)?;
    let ch = background.channels();
    let mut union = 0.0;
    let terms: Vec<f64> = (0..gt.len())
        .map(|i| {
            let (mg, me) = (gt.mask[i], est.mask[i]);
            if mg > 0.0 || me > 0.0 {
                union += 1.0;
            }
            let a = &c_gt.data()[i * ch..(i + 1) * ch];
            let b = &c_est.data()[i * ch..(i + 1) * ch];
            a.iter().zip(b).map(|(x, y)| (mg * x - me * y).abs()).sum::<f64>()
        })
        .collect();
    Ok(normalize(pairwise_sum(&terms), union * ch as f64, norm))
}

/// Intermediate, pose and compositing losses with their sum.
pub fn loss_total(
    gt: &RfaMaps,
    est: &RfaMaps,
    background: &Image,
    pose_gt: &PoseLabel,
    pose_est: &PoseLabel,
    points: &[Point3<f64>],
    norm: Normalization,
) -> Result<LossBreakdown> {
    let flow = loss_flow(gt, est, norm)?;
    let rho = loss_rho(gt, est, norm)?;
    let mask = loss_mask(gt, est, norm)?;
    let inter = flow + rho + mask;
    let rot = loss_rot(&pose_gt.rotation, &pose_est.rotation, points)?;
    let center = loss_center(&pose_gt.deltas, &pose_est.deltas);
    let z = loss_z(&pose_gt.deltas, &pose_est.deltas);
    let pose = rot + center + z;
    let comp = loss_comp(gt, est, background, norm)?;
    Ok(LossBreakdown {
        flow,
        rho,
        mask,
        inter,
        rot,
        center,
        z,
        pose,
        comp,
        total: inter + pose + comp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    fn blob(w: usize, h: usize) -> RfaMaps {
        let mut m = RfaMaps::empty(w, h);
        for i in 0..w * h {
            if i % 3 != 0 {
                m.mask[i] = 1.0;
                m.rho[i] = 0.9;
                m.flow[i] = [i as f64 * 0.1, -(i as f64) * 0.05];
            }
        }
        m
    }

    #[test]
    fn identical_maps_give_zero() {
        let m = blob(5, 4);
        assert_eq!(loss_inter(&m, &m, Normalization::Mean).unwrap(), 0.0);
        let bg = Image::filled(5, 4, &[0.3, 0.6, 0.9]);
        assert_eq!(loss_comp(&m, &m, &bg, Normalization::Mean).unwrap(), 0.0);
    }

    #[test]
    fn constant_flow_offset_is_one() {
        let gt = blob(7, 5);
        let mut est = gt.clone();
        for f in &mut est.flow {
            f[0] += 1.0;
        }
        assert!((loss_flow(&gt, &est, Normalization::Mean).unwrap() - 1.0).abs() < 1e-12);
        let n = gt.mask_count() as f64;
        assert!((loss_flow(&gt, &est, Normalization::Sum).unwrap() - n).abs() < 1e-9);
    }

    #[test]
    fn complementary_mask_is_one() {
        let mut gt = RfaMaps::empty(2, 2);
        gt.mask = vec![1.0, 0.0, 1.0, 0.0];
        let mut est = RfaMaps::empty(2, 2);
        est.mask = vec![0.0, 1.0, 0.0, 1.0];
        assert_eq!(loss_mask(&gt, &est, Normalization::Mean).unwrap(), 1.0);
    }

    #[test]
    fn half_turn_rotation_loss() {
        let r = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI).matrix();
        let l = loss_rot(&Matrix3::identity(), &r, &[Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        assert!(loss_rot(&r, &r, &[]).is_err());
    }

    #[test]
    fn center_loss_adds_axes() {
        let gt = PoseDeltas::default();
        let est = PoseDeltas {
            delta_x: 0.3,
            delta_y: -0.4,
            delta_z: 0.0,
        };
        assert!((loss_center(&gt, &est) - 0.7).abs() < 1e-15);
        assert_eq!(loss_z(&gt, &est), 0.0);
    }

    #[test]
    fn comp_is_linear_in_rho_difference() {
        let mut gt = RfaMaps::empty(3, 3);
        for i in [1, 4, 5] {
            gt.mask[i] = 1.0;
            gt.rho[i] = 0.9;
        }
        let mut est = gt.clone();
        for i in [1, 4, 5] {
            est.rho[i] = 0.4;
        }
        let bg = Image::filled(3, 3, &[1.0]);
        assert!((loss_comp(&gt, &est, &bg, Normalization::Mean).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn size_mismatch_errors() {
        assert!(loss_flow(&RfaMaps::empty(2, 2), &RfaMaps::empty(3, 2), Normalization::Mean).is_err());
    }
}
