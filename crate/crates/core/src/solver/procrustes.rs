use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Relative singular-value floor below which a point set counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Least-squares rigid alignment `dst ≈ R src + t` (no scale) from the
/// cross-covariance SVD, with the determinant correction that excludes
/// reflections.
pub fn procrustes(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Pose> {
    if src.len() != dst.len() {
        return Err(Error::Degenerate(format!(
            "point counts differ ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 point pairs, got {}", src.len())));
    }
    let n = src.len() as f64;
    let cs: Vector3<f64> = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cd: Vector3<f64> = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;

    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s.coords - cs;
        let b = d.coords - cd;
        scatter += a * a.transpose();
        cross += a * b.transpose();
    }
    let sv = scatter.symmetric_eigenvalues();
    let (hi, mid) = {
        let mut v = [sv[0], sv[1], sv[2]];
        v.sort_by(|a, b| b.total_cmp(a));
        (v[0], v[1])
    };
    if !(hi > 0.0) || mid <= RANK_TOL * hi {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = cd - rotation * cs;
    Pose::new(rotation, translation)
}

/// Root-mean-square distance between `pose(src)` and `dst`.
pub fn alignment_rms(pose: &Pose, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (pose.transform_point(s) - d).norm_squared())
        .sum();
    (sum / src.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_on_equal_sets() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.3, 0.1, 1.0),
        ];
        let p = procrustes(&pts, &pts).unwrap();
        assert!((p.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(p.translation().norm() < 1e-12);
    }

    #[test]
    fn collinear_is_rejected() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 2.0, 2.0)];
        assert!(matches!(procrustes(&pts, &pts), Err(Error::Degenerate(_))));
        assert!(procrustes(&pts[..2], &pts[..2]).is_err());
    }

    #[test]
    fn planar_set_does_not_reflect() {
        let src = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let pose = Pose::from_rotation_vector(Vector3::new(2.0, -1.0, 0.5), Vector3::new(0.1, 0.2, 0.3));
        let dst: Vec<_> = src.iter().map(|p| pose.transform_point(p)).collect();
        let got = procrustes(&src, &dst).unwrap();
        assert!((got.rotation().determinant() - 1.0).abs() < 1e-12);
        assert!((got.rotation() - pose.rotation()).amax() < 1e-9);
    }
}
