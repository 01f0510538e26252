//! Scale-invariant translation: the projected object center relative to a
//! square crop, and the depth scaled by the crop's zoom factor.
//!
//! `delta_x = (u - crop.center_x) / crop.size`, likewise for y;
//! `delta_z = t_z / zoom` with `zoom = crop.output_size / crop.size`.

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::losses::{PoseDeltas, PoseLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub center_x: f64,
    pub center_y: f64,
    /// Side length in image pixels.
    pub size: f64,
    /// Side length the crop is resampled to.
    pub output_size: f64,
}

impl CropBox {
    pub fn zoom(&self) -> f64 {
        self.output_size / self.size
    }

    fn validate(&self, intr: &CameraIntrinsics) -> Result<()> {
        if !(self.size > 0.0 && self.output_size > 0.0) {
            return Err(Error::Degenerate("crop box has zero size".into()));
        }
        let inside = (0.0..intr.width as f64).contains(&self.center_x)
            && (0.0..intr.height as f64).contains(&self.center_y);
        if !inside {
            return Err(Error::InvalidConfig("crop center lies outside the image".into()));
        }
        Ok(())
    }
}

pub fn encode_site(pose: &Pose, intr: &CameraIntrinsics, crop: &CropBox) -> Result<PoseDeltas> {
    crop.validate(intr)?;
    let t = pose.translation();
    let c = intr.project(&nalgebra::Point3::from(*t))?;
    Ok(PoseDeltas {
        delta_x: (c.x - crop.center_x) / crop.size,
        delta_y: (c.y - crop.center_y) / crop.size,
        delta_z: t.z / crop.zoom(),
    })
}

/// Camera-frame translation encoded by `deltas`.
pub fn decode_site(deltas: &PoseDeltas, intr: &CameraIntrinsics, crop: &CropBox) -> Result<Vector3<f64>> {
    crop.validate(intr)?;
    let z = deltas.delta_z * crop.zoom();
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth { z });
    }
    let c = Point2::new(
        crop.center_x + deltas.delta_x * crop.size,
        crop.center_y + deltas.delta_y * crop.size,
    );
    Ok(intr.unproject(&c, z).coords)
}

pub fn pose_label(pose: &Pose, intr: &CameraIntrinsics, crop: &CropBox) -> Result<PoseLabel> {
    Ok(PoseLabel {
        rotation: *pose.rotation(),
        deltas: encode_site(pose, intr, crop)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn centered_object_unit_zoom() {
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 0.7));
        let crop = CropBox {
            center_x: 320.0,
            center_y: 240.0,
            size: 100.0,
            output_size: 100.0,
        };
        let d = encode_site(&pose, &intr(), &crop).unwrap();
        assert_eq!(d, PoseDeltas { delta_x: 0.0, delta_y: 0.0, delta_z: 0.7 });
    }

    #[test]
    fn offset_in_crop_units() {
        // Object center projects to (336, 232): offset (16, -8) from the crop center.
        let z = 1.0;
        let pose = Pose::from_translation(Vector3::new(16.0 / 500.0 * z, -8.0 / 500.0 * z, z));
        let crop = CropBox {
            center_x: 320.0,
            center_y: 240.0,
            size: 64.0,
            output_size: 64.0,
        };
        let d = encode_site(&pose, &intr(), &crop).unwrap();
        assert!((d.delta_x - 0.25).abs() < 1e-12);
        assert!((d.delta_y + 0.125).abs() < 1e-12);
    }

    #[test]
    fn zero_size_crop_errors() {
        let crop = CropBox {
            center_x: 10.0,
            center_y: 10.0,
            size: 0.0,
            output_size: 64.0,
        };
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        assert!(encode_site(&pose, &intr(), &crop).is_err());
    }
}
