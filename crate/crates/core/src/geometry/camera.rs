use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::Ray;
use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel `(u, v)` has its center at the continuous
/// coordinate `(u, v)`; `project` and `pixel_ray` share that convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image center, square pixels.
    pub fn centered(focal: f64, width: usize, height: usize) -> Self {
        CameraIntrinsics {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "camera intrinsics out of range: {self:?}"
            )))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    pub fn project(&self, p: &Point3<f64>) -> Result<Point2<f64>> {
        if p.z <= 0.0 || p.z.is_nan() {
            return Err(Error::NonPositiveDepth { z: p.z });
        }
        Ok(Point2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Camera-frame point at depth `z` seen through continuous pixel `px`.
    pub fn unproject(&self, px: &Point2<f64>, z: f64) -> Point3<f64> {
        Point3::new(
            (px.x - self.cx) / self.fx * z,
            (px.y - self.cy) / self.fy * z,
            z,
        )
    }

    /// Un-normalized direction through a continuous pixel, with z = 1.
    pub fn pixel_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Primary ray from the camera center through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Ray {
        Ray::new(Point3::origin(), self.pixel_direction(u as f64, v as f64))
    }
}
