use nalgebra::{Point2, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optics::{fresnel_transmittance, reflect, refract_direction};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Ray, TriangleMesh};

/// Index of refraction used for every object unless configured otherwise.
pub const DEFAULT_IOR: f64 = 1.5;
pub const DEFAULT_MAX_BOUNCES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TirPolicy {
    /// Continue along the mirrored direction.
    Reflect,
    /// Stop the path; the pixel keeps mask = 1 with zero flow and attenuation.
    #[default]
    Terminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub ior: f64,
    /// Camera-frame depth (meters) of the background plane `z = d`.
    pub background_depth: f64,
    /// Cap on interface events (refractions and reflections) per path.
    pub max_bounces: u32,
    pub tir_policy: TirPolicy,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            ior: DEFAULT_IOR,
            background_depth: 1.0,
            max_bounces: DEFAULT_MAX_BOUNCES,
            tir_policy: TirPolicy::Terminate,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ior >= 1.0 && self.ior.is_finite()) {
            return Err(Error::InvalidConfig(format!("ior must be >= 1, got {}", self.ior)));
        }
        if !(self.background_depth > 0.0 && self.background_depth.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "background_depth must be positive, got {}",
                self.background_depth
            )));
        }
        if self.max_bounces < 2 {
            return Err(Error::InvalidConfig(format!(
                "max_bounces must be >= 2, got {}",
                self.max_bounces
            )));
        }
        Ok(())
    }
}

/// Refractive flow, attenuation and visibility mask of one object view.
///
/// Flow is `(refracted background pixel) - (straight-through background
/// pixel)` in image pixels. Rendered masks are exactly 0 or 1; estimated
/// masks may hold soft values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfaMaps {
    pub width: usize,
    pub height: usize,
    pub flow: Vec<[f64; 2]>,
    pub rho: Vec<f64>,
    pub mask: Vec<f64>,
}

impl RfaMaps {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        RfaMaps {
            width,
            height,
            flow: vec![[0.0; 2]; n],
            rho: vec![0.0; n],
            mask: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.5).count()
    }

    pub fn ensure_same_size(&self, other: &RfaMaps) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// Checks the storage invariants: sizes, zero outside the mask, `rho` in
    /// `[0, 1]`, finite flow.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.flow.len() != n || self.rho.len() != n || self.mask.len() != n {
            return Err(Error::InvalidConfig("RFA buffers do not match width x height".into()));
        }
        for i in 0..n {
            let m = self.mask[i];
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidConfig(format!("mask value {m} outside [0, 1] at {i}")));
            }
            let r = self.rho[i];
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidConfig(format!("rho value {r} outside [0, 1] at {i}")));
            }
            let f = self.flow[i];
            if !f[0].is_finite() || !f[1].is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite flow at {i}")));
            }
            if m == 0.0 && (r != 0.0 || f != [0.0, 0.0]) {
                return Err(Error::InvalidConfig(format!(
                    "flow/rho must be zero outside the mask (pixel {i})"
                )));
            }
        }
        Ok(())
    }
}

/// Per-render counts of special pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStats {
    pub mask_pixels: usize,
    /// Exit ray never reaches the background plane, or the path leaked.
    pub invalid_pixels: usize,
    /// Paths stopped by total internal reflection (terminate policy).
    pub tir_pixels: usize,
    /// Paths that exceeded `max_bounces`.
    pub bounce_limited_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PixelOutcome {
    Miss,
    Transmitted { flow: [f64; 2], rho: f64 },
    Tir,
    BounceLimited,
    Invalid,
}

/// Where the object sits relative to the camera and the background plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    Visible,
    BehindCamera,
}

fn check_placement(mesh: &TriangleMesh, pose: &Pose, background_depth: Option<f64>) -> Result<Placement> {
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in mesh.vertices() {
        let z = pose.transform_point(v).z;
        zmin = zmin.min(z);
        zmax = zmax.max(z);
    }
    if zmax <= 0.0 {
        return Ok(Placement::BehindCamera);
    }
    if zmin <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "object straddles the camera plane (z in [{zmin}, {zmax}])"
        )));
    }
    if let Some(d) = background_depth {
        if d <= zmax {
            return Err(Error::InvalidConfig(format!(
                "background plane z = {d} is not behind the object (far extent {zmax})"
            )));
        }
    }
    Ok(Placement::Visible)
}

fn trace_pixel(
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    u: usize,
    v: usize,
) -> PixelOutcome {
    let primary = intr.pixel_ray(u, v);
    let Some(mut hit) = mesh.intersect(&primary, pose, 0.0, None) else {
        return PixelOutcome::Miss;
    };
    let eps = 1e-9 * mesh.diameter();
    let mut dir = primary.direction;
    let mut rho = 1.0;
    let mut bent = false;
    let mut events = 0u32;
    let mut inside;
    loop {
        events += 1;
        if events > cfg.max_bounces {
            return PixelOutcome::BounceLimited;
        }
        let normal = hit.facing_normal();
        let eta = if hit.entering { 1.0 / cfg.ior } else { cfg.ior };
        match refract_direction(&dir, &normal, eta) {
            Some(t) => {
                let cos_i = -dir.dot(&normal);
                rho *= fresnel_transmittance(cos_i, eta);
                bent |= t != dir;
                dir = t;
                inside = hit.entering;
            }
            None => match cfg.tir_policy {
                TirPolicy::Terminate => return PixelOutcome::Tir,
                TirPolicy::Reflect => {
                    dir = reflect(&dir, &normal);
                    bent = true;
                    inside = !hit.entering;
                }
            },
        }
        let ray = Ray {
            origin: hit.point,
            direction: dir,
        };
        match mesh.intersect(&ray, pose, eps, Some(hit.face)) {
            Some(next) => hit = next,
            None if inside => return PixelOutcome::Invalid,
            None => {
                if !bent {
                    return PixelOutcome::Transmitted { flow: [0.0, 0.0], rho };
                }
                if dir.z <= 1e-12 {
                    return PixelOutcome::Invalid;
                }
                let s = (cfg.background_depth - ray.origin.z) / dir.z;
                if s <= 0.0 {
                    return PixelOutcome::Invalid;
                }
                let p = ray.at(s);
                let px = Point2::new(
                    intr.fx * p.x / p.z + intr.cx,
                    intr.fy * p.y / p.z + intr.cy,
                );
                let flow = [px.x - u as f64, px.y - v as f64];
                if !flow[0].is_finite() || !flow[1].is_finite() {
                    return PixelOutcome::Invalid;
                }
                return PixelOutcome::Transmitted { flow, rho };
            }
        }
    }
}

/// Renders the refractive flow / attenuation / mask triple for `mesh` at
/// `pose`. The result depends only on geometry, pose, intrinsics and the
/// render config; the background plane is used purely as a landing surface.
pub fn render_rfa(
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Result<RfaMaps> {
    render_rfa_with_stats(mesh, pose, intr, cfg).map(|(maps, _)| maps)
}

pub fn render_rfa_with_stats(
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Result<(RfaMaps, RenderStats)> {
    cfg.validate()?;
    intr.validate()?;
    mesh.ensure_closed()?;
    let (w, h) = (intr.width, intr.height);
    if check_placement(mesh, pose, Some(cfg.background_depth))? == Placement::BehindCamera {
        log::warn!("object is entirely behind the camera; maps are empty");
        return Ok((RfaMaps::empty(w, h), RenderStats::default()));
    }
    let outcomes: Vec<PixelOutcome> = (0..w * h)
        .into_par_iter()
        .map(|i| trace_pixel(mesh, pose, intr, cfg, i % w, i / w))
        .collect();
    let mut maps = RfaMaps::empty(w, h);
    let mut stats = RenderStats::default();
    for (i, o) in outcomes.into_iter().enumerate() {
        if o == PixelOutcome::Miss {
            continue;
        }
        maps.mask[i] = 1.0;
        stats.mask_pixels += 1;
        match o {
            PixelOutcome::Transmitted { flow, rho } => {
                maps.flow[i] = flow;
                maps.rho[i] = rho;
            }
            PixelOutcome::Tir => stats.tir_pixels += 1,
            PixelOutcome::BounceLimited => stats.bounce_limited_pixels += 1,
            PixelOutcome::Invalid => stats.invalid_pixels += 1,
            PixelOutcome::Miss => unreachable!(),
        }
    }
    if stats.invalid_pixels > 0 {
        log::debug!("{} pixels never reached the background plane", stats.invalid_pixels);
    }
    Ok((maps, stats))
}

/// First-hit camera-frame depth (z, meters) per pixel; 0 where the ray misses.
pub fn render_depth(mesh: &TriangleMesh, pose: &Pose, intr: &CameraIntrinsics) -> Vec<f64> {
    first_hits(mesh, pose, intr, |hit| hit.z).into_iter().map(|d| d.unwrap_or(0.0)).collect()
}

/// Object-frame first-hit point per pixel, `None` on a miss.
pub(crate) fn render_surface_points(
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
) -> Vec<Option<Point3<f64>>> {
    first_hits(mesh, pose, intr, |hit| pose.inverse_transform_point(&hit))
}

fn first_hits<T: Send>(
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
    f: impl Fn(Point3<f64>) -> T + Sync,
) -> Vec<Option<T>> {
    let w = intr.width;
    if let Ok(Placement::BehindCamera) = check_placement(mesh, pose, None) {
        return (0..intr.pixel_count()).map(|_| None).collect();
    }
    (0..intr.pixel_count())
        .into_par_iter()
        .map(|i| {
            let ray = intr.pixel_ray(i % w, i / w);
            mesh.intersect(&ray, pose, 0.0, None)
                .filter(|h| h.point.z > 0.0)
                .map(|h| f(h.point))
        })
        .collect()
}
