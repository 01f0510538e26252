//! Gray-code environment matting.
//!
//! The background plane shows a sequence of stripe patterns: the reflected
//! binary Gray code of each column (most significant bit first), then of each
//! row, then an all-white and an all-black reference. Observing the sequence
//! through the object and decoding the bits per pixel recovers which
//! background pixel each camera pixel sees, i.e. an integer refractive flow.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use crate::image::Image;
use crate::render::{render_rfa, RenderConfig, RfaMaps};

/// Minimum white-minus-black contrast for a pixel to be decodable.
pub const MIN_CONTRAST: f64 = 0.1;

pub fn gray_encode(n: u32) -> u32 {
    n ^ (n >> 1)
}

pub fn gray_decode(mut g: u32) -> u32 {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Number of bits to address `n` coordinates, `ceil(log2 n)`.
pub fn bits_for(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayCodePatternSet {
    pub width: usize,
    pub height: usize,
    pub bits_x: u32,
    pub bits_y: u32,
    /// x planes, y planes, white, black; single-channel 0/1 images.
    pub patterns: Vec<Image>,
}

impl GrayCodePatternSet {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn white_index(&self) -> usize {
        (self.bits_x + self.bits_y) as usize
    }

    pub fn black_index(&self) -> usize {
        self.white_index() + 1
    }
}

pub fn generate_patterns(width: usize, height: usize) -> Result<GrayCodePatternSet> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("pattern size must be at least 1x1".into()));
    }
    let bits_x = bits_for(width);
    let bits_y = bits_for(height);
    let mut patterns = Vec::with_capacity((bits_x + bits_y + 2) as usize);
    for b in (0..bits_x).rev() {
        patterns.push(Image::from_fn(width, height, 1, |x, _, _| {
            ((gray_encode(x as u32) >> b) & 1) as f64
        }));
    }
    for b in (0..bits_y).rev() {
        patterns.push(Image::from_fn(width, height, 1, |_, y, _| {
            ((gray_encode(y as u32) >> b) & 1) as f64
        }));
    }
    patterns.push(Image::filled(width, height, &[1.0]));
    patterns.push(Image::filled(width, height, &[0.0]));
    Ok(GrayCodePatternSet {
        width,
        height,
        bits_x,
        bits_y,
        patterns,
    })
}

/// Simulated observation of each pattern through the object described by
/// `maps`. Masked pixels see the pattern at the nearest pixel to their
/// refracted background location, scaled by `rho`; other pixels see the
/// pattern directly.
pub fn capture_with_maps(patterns: &GrayCodePatternSet, maps: &RfaMaps) -> Result<Vec<Image>> {
    if (patterns.width, patterns.height) != maps.dims() {
        return Err(Error::mismatch((patterns.width, patterns.height), maps.dims()));
    }
    let (w, h) = maps.dims();
    // Source pixel and gain per camera pixel, shared by every pattern.
    let lookup: Vec<Option<(usize, f64)>> = (0..w * h)
        .map(|i| {
            if maps.mask[i] == 0.0 {
                return Some((i, 1.0));
            }
            let sx = ((i % w) as f64 + maps.flow[i][0]).round();
            let sy = ((i / w) as f64 + maps.flow[i][1]).round();
            if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
                None
            } else {
                Some((sy as usize * w + sx as usize, maps.rho[i]))
            }
        })
        .collect();
    patterns
        .patterns
        .par_iter()
        .map(|pat| {
            let src = pat.data();
            let data = lookup
                .iter()
                .map(|l| l.map_or(0.0, |(j, gain)| gain * src[j]))
                .collect();
            Image::new(w, h, 1, data)
        })
        .collect()
}

pub fn capture_through_object(
    patterns: &GrayCodePatternSet,
    mesh: &TriangleMesh,
    pose: &Pose,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
) -> Result<Vec<Image>> {
    let maps = render_rfa(mesh, pose, intr, cfg)?;
    capture_with_maps(patterns, &maps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    /// Outside the mask; not decoded.
    Background,
    Valid,
    /// Inside the mask but too little contrast or an out-of-range code.
    Invalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFlow {
    pub width: usize,
    pub height: usize,
    /// Integer-valued flow; zero wherever the status is not `Valid`.
    pub flow: Vec<[f64; 2]>,
    pub status: Vec<DecodeStatus>,
}

impl DecodedFlow {
    pub fn valid_count(&self) -> usize {
        self.status.iter().filter(|s| **s == DecodeStatus::Valid).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.status.iter().filter(|s| **s == DecodeStatus::Invalid).count()
    }
}

pub fn decode_flow(observations: &[Image], patterns: &GrayCodePatternSet, mask: &[f64]) -> Result<DecodedFlow> {
    let (w, h) = (patterns.width, patterns.height);
    if observations.len() != patterns.len() {
        return Err(Error::InvalidConfig(format!(
            "{} observations for {} patterns",
            observations.len(),
            patterns.len()
        )));
    }
    if let Some(o) = observations.iter().find(|o| o.dims() != (w, h)) {
        return Err(Error::mismatch(o.dims(), (w, h)));
    }
    if mask.len() != w * h {
        return Err(Error::InvalidConfig("mask does not match pattern size".into()));
    }
    let obs: Vec<Image> = observations.iter().map(Image::to_gray).collect();
    let white = &obs[patterns.white_index()];
    let black = &obs[patterns.black_index()];
    let bits_x = patterns.bits_x as usize;
    let decode_axis = |i: usize, planes: &[Image], threshold: f64| -> u32 {
        let mut g = 0u32;
        for plane in planes {
            g = (g << 1) | (plane.data()[i] > threshold) as u32;
        }
        gray_decode(g)
    };
    let results: Vec<([f64; 2], DecodeStatus)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if mask[i] <= 0.5 {
                return ([0.0, 0.0], DecodeStatus::Background);
            }
            let (wv, bv) = (white.data()[i], black.data()[i]);
            if wv - bv < MIN_CONTRAST {
                return ([0.0, 0.0], DecodeStatus::Invalid);
            }
            let thr = 0.5 * (wv + bv);
            let sx = decode_axis(i, &obs[..bits_x], thr) as usize;
            let sy = decode_axis(i, &obs[bits_x..patterns.white_index()], thr) as usize;
            if sx >= w || sy >= h {
                return ([0.0, 0.0], DecodeStatus::Invalid);
            }
            let flow = [sx as f64 - (i % w) as f64, sy as f64 - (i / w) as f64];
            (flow, DecodeStatus::Valid)
        })
        .collect();
    let (flow, status) = results.into_iter().unzip();
    Ok(DecodedFlow {
        width: w,
        height: h,
        flow,
        status,
    })
}
