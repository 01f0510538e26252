//! Transparent-object compositing from a refractive matte:
//!
//! `C = (1 - mask) * B + mask * rho * B(x + flow)`
//!
//! where `B(x + flow)` is the background bilinearly sampled at the refracted
//! location. Attenuation is scalar and scales every channel alike.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::RfaMaps;

/// Treatment of samples that land outside the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderPolicy {
    /// Repeat the nearest edge pixel.
    #[default]
    Clamp,
    /// Outside is black.
    Zero,
}

/// Bilinear background sample at `(x + dx, y + dy)`, written into `out`
/// (one value per background channel).
pub fn sample_background_into(bg: &Image, x: f64, y: f64, flow: [f64; 2], border: BorderPolicy, out: &mut [f64]) {
    let (w, h) = (bg.width(), bg.height());
    let (mut sx, mut sy) = (x + flow[0], y + flow[1]);
    match border {
        BorderPolicy::Clamp => {
            sx = sx.clamp(0.0, (w - 1) as f64);
            sy = sy.clamp(0.0, (h - 1) as f64);
        }
        BorderPolicy::Zero => {
            if !(sx > -1.0 && sx < w as f64 && sy > -1.0 && sy < h as f64) {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
        }
    }
    let x0 = sx.floor();
    let y0 = sy.floor();
    let (fx, fy) = (sx - x0, sy - y0);
    let fetch = |xi: f64, yi: f64, c: usize| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            // Only reachable under the zero policy.
            return 0.0;
        }
        bg.get(xi as usize, yi as usize, c)
    };
    for (c, o) in out.iter_mut().enumerate() {
        let v00 = fetch(x0, y0, c);
        // Skip neighbors that carry zero weight so exact hits never read past the edge.
        let v10 = if fx > 0.0 { fetch(x0 + 1.0, y0, c) } else { 0.0 };
        let v01 = if fy > 0.0 { fetch(x0, y0 + 1.0, c) } else { 0.0 };
        let v11 = if fx > 0.0 && fy > 0.0 { fetch(x0 + 1.0, y0 + 1.0, c) } else { 0.0 };
        *o = if fx == 0.0 && fy == 0.0 {
            v00
        } else {
            (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
        };
    }
}

pub fn sample_background(bg: &Image, pixel: (usize, usize), flow: [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; bg.channels()];
    sample_background_into(bg, pixel.0 as f64, pixel.1 as f64, flow, BorderPolicy::Clamp, &mut out);
    out
}

pub fn composite(rfa: &RfaMaps, bg: &Image) -> Result<Image> {
    composite_with(rfa, bg, BorderPolicy::Clamp)
}

pub fn composite_with(rfa: &RfaMaps, bg: &Image, border: BorderPolicy) -> Result<Image> {
    if rfa.dims() != bg.dims() {
        return Err(Error::mismatch(rfa.dims(), bg.dims()));
    }
    if bg.width() == 0 || bg.height() == 0 {
        return Err(Error::Format("empty background".into()));
    }
    let mut out = bg.clone();
    let (w, c) = (bg.width(), bg.channels());
    out.data_mut()
        .par_chunks_mut(c)
        .enumerate()
        .for_each(|(i, px)| {
            let m = rfa.mask[i];
            if m == 0.0 {
                return;
            }
            let mut refracted = [0.0; 3];
            let refracted = &mut refracted[..c];
            sample_background_into(bg, (i % w) as f64, (i / w) as f64, rfa.flow[i], border, refracted);
            let k = m * rfa.rho[i];
            for (o, s) in px.iter_mut().zip(refracted.iter()) {
                *o = (1.0 - m) * *o + k * s;
            }
        });
    Ok(out)
}
