//! Portable float map I/O.
//!
//! Written files are little-endian (negative scale `-1.0`) with rows stored
//! bottom to top as the format requires. In memory, rows run top to bottom.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::render::RfaMaps;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    /// 1 (`Pf`) or 3 (`PF`).
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

pub fn encode_pfm(map: &FloatMap) -> Result<Vec<u8>> {
    let tag = match map.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Format(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    if map.data.len() != map.width * map.height * map.channels {
        return Err(Error::Format("PFM buffer does not match its size".into()));
    }
    let mut out = format!("{tag}\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    let row = map.width * map.channels;
    out.reserve(map.data.len() * 4);
    for y in (0..map.height).rev() {
        for v in &map.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatMap> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    // Header: tag, width, height, scale separated by whitespace, then one
    // whitespace byte before the raster.
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Format("bad PFM header".into()))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "Pf" => 1,
        "PF" => 3,
        t => return Err(Error::Format(format!("unknown PFM tag {t}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PFM size '{s}'")));
    let (width, height) = (parse(fields[1])?, parse(fields[2])?);
    let scale: f64 = fields[3]
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale '{}'", fields[3])))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let raster = bytes.get(pos..pos + 4 * n).ok_or_else(|| Error::Format("truncated PFM raster".into()))?;
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(FloatMap {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(map: &FloatMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pfm(map)?)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FloatMap> {
    decode_pfm(&fs::read(path)?)
}

/// Flow as a 3-channel map `(dx, dy, 0)`.
pub fn flow_to_pfm(maps: &RfaMaps) -> FloatMap {
    let data = maps
        .flow
        .iter()
        .flat_map(|f| [f[0] as f32, f[1] as f32, 0.0])
        .collect();
    FloatMap {
        width: maps.width,
        height: maps.height,
        channels: 3,
        data,
    }
}

pub fn scalar_to_pfm(width: usize, height: usize, values: &[f64]) -> FloatMap {
    FloatMap {
        width,
        height,
        channels: 1,
        data: values.iter().map(|&v| v as f32).collect(),
    }
}

/// Rebuilds maps from a 3-channel flow PFM, a 1-channel rho PFM and a mask
/// (values in `[0, 1]`). Flow and rho are zeroed outside the mask.
pub fn rfa_from_parts(flow: &FloatMap, rho: &FloatMap, mask: &[f64]) -> Result<RfaMaps> {
    if flow.channels != 3 || rho.channels != 1 {
        return Err(Error::Format("flow must be 3-channel and rho 1-channel".into()));
    }
    let (w, h) = (flow.width, flow.height);
    if (rho.width, rho.height) != (w, h) {
        return Err(Error::mismatch((w, h), (rho.width, rho.height)));
    }
    if mask.len() != w * h {
        return Err(Error::Format("mask does not match flow size".into()));
    }
    let mut maps = RfaMaps::empty(w, h);
    for i in 0..w * h {
        let m = mask[i];
        maps.mask[i] = m;
        if m > 0.0 {
            maps.flow[i] = [flow.data[3 * i] as f64, flow.data[3 * i + 1] as f64];
            maps.rho[i] = (rho.data[i] as f64).clamp(0.0, 1.0);
        }
    }
    Ok(maps)
}
