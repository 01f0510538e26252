//! 8-bit PNG I/O. Values map to bytes by exact 1/255 scaling and are
//! treated as linear intensities (no sRGB transfer curve).

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::Image;

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_byte(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Reads any PNG; grayscale (with or without alpha) becomes 1 channel, color
/// becomes 3 channels. Alpha is dropped; 16-bit samples scale by 1/65535.
pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let gray = !color.has_color();
    let sixteen = color.bytes_per_pixel() / color.channel_count() as u8 > 1;
    let data: Vec<f64> = match (gray, sixteen) {
        (true, false) => img.to_luma8().into_raw().into_iter().map(from_byte).collect(),
        (false, false) => img.to_rgb8().into_raw().into_iter().map(from_byte).collect(),
        (true, true) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        (false, true) => img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
    };
    Image::new(w, h, if gray { 1 } else { 3 }, data)
}

pub fn write_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_byte(v)).collect();
    let dynimg = match img.channels() {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).ok_or_else(|| Error::Format("bad buffer".into()))?,
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).ok_or_else(|| Error::Format("bad buffer".into()))?,
        ),
        c => return Err(Error::Format(format!("cannot write {c}-channel PNG"))),
    };
    dynimg.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Writes raw 8-bit grayscale values (masks as 0/255, region labels as-is).
pub fn write_gray8(width: usize, height: usize, values: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let buf = GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| Error::Format("gray buffer does not match size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG as raw bytes (color inputs are converted).
pub fn read_gray8(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path.as_ref())?.to_luma8();
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}
