//! File formats: PFM for float maps, 8-bit PNG for images, masks and labels.

pub mod pfm;
pub mod png;

pub use pfm::{read_pfm, write_pfm, FloatMap};
pub use png::{read_png, write_png};
