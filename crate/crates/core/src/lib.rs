//! Rendering, compositing, pose solving and evaluation for transparent
//! objects described by their refractive flow, attenuation and mask.
//!
//! Units: meters for geometry, pixels for image-space quantities.

pub mod compositing;
pub mod error;
pub mod geometry;
pub mod graycode;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod regions;
pub mod render;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
