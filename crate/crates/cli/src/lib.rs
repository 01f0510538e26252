//! Pipelines behind the `rfa` command: scene rendering, compositing, dataset
//! generation, pose solving, evaluation and self checks.
//!
//! Lengths are meters, image quantities are pixels.

pub mod artifacts;
pub mod config;
pub mod dataset;
pub mod evaluate;
pub mod files;
pub mod selftest;
pub mod solve;
