//! Physically based rendering of refractive flow, attenuation and mask maps.

mod optics;
mod rfa;

pub use optics::{fresnel_transmittance, reflect, refract_direction};
pub(crate) use rfa::render_surface_points;
pub use rfa::{
    render_depth, render_rfa, render_rfa_with_stats, RenderConfig, RenderStats, RfaMaps, TirPolicy,
    DEFAULT_IOR, DEFAULT_MAX_BOUNCES,
};
