//! Scene configuration and shared flag parsing.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rfa_core::geometry::{CameraIntrinsics, Pose};
use rfa_core::regions::DEFAULT_REGION_COUNT;
use rfa_core::render::RenderConfig;
use serde::{Deserialize, Serialize};

use crate::files::{read_json, resolve};

/// Default image size, width x height.
pub const DEFAULT_RESOLUTION: Resolution = Resolution {
    width: 1080,
    height: 720,
};

/// Everything `render` needs. Relative paths are resolved against the
/// config file location. Units: meters and pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub mesh: PathBuf,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub render: RenderConfig,
    /// Background image, used by `composite`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Surface-region count.
    #[serde(default = "default_regions")]
    pub regions: usize,
}

fn default_regions() -> usize {
    DEFAULT_REGION_COUNT
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: SceneConfig = read_json(path)?;
        cfg.mesh = resolve(path, &cfg.mesh);
        cfg.out = resolve(path, &cfg.out);
        cfg.background = cfg.background.map(|b| resolve(path, &b));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mesh.is_file() {
            bail!("mesh: file {} does not exist", self.mesh.display());
        }
        if let Some(bg) = &self.background {
            if !bg.is_file() {
                bail!("background: file {} does not exist", bg.display());
            }
        }
        self.intrinsics.validate().context("intrinsics")?;
        self.render.validate().context("render")?;
        validate_regions(self.regions)
    }
}

pub fn validate_regions(k: usize) -> Result<()> {
    if !(1..=255).contains(&k) {
        bail!("regions: must be in 1..=255 to fit an 8-bit label image, got {k}");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Resolution {
    type Err = String;

    /// `WIDTHxHEIGHT`, e.g. `1080x720`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
        let width = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
        let height = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
        if width == 0 || height == 0 {
            return Err(format!("resolution must be positive, got `{s}`"));
        }
        Ok(Resolution { width, height })
    }
}

/// Intrinsics from a JSON file, or a centered pinhole with focal length equal
/// to the image width when no file is given.
pub fn load_intrinsics(path: Option<&Path>, res: Resolution) -> Result<CameraIntrinsics> {
    match path {
        Some(p) => {
            let intr: CameraIntrinsics = read_json(p)?;
            intr.validate().with_context(|| format!("{}", p.display()))?;
            if (intr.width, intr.height) != (res.width, res.height) {
                log::info!(
                    "using {}x{} from {} instead of --resolution",
                    intr.width,
                    intr.height,
                    p.display()
                );
            }
            Ok(intr)
        }
        None => Ok(CameraIntrinsics::centered(res.width as f64, res.width, res.height)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_resolution() {
        assert_eq!("1080x720".parse::<Resolution>().unwrap(), DEFAULT_RESOLUTION);
        assert!("1080".parse::<Resolution>().is_err());
        assert!("0x5".parse::<Resolution>().is_err());
    }

    #[test]
    fn config_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.json");
        std::fs::write(
            &p,
            r#"{"mesh": "m.obj", "pose": {"rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,1]},
               "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 2, "height": 2},
               "render": {"ior": "x"}, "out": "o"}"#,
        )
        .unwrap();
        let err = SceneConfig::load(&p).unwrap_err().to_string();
        assert!(err.contains("render.ior"), "{err}");
    }
}
