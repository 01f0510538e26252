//! Matte directories: the per-scene files written by `render` and read back
//! by `composite` and `solve`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Point3;
use rfa_core::compositing::composite;
use rfa_core::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use rfa_core::io::pfm::{flow_to_pfm, rfa_from_parts, scalar_to_pfm};
use rfa_core::io::png::{from_byte, read_gray8, write_gray8};
use rfa_core::io::{read_pfm, read_png, write_pfm, write_png};
use rfa_core::regions::{farthest_point_sampling, render_regions};
use rfa_core::render::{render_depth, render_rfa_with_stats, RenderConfig, RenderStats, RfaMaps};
use serde::{Deserialize, Serialize};

use crate::files::{sha256_hex, write_json};

pub const FLOW: &str = "flow.pfm";
pub const RHO: &str = "rho.pfm";
pub const MASK: &str = "mask.png";
pub const REGIONS: &str = "regions.png";
pub const DEPTH: &str = "depth.pfm";
pub const META: &str = "meta.json";
pub const COMPOSITE: &str = "composite.png";

pub const TOOL: &str = "rfa";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A mesh together with the hash of its file bytes.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: TriangleMesh,
    pub sha256: String,
}

impl LoadedMesh {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let mesh = rfa_core::geometry::load_mesh(path).with_context(|| format!("loading {}", path.display()))?;
        Ok(LoadedMesh {
            mesh,
            sha256: sha256_hex(&bytes),
        })
    }
}

/// Inputs that determine every rendered byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneKey {
    pub mesh_sha256: String,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub render: RenderConfig,
    pub regions: usize,
    pub seed: u64,
}

impl SceneKey {
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    #[serde(flatten)]
    pub key: SceneKey,
    /// Object-frame region anchors, label `k + 1` for anchor `k`.
    pub anchors: Vec<[f64; 3]>,
    pub stats: RenderStats,
}

/// Region anchors for a mesh: farthest-point samples of its distinct
/// vertices, at most `k`.
pub fn region_anchors(mesh: &TriangleMesh, k: usize, seed: u64) -> Result<Vec<Point3<f64>>> {
    let mut distinct: Vec<Point3<f64>> = Vec::with_capacity(mesh.vertices().len());
    for v in mesh.vertices() {
        if !distinct.contains(v) {
            distinct.push(*v);
        }
    }
    let k_eff = k.min(distinct.len());
    if k_eff < k {
        log::warn!("mesh has {} distinct vertices; using {k_eff} regions instead of {k}", distinct.len());
    }
    Ok(farthest_point_sampling(&distinct, k_eff, seed)?)
}

/// Renders every map of one scene into `dir` and returns its metadata.
pub fn render_scene(
    mesh: &LoadedMesh,
    key: &SceneKey,
    background: Option<&Path>,
    dir: &Path,
) -> Result<(Meta, RfaMaps)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let intr = &key.intrinsics;
    let (maps, stats) = render_rfa_with_stats(&mesh.mesh, &key.pose, intr, &key.render)?;
    if stats.mask_pixels == 0 {
        log::warn!("{}: object is not visible; all maps are empty", dir.display());
    }
    let anchors = region_anchors(&mesh.mesh, key.regions, key.seed)?;
    let regions = render_regions(&mesh.mesh, &key.pose, intr, &anchors);
    let depth = render_depth(&mesh.mesh, &key.pose, intr);
    let (w, h) = (intr.width, intr.height);

    write_pfm(&flow_to_pfm(&maps), dir.join(FLOW))?;
    write_pfm(&scalar_to_pfm(w, h, &maps.rho), dir.join(RHO))?;
    let mask: Vec<u8> = maps.mask.iter().map(|&m| if m > 0.5 { 255 } else { 0 }).collect();
    write_gray8(w, h, &mask, dir.join(MASK))?;
    let labels: Vec<u8> = regions.labels.iter().map(|&l| l as u8).collect();
    write_gray8(w, h, &labels, dir.join(REGIONS))?;
    write_pfm(&scalar_to_pfm(w, h, &depth), dir.join(DEPTH))?;
    if let Some(bg) = background {
        composite_file(&maps, bg, &dir.join(COMPOSITE))?;
    }

    let meta = Meta {
        tool: TOOL.into(),
        version: VERSION.into(),
        config_hash: key.hash()?,
        key: key.clone(),
        anchors: anchors.iter().map(|a| [a.x, a.y, a.z]).collect(),
        stats,
    };
    write_json(&dir.join(META), &meta)?;
    Ok((meta, maps))
}

/// Reads flow, attenuation and mask back from a matte directory.
pub fn load_matte(dir: &Path) -> Result<RfaMaps> {
    let flow = read_pfm(dir.join(FLOW)).with_context(|| format!("reading {}", dir.join(FLOW).display()))?;
    let rho = read_pfm(dir.join(RHO)).with_context(|| format!("reading {}", dir.join(RHO).display()))?;
    let (w, h, mask) = read_gray8(dir.join(MASK)).with_context(|| format!("reading {}", dir.join(MASK).display()))?;
    if (w, h) != (flow.width, flow.height) {
        bail!("{}: mask is {w}x{h} but flow is {}x{}", dir.display(), flow.width, flow.height);
    }
    let mask: Vec<f64> = mask.into_iter().map(from_byte).collect();
    Ok(rfa_from_parts(&flow, &rho, &mask)?)
}

pub fn load_meta(dir: &Path) -> Result<Option<Meta>> {
    let p = dir.join(META);
    if p.is_file() {
        Ok(Some(crate::files::read_json(&p)?))
    } else {
        Ok(None)
    }
}

pub fn composite_file(maps: &RfaMaps, background: &Path, out: &Path) -> Result<()> {
    let bg = read_png(background).with_context(|| format!("reading {}", background.display()))?;
    let img = composite(maps, &bg).with_context(|| format!("compositing over {}", background.display()))?;
    write_png(&img, out).with_context(|| format!("writing {}", out.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rfa_core::geometry::{save_obj, shapes};

    fn scene(dir: &Path) -> (LoadedMesh, SceneKey) {
        let path = dir.join("sphere.obj");
        save_obj(&shapes::icosphere(2, 0.05), &path).unwrap();
        let mesh = LoadedMesh::load(&path).unwrap();
        let key = SceneKey {
            mesh_sha256: mesh.sha256.clone(),
            pose: Pose::from_translation(Vector3::new(0.0, 0.0, 0.4)),
            intrinsics: CameraIntrinsics::centered(60.0, 40, 30),
            render: RenderConfig::default(),
            regions: 16,
            seed: 3,
        };
        (mesh, key)
    }

    #[test]
    fn matte_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, key) = scene(dir.path());
        let out = dir.path().join("m");
        let (meta, maps) = render_scene(&mesh, &key, None, &out).unwrap();
        assert!(meta.stats.mask_pixels > 0);
        assert_eq!(meta.anchors.len(), 16);
        let back = load_matte(&out).unwrap();
        assert_eq!(back.mask, maps.mask);
        for i in 0..maps.len() {
            assert_eq!(back.rho[i], maps.rho[i] as f32 as f64);
            assert_eq!(back.flow[i][0], maps.flow[i][0] as f32 as f64);
        }
        assert_eq!(load_meta(&out).unwrap().unwrap(), meta);
    }

    #[test]
    fn hash_tracks_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let (_, key) = scene(dir.path());
        let mut other = key.clone();
        other.render.ior = 1.33;
        assert_eq!(key.hash().unwrap(), key.clone().hash().unwrap());
        assert_ne!(key.hash().unwrap(), other.hash().unwrap());
    }

    #[test]
    fn box_regions_capped_by_distinct_vertices() {
        let mesh = shapes::box_mesh(0.1, 0.1, 0.1);
        let anchors = region_anchors(&mesh, 64, 0).unwrap();
        assert!(anchors.len() <= 8);
    }
}
