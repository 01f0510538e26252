//! Synthetic dataset generation and the dataset manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use rfa_core::geometry::{CameraIntrinsics, Pose};
use rfa_core::regions::DEFAULT_REGION_COUNT;
use rfa_core::render::RenderConfig;
use rfa_core::rng::{stream, uniform_rotation, Domain};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, render_scene, LoadedMesh, SceneKey};
use crate::config::validate_regions;
use crate::files::{ensure_relative, read_json, resolve, write_json};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Sampling box for object translations, camera frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationBox {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for TranslationBox {
    fn default() -> Self {
        TranslationBox {
            x: [-0.05, 0.05],
            y: [-0.05, 0.05],
            z: [0.4, 0.6],
        }
    }
}

impl TranslationBox {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                bail!("translation.{name}: expected [min, max] with min <= max, got {r:?}");
            }
        }
        if self.z[0] <= 0.0 {
            bail!("translation.z: must lie in front of the camera (z > 0)");
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector3<f64> {
        let mut axis = |r: [f64; 2]| r[0] + (r[1] - r[0]) * rng.gen::<f64>();
        Vector3::new(axis(self.x), axis(self.y), axis(self.z))
    }
}

/// `gen-dataset` input. Paths are relative to the template file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetTemplate {
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default = "default_regions")]
    pub regions: usize,
    #[serde(default)]
    pub translation: TranslationBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<PathBuf>,
}

fn default_regions() -> usize {
    DEFAULT_REGION_COUNT
}

impl DatasetTemplate {
    pub fn load(path: &Path) -> Result<Self> {
        let mut t: DatasetTemplate = read_json(path)?;
        t.mesh = resolve(path, &t.mesh);
        t.background = t.background.map(|b| resolve(path, &b));
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifacts {
    pub flow: String,
    pub rho: String,
    pub mask: String,
    pub regions: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite: Option<String>,
    pub meta: String,
}

impl Artifacts {
    fn paths(&self) -> Vec<&str> {
        let mut v = vec![&self.flow, &self.rho, &self.mask, &self.regions, &self.depth, &self.meta];
        v.extend(self.composite.as_ref());
        v.into_iter().map(String::as_str).collect()
    }

    /// Directory holding the matte files of this scene.
    pub fn matte_dir(&self) -> PathBuf {
        Path::new(&self.flow).parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: String,
    pub mesh: String,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub artifacts: Artifacts,
}

/// Paths inside are relative to the manifest file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub render: RenderConfig,
    pub regions: usize,
    pub scenes: Vec<SceneEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            bail!("version: unsupported manifest version {}", self.version);
        }
        let mut ids = HashSet::new();
        for (i, s) in self.scenes.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                bail!("scenes[{i}].id: duplicate id `{}`", s.id);
            }
            ensure_relative(&s.mesh, "mesh")?;
            for p in s.artifacts.paths() {
                ensure_relative(p, "artifact")?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: DatasetManifest = read_json(path)?;
        m.validate().with_context(|| format!("{}", path.display()))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }
}

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:05}")
}

/// Pose of scene `i`: uniform rotation, translation uniform in the box.
pub fn sample_pose(seed: u64, i: usize, box_: &TranslationBox) -> Pose {
    let mut rng = stream(seed, Domain::Dataset, i as u64);
    let q = uniform_rotation(&mut rng);
    let t = box_.sample(&mut rng);
    Pose::from_quaternion(&q, t)
}

/// Renders `n` scenes into `out` and writes `out/manifest.json`.
pub fn generate(template: &DatasetTemplate, intr: CameraIntrinsics, n: usize, seed: u64, out: &Path) -> Result<DatasetManifest> {
    if n == 0 {
        bail!("scene count must be at least 1");
    }
    intr.validate().context("intrinsics")?;
    template.render.validate().context("render")?;
    template.translation.validate()?;
    validate_regions(template.regions)?;

    let mesh = LoadedMesh::load(&template.mesh)?;
    let mesh_name = template
        .mesh
        .file_name()
        .context("mesh path has no file name")?
        .to_string_lossy()
        .into_owned();
    let mesh_rel = format!("meshes/{mesh_name}");
    fs::create_dir_all(out.join("meshes"))?;
    fs::copy(&template.mesh, out.join(&mesh_rel)).with_context(|| format!("copying {}", template.mesh.display()))?;

    let scenes = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = scene_id(i);
            let key = SceneKey {
                mesh_sha256: mesh.sha256.clone(),
                pose: sample_pose(seed, i, &template.translation),
                intrinsics: intr,
                render: template.render,
                regions: template.regions,
                seed,
            };
            let rel = format!("scenes/{id}");
            render_scene(&mesh, &key, template.background.as_deref(), &out.join(&rel))
                .with_context(|| format!("rendering {id}"))?;
            let f = |name: &str| format!("{rel}/{name}");
            Ok(SceneEntry {
                id,
                mesh: mesh_rel.clone(),
                pose: key.pose,
                intrinsics: intr,
                artifacts: Artifacts {
                    flow: f(artifacts::FLOW),
                    rho: f(artifacts::RHO),
                    mask: f(artifacts::MASK),
                    regions: f(artifacts::REGIONS),
                    depth: f(artifacts::DEPTH),
                    composite: template.background.as_ref().map(|_| f(artifacts::COMPOSITE)),
                    meta: f(artifacts::META),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        render: template.render,
        regions: template.regions,
        scenes,
    };
    manifest.save(&out.join(MANIFEST))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> SceneEntry {
        let a = |n: &str| format!("scenes/{id}/{n}");
        SceneEntry {
            id: id.into(),
            mesh: "meshes/m.obj".into(),
            pose: Pose::identity(),
            intrinsics: CameraIntrinsics::centered(10.0, 8, 8),
            artifacts: Artifacts {
                flow: a("flow.pfm"),
                rho: a("rho.pfm"),
                mask: a("mask.png"),
                regions: a("regions.png"),
                depth: a("depth.pfm"),
                composite: None,
                meta: a("meta.json"),
            },
        }
    }

    fn manifest(ids: &[&str]) -> DatasetManifest {
        DatasetManifest {
            version: MANIFEST_VERSION,
            seed: 1,
            render: RenderConfig::default(),
            regions: 8,
            scenes: ids.iter().map(|i| entry(i)).collect(),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(manifest(&["a", "b"]).validate().is_ok());
        assert!(manifest(&["a", "a"]).validate().is_err());
    }

    #[test]
    fn absolute_paths_rejected() {
        let mut m = manifest(&["a"]);
        m.scenes[0].mesh = "/tmp/m.obj".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn write_read_write_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST);
        let mut m = manifest(&["a", "b"]);
        m.scenes[1].pose = sample_pose(4, 1, &TranslationBox::default());
        m.save(&p).unwrap();
        let first = fs::read(&p).unwrap();
        DatasetManifest::load(&p).unwrap().save(&p).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
    }

    #[test]
    fn poses_depend_only_on_seed_and_index() {
        let b = TranslationBox::default();
        assert_eq!(sample_pose(2, 5, &b), sample_pose(2, 5, &b));
        assert_ne!(sample_pose(2, 5, &b), sample_pose(2, 6, &b));
        let t = *sample_pose(2, 5, &b).translation();
        assert!((0.4..=0.6).contains(&t.z) && t.x.abs() <= 0.05);
    }
}
