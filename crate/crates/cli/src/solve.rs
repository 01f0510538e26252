//! Pose solving for a single matte or for every scene of a dataset.

use std::path::Path;

use anyhow::{Context, Result};
use rfa_core::geometry::{CameraIntrinsics, Pose};
use rfa_core::render::RenderConfig;
use rfa_core::rng::{stream, Domain};
use rfa_core::solver::{init_from_mask, perturb_pose, solve_pose, SolveResult, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::artifacts::{load_matte, LoadedMesh};
use crate::dataset::DatasetManifest;
use crate::evaluate::{EvalInstance, EvalManifest};
use crate::files::{relative_to, write_json};

pub const ESTIMATES: &str = "estimates.json";

/// How the search is initialized in single-matte mode.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Pose(Pose),
    /// Identity rotation, translation back-projected from the mask centroid
    /// at this depth (meters).
    Depth(f64),
}

pub fn solve_single(
    matte_dir: &Path,
    mesh_path: &Path,
    intr: &CameraIntrinsics,
    render: &RenderConfig,
    init: Init,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let observed = load_matte(matte_dir)?;
    let mesh = LoadedMesh::load(mesh_path)?;
    let init = match init {
        Init::Pose(p) => p,
        Init::Depth(z) => init_from_mask(&observed, intr, z)?,
    };
    Ok(solve_pose(&observed, &mesh.mesh, intr, render, &init, opts)?)
}

/// Settings for batch solving from perturbed ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPerturbation {
    pub rotation_deg: f64,
    /// Fraction of the object diameter.
    pub translation: f64,
    pub seed: u64,
}

impl Default for InitPerturbation {
    fn default() -> Self {
        InitPerturbation {
            rotation_deg: 15.0,
            translation: 0.10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSolve {
    pub id: String,
    pub pose_gt: Pose,
    pub pose_init: Pose,
    pub result: SolveResult,
}

/// Solves every scene of a dataset, writing `results/<id>.json` and an
/// evaluation manifest `estimates.json` under `out`.
pub fn solve_manifest(
    manifest_path: &Path,
    out: &Path,
    opts: &SolverOptions,
    perturb: &InitPerturbation,
) -> Result<EvalManifest> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out.join("results"))?;
    let mut instances = Vec::with_capacity(manifest.scenes.len());
    let mut mesh_cache: Option<(String, LoadedMesh)> = None;
    for (i, scene) in manifest.scenes.iter().enumerate() {
        let mesh_path = root.join(&scene.mesh);
        if mesh_cache.as_ref().map(|(p, _)| p != &scene.mesh).unwrap_or(true) {
            mesh_cache = Some((scene.mesh.clone(), LoadedMesh::load(&mesh_path)?));
        }
        let mesh = &mesh_cache.as_ref().unwrap().1.mesh;
        let observed = load_matte(&root.join(scene.artifacts.matte_dir()))?;
        let mut rng = stream(perturb.seed, Domain::InitialPose, i as u64);
        let init = perturb_pose(&scene.pose, perturb.rotation_deg, perturb.translation, mesh.diameter(), &mut rng);
        let result = solve_pose(&observed, mesh, &scene.intrinsics, &manifest.render, &init, opts)
            .with_context(|| format!("solving {}", scene.id))?;
        log::info!(
            "{}: objective {:.3e} -> {:.3e} in {} evaluations",
            scene.id,
            result.initial_objective,
            result.objective,
            result.evaluations
        );
        let pose_est = result.pose;
        write_json(
            &out.join("results").join(format!("{}.json", scene.id)),
            &SceneSolve {
                id: scene.id.clone(),
                pose_gt: scene.pose,
                pose_init: init,
                result,
            },
        )?;
        instances.push(EvalInstance {
            id: scene.id.clone(),
            object: None,
            mesh: relative_to(&mesh_path, out)?,
            intrinsics: scene.intrinsics,
            pose_gt: scene.pose,
            pose_est,
            symmetry: None,
            keypoints: None,
        });
    }
    let estimates = EvalManifest {
        instances,
        thresholds: Default::default(),
    };
    write_json(&out.join(ESTIMATES), &estimates)?;
    Ok(estimates)
}
