//! Evaluation manifests, metric reports and the per-object results table.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::{Point2, Point3};
use rfa_core::geometry::{CameraIntrinsics, Pose};
use rfa_core::metrics::{
    ar_components, evaluate, model_points, ArThresholds, Instance, InstanceMetrics, MetricReport, SymmetrySpec,
    ADD_THRESHOLD, MAX_MODEL_POINTS,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::LoadedMesh;
use crate::files::{read_json, resolve, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keypoints {
    pub points_3d: Vec<[f64; 3]>,
    pub points_2d: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalInstance {
    pub id: String,
    /// Row label in the results table; defaults to the mesh file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// Relative to the manifest file.
    pub mesh: String,
    pub intrinsics: CameraIntrinsics,
    pub pose_gt: Pose,
    pub pose_est: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<SymmetrySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Keypoints>,
}

impl EvalInstance {
    pub fn object_name(&self) -> String {
        self.object.clone().unwrap_or_else(|| {
            Path::new(&self.mesh)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.mesh.clone())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    pub instances: Vec<EvalInstance>,
    #[serde(default)]
    pub thresholds: ArThresholds,
}

impl EvalManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: EvalManifest = read_json(path)?;
        for (i, inst) in m.instances.iter().enumerate() {
            if let Some(k) = &inst.keypoints {
                if k.points_3d.len() != k.points_2d.len() {
                    bail!("instances[{i}].keypoints: {} 3-D vs {} 2-D points", k.points_3d.len(), k.points_2d.len());
                }
            }
            if let Some(s) = &inst.symmetry {
                s.validate().with_context(|| format!("instances[{i}].symmetry"))?;
            }
        }
        Ok(m)
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectSummary {
    pub object: String,
    pub instances: usize,
    pub mae: Option<f64>,
    pub ar: f64,
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    /// ADD for asymmetric objects, ADD-S for symmetric ones.
    pub add_recall_01d: f64,
}

fn summarize(
    object: String,
    rows: &[(&InstanceMetrics, &CameraIntrinsics)],
    grid: &ArThresholds,
) -> Result<ObjectSummary> {
    let n = rows.len() as f64;
    let (mut v, mut s, mut p) = (0.0, 0.0, 0.0);
    for (m, intr) in rows {
        let (a, b, c) = ar_components(std::slice::from_ref(*m), &[m.diameter], intr, grid)?;
        v += a;
        s += b;
        p += c;
    }
    let maes: Vec<f64> = rows.iter().filter_map(|(m, _)| m.mae).collect();
    let add_pass = rows
        .iter()
        .filter(|(m, _)| m.add_or_add_s() < ADD_THRESHOLD * m.diameter)
        .count();
    let (v, s, p) = (v / n, s / n, p / n);
    Ok(ObjectSummary {
        object,
        instances: rows.len(),
        mae: (!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64),
        ar: (v + s + p) / 3.0,
        ar_vsd: v,
        ar_mssd: s,
        ar_mspd: p,
        add_recall_01d: add_pass as f64 / n,
    })
}

pub struct Evaluation {
    pub report: MetricReport,
    pub objects: Vec<ObjectSummary>,
}

pub fn run_eval(manifest_path: &Path, seed: u64) -> Result<Evaluation> {
    let manifest = EvalManifest::load(manifest_path)?;
    if manifest.instances.is_empty() {
        bail!("{}: no instances", manifest_path.display());
    }
    let mut meshes: HashMap<PathBuf, (LoadedMesh, Vec<Point3<f64>>, String)> = HashMap::new();
    for inst in &manifest.instances {
        let path = resolve(manifest_path, Path::new(&inst.mesh));
        if let Entry::Vacant(slot) = meshes.entry(path) {
            let mesh = LoadedMesh::load(slot.key())?;
            let (pts, label) = model_points(&mesh.mesh, MAX_MODEL_POINTS, seed)?;
            slot.insert((mesh, pts, label));
        }
    }
    let none = SymmetrySpec::none();
    let keypoints: Vec<Option<(Vec<Point3<f64>>, Vec<Point2<f64>>)>> = manifest
        .instances
        .iter()
        .map(|i| {
            i.keypoints.as_ref().map(|k| {
                (
                    k.points_3d.iter().map(|p| Point3::from(*p)).collect(),
                    k.points_2d.iter().map(|p| Point2::from(*p)).collect(),
                )
            })
        })
        .collect();
    let mut labels: Vec<&str> = Vec::new();
    let mut instances = Vec::with_capacity(manifest.instances.len());
    for (inst, kp) in manifest.instances.iter().zip(&keypoints) {
        let (mesh, pts, label) = &meshes[&resolve(manifest_path, Path::new(&inst.mesh))];
        if !labels.contains(&label.as_str()) {
            labels.push(label);
        }
        instances.push(Instance {
            mesh: &mesh.mesh,
            points: pts,
            pose_gt: &inst.pose_gt,
            pose_est: &inst.pose_est,
            intr: &inst.intrinsics,
            symmetry: inst.symmetry.as_ref().unwrap_or(&none),
            keypoints: kp.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
        });
    }
    let report = evaluate(&instances, &manifest.thresholds, &labels.join(";"))?;

    let mut groups: BTreeMap<String, Vec<(&InstanceMetrics, &CameraIntrinsics)>> = BTreeMap::new();
    for (inst, m) in manifest.instances.iter().zip(&report.instances) {
        groups.entry(inst.object_name()).or_default().push((m, &inst.intrinsics));
    }
    let objects = groups
        .into_iter()
        .map(|(name, rows)| summarize(name, &rows, &manifest.thresholds))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { report, objects })
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Results table: one row per object plus a `Mean` row over objects.
/// Recall columns are percentages; MAE is in pixels.
pub fn write_table<W: Write>(objects: &[ObjectSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "object",
        "instances",
        "mae",
        "ar",
        "ar_vsd",
        "ar_mssd",
        "ar_mspd",
        "add_recall_01d",
    ])?;
    let mae_cell = |m: Option<f64>| m.map(|v| format!("{v:.2}")).unwrap_or_default();
    for o in objects {
        w.write_record([
            o.object.clone(),
            o.instances.to_string(),
            mae_cell(o.mae),
            pct(o.ar),
            pct(o.ar_vsd),
            pct(o.ar_mssd),
            pct(o.ar_mspd),
            pct(o.add_recall_01d),
        ])?;
    }
    let n = objects.len().max(1) as f64;
    let mean = |f: fn(&ObjectSummary) -> f64| objects.iter().map(f).sum::<f64>() / n;
    let maes: Vec<f64> = objects.iter().filter_map(|o| o.mae).collect();
    w.write_record([
        "Mean".to_string(),
        objects.iter().map(|o| o.instances).sum::<usize>().to_string(),
        mae_cell((!maes.is_empty()).then(|| maes.iter().sum::<f64>() / maes.len() as f64)),
        pct(mean(|o| o.ar)),
        pct(mean(|o| o.ar_vsd)),
        pct(mean(|o| o.ar_mssd)),
        pct(mean(|o| o.ar_mspd)),
        pct(mean(|o| o.add_recall_01d)),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_outputs(eval: &Evaluation, report_path: &Path, table_path: &Path) -> Result<()> {
    write_json(report_path, &eval.report)?;
    if let Some(dir) = table_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = std::fs::File::create(table_path).with_context(|| format!("creating {}", table_path.display()))?;
    write_table(&eval.objects, f)
}
