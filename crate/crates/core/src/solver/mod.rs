//! Pose recovery from refractive mattes.
//!
//! `solve_pose` is a render-and-compare search: each candidate pose is
//! rendered with the same renderer that produced the observation and scored
//! by weighted flow, attenuation and mask losses. The search runs in a local
//! 6-parameter chart around the current best pose: a rotation-vector
//! increment applied on the left of the base rotation, and a translation
//! offset in units of the object diameter. The chart is re-centered on the
//! best vertex after every accepted step.

mod nelder_mead;
mod procrustes;
mod site;

use std::cell::Cell;

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh};
use crate::losses::{loss_flow, loss_mask, loss_rho, Normalization};
use crate::render::{render_rfa, RenderConfig, RfaMaps};
use crate::rng::{self, Domain};

pub use nelder_mead::{NelderMead, StepKind};
pub use procrustes::{alignment_rms, procrustes};
pub use site::{decode_site, encode_site, pose_label, CropBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub flow: f64,
    pub rho: f64,
    pub mask: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            flow: 1.0,
            rho: 1.0,
            mask: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    #[default]
    NelderMead,
    FiniteDifferenceGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub weights: ObjectiveWeights,
    pub optimizer: Optimizer,
    /// Objective evaluations allowed per start.
    pub max_evaluations: usize,
    /// Further evaluations spent refining the best start.
    pub polish_evaluations: usize,
    /// Stop when the objective spread (simplex) or improvement (gradient)
    /// falls below this.
    pub tolerance: f64,
    /// Random perturbations of the initial pose tried in addition to it.
    pub multi_start: usize,
    pub perturb_rotation_deg: f64,
    /// Fraction of the object diameter.
    pub perturb_translation: f64,
    pub initial_step_rotation_deg: f64,
    /// Fraction of the object diameter.
    pub initial_step_translation: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            weights: ObjectiveWeights::default(),
            optimizer: Optimizer::NelderMead,
            max_evaluations: 100,
            polish_evaluations: 400,
            tolerance: 1e-6,
            multi_start: 8,
            perturb_rotation_deg: 15.0,
            perturb_translation: 0.10,
            initial_step_rotation_deg: 6.0,
            initial_step_translation: 0.04,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if [w.flow, w.rho, w.mask].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || w.flow + w.rho + w.mask == 0.0 {
            return Err(Error::InvalidConfig("objective weights must be >= 0 and not all zero".into()));
        }
        if self.max_evaluations < 1 {
            return Err(Error::InvalidConfig("max_evaluations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Evaluations spent so far in this start.
    pub evaluation: usize,
    /// Best objective so far.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub initial_pose: Pose,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub pose: Pose,
    pub objective: f64,
    /// Objective of the unperturbed initial pose.
    pub initial_objective: f64,
    /// Total over all starts.
    pub evaluations: usize,
    pub converged: bool,
    /// Start that produced `pose`.
    pub best_start: usize,
    /// Best-so-far objective of the winning start after each iteration.
    pub trace: Vec<TracePoint>,
    pub starts: Vec<StartSummary>,
}

/// Weighted flow / attenuation / mask discrepancy between the observation
/// and a render at `candidate`. Never reads background pixels.
pub fn objective(
    candidate: &Pose,
    observed: &RfaMaps,
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    opts: &SolverOptions,
) -> Result<f64> {
    let rendered = render_rfa(mesh, candidate, intr, cfg)?;
    score(observed, &rendered, &opts.weights)
}

fn score(observed: &RfaMaps, rendered: &RfaMaps, w: &ObjectiveWeights) -> Result<f64> {
    let norm = Normalization::Mean;
    let mut total = 0.0;
    if w.flow > 0.0 {
        total += w.flow * loss_flow(observed, rendered, norm)?;
    }
    if w.rho > 0.0 {
        total += w.rho * loss_rho(observed, rendered, norm)?;
    }
    if w.mask > 0.0 {
        total += w.mask * loss_mask(observed, rendered, norm)?;
    }
    Ok(total)
}

/// Local chart around a base pose.
#[derive(Debug, Clone, Copy)]
struct Chart {
    base: Pose,
    diameter: f64,
}

impl Chart {
    /// Translation: lateral offset `(x3, x4)` in diameters, then a scale
    /// `exp(x5 * diameter / z)` along the viewing ray of the result.
    fn pose(&self, x: &[f64]) -> Pose {
        let rot = Rotation3::new(Vector3::new(x[0], x[1], x[2]));
        let r = rot.matrix() * self.base.rotation();
        let tb = self.base.translation();
        let s = (x[5] * self.diameter / tb.z).exp();
        let t = (tb + Vector3::new(x[3], x[4], 0.0) * self.diameter) * s;
        Pose::from_rotation(&Rotation3::from_matrix_unchecked(r), t)
    }

    /// Coordinates of `pose` in this chart.
    fn coords(&self, pose: &Pose) -> Vec<f64> {
        let rel = Rotation3::from_matrix_unchecked(pose.rotation() * self.base.rotation().transpose());
        let w = rel.scaled_axis();
        let tb = self.base.translation();
        let t = pose.translation();
        let s = t.z / tb.z;
        let lateral = (t / s - tb) / self.diameter;
        vec![w.x, w.y, w.z, lateral.x, lateral.y, s.ln() * tb.z / self.diameter]
    }
}

struct StartOutcome {
    pose: Pose,
    objective: f64,
    evaluations: usize,
    converged: bool,
    trace: Vec<TracePoint>,
}

fn eval_pose(
    pose: &Pose,
    observed: &RfaMaps,
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    opts: &SolverOptions,
) -> f64 {
    objective(pose, observed, mesh, intr, cfg, opts).unwrap_or(f64::INFINITY)
}

#[allow(clippy::too_many_arguments)]
fn run_nelder_mead(
    start: &Pose,
    f_start: f64,
    budget: usize,
    observed: &RfaMaps,
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    opts: &SolverOptions,
) -> StartOutcome {
    const STALL: usize = 40;
    let diameter = mesh.diameter();
    let mut chart = Chart {
        base: *start,
        diameter,
    };
    let rs = opts.initial_step_rotation_deg.to_radians();
    let ts = opts.initial_step_translation;
    let mut steps = vec![rs, rs, rs, ts, ts, ts];
    let mut best = (*start, f_start);
    let mut trace = vec![TracePoint {
        evaluation: 1,
        objective: f_start,
    }];
    let mut used = 1;
    let mut converged = false;
    let initial_steps = steps.clone();
    while used < budget {
        chart.base = best.0;
        let current = Cell::new(chart);
        let mut f = |x: &[f64]| eval_pose(&current.get().pose(x), observed, mesh, intr, cfg, opts);
        let mut nm = NelderMead::new(&[0.0; 6], &steps, Some(best.1), &mut f);
        let mut run_converged = false;
        let mut last_gain = 0;
        loop {
            let spent = used + nm.evaluations();
            let (x, v) = nm.best();
            if v < best.1 {
                best = (current.get().pose(x), v);
                last_gain = nm.evaluations();
            }
            trace.push(TracePoint {
                evaluation: spent,
                objective: best.1,
            });
            if nm.spread() <= opts.tolerance || nm.size() < 1e-10 {
                run_converged = true;
                break;
            }
            if spent >= budget || nm.evaluations() - last_gain > STALL {
                break;
            }
            nm.step(&mut f);
            // Re-center the chart on the best vertex.
            let (x, _) = nm.best();
            if x.iter().any(|c| *c != 0.0) {
                let old = current.get();
                let new_chart = Chart {
                    base: old.pose(x),
                    diameter,
                };
                nm.remap(|p| new_chart.coords(&old.pose(p)));
                current.set(new_chart);
            }
        }
        chart = current.get();
        used += nm.evaluations();
        converged = run_converged;
        if best.1 <= opts.tolerance {
            break;
        }
        steps.iter_mut().for_each(|s| *s *= 0.5);
        if steps[0] < initial_steps[0] * 1e-3 {
            steps.clone_from(&initial_steps);
        }
    }
    StartOutcome {
        pose: best.0.renormalized(),
        objective: best.1,
        evaluations: used,
        converged,
        trace,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_gradient(
    start: &Pose,
    f_start: f64,
    budget: usize,
    observed: &RfaMaps,
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    opts: &SolverOptions,
) -> StartOutcome {
    let diameter = mesh.diameter();
    let h = [1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3];
    let max_move = [
        opts.initial_step_rotation_deg.to_radians(),
        opts.initial_step_rotation_deg.to_radians(),
        opts.initial_step_rotation_deg.to_radians(),
        opts.initial_step_translation,
        opts.initial_step_translation,
        opts.initial_step_translation,
    ];
    let mut current = (*start, f_start);
    let mut used = 1;
    let mut trace = vec![TracePoint {
        evaluation: used,
        objective: f_start,
    }];
    let mut converged = false;
    while used + 12 <= budget {
        let chart = Chart {
            base: current.0,
            diameter,
        };
        let f = |x: &[f64]| eval_pose(&chart.pose(x), observed, mesh, intr, cfg, opts);
        let mut grad = [0.0; 6];
        for k in 0..6 {
            let mut xp = [0.0; 6];
            let mut xm = [0.0; 6];
            xp[k] = h[k];
            xm[k] = -h[k];
            grad[k] = (f(&xp) - f(&xm)) / (2.0 * h[k]);
        }
        used += 12;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !gnorm.is_finite() || gnorm == 0.0 {
            converged = gnorm == 0.0;
            break;
        }
        // First trial moves the largest component by its step scale.
        let scale = (0..6)
            .map(|k| max_move[k] / grad[k].abs().max(1e-300))
            .fold(f64::INFINITY, f64::min);
        let mut alpha = scale;
        let mut accepted = None;
        while used < budget && alpha > scale * 1e-4 {
            let x: Vec<f64> = grad.iter().map(|g| -alpha * g).collect();
            let v = f(&x);
            used += 1;
            if v < current.1 - 1e-4 * alpha * gnorm * gnorm {
                accepted = Some((chart.pose(&x), v));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((p, v)) => {
                let gain = current.1 - v;
                current = (p, v);
                trace.push(TracePoint {
                    evaluation: used,
                    objective: v,
                });
                if gain <= opts.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    StartOutcome {
        pose: current.0.renormalized(),
        objective: current.1,
        evaluations: used,
        converged,
        trace,
    }
}

/// Random perturbation of `init`: a rotation of uniformly random axis and
/// angle up to `rot_deg`, and a translation uniform in a ball of radius
/// `trans_frac * diameter`.
pub fn perturb_pose<R: Rng + ?Sized>(init: &Pose, rot_deg: f64, trans_frac: f64, diameter: f64, rng: &mut R) -> Pose {
    let axis = rng::unit_vector(rng);
    let angle = rng.gen::<f64>() * rot_deg.to_radians();
    let dt = rng::in_unit_ball(rng) * trans_frac * diameter;
    let r = Rotation3::new(axis * angle);
    Pose::from_rotation(
        &Rotation3::from_matrix_unchecked(r.matrix() * init.rotation()),
        init.translation() + dt,
    )
}

/// Heuristic initial pose: identity rotation, translation back-projected
/// from the mask centroid at `depth` meters.
pub fn init_from_mask(observed: &RfaMaps, intr: &CameraIntrinsics, depth: f64) -> Result<Pose> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth { z: depth });
    }
    let (w, _) = observed.dims();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (i, &m) in observed.mask.iter().enumerate() {
        if m > 0.5 {
            sx += (i % w) as f64;
            sy += (i / w) as f64;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return Err(Error::Degenerate("observed mask is empty".into()));
    }
    let p = intr.unproject(&nalgebra::Point2::new(sx / n, sy / n), depth);
    Ok(Pose::from_translation(p.coords))
}

/// Multi-start render-and-compare pose search from `init`.
pub fn solve_pose(
    observed: &RfaMaps,
    mesh: &TriangleMesh,
    intr: &CameraIntrinsics,
    cfg: &RenderConfig,
    init: &Pose,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if observed.dims() != (intr.width, intr.height) {
        return Err(Error::mismatch(observed.dims(), (intr.width, intr.height)));
    }
    let initial_objective = objective(init, observed, mesh, intr, cfg, opts)?;
    let mut starts = vec![*init];
    for k in 1..=opts.multi_start {
        let mut rng = rng::stream(opts.seed, Domain::SolverStart, k as u64);
        starts.push(perturb_pose(
            init,
            opts.perturb_rotation_deg,
            opts.perturb_translation,
            mesh.diameter(),
            &mut rng,
        ));
    }
    let outcomes: Vec<(f64, StartOutcome)> = starts
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let f0 = if k == 0 {
                initial_objective
            } else {
                eval_pose(s, observed, mesh, intr, cfg, opts)
            };
            let out = match opts.optimizer {
                Optimizer::NelderMead => run_nelder_mead(s, f0, opts.max_evaluations, observed, mesh, intr, cfg, opts),
                Optimizer::FiniteDifferenceGradient => {
                    run_gradient(s, f0, opts.max_evaluations, observed, mesh, intr, cfg, opts)
                }
            };
            (f0, out)
        })
        .collect();
    let best = outcomes
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.objective.total_cmp(&b.1.objective).then(i.cmp(j)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let summaries = outcomes
        .iter()
        .enumerate()
        .map(|(k, (f0, o))| StartSummary {
            index: k,
            initial_pose: starts[k],
            initial_objective: *f0,
            final_objective: o.objective,
            evaluations: o.evaluations,
            converged: o.converged,
        })
        .collect();
    let mut evaluations = outcomes.iter().map(|(_, o)| o.evaluations).sum::<usize>();
    let (_, win) = &outcomes[best];
    let mut trace = win.trace.clone();
    let mut result = (win.pose, win.objective, win.converged);
    if opts.polish_evaluations > 0 && win.objective > opts.tolerance {
        let polish = match opts.optimizer {
            Optimizer::NelderMead => {
                run_nelder_mead(&win.pose, win.objective, opts.polish_evaluations, observed, mesh, intr, cfg, opts)
            }
            Optimizer::FiniteDifferenceGradient => {
                run_gradient(&win.pose, win.objective, opts.polish_evaluations, observed, mesh, intr, cfg, opts)
            }
        };
        let offset = win.evaluations;
        trace.extend(polish.trace.iter().skip(1).map(|t| TracePoint {
            evaluation: offset + t.evaluation,
            objective: t.objective,
        }));
        evaluations += polish.evaluations;
        if polish.objective < result.1 {
            result = (polish.pose, polish.objective, polish.converged);
        }
    }
    Ok(SolveResult {
        pose: result.0,
        objective: result.1,
        initial_objective,
        evaluations,
        converged: result.2 && result.1 <= initial_objective,
        best_start: best,
        trace,
        starts: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes;

    #[test]
    fn chart_round_trip() {
        let base = Pose::from_rotation_vector(Vector3::new(0.3, -0.7, 0.2), Vector3::new(0.01, 0.02, 0.5));
        let chart = Chart { base, diameter: 0.2 };
        let x = [0.05, -0.02, 0.1, 0.3, -0.1, 0.05];
        let back = chart.coords(&chart.pose(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(chart.coords(&base).iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn mask_centroid_back_projects() {
        let intr = CameraIntrinsics::centered(100.0, 20, 10);
        let mut maps = RfaMaps::empty(20, 10);
        let (a, b) = (maps.index(14, 5), maps.index(16, 5));
        maps.mask[a] = 1.0;
        maps.mask[b] = 1.0;
        let p = init_from_mask(&maps, &intr, 2.0).unwrap();
        assert!((p.translation() - Vector3::new(0.1, 0.0, 2.0)).norm() < 1e-12);
        assert!(init_from_mask(&RfaMaps::empty(20, 10), &intr, 2.0).is_err());
    }

    #[test]
    fn rejects_bad_options() {
        let mut o = SolverOptions::default();
        o.weights = ObjectiveWeights { flow: 0.0, rho: 0.0, mask: 0.0 };
        assert!(o.validate().is_err());
        o = SolverOptions { max_evaluations: 0, ..SolverOptions::default() };
        assert!(o.validate().is_err());
    }

    #[test]
    fn truth_init_stays_at_truth() {
        let mesh = shapes::icosphere(1, 0.05);
        let intr = CameraIntrinsics::centered(120.0, 48, 48);
        let cfg = RenderConfig::default();
        let truth = Pose::from_rotation_vector(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.0, 0.0, 0.4));
        let obs = render_rfa(&mesh, &truth, &intr, &cfg).unwrap();
        let opts = SolverOptions {
            multi_start: 0,
            max_evaluations: 30,
            ..SolverOptions::default()
        };
        let res = solve_pose(&obs, &mesh, &intr, &cfg, &truth, &opts).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.initial_objective, 0.0);
        assert!(res.pose.rotation_angle_to(&truth) < 1e-9);
        assert!((res.pose.translation() - truth.translation()).norm() < 1e-12);
    }
}
