use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rfa_core::geometry::{CameraIntrinsics, Pose};
use rfa_core::render::{RenderConfig, DEFAULT_IOR};
use rfa_core::solver::{Optimizer, SolverOptions};
use rfa_cli::artifacts::{self, composite_file, load_matte, load_meta, render_scene, LoadedMesh, SceneKey};
use rfa_cli::config::{load_intrinsics, validate_regions, Resolution, SceneConfig, DEFAULT_RESOLUTION};
use rfa_cli::dataset::{self, DatasetTemplate};
use rfa_cli::evaluate::{run_eval, write_outputs};
use rfa_cli::files::{read_json, write_json};
use rfa_cli::solve::{solve_manifest, solve_single, Init, InitPerturbation};
use rfa_cli::selftest;

/// Refractive matte rendering, pose solving and evaluation for transparent
/// objects. Lengths are in meters, image coordinates in pixels.
#[derive(Parser)]
#[command(name = "rfa", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "RFA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render flow, attenuation, mask, regions and depth for one scene.
    Render(RenderArgs),
    /// Composite a rendered matte over a background image.
    Composite(CompositeArgs),
    /// Render a dataset of randomly posed scenes.
    GenDataset(GenArgs),
    /// Recover an object pose from its matte.
    Solve(SolveArgs),
    /// Score pose estimates against ground truth.
    Eval(EvalArgs),
    /// Run the built-in analytic checks.
    Selftest,
}

#[derive(Args)]
struct SceneFlags {
    /// Mesh file (.obj or .ply), meters.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Pose JSON: {"rotation": 3x3 rows, "translation": [x, y, z]} (meters).
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Intrinsics JSON: {"fx", "fy", "cx", "cy", "width", "height"}.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Index of refraction [default: 1.5].
    #[arg(long)]
    ior: Option<f64>,
    /// Image size when no intrinsics file is given, WIDTHxHEIGHT [default: 1080x720].
    #[arg(long)]
    resolution: Option<Resolution>,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneFlags,
    /// Background PNG; also writes composite.png.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Number of surface regions (1..=255).
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompositeArgs {
    /// Directory holding flow.pfm, rho.pfm and mask.png.
    #[arg(long)]
    matte: PathBuf,
    #[arg(long)]
    background: PathBuf,
    /// Output PNG [default: <matte>/composite.png].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Dataset template JSON.
    #[arg(long)]
    template: PathBuf,
    /// Number of scenes.
    #[arg(short = 'n', long = "count")]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ior: Option<f64>,
    #[arg(long)]
    resolution: Option<Resolution>,
    #[arg(long)]
    intrinsics: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    NelderMead,
    FiniteDifferenceGradient,
}

#[derive(Args)]
struct SolveArgs {
    /// Dataset manifest; solves every scene from perturbed ground truth.
    #[arg(long, conflicts_with_all = ["matte", "init_pose", "init_depth"])]
    manifest: Option<PathBuf>,
    /// Matte directory of a single observation.
    #[arg(long)]
    matte: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneFlags,
    /// Initial pose JSON.
    #[arg(long, conflicts_with = "init_depth")]
    init_pose: Option<PathBuf>,
    /// Initial depth in meters; the position comes from the mask centroid.
    #[arg(long)]
    init_depth: Option<f64>,
    /// Solver options JSON; flags override its fields.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    max_evaluations: Option<usize>,
    #[arg(long)]
    polish_evaluations: Option<usize>,
    /// Perturbed starts in addition to the initial pose.
    #[arg(long)]
    multi_start: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial rotation perturbation in degrees (manifest mode).
    #[arg(long, default_value_t = 15.0)]
    init_rotation_deg: f64,
    /// Initial translation perturbation as a fraction of the diameter (manifest mode).
    #[arg(long, default_value_t = 0.10)]
    init_translation: f64,
    /// Result JSON (single mode) or output directory (manifest mode).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluation manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Metric report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-object table [default: report path with .csv extension].
    #[arg(long)]
    table: Option<PathBuf>,
    /// Seed for model-point subsampling of large meshes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Render(a) => render(a)?,
        Command::Composite(a) => {
            let maps = load_matte(&a.matte)?;
            let out = a.out.unwrap_or_else(|| a.matte.join(artifacts::COMPOSITE));
            composite_file(&maps, &a.background, &out)?;
        }
        Command::GenDataset(a) => gen_dataset(a)?,
        Command::Solve(a) => solve(a)?,
        Command::Eval(a) => {
            let table = a.table.unwrap_or_else(|| a.out.with_extension("csv"));
            let eval = run_eval(&a.manifest, a.seed)?;
            write_outputs(&eval, &a.out, &table)?;
        }
        Command::Selftest => {
            let mut failed = 0;
            for c in selftest::run_all() {
                match c.outcome {
                    Ok(detail) => println!("PASS {}: {detail}", c.name),
                    Err(e) => {
                        failed += 1;
                        println!("FAIL {}: {e:#}", c.name);
                    }
                }
            }
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_pose(path: &Path) -> Result<Pose> {
    read_json(path)
}

fn render(a: RenderArgs) -> Result<()> {
    let flags = &a.scene;
    let cfg = match &a.config {
        Some(p) => {
            let mut cfg = SceneConfig::load(p)?;
            if let Some(m) = &flags.mesh {
                cfg.mesh = m.clone();
            }
            if let Some(p) = &flags.pose {
                cfg.pose = read_pose(p)?;
            }
            if flags.intrinsics.is_some() || flags.resolution.is_some() {
                cfg.intrinsics =
                    load_intrinsics(flags.intrinsics.as_deref(), flags.resolution.unwrap_or(DEFAULT_RESOLUTION))?;
            }
            if let Some(ior) = flags.ior {
                cfg.render.ior = ior;
            }
            if let Some(bg) = &a.background {
                cfg.background = Some(bg.clone());
            }
            if let Some(k) = a.regions {
                cfg.regions = k;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(o) = &a.out {
                cfg.out = o.clone();
            }
            cfg
        }
        None => {
            let (Some(mesh), Some(pose), Some(out)) = (&flags.mesh, &flags.pose, &a.out) else {
                bail!("render needs --config, or all of --mesh, --pose and --out");
            };
            SceneConfig {
                mesh: mesh.clone(),
                pose: read_pose(pose)?,
                intrinsics: load_intrinsics(
                    flags.intrinsics.as_deref(),
                    flags.resolution.unwrap_or(DEFAULT_RESOLUTION),
                )?,
                render: RenderConfig {
                    ior: flags.ior.unwrap_or(DEFAULT_IOR),
                    ..RenderConfig::default()
                },
                background: a.background.clone(),
                out: out.clone(),
                seed: a.seed.unwrap_or(0),
                regions: a.regions.unwrap_or(rfa_core::regions::DEFAULT_REGION_COUNT),
            }
        }
    };
    cfg.validate()?;
    let mesh = LoadedMesh::load(&cfg.mesh)?;
    let key = SceneKey {
        mesh_sha256: mesh.sha256.clone(),
        pose: cfg.pose,
        intrinsics: cfg.intrinsics,
        render: cfg.render,
        regions: cfg.regions,
        seed: cfg.seed,
    };
    let (meta, _) = render_scene(&mesh, &key, cfg.background.as_deref(), &cfg.out)?;
    log::info!("{} mask pixels written to {}", meta.stats.mask_pixels, cfg.out.display());
    Ok(())
}

fn gen_dataset(a: GenArgs) -> Result<()> {
    let mut template = DatasetTemplate::load(&a.template)?;
    if let Some(ior) = a.ior {
        template.render.ior = ior;
    }
    let intr = match (&a.intrinsics, &template.intrinsics, a.resolution) {
        (Some(p), _, _) => load_intrinsics(Some(p), DEFAULT_RESOLUTION)?,
        (None, Some(i), None) => *i,
        (None, _, res) => load_intrinsics(None, res.unwrap_or(DEFAULT_RESOLUTION))?,
    };
    validate_regions(template.regions)?;
    let m = dataset::generate(&template, intr, a.count, a.seed, &a.out)?;
    log::info!("{} scenes written to {}", m.scenes.len(), a.out.display());
    Ok(())
}

fn solver_options(a: &SolveArgs) -> Result<SolverOptions> {
    let mut opts: SolverOptions = match &a.options {
        Some(p) => read_json(p)?,
        None => SolverOptions::default(),
    };
    if let Some(v) = a.max_evaluations {
        opts.max_evaluations = v;
    }
    if let Some(v) = a.polish_evaluations {
        opts.polish_evaluations = v;
    }
    if let Some(v) = a.multi_start {
        opts.multi_start = v;
    }
    if let Some(o) = a.optimizer {
        opts.optimizer = match o {
            OptimizerArg::NelderMead => Optimizer::NelderMead,
            OptimizerArg::FiniteDifferenceGradient => Optimizer::FiniteDifferenceGradient,
        };
    }
    opts.seed = a.seed;
    opts.validate()?;
    Ok(opts)
}

fn solve(a: SolveArgs) -> Result<()> {
    let opts = solver_options(&a)?;
    if let Some(manifest) = &a.manifest {
        let perturb = InitPerturbation {
            rotation_deg: a.init_rotation_deg,
            translation: a.init_translation,
            seed: a.seed,
        };
        solve_manifest(manifest, &a.out, &opts, &perturb)?;
        return Ok(());
    }
    let Some(matte) = &a.matte else {
        bail!("solve needs --manifest or --matte");
    };
    let meta = load_meta(matte)?;
    let intr: CameraIntrinsics = match (&a.scene.intrinsics, &meta, a.scene.resolution) {
        (Some(p), _, _) => load_intrinsics(Some(p), DEFAULT_RESOLUTION)?,
        (None, Some(m), None) => m.key.intrinsics,
        (None, _, res) => load_intrinsics(None, res.unwrap_or(DEFAULT_RESOLUTION))?,
    };
    let mut render = meta.as_ref().map(|m| m.key.render).unwrap_or_default();
    if let Some(ior) = a.scene.ior {
        render.ior = ior;
    }
    let mesh = a.scene.mesh.as_ref().context("--mesh is required with --matte")?;
    let init = match (&a.init_pose, a.init_depth) {
        (Some(p), _) => Init::Pose(read_pose(p)?),
        (None, Some(z)) => Init::Depth(z),
        (None, None) => bail!("single-matte solving needs --init-pose or --init-depth"),
    };
    let result = solve_single(matte, mesh, &intr, &render, init, &opts)?;
    write_json(&a.out, &result)
}
