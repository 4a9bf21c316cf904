//! The `geoloss` command line: `synth`, `solve`, `gradcheck` and `eval`.
//!
//! Settings resolve as flag, then config file, then built-in default. Exit
//! codes: 0 success, 1 check failure, 2 invalid input, 3 numerical divergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::eval::{build_mask, depth_metrics, median_scale, normal_metrics, Crop, EvalReport};
use crate::gradcheck;
use crate::io::{self, KeyValues};
use crate::losses::LossWeights;
use crate::solver::{solve, SolverConfig};
use crate::synth::{default_scene, render, DEFAULT_SEED, SCENE_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const THREADS_ENV: &str = "GEOLOSS_THREADS";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DEFAULT_CAP: f64 = 80.0;

#[derive(Debug, Parser)]
#[command(
    name = "geoloss",
    version,
    about = "Depth, normal and ego-motion recovery with geometric self-supervision"
)]
#[command(
    after_help = "Environment: GEOLOSS_THREADS caps the number of worker threads.\n\
Exit codes: 0 success, 1 check failure, 2 invalid input, 3 numerical divergence."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic stereo sequence with exact ground truth.
    Synth(SynthArgs),
    /// Recover inverse depth, normals and pose for an instance directory.
    Solve(SolveArgs),
    /// Check every loss gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Compare predicted depth and normals with ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene name (wall, ground, corridor) or path to a scene file.
    #[arg(long)]
    pub scene: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Texture seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file with key = value lines (key: seed).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance directory with left/right/prev_left/prev_right PPMs and calib.txt.
    pub instance: PathBuf,
    /// Output directory for dinv.pfm, normal.pfm, pose.txt and loss_trace.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Config file with key = value lines; keys are the long flag names with
    /// `_` for `-` plus beta1, beta2, epsilon, convergence_tol, plateau_window,
    /// max_lr_drops, warmup, ramp, dinv_init, dinv_max, edge_alpha, edge_beta.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Photometric weight [default: 1].
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Depth-normal consistency weight [default: 13].
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Normal direction weight [default: 1].
    #[arg(long)]
    pub lambda3: Option<f64>,
    /// Normal smoothness weight [default: 0.7].
    #[arg(long)]
    pub lambda4: Option<f64>,
    /// Temporal depth consistency weight [default: 1].
    #[arg(long)]
    pub lambda5: Option<f64>,
    /// Temporal normal consistency weight [default: 0.01].
    #[arg(long)]
    pub lambda6: Option<f64>,
    /// Initial Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Iteration budget per pyramid level [default: 2000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Pyramid levels [default: 3].
    #[arg(long)]
    pub levels: Option<usize>,
    /// Solver seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed of the first random instance [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest accepted relative error [default: 1e-4].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Config file with key = value lines (keys: seed, tolerance).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory with predicted dinv.pfm and normal.pfm.
    pub pred: PathBuf,
    /// Directory with ground-truth dinv.pfm and normal.pfm.
    pub gt: PathBuf,
    /// Largest ground-truth depth evaluated, in metres [default: 80].
    #[arg(long)]
    pub cap: Option<f64>,
    /// Evaluated rectangle as image fractions x0,y0,x1,y1 [default: 0,0,1,1].
    #[arg(long)]
    pub crop: Option<Crop>,
    /// Rescale predicted depth by the median ratio to ground truth [default: off].
    #[arg(long)]
    pub median_scale: bool,
    /// Directory for metrics.csv [default: the prediction directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config file with key = value lines (keys: cap, crop, median_scale).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A failure mapped onto an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } => EXIT_DIVERGED,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn load_config(path: Option<&Path>) -> std::result::Result<KeyValues, Failure> {
    match path {
        Some(p) => Ok(io::read_key_values(p, "config")?),
        None => Ok(KeyValues::default()),
    }
}

/// Flag value, else config value, else default.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    kv: &mut KeyValues,
    key: &str,
    default: T,
) -> std::result::Result<T, Failure> {
    let from_file = kv.take_parsed::<T>(key).map_err(Failure::invalid)?;
    Ok(flag.or(from_file).unwrap_or(default))
}

fn finish(kv: KeyValues, path: Option<&Path>) -> std::result::Result<(), Failure> {
    kv.finish().map_err(|r| {
        let path = path.map(|p| p.display().to_string()).unwrap_or_default();
        Failure::invalid(format!("config {path}: {r}"))
    })
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let mut kv = load_config(args.config.as_deref())?;
    let seed = resolve(args.seed, &mut kv, "seed", DEFAULT_SEED)?;
    finish(kv, args.config.as_deref())?;
    let spec = match default_scene(&args.scene, seed) {
        Some(spec) => spec,
        None if Path::new(&args.scene).is_file() => io::read_scene(Path::new(&args.scene))?,
        None => {
            return Err(Failure::invalid(format!(
                "unknown scene {:?}; expected one of {} or a scene file",
                args.scene,
                SCENE_NAMES.join(", ")
            )))
        }
    };
    let instance = render(&spec)?;
    io::write_instance(&args.out, &instance)?;
    println!(
        "wrote scene {} ({}x{}) to {}",
        spec.name,
        spec.width,
        spec.height,
        args.out.display()
    );
    Ok(EXIT_OK)
}

pub fn solver_config(args: &SolveArgs) -> std::result::Result<SolverConfig, Failure> {
    let mut kv = load_config(args.config.as_deref())?;
    let d = SolverConfig::default();
    let flags = [
        args.lambda1,
        args.lambda2,
        args.lambda3,
        args.lambda4,
        args.lambda5,
        args.lambda6,
    ];
    let defaults = d.weights.to_array();
    let mut lambdas = [0.0; 6];
    for i in 0..6 {
        lambdas[i] = resolve(flags[i], &mut kv, &format!("lambda{}", i + 1), defaults[i])?;
    }
    let mut cfg = SolverConfig {
        weights: LossWeights::new(lambdas)?,
        learning_rate: resolve(args.lr, &mut kv, "lr", d.learning_rate)?,
        max_iterations: resolve(args.iters, &mut kv, "iters", d.max_iterations)?,
        pyramid_levels: resolve(args.levels, &mut kv, "levels", d.pyramid_levels)?,
        seed: resolve(args.seed, &mut kv, "seed", d.seed)?,
        adam_beta1: resolve(None, &mut kv, "beta1", d.adam_beta1)?,
        adam_beta2: resolve(None, &mut kv, "beta2", d.adam_beta2)?,
        adam_epsilon: resolve(None, &mut kv, "epsilon", d.adam_epsilon)?,
        convergence_tol: resolve(None, &mut kv, "convergence_tol", d.convergence_tol)?,
        plateau_window: resolve(None, &mut kv, "plateau_window", d.plateau_window)?,
        max_lr_drops: resolve(None, &mut kv, "max_lr_drops", d.max_lr_drops)?,
        warmup_iterations: resolve(None, &mut kv, "warmup", d.warmup_iterations)?,
        ramp_iterations: resolve(None, &mut kv, "ramp", d.ramp_iterations)?,
        dinv_init: resolve(None, &mut kv, "dinv_init", d.dinv_init)?,
        dinv_max: resolve(None, &mut kv, "dinv_max", d.dinv_max)?,
        ..d
    };
    cfg.edge.alpha = resolve(None, &mut kv, "edge_alpha", cfg.edge.alpha)?;
    cfg.edge.beta = resolve(None, &mut kv, "edge_beta", cfg.edge.beta)?;
    finish(kv, args.config.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_solve(args: &SolveArgs) -> CmdResult {
    let cfg = solver_config(args)?;
    let seq = io::read_instance(&args.instance)?;
    let result = solve(&seq, &cfg)?;
    io::write_solution(&args.out, result.variables(), &result.trace)?;
    let last = result
        .trace
        .last()
        .map(|e| e.report.total)
        .unwrap_or(f64::NAN);
    let xi = result.variables().xi;
    println!(
        "{} iterations, final total loss {last:.6e}, pose xi [{}]",
        result.trace.len(),
        xi.iter()
            .map(|v| format!("{v:.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("wrote {}", args.out.display());
    Ok(EXIT_OK)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CmdResult {
    let mut kv = load_config(args.config.as_deref())?;
    let seed = resolve(args.seed, &mut kv, "seed", 0)?;
    let tolerance = resolve(
        args.tolerance,
        &mut kv,
        "tolerance",
        gradcheck::DEFAULT_TOLERANCE,
    )?;
    finish(kv, args.config.as_deref())?;
    let report = gradcheck::run(seed, tolerance)?;
    print!("{report}");
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let mut kv = load_config(args.config.as_deref())?;
    let cap = resolve(args.cap, &mut kv, "cap", DEFAULT_CAP)?;
    let crop = resolve(args.crop, &mut kv, "crop", Crop::FULL)?;
    let scale = args.median_scale || resolve(None, &mut kv, "median_scale", false)?;
    finish(kv, args.config.as_deref())?;
    if !(cap > 0.0) {
        return Err(Failure::invalid(format!("cap must be positive, got {cap}")));
    }
    let (pred_dinv, pred_normals) = io::read_geometry(&args.pred)?;
    let (gt_dinv, gt_normals) = io::read_geometry(&args.gt)?;
    crate::losses::check_dims(gt_dinv.dims(), pred_dinv.dims())?;
    let gt = gt_dinv.to_depth();
    let mut pred = pred_dinv.to_depth();
    let mask = build_mask(&gt, cap, crop);
    if scale {
        let s = median_scale(&pred, &gt, &mask)?;
        pred = crate::grid::ImageGrid::from_fn(pred.width(), pred.height(), 1, |x, y, _| {
            s * pred.get(x, y, 0)
        });
    }
    let report = EvalReport {
        depth: depth_metrics(&pred, &gt, &mask)?,
        normals: normal_metrics(&pred_normals, &gt_normals, &mask)?,
    };
    print!("{report}");
    let dir = args.out.as_deref().unwrap_or(&args.pred);
    fs::create_dir_all(dir).map_err(Error::from)?;
    fs::write(dir.join(METRICS_FILE), report.csv()).map_err(Error::from)?;
    Ok(EXIT_OK)
}

/// Sizes the global worker pool from `GEOLOSS_THREADS` when set.
fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::invalid(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cli: &Cli) -> i32 {
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Eval(a) => cmd_eval(a),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            code
        }
    }
}
