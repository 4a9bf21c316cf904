//! Coarse-to-fine Adam descent on per-pixel inverse depth, normals and the pose.
//!
//! The unknowns are the inverse depth and normal maps of both left views and
//! the 6-vector of the transform from frame `t` to frame `t-1`. The objective is
//! the full loss of frame `t` plus the spatial terms of frame `t-1`, whose
//! geometry the temporal terms compare against.

use std::io::Write;

use nalgebra::Vector6;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{downsample_box, upsample_bilinear, ImageGrid, InverseDepthMap, NormalMap};
use crate::losses::{
    normal_from_depth, spatial_loss, total_loss, EdgeParams, Gradients, LossInputs, LossReport,
    LossWeights, TERM_NAMES,
};

/// Smallest grid a pyramid level may have.
pub const MIN_LEVEL_SIZE: usize = 16;

/// Two consecutive stereo pairs with the camera model shared by all views.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSequence {
    pub left: ImageGrid,
    pub right: ImageGrid,
    pub prev_left: ImageGrid,
    pub prev_right: ImageGrid,
    pub intrinsics: Intrinsics,
    /// Left-to-right camera transform.
    pub stereo: RigidTransform,
}

impl StereoSequence {
    pub fn new(
        left: ImageGrid,
        right: ImageGrid,
        prev_left: ImageGrid,
        prev_right: ImageGrid,
        intrinsics: Intrinsics,
        stereo: RigidTransform,
    ) -> Result<Self> {
        for g in [&right, &prev_left, &prev_right] {
            left.check_same_dims(g)?;
            if g.channels() != left.channels() {
                return Err(Error::InvalidGrid("views differ in channel count".into()));
            }
        }
        Ok(Self {
            left,
            right,
            prev_left,
            prev_right,
            intrinsics,
            stereo,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.left.dims()
    }
}

/// The sequence reduced `level` times by 2x2 box filtering, with matching intrinsics.
pub fn downsample_instance(seq: &StereoSequence, level: usize) -> Result<StereoSequence> {
    let (mut w, mut h) = seq.dims();
    for _ in 0..level {
        w /= 2;
        h /= 2;
    }
    if w < MIN_LEVEL_SIZE || h < MIN_LEVEL_SIZE {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
            min_width: MIN_LEVEL_SIZE,
            min_height: MIN_LEVEL_SIZE,
        });
    }
    let reduce = |g: &ImageGrid| (0..level).fold(g.clone(), |g, _| downsample_box(&g));
    Ok(StereoSequence {
        left: reduce(&seq.left),
        right: reduce(&seq.right),
        prev_left: reduce(&seq.prev_left),
        prev_right: reduce(&seq.prev_right),
        intrinsics: seq.intrinsics.downsampled(level),
        stereo: seq.stereo.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Iteration budget of each pyramid level.
    pub max_iterations: usize,
    pub pyramid_levels: usize,
    pub weights: LossWeights,
    pub edge: EdgeParams,
    /// Relative total-loss decrease over `plateau_window` iterations that counts as a plateau.
    pub convergence_tol: f64,
    pub plateau_window: usize,
    /// Learning-rate drops allowed per level before the level ends.
    pub max_lr_drops: usize,
    pub seed: u64,
    /// Iterations at the start of each level with the depth-normal consistency
    /// weight at zero. Normals are then re-initialised from the depth reached
    /// so far.
    pub warmup_iterations: usize,
    /// Iterations after the warm-up over which the depth-normal consistency
    /// weight ramps linearly up to its configured value.
    pub ramp_iterations: usize,
    pub dinv_init: f64,
    pub dinv_max: f64,
    pub optimize_depth: bool,
    pub optimize_normals: bool,
    pub optimize_pose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_iterations: 2000,
            pyramid_levels: 3,
            weights: LossWeights::default(),
            edge: EdgeParams::default(),
            convergence_tol: 1e-6,
            plateau_window: 50,
            max_lr_drops: 2,
            seed: 0,
            warmup_iterations: 500,
            ramp_iterations: 500,
            dinv_init: 0.1,
            dinv_max: 2.0,
            optimize_depth: true,
            optimize_normals: true,
            optimize_pose: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad(format!(
                "adam_epsilon must be positive, got {}",
                self.adam_epsilon
            ));
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1".into());
        }
        if self.plateau_window == 0 {
            return bad("plateau_window must be at least 1".into());
        }
        if !(self.convergence_tol >= 0.0) {
            return bad(format!(
                "convergence_tol must be non-negative, got {}",
                self.convergence_tol
            ));
        }
        if !(self.dinv_init >= 0.0 && self.dinv_init <= self.dinv_max && self.dinv_max.is_finite())
        {
            return bad(format!(
                "need 0 <= dinv_init <= dinv_max, got {} and {}",
                self.dinv_init, self.dinv_max
            ));
        }
        if !(self.edge.alpha >= 0.0 && self.edge.beta > 0.0) {
            return bad("edge alpha must be non-negative and beta positive".into());
        }
        LossWeights::new(self.weights.to_array())?;
        Ok(())
    }
}

/// The optimised quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Variables {
    pub dinv: InverseDepthMap,
    pub normals: NormalMap,
    pub xi: Vector6<f64>,
    pub prev_dinv: InverseDepthMap,
    pub prev_normals: NormalMap,
}

impl Variables {
    /// Uniform inverse depth, fronto-parallel normals and zero motion.
    pub fn constant(width: usize, height: usize, dinv: f64) -> Self {
        Self {
            dinv: InverseDepthMap::constant(width, height, dinv),
            normals: NormalMap::fronto_parallel(width, height),
            xi: Vector6::zeros(),
            prev_dinv: InverseDepthMap::constant(width, height, dinv),
            prev_normals: NormalMap::fronto_parallel(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dinv.dims()
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::exp(&self.xi)
    }

    fn downsampled(&self, level: usize, k: &Intrinsics) -> Self {
        let reduce = |g: &ImageGrid| (0..level).fold(g.clone(), |g, _| downsample_box(&g));
        Self {
            dinv: InverseDepthMap::new(reduce(self.dinv.grid()))
                .expect("box filter keeps inverse depth non-negative"),
            normals: facing_normals(reduce(self.normals.grid()), k),
            xi: self.xi,
            prev_dinv: InverseDepthMap::new(reduce(self.prev_dinv.grid()))
                .expect("box filter keeps inverse depth non-negative"),
            prev_normals: facing_normals(reduce(self.prev_normals.grid()), k),
        }
    }

    fn upsampled(&self, width: usize, height: usize, k: &Intrinsics) -> Self {
        let up = |g: &ImageGrid| upsample_bilinear(g, width, height);
        Self {
            dinv: InverseDepthMap::new(up(self.dinv.grid()))
                .expect("interpolation keeps inverse depth non-negative"),
            normals: facing_normals(up(self.normals.grid()), k),
            xi: self.xi,
            prev_dinv: InverseDepthMap::new(up(self.prev_dinv.grid()))
                .expect("interpolation keeps inverse depth non-negative"),
            prev_normals: facing_normals(up(self.prev_normals.grid()), k),
        }
    }
}

/// Renormalises every normal and flips those not facing the camera.
fn facing_normals(mut grid: ImageGrid, k: &Intrinsics) -> NormalMap {
    orient_normals(&mut grid, k);
    NormalMap::new(grid).expect("normals were renormalised")
}

fn orient_normals(grid: &mut ImageGrid, k: &Intrinsics) {
    let w = grid.width();
    for (i, px) in grid.data_mut().chunks_exact_mut(3).enumerate() {
        crate::grid::normalize_in_place(px);
        let ray = k.backproject((i % w) as f64, (i / w) as f64).xtilde;
        if px[0] * ray.x + px[1] * ray.y + px[2] * ray.z >= 0.0 {
            px.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// First and second moment estimates of one variable block.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    dinv: Moments,
    normals: Moments,
    xi: Moments,
    prev_dinv: Moments,
    prev_normals: Moments,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            dinv: Moments::new(n),
            normals: Moments::new(3 * n),
            xi: Moments::new(6),
            prev_dinv: Moments::new(n),
            prev_normals: Moments::new(3 * n),
        }
    }
}

/// Optimiser state at one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub variables: Variables,
    adam: AdamState,
    /// Adam steps taken at this level.
    pub iteration: usize,
    pub learning_rate: f64,
    /// Total loss before each step.
    pub history: Vec<f64>,
}

impl SolveState {
    pub fn from_variables(variables: Variables, cfg: &SolverConfig) -> Self {
        let (w, h) = variables.dims();
        Self {
            variables,
            adam: AdamState::new(w * h),
            iteration: 0,
            learning_rate: cfg.learning_rate,
            history: Vec::new(),
        }
    }
}

/// The default starting point at the resolution of `seq`.
pub fn initialize(seq: &StereoSequence, cfg: &SolverConfig) -> SolveState {
    let (w, h) = seq.dims();
    SolveState::from_variables(Variables::constant(w, h, cfg.dinv_init), cfg)
}

/// Objective value and gradients at `vars`: the full loss of frame `t` merged
/// with the loss of frame `t-1`, whose photometric term also reconstructs it
/// from `I_t` through the inverse pose.
pub fn objective(
    seq: &StereoSequence,
    vars: &Variables,
    cfg: &SolverConfig,
) -> Result<(LossReport, Gradients)> {
    let pose = vars.pose();
    let inputs = LossInputs {
        left: &seq.left,
        right: &seq.right,
        prev_left: &seq.prev_left,
        dinv: &vars.dinv,
        normals: &vars.normals,
        prev_dinv: &vars.prev_dinv,
        prev_normals: &vars.prev_normals,
        intrinsics: &seq.intrinsics,
        stereo: &seq.stereo,
        pose: &pose,
    };
    let backward = pose.inverse();
    let (current, previous) = rayon::join(
        || total_loss(&inputs, &cfg.weights, cfg.edge),
        || {
            spatial_loss(
                &seq.prev_left,
                &seq.prev_right,
                &vars.prev_dinv,
                &vars.prev_normals,
                &seq.intrinsics,
                &seq.stereo,
                &cfg.weights,
                cfg.edge,
                Some((&seq.left, &backward)),
            )
        },
    );
    let (report, mut grads) = current?;
    let (prev_report, prev_grads) = previous?;
    grads
        .d_dinv_prev
        .data_mut()
        .iter_mut()
        .zip(prev_grads.d_dinv.data())
        .for_each(|(a, b)| *a += b);
    grads
        .d_normals_prev
        .data_mut()
        .iter_mut()
        .zip(prev_grads.d_normals.data())
        .for_each(|(a, b)| *a += b);
    Ok((report.merge(&prev_report), grads))
}

/// One Adam update of every free block, followed by the projections
/// (unit camera-facing normals, inverse depth in `[0, dinv_max]`).
pub fn step(
    state: &mut SolveState,
    seq: &StereoSequence,
    cfg: &SolverConfig,
) -> Result<LossReport> {
    let (report, grads) = objective(seq, &state.variables, cfg)?;
    if !report.total.is_finite() || !grads.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: state.iteration,
        });
    }
    state.iteration += 1;
    let t = state.iteration as i32;
    let adam = Adam {
        lr: state.learning_rate,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_epsilon,
        c1: 1.0 - cfg.adam_beta1.powi(t),
        c2: 1.0 - cfg.adam_beta2.powi(t),
    };
    let vars = &mut state.variables;
    let moments = &mut state.adam;
    if cfg.optimize_depth {
        adam.update(
            vars.dinv.grid_mut().data_mut(),
            grads.d_dinv.data(),
            &mut moments.dinv,
        );
        adam.update(
            vars.prev_dinv.grid_mut().data_mut(),
            grads.d_dinv_prev.data(),
            &mut moments.prev_dinv,
        );
        for g in [vars.dinv.grid_mut(), vars.prev_dinv.grid_mut()] {
            g.data_mut()
                .iter_mut()
                .for_each(|v| *v = v.clamp(0.0, cfg.dinv_max));
        }
    }
    if cfg.optimize_normals {
        adam.update(
            vars.normals.grid_mut().data_mut(),
            grads.d_normals.data(),
            &mut moments.normals,
        );
        adam.update(
            vars.prev_normals.grid_mut().data_mut(),
            grads.d_normals_prev.data(),
            &mut moments.prev_normals,
        );
        orient_normals(vars.normals.grid_mut(), &seq.intrinsics);
        orient_normals(vars.prev_normals.grid_mut(), &seq.intrinsics);
    }
    if cfg.optimize_pose {
        adam.update(
            vars.xi.as_mut_slice(),
            grads.d_xi.as_slice(),
            &mut moments.xi,
        );
    }
    state.history.push(report.total);
    Ok(report)
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl Adam {
    fn update(&self, x: &mut [f64], g: &[f64], s: &mut Moments) {
        for (((x, &g), m), v) in x.iter_mut().zip(g).zip(&mut s.m).zip(&mut s.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / self.c1;
            let v_hat = *v / self.c2;
            *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Iteration count over all levels.
    pub iteration: usize,
    pub level: usize,
    pub report: LossReport,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: SolveState,
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    pub fn variables(&self) -> &Variables {
        &self.state.variables
    }
}

/// Runs the coarse-to-fine schedule from the default initialisation.
pub fn solve(seq: &StereoSequence, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_from(seq, cfg, None)
}

/// Runs the coarse-to-fine schedule from `init` (full resolution), or from the
/// default initialisation when `None`.
///
/// Blocks excluded from optimisation keep the values of `init`, box-filtered to
/// each level.
pub fn solve_from(
    seq: &StereoSequence,
    cfg: &SolverConfig,
    init: Option<&Variables>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let (w, h) = seq.dims();
    if let Some(v) = init {
        crate::losses::check_dims((w, h), v.dims())?;
    }
    let init = init
        .cloned()
        .unwrap_or_else(|| Variables::constant(w, h, cfg.dinv_init));
    let mut trace = Vec::new();
    let mut carried: Option<Variables> = None;
    let mut total_iterations = 0;
    for level in (0..cfg.pyramid_levels).rev() {
        let level_seq = downsample_instance(seq, level)?;
        let (lw, lh) = level_seq.dims();
        let k = level_seq.intrinsics;
        let fixed = init.downsampled(level, &k);
        let mut vars = match carried.take() {
            Some(v) => v.upsampled(lw, lh, &k),
            None => fixed.clone(),
        };
        if !cfg.optimize_depth {
            vars.dinv = fixed.dinv.clone();
            vars.prev_dinv = fixed.prev_dinv.clone();
        }
        if !cfg.optimize_normals {
            vars.normals = fixed.normals.clone();
            vars.prev_normals = fixed.prev_normals.clone();
        }
        if !cfg.optimize_pose {
            vars.xi = fixed.xi;
        }
        let mut state = SolveState::from_variables(vars, cfg);
        let mut drops = 0;
        let schedule = Schedule::new(cfg);
        let mut window_start = schedule.end();
        let mut level_cfg = cfg.clone();
        while state.iteration < cfg.max_iterations {
            let lr = state.learning_rate;
            if schedule.reinitializes_at(state.iteration) {
                let v = &mut state.variables;
                v.normals = normal_from_depth(&v.dinv, &k)?;
                v.prev_normals = normal_from_depth(&v.prev_dinv, &k)?;
            }
            level_cfg.weights = LossWeights {
                depth_normal: cfg.weights.depth_normal
                    * schedule.depth_normal_fraction(state.iteration),
                ..cfg.weights
            };
            let report = step(&mut state, &level_seq, &level_cfg).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    iteration: total_iterations,
                },
                e => e,
            })?;
            trace.push(TraceEntry {
                iteration: total_iterations,
                level,
                report,
                learning_rate: lr,
            });
            total_iterations += 1;
            if state.history.len() > window_start
                && plateaued(
                    &state.history[window_start..],
                    cfg.plateau_window,
                    cfg.convergence_tol,
                )
            {
                if drops == cfg.max_lr_drops {
                    break;
                }
                drops += 1;
                state.learning_rate *= 0.1;
                window_start = state.history.len();
            }
        }
        if level == 0 {
            return Ok(SolveResult { state, trace });
        }
        carried = Some(state.variables);
    }
    unreachable!("the finest level returns")
}

/// Per-level warm-up: depth-normal consistency off, normals reset from depth,
/// then a linear ramp of its weight.
#[derive(Debug, Clone, Copy, Default)]
struct Schedule {
    warmup: usize,
    ramp: usize,
    reinitialize: bool,
}

impl Schedule {
    /// Only used when depth and normals are both free.
    fn new(cfg: &SolverConfig) -> Self {
        if !(cfg.optimize_depth && cfg.optimize_normals) {
            return Self::default();
        }
        Self {
            warmup: cfg.warmup_iterations,
            ramp: cfg.ramp_iterations,
            reinitialize: cfg.warmup_iterations > 0,
        }
    }

    fn end(&self) -> usize {
        self.warmup + self.ramp
    }

    fn reinitializes_at(&self, iteration: usize) -> bool {
        self.reinitialize && iteration == self.warmup
    }

    fn depth_normal_fraction(&self, iteration: usize) -> f64 {
        if iteration < self.warmup {
            0.0
        } else if iteration < self.end() {
            (iteration - self.warmup + 1) as f64 / self.ramp as f64
        } else {
            1.0
        }
    }
}

/// True when the best loss of the last `window` entries improves on the best
/// loss before them by less than `tol` (relative).
fn plateaued(history: &[f64], window: usize, tol: f64) -> bool {
    if history.len() < 2 * window {
        return false;
    }
    let (before, recent) = history.split_at(history.len() - window);
    let best_before = before.iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = recent.iter().copied().fold(f64::INFINITY, f64::min);
    best_before - best_recent < tol * best_before.abs()
}

/// Writes the trace as CSV: `iter, L_P, L_DN, L_N, L_NS, L_DC, L_NC, total, lr`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,{},total,lr", TERM_NAMES.join(","))?;
    for e in trace {
        let terms: Vec<String> = e.report.terms.iter().map(|t| format!("{t:e}")).collect();
        writeln!(
            out,
            "{},{},{:e},{:e}",
            e.iteration,
            terms.join(","),
            e.report.total,
            e.learning_rate
        )?;
    }
    Ok(())
}
