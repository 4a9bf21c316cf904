//! Finite-difference verification of every loss gradient on random smooth
//! instances.
//!
//! Each probe compares one analytic gradient entry (inverse depth, a tangent
//! direction of a normal, or a pose coordinate) with the central difference of
//! the loss value. Probes straddling a kink of an L1 term or of the bilinear
//! sampler are detected by comparing differences at several step sizes and are
//! excluded rather than scored.

use std::fmt;

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{ImageGrid, InverseDepthMap, NormalMap};
use crate::losses::{
    depth_normal_consistency_loss, normal_direction_loss, normal_from_depth,
    normal_smoothness_loss, photometric_loss, temporal_consistency_losses, EdgeParams, Gradients,
    TERM_NAMES,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const PROBES_PER_LOSS: usize = 30;
pub const SEEDS: u64 = 3;
pub const STEP: f64 = 1e-5;
/// Steps whose central differences must agree for a probe to count as smooth:
/// a kink within the largest step of the probe shows up as a disagreement.
pub const KINK_STEPS: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];
pub const KINK_AGREEMENT: f64 = 1e-5;
/// A loss fails when more than this fraction of its probes sits on kinks.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.5;
/// Denominator floor of the relative error, far below any gradient scale of
/// the instances and far above their round-off.
const SCALE_FLOOR: f64 = 1e-6;
const WIDTH: usize = 20;
const HEIGHT: usize = 16;

pub fn intrinsics(w: usize, h: usize) -> Intrinsics {
    Intrinsics::new(30.0, 28.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
        .expect("valid intrinsics")
}

/// Sum of three random plane waves per channel around 0.5.
pub fn smooth_image(w: usize, h: usize, c: usize, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<[f64; 4]> = (0..c * 3)
        .map(|_| {
            [
                rng.gen_range(0.15..0.6),
                rng.gen_range(0.15..0.6),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.05..0.15),
            ]
        })
        .collect();
    ImageGrid::from_fn(w, h, c, |x, y, ch| {
        0.5 + params[ch * 3..ch * 3 + 3]
            .iter()
            .map(|p| p[3] * (p[0] * x as f64 + p[1] * y as f64 + p[2]).sin())
            .sum::<f64>()
    })
}

pub fn smooth_dinv(w: usize, h: usize, seed: u64) -> InverseDepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, p) = (
        rng.gen_range(0.1..0.3),
        rng.gen_range(0.1..0.3),
        rng.gen_range(0.0..6.0),
    );
    InverseDepthMap::new(ImageGrid::from_fn(w, h, 1, |x, y, _| {
        0.25 + 0.05 * (a * x as f64 + p).sin() + 0.04 * (b * y as f64).cos()
    }))
    .expect("positive inverse depth")
}

pub fn smooth_normals(w: usize, h: usize, seed: u64) -> NormalMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
    let g = ImageGrid::from_fn(w, h, 3, |x, y, c| {
        let n = Vector3::new(
            0.4 * (a * x as f64).sin(),
            0.3 * (b * y as f64 + 1.0).cos(),
            -1.0,
        )
        .normalize();
        n[c]
    });
    NormalMap::new(g).expect("unit normals")
}

/// Normals whose three components vary along both image axes, so that no
/// neighbouring difference is identically zero.
pub fn varied_normals(w: usize, h: usize, seed: u64) -> NormalMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: Vec<f64> = (0..9).map(|_| rng.gen_range(0.1..0.4)).collect();
    let g = ImageGrid::from_fn(w, h, 3, |x, y, c| {
        let (x, y) = (x as f64, y as f64);
        let n = Vector3::new(
            0.4 * (f[0] * x + f[1] * y + f[2]).sin(),
            0.3 * (f[3] * x + f[4] * y + f[5]).cos(),
            -1.0 + 0.2 * (f[6] * x + f[7] * y + f[8]).sin(),
        )
        .normalize();
        n[c]
    });
    NormalMap::new(g).expect("unit normals")
}

/// A two-frame instance with smooth images and geometry.
#[derive(Debug, Clone)]
pub struct Instance {
    pub left: ImageGrid,
    pub right: ImageGrid,
    pub prev_left: ImageGrid,
    pub dinv: InverseDepthMap,
    pub normals: NormalMap,
    pub prev_dinv: InverseDepthMap,
    pub prev_normals: NormalMap,
    pub intrinsics: Intrinsics,
    pub stereo: RigidTransform,
    pub xi: Vector6<f64>,
}

impl Instance {
    pub fn random(w: usize, h: usize, seed: u64) -> Self {
        let base = seed.wrapping_mul(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        let xi = Vector6::from_fn(|i, _| {
            if i < 3 {
                rng.gen_range(-0.05..0.05)
            } else {
                rng.gen_range(-0.02..0.02)
            }
        }) + Vector6::new(0.0, 0.0, 0.1, 0.0, 0.0, 0.0);
        Self {
            left: smooth_image(w, h, 3, base + 1),
            right: smooth_image(w, h, 3, base + 2),
            prev_left: smooth_image(w, h, 3, base + 3),
            dinv: smooth_dinv(w, h, base + 4),
            normals: varied_normals(w, h, base + 5),
            prev_dinv: smooth_dinv(w, h, base + 6),
            prev_normals: varied_normals(w, h, base + 7),
            intrinsics: intrinsics(w, h),
            stereo: RigidTransform::from_translation(Vector3::new(-0.1, 0.0, 0.0)),
            xi,
        }
    }
}

/// One scalar unknown of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Dinv(usize, usize),
    /// Normal at a pixel moved along tangent direction 0 or 1.
    Normal(usize, usize, usize),
    PrevDinv(usize, usize),
    PrevNormal(usize, usize, usize),
    Xi(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Variable::Dinv(x, y) => write!(f, "D_inv at pixel ({x}, {y})"),
            Variable::Normal(x, y, t) => write!(f, "N tangent {t} at pixel ({x}, {y})"),
            Variable::PrevDinv(x, y) => write!(f, "D_inv(t-1) at pixel ({x}, {y})"),
            Variable::PrevNormal(x, y, t) => write!(f, "N(t-1) tangent {t} at pixel ({x}, {y})"),
            Variable::Xi(i) => write!(f, "xi[{i}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Dinv,
    Normal,
    PrevDinv,
    PrevNormal,
    Xi,
}

/// Variable blocks each loss depends on, in `TERM_NAMES` order.
const DEPENDENCIES: [&[Block]; 6] = [
    &[Block::Dinv, Block::Xi],
    &[Block::Dinv, Block::Normal],
    &[Block::Normal],
    &[Block::Normal],
    &[Block::Dinv, Block::PrevDinv, Block::Xi],
    &[Block::Dinv, Block::Normal, Block::PrevNormal, Block::Xi],
];

fn tangent(n: &Vector3<f64>, which: usize) -> Vector3<f64> {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t0 = n.cross(&helper).normalize();
    if which == 0 {
        t0
    } else {
        n.cross(&t0)
    }
}

fn perturb_normal(map: &NormalMap, x: usize, y: usize, which: usize, h: f64) -> NormalMap {
    let n = map.get(x, y);
    let moved = (n + tangent(&n, which) * h).normalize();
    let mut g = map.grid().clone();
    for c in 0..3 {
        g.set(x, y, c, moved[c]);
    }
    NormalMap::new(g).expect("unit normal")
}

fn perturb_dinv(map: &InverseDepthMap, x: usize, y: usize, h: f64) -> InverseDepthMap {
    let mut g = map.grid().clone();
    g.set(x, y, 0, g.get(x, y, 0) + h);
    InverseDepthMap::new(g).expect("inverse depth stays positive for small steps")
}

impl Instance {
    fn perturbed(&self, var: Variable, h: f64) -> Instance {
        let mut out = self.clone();
        match var {
            Variable::Dinv(x, y) => out.dinv = perturb_dinv(&self.dinv, x, y, h),
            Variable::Normal(x, y, t) => out.normals = perturb_normal(&self.normals, x, y, t, h),
            Variable::PrevDinv(x, y) => out.prev_dinv = perturb_dinv(&self.prev_dinv, x, y, h),
            Variable::PrevNormal(x, y, t) => {
                out.prev_normals = perturb_normal(&self.prev_normals, x, y, t, h)
            }
            Variable::Xi(i) => out.xi[i] += h,
        }
        out
    }

    fn analytic(&self, grads: &Gradients, var: Variable) -> f64 {
        let project = |g: &ImageGrid, n: &NormalMap, x: usize, y: usize, t: usize| {
            let v = Vector3::new(g.get(x, y, 0), g.get(x, y, 1), g.get(x, y, 2));
            v.dot(&tangent(&n.get(x, y), t))
        };
        match var {
            Variable::Dinv(x, y) => grads.d_dinv.get(x, y, 0),
            Variable::Normal(x, y, t) => project(&grads.d_normals, &self.normals, x, y, t),
            Variable::PrevDinv(x, y) => grads.d_dinv_prev.get(x, y, 0),
            Variable::PrevNormal(x, y, t) => {
                project(&grads.d_normals_prev, &self.prev_normals, x, y, t)
            }
            Variable::Xi(i) => grads.d_xi[i],
        }
    }
}

/// Evaluates loss `term` (index into `TERM_NAMES`). `reference` is the fixed
/// target of the normal direction loss.
fn evaluate(term: usize, inst: &Instance, reference: &NormalMap) -> Result<(f64, Gradients)> {
    let k = &inst.intrinsics;
    let pose = RigidTransform::exp(&inst.xi);
    match term {
        0 => {
            let p = photometric_loss(
                &inst.left,
                &inst.right,
                &inst.prev_left,
                &inst.dinv,
                k,
                &inst.stereo,
                &pose,
            )?;
            Ok((p.value, p.gradients))
        }
        1 => depth_normal_consistency_loss(
            &inst.dinv,
            &inst.normals,
            &inst.left,
            k,
            EdgeParams::default(),
        ),
        2 => normal_direction_loss(&inst.normals, reference),
        3 => normal_smoothness_loss(&inst.normals, &inst.left),
        4 | 5 => {
            let t = temporal_consistency_losses(
                &inst.dinv,
                &inst.prev_dinv,
                &inst.normals,
                &inst.prev_normals,
                k,
                &pose,
            )?;
            Ok(if term == 4 {
                (t.depth_value, t.depth_gradients)
            } else {
                (t.normal_value, t.normal_gradients)
            })
        }
        _ => Err(Error::InvalidConfig(format!("no loss with index {term}"))),
    }
}

fn central_difference(
    term: usize,
    inst: &Instance,
    reference: &NormalMap,
    var: Variable,
    h: f64,
) -> Result<f64> {
    let plus = evaluate(term, &inst.perturbed(var, h), reference)?.0;
    let minus = evaluate(term, &inst.perturbed(var, -h), reference)?.0;
    Ok((plus - minus) / (2.0 * h))
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(SCALE_FLOOR)
}

/// Outcome of one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub seed: u64,
    pub variable: Variable,
    pub analytic: f64,
    pub numeric: f64,
    /// `None` when the probe was excluded as lying on a kink.
    pub relative_error: Option<f64>,
}

fn probe(
    term: usize,
    inst: &Instance,
    reference: &NormalMap,
    grads: &Gradients,
    var: Variable,
    seed: u64,
) -> Result<Probe> {
    let diffs = KINK_STEPS
        .iter()
        .map(|&h| central_difference(term, inst, reference, var, h))
        .collect::<Result<Vec<_>>>()?;
    let smooth = diffs
        .iter()
        .all(|d| relative(*d, diffs[0]) <= KINK_AGREEMENT);
    let numeric = central_difference(term, inst, reference, var, STEP)?;
    let analytic = inst.analytic(grads, var);
    Ok(Probe {
        seed,
        variable: var,
        analytic,
        numeric,
        relative_error: smooth.then(|| relative(analytic, numeric)),
    })
}

fn variables_at(blocks: &[Block], x: usize, y: usize) -> Vec<Variable> {
    blocks
        .iter()
        .flat_map(|b| match b {
            Block::Dinv => vec![Variable::Dinv(x, y)],
            Block::Normal => vec![Variable::Normal(x, y, 0), Variable::Normal(x, y, 1)],
            Block::PrevDinv => vec![Variable::PrevDinv(x, y)],
            Block::PrevNormal => vec![Variable::PrevNormal(x, y, 0), Variable::PrevNormal(x, y, 1)],
            Block::Xi => Vec::new(),
        })
        .collect()
}

/// Every probe of one loss over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCheck {
    pub name: &'static str,
    pub probes: Vec<Probe>,
}

impl LossCheck {
    pub fn excluded(&self) -> usize {
        self.probes
            .iter()
            .filter(|p| p.relative_error.is_none())
            .count()
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .filter(|p| p.relative_error.is_some())
            .max_by(|a, b| {
                a.relative_error
                    .partial_cmp(&b.relative_error)
                    .expect("finite errors")
            })
    }

    pub fn max_relative_error(&self) -> f64 {
        self.worst()
            .and_then(|p| p.relative_error)
            .unwrap_or(f64::INFINITY)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        let too_many_kinks =
            self.excluded() as f64 > MAX_EXCLUDED_FRACTION * self.probes.len() as f64;
        !too_many_kinks && self.max_relative_error() < tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub losses: Vec<LossCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.losses.iter().all(|l| l.passed(self.tolerance))
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.losses {
            let status = if l.passed(self.tolerance) {
                "PASS"
            } else {
                "FAIL"
            };
            write!(
                f,
                "{:<5} max_rel_err {:.3e}  probes {:>3}  kinks {:>3}  {status}",
                l.name,
                l.max_relative_error(),
                l.probes.len(),
                l.excluded()
            )?;
            if status == "FAIL" {
                match l.worst() {
                    Some(p) => write!(
                        f,
                        "  worst: {} (seed {}) analytic {:.6e} numeric {:.6e}",
                        p.variable, p.seed, p.analytic, p.numeric
                    )?,
                    None => write!(f, "  every probe sits on a kink")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Runs the suite: for each of [`SEEDS`] instances derived from `seed`, each
/// loss is probed at [`PROBES_PER_LOSS`] random pixels (every dependent
/// variable there) and at every pose coordinate it depends on.
pub fn run(seed: u64, tolerance: f64) -> Result<GradcheckReport> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let mut losses: Vec<LossCheck> = TERM_NAMES
        .iter()
        .map(|&name| LossCheck {
            name,
            probes: Vec::new(),
        })
        .collect();
    for s in 0..SEEDS {
        let instance_seed = seed.wrapping_add(s);
        let inst = Instance::random(WIDTH, HEIGHT, instance_seed);
        let reference = normal_from_depth(&inst.dinv, &inst.intrinsics)?;
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed ^ 0x9e37_79b9_7f4a_7c15);
        for (term, check) in losses.iter_mut().enumerate() {
            let (_, grads) = evaluate(term, &inst, &reference)?;
            let blocks = DEPENDENCIES[term];
            let mut vars = Vec::new();
            for _ in 0..PROBES_PER_LOSS {
                let (x, y) = (rng.gen_range(0..WIDTH), rng.gen_range(0..HEIGHT));
                vars.extend(variables_at(blocks, x, y));
            }
            if blocks.contains(&Block::Xi) {
                vars.extend((0..6).map(Variable::Xi));
            }
            for var in vars {
                check
                    .probes
                    .push(probe(term, &inst, &reference, &grads, var, instance_seed)?);
            }
        }
    }
    Ok(GradcheckReport { tolerance, losses })
}
