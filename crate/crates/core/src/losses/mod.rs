//! The six self-supervised loss terms with analytic gradients.
//!
//! Every loss returns its raw sum (not a per-pixel mean) together with
//! [`Gradients`]. Normal gradients are projected onto the tangent plane of the
//! unit sphere at the current normal. The L1 subgradient at zero is zero.

mod consistency;
mod direction;
mod photometric;
mod smoothness;
mod temporal;
mod total;

pub use consistency::{depth_normal_consistency_loss, point_plane_residuals};
pub use direction::{normal_direction_loss, normal_from_depth};
pub use photometric::{photometric_loss, stereo_photometric_loss, PhotometricLoss};
pub use smoothness::normal_smoothness_loss;
pub use temporal::{temporal_consistency_losses, TemporalLosses};
pub use total::{spatial_loss, total_loss, LossInputs};

use nalgebra::{Vector3, Vector6};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, NormalMap};

pub const TERM_NAMES: [&str; 6] = ["L_P", "L_DN", "L_N", "L_NS", "L_DC", "L_NC"];

/// Relative weights `lambda1..lambda6` of `L_P, L_DN, L_N, L_NS, L_DC, L_NC`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub photometric: f64,
    pub depth_normal: f64,
    pub normal_direction: f64,
    pub normal_smoothness: f64,
    pub depth_temporal: f64,
    pub normal_temporal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::from_array([1.0, 13.0, 1.0, 0.7, 1.0, 0.01])
    }
}

impl LossWeights {
    pub fn new(lambdas: [f64; 6]) -> Result<Self> {
        if let Some(i) = lambdas.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "lambda{} must be a non-negative finite number, got {}",
                i + 1,
                lambdas[i]
            )));
        }
        Ok(Self::from_array(lambdas))
    }

    fn from_array(l: [f64; 6]) -> Self {
        Self {
            photometric: l[0],
            depth_normal: l[1],
            normal_direction: l[2],
            normal_smoothness: l[3],
            depth_temporal: l[4],
            normal_temporal: l[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.photometric,
            self.depth_normal,
            self.normal_direction,
            self.normal_smoothness,
            self.depth_temporal,
            self.normal_temporal,
        ]
    }

    pub fn zero() -> Self {
        Self::from_array([0.0; 6])
    }
}

/// Parameters of the edge weight `G(p) = exp(-alpha |grad I|^beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

/// Weighted loss breakdown in the evaluation order `L_P, L_DN, L_N, L_NS, L_DC, L_NC`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub terms: [f64; 6],
    /// Number of pixels contributing to each term.
    pub counts: [usize; 6],
    pub weights: LossWeights,
    pub total: f64,
}

impl LossReport {
    pub fn new(terms: [f64; 6], counts: [usize; 6], weights: LossWeights) -> Self {
        let total = weights
            .to_array()
            .iter()
            .zip(&terms)
            .map(|(l, t)| l * t)
            .sum();
        Self {
            terms,
            counts,
            weights,
            total,
        }
    }

    /// Term values divided by their valid-pixel counts.
    pub fn means(&self) -> [f64; 6] {
        std::array::from_fn(|i| {
            if self.counts[i] == 0 {
                0.0
            } else {
                self.terms[i] / self.counts[i] as f64
            }
        })
    }

    /// Adds another frame's terms into this report (same weights).
    pub fn merge(&self, other: &LossReport) -> LossReport {
        let terms = std::array::from_fn(|i| self.terms[i] + other.terms[i]);
        let counts = std::array::from_fn(|i| self.counts[i] + other.counts[i]);
        LossReport::new(terms, counts, self.weights)
    }
}

/// Loss gradients with respect to every optimizable quantity of a two-frame instance.
///
/// `d_dinv`/`d_normals` belong to frame `t`; the `_prev` fields belong to frame
/// `t-1` and are only populated by the temporal terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_dinv: ImageGrid,
    pub d_normals: ImageGrid,
    pub d_xi: Vector6<f64>,
    pub d_dinv_prev: ImageGrid,
    pub d_normals_prev: ImageGrid,
}

impl Gradients {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            d_dinv: ImageGrid::zeros(width, height, 1),
            d_normals: ImageGrid::zeros(width, height, 3),
            d_xi: Vector6::zeros(),
            d_dinv_prev: ImageGrid::zeros(width, height, 1),
            d_normals_prev: ImageGrid::zeros(width, height, 3),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        fn axpy(dst: &mut ImageGrid, src: &ImageGrid, s: f64) {
            dst.data_mut()
                .iter_mut()
                .zip(src.data())
                .for_each(|(d, v)| *d += s * v);
        }
        axpy(&mut self.d_dinv, &other.d_dinv, scale);
        axpy(&mut self.d_normals, &other.d_normals, scale);
        axpy(&mut self.d_dinv_prev, &other.d_dinv_prev, scale);
        axpy(&mut self.d_normals_prev, &other.d_normals_prev, scale);
        self.d_xi += other.d_xi * scale;
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.d_dinv,
            &self.d_normals,
            &self.d_dinv_prev,
            &self.d_normals_prev,
        ]
        .iter()
        .all(|g| g.data().iter().all(|v| v.is_finite()))
            && self.d_xi.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry over all blocks.
    pub fn max_abs(&self) -> f64 {
        [
            &self.d_dinv,
            &self.d_normals,
            &self.d_dinv_prev,
            &self.d_normals_prev,
        ]
        .iter()
        .flat_map(|g| g.data().iter())
        .chain(self.d_xi.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Removes the radial component of a per-pixel normal gradient: `g - <g, n> n`.
pub(crate) fn project_to_tangent(grad: &mut ImageGrid, normals: &NormalMap) {
    let n = normals.grid().data();
    grad.data_mut()
        .chunks_exact_mut(3)
        .zip(n.chunks_exact(3))
        .for_each(|(g, n)| {
            let d = g[0] * n[0] + g[1] * n[1] + g[2] * n[2];
            g[0] -= d * n[0];
            g[1] -= d * n[1];
            g[2] -= d * n[2];
        });
}

pub(crate) fn check_dims(reference: (usize, usize), found: (usize, usize)) -> Result<()> {
    if reference != found {
        return Err(Error::ResolutionMismatch {
            expected: reference,
            found,
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn vec3(s: &[f64]) -> Vector3<f64> {
    Vector3::new(s[0], s[1], s[2])
}

#[cfg(test)]
pub(crate) mod test_support {
    pub use crate::gradcheck::{intrinsics, smooth_dinv, smooth_image, smooth_normals};
}
