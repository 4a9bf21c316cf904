//! Differentiable multi-view geometry losses for joint recovery of inverse
//! depth, surface normals and camera ego-motion from stereo sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: pinhole camera and SE(3) transforms with analytic Jacobians.
//! * [`grid`]: dense grids, bilinear sampling, image gradients and edge weights.
//! * [`losses`]: photometric, depth-normal consistency, normal direction,
//!   normal smoothness and temporal consistency terms with gradients.
//! * [`solver`]: coarse-to-fine Adam optimisation of the geometry variables.
//! * [`synth`]: piecewise-planar scenes rendered with exact ground truth.
//! * [`eval`]: depth and normal error metrics.
//! * [`io`] and [`cli`]: file formats and the `geoloss` command line.
//! * [`gradcheck`]: analytic against finite-difference gradients.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod losses;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
