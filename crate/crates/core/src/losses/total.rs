use super::consistency::consistency_with_weights;
use super::smoothness::{smoothness_weights, smoothness_with_weights};
use super::{
    normal_direction_loss, normal_from_depth, photometric_loss, stereo_photometric_loss,
    temporal_consistency_losses, EdgeParams, Gradients, LossReport, LossWeights,
};
use crate::error::Result;
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{edge_weight, ImageGrid, InverseDepthMap, NormalMap};

/// Everything one evaluation of the six-term objective needs.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub left: &'a ImageGrid,
    pub right: &'a ImageGrid,
    pub prev_left: &'a ImageGrid,
    pub dinv: &'a InverseDepthMap,
    pub normals: &'a NormalMap,
    pub prev_dinv: &'a InverseDepthMap,
    pub prev_normals: &'a NormalMap,
    pub intrinsics: &'a Intrinsics,
    pub stereo: &'a RigidTransform,
    pub pose: &'a RigidTransform,
}

/// `lambda1 L_P + ... + lambda6 L_NC` for the reference frame, evaluated in the
/// order `L_P, L_DN, L_N, L_NS, L_DC, L_NC`.
///
/// `L_N` compares against normals recomputed from the current depth, which are
/// treated as constants.
pub fn total_loss(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    edge: EdgeParams,
) -> Result<(LossReport, Gradients)> {
    let (w, h) = inputs.left.dims();
    let lambda = weights.to_array();
    let mut grads = Gradients::zeros(w, h);
    let mut terms = [0.0; 6];
    let mut counts = [0usize; 6];

    let photo = photometric_loss(
        inputs.left,
        inputs.right,
        inputs.prev_left,
        inputs.dinv,
        inputs.intrinsics,
        inputs.stereo,
        inputs.pose,
    )?;
    terms[0] = photo.value;
    counts[0] = photo.stereo_mask.count() + photo.temporal_mask.count();
    grads.add_scaled(&photo.gradients, lambda[0]);

    let spatial = spatial_terms(
        inputs.left,
        inputs.dinv,
        inputs.normals,
        inputs.intrinsics,
        edge,
    )?;
    for (i, (value, g)) in spatial.into_iter().enumerate() {
        terms[i + 1] = value;
        counts[i + 1] = w * h;
        grads.add_scaled(&g, lambda[i + 1]);
    }

    let temporal = temporal_consistency_losses(
        inputs.dinv,
        inputs.prev_dinv,
        inputs.normals,
        inputs.prev_normals,
        inputs.intrinsics,
        inputs.pose,
    )?;
    terms[4] = temporal.depth_value;
    terms[5] = temporal.normal_value;
    counts[4] = temporal.mask.count();
    counts[5] = temporal.mask.count();
    grads.add_scaled(&temporal.depth_gradients, lambda[4]);
    grads.add_scaled(&temporal.normal_gradients, lambda[5]);

    Ok((LossReport::new(terms, counts, *weights), grads))
}

/// `L_P`, `L_DN`, `L_N` and `L_NS` for a frame with no earlier geometry to agree
/// with. `L_DC` and `L_NC` report zero.
///
/// With `temporal_source = Some((image, transform))` the photometric term also
/// reconstructs `left` from `image`, holding `transform` constant (`d_xi` stays
/// zero). With `None` only the stereo half of `L_P` is used.
#[allow(clippy::too_many_arguments)]
pub fn spatial_loss(
    left: &ImageGrid,
    right: &ImageGrid,
    dinv: &InverseDepthMap,
    normals: &NormalMap,
    k: &Intrinsics,
    stereo: &RigidTransform,
    weights: &LossWeights,
    edge: EdgeParams,
    temporal_source: Option<(&ImageGrid, &RigidTransform)>,
) -> Result<(LossReport, Gradients)> {
    let (w, h) = left.dims();
    let lambda = weights.to_array();
    let mut grads = Gradients::zeros(w, h);
    let mut terms = [0.0; 6];
    let mut counts = [0usize; 6];
    let photo = match temporal_source {
        Some((source, transform)) => {
            let mut p = photometric_loss(left, right, source, dinv, k, stereo, transform)?;
            p.gradients.d_xi = nalgebra::Vector6::zeros();
            p
        }
        None => stereo_photometric_loss(left, right, dinv, k, stereo)?,
    };
    terms[0] = photo.value;
    counts[0] = photo.stereo_mask.count() + photo.temporal_mask.count();
    grads.add_scaled(&photo.gradients, lambda[0]);
    let spatial = spatial_terms(left, dinv, normals, k, edge)?;
    for (i, (value, g)) in spatial.into_iter().enumerate() {
        terms[i + 1] = value;
        counts[i + 1] = w * h;
        grads.add_scaled(&g, lambda[i + 1]);
    }
    Ok((LossReport::new(terms, counts, *weights), grads))
}

/// `L_DN`, `L_N`, `L_NS` in that order.
fn spatial_terms(
    image: &ImageGrid,
    dinv: &InverseDepthMap,
    normals: &NormalMap,
    k: &Intrinsics,
    edge: EdgeParams,
) -> Result<[(f64, Gradients); 3]> {
    super::check_dims(image.dims(), dinv.dims())?;
    super::check_dims(image.dims(), normals.dims())?;
    let g = edge_weight(image, edge.alpha, edge.beta);
    let dn = consistency_with_weights(dinv, normals, &g, k);
    let reference = normal_from_depth(dinv, k)?;
    let direction = normal_direction_loss(normals, &reference)?;
    let smooth = smoothness_with_weights(normals, &smoothness_weights(image));
    Ok([dn, direction, smooth])
}
