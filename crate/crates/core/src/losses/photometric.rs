use nalgebra::{RowVector3, Vector2, Vector3, Vector6};

use super::{check_dims, sign, Gradients};
use crate::error::Result;
use crate::geometry::{Intrinsics, PoseDerivatives, RigidTransform};
use crate::grid::{depth_from_inverse, ImageGrid, InverseDepthMap, ValidityMask};

/// Photometric alignment loss and its parts.
#[derive(Debug, Clone)]
pub struct PhotometricLoss {
    pub value: f64,
    pub stereo_value: f64,
    pub temporal_value: f64,
    pub gradients: Gradients,
    pub stereo_mask: ValidityMask,
    pub temporal_mask: ValidityMask,
}

/// L1 photometric loss between `left` and its reconstructions from `right`
/// (through the fixed stereo transform) and from `prev_left` (through the pose).
///
/// Pixels whose reprojection falls behind the camera or outside the source image
/// are masked out. `d_xi` only receives the temporal part.
#[allow(clippy::too_many_arguments)]
pub fn photometric_loss(
    left: &ImageGrid,
    right: &ImageGrid,
    prev_left: &ImageGrid,
    dinv: &InverseDepthMap,
    k: &Intrinsics,
    stereo: &RigidTransform,
    pose: &RigidTransform,
) -> Result<PhotometricLoss> {
    check_dims(left.dims(), right.dims())?;
    check_dims(left.dims(), prev_left.dims())?;
    check_dims(left.dims(), dinv.dims())?;
    check_channels(left, right)?;
    check_channels(left, prev_left)?;
    let (w, h) = left.dims();
    let mut gradients = Gradients::zeros(w, h);
    let (stereo_value, stereo_mask) = warp_l1(
        left,
        right,
        dinv,
        k,
        stereo,
        gradients.d_dinv.data_mut(),
        None,
    );
    let (temporal_value, temporal_mask) = warp_l1(
        left,
        prev_left,
        dinv,
        k,
        pose,
        gradients.d_dinv.data_mut(),
        Some(&mut gradients.d_xi),
    );
    Ok(PhotometricLoss {
        value: stereo_value + temporal_value,
        stereo_value,
        temporal_value,
        gradients,
        stereo_mask,
        temporal_mask,
    })
}

/// Stereo half of [`photometric_loss`], for frames without a temporal neighbour.
pub fn stereo_photometric_loss(
    left: &ImageGrid,
    right: &ImageGrid,
    dinv: &InverseDepthMap,
    k: &Intrinsics,
    stereo: &RigidTransform,
) -> Result<PhotometricLoss> {
    check_dims(left.dims(), right.dims())?;
    check_dims(left.dims(), dinv.dims())?;
    check_channels(left, right)?;
    let (w, h) = left.dims();
    let mut gradients = Gradients::zeros(w, h);
    let (value, stereo_mask) = warp_l1(
        left,
        right,
        dinv,
        k,
        stereo,
        gradients.d_dinv.data_mut(),
        None,
    );
    Ok(PhotometricLoss {
        value,
        stereo_value: value,
        temporal_value: 0.0,
        gradients,
        stereo_mask,
        temporal_mask: ValidityMask::new(w, h, false),
    })
}

fn check_channels(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.channels() != b.channels() {
        return Err(crate::error::Error::InvalidGrid(format!(
            "channel count mismatch: {} vs {}",
            a.channels(),
            b.channels()
        )));
    }
    Ok(())
}

/// `sum_p sum_c |reference(p) - W(source, project(T D(p) K^-1 p))|`, accumulating
/// gradients into `d_dinv` and (optionally) `d_xi`.
fn warp_l1(
    reference: &ImageGrid,
    source: &ImageGrid,
    dinv: &InverseDepthMap,
    k: &Intrinsics,
    transform: &RigidTransform,
    d_dinv: &mut [f64],
    mut d_xi: Option<&mut Vector6<f64>>,
) -> (f64, ValidityMask) {
    let (w, h) = reference.dims();
    let channels = reference.channels();
    let derivs = d_xi.as_ref().map(|_| transform.derivatives());
    let mut mask = ValidityMask::new(w, h, false);
    let mut value = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(rp) = Reprojection::new(k, transform, x, y, dinv.grid().data()[i]) else {
                continue;
            };
            let Some(taps) = source.taps(rp.target.x, rp.target.y) else {
                continue;
            };
            mask.set(x, y, true);
            let mut dq = [0.0; 2];
            for c in 0..channels {
                let (v, g) = taps.sample(source, c);
                let r = reference.get(x, y, c) - v;
                value += r.abs();
                let s = sign(r);
                dq[0] -= s * g[0];
                dq[1] -= s * g[1];
            }
            if dq == [0.0, 0.0] {
                continue;
            }
            d_dinv[i] += rp.backprop(dq, k, transform, derivs.as_ref(), d_xi.as_deref_mut());
        }
    }
    (value, mask)
}

/// One pixel carried through `project(T D(p) K^-1 p)`.
pub(super) struct Reprojection {
    pub depth: f64,
    pub ray: Vector3<f64>,
    pub point: Vector3<f64>,
    pub moved: Vector3<f64>,
    pub target: Vector2<f64>,
}

impl Reprojection {
    /// `None` when the transformed point is not in front of the camera.
    #[inline]
    pub fn new(
        k: &Intrinsics,
        transform: &RigidTransform,
        x: usize,
        y: usize,
        dinv: f64,
    ) -> Option<Self> {
        let depth = depth_from_inverse(dinv);
        let ray = k.backproject(x as f64, y as f64).xtilde;
        let point = ray * depth;
        let moved = transform.transform_point(&point);
        if !(moved.z > 0.0) {
            return None;
        }
        Some(Self {
            depth,
            ray,
            point,
            moved,
            target: if transform.is_identity() {
                Vector2::new(x as f64, y as f64)
            } else {
                k.project_unchecked(&moved)
            },
        })
    }

    /// Pulls a gradient on the target position back to the inverse depth (returned)
    /// and, when `derivs` is given, to the pose 6-vector.
    #[inline]
    pub fn backprop(
        &self,
        dq: [f64; 2],
        k: &Intrinsics,
        transform: &RigidTransform,
        derivs: Option<&PoseDerivatives>,
        d_xi: Option<&mut Vector6<f64>>,
    ) -> f64 {
        let jp = k.project_jacobian(&self.moved);
        let d_moved = RowVector3::new(
            dq[0] * jp[0][0] + dq[1] * jp[1][0],
            dq[0] * jp[0][1] + dq[1] * jp[1][1],
            dq[0] * jp[0][2] + dq[1] * jp[1][2],
        );
        if let (Some(gxi), Some(derivs)) = (d_xi, derivs) {
            *gxi += (d_moved * derivs.point(&self.point)).transpose();
        }
        // dD/dDinv = -D^2
        let d_depth = (d_moved * (transform.rotation() * self.ray))[0];
        -d_depth * self.depth * self.depth
    }
}
