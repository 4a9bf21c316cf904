use nalgebra::{Vector3, Vector6};

use super::photometric::Reprojection;
use super::{check_dims, project_to_tangent, sign, vec3, Gradients};
use crate::error::Result;
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::{
    depth_from_inverse, ImageGrid, InverseDepthMap, NormalMap, ValidityMask, DEPTH_EPS,
};

/// Temporal geometry consistency terms `L_DC` and `L_NC` with separate gradients.
#[derive(Debug, Clone)]
pub struct TemporalLosses {
    pub depth_value: f64,
    pub normal_value: f64,
    pub depth_gradients: Gradients,
    pub normal_gradients: Gradients,
    pub mask: ValidityMask,
}

impl TemporalLosses {
    /// Unweighted sum of both terms' gradients.
    pub fn combined_gradients(&self) -> Gradients {
        let mut g = self.depth_gradients.clone();
        g.add_scaled(&self.normal_gradients, 1.0);
        g
    }
}

/// Frame `t-1` geometry expressed in frame `t`, still indexed by `t-1` pixels.
struct Transported {
    /// Stored inverse depth of the transported points, `1/z' - 1e-4`.
    dinv: ImageGrid,
    /// `d dinv / d D_inv^{t-1}` at the same pixel.
    d_dinv_prev: Vec<f64>,
    /// `d dinv / d xi` at the same pixel.
    d_xi: Vec<Vector6<f64>>,
    /// `R^T N^{t-1}`.
    normals: ImageGrid,
    valid: Vec<bool>,
}

fn transport(
    prev_dinv: &InverseDepthMap,
    prev_normals: &NormalMap,
    k: &Intrinsics,
    pose: &RigidTransform,
) -> Transported {
    let (w, h) = prev_dinv.dims();
    let derivs = pose.derivatives();
    let rt = pose.rotation().transpose();
    let mut dinv = ImageGrid::zeros(w, h, 1);
    let mut normals = ImageGrid::zeros(w, h, 3);
    let mut d_dinv_prev = vec![0.0; w * h];
    let mut d_xi = vec![Vector6::zeros(); w * h];
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let n = rt * prev_normals.get(x, y);
            normals.data_mut()[3 * i..3 * i + 3].copy_from_slice(n.as_slice());
            let depth = depth_from_inverse(prev_dinv.get(x, y));
            let ray = k.backproject(x as f64, y as f64).xtilde;
            let point = ray * depth;
            let carried = pose.inverse_transform_point(&point);
            if !(carried.z > 0.0) {
                continue;
            }
            valid[i] = true;
            let inv_z = 1.0 / carried.z;
            dinv.data_mut()[i] = inv_z - DEPTH_EPS;
            let dz = -inv_z * inv_z;
            // z' = (R^T (D ray - t))_z, dD/dDinv = -D^2
            d_dinv_prev[i] = dz * (rt * ray).z * -(depth * depth);
            d_xi[i] = derivs.inverse_point(&point).row(2).transpose() * dz;
        }
    }
    Transported {
        dinv,
        d_dinv_prev,
        d_xi,
        normals,
        valid,
    }
}

/// `L_DC = sum_p |D_inv^t(p) - W(D_inv^{t-1'}, p'')|` and
/// `L_NC = sum_p |N^t(p) - W(N^{t-1'}, p'')|_1`, where the primed fields are the
/// `t-1` maps carried into frame `t` by `T^-1` (points) and `R^T` (normals), and
/// `p''` reprojects `p` into frame `t-1` with the current depth and pose.
///
/// The warped normal is renormalized after bilinear interpolation. Pixels whose
/// reprojection leaves the image, or whose interpolation taps include points
/// behind the camera, are masked.
pub fn temporal_consistency_losses(
    dinv: &InverseDepthMap,
    prev_dinv: &InverseDepthMap,
    normals: &NormalMap,
    prev_normals: &NormalMap,
    k: &Intrinsics,
    pose: &RigidTransform,
) -> Result<TemporalLosses> {
    let dims = dinv.dims();
    check_dims(dims, prev_dinv.dims())?;
    check_dims(dims, normals.dims())?;
    check_dims(dims, prev_normals.dims())?;
    let (w, h) = dims;
    let moved = transport(prev_dinv, prev_normals, k, pose);
    let derivs = pose.derivatives();
    let rotation = pose.rotation();
    let mut dg = Gradients::zeros(w, h);
    let mut ng = Gradients::zeros(w, h);
    let mut mask = ValidityMask::new(w, h, false);
    let mut depth_value = 0.0;
    let mut normal_value = 0.0;
    let current = normals.grid().data();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let Some(rp) = Reprojection::new(k, pose, x, y, dinv.get(x, y)) else {
                continue;
            };
            let Some(taps) = moved.dinv.taps(rp.target.x, rp.target.y) else {
                continue;
            };
            if !taps.index.iter().all(|&i| moved.valid[i]) {
                continue;
            }
            mask.set(x, y, true);

            // depth term
            let (v, gq) = taps.sample(&moved.dinv, 0);
            let r = dinv.get(x, y) - v;
            depth_value += r.abs();
            let s = sign(r);
            if s != 0.0 {
                dg.d_dinv.data_mut()[p] += s;
                for (&i, &wk) in taps.index.iter().zip(&taps.weight) {
                    dg.d_dinv_prev.data_mut()[i] -= s * wk * moved.d_dinv_prev[i];
                    dg.d_xi -= moved.d_xi[i] * (s * wk);
                }
                let dq = [-s * gq[0], -s * gq[1]];
                dg.d_dinv.data_mut()[p] +=
                    rp.backprop(dq, k, pose, Some(&derivs), Some(&mut dg.d_xi));
            }

            // normal term
            let mut warped = Vector3::zeros();
            let mut dwarped = [[0.0; 2]; 3];
            for c in 0..3 {
                let (v, g) = taps.sample(&moved.normals, c);
                warped[c] = v;
                dwarped[c] = g;
            }
            let norm = warped.norm();
            if norm < 1e-12 {
                continue;
            }
            let m = warped / norm;
            let np = vec3(&current[3 * p..3 * p + 3]);
            let mut g_m = Vector3::zeros();
            for c in 0..3 {
                let r = np[c] - m[c];
                normal_value += r.abs();
                let s = sign(r);
                ng.d_normals.data_mut()[3 * p + c] += s;
                g_m[c] = -s;
            }
            if g_m == Vector3::zeros() {
                continue;
            }
            // d(w/|w|)/dw = (I - m m^T)/|w|
            let g_w = (g_m - m * m.dot(&g_m)) / norm;
            let mut dq = [0.0; 2];
            for c in 0..3 {
                dq[0] += g_w[c] * dwarped[c][0];
                dq[1] += g_w[c] * dwarped[c][1];
            }
            for (&i, &wk) in taps.index.iter().zip(&taps.weight) {
                let g_tap = g_w * wk;
                let back = rotation * g_tap;
                let gp = &mut ng.d_normals_prev.data_mut()[3 * i..3 * i + 3];
                gp[0] += back.x;
                gp[1] += back.y;
                gp[2] += back.z;
                let jr =
                    derivs.inverse_rotation(&vec3(&prev_normals.grid().data()[3 * i..3 * i + 3]));
                let d_omega = jr.tr_mul(&g_tap);
                ng.d_xi[3] += d_omega.x;
                ng.d_xi[4] += d_omega.y;
                ng.d_xi[5] += d_omega.z;
            }
            ng.d_dinv.data_mut()[p] += rp.backprop(dq, k, pose, Some(&derivs), Some(&mut ng.d_xi));
        }
    }
    for g in [&mut dg, &mut ng] {
        project_to_tangent(&mut g.d_normals, normals);
        project_to_tangent(&mut g.d_normals_prev, prev_normals);
    }
    Ok(TemporalLosses {
        depth_value,
        normal_value,
        depth_gradients: dg,
        normal_gradients: ng,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::test_support::*;
    use std::f64::consts::PI;

    #[test]
    fn static_camera_is_consistent() {
        let (w, h) = (12, 9);
        let k = intrinsics(w, h);
        let dinv = smooth_dinv(w, h, 1);
        let n = smooth_normals(w, h, 2);
        let out =
            temporal_consistency_losses(&dinv, &dinv, &n, &n, &k, &RigidTransform::identity())
                .unwrap();
        assert!(out.depth_value < 1e-12, "{}", out.depth_value);
        assert!(out.normal_value < 1e-12, "{}", out.normal_value);
        assert!(out.mask.count() > 0);
    }

    #[test]
    fn half_turn_about_optical_axis_keeps_transported_normal() {
        // odd dimensions so the principal point is a pixel centre and the grid is
        // symmetric under the half turn
        let (w, h) = (7, 5);
        let k = intrinsics(w, h);
        let dinv = InverseDepthMap::constant(w, h, 0.2);
        let pose = RigidTransform::exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, PI));
        let prev = NormalMap::constant(w, h, Vector3::new(1.0, 0.0, 0.0));
        let cur = NormalMap::constant(w, h, Vector3::new(-1.0, 0.0, 0.0));
        let out = temporal_consistency_losses(&dinv, &dinv, &cur, &prev, &k, &pose).unwrap();
        assert!(out.mask.get(3, 2));
        assert!(out.normal_value < 1e-9, "{}", out.normal_value);
    }

    #[test]
    fn mismatched_resolution_is_rejected() {
        let k = intrinsics(6, 5);
        let a = InverseDepthMap::constant(6, 5, 0.1);
        let b = InverseDepthMap::constant(5, 5, 0.1);
        let n = NormalMap::fronto_parallel(6, 5);
        assert!(
            temporal_consistency_losses(&a, &b, &n, &n, &k, &RigidTransform::identity()).is_err()
        );
    }
}
