use super::{check_dims, project_to_tangent, sign, vec3, EdgeParams, Gradients};
use crate::error::Result;
use crate::geometry::Intrinsics;
use crate::grid::{edge_weight, ImageGrid, InverseDepthMap, NormalMap, DEPTH_EPS};

/// Depth-normal consistency
/// `sum_p G(p) sum_{q in {p, right, below}} |z(p) c_pq - z(q) c_pp|`
/// with `c_pq = <N(p), K^-1 q>`, `c_pp = <N(p), K^-1 p>` and `z = D_inv + 1e-4`
/// the reciprocal of the converted depth.
///
/// The `q = p` term is identically zero; it is evaluated anyway. Neighbours
/// outside the image are skipped.
pub fn depth_normal_consistency_loss(
    dinv: &InverseDepthMap,
    normals: &NormalMap,
    image: &ImageGrid,
    k: &Intrinsics,
    edge: EdgeParams,
) -> Result<(f64, Gradients)> {
    check_dims(dinv.dims(), normals.dims())?;
    check_dims(dinv.dims(), image.dims())?;
    let weights = edge_weight(image, edge.alpha, edge.beta);
    Ok(consistency_with_weights(dinv, normals, &weights, k))
}

pub(crate) fn consistency_with_weights(
    dinv: &InverseDepthMap,
    normals: &NormalMap,
    weights: &ImageGrid,
    k: &Intrinsics,
) -> (f64, Gradients) {
    let (w, h) = dinv.dims();
    let z = dinv.grid().data();
    let n = normals.grid().data();
    let g = weights.data();
    let mut grads = Gradients::zeros(w, h);
    let mut value = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let np = vec3(&n[3 * p..3 * p + 3]);
            let xp = k.backproject(x as f64, y as f64).xtilde;
            let zp = z[p] + DEPTH_EPS;
            let c_pp = np.dot(&xp);
            let neighbours = [
                Some((x, y)),
                (x + 1 < w).then_some((x + 1, y)),
                (y + 1 < h).then_some((x, y + 1)),
            ];
            let mut sum = 0.0;
            for (qx, qy) in neighbours.into_iter().flatten() {
                let q = qy * w + qx;
                let xq = k.backproject(qx as f64, qy as f64).xtilde;
                let zq = z[q] + DEPTH_EPS;
                let c_pq = np.dot(&xq);
                // (z_p c_pq - z_q c_pp) with the offset term kept apart
                let r = z[p] * c_pq - z[q] * c_pp + DEPTH_EPS * (c_pq - c_pp);
                sum += r.abs();
                let s = g[p] * sign(r);
                if s == 0.0 {
                    continue;
                }
                grads.d_dinv.data_mut()[p] += s * c_pq;
                grads.d_dinv.data_mut()[q] -= s * c_pp;
                let dn = (xq * zp - xp * zq) * s;
                let gn = &mut grads.d_normals.data_mut()[3 * p..3 * p + 3];
                gn[0] += dn.x;
                gn[1] += dn.y;
                gn[2] += dn.z;
            }
            value += g[p] * sum;
        }
    }
    project_to_tangent(&mut grads.d_normals, normals);
    (value, grads)
}

/// Per-pixel residuals `<N(p), D(q) K^-1 q - D(p) K^-1 p>` for the right and
/// lower neighbours (`NaN` where the neighbour does not exist).
pub fn point_plane_residuals(
    dinv: &InverseDepthMap,
    normals: &NormalMap,
    k: &Intrinsics,
) -> Result<[ImageGrid; 2]> {
    check_dims(dinv.dims(), normals.dims())?;
    let (w, h) = dinv.dims();
    let depth = dinv.to_depth();
    let point = |x: usize, y: usize| {
        k.backproject(x as f64, y as f64)
            .at_depth(depth.get(x, y, 0))
    };
    let residual = |x: usize, y: usize, qx: usize, qy: usize| {
        if qx >= w || qy >= h {
            f64::NAN
        } else {
            normals.get(x, y).dot(&(point(qx, qy) - point(x, y)))
        }
    };
    Ok([
        ImageGrid::from_fn(w, h, 1, |x, y, _| residual(x, y, x + 1, y)),
        ImageGrid::from_fn(w, h, 1, |x, y, _| residual(x, y, x, y + 1)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::test_support::*;
    use nalgebra::Vector3;

    fn smoothness_reference(dinv: &InverseDepthMap, g: &ImageGrid) -> f64 {
        let (w, h) = dinv.dims();
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                let d = dinv.get(x, y);
                let mut s = 0.0;
                if x + 1 < w {
                    s += (d - dinv.get(x + 1, y)).abs();
                }
                if y + 1 < h {
                    s += (d - dinv.get(x, y + 1)).abs();
                }
                total += g.get(x, y, 0) * s;
            }
        }
        total
    }

    #[test]
    fn fronto_parallel_normals_reduce_to_inverse_depth_smoothness() {
        let (w, h) = (15, 12);
        for seed in 0..5 {
            let dinv = smooth_dinv(w, h, seed);
            let img = smooth_image(w, h, 3, seed + 100);
            let k = intrinsics(w, h);
            let n = NormalMap::fronto_parallel(w, h);
            let (value, _) =
                depth_normal_consistency_loss(&dinv, &n, &img, &k, EdgeParams::default()).unwrap();
            let g = edge_weight(&img, 1.0, 1.0);
            assert!((value - smoothness_reference(&dinv, &g)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_depth_with_tilted_normal_is_positive() {
        let (w, h) = (10, 8);
        let dinv = InverseDepthMap::constant(w, h, 0.2);
        let n = NormalMap::constant(w, h, Vector3::new(0.3, 0.2, -1.0));
        let img = ImageGrid::filled(w, h, 1, 0.5);
        let (value, _) = depth_normal_consistency_loss(
            &dinv,
            &n,
            &img,
            &intrinsics(w, h),
            EdgeParams::default(),
        )
        .unwrap();
        assert!(value > 0.0);
    }

    #[test]
    fn exact_plane_annihilates() {
        let (w, h) = (20, 16);
        let k = intrinsics(w, h);
        // plane <n, X> = -3 with camera-facing normal
        let n = Vector3::new(0.3, -0.4, -0.8).normalize();
        let depth = ImageGrid::from_fn(w, h, 1, |x, y, _| {
            -3.0 / n.dot(&k.backproject(x as f64, y as f64).xtilde)
        });
        let dinv = InverseDepthMap::from_depth(&depth).unwrap();
        let normals = NormalMap::constant(w, h, n);
        let img = smooth_image(w, h, 3, 9);
        let (value, _) =
            depth_normal_consistency_loss(&dinv, &normals, &img, &k, EdgeParams::default())
                .unwrap();
        assert!(value / ((w * h) as f64) < 1e-12, "{value}");
        for grid in point_plane_residuals(&dinv, &normals, &k).unwrap() {
            assert!(grid
                .data()
                .iter()
                .filter(|v| !v.is_nan())
                .all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (w, h) = (9, 7);
        let k = intrinsics(w, h);
        let dinv = smooth_dinv(w, h, 3);
        let normals = smooth_normals(w, h, 4);
        let img = smooth_image(w, h, 3, 5);
        let edge = EdgeParams::default();
        let f = |d: &InverseDepthMap, n: &NormalMap| {
            depth_normal_consistency_loss(d, n, &img, &k, edge)
                .unwrap()
                .0
        };
        let (_, grads) = depth_normal_consistency_loss(&dinv, &normals, &img, &k, edge).unwrap();
        let eps = 1e-6;
        for &(x, y) in &[(2, 3), (4, 1), (7, 5)] {
            let mut up = dinv.grid().clone();
            let mut dn = dinv.grid().clone();
            up.set(x, y, 0, up.get(x, y, 0) + eps);
            dn.set(x, y, 0, dn.get(x, y, 0) - eps);
            let fd = (f(&InverseDepthMap::new(up).unwrap(), &normals)
                - f(&InverseDepthMap::new(dn).unwrap(), &normals))
                / (2.0 * eps);
            let a = grads.d_dinv.get(x, y, 0);
            assert!((fd - a).abs() < 1e-6 * a.abs().max(1.0), "{fd} vs {a}");
        }
    }
}
