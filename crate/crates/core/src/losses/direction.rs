use nalgebra::Vector3;

use super::{check_dims, project_to_tangent, Gradients};
use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::grid::{depth_from_inverse, ImageGrid, InverseDepthMap, NormalMap};

/// Cross-product norm below which a neighbourhood is treated as degenerate.
const DEGENERATE_NORM: f64 = 1e-12;

/// Surface normals from inverse depth by the mean cross product of the four
/// orthogonal neighbour pairs (right x down, down x left, left x up, up x right),
/// oriented toward the camera. Border pixels copy the nearest interior normal;
/// degenerate neighbourhoods yield `(0, 0, -1)`.
pub fn normal_from_depth(dinv: &InverseDepthMap, k: &Intrinsics) -> Result<NormalMap> {
    let (w, h) = dinv.dims();
    if w < 3 || h < 3 {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let points: Vec<Vector3<f64>> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            k.backproject(x as f64, y as f64)
                .at_depth(depth_from_inverse(dinv.get(x, y)))
        })
        .collect();
    let at = |x: usize, y: usize| points[y * w + x];
    let mut out = ImageGrid::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let cx = x.clamp(1, w - 2);
            let cy = y.clamp(1, h - 2);
            let centre = at(cx, cy);
            let right = at(cx + 1, cy) - centre;
            let down = at(cx, cy + 1) - centre;
            let left = at(cx - 1, cy) - centre;
            let up = at(cx, cy - 1) - centre;
            let sum = right.cross(&down) + down.cross(&left) + left.cross(&up) + up.cross(&right);
            let mean = sum * 0.25;
            let norm = mean.norm();
            let mut n = if norm < DEGENERATE_NORM {
                Vector3::new(0.0, 0.0, -1.0)
            } else {
                mean / norm
            };
            if n.dot(&k.backproject(x as f64, y as f64).xtilde) > 0.0 {
                n = -n;
            }
            for c in 0..3 {
                out.set(x, y, c, n[c]);
            }
        }
    }
    Ok(NormalMap::new(out).expect("normalized vectors"))
}

/// `1/(2N) sum_p ||N(p) - N_c(p)||^2`; `reference` receives no gradient.
pub fn normal_direction_loss(
    normals: &NormalMap,
    reference: &NormalMap,
) -> Result<(f64, Gradients)> {
    check_dims(normals.dims(), reference.dims())?;
    let (w, h) = normals.dims();
    let count = (w * h) as f64;
    let mut grads = Gradients::zeros(w, h);
    let mut value = 0.0;
    for ((g, n), c) in grads
        .d_normals
        .data_mut()
        .chunks_exact_mut(3)
        .zip(normals.grid().data().chunks_exact(3))
        .zip(reference.grid().data().chunks_exact(3))
    {
        for i in 0..3 {
            let d = n[i] - c[i];
            value += d * d;
            g[i] = d / count;
        }
    }
    project_to_tangent(&mut grads.d_normals, normals);
    Ok((value / (2.0 * count), grads))
}
