use super::{check_dims, project_to_tangent, sign, Gradients};
use crate::error::Result;
use crate::grid::{forward_differences, ImageGrid, NormalMap};

/// Edge-aware normal smoothness
/// `sum_p |dx N(p)|_1 exp(-|dx I(p)|) + |dy N(p)|_1 exp(-|dy I(p)|)`,
/// forward differences, `|dI|` averaged over image channels.
pub fn normal_smoothness_loss(normals: &NormalMap, image: &ImageGrid) -> Result<(f64, Gradients)> {
    check_dims(normals.dims(), image.dims())?;
    let weights = smoothness_weights(image);
    Ok(smoothness_with_weights(normals, &weights))
}

/// Per-axis weights `exp(-mean_c |d I_c|)` as a 2-channel grid `(x, y)`.
pub(crate) fn smoothness_weights(image: &ImageGrid) -> ImageGrid {
    let (dx, dy) = forward_differences(image);
    let c = image.channels();
    let mean_abs = |g: &ImageGrid, x: usize, y: usize| {
        g.pixel(x, y).iter().map(|v| v.abs()).sum::<f64>() / c as f64
    };
    ImageGrid::from_fn(image.width(), image.height(), 2, |x, y, axis| {
        let g = if axis == 0 { &dx } else { &dy };
        (-mean_abs(g, x, y)).exp()
    })
}

pub(crate) fn smoothness_with_weights(
    normals: &NormalMap,
    weights: &ImageGrid,
) -> (f64, Gradients) {
    let (w, h) = normals.dims();
    let n = normals.grid().data();
    let mut grads = Gradients::zeros(w, h);
    let gn = grads.d_normals.data_mut();
    let mut value = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let neighbours = [
                (x + 1 < w).then(|| (p + 1, weights.get(x, y, 0))),
                (y + 1 < h).then(|| (p + w, weights.get(x, y, 1))),
            ];
            for (q, weight) in neighbours.into_iter().flatten() {
                for c in 0..3 {
                    let d = n[3 * q + c] - n[3 * p + c];
                    value += weight * d.abs();
                    let s = weight * sign(d);
                    gn[3 * q + c] += s;
                    gn[3 * p + c] -= s;
                }
            }
        }
    }
    project_to_tangent(&mut grads.d_normals, normals);
    (value, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn constant_normals_cost_nothing() {
        let n = NormalMap::constant(5, 4, Vector3::new(0.1, 0.2, -1.0));
        let img = ImageGrid::from_fn(5, 4, 3, |x, y, c| (x + y + c) as f64 * 0.1);
        let (v, g) = normal_smoothness_loss(&n, &img).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn two_pixel_hand_value() {
        let g = ImageGrid::new(2, 1, 3, vec![0.0, 0.0, -1.0, 1.0, 0.0, 0.0]).unwrap();
        let n = NormalMap::new(g).unwrap();
        let img = ImageGrid::filled(2, 1, 1, 0.5);
        assert_eq!(normal_smoothness_loss(&n, &img).unwrap().0, 2.0);
    }

    #[test]
    fn strong_image_edge_on_seam_suppresses_the_penalty() {
        let (w, h) = (6, 4);
        let n = NormalMap::new(ImageGrid::from_fn(w, h, 3, |x, _, c| {
            let v = if x < 3 {
                [0.0, 0.0, -1.0]
            } else {
                [0.6, 0.0, -0.8]
            };
            v[c]
        }))
        .unwrap();
        let flat = ImageGrid::filled(w, h, 1, 0.5);
        let (v_flat, _) = normal_smoothness_loss(&n, &flat).unwrap();
        assert!((v_flat - h as f64 * 0.8).abs() < 1e-12);
        for step in [10.0, 100.0, 1000.0] {
            let edge = ImageGrid::from_fn(w, h, 1, |x, _, _| if x < 3 { 0.0 } else { step });
            let (v, _) = normal_smoothness_loss(&n, &edge).unwrap();
            assert!(v <= v_flat * (-step).exp() * (1.0 + 1e-12));
        }
    }
}
