//! Dense row-major grids, differentiable bilinear sampling and image-derived weights.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;

/// Offset added to inverse depth before inversion: `D = 1 / (D_inv + DEPTH_EPS)`.
pub const DEPTH_EPS: f64 = 1e-4;

/// Converts a stored inverse depth to metric depth.
#[inline]
pub fn depth_from_inverse(dinv: f64) -> f64 {
    1.0 / (dinv + DEPTH_EPS)
}

/// The stored inverse depth whose conversion yields `depth`.
#[inline]
pub fn inverse_from_depth(depth: f64) -> f64 {
    1.0 / depth - DEPTH_EPS
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "empty grid");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn check_same_dims(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ResolutionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    /// Channel average as a one-channel grid.
    pub fn channel_mean(&self) -> ImageGrid {
        let c = self.channels;
        let data = self
            .data
            .chunks_exact(c)
            .map(|px| px.iter().sum::<f64>() / c as f64)
            .collect();
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Precomputes the four taps of a bilinear lookup at continuous position `(x, y)`.
    /// Returns `None` outside `[0, W-1] x [0, H-1]`.
    #[inline]
    pub(crate) fn taps(&self, x: f64, y: f64) -> Option<Taps> {
        let wmax = (self.width - 1) as f64;
        let hmax = (self.height - 1) as f64;
        if !(x >= 0.0 && x <= wmax && y >= 0.0 && y <= hmax) {
            return None;
        }
        let (x0, fx, step_x) = axis_cell(x, self.width);
        let (y0, fy, step_y) = axis_cell(y, self.height);
        let i00 = y0 * self.width + x0;
        let i10 = i00 + step_x;
        let i01 = i00 + step_y * self.width;
        let i11 = i01 + step_x;
        let dx = if step_x == 0 { 0.0 } else { 1.0 };
        let dy = if step_y == 0 { 0.0 } else { 1.0 };
        Some(Taps {
            index: [i00, i10, i01, i11],
            weight: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
            dweight_dx: [-(1.0 - fy) * dx, (1.0 - fy) * dx, -fy * dx, fy * dx],
            dweight_dy: [-(1.0 - fx) * dy, -fx * dy, (1.0 - fx) * dy, fx * dy],
        })
    }
}

/// Returns `(cell start, fractional offset, neighbour stride)` along one axis.
#[inline]
fn axis_cell(v: f64, len: usize) -> (usize, f64, usize) {
    if len == 1 {
        return (0, 0.0, 0);
    }
    let i0 = (v.floor() as usize).min(len - 2);
    (i0, v - i0 as f64, 1)
}

/// Pixel indices and interpolation weights of one bilinear lookup, with the
/// derivatives of the weights with respect to the sample position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Taps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
    pub dweight_dx: [f64; 4],
    pub dweight_dy: [f64; 4],
}

impl Taps {
    /// Interpolated value of channel `c` and its gradient with respect to the position.
    #[inline]
    pub fn sample(&self, g: &ImageGrid, c: usize) -> (f64, [f64; 2]) {
        let ch = g.channels;
        let mut v = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for k in 0..4 {
            let s = g.data[self.index[k] * ch + c];
            v += self.weight[k] * s;
            gx += self.dweight_dx[k] * s;
            gy += self.dweight_dy[k] * s;
        }
        (v, [gx, gy])
    }
}

/// Result of a bilinear lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub value: Vec<f64>,
    /// Per channel `(d value / d x, d value / d y)`.
    pub gradient: Vec<[f64; 2]>,
    pub valid: bool,
}

/// Differentiable 4-tap bilinear interpolation at continuous pixel position `q = (x, y)`.
///
/// Positions outside `[0, W-1] x [0, H-1]` are invalid and sample as zero.
pub fn bilinear_sample(src: &ImageGrid, q: [f64; 2]) -> Sample {
    let c = src.channels();
    match src.taps(q[0], q[1]) {
        None => Sample {
            value: vec![0.0; c],
            gradient: vec![[0.0; 2]; c],
            valid: false,
        },
        Some(taps) => {
            let (value, gradient) = (0..c).map(|ch| taps.sample(src, ch)).unzip();
            Sample {
                value,
                gradient,
                valid: true,
            }
        }
    }
}

/// Forward differences along x and y; the last column (row) of the respective
/// gradient is zero.
pub fn spatial_gradients(g: &ImageGrid) -> Result<(ImageGrid, ImageGrid)> {
    if g.width < 2 || g.height < 2 {
        return Err(Error::GridTooSmall {
            width: g.width,
            height: g.height,
            min_width: 2,
            min_height: 2,
        });
    }
    Ok(forward_differences(g))
}

pub(crate) fn forward_differences(g: &ImageGrid) -> (ImageGrid, ImageGrid) {
    let (w, h, c) = (g.width, g.height, g.channels);
    let dx = ImageGrid::from_fn(w, h, c, |x, y, ch| {
        if x + 1 < w {
            g.get(x + 1, y, ch) - g.get(x, y, ch)
        } else {
            0.0
        }
    });
    let dy = ImageGrid::from_fn(w, h, c, |x, y, ch| {
        if y + 1 < h {
            g.get(x, y + 1, ch) - g.get(x, y, ch)
        } else {
            0.0
        }
    });
    (dx, dy)
}

/// Edge-aware weight `exp(-alpha * |grad I|^beta)` on the channel-mean image.
pub fn edge_weight(image: &ImageGrid, alpha: f64, beta: f64) -> ImageGrid {
    let (dx, dy) = forward_differences(&image.channel_mean());
    let data = dx
        .data
        .iter()
        .zip(&dy.data)
        .map(|(gx, gy)| {
            let norm = (gx * gx + gy * gy).sqrt();
            let mag = if norm == 0.0 { 0.0 } else { norm.powf(beta) };
            (-alpha * mag).exp()
        })
        .collect();
    ImageGrid {
        width: image.width,
        height: image.height,
        channels: 1,
        data,
    }
}

/// Per-pixel boolean mask; `true` marks pixels that contribute to a loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "mask needs {} entries, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &ValidityMask) -> ValidityMask {
        ValidityMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }
}

/// One-channel inverse-depth grid, values `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDepthMap(ImageGrid);

impl InverseDepthMap {
    pub fn new(grid: ImageGrid) -> Result<Self> {
        if grid.channels != 1 {
            return Err(Error::InvalidGrid(format!(
                "inverse depth needs 1 channel, got {}",
                grid.channels
            )));
        }
        if let Some(v) = grid.data.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidGrid(format!("negative inverse depth {v}")));
        }
        Ok(Self(grid))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        assert!(value >= 0.0);
        Self(ImageGrid::filled(width, height, 1, value))
    }

    /// Stored inverse depth for a metric depth map.
    pub fn from_depth(depth: &ImageGrid) -> Result<Self> {
        if let Some(v) = depth.data.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::NonPositiveDepth { z: *v });
        }
        let data = depth
            .data
            .iter()
            .map(|&d| inverse_from_depth(d).max(0.0))
            .collect();
        Self::new(ImageGrid::new(depth.width, depth.height, 1, data)?)
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.0
    }

    pub(crate) fn grid_mut(&mut self) -> &mut ImageGrid {
        &mut self.0
    }

    pub fn into_grid(self) -> ImageGrid {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.data[y * self.0.width + x]
    }

    /// Metric depth map `1 / (D_inv + 1e-4)`.
    pub fn to_depth(&self) -> ImageGrid {
        let data = self.0.data.iter().map(|&v| depth_from_inverse(v)).collect();
        ImageGrid {
            width: self.0.width,
            height: self.0.height,
            channels: 1,
            data,
        }
    }
}

/// Three-channel unit normal field in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap(ImageGrid);

impl NormalMap {
    pub const UNIT_TOLERANCE: f64 = 1e-6;

    pub fn new(grid: ImageGrid) -> Result<Self> {
        if grid.channels != 3 {
            return Err(Error::InvalidGrid(format!(
                "normal map needs 3 channels, got {}",
                grid.channels
            )));
        }
        for px in grid.data.chunks_exact(3) {
            let norm = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
            if (norm - 1.0).abs() > Self::UNIT_TOLERANCE {
                return Err(Error::NotUnit { norm });
            }
        }
        Ok(Self(grid))
    }

    /// Every pixel set to `(0, 0, -1)`, facing the camera.
    pub fn fronto_parallel(width: usize, height: usize) -> Self {
        Self::constant(width, height, Vector3::new(0.0, 0.0, -1.0))
    }

    pub fn constant(width: usize, height: usize, n: Vector3<f64>) -> Self {
        let n = n.normalize();
        Self(ImageGrid::from_fn(width, height, 3, |_, _, c| n[c]))
    }

    /// Normalizes every pixel of an arbitrary 3-channel grid; zero vectors become `(0, 0, -1)`.
    pub fn normalized(mut grid: ImageGrid) -> Result<Self> {
        if grid.channels != 3 {
            return Err(Error::InvalidGrid(format!(
                "normal map needs 3 channels, got {}",
                grid.channels
            )));
        }
        for px in grid.data.chunks_exact_mut(3) {
            normalize_in_place(px);
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.0
    }

    pub(crate) fn grid_mut(&mut self) -> &mut ImageGrid {
        &mut self.0
    }

    pub fn into_grid(self) -> ImageGrid {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Vector3<f64> {
        let i = (y * self.0.width + x) * 3;
        Vector3::new(self.0.data[i], self.0.data[i + 1], self.0.data[i + 2])
    }

    /// Whether every normal points toward the camera: `<N(p), K^-1 p> < 0`.
    pub fn is_camera_facing(&self, k: &Intrinsics) -> bool {
        let (w, h) = self.dims();
        (0..h).all(|y| {
            (0..w).all(|x| {
                self.get(x, y)
                    .dot(&k.backproject(x as f64, y as f64).xtilde)
                    < 0.0
            })
        })
    }
}

#[inline]
pub(crate) fn normalize_in_place(px: &mut [f64]) {
    let norm = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
    if norm > 1e-12 {
        px.iter_mut().for_each(|v| *v /= norm);
    } else {
        px.copy_from_slice(&[0.0, 0.0, -1.0]);
    }
}

/// Halves resolution with a 2x2 box filter; an odd last row or column is dropped.
pub fn downsample_box(g: &ImageGrid) -> ImageGrid {
    let w = g.width / 2;
    let h = g.height / 2;
    ImageGrid::from_fn(w, h, g.channels, |x, y, c| {
        0.25 * (g.get(2 * x, 2 * y, c)
            + g.get(2 * x + 1, 2 * y, c)
            + g.get(2 * x, 2 * y + 1, c)
            + g.get(2 * x + 1, 2 * y + 1, c))
    })
}

/// Bilinear resize to `width x height` with pixel-centre alignment (the inverse
/// of the coordinate map used by [`downsample_box`] and [`Intrinsics::downsampled`]).
pub fn upsample_bilinear(g: &ImageGrid, width: usize, height: usize) -> ImageGrid {
    let sx = g.width as f64 / width as f64;
    let sy = g.height as f64 / height as f64;
    let mut out = ImageGrid::zeros(width, height, g.channels);
    for y in 0..height {
        let qy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (g.height - 1) as f64);
        for x in 0..width {
            let qx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (g.width - 1) as f64);
            let taps = g.taps(qx, qy).expect("clamped position is in bounds");
            for c in 0..g.channels {
                out.set(x, y, c, taps.sample(g, c).0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, 1, |x, _, _| x as f64)
    }

    #[test]
    fn grid_validation() {
        assert!(ImageGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageGrid::new(0, 2, 1, vec![]).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(InverseDepthMap::new(ImageGrid::new(1, 1, 1, vec![-0.1]).unwrap()).is_err());
        assert!(NormalMap::new(ImageGrid::new(1, 1, 3, vec![1.0, 1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn sample_at_integer_pixel_is_exact() {
        let g = ImageGrid::from_fn(4, 3, 2, |x, y, c| (x * 10 + y + c * 100) as f64);
        let s = bilinear_sample(&g, [2.0, 1.0]);
        assert!(s.valid);
        assert_eq!(s.value, vec![21.0, 121.0]);
        // last column/row are still in bounds
        let s = bilinear_sample(&g, [3.0, 2.0]);
        assert!(s.valid);
        assert_eq!(s.value, vec![32.0, 132.0]);
    }

    #[test]
    fn sample_midpoint() {
        let g = ImageGrid::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let s = bilinear_sample(&g, [0.5, 0.0]);
        assert!(s.valid);
        assert_eq!(s.value[0], 0.5);
        assert_eq!(s.gradient[0][0], 1.0);
        assert_eq!(s.gradient[0][1], 0.0);
    }

    #[test]
    fn sample_out_of_bounds() {
        let g = ImageGrid::filled(3, 3, 1, 2.0);
        let s = bilinear_sample(&g, [-0.5, 0.0]);
        assert!(!s.valid);
        assert_eq!(s.value, vec![0.0]);
        assert!(!bilinear_sample(&g, [0.0, 2.0001]).valid);
        assert!(!bilinear_sample(&g, [f64::NAN, 1.0]).valid);
    }

    #[test]
    fn sampler_gradient_matches_finite_differences() {
        let g = ImageGrid::from_fn(9, 7, 2, |x, y, c| {
            ((x as f64) * 0.7 + (c as f64)).sin() * ((y as f64) * 0.4).cos() + 0.1 * x as f64
        });
        let h = 1e-4;
        for &(qx, qy) in &[(1.3, 2.7), (4.55, 0.2), (7.9, 5.1), (0.05, 3.33)] {
            let s = bilinear_sample(&g, [qx, qy]);
            for c in 0..2 {
                let fdx = (bilinear_sample(&g, [qx + h, qy]).value[c]
                    - bilinear_sample(&g, [qx - h, qy]).value[c])
                    / (2.0 * h);
                let fdy = (bilinear_sample(&g, [qx, qy + h]).value[c]
                    - bilinear_sample(&g, [qx, qy - h]).value[c])
                    / (2.0 * h);
                let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
                assert!(
                    rel(s.gradient[c][0], fdx) < 1e-5,
                    "{} vs {}",
                    s.gradient[c][0],
                    fdx
                );
                assert!(rel(s.gradient[c][1], fdy) < 1e-5);
            }
        }
    }

    #[test]
    fn gradients_examples() {
        let (dx, dy) = spatial_gradients(&ImageGrid::filled(4, 3, 2, 0.7)).unwrap();
        assert!(dx.data().iter().chain(dy.data()).all(|v| *v == 0.0));

        let (dx, dy) = spatial_gradients(&ramp(5, 4)).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(dx.get(x, y, 0), if x == 4 { 0.0 } else { 1.0 });
                assert_eq!(dy.get(x, y, 0), 0.0);
            }
        }

        let g = ImageGrid::new(2, 2, 1, vec![0.0, 2.0, 1.0, 3.0]).unwrap();
        let (dx, dy) = spatial_gradients(&g).unwrap();
        assert_eq!(dx.get(0, 0, 0), 2.0);
        assert_eq!(dy.get(0, 0, 0), 1.0);

        assert!(matches!(
            spatial_gradients(&ImageGrid::filled(1, 5, 1, 0.0)),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn edge_weight_examples() {
        let g = edge_weight(&ImageGrid::filled(4, 4, 3, 0.3), 1.0, 1.0);
        assert!(g.data().iter().all(|v| *v == 1.0));

        // unit horizontal step at (0, 0), zero vertical
        let img = ImageGrid::new(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let g = edge_weight(&img, 1.0, 1.0);
        assert!((g.get(0, 0, 0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.get(0, 0, 0) - 0.3679).abs() < 1e-4);

        let noisy = ImageGrid::from_fn(6, 5, 3, |x, y, c| ((x * 7 + y * 3 + c) % 5) as f64);
        let g = edge_weight(&noisy, 0.0, 1.0);
        assert!(g.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn edge_weight_averages_channels_before_norm() {
        // channels with opposite gradients cancel
        let img = ImageGrid::from_fn(
            3,
            3,
            2,
            |x, _, c| if c == 0 { x as f64 } else { -(x as f64) },
        );
        assert!(edge_weight(&img, 1.0, 1.0).data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn box_downsample_and_upsample() {
        let g = ImageGrid::filled(6, 4, 3, 0.25);
        let d = downsample_box(&g);
        assert_eq!(d.dims(), (3, 2));
        assert!(d.data().iter().all(|v| *v == 0.25));
        let u = upsample_bilinear(&ImageGrid::filled(3, 2, 1, 0.5), 6, 4);
        assert!(u.data().iter().all(|v| *v == 0.5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_grids_sample_exactly(
                a in -3.0..3.0f64, b in -3.0..3.0f64, c0 in -3.0..3.0f64,
                qx in 0.0..10.0f64, qy in 0.0..7.0f64,
            ) {
                let g = ImageGrid::from_fn(11, 8, 1, |x, y, _| a * x as f64 + b * y as f64 + c0);
                let s = bilinear_sample(&g, [qx, qy]);
                prop_assert!(s.valid);
                prop_assert!((s.value[0] - (a * qx + b * qy + c0)).abs() < 1e-12);
                prop_assert!((s.gradient[0][0] - a).abs() < 1e-12);
                prop_assert!((s.gradient[0][1] - b).abs() < 1e-12);
            }

            #[test]
            fn edge_weight_decreases_with_gradient(
                g1 in 0.0..5.0f64, g2 in 0.0..5.0f64, alpha in 0.1..3.0f64, beta in 0.2..2.0f64,
            ) {
                let weight = |g: f64| {
                    let img = ImageGrid::new(2, 2, 1, vec![0.0, g, 0.0, g]).unwrap();
                    edge_weight(&img, alpha, beta).get(0, 0, 0)
                };
                let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
                prop_assert!(weight(lo) >= weight(hi));
                prop_assert!(weight(hi) > 0.0 && weight(lo) <= 1.0);
            }
        }
    }
}
