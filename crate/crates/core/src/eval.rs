//! Depth and surface-normal error metrics over a masked set of pixels.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, NormalMap, ValidityMask};

/// Crop rectangle as fractions of the image size, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crop {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Crop {
    pub const FULL: Crop = Crop {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(x0) && unit(y0) && unit(x1) && unit(y1) && x0 < x1 && y0 < y1) {
            return Err(Error::InvalidConfig(format!(
                "crop fractions must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1, got {x0},{y0},{x1},{y1}"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Pixel bounds `(x0, y0, x1, y1)`, end-exclusive.
    pub fn pixel_bounds(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let at = |f: f64, n: usize| (f * n as f64).round() as usize;
        (
            at(self.x0, width),
            at(self.y0, height),
            at(self.x1, width),
            at(self.y1, height),
        )
    }
}

impl Default for Crop {
    fn default() -> Self {
        Self::FULL
    }
}

impl FromStr for Crop {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidConfig(format!("bad crop '{s}': {e}")))?;
        match parts[..] {
            [x0, y0, x1, y1] => Self::new(x0, y0, x1, y1),
            _ => Err(Error::InvalidConfig(format!(
                "crop needs four fractions, got '{s}'"
            ))),
        }
    }
}

/// Pixels eligible for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMask(ValidityMask);

impl EvalMask {
    pub fn new(mask: ValidityMask) -> Self {
        Self(mask)
    }

    pub fn mask(&self) -> &ValidityMask {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.count()
    }

    /// Additionally excludes pixels false in `other`.
    pub fn and(&self, other: &ValidityMask) -> Self {
        Self(self.0.and(other))
    }

    fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v)
            .map(|(i, _)| i)
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        crate::losses::check_dims(self.0.dims(), dims)?;
        if self.count() == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(())
    }
}

/// True where `gt` lies in `(0, cap]` and the pixel is inside `crop`.
pub fn build_mask(gt: &ImageGrid, cap: f64, crop: Crop) -> EvalMask {
    let (w, h) = gt.dims();
    let (x0, y0, x1, y1) = crop.pixel_bounds(w, h);
    let mut mask = ValidityMask::new(w, h, false);
    for y in y0..y1.min(h) {
        for x in x0..x1.min(w) {
            let d = gt.get(x, y, 0);
            mask.set(x, y, d > 0.0 && d <= cap);
        }
    }
    EvalMask(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

impl DepthMetrics {
    pub const COLUMNS: [&'static str; 7] = [
        "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.delta1,
            self.delta2,
            self.delta3,
        ]
    }
}

/// Standard depth errors of `pred` against `gt` (both metric depth) over `mask`.
pub fn depth_metrics(pred: &ImageGrid, gt: &ImageGrid, mask: &EvalMask) -> Result<DepthMetrics> {
    crate::losses::check_dims(gt.dims(), pred.dims())?;
    mask.check(gt.dims())?;
    let (p, g) = (pred.data(), gt.data());
    let mut sums = [0.0; 4];
    let mut within = [0usize; 3];
    for i in mask.pixels() {
        let (p, g) = (p[i], g[i]);
        if !(p > 0.0) {
            return Err(Error::NonPositiveDepth { z: p });
        }
        if !(g > 0.0) {
            return Err(Error::NonPositiveDepth { z: g });
        }
        let d = p - g;
        sums[0] += d.abs() / g;
        sums[1] += d * d / g;
        sums[2] += d * d;
        sums[3] += (p.ln() - g.ln()).powi(2);
        let ratio = (p / g).max(g / p);
        for (k, hits) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *hits += 1;
            }
        }
    }
    let n = mask.count() as f64;
    Ok(DepthMetrics {
        abs_rel: sums[0] / n,
        sq_rel: sums[1] / n,
        rmse: (sums[2] / n).sqrt(),
        rmse_log: (sums[3] / n).sqrt(),
        delta1: within[0] as f64 / n,
        delta2: within[1] as f64 / n,
        delta3: within[2] as f64 / n,
    })
}

/// `median(gt) / median(pred)` over `mask`, the factor that aligns a
/// scale-ambiguous prediction with the ground truth.
pub fn median_scale(pred: &ImageGrid, gt: &ImageGrid, mask: &EvalMask) -> Result<f64> {
    crate::losses::check_dims(gt.dims(), pred.dims())?;
    mask.check(gt.dims())?;
    let pick = |g: &ImageGrid| median(mask.pixels().map(|i| g.data()[i]).collect());
    Ok(pick(gt) / pick(pred))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pct_11_25: f64,
    pub pct_22_5: f64,
    pub pct_30: f64,
}

impl NormalMetrics {
    pub const COLUMNS: [&'static str; 5] =
        ["mean_deg", "median_deg", "pct_11_25", "pct_22_5", "pct_30"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.mean_deg,
            self.median_deg,
            self.pct_11_25,
            self.pct_22_5,
            self.pct_30,
        ]
    }
}

/// Angular errors `acos(clamp(<pred, gt>, -1, 1))` in degrees over `mask`.
pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap, mask: &EvalMask) -> Result<NormalMetrics> {
    crate::losses::check_dims(gt.dims(), pred.dims())?;
    mask.check(gt.dims())?;
    let (p, g) = (pred.grid().data(), gt.grid().data());
    let angles: Vec<f64> = mask
        .pixels()
        .map(|i| {
            let dot =
                p[3 * i] * g[3 * i] + p[3 * i + 1] * g[3 * i + 1] + p[3 * i + 2] * g[3 * i + 2];
            dot.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .collect();
    let n = angles.len() as f64;
    let below = |t: f64| angles.iter().filter(|a| **a < t).count() as f64 / n;
    Ok(NormalMetrics {
        mean_deg: angles.iter().sum::<f64>() / n,
        pct_11_25: below(11.25),
        pct_22_5: below(22.5),
        pct_30: below(30.0),
        median_deg: median(angles),
    })
}

/// Metrics of one evaluation, printable as a single CSV row or an aligned table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub depth: DepthMetrics,
    pub normals: NormalMetrics,
}

impl EvalReport {
    pub fn csv(&self) -> String {
        let header: Vec<&str> = DepthMetrics::COLUMNS
            .iter()
            .chain(&NormalMetrics::COLUMNS)
            .copied()
            .collect();
        let row: Vec<String> = self
            .depth
            .values()
            .iter()
            .chain(&self.normals.values())
            .map(|v| format!("{v}"))
            .collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, names: &[&str], values: &[f64]| -> fmt::Result {
            for n in names {
                write!(f, "{n:>11}")?;
            }
            writeln!(f)?;
            for v in values {
                write!(f, "{v:>11.4}")?;
            }
            writeln!(f)
        };
        row(f, &DepthMetrics::COLUMNS, &self.depth.values())?;
        row(f, &NormalMetrics::COLUMNS, &self.normals.values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    fn row(values: &[f64]) -> ImageGrid {
        ImageGrid::new(values.len(), 1, 1, values.to_vec()).unwrap()
    }

    fn all(w: usize, h: usize) -> EvalMask {
        EvalMask::new(ValidityMask::new(w, h, true))
    }

    fn normals_at_angles(degrees: &[f64]) -> (NormalMap, NormalMap) {
        let gt = NormalMap::constant(degrees.len(), 1, Vector3::new(0.0, 0.0, -1.0));
        let pred = ImageGrid::from_fn(degrees.len(), 1, 3, |x, _, c| {
            let a = degrees[x].to_radians();
            [a.sin(), 0.0, -a.cos()][c]
        });
        (NormalMap::new(pred).unwrap(), gt)
    }

    #[test]
    fn identical_depth_is_perfect() {
        let gt = row(&[1.0, 5.0, 30.0]);
        let m = depth_metrics(&gt, &gt, &all(3, 1)).unwrap();
        assert_eq!([m.abs_rel, m.sq_rel, m.rmse, m.rmse_log], [0.0; 4]);
        assert_eq!([m.delta1, m.delta2, m.delta3], [1.0; 3]);
    }

    #[test]
    fn uniform_overestimate() {
        let gt = row(&[2.0, 4.0, 8.0, 16.0]);
        let pred = row(&[2.6, 5.2, 10.4, 20.8]);
        let m = depth_metrics(&pred, &gt, &all(4, 1)).unwrap();
        assert_abs_diff_eq!(m.abs_rel, 0.3, epsilon = 1e-12);
        assert_eq!([m.delta1, m.delta2, m.delta3], [0.0, 1.0, 1.0]);
    }

    #[test]
    fn three_pixel_fixture() {
        let m = depth_metrics(&row(&[2.0, 5.0, 6.0]), &row(&[2.0, 4.0, 8.0]), &all(3, 1)).unwrap();
        assert_abs_diff_eq!(m.abs_rel, 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rmse, (5.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(m.sq_rel, (0.25 + 0.5) / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_depth_inputs() {
        let gt = row(&[2.0, 4.0]);
        let none = EvalMask::new(ValidityMask::new(2, 1, false));
        assert!(matches!(
            depth_metrics(&gt, &gt, &none),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            depth_metrics(&row(&[2.0, 0.0]), &gt, &all(2, 1)),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(depth_metrics(&row(&[2.0]), &gt, &all(2, 1)).is_err());
    }

    #[test]
    fn normal_fixtures() {
        let (same, gt) = normals_at_angles(&[0.0, 0.0]);
        let m = normal_metrics(&same, &gt, &all(2, 1)).unwrap();
        assert_eq!(m.values(), [0.0, 0.0, 1.0, 1.0, 1.0]);

        let (pred, gt) = normals_at_angles(&[20.0; 4]);
        let m = normal_metrics(&pred, &gt, &all(4, 1)).unwrap();
        assert_abs_diff_eq!(m.mean_deg, 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.median_deg, 20.0, epsilon = 1e-9);
        assert_eq!([m.pct_11_25, m.pct_22_5, m.pct_30], [0.0, 1.0, 1.0]);

        let (pred, gt) = normals_at_angles(&[10.0, 40.0]);
        let m = normal_metrics(&pred, &gt, &all(2, 1)).unwrap();
        assert_abs_diff_eq!(m.mean_deg, 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.median_deg, 25.0, epsilon = 1e-9);
        assert_eq!([m.pct_11_25, m.pct_22_5, m.pct_30], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn mask_cap_and_crop() {
        let gt = ImageGrid::from_fn(
            128,
            96,
            1,
            |x, y, _| if (x, y) == (3, 4) { 100.0 } else { 10.0 },
        );
        let full = build_mask(&gt, f64::INFINITY, Crop::FULL);
        assert_eq!(full.count(), 128 * 96);
        let capped = build_mask(&gt, 80.0, Crop::FULL);
        assert_eq!(capped.count(), 128 * 96 - 1);
        assert!(!capped.mask().get(3, 4));
        let centre: Crop = "0.25,0.25,0.75,0.75".parse().unwrap();
        assert_eq!(build_mask(&gt, 80.0, centre).count(), 64 * 48);
        let holes = ImageGrid::from_fn(4, 4, 1, |x, _, _| x as f64);
        assert_eq!(build_mask(&holes, f64::INFINITY, Crop::FULL).count(), 12);
        assert!("0.5,0,0.4,1".parse::<Crop>().is_err());
        assert!("0,0,1".parse::<Crop>().is_err());
    }

    #[test]
    fn median_scaling_recovers_global_scale() {
        let gt = row(&[2.0, 4.0, 8.0, 3.0]);
        let pred = ImageGrid::new(4, 1, 1, gt.data().iter().map(|v| v * 0.5).collect()).unwrap();
        let s = median_scale(&pred, &gt, &all(4, 1)).unwrap();
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn report_formats() {
        let gt = row(&[2.0, 4.0]);
        let (n, _) = normals_at_angles(&[0.0, 0.0]);
        let r = EvalReport {
            depth: depth_metrics(&gt, &gt, &all(2, 1)).unwrap(),
            normals: normal_metrics(&n, &n, &all(2, 1)).unwrap(),
        };
        let csv = r.csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("abs_rel,sq_rel,rmse,rmse_log,delta1"));
        assert_eq!(lines[1].split(',').count(), 12);
        assert!(r.to_string().contains("median_deg"));
    }

    proptest! {
        #[test]
        fn deltas_are_symmetric_and_ordered(
            values in prop::collection::vec((0.5f64..50.0, 0.5f64..50.0), 1..40)
        ) {
            let n = values.len();
            let a = row(&values.iter().map(|v| v.0).collect::<Vec<_>>());
            let b = row(&values.iter().map(|v| v.1).collect::<Vec<_>>());
            let m1 = depth_metrics(&a, &b, &all(n, 1)).unwrap();
            let m2 = depth_metrics(&b, &a, &all(n, 1)).unwrap();
            prop_assert_eq!([m1.delta1, m1.delta2, m1.delta3], [m2.delta1, m2.delta2, m2.delta3]);
            prop_assert!(m1.delta1 <= m1.delta2 && m1.delta2 <= m1.delta3);
            let far = ImageGrid::new(n, 1, 1, b.data().iter().map(|v| v * 2.0).collect()).unwrap();
            let m3 = depth_metrics(&far, &b, &all(n, 1)).unwrap();
            prop_assert_eq!([m3.delta1, m3.delta2, m3.delta3], [0.0, 0.0, 0.0]);
        }

        #[test]
        fn common_rotation_preserves_angles(
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in -3.0f64..3.0,
            degrees in prop::collection::vec(0.0f64..170.0, 1..10)
        ) {
            let axis = Vector3::from(axis);
            prop_assume!(axis.norm() > 1e-3);
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
            let (pred, gt) = normals_at_angles(&degrees);
            let rotate = |m: &NormalMap| {
                let g = m.grid();
                let mut out = g.clone();
                for x in 0..g.width() {
                    let v = r * m.get(x, 0);
                    for c in 0..3 {
                        out.set(x, 0, c, v[c]);
                    }
                }
                NormalMap::new(out).unwrap()
            };
            let n = degrees.len();
            let a = normal_metrics(&pred, &gt, &all(n, 1)).unwrap();
            let b = normal_metrics(&rotate(&pred), &rotate(&gt), &all(n, 1)).unwrap();
            prop_assert!((a.mean_deg - b.mean_deg).abs() < 1e-9);
            prop_assert!((a.median_deg - b.median_deg).abs() < 1e-9);
        }
    }
}
