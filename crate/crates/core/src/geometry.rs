//! Pinhole camera model and SE(3) rigid transforms.
//!
//! Pixel coordinates are `(x = column, y = row)` with the origin at the centre
//! of the top-left pixel. A pose `T` maps points expressed in frame `t` into
//! frame `t-1`; its inverse carries `t-1` geometry into frame `t`.
//!
//! The se(3) 6-vector is ordered `(rho, omega)`: translation-like part first,
//! rotation vector second.

use nalgebra::{Matrix3, Matrix3x6, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};

/// Rotation angle below which the exponential map switches to its Taylor form.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Angle below which the series forms of the left-Jacobian coefficients are used.
/// The closed forms lose digits to cancellation there.
const SERIES_ANGLE: f64 = 1e-2;

/// Pinhole calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point must be finite (cx = {cx}, cy = {cy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Intrinsics for an image downsampled by `2^level` with 2x2 box filtering.
    ///
    /// Pixel centres move with the half-pixel correction `c' = (c + 0.5) / 2 - 0.5`.
    pub fn downsampled(&self, level: usize) -> Self {
        let mut k = *self;
        for _ in 0..level {
            k = Self {
                fx: k.fx * 0.5,
                fy: k.fy * 0.5,
                cx: (k.cx + 0.5) * 0.5 - 0.5,
                cy: (k.cy + 0.5) * 0.5 - 0.5,
            };
        }
        k
    }

    #[inline]
    pub fn backproject(&self, x: f64, y: f64) -> Ray {
        Ray {
            xtilde: Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0),
        }
    }

    /// Projects a camera-frame point. Fails when the point is not in front of the camera.
    #[inline]
    pub fn project(&self, point: &Vector3<f64>) -> Result<Vector2<f64>> {
        if !(point.z > 0.0) {
            return Err(Error::NonPositiveDepth { z: point.z });
        }
        Ok(self.project_unchecked(point))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, point: &Vector3<f64>) -> Vector2<f64> {
        let inv_z = 1.0 / point.z;
        Vector2::new(
            self.fx * point.x * inv_z + self.cx,
            self.fy * point.y * inv_z + self.cy,
        )
    }

    /// Jacobian of [`Intrinsics::project`] with respect to the 3D point.
    #[inline]
    pub(crate) fn project_jacobian(&self, point: &Vector3<f64>) -> [[f64; 3]; 2] {
        let inv_z = 1.0 / point.z;
        let inv_z2 = inv_z * inv_z;
        [
            [self.fx * inv_z, 0.0, -self.fx * point.x * inv_z2],
            [0.0, self.fy * inv_z, -self.fy * point.y * inv_z2],
        ]
    }
}

/// Homogeneous backprojected pixel direction `K^-1 p`, third component exactly 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub xtilde: Vector3<f64>,
}

impl Ray {
    /// The 3D point at depth `depth` along this ray.
    #[inline]
    pub fn at_depth(&self, depth: f64) -> Vector3<f64> {
        self.xtilde * depth
    }
}

pub fn backproject(p: Vector2<f64>, k: &Intrinsics) -> Ray {
    k.backproject(p.x, p.y)
}

pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<Vector2<f64>> {
    k.project(point)
}

#[inline]
pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coefficients of the SO(3) exponential and its left Jacobian as functions of
/// the angle `theta`:
/// `R = I + s W + c W^2`, `V = I + a W + b W^2`, plus `a'(theta)/theta` and
/// `b'(theta)/theta` for differentiating `V rho` with respect to `omega`.
#[derive(Debug, Clone, Copy)]
struct RotationCoefficients {
    s: f64,
    c: f64,
    a: f64,
    b: f64,
    da: f64,
    db: f64,
}

impl RotationCoefficients {
    fn new(theta: f64) -> Self {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let (s, c) = if theta < SMALL_ANGLE {
            (1.0, 0.5)
        } else {
            let half = 0.5 * theta;
            let sh = half.sin() / half;
            (theta.sin() / theta, 0.5 * sh * sh)
        };
        if theta < SERIES_ANGLE {
            Self {
                s,
                c,
                a: 0.5 - t2 / 24.0 + t4 / 720.0 - t2 * t4 / 40320.0,
                b: 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t2 * t4 / 362880.0,
                da: -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0,
                db: -1.0 / 60.0 + t2 / 1260.0 - t4 / 60480.0,
            }
        } else {
            let sin = theta.sin();
            let one_minus_cos = 2.0 * (0.5 * theta).sin().powi(2);
            Self {
                s,
                c,
                a: one_minus_cos / t2,
                b: (theta - sin) / (t2 * theta),
                da: (theta * sin - 2.0 * one_minus_cos) / t4,
                db: (theta * one_minus_cos - 3.0 * theta + 3.0 * sin) / (t4 * theta),
            }
        }
    }
}

/// SO(3) left Jacobian `V(omega)`; also the matrix mapping `rho` to the translation.
pub fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let k = RotationCoefficients::new(omega.norm());
    let w = skew(omega);
    Matrix3::identity() + w * k.a + w * w * k.b
}

fn exp_so3(omega: &Vector3<f64>, k: &RotationCoefficients) -> Matrix3<f64> {
    let w = skew(omega);
    Matrix3::identity() + w * k.s + w * w * k.c
}

/// Derivative of `V(omega) rho` with respect to `omega`.
fn translation_rotation_jacobian(
    omega: &Vector3<f64>,
    rho: &Vector3<f64>,
    k: &RotationCoefficients,
) -> Matrix3<f64> {
    let cross = omega.cross(rho);
    let double = omega.cross(&cross);
    let dot = omega.dot(rho);
    -skew(rho) * k.a
        + cross * omega.transpose() * k.da
        + (Matrix3::identity() * dot + omega * rho.transpose() - rho * omega.transpose() * 2.0)
            * k.b
        + double * omega.transpose() * k.db
}

fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin_theta = 0.5 * vee.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta < SMALL_ANGLE {
        // R - R^T = 2 W + O(theta^3)
        return vee * 0.5;
    }
    if std::f64::consts::PI - theta < 1e-4 {
        // Near pi the antisymmetric part vanishes. The symmetric part is
        // cos(theta) I + (1 - cos(theta)) u u^T; the sign of u comes from the
        // antisymmetric part.
        let b = ((r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
        let i = (0..3)
            .max_by(|&i, &j| b[(i, i)].partial_cmp(&b[(j, j)]).unwrap())
            .unwrap_or(0);
        let mut axis = b.column(i).into_owned() / b[(i, i)].max(f64::MIN_POSITIVE).sqrt();
        axis /= axis.norm();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * sin_theta))
}

/// Element of SE(3) with its se(3) coordinates and cached matrix form.
///
/// Points transform as `R x + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    xi: Vector6<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            xi: Vector6::zeros(),
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    /// Exponential map: Rodrigues rotation, translation through the left Jacobian.
    pub fn exp(xi: &Vector6<f64>) -> Self {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let omega = Vector3::new(xi[3], xi[4], xi[5]);
        let k = RotationCoefficients::new(omega.norm());
        let w = skew(&omega);
        let v = Matrix3::identity() + w * k.a + w * w * k.b;
        Self {
            xi: *xi,
            rotation: exp_so3(&omega, &k),
            translation: v * rho,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::exp(&Vector6::new(t.x, t.y, t.z, 0.0, 0.0, 0.0))
    }

    /// Builds a transform from a rotation matrix and translation, recovering the
    /// se(3) coordinates with the logarithm.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let omega = log_so3(&rotation);
        let k = RotationCoefficients::new(omega.norm());
        let w = skew(&omega);
        let v = Matrix3::identity() + w * k.a + w * w * k.b;
        let rho = v.try_inverse().unwrap_or_else(Matrix3::identity) * translation;
        Self {
            xi: Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z),
            rotation,
            translation,
        }
    }

    pub fn log(&self) -> Vector6<f64> {
        self.xi
    }

    pub fn xi(&self) -> &Vector6<f64> {
        &self.xi
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rho(&self) -> Vector3<f64> {
        Vector3::new(self.xi[0], self.xi[1], self.xi[2])
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.xi[3], self.xi[4], self.xi[5])
    }

    /// `exp(xi)^-1 = exp(-xi)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            xi: -self.xi,
            translation: -(rt * self.translation),
            rotation: rt,
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::from_matrix(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    #[inline]
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// `R^T (x - t)`.
    #[inline]
    pub fn inverse_transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(x - self.translation))
    }

    /// Rotates a unit normal by `R^T`, carrying a `t-1` normal into frame `t`.
    pub fn transform_normal(&self, n: &Vector3<f64>) -> Result<Vector3<f64>> {
        transform_normal(&self.rotation, n)
    }

    /// `d(T x)/d xi`, a 3x6 matrix.
    pub fn point_jacobian(&self, x: &Vector3<f64>) -> Matrix3x6<f64> {
        self.derivatives().point(x)
    }

    /// `d(T^-1 x)/d xi` where `T^-1 x = R^T (x - t)`.
    pub fn inverse_point_jacobian(&self, x: &Vector3<f64>) -> Matrix3x6<f64> {
        self.derivatives().inverse_point(x)
    }

    /// `d(R^T n)/d omega` (the rotation block; translation block is zero).
    pub fn inverse_rotation_jacobian(&self, n: &Vector3<f64>) -> Matrix3<f64> {
        self.derivatives().inverse_rotation(n)
    }

    pub(crate) fn derivatives(&self) -> PoseDerivatives {
        let omega = self.omega();
        let k = RotationCoefficients::new(omega.norm());
        let w = skew(&omega);
        PoseDerivatives {
            rotation: self.rotation,
            translation: self.translation,
            left_jacobian: Matrix3::identity() + w * k.a + w * w * k.b,
            translation_rotation: translation_rotation_jacobian(&omega, &self.rho(), &k),
        }
    }
}

/// Per-transform quantities shared by all point Jacobians of one pose.
#[derive(Debug, Clone)]
pub(crate) struct PoseDerivatives {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    left_jacobian: Matrix3<f64>,
    /// `d(V(omega) rho)/d omega`
    translation_rotation: Matrix3<f64>,
}

impl PoseDerivatives {
    pub fn point(&self, x: &Vector3<f64>) -> Matrix3x6<f64> {
        let rx = self.rotation * x;
        let d_rot = -skew(&rx) * self.left_jacobian + self.translation_rotation;
        let mut j = Matrix3x6::zeros();
        j.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.left_jacobian);
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&d_rot);
        j
    }

    pub fn inverse_point(&self, x: &Vector3<f64>) -> Matrix3x6<f64> {
        let rt = self.rotation.transpose();
        let diff = x - self.translation;
        let d_rho = -(rt * self.left_jacobian);
        let d_rot = rt * (skew(&diff) * self.left_jacobian - self.translation_rotation);
        let mut j = Matrix3x6::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&d_rho);
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&d_rot);
        j
    }

    pub fn inverse_rotation(&self, n: &Vector3<f64>) -> Matrix3<f64> {
        self.rotation.tr_mul(&(skew(n) * self.left_jacobian))
    }
}

pub fn se3_exp(xi: &Vector6<f64>) -> RigidTransform {
    RigidTransform::exp(xi)
}

pub fn transform_point(t: &RigidTransform, x: &Vector3<f64>) -> Vector3<f64> {
    t.transform_point(x)
}

/// Inverse rotation of a unit normal: `R^T n`.
pub fn transform_normal(r: &Matrix3<f64>, n: &Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = n.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::NotUnit { norm });
    }
    Ok(r.tr_mul(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn k_test() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 64.0, 48.0).unwrap()
    }

    #[test]
    fn backproject_examples() {
        let k = k_test();
        assert_eq!(
            k.backproject(64.0, 48.0).xtilde,
            Vector3::new(0.0, 0.0, 1.0)
        );
        let id = Intrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(id.backproject(3.0, 4.0).xtilde, Vector3::new(3.0, 4.0, 1.0));
        assert_eq!(
            k.backproject(164.0, 48.0).xtilde,
            Vector3::new(1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn project_examples() {
        let k = k_test();
        let p = k.project(&Vector3::new(0.0, 0.0, 7.5)).unwrap();
        assert_eq!(p, Vector2::new(64.0, 48.0));
        let k0 = Intrinsics::new(100.0, 100.0, 0.0, 0.0).unwrap();
        let p = k0.project(&Vector3::new(1.0, 2.0, 2.0)).unwrap();
        assert_eq!(p, Vector2::new(50.0, 100.0));
        assert!(matches!(
            k.project(&Vector3::new(1.0, 1.0, 0.0)),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(k.project(&Vector3::new(1.0, 1.0, -2.0)).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn exp_examples() {
        let t = se3_exp(&Vector6::zeros());
        assert_eq!(*t.rotation(), Matrix3::identity());
        assert_eq!(*t.translation(), Vector3::zeros());

        let t = se3_exp(&Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(*t.translation(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(*t.rotation(), Matrix3::identity());

        let t = se3_exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((t.rotation() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn transform_point_examples() {
        let x = Vector3::new(1.0, 1.0, 5.0);
        assert_eq!(RigidTransform::identity().transform_point(&x), x);
        let t = RigidTransform::from_translation(Vector3::new(0.54, 0.0, 0.0));
        assert_abs_diff_eq!(
            t.transform_point(&x),
            Vector3::new(1.54, 1.0, 5.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn transform_normal_examples() {
        let n = Vector3::new(0.3, -0.4, -0.5).normalize();
        assert_eq!(transform_normal(&Matrix3::identity(), &n).unwrap(), n);

        let rz = se3_exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, PI));
        let out = rz.transform_normal(&Vector3::x()).unwrap();
        assert_abs_diff_eq!(out, Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);

        let ry = se3_exp(&Vector6::new(0.0, 0.0, 0.0, 0.0, FRAC_PI_2, 0.0));
        let out = ry.transform_normal(&Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_abs_diff_eq!(out, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);

        assert!(matches!(
            transform_normal(&Matrix3::identity(), &Vector3::new(1.0, 1.0, 0.0)),
            Err(Error::NotUnit { .. })
        ));
    }

    #[test]
    fn from_matrix_recovers_xi_near_pi() {
        let xi = Vector6::new(0.3, -0.2, 0.1, 0.0, 0.0, PI - 1e-7);
        let t = se3_exp(&xi);
        let back = RigidTransform::from_matrix(*t.rotation(), *t.translation());
        let again = se3_exp(&back.log());
        assert!((again.rotation() - t.rotation()).abs().max() < 1e-9);
        assert!((again.translation() - t.translation()).abs().max() < 1e-9);
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let base = Vector6::new(0.2, 0.1, -0.3, 0.0, 0.0, 0.0);
        for &angle in &[5e-7, 2e-6, 5e-3, 2e-2] {
            let mut xi = base;
            xi[4] = angle;
            let t = se3_exp(&xi);
            let r = t.rotation();
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
            // first-order check: translation ~ rho + omega x rho / 2
            let rho = Vector3::new(0.2, 0.1, -0.3);
            let omega = Vector3::new(0.0, angle, 0.0);
            let approx = rho + omega.cross(&rho) * 0.5;
            assert!((t.translation() - approx).norm() < angle * angle);
        }
    }

    fn fd_jacobian(f: impl Fn(&Vector6<f64>) -> Vector3<f64>, xi: &Vector6<f64>) -> Matrix3x6<f64> {
        let h = 1e-6;
        let mut j = Matrix3x6::zeros();
        for i in 0..6 {
            let mut a = *xi;
            let mut b = *xi;
            a[i] += h;
            b[i] -= h;
            j.set_column(i, &((f(&a) - f(&b)) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn point_jacobians_match_finite_differences() {
        let x = Vector3::new(0.7, -1.2, 4.5);
        for xi in [
            Vector6::new(0.1, -0.2, 0.5, 0.05, -0.1, 0.2),
            Vector6::new(0.3, 0.0, 0.1, 0.0, 0.0, 0.0),
            Vector6::new(-0.4, 0.2, 0.3, 1.2, 0.4, -0.9),
            Vector6::new(0.0, 0.1, 0.2, 3e-3, -1e-3, 2e-3),
        ] {
            let t = se3_exp(&xi);
            let fd = fd_jacobian(|v| se3_exp(v).transform_point(&x), &xi);
            assert!(
                (t.point_jacobian(&x) - fd).abs().max() < 1e-7,
                "xi = {xi:?}"
            );
            let fd = fd_jacobian(|v| se3_exp(v).inverse_transform_point(&x), &xi);
            assert!(
                (t.inverse_point_jacobian(&x) - fd).abs().max() < 1e-7,
                "xi = {xi:?}"
            );
            let n = Vector3::new(0.2, -0.3, -0.9).normalize();
            let fd = fd_jacobian(|v| se3_exp(v).rotation().tr_mul(&n), &xi);
            let analytic = t.inverse_rotation_jacobian(&n);
            assert!((analytic - fd.fixed_view::<3, 3>(0, 3)).abs().max() < 1e-7);
            assert!(fd.fixed_view::<3, 3>(0, 0).abs().max() == 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn xi_strategy() -> impl Strategy<Value = Vector6<f64>> {
            (
                prop::array::uniform3(-2.0..2.0f64),
                prop::array::uniform3(-1.0..1.0f64),
                0.0..(PI - 1e-3),
            )
                .prop_map(|(rho, axis, angle)| {
                    let a = Vector3::from(axis);
                    let omega = if a.norm() < 1e-6 {
                        Vector3::zeros()
                    } else {
                        a.normalize() * angle
                    };
                    Vector6::new(rho[0], rho[1], rho[2], omega.x, omega.y, omega.z)
                })
        }

        proptest! {
            #[test]
            fn inverse_round_trip(xi in xi_strategy(), x in prop::array::uniform3(-10.0..10.0f64)) {
                let t = se3_exp(&xi);
                let x = Vector3::from(x);
                let back = t.inverse().transform_point(&t.transform_point(&x));
                prop_assert!((back - x).norm() < 1e-9);
                let back = t.inverse_transform_point(&t.transform_point(&x));
                prop_assert!((back - x).norm() < 1e-9);
            }

            #[test]
            fn rotation_is_orthonormal(xi in xi_strategy()) {
                let t = se3_exp(&xi);
                let r = t.rotation();
                prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-9);
                prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn exp_log_round_trip(xi in xi_strategy()) {
                let t = se3_exp(&xi);
                let back = RigidTransform::from_matrix(*t.rotation(), *t.translation());
                let again = se3_exp(&back.log());
                prop_assert!((again.rotation() - t.rotation()).abs().max() < 1e-9);
                prop_assert!((again.translation() - t.translation()).abs().max() < 1e-9);
            }

            #[test]
            fn project_backproject_identity(px in 0.0..127.0f64, py in 0.0..95.0f64, d in 0.05..200.0f64) {
                let k = Intrinsics::new(100.0, 95.0, 63.5, 47.5).unwrap();
                let ray = k.backproject(px, py);
                prop_assert_eq!(ray.xtilde.z, 1.0);
                let p = k.project(&ray.at_depth(d)).unwrap();
                prop_assert!((p.x - px).abs() < 1e-9 && (p.y - py).abs() < 1e-9);
            }

            #[test]
            fn normal_transport_preserves_norm(xi in xi_strategy(), n in prop::array::uniform3(-1.0..1.0f64)) {
                let n = Vector3::from(n);
                prop_assume!(n.norm() > 1e-3);
                let n = n.normalize();
                let out = se3_exp(&xi).transform_normal(&n).unwrap();
                prop_assert!((out.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
