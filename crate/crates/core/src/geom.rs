//! Shared geometric primitives: unit vectors on the sphere, rotations, the
//! calibrated bearing model, and the rotation exponential map.
//!
//! Conventions used throughout the crate:
//! - `R` maps target-frame coordinates to camera-frame coordinates in the
//!   sense that the camera axes, written in the target basis, are the columns
//!   of `R`. A vector with target coordinates `v_t` has camera coordinates
//!   `R^T v_t`.
//! - Euler angles are Z-Y-X intrinsic: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use std::fmt;
use std::ops::Deref;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector2 = nalgebra::Vector2<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Matrix3d = Matrix3<f64>;

/// Inputs whose norm is within this distance of 1 are renormalized; anything
/// further away is rejected.
pub const UNIT_RENORMALIZE_TOL: f64 = 1e-6;

/// Below this rotation-vector norm the exponential map uses its truncated
/// series.
pub const RODRIGUES_SMALL_ANGLE: f64 = 1e-12;

/// `|cos(pitch)|` below this flags a gimbal-locked Euler decomposition.
pub const GIMBAL_LOCK_TOL: f64 = 1e-6;

const ROTATION_ORTHO_TOL: f64 = 1e-9;
const ORTHONORMALIZE_MIN_NORM: f64 = 1e-9;

/// A 3-vector on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector3(Vector3);

impl UnitVector3 {
    pub const E3: UnitVector3 = UnitVector3(Vector3::new(0.0, 0.0, 1.0));

    /// Accepts `v` if it is already unit length up to floating-point drift.
    pub fn new(v: Vector3) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_RENORMALIZE_TOL {
            return Err(Error::NotUnit { norm });
        }
        Ok(UnitVector3(v / norm))
    }

    /// Normalizes an arbitrary nonzero direction.
    pub fn from_direction(v: Vector3) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm < f64::MIN_POSITIVE.sqrt() {
            return Err(Error::Degenerate("cannot normalize a zero or non-finite vector"));
        }
        Ok(UnitVector3(v / norm))
    }

    pub(crate) fn new_unchecked(v: Vector3) -> Self {
        UnitVector3(v)
    }

    pub fn into_inner(self) -> Vector3 {
        self.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    /// Angle to another unit vector, accurate for tiny and near-antipodal
    /// separations.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        angle_between(&self.0, &other.0)
    }
}

impl Deref for UnitVector3 {
    type Target = Vector3;

    fn deref(&self) -> &Vector3 {
        &self.0
    }
}

impl fmt::Display for UnitVector3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0.x, self.0.y, self.0.z)
    }
}

/// Angle between two nonzero vectors in `[0, pi]`.
pub fn angle_between(a: &Vector3, b: &Vector3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// A proper rotation matrix (orthogonal, determinant +1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(Matrix3d);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3d::identity())
    }

    /// Validates `m` against `||m^T m - I||_F <= 1e-9` and `|det m - 1| <= 1e-9`.
    pub fn from_matrix(m: Matrix3d) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3d::identity()).norm();
        let det = m.determinant();
        if !(ortho <= ROTATION_ORTHO_TOL) || !((det - 1.0).abs() <= ROTATION_ORTHO_TOL) {
            return Err(Error::NotRotation { ortho, det });
        }
        Ok(RotationMatrix(m))
    }

    /// Rotation by `angle` about the z axis.
    pub fn about_z(angle: f64) -> Self {
        rodrigues_exp(&Vector3::new(0.0, 0.0, angle))
    }

    /// Rotation by `angle` about the y axis.
    pub fn about_y(angle: f64) -> Self {
        rodrigues_exp(&Vector3::new(0.0, angle, 0.0))
    }

    /// Rotation by `angle` about the x axis.
    pub fn about_x(angle: f64) -> Self {
        rodrigues_exp(&Vector3::new(angle, 0.0, 0.0))
    }

    pub fn matrix(&self) -> &Matrix3d {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn compose(&self, rhs: &RotationMatrix) -> Self {
        RotationMatrix(self.0 * rhs.0)
    }

    pub fn apply(&self, v: &Vector3) -> Vector3 {
        self.0 * v
    }

    /// Row-major entries.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    pub fn from_row_major(entries: &[f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3d::from_row_slice(entries))
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidInput("principal point must be finite".into()));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }
}

impl Default for CameraIntrinsics {
    /// 800 px focal length on a 640x512 sensor.
    fn default() -> Self {
        CameraIntrinsics { fx: 800.0, fy: 800.0, cx: 320.0, cy: 256.0 }
    }
}

/// Converts a pixel into the unit bearing `(u_x, u_y, 1) / sqrt(u_x^2 + u_y^2 + 1)`
/// of its calibrated coordinates.
pub fn pixel_to_bearing(pixel: &Vector2, k: &CameraIntrinsics) -> UnitVector3 {
    let ux = (pixel.x - k.cx) / k.fx;
    let uy = (pixel.y - k.cy) / k.fy;
    let v = Vector3::new(ux, uy, 1.0);
    UnitVector3(v / v.norm())
}

/// Skew-symmetric matrix `w^x` with `w^x v = w x v`.
pub fn skew(w: &Vector3) -> Matrix3d {
    Matrix3d::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map from a rotation vector (radians) to SO(3), via Rodrigues'
/// formula.
pub fn rodrigues_exp(w: &Vector3) -> RotationMatrix {
    let theta = w.norm();
    let k = skew(w);
    let k2 = k * k;
    let (a, b) = if theta < RODRIGUES_SMALL_ANGLE {
        (1.0, 0.5)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    RotationMatrix(Matrix3d::identity() + k * a + k2 * b)
}

/// Projects `m` onto SO(3) keeping its third column equal to `eta`.
///
/// The first column is `m`'s first column with its `eta` component removed,
/// then normalized; the second column completes a right-handed frame.
pub fn orthonormalize_with_fixed_third_column(
    m: &Matrix3d,
    eta: &UnitVector3,
) -> Result<RotationMatrix> {
    let e: &Vector3 = eta;
    let c1_raw = m.column(0).into_owned();
    let c1 = c1_raw - e * e.dot(&c1_raw);
    let n1 = c1.norm();
    if !(n1 >= ORTHONORMALIZE_MIN_NORM) {
        return Err(Error::Degenerate("first column is parallel to the fixed third column"));
    }
    let c1 = c1 / n1;

    let c2_raw = m.column(1).into_owned();
    let c2_resid = c2_raw - e * e.dot(&c2_raw) - c1 * c1.dot(&c2_raw);
    if !(c2_resid.norm() >= ORTHONORMALIZE_MIN_NORM) {
        return Err(Error::Degenerate("second column lies in the span of the other two"));
    }
    let c2 = e.cross(&c1);

    Ok(RotationMatrix(Matrix3d::from_columns(&[c1, c2, *e])))
}

/// Angle of the relative rotation `a^T b`, in `[0, pi]`.
///
/// Evaluated with `atan2(sin, cos)` of the relative rotation so that angles
/// near zero keep full precision.
pub fn geodesic_angle(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    let rel = a.0.transpose() * b.0;
    let cos = 0.5 * (rel.trace() - 1.0);
    let axis = Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = 0.5 * axis.norm();
    sin.atan2(cos).clamp(0.0, std::f64::consts::PI)
}

/// Z-Y-X intrinsic Euler angles, in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|cos(pitch)| < 1e-6`; roll is then fixed to zero and the
    /// remaining angle is folded into yaw.
    pub gimbal_lock: bool,
}

impl EulerAngles {
    pub fn to_rotation(&self) -> RotationMatrix {
        RotationMatrix::about_z(self.yaw)
            .compose(&RotationMatrix::about_y(self.pitch))
            .compose(&RotationMatrix::about_x(self.roll))
    }
}

pub fn rotation_to_euler(r: &RotationMatrix) -> EulerAngles {
    let m = &r.0;
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);
    if cos_pitch < GIMBAL_LOCK_TOL {
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return EulerAngles { roll: 0.0, pitch, yaw, gimbal_lock: true };
    }
    EulerAngles {
        roll: m[(2, 1)].atan2(m[(2, 2)]),
        pitch,
        yaw: m[(1, 0)].atan2(m[(0, 0)]),
        gimbal_lock: false,
    }
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI { w + TAU } else { w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn vec3() -> impl Strategy<Value = Vector3> {
        (-PI..PI, -PI..PI, -PI..PI).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    fn rotation() -> impl Strategy<Value = RotationMatrix> {
        vec3().prop_filter("|w| <= pi", |w| w.norm() <= PI).prop_map(|w| rodrigues_exp(&w))
    }

    #[test]
    fn bearing_of_principal_point_is_optical_axis() {
        let k = CameraIntrinsics::new(500.0, 700.0, 300.0, 200.0).unwrap();
        let p = pixel_to_bearing(&Vector2::new(300.0, 200.0), &k);
        assert_eq!(p.as_array(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn bearing_normalization_examples() {
        let k = CameraIntrinsics::default();
        let p = pixel_to_bearing(&Vector2::new(k.cx + k.fx, k.cy + k.fy), &k);
        let s = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(*p, Vector3::new(s, s, s), epsilon = 1e-15);

        let p = pixel_to_bearing(&Vector2::new(k.cx + k.fx, k.cy), &k);
        let s = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(*p, Vector3::new(s, 0.0, s), epsilon = 1e-15);
    }

    #[test]
    fn intrinsics_reject_nonpositive_focal() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn unit_vector_renormalizes_small_drift_only() {
        let u = UnitVector3::new(Vector3::new(0.0, 0.0, 1.0 + 5e-7)).unwrap();
        assert!((u.norm() - 1.0).abs() <= 1e-12);
        assert!(matches!(
            UnitVector3::new(Vector3::new(0.0, 0.0, 1.1)),
            Err(Error::NotUnit { .. })
        ));
        assert!(UnitVector3::from_direction(Vector3::zeros()).is_err());
    }

    #[test]
    fn rodrigues_examples() {
        assert_eq!(rodrigues_exp(&Vector3::zeros()), RotationMatrix::identity());

        let r = rodrigues_exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert_abs_diff_eq!(r.apply(&Vector3::x()), Vector3::y(), epsilon = 1e-12);

        // Right-handed: a positive turn about +y carries +z toward +x.
        let r = rodrigues_exp(&Vector3::new(0.0, 1.0, 0.0));
        let expected = Vector3::new(1f64.sin(), 0.0, 1f64.cos());
        assert_abs_diff_eq!(r.apply(&Vector3::z()), expected, epsilon = 1e-15);
        let r = rodrigues_exp(&Vector3::new(0.0, -1.0, 0.0));
        let expected = Vector3::new(-(1f64.sin()), 0.0, 1f64.cos());
        assert_abs_diff_eq!(r.apply(&Vector3::z()), expected, epsilon = 1e-15);
    }

    #[test]
    fn rodrigues_small_angle_branch_is_continuous() {
        let w = Vector3::new(3e-13, -2e-13, 1e-13);
        let r = rodrigues_exp(&w);
        let expected = Matrix3d::identity() + skew(&w);
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-24);
    }

    #[test]
    fn orthonormalize_identity_and_exact_rotation() {
        let r = orthonormalize_with_fixed_third_column(&Matrix3d::identity(), &UnitVector3::E3)
            .unwrap();
        assert_eq!(r, RotationMatrix::identity());

        let rt = rodrigues_exp(&Vector3::new(0.3, -0.7, 1.1)).transpose();
        let eta = UnitVector3::new(rt.matrix().column(2).into_owned()).unwrap();
        let out = orthonormalize_with_fixed_third_column(rt.matrix(), &eta).unwrap();
        assert_abs_diff_eq!(*out.matrix(), *rt.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn orthonormalize_perturbation_sweep() {
        // Deterministic perturbation pattern with Frobenius norm 1e-3.
        let base = Matrix3d::from_fn(|i, j| ((i * 3 + j) as f64 * 1.7).sin());
        let e = base * (1e-3 / base.norm());
        for k in 0..50 {
            let w = Vector3::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos(), 0.5) * 2.0;
            let rt = rodrigues_exp(&w).transpose();
            let eta = UnitVector3::new(rt.matrix().column(2).into_owned()).unwrap();
            let out = orthonormalize_with_fixed_third_column(&(rt.matrix() + e), &eta).unwrap();
            assert!(geodesic_angle(&out, &rt) < 1e-2);
            assert_eq!(out.matrix().column(2).into_owned(), *eta);
        }
    }

    #[test]
    fn orthonormalize_rejects_parallel_column() {
        let m = Matrix3d::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            orthonormalize_with_fixed_third_column(&m, &UnitVector3::E3),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn geodesic_examples() {
        let i = RotationMatrix::identity();
        assert_eq!(geodesic_angle(&i, &i), 0.0);
        assert_abs_diff_eq!(
            geodesic_angle(&i, &RotationMatrix::about_z(FRAC_PI_2)),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            geodesic_angle(&RotationMatrix::about_z(0.3), &RotationMatrix::about_z(0.5)),
            0.2,
            epsilon = 1e-15
        );
        // Resolves angles far below the acos precision floor.
        let tiny = geodesic_angle(&i, &RotationMatrix::about_x(1e-11));
        assert_abs_diff_eq!(tiny, 1e-11, epsilon = 1e-20);
    }

    #[test]
    fn euler_examples() {
        let e = rotation_to_euler(&RotationMatrix::identity());
        assert_eq!((e.roll, e.pitch, e.yaw), (0.0, 0.0, 0.0));
        let e = rotation_to_euler(&RotationMatrix::about_z(0.4));
        assert_abs_diff_eq!(e.roll, 0.0);
        assert_abs_diff_eq!(e.pitch, 0.0);
        assert_abs_diff_eq!(e.yaw, 0.4, epsilon = 1e-15);
        assert!(!e.gimbal_lock);
    }

    #[test]
    fn euler_flags_gimbal_lock() {
        let r = RotationMatrix::about_y(FRAC_PI_2);
        let e = rotation_to_euler(&r);
        assert!(e.gimbal_lock);
        assert!(geodesic_angle(&e.to_rotation(), &r) < 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rodrigues_is_a_rotation(w in vec3().prop_filter("|w| <= pi", |w| w.norm() <= PI)) {
            let r = rodrigues_exp(&w);
            prop_assert!(RotationMatrix::from_matrix(*r.matrix()).is_ok());
            prop_assert!((geodesic_angle(&RotationMatrix::identity(), &r) - w.norm()).abs() < 1e-9);
        }

        #[test]
        fn orthonormalize_is_idempotent(
            r in rotation(),
            noise in proptest::array::uniform9(-0.05f64..0.05),
        ) {
            let rt = r.transpose();
            let eta = UnitVector3::new(rt.matrix().column(2).into_owned()).unwrap();
            let m = rt.matrix() + Matrix3d::from_row_slice(&noise);
            let once = orthonormalize_with_fixed_third_column(&m, &eta).unwrap();
            let twice = orthonormalize_with_fixed_third_column(once.matrix(), &eta).unwrap();
            prop_assert!((once.matrix() - twice.matrix()).amax() <= 1e-12);
            prop_assert!(RotationMatrix::from_matrix(*once.matrix()).is_ok());
        }

        #[test]
        fn geodesic_symmetric_and_triangle(a in rotation(), b in rotation(), c in rotation()) {
            let ab = geodesic_angle(&a, &b);
            prop_assert!((ab - geodesic_angle(&b, &a)).abs() < 1e-12);
            prop_assert!(geodesic_angle(&a, &c) <= ab + geodesic_angle(&b, &c) + 1e-12);
        }

        #[test]
        fn euler_round_trip(r in rotation()) {
            let e = rotation_to_euler(&r);
            prop_assume!(!e.gimbal_lock);
            prop_assert!((e.to_rotation().matrix() - r.matrix()).amax() <= 1e-9);
        }

        #[test]
        fn bearings_are_unit(px in -1e4f64..1e4, py in -1e4f64..1e4) {
            let p = pixel_to_bearing(&Vector2::new(px, py), &CameraIntrinsics::default());
            prop_assert!((p.norm() - 1.0).abs() <= 1e-12);
            prop_assert!(p.z > 0.0);
        }
    }
}
