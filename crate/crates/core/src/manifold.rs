//! Rotations and unit vectors on the two-sphere.
//!
//! A unit vector is carried as a full rotation `r` whose image of `e_z` is the
//! vector itself. Its tangent plane is spanned by the columns of
//! [`tangent_basis`], i.e. `r(e_x)` and `r(e_y)`. Increments on the sphere are
//! retracted with
//!
//! ```text
//! r ⊞ d = exp(-N(r) d) · r
//! ```
//!
//! The minus sign makes `d/dt = N(r)ᵀ ω` reproduce the motion of a vector
//! that is fixed in the world while the frame it is expressed in rotates with
//! angular rate `ω`, i.e. `u̇ = -ω × u`.

use nalgebra::{Matrix3, Matrix3x2, Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

/// Below this angle (rad) exponential and logarithm switch to series forms.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Boxminus refuses pairs whose angle exceeds `π - ANTIPODAL_MARGIN`.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// A 3D rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        Rotation(q)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        so3_exp(&(axis.normalize() * angle), 1.0)
    }

    /// Rotation matrix to rotation; the input is re-orthonormalized.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Rotation(UnitQuaternion::from_matrix(m))
    }

    /// `Rz(azimuth) · Ry(polar)`; maps `e_z` to the unit vector with the given
    /// spherical angles.
    pub fn from_spherical(polar: f64, azimuth: f64) -> Self {
        let rz = so3_exp(&(Vector3::z() * azimuth), 1.0);
        let ry = so3_exp(&(Vector3::y() * polar), 1.0);
        rz.compose(&ry)
    }

    /// A rotation whose `e_z` image is `u`, built from the spherical angles of
    /// `u` so it stays well defined for every direction including `-e_z`.
    pub fn with_z_axis(u: &UnitVector3) -> Self {
        let (polar, azimuth) = u.spherical();
        Self::from_spherical(polar, azimuth)
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        let q: Quaternion<f64> = self.0.into_inner() * other.0.into_inner();
        Rotation(UnitQuaternion::new_normalize(q))
    }

    pub fn act(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    /// Rotation vector (axis times angle) with angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.0.into_inner();
        let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
        let s = v.norm();
        if s < SMALL_ANGLE {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(w);
        v * (angle / s)
    }

    /// Angle between two rotations (rad).
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).log().norm()
    }
}

/// A unit-norm 3-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn new_normalize(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize vector {:?}",
                v.as_slice()
            )));
        }
        Ok(UnitVector3(v / n))
    }

    /// Wraps a vector already known to be unit norm.
    pub fn new_unchecked(v: Vector3<f64>) -> Self {
        UnitVector3(v)
    }

    pub fn from_spherical(polar: f64, azimuth: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        UnitVector3(Vector3::new(sp * ca, sp * sa, cp))
    }

    /// `(polar, azimuth)`: polar angle from `+z` in `[0, π]`, azimuth in
    /// `(-π, π]`.
    pub fn spherical(&self) -> (f64, f64) {
        let v = &self.0;
        let rho = (v.x * v.x + v.y * v.y).sqrt();
        (rho.atan2(v.z), v.y.atan2(v.x))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    /// Angle to another unit vector in radians; symmetric in its arguments.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        angle_between(&self.0, &other.0)
    }
}

impl std::ops::Deref for UnitVector3 {
    type Target = Vector3<f64>;
    fn deref(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Increment in the tangent plane of an S² element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentDelta2(pub Vector2<f64>);

impl TangentDelta2 {
    pub fn new(a: f64, b: f64) -> Self {
        TangentDelta2(Vector2::new(a, b))
    }

    pub fn zero() -> Self {
        TangentDelta2(Vector2::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Angle between two (not necessarily unit) vectors, via `atan2` so it stays
/// accurate near 0 and π.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn rotate_basis(r: &Rotation, axis: Axis) -> UnitVector3 {
    UnitVector3(r.act(&axis.unit()))
}

/// `N(r) = [r(e_x), r(e_y)]`.
pub fn tangent_basis(r: &Rotation) -> Matrix3x2<f64> {
    let m = r.matrix();
    m.fixed_columns::<2>(0).into_owned()
}

/// Rotation by angle `|w| dt` about `w / |w|`.
pub fn so3_exp(w: &Vector3<f64>, dt: f64) -> Rotation {
    let phi = w * dt;
    let angle = phi.norm();
    let q = if angle < SMALL_ANGLE {
        // exp ≈ 1 + φ/2 to second order; renormalized below
        Quaternion::from_parts(1.0 - angle * angle / 8.0, phi * 0.5)
    } else {
        let half = 0.5 * angle;
        Quaternion::from_parts(half.cos(), phi * (half.sin() / angle))
    };
    Rotation(UnitQuaternion::new_normalize(q))
}

/// Left Jacobian of SO(3): `exp(φ + ε) ≈ exp(J_l(φ) ε) · exp(φ)`.
pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if theta < 1e-5 {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * a + k2 * b
}

/// `r ⊞ d = exp(-N(r) d) · r`.
pub fn boxplus_s2(r: &Rotation, d: &TangentDelta2) -> Rotation {
    let rotvec = -(tangent_basis(r) * d.0);
    so3_exp(&rotvec, 1.0).compose(r)
}

/// Minimal tangent increment `d` at `b` such that `(b ⊞ d)(e_z) = a(e_z)`.
pub fn boxminus_s2(a: &Rotation, b: &Rotation) -> Result<TangentDelta2> {
    let na = a.act(&Vector3::z());
    let nb = b.act(&Vector3::z());
    let rotvec = unit_rotation_vector(&nb, &na)?;
    Ok(TangentDelta2(-(tangent_basis(b).transpose() * rotvec)))
}

/// Rotation vector of the minimal rotation taking unit `from` onto unit `to`.
pub(crate) fn unit_rotation_vector(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Vector3<f64>> {
    let cross = from.cross(to);
    let s = cross.norm();
    let c = from.dot(to);
    let angle = s.atan2(c);
    if angle > std::f64::consts::PI - ANTIPODAL_MARGIN {
        return Err(Error::AntipodalLogarithm { angle });
    }
    if s < SMALL_ANGLE {
        // sin(angle) ≈ s, so cross / s * angle ≈ cross to first order
        return Ok(cross);
    }
    Ok(cross * (angle / s))
}

/// `∂ r(e_z) / ∂ d` for `r ⊞ d` at `d = 0`, i.e. `[r(e_y), -r(e_x)]`.
pub fn s2_perturbation_basis(r: &Rotation) -> Matrix3x2<f64> {
    let m = r.matrix();
    let mut out = Matrix3x2::zeros();
    out.set_column(0, &m.column(1));
    out.set_column(1, &(-m.column(0)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use approx_eq::assert_vec_close;

    mod approx_eq {
        macro_rules! assert_vec_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b) = (&$a, &$b);
                let diff = (a - b).amax();
                assert!(diff <= $tol, "|{} - {}| = {} > {}", a, b, diff, $tol);
            }};
        }
        pub(crate) use assert_vec_close;
    }

    fn rodrigues(w: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
        let phi = w * dt;
        let theta = phi.norm();
        if theta == 0.0 {
            return Matrix3::identity();
        }
        let k = skew(&(phi / theta));
        Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
    }

    #[test]
    fn rotate_basis_identity_and_quarter_turn() {
        let z = rotate_basis(&Rotation::identity(), Axis::Z);
        assert_vec_close!(*z.as_vector(), Vector3::z(), 0.0);
        let r = Rotation::from_axis_angle(&Vector3::x(), PI / 2.0);
        let z = rotate_basis(&r, Axis::Z);
        assert_vec_close!(*z.as_vector(), Vector3::new(0.0, -1.0, 0.0), 1e-15);
    }

    #[test]
    fn tangent_basis_half_turn() {
        let r = Rotation::from_axis_angle(&Vector3::z(), PI);
        let n = tangent_basis(&r);
        assert_vec_close!(n.column(0).into_owned(), Vector3::new(-1.0, 0.0, 0.0), 1e-15);
        assert_vec_close!(n.column(1).into_owned(), Vector3::new(0.0, -1.0, 0.0), 1e-15);
        let n = tangent_basis(&Rotation::identity());
        assert_vec_close!(n.column(0).into_owned(), Vector3::x(), 0.0);
        assert_vec_close!(n.column(1).into_owned(), Vector3::y(), 0.0);
    }

    #[test]
    fn so3_exp_cases() {
        let r = so3_exp(&Vector3::new(0.3, -0.2, 0.9), 0.0);
        assert_eq!(r.matrix(), Matrix3::identity());
        let r = so3_exp(&Vector3::new(0.0, 0.0, PI), 1.0);
        assert_vec_close!(r.act(&Vector3::x()), Vector3::new(-1.0, 0.0, 0.0), 1e-15);
        // series branch stays continuous with the closed form
        let tiny = so3_exp(&Vector3::new(1e-9, -2e-9, 3e-9), 1.0);
        assert_vec_close!(tiny.matrix(), rodrigues(&Vector3::new(1e-9, -2e-9, 3e-9), 1.0), 1e-15);
    }

    #[test]
    fn boxplus_zero_increment_keeps_normal() {
        let r = Rotation::from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 1.1);
        let out = boxplus_s2(&r, &TangentDelta2::zero());
        assert_vec_close!(out.act(&Vector3::z()), r.act(&Vector3::z()), 1e-15);
    }

    #[test]
    fn boxplus_small_increment_moves_by_its_norm() {
        let theta = 1e-4;
        let out = boxplus_s2(&Rotation::identity(), &TangentDelta2::new(theta, 0.0));
        let z = out.act(&Vector3::z());
        // first-order displacement is theta along r(e_y)
        let disp = z - Vector3::z();
        assert!((disp.norm() - theta).abs() < theta * theta);
        assert!(disp.x.abs() < theta * theta);
        // rotation axis is r(e_x)
        assert!((angle_between(&z, &Vector3::z()) - theta).abs() < 1e-15);
    }

    #[test]
    fn boxminus_identical_and_antipodal() {
        let r = Rotation::from_axis_angle(&Vector3::new(0.1, 1.0, 0.4), 0.8);
        let d = boxminus_s2(&r, &r).unwrap();
        assert!(d.norm() < 1e-15);
        let flipped = Rotation::from_axis_angle(&Vector3::x(), PI).compose(&Rotation::identity());
        assert!(matches!(
            boxminus_s2(&flipped, &Rotation::identity()),
            Err(Error::AntipodalLogarithm { .. })
        ));
    }

    #[test]
    fn left_jacobian_matches_finite_difference() {
        let phi = Vector3::new(0.4, -0.7, 0.2);
        let jl = left_jacobian(&phi);
        let base = so3_exp(&phi, 1.0);
        let h = 1e-6;
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let plus = so3_exp(&(phi + e), 1.0).compose(&base.inverse()).log();
            let minus = so3_exp(&(phi - e), 1.0).compose(&base.inverse()).log();
            let col = (plus - minus) / (2.0 * h);
            assert_vec_close!(col, jl.column(i).into_owned(), 1e-8);
        }
    }

    #[test]
    fn perturbation_basis_matches_boxplus() {
        let r = Rotation::from_axis_angle(&Vector3::new(-0.3, 0.5, 1.0), 2.0);
        let b = s2_perturbation_basis(&r);
        let h = 1e-6;
        for i in 0..2 {
            let mut d = Vector2::zeros();
            d[i] = h;
            let p = boxplus_s2(&r, &TangentDelta2(d)).act(&Vector3::z());
            let m = boxplus_s2(&r, &TangentDelta2(-d)).act(&Vector3::z());
            assert_vec_close!((p - m) / (2.0 * h), b.column(i).into_owned(), 1e-9);
        }
    }

    #[test]
    fn spherical_round_trip_near_south_pole() {
        let u = UnitVector3::new_normalize(Vector3::new(1e-9, -2e-9, -1.0)).unwrap();
        let (p, a) = u.spherical();
        let back = UnitVector3::from_spherical(p, a);
        assert_vec_close!(*back.as_vector(), *u.as_vector(), 1e-15);
        let r = Rotation::with_z_axis(&u);
        assert_vec_close!(r.act(&Vector3::z()), *u.as_vector(), 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rotation() -> impl Strategy<Value = Rotation> {
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..PI).prop_filter_map(
                "zero axis",
                |(x, y, z, angle)| {
                    let axis = Vector3::new(x, y, z);
                    (axis.norm() > 1e-3).then(|| Rotation::from_axis_angle(&axis, angle))
                },
            )
        }

        fn delta() -> impl Strategy<Value = TangentDelta2> {
            (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| {
                let d = Vector2::new(a, b);
                TangentDelta2(if d.norm() > 1.0 { d / d.norm() } else { d })
            })
        }

        proptest! {
            #[test]
            fn boxminus_inverts_boxplus(r in rotation(), d in delta()) {
                let back = boxminus_s2(&boxplus_s2(&r, &d), &r).unwrap();
                prop_assert!((back.0 - d.0).amax() < 1e-9);
            }

            #[test]
            fn tangent_basis_orthogonal_to_normal(r in rotation()) {
                let n = tangent_basis(&r);
                let z = rotate_basis(&r, Axis::Z);
                prop_assert!((n.transpose() * z.as_vector()).amax() < 1e-12);
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn so3_exp_same_axis_composition(
                x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
                t1 in -1.0f64..1.0, t2 in -1.0f64..1.0,
            ) {
                let w = Vector3::new(x, y, z);
                let lhs = so3_exp(&w, t1).compose(&so3_exp(&w, t2));
                let rhs = so3_exp(&w, t1 + t2);
                prop_assert!((lhs.matrix() - rhs.matrix()).amax() < 1e-10);
            }

            #[test]
            fn so3_exp_matches_rodrigues(
                x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0, dt in 0.0f64..1.0,
            ) {
                let w = Vector3::new(x, y, z);
                prop_assert!((so3_exp(&w, dt).matrix() - rodrigues(&w, dt)).amax() < 1e-12);
            }

            #[test]
            fn rotate_basis_matches_matrix_product(r in rotation()) {
                let m = r.matrix();
                for (axis, col) in [(Axis::X, 0), (Axis::Y, 1), (Axis::Z, 2)] {
                    let v = rotate_basis(&r, axis);
                    let mut e = Vector3::zeros();
                    e[col] = 1.0;
                    prop_assert!((v.as_vector() - m * e).amax() < 1e-12);
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
