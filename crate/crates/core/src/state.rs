//! Filter state, IMU correction, continuous dynamics and the Euler prediction
//! step with its covariance propagation.
//!
//! Error-state layout (14 components), shared by every Jacobian, gain and
//! covariance in the crate:
//!
//! | index | block | dim |
//! |-------|-------|-----|
//! | 0     | inverse distance `α` | 1 |
//! | 1..4  | velocity ratio `ϑ` | 3 |
//! | 4..6  | plane normal `μ` (S² tangent) | 2 |
//! | 6..8  | up direction `g` (S² tangent) | 2 |
//! | 8..11 | accelerometer bias | 3 |
//! | 11..14| gyro bias | 3 |

use nalgebra::{Matrix2, Matrix3, Matrix3x2, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::manifold::{
    boxminus_s2, boxplus_s2, left_jacobian, rotate_basis, s2_perturbation_basis, skew,
    tangent_basis, Axis, Rotation, TangentDelta2, UnitVector3,
};

pub const STATE_DIM: usize = 14;

pub const ALPHA: usize = 0;
pub const VARTHETA: usize = 1;
pub const MU: usize = 4;
pub const GRAV: usize = 6;
pub const BIAS_ACC: usize = 8;
pub const BIAS_GYRO: usize = 11;

/// Standard gravity used throughout (m/s²).
pub const G0: f64 = 9.8;

pub type StateDelta = SVector<f64, STATE_DIM>;
pub type Matrix14 = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Filter state.
///
/// `g` is the unit vector opposite to gravity expressed in the camera frame,
/// which is the direction an accelerometer at rest reads. `μ` is the plane
/// normal pointing from the camera towards the plane, so `d = μᵀP > 0` for
/// every plane point `P` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub alpha: f64,
    pub vartheta: Vector3<f64>,
    pub mu_s: Rotation,
    pub g_s: Rotation,
    pub b_a: Vector3<f64>,
    pub b_w: Vector3<f64>,
}

impl State {
    pub fn mu(&self) -> UnitVector3 {
        rotate_basis(&self.mu_s, Axis::Z)
    }

    pub fn g(&self) -> UnitVector3 {
        rotate_basis(&self.g_s, Axis::Z)
    }

    pub fn distance(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Metric velocity `v = ϑ / α`.
    pub fn velocity(&self) -> Vector3<f64> {
        self.vartheta / self.alpha
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite()
            && self.vartheta.iter().all(|v| v.is_finite())
            && self.b_a.iter().all(|v| v.is_finite())
            && self.b_w.iter().all(|v| v.is_finite())
            && self.mu_s.quaternion().coords.iter().all(|v| v.is_finite())
            && self.g_s.quaternion().coords.iter().all(|v| v.is_finite())
    }

    pub fn boxplus(&self, d: &StateDelta) -> State {
        State {
            alpha: self.alpha + d[ALPHA],
            vartheta: self.vartheta + d.fixed_rows::<3>(VARTHETA),
            mu_s: boxplus_s2(&self.mu_s, &TangentDelta2(d.fixed_rows::<2>(MU).into_owned())),
            g_s: boxplus_s2(&self.g_s, &TangentDelta2(d.fixed_rows::<2>(GRAV).into_owned())),
            b_a: self.b_a + d.fixed_rows::<3>(BIAS_ACC),
            b_w: self.b_w + d.fixed_rows::<3>(BIAS_GYRO),
        }
    }

    /// `self ⊟ base`, expressed in the tangent chart of `base`.
    pub fn boxminus(&self, base: &State) -> Result<StateDelta> {
        let mut d = StateDelta::zeros();
        d[ALPHA] = self.alpha - base.alpha;
        d.fixed_rows_mut::<3>(VARTHETA)
            .copy_from(&(self.vartheta - base.vartheta));
        d.fixed_rows_mut::<2>(MU)
            .copy_from(&boxminus_s2(&self.mu_s, &base.mu_s)?.0);
        d.fixed_rows_mut::<2>(GRAV)
            .copy_from(&boxminus_s2(&self.g_s, &base.g_s)?.0);
        d.fixed_rows_mut::<3>(BIAS_ACC)
            .copy_from(&(self.b_a - base.b_a));
        d.fixed_rows_mut::<3>(BIAS_GYRO)
            .copy_from(&(self.b_w - base.b_w));
        Ok(d)
    }
}

/// 14×14 covariance over the error state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCovariance(pub Matrix14);

impl ErrorCovariance {
    pub fn from_diagonal(diag: &StateDelta) -> Self {
        ErrorCovariance(Matrix14::from_diagonal(diag))
    }

    pub fn matrix(&self) -> &Matrix14 {
        &self.0
    }

    pub fn diagonal(&self) -> StateDelta {
        self.0.diagonal()
    }

    pub fn symmetrized(m: Matrix14) -> Self {
        ErrorCovariance((m + m.transpose()) * 0.5)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Eigenvalues clamped at zero. Returns `None` when nothing changed.
    pub fn floored(&self) -> Option<Self> {
        let eig = self.0.symmetric_eigen();
        if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
            return None;
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let m = eig.eigenvectors * Matrix14::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        Some(Self::symmetrized(m))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Timestamped IMU reading: specific force (m/s²) and angular rate (rad/s),
/// both in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub acc: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

/// Process noise densities, intensity noise and gravity magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// 1/(m·√s)
    pub alpha: f64,
    /// 1/(s·√s)
    pub vartheta: f64,
    /// rad/√s
    pub mu: f64,
    /// rad/√s
    pub g: f64,
    /// m/(s²·√s)
    pub b_a: f64,
    /// rad/(s·√s)
    pub b_w: f64,
    /// Intensity noise standard deviation (normalized intensity units).
    pub intensity: f64,
    pub gravity: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            alpha: 0.02,
            vartheta: 0.03,
            mu: 0.01,
            g: 0.01,
            b_a: 0.01,
            b_w: 2e-4,
            intensity: 0.15,
            gravity: G0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.vartheta,
            self.mu,
            self.g,
            self.b_a,
            self.b_w,
            self.intensity,
            self.gravity,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "noise parameters must be positive: {self:?}"
            )))
        }
    }

    /// Discrete process noise `diag(σ²)·dT` in error-state order.
    pub fn process_noise(&self, dt: f64) -> StateDelta {
        let mut q = StateDelta::zeros();
        q[ALPHA] = self.alpha.powi(2);
        q.fixed_rows_mut::<3>(VARTHETA).fill(self.vartheta.powi(2));
        q.fixed_rows_mut::<2>(MU).fill(self.mu.powi(2));
        q.fixed_rows_mut::<2>(GRAV).fill(self.g.powi(2));
        q.fixed_rows_mut::<3>(BIAS_ACC).fill(self.b_a.powi(2));
        q.fixed_rows_mut::<3>(BIAS_GYRO).fill(self.b_w.powi(2));
        q * dt
    }
}

/// Bias-corrected specific force and angular rate.
pub fn correct_imu(s: &ImuSample, x: &State) -> (Vector3<f64>, Vector3<f64>) {
    (s.acc - x.b_a, s.gyro - x.b_w)
}

/// Deterministic part of the continuous dynamics, per unit time, in
/// error-state coordinates.
pub fn state_derivative(
    x: &State,
    a_hat: &Vector3<f64>,
    w_hat: &Vector3<f64>,
    np: &NoiseParams,
) -> StateDelta {
    let mu = x.mu();
    let g = x.g();
    let mu_t_vartheta = mu.dot(&x.vartheta);
    let mut d = StateDelta::zeros();
    d[ALPHA] = x.alpha * mu_t_vartheta;
    let dv = (a_hat - g.into_inner() * np.gravity) * x.alpha + x.vartheta * mu_t_vartheta
        - w_hat.cross(&x.vartheta);
    d.fixed_rows_mut::<3>(VARTHETA).copy_from(&dv);
    d.fixed_rows_mut::<2>(MU)
        .copy_from(&(tangent_basis(&x.mu_s).transpose() * w_hat));
    d.fixed_rows_mut::<2>(GRAV)
        .copy_from(&(tangent_basis(&x.g_s).transpose() * w_hat));
    d
}

/// Forward-Euler state map `x ⊞ (dT·ẋ + w)` with an additive process noise
/// increment `w` in error-state coordinates.
pub fn propagate_state(
    x: &State,
    a_hat: &Vector3<f64>,
    w_hat: &Vector3<f64>,
    dt: f64,
    np: &NoiseParams,
    noise: &StateDelta,
) -> State {
    let step = state_derivative(x, a_hat, w_hat, np) * dt + noise;
    x.boxplus(&step)
}

/// Euler prediction of state and covariance over `dt` using sample `s`.
pub fn predict(
    x: &State,
    p: &ErrorCovariance,
    s: &ImuSample,
    dt: f64,
    np: &NoiseParams,
) -> Result<(State, ErrorCovariance)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("prediction step dt = {dt}")));
    }
    let (a_hat, w_hat) = correct_imu(s, x);
    let next = propagate_state(x, &a_hat, &w_hat, dt, np, &StateDelta::zeros());
    if !next.is_finite() {
        return Err(Error::Propagation {
            reason: "non-finite state".into(),
        });
    }
    if next.alpha <= 0.0 {
        return Err(Error::Propagation {
            reason: format!("inverse distance crossed zero ({})", next.alpha),
        });
    }
    let (f, g) = process_jacobians(x, &a_hat, &w_hat, dt, np);
    let q = Matrix14::from_diagonal(&np.process_noise(dt));
    let cov = ErrorCovariance::symmetrized(f * p.0 * f.transpose() + g * q * g.transpose());
    if !cov.is_finite() {
        return Err(Error::Propagation {
            reason: "non-finite covariance".into(),
        });
    }
    Ok((next, cov))
}

/// `(∂μ'/∂μ, ∂μ'/∂ω)` of the closed-form S² Euler step
/// `μ' = cos θ μ + (sin θ / θ) dT (μ × ω)`, `θ = dT |ω - μ μᵀω|`.
fn s2_step_derivatives(mu: &Vector3<f64>, w: &Vector3<f64>, dt: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let mw = mu.dot(w);
    let pw = w - mu * mw;
    let theta = dt * pw.norm();
    let (c, s, ds_over_theta) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 2.0, 1.0 - t2 / 6.0, -1.0 / 3.0 + t2 / 30.0)
    } else {
        let (st, ct) = theta.sin_cos();
        (ct, st / theta, (theta * ct - st) / (theta * theta * theta))
    };
    let mu_x_w = mu.cross(w);
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;

    let d_mu = Matrix3::identity() * c - skew(w) * (s * dt)
        + mu * w.transpose() * (s * dt2 * mw)
        - mu_x_w * w.transpose() * (ds_over_theta * dt3 * mw);

    let d_w = skew(mu) * (s * dt) - mu * pw.transpose() * (s * dt2)
        + mu_x_w * pw.transpose() * (ds_over_theta * dt3);

    (d_mu, d_w)
}

/// Jacobians of the S² block of the Euler map: `(∂δ'/∂δ, ∂δ'/∂ω, ∂δ'/∂w)`.
fn s2_block(r: &Rotation, w_hat: &Vector3<f64>, dt: f64) -> (Matrix2<f64>, SMatrix<f64, 2, 3>, Matrix2<f64>) {
    let n = tangent_basis(r);
    let step = n.transpose() * w_hat * dt;
    let next = boxplus_s2(r, &TangentDelta2(step));
    let mu = r.act(&Vector3::z());
    let (d_mu, d_w) = s2_step_derivatives(&mu, w_hat, dt);
    let b = s2_perturbation_basis(r);
    let b_next = s2_perturbation_basis(&next);
    let f_self = b_next.transpose() * d_mu * b;
    let f_w = b_next.transpose() * d_w;
    let n_next: Matrix3x2<f64> = tangent_basis(&next);
    let g_noise = n_next.transpose() * left_jacobian(&(-(n * step))) * n;
    (f_self, f_w, g_noise)
}

/// Analytic Jacobians of the Euler map with respect to the error state (`F`)
/// and the additive process noise increment (`G`).
pub fn process_jacobians(
    x: &State,
    a_hat: &Vector3<f64>,
    w_hat: &Vector3<f64>,
    dt: f64,
    np: &NoiseParams,
) -> (Matrix14, Matrix14) {
    let mu = x.mu().into_inner();
    let g = x.g().into_inner();
    let th = x.vartheta;
    let mt = mu.dot(&th);
    let b_mu = s2_perturbation_basis(&x.mu_s);
    let b_g = s2_perturbation_basis(&x.g_s);

    let mut f = Matrix14::identity();
    let mut gm = Matrix14::identity();

    // α' = α + dT α μᵀϑ
    f[(ALPHA, ALPHA)] = 1.0 + dt * mt;
    f.fixed_view_mut::<1, 3>(ALPHA, VARTHETA)
        .copy_from(&(mu.transpose() * (dt * x.alpha)));
    f.fixed_view_mut::<1, 2>(ALPHA, MU)
        .copy_from(&(th.transpose() * b_mu * (dt * x.alpha)));

    // ϑ' = ϑ + dT [α(â − g0 g) + (μᵀϑ)ϑ − ŵ × ϑ]
    f.fixed_view_mut::<3, 1>(VARTHETA, ALPHA)
        .copy_from(&((a_hat - g * np.gravity) * dt));
    f.fixed_view_mut::<3, 3>(VARTHETA, VARTHETA).copy_from(
        &(Matrix3::identity() + (Matrix3::identity() * mt + th * mu.transpose() - skew(w_hat)) * dt),
    );
    f.fixed_view_mut::<3, 2>(VARTHETA, MU)
        .copy_from(&(th * th.transpose() * b_mu * dt));
    f.fixed_view_mut::<3, 2>(VARTHETA, GRAV)
        .copy_from(&(b_g * (-dt * x.alpha * np.gravity)));
    f.fixed_view_mut::<3, 3>(VARTHETA, BIAS_ACC)
        .copy_from(&(Matrix3::identity() * (-dt * x.alpha)));
    f.fixed_view_mut::<3, 3>(VARTHETA, BIAS_GYRO)
        .copy_from(&(skew(&th) * -dt));

    for (r, at) in [(&x.mu_s, MU), (&x.g_s, GRAV)] {
        let (f_self, f_w, g_noise) = s2_block(r, w_hat, dt);
        f.fixed_view_mut::<2, 2>(at, at).copy_from(&f_self);
        // ŵ = ω_m − b_ω
        f.fixed_view_mut::<2, 3>(at, BIAS_GYRO).copy_from(&(-f_w));
        gm.fixed_view_mut::<2, 2>(at, at).copy_from(&g_noise);
    }

    (f, gm)
}

/// Initial standard deviations per block: α, ϑ, μ, g, b_a, b_ω.
///
/// The α spread covers a start an order of magnitude off. The tilt prior is
/// tight because a loose one lets the first updates explain the unknown
/// initial ϑ as a gravity tilt, amplified by the large initial α.
pub const DEFAULT_INITIAL_STD: [f64; 6] = [10.0, 1.0, 0.3, 0.05, 0.05, 0.01];

/// Diagonal covariance from per-block standard deviations.
pub fn initial_covariance(std: &[f64; 6]) -> ErrorCovariance {
    let mut d = StateDelta::zeros();
    d[ALPHA] = std[0] * std[0];
    d.fixed_rows_mut::<3>(VARTHETA).fill(std[1] * std[1]);
    d.fixed_rows_mut::<2>(MU).fill(std[2] * std[2]);
    d.fixed_rows_mut::<2>(GRAV).fill(std[3] * std[3]);
    d.fixed_rows_mut::<3>(BIAS_ACC).fill(std[4] * std[4]);
    d.fixed_rows_mut::<3>(BIAS_GYRO).fill(std[5] * std[5]);
    ErrorCovariance::from_diagonal(&d)
}

pub fn default_initial_covariance() -> ErrorCovariance {
    initial_covariance(&DEFAULT_INITIAL_STD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn level_state(alpha: f64, vartheta: Vector3<f64>) -> State {
        State {
            alpha,
            vartheta,
            mu_s: Rotation::identity(),
            g_s: Rotation::identity(),
            b_a: Vector3::zeros(),
            b_w: Vector3::zeros(),
        }
    }

    fn random_state(rng: &mut impl rand::Rng) -> State {
        let mut v = || Vector3::new(rng.random_range(-1.0f64..1.0), rng.random_range(-1.0f64..1.0), rng.random_range(-1.0f64..1.0));
        let (a1, a2, t1, t2) = (v(), v(), v(), v());
        State {
            alpha: 0.5 + t1.x.abs() * 2.0,
            vartheta: v() * 0.8,
            mu_s: Rotation::from_axis_angle(&a1, 0.4 + t1.y.abs()),
            g_s: Rotation::from_axis_angle(&a2, 2.0 + t2.y.abs()),
            b_a: v() * 0.2,
            b_w: v() * 0.05,
        }
    }

    #[test]
    fn correct_imu_subtracts_biases() {
        let mut x = level_state(1.0, Vector3::zeros());
        let s = ImuSample {
            t: 0.0,
            acc: Vector3::new(1.0, 2.0, 3.0),
            gyro: Vector3::new(0.1, 0.2, 0.3),
        };
        let (a, w) = correct_imu(&s, &x);
        assert_eq!(a, s.acc);
        assert_eq!(w, s.gyro);
        x.b_a = Vector3::new(1.0, 2.0, 3.0);
        x.b_w = Vector3::new(0.05, -0.1, 0.0);
        let (a, w) = correct_imu(&s, &x);
        assert_eq!(a, Vector3::zeros());
        assert_eq!(w, Vector3::new(0.1 - 0.05, 0.2 + 0.1, 0.3));
    }

    #[test]
    fn hover_is_equilibrium() {
        let np = NoiseParams::default();
        let x = State {
            g_s: Rotation::from_axis_angle(&Vector3::new(0.3, 1.0, 0.0), 0.4),
            ..level_state(2.0, Vector3::zeros())
        };
        let a_hat = x.g().into_inner() * np.gravity;
        let d = state_derivative(&x, &a_hat, &Vector3::zeros(), &np);
        assert!(d.amax() < 1e-15, "{d}");
    }

    #[test]
    fn vertical_motion_derivative() {
        let np = NoiseParams::default();
        let x = level_state(1.0, Vector3::new(0.0, 0.0, 0.5));
        let a_hat = x.g().into_inner() * np.gravity;
        let d = state_derivative(&x, &a_hat, &Vector3::zeros(), &np);
        assert!((d[ALPHA] - 0.5).abs() < 1e-15);
        let dv = d.fixed_rows::<3>(VARTHETA);
        assert!((dv - Vector3::new(0.0, 0.0, 0.25)).amax() < 1e-15);
    }

    #[test]
    fn derivative_matches_componentwise_formulas() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let np = NoiseParams::default();
        for _ in 0..50 {
            let x = random_state(&mut rng);
            let a = Vector3::new(rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0));
            let w = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let d = state_derivative(&x, &a, &w, &np);
            // oracle: spelled out with rotation matrices and scalar arithmetic
            let rm = x.mu_s.matrix();
            let rg = x.g_s.matrix();
            let (mu, g) = ([rm[(0, 2)], rm[(1, 2)], rm[(2, 2)]], [rg[(0, 2)], rg[(1, 2)], rg[(2, 2)]]);
            let th = [x.vartheta.x, x.vartheta.y, x.vartheta.z];
            let mt = mu[0] * th[0] + mu[1] * th[1] + mu[2] * th[2];
            assert!((d[ALPHA] - x.alpha * mt).abs() < 1e-12);
            let wxt = [w.y * th[2] - w.z * th[1], w.z * th[0] - w.x * th[2], w.x * th[1] - w.y * th[0]];
            for i in 0..3 {
                let expect = x.alpha * (a[i] - np.gravity * g[i]) + mt * th[i] - wxt[i];
                assert!((d[VARTHETA + i] - expect).abs() < 1e-12);
            }
            for (blk, r) in [(MU, &rm), (GRAV, &rg)] {
                for c in 0..2 {
                    let expect = r[(0, c)] * w.x + r[(1, c)] * w.y + r[(2, c)] * w.z;
                    assert!((d[blk + c] - expect).abs() < 1e-12);
                }
            }
            for i in BIAS_ACC..STATE_DIM {
                assert_eq!(d[i], 0.0);
            }
        }
    }

    #[test]
    fn predict_hover_only_adds_process_noise() {
        let np = NoiseParams::default();
        let x = level_state(0.5, Vector3::zeros());
        let p = default_initial_covariance();
        let s = ImuSample {
            t: 0.0,
            acc: x.g().into_inner() * np.gravity,
            gyro: Vector3::zeros(),
        };
        let dt = 0.01;
        let (next, cov) = predict(&x, &p, &s, dt, &np).unwrap();
        assert!((next.alpha - x.alpha).abs() < 1e-15);
        assert!(next.vartheta.amax() < 1e-15);
        assert!((next.mu().into_inner() - x.mu().into_inner()).amax() < 1e-15);
        // with zero motion F is identity except the ϑ-row couplings to g and biases
        let (f, g) = process_jacobians(&x, &s.acc, &Vector3::zeros(), dt, &np);
        let expect = f * p.0 * f.transpose() + g * Matrix14::from_diagonal(&np.process_noise(dt)) * g.transpose();
        assert!((cov.0 - expect).amax() < 1e-15);
        assert!((g - Matrix14::identity()).amax() < 1e-15);
    }

    #[test]
    fn predict_alpha_euler_step() {
        let np = NoiseParams::default();
        let x = level_state(1.0, Vector3::new(0.0, 0.0, 0.5));
        let s = ImuSample { t: 0.0, acc: x.g().into_inner() * np.gravity, gyro: Vector3::zeros() };
        let (next, _) = predict(&x, &default_initial_covariance(), &s, 0.01, &np).unwrap();
        assert!((next.alpha - 1.005).abs() < 1e-15);
    }

    #[test]
    fn predict_rejects_zero_crossing_and_bad_dt() {
        let np = NoiseParams::default();
        let x = level_state(1.0, Vector3::new(0.0, 0.0, -200.0));
        let s = ImuSample { t: 0.0, acc: Vector3::zeros(), gyro: Vector3::zeros() };
        let p = default_initial_covariance();
        assert!(matches!(predict(&x, &p, &s, 0.01, &np), Err(Error::Propagation { .. })));
        assert!(predict(&level_state(1.0, Vector3::zeros()), &p, &s, 0.0, &np).is_err());
    }

    #[test]
    fn bias_rows_of_f_are_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = random_state(&mut rng);
        let (f, _) = process_jacobians(&x, &Vector3::new(0.1, 9.0, 2.0), &Vector3::new(0.4, -0.3, 0.9), 0.01, &NoiseParams::default());
        let rows = f.fixed_rows::<6>(BIAS_ACC);
        let mut expect = SMatrix::<f64, 6, 14>::zeros();
        expect.fixed_view_mut::<6, 6>(0, BIAS_ACC).fill_with_identity();
        assert_eq!(rows.into_owned(), expect);
        let mt = x.mu().dot(&x.vartheta);
        assert!((f[(ALPHA, ALPHA)] - (1.0 + 0.01 * mt)).abs() < 1e-15);
    }

    #[test]
    fn boxplus_boxminus_state_round_trip() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = random_state(&mut rng);
        let mut d = StateDelta::zeros();
        for i in 0..STATE_DIM {
            d[i] = rng.random_range(-0.3..0.3);
        }
        let back = x.boxplus(&d).boxminus(&x).unwrap();
        assert!((back - d).amax() < 1e-12);
    }

    #[test]
    fn floored_covariance_is_psd() {
        let mut m = Matrix14::identity();
        m[(0, 1)] = 2.0;
        m[(1, 0)] = 2.0;
        let c = ErrorCovariance(m);
        assert!(c.min_eigenvalue() < 0.0);
        let f = c.floored().unwrap();
        assert!(f.min_eigenvalue() > -1e-12);
        assert!(ErrorCovariance(Matrix14::identity()).floored().is_none());
    }
}
