//! Dense photometric update.
//!
//! Every reference pixel `p` is moved by the first-order continuous-homography
//! flow over the frame interval `δT`,
//!
//! ```text
//! q = p − δT (1 − p e_zᵀ) H p,    H = M([ŵ]× + ϑ μᵀ) M⁻¹
//! ```
//!
//! and the current frame is sampled at `q`. The residual of a pixel is
//! `I_c(q) − I_r(p)`; it vanishes when brightness is constant and the state
//! is exact. The Kalman gain works in information form so only 14×14 systems
//! are ever factorized, however many pixels contribute.

use nalgebra::{Cholesky, Const, DVector, Dyn, Matrix3, OMatrix, Vector2, Vector3, LU};

use crate::error::{Error, Result};
use crate::image::{CameraIntrinsics, ImageFrame};
use crate::manifold::{left_jacobian, s2_perturbation_basis, skew, tangent_basis, UnitVector3};
use crate::state::{
    ErrorCovariance, Matrix14, State, StateDelta, BIAS_GYRO, GRAV, MU, STATE_DIM, VARTHETA,
};

/// `n × 14` measurement Jacobian.
pub type MeasurementJacobian = OMatrix<f64, Dyn, Const<STATE_DIM>>;
/// `14 × n` Kalman gain.
pub type KalmanGain = OMatrix<f64, Const<STATE_DIM>, Dyn>;

/// Minimum fraction of reference pixels that must map inside the current frame.
pub const MIN_VALID_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyMatrix(pub Matrix3<f64>);

pub fn continuous_homography(
    w_hat: &Vector3<f64>,
    vartheta: &Vector3<f64>,
    mu: &UnitVector3,
    k: &CameraIntrinsics,
) -> HomographyMatrix {
    let a = skew(w_hat) + vartheta * mu.transpose();
    HomographyMatrix(k.matrix() * a * k.inverse_matrix())
}

/// Displaced pixel `p − δT (1 − p e_zᵀ) H p` for `p = (u, v, 1)`. The third
/// coordinate stays exactly 1, so only `(u, v)` is returned.
pub fn warp_point(p: &Vector3<f64>, h: &HomographyMatrix, dt: f64) -> Vector2<f64> {
    let hp = h.0 * p;
    Vector2::new(p.x - dt * (hp.x - p.x * hp.z), p.y - dt * (hp.y - p.y * hp.z))
}

/// Residuals and Jacobian rows of all valid reference pixels.
#[derive(Debug, Clone)]
pub struct ResidualBundle {
    /// `I_c(q) − I_r(p)` for each valid pixel, in row-major pixel order.
    pub residual: DVector<f64>,
    /// Per reference pixel: whether its warped location was sampled.
    pub mask: Vec<bool>,
    /// `∂ residual / ∂ δx`, one row per valid pixel.
    pub jacobian: MeasurementJacobian,
    pub valid: usize,
}

impl ResidualBundle {
    pub fn cost(&self) -> f64 {
        self.residual.norm_squared()
    }
}

/// Everything the per-pixel loop needs, fixed for one evaluation.
struct WarpModel {
    k: CameraIntrinsics,
    h: HomographyMatrix,
    dt: f64,
    mu: Vector3<f64>,
    vartheta: Vector3<f64>,
    mu_basis: nalgebra::Matrix3x2<f64>,
}

impl WarpModel {
    fn new(x: &State, gyro: &Vector3<f64>, dt: f64, k: &CameraIntrinsics) -> Self {
        let w_hat = gyro - x.b_w;
        let mu = x.mu();
        WarpModel {
            k: *k,
            h: continuous_homography(&w_hat, &x.vartheta, &mu, k),
            dt,
            mu: mu.into_inner(),
            vartheta: x.vartheta,
            mu_basis: s2_perturbation_basis(&x.mu_s),
        }
    }

    #[inline]
    fn warp(&self, u: f64, v: f64) -> Vector2<f64> {
        warp_point(&Vector3::new(u, v, 1.0), &self.h, self.dt)
    }

    /// Jacobian row for a pixel at `(u, v)` whose warped sample has image
    /// gradient `(gx, gy)`.
    #[inline]
    fn row(&self, u: f64, v: f64, gx: f64, gy: f64) -> [f64; STATE_DIM] {
        let k = &self.k;
        let ray = k.unproject(u, v);
        // c = ∇Iᵀ · ∂q/∂a where a = ([ŵ]× + ϑμᵀ) M⁻¹p
        let c = Vector3::new(
            -self.dt * gx * k.fx,
            -self.dt * gy * k.fy,
            -self.dt * (gx * (k.cx - u) + gy * (k.cy - v)),
        );
        let mut out = [0.0; STATE_DIM];
        let mu_ray = self.mu.dot(&ray);
        for i in 0..3 {
            out[VARTHETA + i] = c[i] * mu_ray;
        }
        let c_th = c.dot(&self.vartheta);
        let ray_b = self.mu_basis.transpose() * ray;
        out[MU] = c_th * ray_b.x;
        out[MU + 1] = c_th * ray_b.y;
        // ∂a/∂b_ω = [ray]×
        let cb = c.cross(&ray);
        for i in 0..3 {
            out[BIAS_GYRO + i] = cb[i];
        }
        out
    }
}

fn evaluate(
    i_r: &ImageFrame,
    i_c: &ImageFrame,
    x: &State,
    gyro: &Vector3<f64>,
    dt: f64,
    k: &CameraIntrinsics,
    fixed_mask: Option<&[bool]>,
) -> Result<ResidualBundle> {
    check_dims(i_r, i_c, k)?;
    let model = WarpModel::new(x, gyro, dt, k);
    let total = i_r.width * i_r.height;
    let mut mask = vec![false; total];
    let mut residual = Vec::with_capacity(total);
    let mut rows: Vec<[f64; STATE_DIM]> = Vec::with_capacity(total);
    for y in 0..i_r.height {
        for xpix in 0..i_r.width {
            let idx = y * i_r.width + xpix;
            if let Some(m) = fixed_mask {
                if !m[idx] {
                    continue;
                }
            }
            let (u, v) = (xpix as f64, y as f64);
            let q = model.warp(u, v);
            if !i_c.cubic_support(q.x, q.y) {
                if fixed_mask.is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "pixel ({xpix}, {y}) left the support under a fixed mask"
                    )));
                }
                continue;
            }
            let (val, gx, gy) = i_c.sample_cubic(q.x, q.y);
            mask[idx] = true;
            residual.push(val - i_r.data[idx]);
            rows.push(model.row(u, v, gx, gy));
        }
    }
    let valid = residual.len();
    if fixed_mask.is_none() && (valid as f64) < MIN_VALID_FRACTION * total as f64 {
        return Err(Error::MeasurementDegenerate { valid, total });
    }
    let jacobian = MeasurementJacobian::from_fn(valid, |r, c| rows[r][c]);
    Ok(ResidualBundle {
        residual: DVector::from_vec(residual),
        mask,
        jacobian,
        valid,
    })
}

fn check_dims(i_r: &ImageFrame, i_c: &ImageFrame, k: &CameraIntrinsics) -> Result<()> {
    if i_r.width != i_c.width || i_r.height != i_c.height {
        return Err(Error::DimensionMismatch(format!(
            "reference {}x{} vs current {}x{}",
            i_r.width, i_r.height, i_c.width, i_c.height
        )));
    }
    if i_r.width != k.width || i_r.height != k.height {
        return Err(Error::DimensionMismatch(format!(
            "frames {}x{} vs intrinsics {}x{}",
            i_r.width, i_r.height, k.width, k.height
        )));
    }
    Ok(())
}

/// Residual and Jacobian over all reference pixels whose warped location has
/// full interpolation support in `i_c`. `gyro` is the raw gyro rate over the
/// frame interval; the state's gyro bias is subtracted here.
pub fn photometric_residual(
    i_r: &ImageFrame,
    i_c: &ImageFrame,
    x: &State,
    gyro: &Vector3<f64>,
    dt: f64,
    k: &CameraIntrinsics,
) -> Result<ResidualBundle> {
    evaluate(i_r, i_c, x, gyro, dt, k, None)
}

/// Residual restricted to a fixed pixel mask; fails if any masked pixel
/// leaves the sampling support.
pub fn photometric_residual_masked(
    i_r: &ImageFrame,
    i_c: &ImageFrame,
    x: &State,
    gyro: &Vector3<f64>,
    dt: f64,
    k: &CameraIntrinsics,
    mask: &[bool],
) -> Result<DVector<f64>> {
    Ok(evaluate(i_r, i_c, x, gyro, dt, k, Some(mask))?.residual)
}

/// `S = ∂ I_c(q(x)) / ∂ δx` for the pixels selected by `mask`. Columns for
/// `α`, `g` and the accelerometer bias are structurally zero.
pub fn measurement_jacobian(
    i_c: &ImageFrame,
    x: &State,
    gyro: &Vector3<f64>,
    dt: f64,
    k: &CameraIntrinsics,
    mask: &[bool],
) -> Result<MeasurementJacobian> {
    if i_c.width != k.width || i_c.height != k.height || mask.len() != k.width * k.height {
        return Err(Error::DimensionMismatch("frame, intrinsics and mask disagree".into()));
    }
    let model = WarpModel::new(x, gyro, dt, k);
    let mut rows = Vec::new();
    for (idx, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (u, v) = ((idx % k.width) as f64, (idx / k.width) as f64);
        let q = model.warp(u, v);
        if !i_c.cubic_support(q.x, q.y) {
            return Err(Error::InvalidArgument(format!("masked pixel {idx} has no support")));
        }
        let (_, gx, gy) = i_c.sample_cubic(q.x, q.y);
        rows.push(model.row(u, v, gx, gy));
    }
    Ok(MeasurementJacobian::from_fn(rows.len(), |r, c| rows[r][c]))
}

fn invert14(m: &Matrix14) -> Result<Matrix14> {
    if let Some(ch) = Cholesky::new(*m) {
        return Ok(ch.inverse());
    }
    let lu = LU::new(*m);
    lu.try_inverse().ok_or(Error::GainSingular)
}

/// Information matrix `(Lᵀ Σ⁻ L)⁻¹ + Sᵀ S / σ²` and its inverse.
struct GainSystem {
    inverse: Matrix14,
    inv_r: f64,
}

impl GainSystem {
    fn new(l: &Matrix14, sts: &Matrix14, sigma_minus: &ErrorCovariance, sigma_i: f64) -> Result<Self> {
        let prior = l.transpose() * sigma_minus.0 * l;
        let prior_info = invert14(&((prior + prior.transpose()) * 0.5))?;
        let inv_r = 1.0 / (sigma_i * sigma_i);
        let info = prior_info + sts * inv_r;
        let inverse = invert14(&((info + info.transpose()) * 0.5))?;
        if !inverse.iter().all(|v| v.is_finite()) {
            return Err(Error::GainSingular);
        }
        Ok(GainSystem { inverse, inv_r })
    }

    /// `K y` with `y` given as `Sᵀ y`.
    fn apply(&self, st_y: &StateDelta) -> StateDelta {
        self.inverse * st_y * self.inv_r
    }

    /// `K S`.
    fn gain_times_jacobian(&self, sts: &Matrix14) -> Matrix14 {
        self.inverse * sts * self.inv_r
    }
}

/// Gauss-Newton Kalman gain `((Lᵀ Σ⁻ L)⁻¹ + Sᵀ R⁻¹ S)⁻¹ Sᵀ R⁻¹` with
/// `R = σ_I² 1`.
pub fn gn_kalman_gain(
    l: &Matrix14,
    s: &MeasurementJacobian,
    sigma_minus: &ErrorCovariance,
    sigma_i: f64,
) -> Result<KalmanGain> {
    let sts = s.tr_mul(s);
    let sys = GainSystem::new(l, &sts, sigma_minus, sigma_i)?;
    Ok(sys.inverse * s.transpose() * sys.inv_r)
}

/// `∂(x⁻ ⊞ Δ)/∂Δ` at `Δ = e`, with the output expressed in the chart of
/// `x_j` (the current iterate).
pub fn boxplus_jacobian(x_minus: &State, e: &StateDelta, x_j: &State) -> Matrix14 {
    let mut l = Matrix14::identity();
    for (at, base, cur) in [(MU, &x_minus.mu_s, &x_j.mu_s), (GRAV, &x_minus.g_s, &x_j.g_s)] {
        let n_base = tangent_basis(base);
        let rotvec = -(n_base * e.fixed_rows::<2>(at));
        let block = tangent_basis(cur).transpose() * left_jacobian(&rotvec) * n_base;
        l.fixed_view_mut::<2, 2>(at, at).copy_from(&block);
    }
    l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceForm {
    /// `Σ⁻ − K S Lᵀ Σ⁻ L`
    Paper,
    /// `Σ⁻ − K S L Σ⁻`
    Conventional,
}

impl std::str::FromStr for CovarianceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(CovarianceForm::Paper),
            "conventional" => Ok(CovarianceForm::Conventional),
            other => Err(Error::InvalidArgument(format!("unknown covariance form `{other}`"))),
        }
    }
}

impl std::fmt::Display for CovarianceForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceForm::Paper => "paper",
            CovarianceForm::Conventional => "conventional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub max_iters: usize,
    pub term_threshold: f64,
    pub sigma_intensity: f64,
    pub cov_form: CovarianceForm,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig {
            max_iters: 3,
            term_threshold: 0.05,
            sigma_intensity: 0.15,
            cov_form: CovarianceForm::Paper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub state: State,
    pub covariance: ErrorCovariance,
    pub iters: usize,
    pub valid_pixels: usize,
    /// Whether the posterior covariance needed eigenvalue flooring.
    pub floored: bool,
}

/// Iterated update from the prior `(x⁻, Σ⁻)` with the frame pair `(I_r, I_c)`.
#[allow(clippy::too_many_arguments)]
pub fn iterated_update(
    x_minus: &State,
    sigma_minus: &ErrorCovariance,
    i_r: &ImageFrame,
    i_c: &ImageFrame,
    gyro: &Vector3<f64>,
    dt: f64,
    k: &CameraIntrinsics,
    cfg: &UpdateConfig,
) -> Result<UpdateOutcome> {
    if cfg.max_iters == 0 || !(cfg.term_threshold > 0.0) || !(cfg.sigma_intensity > 0.0) {
        return Err(Error::InvalidArgument(format!("bad update config {cfg:?}")));
    }
    let mut x = *x_minus;
    let mut last: Option<(Matrix14, Matrix14, GainSystem)> = None;
    let mut iters = 0;
    let mut valid_pixels = 0;

    for j in 0..cfg.max_iters {
        let bundle = match photometric_residual(i_r, i_c, &x, gyro, dt, k) {
            Ok(b) => b,
            // later iterates that push the view out keep the previous result
            Err(Error::MeasurementDegenerate { .. }) if j > 0 => break,
            Err(e) => return Err(e),
        };
        let (e, l) = if j == 0 {
            (StateDelta::zeros(), Matrix14::identity())
        } else {
            let e = x.boxminus(x_minus)?;
            (e, boxplus_jacobian(x_minus, &e, &x))
        };
        let s = &bundle.jacobian;
        let sts: Matrix14 = s.tr_mul(s);
        let sys = GainSystem::new(&l, &sts, sigma_minus, cfg.sigma_intensity)?;
        let le = l * e;
        // innovation z − h(x) is the negated residual
        let st_y: StateDelta = s.tr_mul(&bundle.residual) * -1.0 + sts * le;
        let delta = sys.apply(&st_y) - le;
        x = x.boxplus(&delta);
        iters = j + 1;
        valid_pixels = bundle.valid;
        last = Some((l, sts, sys));
        if !x.is_finite() {
            return Err(Error::Diverged { last_good_t: i_c.t });
        }
        if delta.norm() < cfg.term_threshold {
            break;
        }
    }

    let (l, sts, sys) = last.expect("at least one iteration ran");
    let ks = sys.gain_times_jacobian(&sts);
    let sig = sigma_minus.0;
    let post = match cfg.cov_form {
        CovarianceForm::Paper => sig - ks * l.transpose() * sig * l,
        CovarianceForm::Conventional => sig - ks * l * sig,
    };
    let mut covariance = ErrorCovariance::symmetrized(post);
    let mut floored = false;
    if covariance.min_eigenvalue() < -1e-9 {
        log::warn!("posterior covariance lost positive semi-definiteness; flooring eigenvalues");
        if let Some(c) = covariance.floored() {
            covariance = c;
            floored = true;
        }
    }
    Ok(UpdateOutcome { state: x, covariance, iters, valid_pixels, floored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Rotation;
    use crate::state::default_initial_covariance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level_state() -> State {
        State {
            alpha: 1.0,
            vartheta: Vector3::zeros(),
            mu_s: Rotation::identity(),
            g_s: Rotation::from_axis_angle(&Vector3::x(), std::f64::consts::PI),
            b_a: Vector3::zeros(),
            b_w: Vector3::zeros(),
        }
    }

    fn textured(w: usize, h: usize, seed: u64) -> ImageFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                0.5 + 0.2 * (0.31 * x + phases[0]).sin() * (0.27 * y + phases[1]).cos()
                    + 0.15 * (0.13 * x - 0.22 * y + phases[2]).sin()
                    + 0.1 * (0.5 * x + 0.4 * y + phases[3]).cos()
            })
            .collect();
        ImageFrame::new(0.0, w, h, data).unwrap()
    }

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(60.0, 60.0, 44.5, 28.5, 90, 58).unwrap()
    }

    #[test]
    fn homography_cases() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap();
        let mu = UnitVector3::new_unchecked(Vector3::z());
        let h = continuous_homography(&Vector3::zeros(), &Vector3::zeros(), &mu, &k);
        assert_eq!(h.0, Matrix3::zeros());
        let h = continuous_homography(&Vector3::zeros(), &Vector3::z(), &mu, &k);
        let mut expect = Matrix3::zeros();
        expect[(2, 2)] = 1.0;
        assert!((h.0 - expect).amax() < 1e-15);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn homography_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = CameraIntrinsics::new(71.0, 65.0, 40.2, 30.1, 80, 60).unwrap();
        for _ in 0..20 {
            let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (w, th, m) = (v(), v(), v());
            let mu = UnitVector3::new_normalize(m).unwrap();
            let h = continuous_homography(&w, &th, &mu, &k);
            // explicit entrywise triple product
            let mm = [[71.0, 0.0, 40.2], [0.0, 65.0, 30.1], [0.0, 0.0, 1.0]];
            let mi = [[1.0 / 71.0, 0.0, -40.2 / 71.0], [0.0, 1.0 / 65.0, -30.1 / 65.0], [0.0, 0.0, 1.0]];
            let wx = [[0.0, -w.z, w.y], [w.z, 0.0, -w.x], [-w.y, w.x, 0.0]];
            let mut a = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    a[r][c] = wx[r][c] + th[r] * mu[c];
                }
            }
            for r in 0..3 {
                for c in 0..3 {
                    let mut s = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            s += mm[r][i] * a[i][j] * mi[j][c];
                        }
                    }
                    assert!((h.0[(r, c)] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn warp_zero_motion_and_zero_interval() {
        let p = Vector3::new(12.5, -3.0, 1.0);
        let zero = HomographyMatrix(Matrix3::zeros());
        assert_eq!(warp_point(&p, &zero, 0.03), Vector2::new(12.5, -3.0));
        let h = HomographyMatrix(Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0));
        assert_eq!(warp_point(&p, &h, 0.0), Vector2::new(12.5, -3.0));
    }

    #[test]
    fn warp_pure_z_rotation() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap();
        let mu = UnitVector3::new_unchecked(Vector3::z());
        let w = 0.7;
        let dt = 0.02;
        let h = continuous_homography(&Vector3::new(0.0, 0.0, w), &Vector3::zeros(), &mu, &k);
        let (u, v) = (0.4, -0.25);
        let q = warp_point(&Vector3::new(u, v, 1.0), &h, dt);
        // Hp = (−w v, w u, 0): flow −Hp = (w v, −w u); e_zᵀHp = 0 so no projector term
        assert!((q.x - (u + v * w * dt)).abs() < 1e-15);
        assert!((q.y - (v - u * w * dt)).abs() < 1e-15);
    }

    #[test]
    fn identical_frames_zero_motion_give_zero_residual() {
        let img = textured(90, 58, 1);
        let b = photometric_residual(&img, &img, &level_state(), &Vector3::zeros(), 1.0 / 30.0, &intrinsics()).unwrap();
        assert!(b.residual.amax() < 1e-12);
        // full mask apart from the bicubic border
        assert_eq!(b.valid, (90 - 3) * (58 - 3));
    }

    #[test]
    fn large_velocity_is_degenerate() {
        let img = textured(90, 58, 1);
        let mut x = level_state();
        x.vartheta = Vector3::new(500.0, 0.0, 0.0);
        let err = photometric_residual(&img, &img, &x, &Vector3::zeros(), 1.0 / 30.0, &intrinsics()).unwrap_err();
        assert!(matches!(err, Error::MeasurementDegenerate { .. }));
    }

    #[test]
    fn uniform_frame_has_zero_jacobian_and_structural_zero_columns() {
        let flat = ImageFrame::constant(0.0, 90, 58, 0.4);
        let mut x = level_state();
        x.vartheta = Vector3::new(0.1, -0.2, 0.05);
        let b = photometric_residual(&flat, &flat, &x, &Vector3::new(0.1, 0.0, 0.2), 0.033, &intrinsics()).unwrap();
        assert!(b.jacobian.amax() < 1e-12);
        let img = textured(90, 58, 4);
        let b = photometric_residual(&img, &img, &x, &Vector3::new(0.1, 0.0, 0.2), 0.033, &intrinsics()).unwrap();
        for col in [0, GRAV, GRAV + 1, 8, 9, 10] {
            assert!(b.jacobian.column(col).iter().all(|&v| v == 0.0));
        }
        let s = measurement_jacobian(&img, &x, &Vector3::new(0.1, 0.0, 0.2), 0.033, &intrinsics(), &b.mask).unwrap();
        assert_eq!(s, b.jacobian);
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> ErrorCovariance {
        let a = Matrix14::from_fn(|_, _| rng.random_range(-1.0..1.0));
        ErrorCovariance::symmetrized(a * a.transpose() * 0.1 + Matrix14::identity() * 0.01)
    }

    #[test]
    fn zero_jacobian_gives_zero_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = MeasurementJacobian::zeros(30);
        let k = gn_kalman_gain(&Matrix14::identity(), &s, &random_spd(&mut rng), 0.05).unwrap();
        assert!(k.amax() < 1e-15);
    }

    #[test]
    fn gn_gain_matches_standard_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [10, 50, 200] {
            let sigma = random_spd(&mut rng);
            let s = MeasurementJacobian::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let k = gn_kalman_gain(&Matrix14::identity(), &s, &sigma, 0.3).unwrap();
            let r = nalgebra::DMatrix::<f64>::identity(n, n) * 0.09;
            let innov = &s * sigma.0 * s.transpose() + r;
            let standard = sigma.0 * s.transpose() * innov.try_inverse().unwrap();
            assert!((k - standard).amax() < 1e-8);
        }
    }

    #[test]
    fn fixed_point_update_is_identity() {
        let img = textured(90, 58, 3);
        let x = level_state();
        let out = iterated_update(
            &x,
            &default_initial_covariance(),
            &img,
            &img,
            &Vector3::zeros(),
            1.0 / 30.0,
            &intrinsics(),
            &UpdateConfig::default(),
        )
        .unwrap();
        assert_eq!(out.state, x);
        assert_eq!(out.iters, 1);
    }

    #[test]
    fn boxplus_jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x_minus = State {
            mu_s: Rotation::from_axis_angle(&Vector3::new(0.2, 0.5, 0.1), 0.3),
            ..level_state()
        };
        let mut e = StateDelta::zeros();
        for i in 0..STATE_DIM {
            e[i] = rng.random_range(-0.2..0.2);
        }
        let x_j = x_minus.boxplus(&e);
        let l = boxplus_jacobian(&x_minus, &e, &x_j);
        let h = 1e-6;
        for c in 0..STATE_DIM {
            let mut dp = e;
            dp[c] += h;
            let mut dm = e;
            dm[c] -= h;
            let col = (x_minus.boxplus(&dp).boxminus(&x_j).unwrap() - x_minus.boxplus(&dm).boxminus(&x_j).unwrap()) / (2.0 * h);
            assert!((col - l.column(c)).amax() < 1e-8, "column {c}");
        }
    }
}
