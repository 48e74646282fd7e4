//! Numerical self-checks: finite-difference Jacobian oracles, the
//! information-form gain against the textbook gain, and boxplus round trips.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::{CameraIntrinsics, ImageFrame};
use crate::manifold::{boxminus_s2, boxplus_s2, Rotation, TangentDelta2, UnitVector3};
use crate::measurement::{gn_kalman_gain, photometric_residual, photometric_residual_masked, MeasurementJacobian};
use crate::sim::{render_view, PlaneSpec, Pose, TextureKind, TextureSpec};
use crate::state::{
    correct_imu, process_jacobians, propagate_state, ErrorCovariance, ImuSample, Matrix14, NoiseParams, State,
    StateDelta, STATE_DIM,
};

pub const F_TOLERANCE: f64 = 1e-4;
pub const G_TOLERANCE: f64 = 1e-4;
pub const S_TOLERANCE: f64 = 1e-3;
pub const GAIN_TOLERANCE: f64 = 1e-8;
pub const BOXPLUS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &str, max_error: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), max_error, threshold, pass: max_error.is_finite() && max_error < threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestOptions {
    pub seed: u64,
    pub jacobian_samples: usize,
    pub boxplus_samples: usize,
    /// Adds a value to one entry of every analytic `F` before comparison.
    pub perturb_f: Option<(usize, usize, f64)>,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { seed: 0, jacobian_samples: 100, boxplus_samples: 10_000, perturb_f: None }
    }
}

/// `‖A − B‖_F / ‖B‖_F`, falling back to the absolute difference when the
/// reference vanishes.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff = analytic.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    if scale > 1e-12 {
        diff / scale
    } else {
        diff
    }
}

fn uniform3(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = uniform3(rng, 1.0);
    Rotation::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI))
}

/// Random state with the plane roughly in front and gravity roughly along it.
pub fn random_state(rng: &mut ChaCha8Rng) -> State {
    let mu = UnitVector3::new_normalize(Vector3::new(0.0, 0.0, 1.0) + uniform3(rng, 0.4)).expect("nonzero");
    let g = UnitVector3::new_normalize(Vector3::new(0.0, 0.0, -1.0) + uniform3(rng, 0.4)).expect("nonzero");
    // random roll of the tangent frame about the unit vector
    let roll = |rng: &mut ChaCha8Rng| Rotation::from_axis_angle(&Vector3::z(), rng.random_range(-3.0..3.0));
    State {
        alpha: rng.random_range(0.4..3.0),
        vartheta: uniform3(rng, 0.6),
        mu_s: Rotation::with_z_axis(&mu).compose(&roll(rng)),
        g_s: Rotation::with_z_axis(&g).compose(&roll(rng)),
        b_a: uniform3(rng, 0.2),
        b_w: uniform3(rng, 0.02),
    }
}

fn random_imu(rng: &mut ChaCha8Rng) -> ImuSample {
    ImuSample { t: 0.0, acc: Vector3::new(0.0, 0.0, -9.8) + uniform3(rng, 3.0), gyro: uniform3(rng, 1.5) }
}

/// Central differences of `f(δ) ⊟ f(0)` in each error-state direction.
fn fd_columns(f: impl Fn(&StateDelta) -> State, h: f64) -> Result<Matrix14> {
    let base = f(&StateDelta::zeros());
    let mut j = Matrix14::zeros();
    for c in 0..STATE_DIM {
        let mut d = StateDelta::zeros();
        d[c] = h;
        let plus = f(&d).boxminus(&base)?;
        let minus = f(&-d).boxminus(&base)?;
        j.set_column(c, &((plus - minus) / (2.0 * h)));
    }
    Ok(j)
}

pub fn check_process_jacobians(opts: &SelftestOptions) -> Result<(CheckResult, CheckResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xF);
    let np = NoiseParams::default();
    let (mut worst_f, mut worst_g) = (0.0f64, 0.0f64);
    for _ in 0..opts.jacobian_samples {
        let x = random_state(&mut rng);
        let imu = random_imu(&mut rng);
        let dt = rng.random_range(0.002..0.02);
        let (a, w) = correct_imu(&imu, &x);
        let (mut f, g) = process_jacobians(&x, &a, &w, dt, &np);
        if let Some((r, c, v)) = opts.perturb_f {
            f[(r, c)] += v;
        }
        let zero = StateDelta::zeros();
        let fd_f = fd_columns(
            |d| {
                let xp = x.boxplus(d);
                let (a, w) = correct_imu(&imu, &xp);
                propagate_state(&xp, &a, &w, dt, &np, &zero)
            },
            1e-6,
        )?;
        let fd_g = fd_columns(|n| propagate_state(&x, &a, &w, dt, &np, n), 1e-6)?;
        worst_f = worst_f.max(relative_error(f.as_slice(), fd_f.as_slice()));
        worst_g = worst_g.max(relative_error(g.as_slice(), fd_g.as_slice()));
    }
    Ok((
        CheckResult::new("process_jacobian_F", worst_f, F_TOLERANCE),
        CheckResult::new("noise_jacobian_G", worst_g, G_TOLERANCE),
    ))
}

/// Smooth textured frame pair for measurement checks.
pub fn synthetic_frames(seed: u64, k: &CameraIntrinsics) -> Result<(ImageFrame, ImageFrame)> {
    let tex = TextureSpec { kind: TextureKind::RandomField, scale: 0.25, contrast: 0.8, seed };
    let plane = PlaneSpec::new(Vector3::z(), 0.0)?;
    let down = crate::sim::trajectory::base_orientation();
    let r = Pose { position: Vector3::new(0.0, 0.0, 1.0), orientation: down };
    let c = Pose {
        position: Vector3::new(0.01, -0.005, 0.995),
        orientation: down.compose(&Rotation::from_axis_angle(&Vector3::new(0.3, 0.2, 1.0), 0.01)),
    };
    Ok((render_view(&tex, &plane, &r, k, 2, 0.0)?, render_view(&tex, &plane, &c, k, 2, 1.0 / 30.0)?))
}

pub fn check_measurement_jacobian(opts: &SelftestOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5);
    let k = CameraIntrinsics::new(60.0, 60.0, 44.5, 28.5, 90, 58)?;
    let (i_r, i_c) = synthetic_frames(opts.seed, &k)?;
    let dt = 1.0 / 30.0;
    let mut worst = 0.0f64;
    for _ in 0..opts.jacobian_samples {
        let x = random_state(&mut rng);
        let gyro = uniform3(&mut rng, 1.0);
        let bundle = photometric_residual(&i_r, &i_c, &x, &gyro, dt, &k)?;
        // shrink the mask so small perturbations cannot push pixels off-support
        let mut mask = bundle.mask.clone();
        let inner = |i: usize| {
            let (u, v) = (i % k.width, i / k.width);
            u >= 4 && v >= 4 && u + 6 < k.width && v + 6 < k.height
        };
        mask.iter_mut().enumerate().for_each(|(i, m)| *m &= inner(i));
        let rows: Vec<usize> = bundle
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        let kept: Vec<usize> = rows.iter().enumerate().filter(|(_, &i)| mask[i]).map(|(r, _)| r).collect();
        let analytic = MeasurementJacobian::from_fn(kept.len(), |r, c| bundle.jacobian[(kept[r], c)]);
        let h = 1e-6;
        let mut fd = MeasurementJacobian::zeros(kept.len());
        for c in 0..STATE_DIM {
            let mut d = StateDelta::zeros();
            d[c] = h;
            let plus = photometric_residual_masked(&i_r, &i_c, &x.boxplus(&d), &gyro, dt, &k, &mask)?;
            let minus = photometric_residual_masked(&i_r, &i_c, &x.boxplus(&-d), &gyro, dt, &k, &mask)?;
            fd.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        worst = worst.max(relative_error(analytic.as_slice(), fd.as_slice()));
    }
    Ok(CheckResult::new("measurement_jacobian_S", worst, S_TOLERANCE))
}

fn random_spd(rng: &mut ChaCha8Rng) -> ErrorCovariance {
    let a = Matrix14::from_fn(|_, _| rng.random_range(-1.0..1.0));
    ErrorCovariance::symmetrized(a * a.transpose() * 0.1 + Matrix14::identity() * 0.01)
}

pub fn check_gain_equivalence(opts: &SelftestOptions) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for n in [10usize, 50, 200] {
        for s in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(1000) + 31 * n as u64 + s);
            let sigma = random_spd(&mut rng);
            let jac = MeasurementJacobian::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let sigma_i = rng.random_range(0.05..1.0);
            let k = gn_kalman_gain(&Matrix14::identity(), &jac, &sigma, sigma_i)?;
            let r = DMatrix::<f64>::identity(n, n) * sigma_i * sigma_i;
            let innov = &jac * sigma.0 * jac.transpose() + r;
            let inv = innov.cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::zeros(n, n));
            let textbook = sigma.0 * jac.transpose() * inv;
            worst = worst.max((k - textbook).amax());
        }
    }
    Ok(CheckResult::new("gauss_newton_gain", worst, GAIN_TOLERANCE))
}

pub fn check_boxplus_round_trip(opts: &SelftestOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xB0);
    let mut worst = 0.0f64;
    for _ in 0..opts.boxplus_samples {
        let r = random_rotation(&mut rng);
        // uniform in the unit disc
        let (rad, ang) = (rng.random_range(0.0f64..1.0).sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
        let d = TangentDelta2::new(rad * ang.cos(), rad * ang.sin());
        let back = boxminus_s2(&boxplus_s2(&r, &d), &r)?;
        worst = worst.max((back.0 - d.0).amax());
    }
    Ok(CheckResult::new("s2_boxplus_round_trip", worst, BOXPLUS_TOLERANCE))
}

pub fn run_selftest(opts: &SelftestOptions) -> Result<Vec<CheckResult>> {
    let (f, g) = check_process_jacobians(opts)?;
    Ok(vec![
        f,
        g,
        check_measurement_jacobian(opts)?,
        check_gain_equivalence(opts)?,
        check_boxplus_round_trip(opts)?,
    ])
}

pub fn format_report(results: &[CheckResult]) -> String {
    let mut s = String::from("check,max_error,threshold,verdict\n");
    for r in results {
        s += &format!("{},{:.3e},{:.1e},{}\n", r.name, r.max_error, r.threshold, if r.pass { "PASS" } else { "FAIL" });
    }
    s
}
