//! Error statistics of an estimate stream against ground truth.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::io::{StampedState, UpdateStats};

/// Altitude error below which the filter counts as converged (m).
pub const CONVERGENCE_TOLERANCE: f64 = 0.1;
/// How long the error must stay below the tolerance (s).
pub const CONVERGENCE_HOLD: f64 = 1.0;

/// Angle between two directions via the clamped arccosine of their
/// normalized dot product (deg).
pub fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Ground truth resampled at one estimate time.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Truth {
    distance: f64,
    velocity: Vector3<f64>,
    mu: Vector3<f64>,
    g: Vector3<f64>,
}

fn truth_of(s: &StampedState) -> Truth {
    Truth {
        distance: s.state.distance(),
        velocity: s.state.velocity(),
        mu: s.state.mu().into_inner(),
        g: s.state.g().into_inner(),
    }
}

/// Linear interpolation of distance and velocity, normalized linear
/// interpolation of the unit vectors. `None` outside the truth's span.
fn interpolate(gt: &[StampedState], t: f64) -> Option<Truth> {
    let first = gt.first()?;
    let last = gt.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let i = gt.partition_point(|s| s.t <= t);
    if i == 0 || gt[i - 1].t == t {
        return Some(truth_of(&gt[i.saturating_sub(1)]));
    }
    let (a, b) = (truth_of(&gt[i - 1]), truth_of(&gt[i]));
    let w = (t - gt[i - 1].t) / (gt[i].t - gt[i - 1].t);
    let lerp = |x: &Vector3<f64>, y: &Vector3<f64>| x * (1.0 - w) + y * w;
    Some(Truth {
        distance: a.distance * (1.0 - w) + b.distance * w,
        velocity: lerp(&a.velocity, &b.velocity),
        mu: lerp(&a.mu, &b.mu).normalize(),
        g: lerp(&a.g, &b.g).normalize(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Start of the RMSE window (s).
    pub window_start: f64,
    pub samples: usize,
    pub altitude_rmse_cm: f64,
    pub velocity_rmse_cm_s: [f64; 3],
    pub velocity_norm_rmse_cm_s: f64,
    /// `(t, deg)` for every estimate with ground truth.
    pub normal_angle_trace_deg: Vec<(f64, f64)>,
    pub normal_angle_mean_deg: f64,
    pub gravity_angle_mean_deg: f64,
    /// Mean angle between the estimated plane normal and estimated up
    /// direction, against the same from ground truth.
    pub inclination_mean_deg: f64,
    pub true_inclination_mean_deg: f64,
    /// Earliest time after which the altitude error stays below 10 cm for 1 s.
    pub convergence_time: Option<f64>,
    pub mean_update_ms: Option<f64>,
    /// `histogram[i]` counts frames whose update ran `i` iterations.
    pub iteration_histogram: Vec<usize>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Inclination implied by a state: angle between `μ` and `−g`.
fn inclination(mu: &Vector3<f64>, g: &Vector3<f64>) -> f64 {
    angle_deg(mu, &-g)
}

pub fn evaluate(
    estimates: &[StampedState],
    ground_truth: &[StampedState],
    stats: Option<&[UpdateStats]>,
    skip_seconds: f64,
) -> Result<EvalReport> {
    if !(skip_seconds >= 0.0) {
        return Err(Error::InvalidArgument(format!("skip_seconds = {skip_seconds}")));
    }
    let paired: Vec<(&StampedState, Truth)> =
        estimates.iter().filter_map(|e| interpolate(ground_truth, e.t).map(|g| (e, g))).collect();
    if paired.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    // the first frame only seeds the reference; updates start with the second
    let first_update = match stats {
        Some(s) => s.iter().find(|r| r.iters > 0).map(|r| r.t),
        None => estimates.get(1).map(|e| e.t),
    }
    .unwrap_or(estimates[0].t);
    let window_start = first_update + skip_seconds;

    let alt_err = |(e, g): &(&StampedState, Truth)| e.state.distance() - g.distance;
    let window: Vec<_> = paired.iter().filter(|(e, _)| e.t >= window_start).collect();
    let rms = |f: &dyn Fn(&(&StampedState, Truth)) -> f64| {
        if window.is_empty() {
            f64::NAN
        } else {
            (window.iter().map(|p| f(p).powi(2)).sum::<f64>() / window.len() as f64).sqrt()
        }
    };
    let vel_err = |(e, g): &(&StampedState, Truth), i: usize| e.state.velocity()[i] - g.velocity[i];
    let velocity_rmse_cm_s = [0, 1, 2].map(|i| 100.0 * rms(&|p| vel_err(p, i)));
    let velocity_norm_rmse_cm_s =
        100.0 * rms(&|(e, g)| (e.state.velocity() - g.velocity).norm());

    let normal_angle_trace_deg: Vec<(f64, f64)> =
        paired.iter().map(|(e, g)| (e.t, angle_deg(e.state.mu().as_vector(), &g.mu))).collect();
    let in_window = |t: f64| t >= window_start;
    let normal_angle_mean_deg = mean(normal_angle_trace_deg.iter().filter(|(t, _)| in_window(*t)).map(|p| p.1));
    let gravity_angle_mean_deg =
        mean(window.iter().map(|(e, g)| angle_deg(e.state.g().as_vector(), &g.g)));
    let inclination_mean_deg =
        mean(window.iter().map(|(e, _)| inclination(e.state.mu().as_vector(), e.state.g().as_vector())));
    let true_inclination_mean_deg = mean(window.iter().map(|(_, g)| inclination(&g.mu, &g.g)));

    // earliest t_i whose following second of estimates all lie within tolerance
    let last_t = paired.last().map(|p| p.0.t).unwrap_or(f64::NAN);
    let convergence_time = paired.iter().enumerate().find_map(|(i, p)| {
        let t = p.0.t;
        let held = t + CONVERGENCE_HOLD <= last_t
            && paired[i..]
                .iter()
                .take_while(|q| q.0.t <= t + CONVERGENCE_HOLD)
                .all(|q| alt_err(q).abs() < CONVERGENCE_TOLERANCE);
        held.then_some(t)
    });

    let (mean_update_ms, iteration_histogram) = match stats {
        Some(s) => {
            let updated: Vec<_> = s.iter().filter(|r| r.iters > 0).collect();
            let m = (!updated.is_empty()).then(|| mean(updated.iter().map(|r| r.update_ms)));
            let max_it = s.iter().map(|r| r.iters).max().unwrap_or(0);
            let mut h = vec![0; max_it + 1];
            for r in s {
                h[r.iters] += 1;
            }
            (m, h)
        }
        None => (None, Vec::new()),
    };

    Ok(EvalReport {
        window_start,
        samples: window.len(),
        altitude_rmse_cm: 100.0 * rms(&alt_err),
        velocity_rmse_cm_s,
        velocity_norm_rmse_cm_s,
        normal_angle_trace_deg,
        normal_angle_mean_deg,
        gravity_angle_mean_deg,
        inclination_mean_deg,
        true_inclination_mean_deg,
        convergence_time,
        mean_update_ms,
        iteration_histogram,
    })
}

impl EvalReport {
    /// `metric,value` lines; the angle trace is summarized by its mean.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k},{v}");
        };
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "none".into());
        kv("window_start_s", format!("{:.6}", self.window_start));
        kv("samples", self.samples.to_string());
        kv("altitude_rmse_cm", format!("{:.6}", self.altitude_rmse_cm));
        kv("velocity_rmse_x_cm_s", format!("{:.6}", self.velocity_rmse_cm_s[0]));
        kv("velocity_rmse_y_cm_s", format!("{:.6}", self.velocity_rmse_cm_s[1]));
        kv("velocity_rmse_z_cm_s", format!("{:.6}", self.velocity_rmse_cm_s[2]));
        kv("velocity_norm_rmse_cm_s", format!("{:.6}", self.velocity_norm_rmse_cm_s));
        kv("normal_angle_mean_deg", format!("{:.6}", self.normal_angle_mean_deg));
        kv("gravity_angle_mean_deg", format!("{:.6}", self.gravity_angle_mean_deg));
        kv("inclination_mean_deg", format!("{:.6}", self.inclination_mean_deg));
        kv("true_inclination_mean_deg", format!("{:.6}", self.true_inclination_mean_deg));
        kv("convergence_time_s", opt(self.convergence_time));
        kv("mean_update_ms", opt(self.mean_update_ms));
        let hist: Vec<String> = self.iteration_histogram.iter().map(|c| c.to_string()).collect();
        kv("iteration_histogram", hist.join(" "));
        s
    }
}
