//! Synthetic planar scenes: trajectories, rendered views, IMU streams and
//! ground-truth states.

pub mod render;
pub mod texture;
pub mod trajectory;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::CameraIntrinsics;
use crate::io::{ns_from_time, time_from_ns, Dataset, StampedState};
use crate::manifold::{Rotation, UnitVector3};
use crate::state::{ImuSample, State, StateDelta, G0};

pub use render::{quantize, render_view, warp_consistency, ConsistencyStats, PlaneSpec};
pub use texture::{TextureKind, TextureSpec};
pub use trajectory::{synthesize_trajectory, MotionProfile, Pose, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration: f64,
    pub imu_rate: f64,
    pub cam_rate: f64,
    pub seed: u64,
    pub profile: MotionProfile,
    /// Side of the cube the camera centre stays in (m).
    pub volume: f64,
    /// Distance from the trajectory centre to the plane (m).
    pub altitude: f64,
    pub inclination_deg: f64,
    pub texture: TextureKind,
    pub texture_scale: f64,
    pub contrast: f64,
    pub intrinsics: CameraIntrinsics,
    pub supersample: usize,
    pub gravity: f64,
    /// Continuous-time white-noise densities, per √Hz.
    pub acc_noise_density: f64,
    pub gyro_noise_density: f64,
    pub bias_acc: Vector3<f64>,
    pub bias_gyro: Vector3<f64>,
    /// Standard deviations of a per-frame `gain · I + offset` perturbation.
    pub gain_jitter: f64,
    pub offset_jitter: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 10.0,
            imu_rate: 100.0,
            cam_rate: 30.0,
            seed: 1,
            profile: MotionProfile::LowSpeed,
            volume: 0.8,
            altitude: 1.0,
            inclination_deg: 0.0,
            texture: TextureKind::RandomField,
            texture_scale: 0.2,
            contrast: 0.8,
            intrinsics: CameraIntrinsics { fx: 60.0, fy: 60.0, cx: 44.5, cy: 28.5, width: 90, height: 58 },
            supersample: 3,
            gravity: G0,
            acc_noise_density: 0.004,
            gyro_noise_density: 3e-4,
            bias_acc: Vector3::new(0.03, -0.02, 0.05),
            bias_gyro: Vector3::new(0.002, -0.001, 0.0015),
            gain_jitter: 0.0,
            offset_jitter: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("imu_rate", self.imu_rate),
            ("cam_rate", self.cam_rate),
            ("volume", self.volume),
            ("altitude", self.altitude),
            ("texture_scale", self.texture_scale),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("acc_noise_density", self.acc_noise_density),
            ("gyro_noise_density", self.gyro_noise_density),
            ("gain_jitter", self.gain_jitter),
            ("offset_jitter", self.offset_jitter),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.inclination_deg.abs() < 60.0) {
            return Err(Error::InvalidArgument(format!("inclination {} deg out of range", self.inclination_deg)));
        }
        if self.supersample == 0 {
            return Err(Error::InvalidArgument("supersample must be at least 1".into()));
        }
        self.texture_spec().validate()?;
        self.intrinsics.validate()
    }

    pub fn texture_spec(&self) -> TextureSpec {
        TextureSpec { kind: self.texture, scale: self.texture_scale, contrast: self.contrast, seed: self.seed }
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.altitude)
    }

    pub fn plane(&self) -> PlaneSpec {
        PlaneSpec::inclined(self.inclination_deg, &self.center(), self.altitude)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        synthesize_trajectory(self.profile, self.center(), self.volume, self.altitude, self.duration, self.seed)
    }

    fn sample_times(&self, rate: f64) -> Vec<f64> {
        let n = (self.duration * rate).round() as usize;
        (0..n).map(|k| k as f64 / rate).collect()
    }

    pub fn imu_times(&self) -> Vec<f64> {
        self.sample_times(self.imu_rate)
    }

    /// Frame times, snapped to the nanosecond grid of the image file names.
    pub fn frame_times(&self) -> Vec<f64> {
        self.sample_times(self.cam_rate).into_iter().map(|t| time_from_ns(ns_from_time(t))).collect()
    }
}

// independent random streams derived from the one user seed
const IMU_STREAM: u64 = 0x1D0_5EED;
const PHOTO_STREAM: u64 = 0xF0_70;

/// Biased, noisy IMU samples along `traj` at the configured rate.
pub fn synthesize_imu(traj: &Trajectory, cfg: &SimConfig) -> Result<Vec<ImuSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ IMU_STREAM);
    let sa = cfg.acc_noise_density * cfg.imu_rate.sqrt();
    let sw = cfg.gyro_noise_density * cfg.imu_rate.sqrt();
    let na = Normal::new(0.0, sa).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let nw = Normal::new(0.0, sw).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut draw = |d: &Normal<f64>| Vector3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
    Ok(cfg
        .imu_times()
        .into_iter()
        .map(|t| {
            let acc = traj.specific_force(t, cfg.gravity) + cfg.bias_acc + draw(&na);
            let gyro = traj.body_rate(t) + cfg.bias_gyro + draw(&nw);
            ImuSample { t, acc, gyro }
        })
        .collect())
}

/// Exact filter state at time `t`.
pub fn ground_truth_state(
    traj: &Trajectory,
    plane: &PlaneSpec,
    t: f64,
    b_a: &Vector3<f64>,
    b_w: &Vector3<f64>,
) -> Result<State> {
    let c = traj.position(t);
    let d = plane.distance(&c);
    if !(d > 0.0) {
        return Err(Error::RenderGeometry { t, reason: format!("camera is {d} m from the plane") });
    }
    let to_cam = traj.orientation(t).inverse();
    let mu = UnitVector3::new_normalize(-to_cam.act(&plane.normal))?;
    let g = UnitVector3::new_normalize(to_cam.act(&Vector3::z()))?;
    Ok(State {
        alpha: 1.0 / d,
        vartheta: to_cam.act(&traj.velocity(t)) / d,
        mu_s: Rotation::with_z_axis(&mu),
        g_s: Rotation::with_z_axis(&g),
        b_a: *b_a,
        b_w: *b_w,
    })
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub trajectory: Trajectory,
    pub plane: PlaneSpec,
}

/// Full synthetic dataset: IMU stream, 8-bit frames and per-frame ground truth.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let traj = cfg.trajectory()?;
    let plane = cfg.plane();
    let tex = cfg.texture_spec();
    let imu = synthesize_imu(&traj, cfg)?;
    let mut photo = ChaCha8Rng::seed_from_u64(cfg.seed ^ PHOTO_STREAM);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut frames = Vec::new();
    let mut ground_truth = Vec::new();
    for t in cfg.frame_times() {
        let mut frame = render_view(&tex, &plane, &traj.pose(t), &cfg.intrinsics, cfg.supersample, t)?;
        if cfg.gain_jitter > 0.0 || cfg.offset_jitter > 0.0 {
            let gain = 1.0 + cfg.gain_jitter * unit.sample(&mut photo);
            let offset = cfg.offset_jitter * unit.sample(&mut photo);
            frame = frame.with_gain_offset(gain, offset);
        }
        frames.push(quantize(&frame));
        let state = ground_truth_state(&traj, &plane, t, &cfg.bias_acc, &cfg.bias_gyro)?;
        ground_truth.push(StampedState { t, state, variance: StateDelta::zeros() });
    }
    Ok(SimOutput {
        dataset: Dataset { intrinsics: cfg.intrinsics, imu, frames, ground_truth: Some(ground_truth) },
        trajectory: traj,
        plane,
    })
}
