//! Streaming filter: IMU samples drive prediction, each camera frame is
//! aligned against the previous one.

use std::time::Instant;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::image::{downsample_image, CameraIntrinsics, ImageFrame};
use crate::io::{Dataset, RunConfig, StampedState, UpdateStats};
use crate::measurement::{iterated_update, UpdateConfig};
use crate::state::{predict, ErrorCovariance, ImuSample, NoiseParams, State};

/// Inverse distance outside this open interval counts as divergence.
pub const ALPHA_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub t: f64,
    /// 0 when the frame only became the reference or the update was skipped.
    pub iters: usize,
    pub update_ms: f64,
    pub valid_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    state: State,
    cov: ErrorCovariance,
    noise: NoiseParams,
    update: UpdateConfig,
    intrinsics: CameraIntrinsics,
    t: Option<f64>,
    last_imu: Option<ImuSample>,
    reference: Option<ImageFrame>,
    gyro_integral: Vector3<f64>,
    gyro_span: f64,
    last_good_t: f64,
}

impl Estimator {
    pub fn new(
        state: State,
        cov: ErrorCovariance,
        noise: NoiseParams,
        update: UpdateConfig,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        noise.validate()?;
        intrinsics.validate()?;
        if !state.is_finite() || !cov.is_finite() || state.alpha <= 0.0 {
            return Err(Error::InvalidArgument("initial state or covariance invalid".into()));
        }
        Ok(Estimator {
            state,
            cov,
            noise,
            update,
            intrinsics,
            t: None,
            last_imu: None,
            reference: None,
            gyro_integral: Vector3::zeros(),
            gyro_span: 0.0,
            last_good_t: f64::NAN,
        })
    }

    pub fn from_config(cfg: &RunConfig, intrinsics: CameraIntrinsics) -> Result<Self> {
        Self::new(cfg.initial_state()?, cfg.initial_covariance(), cfg.noise, cfg.update_config(), intrinsics)
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn covariance(&self) -> &ErrorCovariance {
        &self.cov
    }

    pub fn time(&self) -> Option<f64> {
        self.t
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn stamped(&self) -> StampedState {
        StampedState { t: self.t.unwrap_or(0.0), state: self.state, variance: self.cov.diagonal() }
    }

    fn diverged(&self) -> Error {
        Error::Diverged { last_good_t: self.last_good_t }
    }

    fn check_health(&mut self) -> Result<()> {
        let a = self.state.alpha;
        if !self.state.is_finite() || !self.cov.is_finite() || !(a > ALPHA_RANGE.0 && a < ALPHA_RANGE.1) {
            return Err(self.diverged());
        }
        self.last_good_t = self.t.unwrap_or(f64::NAN);
        Ok(())
    }

    fn check_order(&self, t: f64) -> Result<()> {
        match self.t {
            Some(now) if t < now => Err(Error::InvalidArgument(format!(
                "measurement at t = {t} arrived after the filter reached t = {now}"
            ))),
            _ if !t.is_finite() => Err(Error::InvalidArgument("non-finite timestamp".into())),
            _ => Ok(()),
        }
    }

    /// Predicts up to `t` holding the last IMU sample constant.
    fn propagate_to(&mut self, t: f64) -> Result<()> {
        let Some(now) = self.t else {
            self.t = Some(t);
            return Ok(());
        };
        let dt = t - now;
        if dt <= 0.0 {
            return Ok(());
        }
        if let Some(imu) = self.last_imu {
            let (x, p) = predict(&self.state, &self.cov, &imu, dt, &self.noise).map_err(|e| match e {
                Error::Propagation { .. } => self.diverged(),
                other => other,
            })?;
            self.state = x;
            self.cov = p;
            self.gyro_integral += imu.gyro * dt;
            self.gyro_span += dt;
        }
        self.t = Some(t);
        self.check_health()
    }

    pub fn push_imu(&mut self, s: &ImuSample) -> Result<()> {
        self.check_order(s.t)?;
        self.propagate_to(s.t)?;
        self.last_imu = Some(*s);
        Ok(())
    }

    /// Predicts to the frame time and, if a reference frame exists, runs the
    /// iterated update against it. The frame then becomes the reference.
    pub fn push_frame(&mut self, frame: &ImageFrame) -> Result<FrameOutcome> {
        self.check_order(frame.t)?;
        if frame.width != self.intrinsics.width || frame.height != self.intrinsics.height {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{} vs intrinsics {}x{}",
                frame.width, frame.height, self.intrinsics.width, self.intrinsics.height
            )));
        }
        self.propagate_to(frame.t)?;
        let mut out = FrameOutcome { t: frame.t, iters: 0, update_ms: 0.0, valid_pixels: 0 };
        if let Some(reference) = self.reference.take() {
            let dt = frame.t - reference.t;
            if dt > 0.0 {
                let gyro = if self.gyro_span > 0.0 {
                    self.gyro_integral / self.gyro_span
                } else {
                    self.last_imu.map(|s| s.gyro).unwrap_or_default()
                };
                let start = Instant::now();
                let result = iterated_update(
                    &self.state,
                    &self.cov,
                    &reference,
                    frame,
                    &gyro,
                    dt,
                    &self.intrinsics,
                    &self.update,
                );
                out.update_ms = start.elapsed().as_secs_f64() * 1e3;
                match result {
                    Ok(u) => {
                        log::debug!(
                            "t = {}: {} iters, alpha {} -> {}",
                            frame.t,
                            u.iters,
                            self.state.alpha,
                            u.state.alpha
                        );
                        self.state = u.state;
                        self.cov = u.covariance;
                        out.iters = u.iters;
                        out.valid_pixels = u.valid_pixels;
                    }
                    Err(Error::MeasurementDegenerate { valid, total }) => {
                        log::warn!("t = {}: only {valid} of {total} pixels usable; update skipped", frame.t);
                    }
                    Err(Error::Diverged { .. }) => return Err(self.diverged()),
                    Err(e) => return Err(e),
                }
                self.check_health()?;
            }
        }
        self.reference = Some(frame.clone());
        self.gyro_integral = Vector3::zeros();
        self.gyro_span = 0.0;
        Ok(out)
    }
}

/// Brings frames to the processing size, shrinking intrinsics to match.
pub fn prepare_frames(ds: &Dataset, width: usize, height: usize) -> Result<(Vec<ImageFrame>, CameraIntrinsics)> {
    let k = ds.intrinsics;
    if (k.width, k.height) == (width, height) {
        return Ok((ds.frames.clone(), k));
    }
    let frames = ds.frames.iter().map(|f| downsample_image(f, width, height)).collect::<Result<_>>()?;
    Ok((frames, k.resized(width, height)))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// One row per processed frame.
    pub estimates: Vec<StampedState>,
    pub stats: Vec<UpdateStats>,
    /// Set when the filter diverged; holds the last good timestamp.
    pub diverged_at: Option<f64>,
}

/// Replays a dataset in timestamp order: every IMU sample with `t` at or
/// before a frame is applied before that frame's update.
pub fn run_dataset(ds: &Dataset, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (frames, k) = prepare_frames(ds, cfg.image_width, cfg.image_height)?;
    let mut est = Estimator::from_config(cfg, k)?;
    let mut out = RunOutput { estimates: Vec::with_capacity(frames.len()), stats: Vec::new(), diverged_at: None };
    let mut imu = ds.imu.iter().peekable();
    for frame in &frames {
        let mut step = || -> Result<FrameOutcome> {
            while let Some(s) = imu.next_if(|s| s.t <= frame.t) {
                est.push_imu(s)?;
            }
            debug_assert!(imu.peek().is_none_or(|s| s.t > frame.t));
            est.push_frame(frame)
        };
        match step() {
            Ok(o) => {
                out.estimates.push(est.stamped());
                out.stats.push(UpdateStats { t: o.t, iters: o.iters, update_ms: o.update_ms, valid_pixels: o.valid_pixels });
            }
            Err(Error::Diverged { last_good_t }) => {
                log::error!("estimator diverged; last good t = {last_good_t}");
                out.diverged_at = Some(last_good_t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Rotation;
    use crate::state::{default_initial_covariance, G0};

    fn hover_state() -> State {
        State {
            alpha: 1.0,
            vartheta: Vector3::zeros(),
            mu_s: Rotation::identity(),
            g_s: Rotation::from_axis_angle(&Vector3::x(), std::f64::consts::PI),
            b_a: Vector3::zeros(),
            b_w: Vector3::zeros(),
        }
    }

    fn estimator() -> Estimator {
        let k = CameraIntrinsics::new(60.0, 60.0, 44.5, 28.5, 90, 58).unwrap();
        Estimator::new(hover_state(), default_initial_covariance(), NoiseParams::default(), UpdateConfig::default(), k)
            .unwrap()
    }

    fn rest(t: f64) -> ImuSample {
        ImuSample { t, acc: Vector3::new(0.0, 0.0, -G0), gyro: Vector3::zeros() }
    }

    #[test]
    fn out_of_order_samples_are_rejected() {
        let mut e = estimator();
        e.push_imu(&rest(0.1)).unwrap();
        assert!(matches!(e.push_imu(&rest(0.05)), Err(Error::InvalidArgument(_))));
        let frame = ImageFrame::constant(0.0, 90, 58, 0.5);
        assert!(matches!(e.push_frame(&frame), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hover_at_rest_stays_put_through_flat_frames() {
        let mut e = estimator();
        for k in 0..100 {
            e.push_imu(&rest(k as f64 * 0.01)).unwrap();
            if k % 10 == 0 {
                let o = e.push_frame(&ImageFrame::constant(k as f64 * 0.01, 90, 58, 0.5)).unwrap();
                assert!(k == 0 || o.iters >= 1);
            }
        }
        assert!((e.state().alpha - 1.0).abs() < 1e-12);
        assert!(e.state().vartheta.norm() < 1e-12);
    }

    #[test]
    fn wrong_frame_size_is_rejected() {
        let mut e = estimator();
        let err = e.push_frame(&ImageFrame::constant(0.0, 45, 29, 0.5)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn collapsing_distance_is_divergence() {
        let mut e = estimator();
        e.push_imu(&ImuSample { t: 0.0, acc: Vector3::new(0.0, 0.0, -G0), gyro: Vector3::zeros() }).unwrap();
        e.state.vartheta = Vector3::new(0.0, 0.0, -500.0);
        let err = e.push_imu(&rest(0.01)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
