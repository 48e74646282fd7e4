//! Analytic camera trajectories: positions and Euler angles are finite sums
//! of sinusoids, so velocity, acceleration and body rate are exact.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::Rotation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionProfile {
    Hover,
    LowSpeed,
    HighSpeed,
    /// Target RMS speed (m/s) and attitude amplitude (deg).
    Custom { rms_speed: f64, attitude_deg: f64 },
}

impl MotionProfile {
    pub fn rms_speed(&self) -> f64 {
        match *self {
            MotionProfile::Hover => 0.0,
            MotionProfile::LowSpeed => 0.2,
            MotionProfile::HighSpeed => 0.45,
            MotionProfile::Custom { rms_speed, .. } => rms_speed,
        }
    }

    pub fn attitude_deg(&self) -> f64 {
        match *self {
            MotionProfile::Hover => 0.0,
            MotionProfile::LowSpeed => 4.0,
            MotionProfile::HighSpeed => 8.0,
            MotionProfile::Custom { attitude_deg, .. } => attitude_deg,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MotionProfile::Hover => "hover",
            MotionProfile::LowSpeed => "low_speed",
            MotionProfile::HighSpeed => "high_speed",
            MotionProfile::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Sinusoid {
    fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin()
    }
    fn rate(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t + self.phase).cos()
    }
    fn accel(&self, t: f64) -> f64 {
        -self.amplitude * self.omega * self.omega * (self.omega * t + self.phase).sin()
    }
}

fn sum(c: &[Sinusoid], f: impl Fn(&Sinusoid) -> f64) -> f64 {
    c.iter().map(f).sum()
}

/// Camera pose: position of the optical centre in the world and the
/// camera-to-world rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Rotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub center: Vector3<f64>,
    /// Per world axis.
    pub position_terms: [Vec<Sinusoid>; 3],
    /// Roll, pitch, yaw (rad) applied on top of the downward-looking base.
    pub attitude_terms: [Vec<Sinusoid>; 3],
}

/// Camera looking straight down with image x along world x.
pub fn base_orientation() -> Rotation {
    // exact half turn about x; the axis-angle route leaves 1e-16 residue
    Rotation::from_quaternion(UnitQuaternion::new_unchecked(Quaternion::new(0.0, 1.0, 0.0, 0.0)))
}

fn rx(a: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::x(), a)
}
fn ry(a: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::y(), a)
}
fn rz(a: f64) -> Rotation {
    Rotation::from_axis_angle(&Vector3::z(), a)
}

impl Trajectory {
    pub fn stationary(center: Vector3<f64>) -> Self {
        Trajectory { center, position_terms: Default::default(), attitude_terms: Default::default() }
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.center + Vector3::from_fn(|i, _| sum(&self.position_terms[i], |s| s.value(t)))
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| sum(&self.position_terms[i], |s| s.rate(t)))
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| sum(&self.position_terms[i], |s| s.accel(t)))
    }

    fn euler(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let a = Vector3::from_fn(|i, _| sum(&self.attitude_terms[i], |s| s.value(t)));
        let r = Vector3::from_fn(|i, _| sum(&self.attitude_terms[i], |s| s.rate(t)));
        (a, r)
    }

    /// Camera-to-world rotation `Rz(yaw) Ry(pitch) Rx(roll) R_base`.
    pub fn orientation(&self, t: f64) -> Rotation {
        let (a, _) = self.euler(t);
        rz(a.z).compose(&ry(a.y)).compose(&rx(a.x)).compose(&base_orientation())
    }

    pub fn pose(&self, t: f64) -> Pose {
        Pose { position: self.position(t), orientation: self.orientation(t) }
    }

    /// Angular velocity in the camera frame, i.e. what an ideal gyro reads.
    pub fn body_rate(&self, t: f64) -> Vector3<f64> {
        let (a, r) = self.euler(t);
        let yaw = rz(a.z);
        let yaw_pitch = yaw.compose(&ry(a.y));
        let world = Vector3::z() * r.z + yaw.act(&Vector3::y()) * r.y + yaw_pitch.act(&Vector3::x()) * r.x;
        self.orientation(t).inverse().act(&world)
    }

    /// Velocity expressed in the camera frame.
    pub fn camera_velocity(&self, t: f64) -> Vector3<f64> {
        self.orientation(t).inverse().act(&self.velocity(t))
    }

    /// Specific force in the camera frame for gravity magnitude `g0`.
    pub fn specific_force(&self, t: f64, g0: f64) -> Vector3<f64> {
        self.orientation(t).inverse().act(&(self.acceleration(t) + Vector3::new(0.0, 0.0, g0)))
    }

    /// RMS speed over `[0, duration)` sampled at `rate` Hz.
    pub fn rms_speed(&self, duration: f64, rate: f64) -> f64 {
        let n = (duration * rate).round().max(1.0) as usize;
        let ms = (0..n).map(|k| self.velocity(k as f64 / rate).norm_squared()).sum::<f64>() / n as f64;
        ms.sqrt()
    }
}

/// Random smooth trajectory for a motion profile. Horizontal excursions stay
/// within `volume / 2` of the centre, vertical ones within a quarter of that
/// and never more than 40 % of the altitude.
pub fn synthesize_trajectory(
    profile: MotionProfile,
    center: Vector3<f64>,
    volume: f64,
    altitude: f64,
    duration: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(duration > 0.0) || !(volume > 0.0) || !(altitude > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trajectory needs positive duration/volume/altitude, got {duration}/{volume}/{altitude}"
        )));
    }
    let speed = profile.rms_speed();
    let att = profile.attitude_deg().to_radians();
    if speed < 0.0 || att < 0.0 {
        return Err(Error::InvalidArgument(format!("negative motion targets in {profile:?}")));
    }
    let mut traj = Trajectory::stationary(center);
    if speed == 0.0 && att == 0.0 {
        return Ok(traj);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;

    if speed > 0.0 {
        // speed share per axis: x and y carry most of it
        let share = [1.0, 1.0, 0.15];
        let limits = [0.5 * volume, 0.5 * volume, (0.125 * volume).min(0.4 * altitude)];
        let total_share: f64 = share.iter().sum();
        for axis in 0..3 {
            let axis_ms = speed * speed * share[axis] / total_share;
            let mut terms: Vec<Sinusoid> = (0..2)
                .map(|_| Sinusoid {
                    amplitude: rng.random_range(0.5..1.0),
                    omega: rng.random_range(1.0..2.5),
                    phase: rng.random_range(0.0..tau),
                })
                .collect();
            // long-run mean of v² is Σ (A ω)² / 2
            let ms: f64 = terms.iter().map(|s| (s.amplitude * s.omega).powi(2) / 2.0).sum();
            let k = (axis_ms / ms).sqrt();
            terms.iter_mut().for_each(|s| s.amplitude *= k);
            // too wide: trade amplitude for frequency, keeping A ω fixed
            let reach: f64 = terms.iter().map(|s| s.amplitude).sum();
            if reach > limits[axis] {
                let r = reach / limits[axis];
                terms.iter_mut().for_each(|s| {
                    s.amplitude /= r;
                    s.omega *= r;
                });
            }
            traj.position_terms[axis] = terms;
        }
    }
    if att > 0.0 {
        // phases of 0 or π: the camera starts level, as a default gravity
        // initialization assumes
        for axis in 0..3 {
            traj.attitude_terms[axis] = (0..2)
                .map(|_| Sinusoid {
                    amplitude: att * rng.random_range(0.3..0.5),
                    omega: rng.random_range(0.3..1.0),
                    phase: if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI },
                })
                .collect();
        }
    }
    Ok(traj)
}
