//! Flat `key = value` configuration files. `#` starts a comment, vectors are
//! written `a,b,c`, and any key the target does not know is an error.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::formats::{fmt_f64, fmt_vec3};
use crate::error::{Error, Result};
use crate::image::CameraIntrinsics;
use crate::manifold::{Rotation, UnitVector3};
use crate::measurement::{CovarianceForm, UpdateConfig};
use crate::sim::{MotionProfile, SimConfig};
use crate::state::{initial_covariance, ErrorCovariance, NoiseParams, State, DEFAULT_INITIAL_STD};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_key_values(text: &str, source: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse { source_name: source.to_string(), line: i + 1, reason };
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(err(format!("empty key or value in `{line}`")));
        }
        if out.iter().any(|e| e.key == k) {
            return Err(err(format!("duplicate key `{k}`")));
        }
        out.push(Entry { key: k.to_string(), value: v.to_string(), line: i + 1 });
    }
    Ok(out)
}

/// Typed access to one entry's value.
struct Value<'a> {
    e: &'a Entry,
    source: &'a str,
}

impl Value<'_> {
    fn err(&self, what: &str) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            line: self.e.line,
            reason: format!("`{}` for `{}` is not {what}", self.e.value, self.e.key),
        }
    }
    fn f64(&self) -> Result<f64> {
        self.e.value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.err("a finite number"))
    }
    fn usize(&self) -> Result<usize> {
        self.e.value.parse().map_err(|_| self.err("a non-negative integer"))
    }
    fn u64(&self) -> Result<u64> {
        self.e.value.parse().map_err(|_| self.err("a non-negative integer"))
    }
    fn vec3(&self) -> Result<Vector3<f64>> {
        let parts: Vec<f64> = self
            .e
            .value
            .split(',')
            .map(|p| p.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| self.err("a vector `a,b,c`"))?;
        if parts.len() != 3 {
            return Err(self.err("a vector `a,b,c`"));
        }
        Ok(Vector3::new(parts[0], parts[1], parts[2]))
    }
    fn parsed<T: std::str::FromStr<Err = Error>>(&self) -> Result<T> {
        self.e.value.parse().map_err(|_| self.err("a recognised option"))
    }
    fn unknown(&self) -> Error {
        Error::UnknownKey { key: self.e.key.clone(), line: self.e.line }
    }
}

fn unit(v: Vector3<f64>, name: &str) -> Result<UnitVector3> {
    let n = v.norm();
    let u = UnitVector3::new_normalize(v)?;
    if (n - 1.0).abs() > 1e-12 {
        log::info!("{name} had norm {n:.6}; normalized to {:?}", u.as_vector().as_slice());
    }
    Ok(u)
}

/// Everything `run` needs besides the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub noise: NoiseParams,
    pub alpha0: f64,
    pub vartheta0: Vector3<f64>,
    /// Normalized on load.
    pub mu0: Vector3<f64>,
    /// Up direction in the camera frame; normalized on load.
    pub g_dir0: Vector3<f64>,
    pub b_a0: Vector3<f64>,
    pub b_w0: Vector3<f64>,
    /// Initial standard deviations per state block.
    pub std_alpha0: f64,
    pub std_vartheta0: f64,
    pub std_mu0: f64,
    pub std_g0: f64,
    pub std_ba0: f64,
    pub std_bw0: f64,
    pub max_iters: usize,
    pub term_threshold: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub cov_form: CovarianceForm,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            noise: NoiseParams::default(),
            alpha0: 10.0,
            vartheta0: Vector3::zeros(),
            mu0: Vector3::new(0.2, -0.1, 0.97).normalize(),
            g_dir0: Vector3::new(0.0, 0.0, -1.0),
            b_a0: Vector3::zeros(),
            b_w0: Vector3::zeros(),
            std_alpha0: DEFAULT_INITIAL_STD[0],
            std_vartheta0: DEFAULT_INITIAL_STD[1],
            std_mu0: DEFAULT_INITIAL_STD[2],
            std_g0: DEFAULT_INITIAL_STD[3],
            std_ba0: DEFAULT_INITIAL_STD[4],
            std_bw0: DEFAULT_INITIAL_STD[5],
            max_iters: 3,
            term_threshold: 0.05,
            image_width: 90,
            image_height: 58,
            cov_form: CovarianceForm::Paper,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let positive = [
            ("alpha0", self.alpha0),
            ("term_threshold", self.term_threshold),
            ("std_alpha0", self.std_alpha0),
            ("std_vartheta0", self.std_vartheta0),
            ("std_mu0", self.std_mu0),
            ("std_g0", self.std_g0),
            ("std_ba0", self.std_ba0),
            ("std_bw0", self.std_bw0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 || self.image_width < 4 || self.image_height < 4 {
            return Err(Error::InvalidArgument("max_iters >= 1 and image size >= 4x4 required".into()));
        }
        UnitVector3::new_normalize(self.mu0)?;
        UnitVector3::new_normalize(self.g_dir0)?;
        Ok(())
    }

    pub fn initial_state(&self) -> Result<State> {
        Ok(State {
            alpha: self.alpha0,
            vartheta: self.vartheta0,
            mu_s: Rotation::with_z_axis(&UnitVector3::new_normalize(self.mu0)?),
            g_s: Rotation::with_z_axis(&UnitVector3::new_normalize(self.g_dir0)?),
            b_a: self.b_a0,
            b_w: self.b_w0,
        })
    }

    pub fn initial_covariance(&self) -> ErrorCovariance {
        initial_covariance(&[
            self.std_alpha0,
            self.std_vartheta0,
            self.std_mu0,
            self.std_g0,
            self.std_ba0,
            self.std_bw0,
        ])
    }

    pub fn update_config(&self) -> UpdateConfig {
        UpdateConfig {
            max_iters: self.max_iters,
            term_threshold: self.term_threshold,
            sigma_intensity: self.noise.intensity,
            cov_form: self.cov_form,
        }
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for e in parse_key_values(text, source)? {
            let v = Value { e: &e, source };
            match e.key.as_str() {
                "noise_alpha" => c.noise.alpha = v.f64()?,
                "noise_vartheta" => c.noise.vartheta = v.f64()?,
                "noise_mu" => c.noise.mu = v.f64()?,
                "noise_g" => c.noise.g = v.f64()?,
                "noise_ba" => c.noise.b_a = v.f64()?,
                "noise_bw" => c.noise.b_w = v.f64()?,
                "sigma_intensity" => c.noise.intensity = v.f64()?,
                "gravity" => c.noise.gravity = v.f64()?,
                "alpha0" => c.alpha0 = v.f64()?,
                "vartheta0" => c.vartheta0 = v.vec3()?,
                "mu0" => c.mu0 = unit(v.vec3()?, "mu0")?.into_inner(),
                "g_dir0" => c.g_dir0 = unit(v.vec3()?, "g_dir0")?.into_inner(),
                "ba0" => c.b_a0 = v.vec3()?,
                "bw0" => c.b_w0 = v.vec3()?,
                "std_alpha0" => c.std_alpha0 = v.f64()?,
                "std_vartheta0" => c.std_vartheta0 = v.f64()?,
                "std_mu0" => c.std_mu0 = v.f64()?,
                "std_g0" => c.std_g0 = v.f64()?,
                "std_ba0" => c.std_ba0 = v.f64()?,
                "std_bw0" => c.std_bw0 = v.f64()?,
                "max_iters" => c.max_iters = v.usize()?,
                "term_threshold" => c.term_threshold = v.f64()?,
                "image_width" => c.image_width = v.usize()?,
                "image_height" => c.image_height = v.usize()?,
                "cov_form" => c.cov_form = v.parsed()?,
                _ => return Err(v.unknown()),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let n = &self.noise;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("noise_alpha", fmt_f64(n.alpha));
        kv("noise_vartheta", fmt_f64(n.vartheta));
        kv("noise_mu", fmt_f64(n.mu));
        kv("noise_g", fmt_f64(n.g));
        kv("noise_ba", fmt_f64(n.b_a));
        kv("noise_bw", fmt_f64(n.b_w));
        kv("sigma_intensity", fmt_f64(n.intensity));
        kv("gravity", fmt_f64(n.gravity));
        kv("alpha0", fmt_f64(self.alpha0));
        kv("vartheta0", fmt_vec3(&self.vartheta0));
        kv("mu0", fmt_vec3(&self.mu0));
        kv("g_dir0", fmt_vec3(&self.g_dir0));
        kv("ba0", fmt_vec3(&self.b_a0));
        kv("bw0", fmt_vec3(&self.b_w0));
        kv("std_alpha0", fmt_f64(self.std_alpha0));
        kv("std_vartheta0", fmt_f64(self.std_vartheta0));
        kv("std_mu0", fmt_f64(self.std_mu0));
        kv("std_g0", fmt_f64(self.std_g0));
        kv("std_ba0", fmt_f64(self.std_ba0));
        kv("std_bw0", fmt_f64(self.std_bw0));
        kv("max_iters", self.max_iters.to_string());
        kv("term_threshold", fmt_f64(self.term_threshold));
        kv("image_width", self.image_width.to_string());
        kv("image_height", self.image_height.to_string());
        kv("cov_form", self.cov_form.to_string());
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

pub fn sim_config_from_text(text: &str, source: &str) -> Result<SimConfig> {
    let mut c = SimConfig::default();
    let mut profile = "low_speed".to_string();
    let (mut rms_speed, mut attitude_deg) = (None, None);
    let k = c.intrinsics;
    let mut intr = (k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    for e in parse_key_values(text, source)? {
        let v = Value { e: &e, source };
        match e.key.as_str() {
            "duration" => c.duration = v.f64()?,
            "imu_rate" => c.imu_rate = v.f64()?,
            "cam_rate" => c.cam_rate = v.f64()?,
            "seed" => c.seed = v.u64()?,
            "profile" => profile = e.value.clone(),
            "rms_speed" => rms_speed = Some(v.f64()?),
            "attitude_deg" => attitude_deg = Some(v.f64()?),
            "volume" => c.volume = v.f64()?,
            "altitude" => c.altitude = v.f64()?,
            "inclination_deg" => c.inclination_deg = v.f64()?,
            "texture" => c.texture = v.parsed()?,
            "texture_scale" => c.texture_scale = v.f64()?,
            "contrast" => c.contrast = v.f64()?,
            "fx" => intr.0 = v.f64()?,
            "fy" => intr.1 = v.f64()?,
            "cx" => intr.2 = v.f64()?,
            "cy" => intr.3 = v.f64()?,
            "width" => intr.4 = v.usize()?,
            "height" => intr.5 = v.usize()?,
            "supersample" => c.supersample = v.usize()?,
            "gravity" => c.gravity = v.f64()?,
            "acc_noise_density" => c.acc_noise_density = v.f64()?,
            "gyro_noise_density" => c.gyro_noise_density = v.f64()?,
            "bias_acc" => c.bias_acc = v.vec3()?,
            "bias_gyro" => c.bias_gyro = v.vec3()?,
            "gain_jitter" => c.gain_jitter = v.f64()?,
            "offset_jitter" => c.offset_jitter = v.f64()?,
            _ => return Err(v.unknown()),
        }
    }
    c.intrinsics = CameraIntrinsics::new(intr.0, intr.1, intr.2, intr.3, intr.4, intr.5)?;
    c.profile = match (profile.as_str(), rms_speed, attitude_deg) {
        ("hover", None, None) => MotionProfile::Hover,
        ("low_speed", None, None) => MotionProfile::LowSpeed,
        ("high_speed", None, None) => MotionProfile::HighSpeed,
        ("custom", Some(rms_speed), Some(attitude_deg)) => MotionProfile::Custom { rms_speed, attitude_deg },
        ("custom", _, _) => {
            return Err(Error::InvalidArgument("profile `custom` needs rms_speed and attitude_deg".into()))
        }
        ("hover" | "low_speed" | "high_speed", _, _) => {
            return Err(Error::InvalidArgument("rms_speed/attitude_deg only apply to profile `custom`".into()))
        }
        (other, _, _) => return Err(Error::InvalidArgument(format!("unknown profile `{other}`"))),
    };
    c.validate()?;
    Ok(c)
}

pub fn sim_config_to_text(c: &SimConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("duration", fmt_f64(c.duration));
    kv("imu_rate", fmt_f64(c.imu_rate));
    kv("cam_rate", fmt_f64(c.cam_rate));
    kv("seed", c.seed.to_string());
    kv("profile", c.profile.name().to_string());
    if let MotionProfile::Custom { rms_speed, attitude_deg } = c.profile {
        kv("rms_speed", fmt_f64(rms_speed));
        kv("attitude_deg", fmt_f64(attitude_deg));
    }
    kv("volume", fmt_f64(c.volume));
    kv("altitude", fmt_f64(c.altitude));
    kv("inclination_deg", fmt_f64(c.inclination_deg));
    kv("texture", c.texture.to_string());
    kv("texture_scale", fmt_f64(c.texture_scale));
    kv("contrast", fmt_f64(c.contrast));
    let k = &c.intrinsics;
    kv("fx", fmt_f64(k.fx));
    kv("fy", fmt_f64(k.fy));
    kv("cx", fmt_f64(k.cx));
    kv("cy", fmt_f64(k.cy));
    kv("width", k.width.to_string());
    kv("height", k.height.to_string());
    kv("supersample", c.supersample.to_string());
    kv("gravity", fmt_f64(c.gravity));
    kv("acc_noise_density", fmt_f64(c.acc_noise_density));
    kv("gyro_noise_density", fmt_f64(c.gyro_noise_density));
    kv("bias_acc", fmt_vec3(&c.bias_acc));
    kv("bias_gyro", fmt_vec3(&c.bias_gyro));
    kv("gain_jitter", fmt_f64(c.gain_jitter));
    kv("offset_jitter", fmt_f64(c.offset_jitter));
    s
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    sim_config_from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
}
