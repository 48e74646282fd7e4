//! Plain-text and PGM encodings used by datasets and estimator output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::manifold::Rotation;
use crate::state::{ImuSample, State, StateDelta, STATE_DIM};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Timestamp text with at least nine significant digits that still parses
/// back exactly.
pub fn fmt_time(t: f64) -> String {
    let leading_zeros = if t != 0.0 && t.abs() < 1.0 { (-t.abs().log10()).floor() as usize } else { 0 };
    for decimals in 9 + leading_zeros..=17 + leading_zeros {
        let s = format!("{t:.decimals$}");
        if s.parse::<f64>().ok() == Some(t) {
            return s;
        }
    }
    format!("{t:.17e}")
}

pub fn fmt_vec3(v: &Vector3<f64>) -> String {
    format!("{},{},{}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))
}

/// Frame timestamps pass through integer nanoseconds in file names; this is
/// the one conversion back to seconds so in-memory and on-disk times agree.
pub fn time_from_ns(ns: u64) -> f64 {
    ns as f64 / 1e9
}

pub fn ns_from_time(t: f64) -> u64 {
    (t * 1e9).round().max(0.0) as u64
}

fn parse_err(source: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { source_name: source.to_string(), line, reason: reason.into() }
}

fn parse_fields(line: &str, expected: usize, source: &str, lineno: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(parse_err(source, lineno, format!("expected {expected} fields, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(source, lineno, format!("`{f}` is not a finite number")))
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

// ---- PGM ----

pub fn encode_pgm(img: &ImageFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

/// Decodes an 8-bit binary PGM; intensities are scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8], t: f64, source: &str) -> Result<ImageFrame> {
    let mut pos = 0;
    let mut header = Vec::new();
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(source, 1, "truncated PGM header"));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(parse_err(source, 1, format!("magic `{}` is not P5", header[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(source, 1, format!("bad header field `{s}`")));
    let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(parse_err(source, 1, format!("unsupported PGM {w}x{h} maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < w * h {
        return Err(parse_err(source, 1, format!("raster has {} of {} bytes", raster.len(), w * h)));
    }
    let maxval = maxval as f64;
    let data = raster[..w * h].iter().map(|&b| (b as f64 / maxval).min(1.0)).collect();
    ImageFrame::new(t, w, h, data)
}

// ---- IMU CSV ----

pub const IMU_HEADER: &str = "t,ax,ay,az,wx,wy,wz";

pub fn encode_imu(samples: &[ImuSample]) -> String {
    let mut s = String::from(IMU_HEADER);
    s.push('\n');
    for m in samples {
        let _ = writeln!(s, "{},{},{}", fmt_time(m.t), fmt_vec3(&m.acc), fmt_vec3(&m.gyro));
    }
    s
}

pub fn decode_imu(text: &str, source: &str) -> Result<Vec<ImuSample>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == IMU_HEADER => {}
        _ => return Err(parse_err(source, 1, format!("missing header `{IMU_HEADER}`"))),
    }
    let mut out: Vec<ImuSample> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(line, 7, source, i + 1)?;
        let s = ImuSample { t: f[0], acc: Vector3::new(f[1], f[2], f[3]), gyro: Vector3::new(f[4], f[5], f[6]) };
        if let Some(prev) = out.last() {
            if !(s.t > prev.t) {
                return Err(Error::NonMonotonic { source_name: source.to_string(), row: i + 1 });
            }
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>> {
    decode_imu(&read_text(path)?, &source_name(path))
}

// ---- state CSV ----

/// A state with its marginal error variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedState {
    pub t: f64,
    pub state: State,
    pub variance: StateDelta,
}

const STATE_COLUMNS: [&str; STATE_DIM] = [
    "alpha",
    "vartheta_x",
    "vartheta_y",
    "vartheta_z",
    "mu_polar",
    "mu_azimuth",
    "g_polar",
    "g_azimuth",
    "ba_x",
    "ba_y",
    "ba_z",
    "bw_x",
    "bw_y",
    "bw_z",
];

pub fn state_header() -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(STATE_COLUMNS.iter().map(|c| c.to_string()));
    cols.extend(STATE_COLUMNS.iter().map(|c| format!("var_{c}")));
    cols.join(",")
}

fn state_values(x: &State) -> [f64; STATE_DIM] {
    let (mp, ma) = x.mu().spherical();
    let (gp, ga) = x.g().spherical();
    let v = &x.vartheta;
    [
        x.alpha, v.x, v.y, v.z, mp, ma, gp, ga, x.b_a.x, x.b_a.y, x.b_a.z, x.b_w.x, x.b_w.y, x.b_w.z,
    ]
}

pub fn encode_states(rows: &[StampedState]) -> String {
    let mut s = state_header();
    s.push('\n');
    for r in rows {
        s.push_str(&fmt_time(r.t));
        for v in state_values(&r.state).iter().chain(r.variance.iter()) {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

pub fn decode_states(text: &str, source: &str) -> Result<Vec<StampedState>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == state_header() => {}
        _ => return Err(parse_err(source, 1, "missing or unexpected state header")),
    }
    let mut out: Vec<StampedState> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(line, 1 + 2 * STATE_DIM, source, i + 1)?;
        let state = State {
            alpha: f[1],
            vartheta: Vector3::new(f[2], f[3], f[4]),
            mu_s: Rotation::from_spherical(f[5], f[6]),
            g_s: Rotation::from_spherical(f[7], f[8]),
            b_a: Vector3::new(f[9], f[10], f[11]),
            b_w: Vector3::new(f[12], f[13], f[14]),
        };
        let variance = StateDelta::from_iterator(f[15..].iter().copied());
        if let Some(prev) = out.last() {
            if !(f[0] > prev.t) {
                return Err(Error::NonMonotonic { source_name: source.to_string(), row: i + 1 });
            }
        }
        out.push(StampedState { t: f[0], state, variance });
    }
    Ok(out)
}

pub fn read_states(path: &Path) -> Result<Vec<StampedState>> {
    decode_states(&read_text(path)?, &source_name(path))
}

pub fn write_states(path: &Path, rows: &[StampedState]) -> Result<()> {
    Ok(std::fs::write(path, encode_states(rows))?)
}

// ---- update statistics sidecar ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub t: f64,
    pub iters: usize,
    pub update_ms: f64,
    pub valid_pixels: usize,
}

pub const STATS_HEADER: &str = "t,iters,update_ms,valid_pixels";

/// Path of the statistics file written next to an estimate file.
pub fn stats_path(estimates: &Path) -> std::path::PathBuf {
    let mut s = estimates.as_os_str().to_owned();
    s.push(".stats.csv");
    s.into()
}

pub fn encode_stats(rows: &[UpdateStats]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", fmt_time(r.t), r.iters, fmt_f64(r.update_ms), r.valid_pixels);
    }
    s
}

pub fn decode_stats(text: &str, source: &str) -> Result<Vec<UpdateStats>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == STATS_HEADER => {}
        _ => return Err(parse_err(source, 1, format!("missing header `{STATS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_fields(line, 4, source, i + 1)?;
        if f[1] < 0.0 || f[3] < 0.0 || f[1].fract() != 0.0 || f[3].fract() != 0.0 {
            return Err(parse_err(source, i + 1, "counts must be non-negative integers"));
        }
        out.push(UpdateStats { t: f[0], iters: f[1] as usize, update_ms: f[2], valid_pixels: f[3] as usize });
    }
    Ok(out)
}

pub fn read_stats(path: &Path) -> Result<Vec<UpdateStats>> {
    decode_stats(&read_text(path)?, &source_name(path))
}
