//! Wall-clock cost of one frame: the IMU prediction batch between two
//! frames plus the iterated update.

use std::time::Instant;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::image::CameraIntrinsics;
use crate::manifold::Rotation;
use crate::measurement::{iterated_update, UpdateConfig};
use crate::selftest::synthetic_frames;
use crate::state::{default_initial_covariance, predict, ImuSample, NoiseParams, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub width: usize,
    pub height: usize,
    pub reps: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (w, h) = p.trim().split_once('x').ok_or_else(|| Error::InvalidArgument(format!("size `{p}`")))?;
            let parse = |v: &str| v.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("size `{p}`")));
            let (w, h) = (parse(w)?, parse(h)?);
            if w < 8 || h < 8 {
                return Err(Error::InvalidArgument(format!("size `{p}` too small")));
            }
            Ok((w, h))
        })
        .collect()
}

/// Sorted-sample percentile by nearest rank.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Intrinsics with the same field of view as the 90×58 default.
pub fn scaled_intrinsics(width: usize, height: usize) -> Result<CameraIntrinsics> {
    let s = width as f64 / 90.0;
    CameraIntrinsics::new(60.0 * s, 60.0 * s, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
}

pub fn bench_frame(width: usize, height: usize, reps: usize, seed: u64) -> Result<Option<BenchRow>> {
    if reps == 0 {
        return Ok(None);
    }
    let k = scaled_intrinsics(width, height)?;
    let (i_r, i_c) = synthetic_frames(seed, &k)?;
    let np = NoiseParams::default();
    let cfg = UpdateConfig::default();
    let x0 = State {
        alpha: 1.3,
        vartheta: Vector3::new(0.1, 0.05, 0.0),
        mu_s: Rotation::from_axis_angle(&Vector3::new(1.0, 0.5, 0.0), 0.05),
        g_s: Rotation::from_axis_angle(&Vector3::x(), std::f64::consts::PI - 0.05),
        b_a: Vector3::zeros(),
        b_w: Vector3::zeros(),
    };
    let p0 = default_initial_covariance();
    let imu = ImuSample { t: 0.0, acc: Vector3::new(0.1, -0.1, -9.8), gyro: Vector3::new(0.05, -0.02, 0.1) };
    let dt_frame = 1.0 / 30.0;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let (mut x, mut p) = (x0, p0);
        for _ in 0..3 {
            (x, p) = predict(&x, &p, &imu, 0.01, &np)?;
        }
        (x, p) = predict(&x, &p, &imu, dt_frame - 0.03, &np)?;
        let out = iterated_update(&x, &p, &i_r, &i_c, &imu.gyro, dt_frame, &k, &cfg)?;
        std::hint::black_box(out);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / reps as f64;
    times.sort_by(f64::total_cmp);
    Ok(Some(BenchRow {
        width,
        height,
        reps,
        mean_ms,
        median_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
    }))
}

pub fn run_bench(sizes: &[(usize, usize)], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &(w, h) in sizes {
        if let Some(r) = bench_frame(w, h, reps, seed)? {
            rows.push(r);
        }
    }
    Ok(rows)
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("width,height,reps,mean_ms,median_ms,p95_ms\n");
    for r in rows {
        s += &format!("{},{},{},{:.4},{:.4},{:.4}\n", r.width, r.height, r.reps, r.mean_ms, r.median_ms, r.p95_ms);
    }
    s
}
