use nalgebra::Vector3;

use super::texture::TextureSpec;
use super::trajectory::Pose;
use crate::error::{Error, Result};
use crate::image::{CameraIntrinsics, ImageFrame};

/// Plane `{X : nᵀX = offset}` in the world frame, with `n` pointing to the
/// side the camera flies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneSpec {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl PlaneSpec {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!("plane normal must be unit, got |n| = {n}")));
        }
        Ok(PlaneSpec { normal, offset })
    }

    /// Plane tilted by `deg` about the world x axis, lying `altitude` below
    /// `point` along its normal.
    pub fn inclined(deg: f64, point: &Vector3<f64>, altitude: f64) -> Self {
        let a = deg.to_radians();
        let normal = Vector3::new(0.0, -a.sin(), a.cos());
        PlaneSpec { normal, offset: normal.dot(point) - altitude }
    }

    pub fn inclination_deg(&self) -> f64 {
        self.normal.z.clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Signed distance of a world point; positive on the camera side.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// Orthonormal in-plane axes used as texture coordinates.
    pub fn in_plane_axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let seed = if self.normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - self.normal * self.normal.dot(&seed)).normalize();
        let e2 = self.normal.cross(&e1);
        (e1, e2)
    }

    /// Ray-plane intersection `origin + λ dir`; `None` unless `λ > 0`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let lambda = (self.offset - self.normal.dot(origin)) / denom;
        (lambda > 0.0 && lambda.is_finite()).then(|| (lambda, origin + dir * lambda))
    }
}

/// Renders the plane as seen from `pose`, averaging `supersample²`
/// sub-pixel rays per pixel. Every ray must hit the plane in front of the
/// camera.
pub fn render_view(
    tex: &TextureSpec,
    plane: &PlaneSpec,
    pose: &Pose,
    k: &CameraIntrinsics,
    supersample: usize,
    t: f64,
) -> Result<ImageFrame> {
    let ss = supersample.max(1);
    let r = pose.orientation.matrix();
    let (e1, e2) = plane.in_plane_axes();
    let mut data = Vec::with_capacity(k.width * k.height);
    let inv = 1.0 / (ss * ss) as f64;
    for y in 0..k.height {
        for x in 0..k.width {
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let u = x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5;
                    let v = y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5;
                    let dir = r * k.unproject(u, v);
                    let (_, hit) = plane.intersect(&pose.position, &dir).ok_or_else(|| Error::RenderGeometry {
                        t,
                        reason: format!("ray through pixel ({u:.2}, {v:.2}) misses the plane"),
                    })?;
                    acc += tex.intensity(e1.dot(&hit), e2.dot(&hit));
                }
            }
            data.push(acc * inv);
        }
    }
    ImageFrame::new(t, k.width, k.height, data)
}

/// Rounds intensities to the 8-bit grid the dataset format stores.
pub fn quantize(frame: &ImageFrame) -> ImageFrame {
    let data = frame.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) / 255.0).collect();
    ImageFrame { data, ..frame.clone() }
}

/// Photometric agreement of two rendered frames under the exact
/// plane-induced warp between their poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyStats {
    /// Mean absolute error over the best `keep` fraction of pixels.
    pub trimmed_mean_abs: f64,
    pub mean_abs: f64,
    /// Reference pixels that map inside the current frame.
    pub compared: usize,
}

/// Maps every reference pixel through the plane into the current camera,
/// samples the current frame there and compares intensities.
pub fn warp_consistency(
    reference: &ImageFrame,
    current: &ImageFrame,
    pose_r: &Pose,
    pose_c: &Pose,
    plane: &PlaneSpec,
    k: &CameraIntrinsics,
    keep: f64,
) -> Result<ConsistencyStats> {
    let rr = pose_r.orientation.matrix();
    let rc_t = pose_c.orientation.matrix().transpose();
    let mut errs = Vec::with_capacity(reference.data.len());
    for y in 0..reference.height {
        for x in 0..reference.width {
            let dir = rr * k.unproject(x as f64, y as f64);
            let Some((_, hit)) = plane.intersect(&pose_r.position, &dir) else {
                return Err(Error::RenderGeometry { t: reference.t, reason: "reference ray misses plane".into() });
            };
            let pc = rc_t * (hit - pose_c.position);
            if pc.z <= 0.0 {
                continue;
            }
            let (u, v) = k.project(&pc);
            if !current.cubic_support(u, v) {
                continue;
            }
            let (val, _, _) = current.sample_cubic(u, v);
            errs.push((val - reference.at(x, y)).abs());
        }
    }
    if errs.is_empty() {
        return Err(Error::MeasurementDegenerate { valid: 0, total: reference.data.len() });
    }
    let compared = errs.len();
    let mean_abs = errs.iter().sum::<f64>() / compared as f64;
    errs.sort_by(f64::total_cmp);
    let n_keep = ((compared as f64 * keep).ceil() as usize).clamp(1, compared);
    let trimmed_mean_abs = errs[..n_keep].iter().sum::<f64>() / n_keep as f64;
    Ok(ConsistencyStats { trimmed_mean_abs, mean_abs, compared })
}
