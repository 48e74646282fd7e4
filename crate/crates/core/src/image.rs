//! Grayscale frames, pinhole intrinsics, sub-pixel sampling and area
//! downsampling.
//!
//! Pixel `(i, j)` has its center at image coordinates `(u, v) = (i, j)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Normalized ray `M⁻¹ (u, v, 1)`.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Intrinsics of the same camera resampled to `width × height`, keeping
    /// pixel-center conventions consistent with area averaging.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        CameraIntrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub t: f64,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageFrame {
    pub fn new(t: f64, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("intensity {v} outside [0, 1]")));
        }
        Ok(ImageFrame { t, width, height, data })
    }

    pub fn constant(t: f64, width: usize, height: usize, value: f64) -> Self {
        ImageFrame { t, width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Whether a bicubic sample at `(x, y)` only touches in-bounds pixels.
    #[inline]
    pub fn cubic_support(&self, x: f64, y: f64) -> bool {
        x >= 1.0 && y >= 1.0 && x < (self.width as f64 - 2.0) && y < (self.height as f64 - 2.0)
    }

    /// Catmull-Rom bicubic sample and its exact spatial gradient.
    ///
    /// The interpolant passes through the pixel values and its gradient at a
    /// pixel center equals the central difference there. Callers must check
    /// [`cubic_support`](Self::cubic_support) first.
    #[inline]
    pub fn sample_cubic(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let x0 = x.floor();
        let y0 = y.floor();
        let (wx, dwx) = catmull_rom(x - x0);
        let (wy, dwy) = catmull_rom(y - y0);
        let xi = x0 as usize - 1;
        let yi = y0 as usize - 1;
        let mut val = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (r, (&wyr, &dwyr)) in wy.iter().zip(dwy.iter()).enumerate() {
            let row = &self.data[(yi + r) * self.width + xi..(yi + r) * self.width + xi + 4];
            let mut s = 0.0;
            let mut ds = 0.0;
            for c in 0..4 {
                s += wx[c] * row[c];
                ds += dwx[c] * row[c];
            }
            val += wyr * s;
            gx += wyr * ds;
            gy += dwyr * s;
        }
        (val, gx, gy)
    }

    /// Per-frame affine intensity change `gain·I + offset`, clamped to [0, 1].
    pub fn with_gain_offset(&self, gain: f64, offset: f64) -> Self {
        ImageFrame {
            t: self.t,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| (gain * v + offset).clamp(0.0, 1.0)).collect(),
        }
    }
}

#[inline]
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// Overlap weights of each output cell with the source cells along one axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|k| {
                    let w = (hi.min(k as f64 + 1.0) - lo.max(k as f64)) / scale;
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Box-filter area averaging to `target_w × target_h`.
pub fn downsample_image(img: &ImageFrame, target_w: usize, target_h: usize) -> Result<ImageFrame> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument("downsample target has zero size".into()));
    }
    if target_w > img.width || target_h > img.height {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {}x{} to larger {target_w}x{target_h}",
            img.width, img.height
        )));
    }
    if target_w == img.width && target_h == img.height {
        return Ok(img.clone());
    }
    let wx = area_weights(img.width, target_w);
    let wy = area_weights(img.height, target_h);
    let mut rows = vec![0.0; target_w * img.height];
    for y in 0..img.height {
        let src = &img.data[y * img.width..(y + 1) * img.width];
        for (x, ws) in wx.iter().enumerate() {
            rows[y * target_w + x] = ws.iter().map(|&(k, w)| w * src[k]).sum();
        }
    }
    let mut out = vec![0.0; target_w * target_h];
    for (y, ws) in wy.iter().enumerate() {
        for x in 0..target_w {
            let v: f64 = ws.iter().map(|&(k, w)| w * rows[k * target_w + x]).sum();
            out[y * target_w + x] = v.clamp(0.0, 1.0);
        }
    }
    Ok(ImageFrame { t: img.t, width: target_w, height: target_h, data: out })
}
