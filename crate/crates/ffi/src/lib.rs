//! C ABI over the planar-vio streaming estimator.
//!
//! Every function returns a `PvStatus`. On failure a message is kept in
//! thread-local storage and can be read with `pv_last_error_message`.
//! Handles are opaque and must be released with `pv_estimator_free`.
//! Panics never cross the boundary; they are reported as `PV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::Vector3;
use planar_vio::image::downsample_image;
use planar_vio::io::RunConfig;
use planar_vio::{CameraIntrinsics, Error, Estimator, ImageFrame, ImuSample};

/// Number of error-state dimensions.
pub const PV_STATE_DIM: usize = 14;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    Diverged = 5,
    Numerical = 6,
    Panic = 7,
}

/// Pinhole intrinsics of the frames that will be pushed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PvIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Filter state at the current filter time. `t` is NaN before the first
/// measurement. Unit vectors are expressed in the camera frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PvState {
    pub t: f64,
    /// Inverse distance to the plane (1/m).
    pub alpha: f64,
    /// Velocity scaled by inverse distance (1/s).
    pub vartheta: [f64; 3],
    /// Plane normal, pointing from the camera toward the plane.
    pub normal: [f64; 3],
    /// Up direction.
    pub up: [f64; 3],
    pub bias_acc: [f64; 3],
    pub bias_gyro: [f64; 3],
    /// Metric distance to the plane (m).
    pub distance: f64,
    /// Metric velocity (m/s).
    pub velocity: [f64; 3],
}

/// Per-frame result of `pv_estimator_push_frame_u8` and friends.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PvFrameResult {
    /// 0 when the frame only became the reference or the update was skipped.
    pub iters: u32,
    pub valid_pixels: u32,
    pub update_ms: f64,
}

/// Opaque estimator handle.
pub struct PvEstimator {
    inner: Estimator,
    /// Size of the pushed frames; they are area-averaged to the processing
    /// size of the inner estimator when larger.
    input_size: (usize, usize),
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PvStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::MissingFile(_) | Error::Io(_) | Error::NonMonotonic { .. } => {
                PvStatus::InvalidArgument
            }
            Error::DimensionMismatch(_) => PvStatus::DimensionMismatch,
            Error::Parse { .. } | Error::UnknownKey { .. } => PvStatus::Parse,
            Error::Diverged { .. } | Error::Propagation { .. } => PvStatus::Diverged,
            _ => PvStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PvStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            PvStatus::Panic
        }
    }
}

unsafe fn handle_mut<'a>(h: *mut PvEstimator) -> Result<&'a mut PvEstimator, Failure> {
    h.as_mut().ok_or_else(|| null("estimator"))
}

unsafe fn handle_ref<'a>(h: *const PvEstimator) -> Result<&'a PvEstimator, Failure> {
    h.as_ref().ok_or_else(|| null("estimator"))
}

fn build(cfg: RunConfig, k: &PvIntrinsics) -> Result<Box<PvEstimator>, Failure> {
    cfg.validate()?;
    let native = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width as usize, k.height as usize)?;
    let (w, h) = (cfg.image_width, cfg.image_height);
    if w > native.width || h > native.height {
        return Err(Failure(
            PvStatus::DimensionMismatch,
            format!("processing size {w}x{h} exceeds frame size {}x{}", native.width, native.height),
        ));
    }
    let inner = Estimator::from_config(&cfg, native.resized(w, h))?;
    Ok(Box::new(PvEstimator { inner, input_size: (native.width, native.height) }))
}

/// Creates an estimator with default settings. Frames larger than the
/// default processing size (90x58) are area-averaged down to it.
///
/// # Safety
/// `intrinsics` must point to a valid `PvIntrinsics`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_new(intrinsics: *const PvIntrinsics, out: *mut *mut PvEstimator) -> PvStatus {
    guard(|| {
        let k = intrinsics.as_ref().ok_or_else(|| null("intrinsics"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        *out = Box::into_raw(build(RunConfig::default(), k)?);
        Ok(())
    })
}

/// Creates an estimator from `key = value` configuration text, as accepted
/// by the `run` subcommand's `--config` file.
///
/// # Safety
/// `config_text` must be a NUL-terminated string; see `pv_estimator_new`.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_new_with_config(
    config_text: *const c_char,
    intrinsics: *const PvIntrinsics,
    out: *mut *mut PvEstimator,
) -> PvStatus {
    guard(|| {
        if config_text.is_null() {
            return Err(null("config_text"));
        }
        let k = intrinsics.as_ref().ok_or_else(|| null("intrinsics"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let text = CStr::from_ptr(config_text)
            .to_str()
            .map_err(|e| Failure(PvStatus::Parse, format!("config text is not UTF-8: {e}")))?;
        let cfg = RunConfig::from_text(text, "<config>")?;
        *out = Box::into_raw(build(cfg, k)?);
        Ok(())
    })
}

/// Releases an estimator. Passing NULL is a no-op.
///
/// # Safety
/// `handle` must come from a `pv_estimator_new*` call and not be used after.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_free(handle: *mut PvEstimator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Feeds one IMU sample: accelerometer in m/s², gyro in rad/s, both in the
/// camera frame. Timestamps must not decrease.
///
/// # Safety
/// `acc` and `gyro` must each point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_push_imu(
    handle: *mut PvEstimator,
    t: f64,
    acc: *const f64,
    gyro: *const f64,
) -> PvStatus {
    guard(|| {
        let est = handle_mut(handle)?;
        if acc.is_null() || gyro.is_null() {
            return Err(null("acc or gyro"));
        }
        let a = std::slice::from_raw_parts(acc, 3);
        let w = std::slice::from_raw_parts(gyro, 3);
        let s = ImuSample { t, acc: Vector3::from_column_slice(a), gyro: Vector3::from_column_slice(w) };
        est.inner.push_imu(&s)?;
        Ok(())
    })
}

fn push(est: &mut PvEstimator, frame: ImageFrame, result: *mut PvFrameResult) -> Result<(), Failure> {
    let k = est.inner.intrinsics();
    let frame = downsample_image(&frame, k.width, k.height)?;
    let o = est.inner.push_frame(&frame)?;
    // SAFETY: caller guarantees `result` is null or writable
    if let Some(r) = unsafe { result.as_mut() } {
        *r = PvFrameResult { iters: o.iters as u32, valid_pixels: o.valid_pixels as u32, update_ms: o.update_ms };
    }
    Ok(())
}

fn check_size(est: &PvEstimator, width: u32, height: u32) -> Result<usize, Failure> {
    let size = (width as usize, height as usize);
    if size != est.input_size {
        return Err(Failure(
            PvStatus::DimensionMismatch,
            format!("frame {width}x{height} vs intrinsics {}x{}", est.input_size.0, est.input_size.1),
        ));
    }
    Ok(size.0 * size.1)
}

/// Feeds an 8-bit grayscale frame. `stride` is the row pitch in bytes
/// (0 means `width`). `result` may be NULL.
///
/// # Safety
/// `pixels` must hold `stride * height` bytes.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_push_frame_u8(
    handle: *mut PvEstimator,
    t: f64,
    pixels: *const u8,
    width: u32,
    height: u32,
    stride: u32,
    result: *mut PvFrameResult,
) -> PvStatus {
    guard(|| {
        let est = handle_mut(handle)?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        check_size(est, width, height)?;
        let (w, h) = (width as usize, height as usize);
        let stride = if stride == 0 { w } else { stride as usize };
        if stride < w {
            return Err(Failure(PvStatus::InvalidArgument, format!("stride {stride} < width {w}")));
        }
        let bytes = std::slice::from_raw_parts(pixels, stride * (h - 1) + w);
        let mut data = Vec::with_capacity(w * h);
        for row in 0..h {
            data.extend(bytes[row * stride..row * stride + w].iter().map(|&b| b as f64 / 255.0));
        }
        push(est, ImageFrame::new(t, w, h, data)?, result)
    })
}

/// Feeds a frame of doubles in [0, 1], row-major without padding.
/// `result` may be NULL.
///
/// # Safety
/// `pixels` must hold `width * height` doubles.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_push_frame_f64(
    handle: *mut PvEstimator,
    t: f64,
    pixels: *const f64,
    width: u32,
    height: u32,
    result: *mut PvFrameResult,
) -> PvStatus {
    guard(|| {
        let est = handle_mut(handle)?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let n = check_size(est, width, height)?;
        let data = std::slice::from_raw_parts(pixels, n).to_vec();
        push(est, ImageFrame::new(t, width as usize, height as usize, data)?, result)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_state(handle: *const PvEstimator, out: *mut PvState) -> PvStatus {
    guard(|| {
        let est = handle_ref(handle)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let x = est.inner.state();
        let arr = |v: Vector3<f64>| [v.x, v.y, v.z];
        *out = PvState {
            t: est.inner.time().unwrap_or(f64::NAN),
            alpha: x.alpha,
            vartheta: arr(x.vartheta),
            normal: arr(x.mu().into_inner()),
            up: arr(x.g().into_inner()),
            bias_acc: arr(x.b_a),
            bias_gyro: arr(x.b_w),
            distance: x.distance(),
            velocity: arr(x.velocity()),
        };
        Ok(())
    })
}

/// Writes the 14x14 error covariance, row-major, into `out`. The tangent
/// order is α, ϑ (3), normal (2), up (2), accelerometer bias (3), gyro
/// bias (3). `len` must be at least 196.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pv_estimator_covariance(handle: *const PvEstimator, out: *mut f64, len: usize) -> PvStatus {
    guard(|| {
        let est = handle_ref(handle)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = PV_STATE_DIM * PV_STATE_DIM;
        if len < n {
            return Err(Failure(PvStatus::DimensionMismatch, format!("need {n} doubles, got {len}")));
        }
        let dst = std::slice::from_raw_parts_mut(out, n);
        let m = est.inner.covariance().matrix();
        for (i, row) in dst.chunks_exact_mut(PV_STATE_DIM).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        Ok(())
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next `pv_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn pv_status_string(status: PvStatus) -> *const c_char {
    let s: &'static CStr = match status {
        PvStatus::Ok => c"ok",
        PvStatus::NullPointer => c"null pointer",
        PvStatus::InvalidArgument => c"invalid argument",
        PvStatus::DimensionMismatch => c"dimension mismatch",
        PvStatus::Parse => c"parse error",
        PvStatus::Diverged => c"estimator diverged",
        PvStatus::Numerical => c"numerical failure",
        PvStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

#[no_mangle]
pub extern "C" fn pv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
