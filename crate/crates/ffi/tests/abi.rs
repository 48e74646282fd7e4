use std::ffi::{CStr, CString};
use std::ptr;

use planar_vio::io::RunConfig;
use planar_vio::run_dataset;
use planar_vio::sim::{simulate, SimConfig};
use planar_vio_ffi::*;

fn intrinsics(k: &planar_vio::CameraIntrinsics) -> PvIntrinsics {
    PvIntrinsics { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width as u32, height: k.height as u32 }
}

fn last_error() -> String {
    let p = pv_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn state(h: *const PvEstimator) -> PvState {
    let mut s = PvState::default();
    assert_eq!(unsafe { pv_estimator_state(h, &mut s) }, PvStatus::Ok);
    s
}

#[test]
fn streaming_matches_batch_run() {
    let out = simulate(&SimConfig { duration: 3.0, seed: 2, ..SimConfig::default() }).unwrap();
    let ds = &out.dataset;
    let batch = run_dataset(ds, &RunConfig::default()).unwrap();

    let k = intrinsics(&ds.intrinsics);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { pv_estimator_new(&k, &mut h) }, PvStatus::Ok);
    let mut imu = ds.imu.iter().peekable();
    let mut updates = 0;
    for (frame, expected) in ds.frames.iter().zip(&batch.estimates) {
        while let Some(s) = imu.next_if(|s| s.t <= frame.t) {
            let st = unsafe { pv_estimator_push_imu(h, s.t, s.acc.as_ptr(), s.gyro.as_ptr()) };
            assert_eq!(st, PvStatus::Ok);
        }
        let mut r = PvFrameResult::default();
        let st = unsafe {
            pv_estimator_push_frame_f64(h, frame.t, frame.data.as_ptr(), k.width, k.height, &mut r)
        };
        assert_eq!(st, PvStatus::Ok, "{}", last_error());
        updates += (r.iters > 0) as usize;
        let s = state(h);
        assert_eq!(s.t, expected.t);
        assert_eq!(s.alpha, expected.state.alpha);
        assert_eq!(s.vartheta, [expected.state.vartheta.x, expected.state.vartheta.y, expected.state.vartheta.z]);
    }
    assert_eq!(updates, ds.frames.len() - 1);

    let mut cov = vec![0.0; PV_STATE_DIM * PV_STATE_DIM];
    assert_eq!(unsafe { pv_estimator_covariance(h, cov.as_mut_ptr(), cov.len()) }, PvStatus::Ok);
    let last = batch.estimates.last().unwrap();
    for i in 0..PV_STATE_DIM {
        assert_eq!(cov[i * PV_STATE_DIM + i], last.variance[i]);
    }
    unsafe { pv_estimator_free(h) };
}

#[test]
fn larger_frames_are_area_averaged() {
    let out = simulate(&SimConfig { duration: 1.0, seed: 5, ..SimConfig::default() }).unwrap();
    let ds = &out.dataset;
    let batch = run_dataset(ds, &RunConfig::default()).unwrap();

    // pixel-replicated 2x frames average back to the originals exactly
    let k = ds.intrinsics;
    let big = PvIntrinsics {
        fx: 2.0 * k.fx,
        fy: 2.0 * k.fy,
        cx: (k.cx + 0.5) * 2.0 - 0.5,
        cy: (k.cy + 0.5) * 2.0 - 0.5,
        width: 2 * k.width as u32,
        height: 2 * k.height as u32,
    };
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { pv_estimator_new(&big, &mut h) }, PvStatus::Ok);
    let mut imu = ds.imu.iter().peekable();
    for (frame, expected) in ds.frames.iter().zip(&batch.estimates) {
        while let Some(s) = imu.next_if(|s| s.t <= frame.t) {
            unsafe { pv_estimator_push_imu(h, s.t, s.acc.as_ptr(), s.gyro.as_ptr()) };
        }
        let w = 2 * k.width;
        let bytes: Vec<u8> = (0..2 * k.height)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| (frame.at(x / 2, y / 2) * 255.0).round() as u8)
            .collect();
        let st = unsafe {
            pv_estimator_push_frame_u8(h, frame.t, bytes.as_ptr(), big.width, big.height, 0, ptr::null_mut())
        };
        assert_eq!(st, PvStatus::Ok, "{}", last_error());
        let s = state(h);
        assert!((s.alpha - expected.state.alpha).abs() < 1e-9 * expected.state.alpha);
    }
    unsafe { pv_estimator_free(h) };
}

#[test]
fn padded_rows_are_skipped() {
    let k = PvIntrinsics { fx: 60.0, fy: 60.0, cx: 44.5, cy: 28.5, width: 90, height: 58 };
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(pv_estimator_new(&k, &mut a), PvStatus::Ok);
        assert_eq!(pv_estimator_new(&k, &mut b), PvStatus::Ok);
    }
    let stride = 96;
    for (i, t) in [0.0, 1.0 / 30.0, 2.0 / 30.0].into_iter().enumerate() {
        let tight: Vec<u8> = (0..90 * 58).map(|p| ((p * 7 + i * 13) % 251) as u8).collect();
        let mut padded = vec![255u8; stride * 58];
        for y in 0..58 {
            padded[y * stride..y * stride + 90].copy_from_slice(&tight[y * 90..(y + 1) * 90]);
        }
        unsafe {
            assert_eq!(pv_estimator_push_frame_u8(a, t, tight.as_ptr(), 90, 58, 0, ptr::null_mut()), PvStatus::Ok);
            let st = pv_estimator_push_frame_u8(b, t, padded.as_ptr(), 90, 58, stride as u32, ptr::null_mut());
            assert_eq!(st, PvStatus::Ok);
        }
    }
    let (sa, sb) = (state(a), state(b));
    assert_eq!(sa.alpha, sb.alpha);
    assert_eq!(sa.normal, sb.normal);
    unsafe {
        pv_estimator_free(a);
        pv_estimator_free(b);
    }
}

#[test]
fn errors_come_back_as_codes() {
    let k = PvIntrinsics { fx: 60.0, fy: 60.0, cx: 44.5, cy: 28.5, width: 90, height: 58 };
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(pv_estimator_new(ptr::null(), &mut h), PvStatus::NullPointer);
        assert!(h.is_null());
        assert!(last_error().contains("intrinsics"));

        let bad = PvIntrinsics { fx: -1.0, ..k };
        assert_eq!(pv_estimator_new(&bad, &mut h), PvStatus::InvalidArgument);

        let small = PvIntrinsics { width: 40, ..k };
        assert_eq!(pv_estimator_new(&small, &mut h), PvStatus::DimensionMismatch);

        let cfg = CString::new("max_iters = 2\nwarp_speed = 9\n").unwrap();
        assert_eq!(pv_estimator_new_with_config(cfg.as_ptr(), &k, &mut h), PvStatus::Parse);
        assert!(last_error().contains("warp_speed"));

        let cfg = CString::new("max_iters = 1\n").unwrap();
        assert_eq!(pv_estimator_new_with_config(cfg.as_ptr(), &k, &mut h), PvStatus::Ok);
        assert!(pv_last_error_message().is_null());
        assert!(state(h).t.is_nan());

        let acc = [0.0, 0.0, -9.81];
        let gyro = [0.0; 3];
        assert_eq!(pv_estimator_push_imu(h, 1.0, acc.as_ptr(), gyro.as_ptr()), PvStatus::Ok);
        assert_eq!(pv_estimator_push_imu(h, 0.5, acc.as_ptr(), gyro.as_ptr()), PvStatus::InvalidArgument);
        assert_eq!(pv_estimator_push_imu(h, 2.0, ptr::null(), gyro.as_ptr()), PvStatus::NullPointer);

        let px = vec![0.5; 90 * 58];
        assert_eq!(
            pv_estimator_push_frame_f64(h, 2.0, px.as_ptr(), 91, 58, ptr::null_mut()),
            PvStatus::DimensionMismatch
        );
        let over = vec![1.5; 90 * 58];
        assert_eq!(
            pv_estimator_push_frame_f64(h, 2.0, over.as_ptr(), 90, 58, ptr::null_mut()),
            PvStatus::InvalidArgument
        );
        let mut small_buf = [0.0; 10];
        assert_eq!(
            pv_estimator_covariance(h, small_buf.as_mut_ptr(), small_buf.len()),
            PvStatus::DimensionMismatch
        );
        assert_eq!(pv_estimator_state(ptr::null(), &mut PvState::default()), PvStatus::NullPointer);

        pv_estimator_free(h);
        pv_estimator_free(ptr::null_mut());
    }
}

#[test]
fn status_strings_and_version() {
    let s = unsafe { CStr::from_ptr(pv_status_string(PvStatus::Diverged)) };
    assert_eq!(s.to_str().unwrap(), "estimator diverged");
    let v = unsafe { CStr::from_ptr(pv_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
