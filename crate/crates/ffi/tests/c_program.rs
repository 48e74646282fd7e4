//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "planar_vio.h"

int main(void) {
    PvIntrinsics k = {60.0, 60.0, 44.5, 28.5, 90, 58};
    PvEstimator *h = NULL;
    if (pv_estimator_new(&k, &h) != PV_STATUS_OK) return 1;

    static unsigned char px[90 * 58];
    double acc[3] = {0.0, 0.0, -9.81}, gyro[3] = {0.0, 0.0, 0.0};
    for (int f = 0; f < 4; f++) {
        double t = f / 30.0;
        for (int i = 0; i < 90 * 58; i++) px[i] = (unsigned char)((i * 37) % 200 + 20);
        if (pv_estimator_push_imu(h, t, acc, gyro) != PV_STATUS_OK) return 2;
        PvFrameResult r;
        if (pv_estimator_push_frame_u8(h, t, px, 90, 58, 0, &r) != PV_STATUS_OK) return 3;
    }
    PvState s;
    if (pv_estimator_state(h, &s) != PV_STATUS_OK) return 4;
    if (!(s.alpha > 0.0) || fabs(s.t - 0.1) > 1e-12) return 5;

    double cov[PV_STATE_DIM * PV_STATE_DIM];
    if (pv_estimator_covariance(h, cov, PV_STATE_DIM * PV_STATE_DIM) != PV_STATUS_OK) return 6;

    if (pv_estimator_push_frame_u8(h, 0.2, px, 91, 58, 0, NULL) != PV_STATUS_DIMENSION_MISMATCH) return 7;
    const char *msg = pv_last_error_message();
    if (msg == NULL || strstr(msg, "91x58") == NULL) return 8;

    pv_estimator_free(h);
    printf("ok %s %s\n", pv_version(), pv_status_string(PV_STATUS_OK));
    return 0;
}
"#;

fn lib_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = lib_dir().join("libplanar_vio_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap_or_else(|e| panic!("C compiler `{cc}` not runnable: {e}"));
    assert!(out.status.success(), "compile failed:\n{}", String::from_utf8_lossy(&out.stderr));

    let run = Command::new(&exe).output().unwrap();
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {text}", run.status.code());
    assert_eq!(text.trim(), format!("ok {} ok", env!("CARGO_PKG_VERSION")));
}
