#ifndef PLANAR_VIO_H
#define PLANAR_VIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Number of error-state dimensions.
#define PV_STATE_DIM 14

typedef enum PvStatus {
  PV_STATUS_OK = 0,
  PV_STATUS_NULL_POINTER = 1,
  PV_STATUS_INVALID_ARGUMENT = 2,
  PV_STATUS_DIMENSION_MISMATCH = 3,
  PV_STATUS_PARSE = 4,
  PV_STATUS_DIVERGED = 5,
  PV_STATUS_NUMERICAL = 6,
  PV_STATUS_PANIC = 7,
} PvStatus;

// Opaque estimator handle.
typedef struct PvEstimator PvEstimator;

// Pinhole intrinsics of the frames that will be pushed.
typedef struct PvIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
} PvIntrinsics;

// Per-frame result of `pv_estimator_push_frame_u8` and friends.
typedef struct PvFrameResult {
  // 0 when the frame only became the reference or the update was skipped.
  uint32_t iters;
  uint32_t valid_pixels;
  double update_ms;
} PvFrameResult;

// Filter state at the current filter time. `t` is NaN before the first
// measurement. Unit vectors are expressed in the camera frame.
typedef struct PvState {
  double t;
  // Inverse distance to the plane (1/m).
  double alpha;
  // Velocity scaled by inverse distance (1/s).
  double vartheta[3];
  // Plane normal, pointing from the camera toward the plane.
  double normal[3];
  // Up direction.
  double up[3];
  double bias_acc[3];
  double bias_gyro[3];
  // Metric distance to the plane (m).
  double distance;
  // Metric velocity (m/s).
  double velocity[3];
} PvState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates an estimator with default settings. Frames larger than the
// default processing size (90x58) are area-averaged down to it.
//
// # Safety
// `intrinsics` must point to a valid `PvIntrinsics`; `out` must be writable.
enum PvStatus pv_estimator_new(const struct PvIntrinsics *intrinsics, struct PvEstimator **out);

// Creates an estimator from `key = value` configuration text, as accepted
// by the `run` subcommand's `--config` file.
//
// # Safety
// `config_text` must be a NUL-terminated string; see `pv_estimator_new`.
enum PvStatus pv_estimator_new_with_config(const char *config_text,
                                           const struct PvIntrinsics *intrinsics,
                                           struct PvEstimator **out);

// Releases an estimator. Passing NULL is a no-op.
//
// # Safety
// `handle` must come from a `pv_estimator_new*` call and not be used after.
void pv_estimator_free(struct PvEstimator *handle);

// Feeds one IMU sample: accelerometer in m/s², gyro in rad/s, both in the
// camera frame. Timestamps must not decrease.
//
// # Safety
// `acc` and `gyro` must each point to 3 doubles.
enum PvStatus pv_estimator_push_imu(struct PvEstimator *handle,
                                    double t,
                                    const double *acc,
                                    const double *gyro);

// Feeds an 8-bit grayscale frame. `stride` is the row pitch in bytes
// (0 means `width`). `result` may be NULL.
//
// # Safety
// `pixels` must hold `stride * height` bytes.
enum PvStatus pv_estimator_push_frame_u8(struct PvEstimator *handle,
                                         double t,
                                         const uint8_t *pixels,
                                         uint32_t width,
                                         uint32_t height,
                                         uint32_t stride,
                                         struct PvFrameResult *result);

// Feeds a frame of doubles in [0, 1], row-major without padding.
// `result` may be NULL.
//
// # Safety
// `pixels` must hold `width * height` doubles.
enum PvStatus pv_estimator_push_frame_f64(struct PvEstimator *handle,
                                          double t,
                                          const double *pixels,
                                          uint32_t width,
                                          uint32_t height,
                                          struct PvFrameResult *result);

// # Safety
// `out` must be writable.
enum PvStatus pv_estimator_state(const struct PvEstimator *handle, struct PvState *out);

// Writes the 14x14 error covariance, row-major, into `out`. The tangent
// order is α, ϑ (3), normal (2), up (2), accelerometer bias (3), gyro
// bias (3). `len` must be at least 196.
//
// # Safety
// `out` must hold `len` doubles.
enum PvStatus pv_estimator_covariance(const struct PvEstimator *handle, double *out, size_t len);

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next `pv_*` call on the same thread.
const char *pv_last_error_message(void);

// Static description of a status code.
const char *pv_status_string(enum PvStatus status);

const char *pv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLANAR_VIO_H */
