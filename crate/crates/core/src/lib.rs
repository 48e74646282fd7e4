//! Direct visual-inertial ego-motion over a single plane.
//!
//! The filter state is the inverse distance to the plane, the velocity
//! scaled by that inverse distance, the plane normal and up direction as unit
//! vectors in the camera frame, and the IMU biases. Prediction integrates
//! the IMU; each camera frame is aligned photometrically against the
//! previous one through the continuous homography of the plane, using an
//! iterated Kalman update in information form.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod image;
pub mod io;
pub mod manifold;
pub mod measurement;
pub mod selftest;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use estimator::{run_dataset, Estimator, FrameOutcome, RunOutput};
pub use image::{CameraIntrinsics, ImageFrame};
pub use manifold::{Rotation, UnitVector3};
pub use state::{ErrorCovariance, ImuSample, NoiseParams, State};
