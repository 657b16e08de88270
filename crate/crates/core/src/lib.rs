//! Post-detector localization for fiducial-marker navigation.
//!
//! The pipeline runs from marker corner detections to a smoothed vehicle
//! trajectory and its benchmark scores:
//!
//! 1. [`detect`]: detection records, JSON Lines ingestion, confidence
//!    thresholding, and a seeded synthetic detector.
//! 2. [`pnp`]: joint multi-marker pose estimation (EPnP initialization,
//!    damped Gauss-Newton refinement) in 4-DOF or 6-DOF.
//! 3. [`butterworth`]: low-pass design by bilinear transform, causal
//!    filtering of trajectories, FFT cutoff selection and Bode responses.
//! 4. [`metrics`]: Hausdorff and discrete Fréchet distances plus stage
//!    throughput.
//! 5. [`sim`]: reference flight profiles and the end-to-end experiment
//!    runner.
//!
//! Frame loops and Monte-Carlo sweeps run on rayon when the `parallel`
//! feature (default) is enabled, and sequentially otherwise.

pub mod butterworth;
pub mod detect;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod plot;
pub mod pnp;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, MarkerMap, Pose};
