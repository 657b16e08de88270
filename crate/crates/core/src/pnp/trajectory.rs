//! Per-frame estimation over a detection stream.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{build_correspondences, solve_pose, Mode, PoseEstimate, SolveOptions, WeightPolicy};
use crate::detect::Detection;
use crate::error::Error;
use crate::geometry::{CameraIntrinsics, MarkerMap};

/// Index and timestamp of one camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStamp {
    pub frame: u64,
    pub t: f64,
}

/// `n` frames at `frame_rate` starting from `t0`.
pub fn frames_uniform(n: usize, frame_rate: f64, t0: f64) -> Vec<FrameStamp> {
    (0..n).map(|k| FrameStamp { frame: k as u64, t: t0 + k as f64 / frame_rate }).collect()
}

/// Frames `0..=max_frame` seen in `detections`. Frames without any detection
/// get `t = frame / frame_rate` offset from the first observed frame.
pub fn frames_from_detections(detections: &[Detection], frame_rate: f64) -> Vec<FrameStamp> {
    let seen: BTreeMap<u64, f64> = detections.iter().map(|d| (d.frame, d.t)).collect();
    let Some((&first, &t_first)) = seen.iter().next() else {
        return Vec::new();
    };
    let t0 = t_first - first as f64 / frame_rate;
    let last = *seen.keys().next_back().expect("non-empty");
    (0..=last)
        .map(|frame| FrameStamp { frame, t: seen.get(&frame).copied().unwrap_or(t0 + frame as f64 / frame_rate) })
        .collect()
}

/// Why a frame produced no pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapCause {
    InsufficientMarkers,
    InsufficientPoints,
    DegenerateConfiguration,
    UnknownMarkerId,
    SolveFailed,
}

impl GapCause {
    pub const ALL: [GapCause; 5] = [
        GapCause::InsufficientMarkers,
        GapCause::InsufficientPoints,
        GapCause::DegenerateConfiguration,
        GapCause::UnknownMarkerId,
        GapCause::SolveFailed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GapCause::InsufficientMarkers => "insufficient-markers",
            GapCause::InsufficientPoints => "insufficient-points",
            GapCause::DegenerateConfiguration => "degenerate-configuration",
            GapCause::UnknownMarkerId => "unknown-marker-id",
            GapCause::SolveFailed => "solve-failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for GapCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub frame: u64,
    pub t: f64,
    /// Detections that reached the solver.
    pub num_detections: usize,
    pub result: Result<PoseEstimate, GapCause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub mode: Mode,
    pub min_markers: usize,
    pub weights: WeightPolicy,
    pub solve: SolveOptions,
    /// Solve frames on the rayon pool (ignored without the `parallel` feature).
    pub parallel: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            mode: Mode::FourDof,
            min_markers: 1,
            weights: WeightPolicy::Uniform,
            solve: SolveOptions::default(),
            parallel: true,
        }
    }
}

fn estimate_frame(
    stamp: &FrameStamp,
    dets: &[Detection],
    map: &MarkerMap,
    k: &CameraIntrinsics,
    opts: &EstimateOptions,
) -> FrameEstimate {
    let gap = |cause| FrameEstimate { frame: stamp.frame, t: stamp.t, num_detections: dets.len(), result: Err(cause) };
    if dets.len() < opts.min_markers.max(1) {
        return gap(GapCause::InsufficientMarkers);
    }
    let corrs = match build_correspondences(dets, map, &opts.weights) {
        Ok(c) => c,
        Err(Error::UnknownMarkerId(_)) => return gap(GapCause::UnknownMarkerId),
        Err(_) => return gap(GapCause::SolveFailed),
    };
    let result = match solve_pose(&corrs, k, opts.mode, &opts.solve) {
        Ok(est) => Ok(est),
        // Keep the best iterate; the `converged` flag records the failure.
        Err(Error::NoConvergence(best)) => Ok(*best),
        Err(Error::InsufficientPoints { .. }) => Err(GapCause::InsufficientPoints),
        Err(Error::DegenerateConfiguration(_)) => Err(GapCause::DegenerateConfiguration),
        Err(_) => Err(GapCause::SolveFailed),
    };
    FrameEstimate { frame: stamp.frame, t: stamp.t, num_detections: dets.len(), result }
}

/// One estimate (or gap) per entry of `frames`, in the same order.
///
/// Frames are independent, so with `options.parallel` they are solved on the
/// rayon pool; the output order never depends on completion order.
pub fn estimate_trajectory(
    frames: &[FrameStamp],
    detections: &[Detection],
    map: &MarkerMap,
    intrinsics: &CameraIntrinsics,
    options: &EstimateOptions,
) -> Vec<FrameEstimate> {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let empty = Vec::new();
    crate::par::map(frames, options.parallel, |stamp| {
        let dets = by_frame.get(&stamp.frame).unwrap_or(&empty);
        estimate_frame(stamp, dets, map, intrinsics, options)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{synthesize_detections, NoiseSpec, TimedPose};
    use crate::geometry::{default_wall, Pose};
    use std::f64::consts::FRAC_PI_2;

    fn path(n: usize) -> Vec<TimedPose> {
        (0..n)
            .map(|k| {
                let t = k as f64 / 30.0;
                TimedPose { t, pose: Pose::new(2.0 + 0.5 * t.sin(), -3.0 + 0.2 * t.cos(), 1.0, FRAC_PI_2) }
            })
            .collect()
    }

    #[test]
    fn noiseless_stream_is_exact() {
        let p = path(60);
        let k = CameraIntrinsics::default();
        let dets = synthesize_detections(&default_wall(), &k, &p, &NoiseSpec::default()).unwrap();
        let frames = frames_uniform(p.len(), 30.0, 0.0);
        let out = estimate_trajectory(&frames, &dets, &default_wall(), &k, &EstimateOptions::default());
        assert_eq!(out.len(), 60);
        for (fe, tp) in out.iter().zip(&p) {
            let est = fe.result.as_ref().unwrap();
            assert!((est.pose.position() - tp.pose.position()).norm() < 1e-6);
        }
    }

    #[test]
    fn all_dropped_gives_only_gaps() {
        let p = path(20);
        let k = CameraIntrinsics::default();
        let noise = NoiseSpec { dropout_prob: 1.0, ..NoiseSpec::default() };
        let dets = synthesize_detections(&default_wall(), &k, &p, &noise).unwrap();
        let out = estimate_trajectory(
            &frames_uniform(20, 30.0, 0.0),
            &dets,
            &default_wall(),
            &k,
            &EstimateOptions::default(),
        );
        assert_eq!(out.len(), 20);
        assert!(out.iter().all(|f| f.result == Err(GapCause::InsufficientMarkers)));
    }

    #[test]
    fn min_markers_threshold() {
        let p = path(1);
        let k = CameraIntrinsics::default();
        let dets = synthesize_detections(&default_wall(), &k, &p, &NoiseSpec::default()).unwrap();
        let one = &dets[..1];
        let opts = EstimateOptions { min_markers: 2, ..EstimateOptions::default() };
        let out = estimate_trajectory(&frames_uniform(1, 30.0, 0.0), one, &default_wall(), &k, &opts);
        assert_eq!(out[0].result, Err(GapCause::InsufficientMarkers));
        // With the default threshold a single marker reaches the solver and
        // fails its point-count precondition.
        let out =
            estimate_trajectory(&frames_uniform(1, 30.0, 0.0), one, &default_wall(), &k, &EstimateOptions::default());
        assert_eq!(out[0].result, Err(GapCause::InsufficientPoints));
    }

    #[test]
    fn unknown_id_becomes_gap() {
        let p = path(1);
        let k = CameraIntrinsics::default();
        let mut dets = synthesize_detections(&default_wall(), &k, &p, &NoiseSpec::default()).unwrap();
        dets[2].id = 99;
        let out =
            estimate_trajectory(&frames_uniform(1, 30.0, 0.0), &dets, &default_wall(), &k, &EstimateOptions::default());
        assert_eq!(out[0].result, Err(GapCause::UnknownMarkerId));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let p = path(90);
        let k = CameraIntrinsics::default();
        let noise = NoiseSpec { pixel_sigma: 1.5, dropout_prob: 0.2, seed: 4, ..NoiseSpec::default() };
        let dets = synthesize_detections(&default_wall(), &k, &p, &noise).unwrap();
        let frames = frames_uniform(90, 30.0, 0.0);
        let seq = EstimateOptions { parallel: false, ..EstimateOptions::default() };
        let a = estimate_trajectory(&frames, &dets, &default_wall(), &k, &seq);
        let b = estimate_trajectory(&frames, &dets, &default_wall(), &k, &EstimateOptions::default());
        assert_eq!(a, b);
    }

    #[test]
    fn frames_from_detections_fills_missing_indices() {
        let p = path(10);
        let k = CameraIntrinsics::default();
        let dets = synthesize_detections(&default_wall(), &k, &p, &NoiseSpec::default()).unwrap();
        let kept: Vec<_> = dets.into_iter().filter(|d| d.frame != 4).collect();
        let frames = frames_from_detections(&kept, 30.0);
        assert_eq!(frames.len(), 10);
        assert!((frames[4].t - 4.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn gap_cause_names_round_trip() {
        for c in GapCause::ALL {
            assert_eq!(GapCause::parse(c.as_str()), Some(c));
        }
    }
}
