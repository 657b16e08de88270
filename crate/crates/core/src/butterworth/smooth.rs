//! Smoothing of estimated pose trajectories.

use serde::{Deserialize, Serialize};

use super::{design, filtfilt, suggest_cutoff_pooled, FilterSpec, DEFAULT_ORDER, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::trajectory::{Sample, SampleStatus, Trajectory};

/// Allowed deviation of a timestamp step from the frame period.
const MAX_JITTER: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Forward filtering only; output lags the input.
    #[default]
    Causal,
    /// Forward-backward. Non-causal, offline evaluation only.
    ZeroPhase,
}

/// How the cutoff is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CutoffPolicy {
    /// A fixed cutoff in rad/s.
    Fixed { cutoff: f64 },
    /// `margin` times the energy-fraction cutoff of the position signals.
    Spectrum { energy_fraction: f64, margin: f64 },
}

pub const DEFAULT_ENERGY_FRACTION: f64 = 0.95;
pub const DEFAULT_CUTOFF_MARGIN: f64 = 20.0;

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy::Spectrum { energy_fraction: DEFAULT_ENERGY_FRACTION, margin: DEFAULT_CUTOFF_MARGIN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
    #[serde(default)]
    pub mode: FilterMode,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            order: DEFAULT_ORDER,
            sample_rate: DEFAULT_SAMPLE_RATE,
            cutoff: CutoffPolicy::default(),
            mode: FilterMode::Causal,
        }
    }
}

impl SmoothingConfig {
    /// Resolves the cutoff against `raw` and returns the concrete spec.
    pub fn resolve(&self, raw: &Trajectory) -> Result<FilterSpec> {
        let cutoff = match self.cutoff {
            CutoffPolicy::Fixed { cutoff } => cutoff,
            CutoffPolicy::Spectrum { energy_fraction, margin } => {
                auto_cutoff(raw, self.sample_rate, energy_fraction, margin)?
            }
        };
        FilterSpec::new(self.order, cutoff, self.sample_rate)
    }
}

/// Gap-filled pose sequence with θ unwrapped: `(x, y, z, θ)` channels.
fn hold_and_unwrap(traj: &Trajectory) -> Result<[Vec<f64>; 4]> {
    let first = traj.samples.iter().find_map(|s| s.pose).ok_or(Error::EmptyTrajectory)?;
    let mut last = first;
    let mut prev_theta = first.theta;
    let mut out: [Vec<f64>; 4] = Default::default();
    for s in &traj.samples {
        if let Some(p) = s.pose.filter(|_| !s.is_gap()) {
            last = p;
        }
        // Unwrap relative to the previous value.
        let theta = prev_theta + crate::geometry::wrap_angle(last.theta - prev_theta);
        prev_theta = theta;
        for (ch, v) in out.iter_mut().zip([last.x, last.y, last.z, theta]) {
            ch.push(v);
        }
    }
    Ok(out)
}

fn check_uniform(traj: &Trajectory, sample_rate: f64) -> Result<()> {
    let period = 1.0 / sample_rate;
    let limit = MAX_JITTER * period;
    let jitter = traj.samples.windows(2).map(|w| (w[1].t - w[0].t - period).abs()).fold(0.0, f64::max);
    if jitter > limit || jitter.is_nan() {
        return Err(Error::NonUniformSampling { jitter, limit });
    }
    Ok(())
}

/// Energy-fraction cutoff of the gap-filled positions (energy pooled over
/// x, y and z), times `margin`, clamped below Nyquist.
///
/// The energy fraction alone lands on the dominant motion frequency, which
/// would attenuate the motion itself; the margin keeps the passband above
/// it while still rejecting the broadband detection noise.
pub fn auto_cutoff(raw: &Trajectory, sample_rate: f64, energy_fraction: f64, margin: f64) -> Result<f64> {
    if !(margin.is_finite() && margin >= 1.0) {
        return Err(Error::InvalidParameter(format!("cutoff margin must be at least 1, got {margin}")));
    }
    let channels = hold_and_unwrap(raw)?;
    let base = suggest_cutoff_pooled(&[&channels[0], &channels[1], &channels[2]], sample_rate, energy_fraction)?;
    Ok((base * margin).min(0.99 * std::f64::consts::PI * sample_rate))
}

/// Filters x, y, z and unwrapped θ independently.
///
/// Gaps are filled by zero-order hold (leading gaps take the first pose)
/// and come back marked [`SampleStatus::Interpolated`]. Linear
/// interpolation would track better across long gaps but needs the next
/// pose, which a causal filter does not have.
pub fn filter_trajectory(spec: &FilterSpec, raw: &Trajectory, mode: FilterMode) -> Result<Trajectory> {
    spec.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    check_uniform(raw, spec.sample_rate)?;
    let channels = hold_and_unwrap(raw)?;
    let filter = design(spec)?;
    let mut filtered = Vec::with_capacity(4);
    for ch in &channels {
        filtered.push(match mode {
            FilterMode::Causal => filter.clone().filter(ch)?,
            FilterMode::ZeroPhase => filtfilt(&filter, ch)?,
        });
    }
    let samples = raw
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pose = Pose::new(filtered[0][i], filtered[1][i], filtered[2][i], filtered[3][i]);
            let status = if s.is_gap() || s.pose.is_none() { SampleStatus::Interpolated } else { s.status };
            Sample { pose: Some(pose), status, ..*s }
        })
        .collect();
    Ok(Trajectory { samples })
}
