//! Trajectory similarity and throughput.
//!
//! Distances are computed on 3-D positions only. Heading is reported
//! separately by [`yaw_rms`] so the two never mix units.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::trajectory::Trajectory;

fn check<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<usize> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let dim = a[0].as_ref().len();
    for p in a.iter().chain(b) {
        if p.as_ref().len() != dim {
            return Err(Error::DimensionMismatch(dim, p.as_ref().len()));
        }
    }
    Ok(dim)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn directed<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P]) -> f64 {
    let nearest = crate::par::map(a, a.len() * b.len() > 1 << 16, |p| {
        b.iter().map(|q| dist(p.as_ref(), q.as_ref())).fold(f64::INFINITY, f64::min)
    });
    nearest.into_iter().fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff<P: AsRef<[f64]> + Sync>(a: &[P], b: &[P]) -> Result<f64> {
    check(a, b)?;
    Ok(directed(a, b).max(directed(b, a)))
}

/// Discrete Fréchet distance (Eiter–Mannila), keeping one row of the
/// table over the shorter sequence.
pub fn discrete_frechet<P: AsRef<[f64]>>(a: &[P], b: &[P]) -> Result<f64> {
    check(a, b)?;
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0.0f64; inner.len()];
    for (i, p) in outer.iter().enumerate() {
        let mut diag = 0.0f64;
        for (j, q) in inner.iter().enumerate() {
            let d = dist(p.as_ref(), q.as_ref());
            let up = row[j];
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => row[j - 1],
                (_, 0) => up,
                _ => up.min(diag).min(row[j - 1]),
            };
            diag = up;
            row[j] = d.max(best);
        }
    }
    Ok(row[inner.len() - 1])
}

/// Pairs each estimated pose with the reference sample nearest in time,
/// skipping estimates with no reference within half a frame period.
///
/// Returns `(estimated, reference)` index pairs into the two sample lists.
pub fn synchronize(estimated: &Trajectory, reference: &Trajectory, frame_rate: f64) -> Vec<(usize, usize)> {
    let max_skew = 0.5 / frame_rate;
    let refs: Vec<(usize, f64)> =
        reference.samples.iter().enumerate().filter(|(_, s)| s.pose.is_some()).map(|(i, s)| (i, s.t)).collect();
    let mut pairs = Vec::new();
    for (i, s) in estimated.samples.iter().enumerate() {
        if s.pose.is_none() || refs.is_empty() {
            continue;
        }
        let pos = refs.partition_point(|(_, t)| *t < s.t);
        let candidates = [pos.checked_sub(1), (pos < refs.len()).then_some(pos)];
        let best = candidates
            .into_iter()
            .flatten()
            .map(|k| refs[k])
            .min_by(|x, y| (x.1 - s.t).abs().total_cmp(&(y.1 - s.t).abs()));
        if let Some((j, t)) = best {
            if (t - s.t).abs() <= max_skew {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn paired_positions(
    estimated: &Trajectory,
    reference: &Trajectory,
    pairs: &[(usize, usize)],
) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let pos = |t: &Trajectory, i: usize| {
        let p = t.samples[i].pose.expect("synchronized samples carry poses");
        [p.x, p.y, p.z]
    };
    pairs.iter().map(|&(i, j)| (pos(estimated, i), pos(reference, j))).unzip()
}

/// Root-mean-square wrapped heading error over synchronized samples.
pub fn yaw_rms(estimated: &Trajectory, reference: &Trajectory, frame_rate: f64) -> Result<f64> {
    let pairs = synchronize(estimated, reference, frame_rate);
    if pairs.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let sum: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            let e = wrap_angle(estimated.samples[i].pose.unwrap().theta - reference.samples[j].pose.unwrap().theta);
            e * e
        })
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Mean and sample standard deviation of repeated throughput runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsStats {
    pub mean: f64,
    pub std: f64,
}

pub const FPS_REPETITIONS: usize = 5;
pub const MIN_TIMED_FRAMES: usize = 100;

impl FpsStats {
    pub fn from_samples(fps: &[f64]) -> Self {
        let n = fps.len() as f64;
        let mean = fps.iter().sum::<f64>() / n;
        let var = if fps.len() > 1 { fps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        FpsStats { mean, std: var.sqrt() }
    }
}

/// Times `stage` (which must process `frames` frames per call) over
/// `repetitions` runs. Only the closure is timed, so callers keep I/O and
/// detection synthesis outside it.
pub fn measure_fps(frames: usize, repetitions: usize, mut stage: impl FnMut()) -> Result<FpsStats> {
    if frames < MIN_TIMED_FRAMES {
        return Err(Error::TooFewFrames { need: MIN_TIMED_FRAMES, got: frames });
    }
    if repetitions == 0 {
        return Err(Error::InvalidParameter("at least one repetition is required".into()));
    }
    // One untimed warm-up run fills caches and the thread pool.
    stage();
    let fps: Vec<f64> = (0..repetitions)
        .map(|_| {
            let start = Instant::now();
            stage();
            frames as f64 / start.elapsed().as_secs_f64()
        })
        .collect();
    Ok(FpsStats::from_samples(&fps))
}

/// Similarity of one estimated trajectory against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hausdorff: f64,
    pub frechet: f64,
    /// Post-detector pipeline throughput, absent when not measured.
    pub fps: Option<FpsStats>,
    pub n_a: usize,
    pub n_b: usize,
    pub config_digest: String,
}

impl MetricReport {
    /// Compares the synchronized positions of `estimated` and `reference`.
    pub fn compare(
        estimated: &Trajectory,
        reference: &Trajectory,
        frame_rate: f64,
        config_digest: &str,
    ) -> Result<Self> {
        let pairs = synchronize(estimated, reference, frame_rate);
        let (a, b) = paired_positions(estimated, reference, &pairs);
        Ok(MetricReport {
            hausdorff: hausdorff(&a, &b)?,
            frechet: discrete_frechet(&a, &b)?,
            fps: None,
            n_a: a.len(),
            n_b: b.len(),
            config_digest: config_digest.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&crate::io::read_to_string(path)?, &path.display().to_string())
    }
}

/// Renders labeled reports as an aligned text table with the columns
/// `Method | Hausdorff (m) | Fréchet (m) | Runtime (FPS)`.
pub fn format_table(rows: &[(String, MetricReport)]) -> String {
    let header = ["Method", "Hausdorff (m)", "Fréchet (m)", "Runtime (FPS)"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|(label, r)| {
            [
                label.clone(),
                format!("{:.4}", r.hausdorff),
                format!("{:.4}", r.frechet),
                r.fps.map(|f| format!("{:.1} ± {:.1}", f.mean, f.std)).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let width =
        |c: usize| cells.iter().map(|r| r[c].chars().count()).chain([header[c].chars().count()]).max().unwrap_or(0);
    let widths: Vec<usize> = (0..4).map(width).collect();
    let mut out = String::new();
    let line = |out: &mut String, r: [&str; 4]| {
        let mut parts = Vec::with_capacity(4);
        for (c, s) in r.iter().enumerate() {
            let pad = widths[c] - s.chars().count();
            parts.push(if c == 0 { format!("{s}{}", " ".repeat(pad)) } else { format!("{}{s}", " ".repeat(pad)) });
        }
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for r in &cells {
        line(&mut out, [&r[0], &r[1], &r[2], &r[3]]);
    }
    out
}
