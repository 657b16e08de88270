//! Timed pose sequences and their CSV form.
//!
//! ```text
//! t,x,y,z,theta,rms,n_markers,converged,cause
//! 0.0333333333,2.01,-3,1,1.57079633,0.41,8,1,
//! 0.0666666667,,,,,,1,0,insufficient-points
//! ```
//!
//! Gap rows leave the pose fields empty and name a cause. Rows filled in by
//! the smoother carry the cause `interpolated`. Numbers use 9 significant
//! digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::detect::TimedPose;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::io::fmt_g9;
use crate::pnp::{FrameEstimate, GapCause};

pub const CSV_HEADER: &str = "t,x,y,z,theta,rms,n_markers,converged,cause";
const INTERPOLATED: &str = "interpolated";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleStatus {
    /// Pose measured (or given as reference) for this frame.
    Measured,
    /// No pose for this frame.
    Gap(GapCause),
    /// Pose filled in across a gap.
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub pose: Option<Pose>,
    pub rms: Option<f64>,
    pub n_markers: usize,
    pub converged: bool,
    pub status: SampleStatus,
}

impl Sample {
    pub fn reference(t: f64, pose: Pose) -> Self {
        Sample { t, pose: Some(pose), rms: None, n_markers: 0, converged: true, status: SampleStatus::Measured }
    }

    pub fn is_gap(&self) -> bool {
        matches!(self.status, SampleStatus::Gap(_))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn from_reference(path: &[TimedPose]) -> Self {
        Trajectory { samples: path.iter().map(|tp| Sample::reference(tp.t, tp.pose)).collect() }
    }

    pub fn from_estimates(frames: &[FrameEstimate]) -> Self {
        let samples = frames
            .iter()
            .map(|f| match &f.result {
                Ok(est) => Sample {
                    t: f.t,
                    pose: Some(est.pose),
                    rms: Some(est.reprojection_rms),
                    n_markers: est.num_markers,
                    converged: est.converged,
                    status: SampleStatus::Measured,
                },
                Err(cause) => Sample {
                    t: f.t,
                    pose: None,
                    rms: None,
                    n_markers: f.num_detections,
                    converged: false,
                    status: SampleStatus::Gap(*cause),
                },
            })
            .collect();
        Trajectory { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn gap_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_gap()).count()
    }

    /// Timestamps and positions of the samples that carry a pose.
    pub fn timed_positions(&self) -> Vec<(f64, [f64; 3])> {
        self.samples.iter().filter_map(|s| s.pose.map(|p| (s.t, [p.x, p.y, p.z]))).collect()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.timed_positions().into_iter().map(|(_, p)| p).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let opt = |v: Option<f64>| v.map(fmt_g9).unwrap_or_default();
            let cause = match s.status {
                SampleStatus::Measured => "",
                SampleStatus::Gap(c) => c.as_str(),
                SampleStatus::Interpolated => INTERPOLATED,
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_g9(s.t),
                opt(s.pose.map(|p| p.x)),
                opt(s.pose.map(|p| p.y)),
                opt(s.pose.map(|p| p.z)),
                opt(s.pose.map(|p| p.theta)),
                opt(s.rms),
                s.n_markers,
                u8::from(s.converged),
                cause
            );
        }
        out
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let schema = |line: usize, message: String| Error::Schema { path: origin.to_string(), line, message };
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((_, h)) => return Err(schema(1, format!("expected header `{CSV_HEADER}`, found `{h}`"))),
            None => return Err(schema(1, "missing header".into())),
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(schema(lineno, format!("expected 9 fields, found {}", fields.len())));
            }
            let num = |idx: usize, name: &str| -> Result<Option<f64>> {
                let f = fields[idx];
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    path: origin.to_string(),
                    line: lineno,
                    message: format!("{name}: {e}"),
                })
            };
            let t = num(0, "t")?.ok_or_else(|| schema(lineno, "missing field t".into()))?;
            let coords = [num(1, "x")?, num(2, "y")?, num(3, "z")?, num(4, "theta")?];
            let pose = match coords {
                [Some(x), Some(y), Some(z), Some(th)] => Some(Pose::new(x, y, z, th)),
                [None, None, None, None] => None,
                _ => return Err(schema(lineno, "pose fields must be all present or all empty".into())),
            };
            let rms = num(5, "rms")?;
            let n_markers = fields[6].parse::<usize>().map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: lineno,
                message: format!("n_markers: {e}"),
            })?;
            let converged = match fields[7] {
                "1" => true,
                "0" => false,
                other => return Err(schema(lineno, format!("converged must be 0 or 1, found `{other}`"))),
            };
            let status = match (fields[8], pose.is_some()) {
                ("", true) => SampleStatus::Measured,
                (INTERPOLATED, true) => SampleStatus::Interpolated,
                (c, false) => SampleStatus::Gap(
                    GapCause::parse(c).ok_or_else(|| schema(lineno, format!("gap row needs a cause, found `{c}`")))?,
                ),
                (c, true) => return Err(schema(lineno, format!("unexpected cause `{c}` on a row with a pose"))),
            };
            samples.push(Sample { t, pose, rms, n_markers, converged, status });
        }
        Ok(Trajectory { samples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&crate::io::read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_traj() -> Trajectory {
        Trajectory {
            samples: vec![
                Sample {
                    t: 0.0,
                    pose: Some(Pose::new(2.0, -3.0, 1.0, 1.5)),
                    rms: Some(0.25),
                    n_markers: 8,
                    converged: true,
                    status: SampleStatus::Measured,
                },
                Sample {
                    t: 1.0 / 30.0,
                    pose: None,
                    rms: None,
                    n_markers: 1,
                    converged: false,
                    status: SampleStatus::Gap(GapCause::InsufficientPoints),
                },
                Sample {
                    t: 2.0 / 30.0,
                    pose: Some(Pose::new(2.0, -3.0, 1.0, 1.5)),
                    rms: None,
                    n_markers: 0,
                    converged: false,
                    status: SampleStatus::Interpolated,
                },
            ],
        }
    }

    #[test]
    fn csv_layout() {
        let csv = sample_traj().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,2,-3,1,1.5,0.25,8,1,");
        assert_eq!(lines[2], "0.0333333333,,,,,,1,0,insufficient-points");
        assert_eq!(lines[3], "0.0666666667,2,-3,1,1.5,,0,0,interpolated");
    }

    #[test]
    fn csv_round_trip_at_nine_digits() {
        let t = sample_traj();
        let back = Trajectory::from_csv(&t.to_csv(), "mem").unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.samples[0], t.samples[0]);
        assert_eq!(back.samples[1].status, t.samples[1].status);
        assert_eq!(back.samples[1].pose, None);
        assert!((back.samples[2].t - t.samples[2].t).abs() < 1e-9);
        assert_eq!(back.to_csv(), t.to_csv());
    }

    #[test]
    fn bad_header_and_rows_rejected() {
        assert!(matches!(Trajectory::from_csv("t,x\n", "m"), Err(Error::Schema { line: 1, .. })));
        let bad = format!("{CSV_HEADER}\n0,1,2,,0,,0,1,\n");
        assert!(matches!(Trajectory::from_csv(&bad, "m"), Err(Error::Schema { line: 2, .. })));
        let bad = format!("{CSV_HEADER}\n0,,,,,,0,0,\n");
        assert!(matches!(Trajectory::from_csv(&bad, "m"), Err(Error::Schema { line: 2, .. })));
        let bad = format!("{CSV_HEADER}\n0,a,2,3,0,,0,1,\n");
        assert!(matches!(Trajectory::from_csv(&bad, "m"), Err(Error::Parse { line: 2, .. })));
    }
}
