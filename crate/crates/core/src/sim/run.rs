//! Experiment orchestration: reference → detections → estimate → filter →
//! evaluate, plus artifact and manifest output.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use super::config::ResolvedConfig;
use super::{generate_reference, visible_fraction, TrajectoryProfile};
use crate::butterworth::{filter_trajectory, FilterSpec};
use crate::detect::{detections_to_jsonl, synthesize_detections, threshold, Detection, TimedPose};
use crate::error::Result;
use crate::metrics::{format_table, measure_fps, yaw_rms, FpsStats, MetricReport, FPS_REPETITIONS};
use crate::pnp::{estimate_trajectory, frames_uniform, EstimateOptions, FrameStamp};
use crate::trajectory::Trajectory;

/// Files written per profile, in manifest order.
pub const ARTIFACT_NAMES: [&str; 6] =
    ["truth.csv", "detections.jsonl", "raw.csv", "filtered.csv", "report_raw.json", "report_filtered.json"];

/// Share of gap frames above which a run is flagged.
const GAP_WARNING_FRACTION: f64 = 0.2;

/// Everything one profile produces.
#[derive(Debug, Clone)]
pub struct ProfileRun {
    pub profile: TrajectoryProfile,
    pub truth: Trajectory,
    /// Detector output before confidence thresholding.
    pub detections: Vec<Detection>,
    pub raw: Trajectory,
    pub filtered: Trajectory,
    pub filter: FilterSpec,
    pub report_raw: MetricReport,
    pub report_filtered: MetricReport,
    pub yaw_rms_raw: f64,
    pub yaw_rms_filtered: f64,
    pub gap_fraction: f64,
    pub visible_fraction: f64,
    pub warnings: Vec<String>,
}

/// Noise seed of one profile: the experiment seed mixed with the profile
/// name, so adding or reordering profiles leaves the others unchanged.
pub fn profile_seed(seed: u64, name: &str) -> u64 {
    let digest = crate::io::sha256_hex(format!("{seed}:{name}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

fn estimate_options(resolved: &ResolvedConfig, parallel: bool) -> EstimateOptions {
    EstimateOptions {
        mode: resolved.config.mode,
        min_markers: resolved.config.min_markers,
        parallel,
        ..EstimateOptions::default()
    }
}

fn frames_for(profile: &TrajectoryProfile) -> Vec<FrameStamp> {
    frames_uniform(profile.frame_count(), profile.frame_rate, 0.0)
}

/// Reference path and (unthresholded) detections of one profile.
pub fn simulate_profile(
    resolved: &ResolvedConfig,
    profile: &TrajectoryProfile,
) -> Result<(Vec<TimedPose>, Vec<Detection>)> {
    let cfg = &resolved.config;
    let path = generate_reference(profile, &cfg.room).map_err(|e| e.in_stage("reference"))?;
    let noise = cfg.noise.with_seed(profile_seed(cfg.seed, &profile.name));
    let detections =
        synthesize_detections(&resolved.map, &resolved.intrinsics, &path, &noise).map_err(|e| e.in_stage("detect"))?;
    Ok((path, detections))
}

/// Files written per profile by [`simulate`].
pub const SIMULATE_ARTIFACT_NAMES: [&str; 2] = ["truth.csv", "detections.jsonl"];

/// Writes `<out>/<profile>/{truth.csv,detections.jsonl}`, the resolved
/// `map.json` and `intrinsics.json`, and a `manifest.json` with hashes.
/// Nothing is written unless every profile simulates.
pub fn simulate(resolved: &ResolvedConfig, out_dir: &Path, parallel: bool) -> Result<serde_json::Value> {
    let results = crate::par::map(&resolved.config.profiles, parallel, |p| simulate_profile(resolved, p));
    let sims = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut summaries = serde_json::Map::new();
    for (profile, (path, detections)) in resolved.config.profiles.iter().zip(&sims) {
        let dir = out_dir.join(&profile.name);
        let contents =
            [Trajectory::from_reference(path).to_csv().into_bytes(), detections_to_jsonl(detections).into_bytes()];
        let mut hashes = BTreeMap::new();
        for (name, bytes) in SIMULATE_ARTIFACT_NAMES.into_iter().zip(contents) {
            crate::io::write_atomic(dir.join(name), &bytes)?;
            hashes.insert(name.to_string(), crate::io::sha256_hex(&bytes));
        }
        summaries.insert(
            profile.name.clone(),
            json!({
                "frames": path.len(),
                "frame_rate": profile.frame_rate,
                "noise_seed": profile_seed(resolved.config.seed, &profile.name),
                "artifacts": hashes,
            }),
        );
    }
    crate::io::write_atomic(out_dir.join("map.json"), resolved.map.to_json().as_bytes())?;
    crate::io::write_atomic(out_dir.join("intrinsics.json"), resolved.intrinsics.to_json().as_bytes())?;
    let manifest = json!({
        "config": resolved.to_json_value(),
        "config_digest": resolved.digest(),
        "profiles": summaries,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    crate::io::write_atomic(out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Runs one profile in memory. Errors carry the failing stage.
pub fn run_profile(resolved: &ResolvedConfig, profile: &TrajectoryProfile, parallel: bool) -> Result<ProfileRun> {
    let cfg = &resolved.config;
    let (map, k) = (&resolved.map, &resolved.intrinsics);
    let (path, detections) = simulate_profile(resolved, profile)?;
    let kept = threshold(&detections, cfg.min_confidence);
    let frames = frames_for(profile);
    let estimates = estimate_trajectory(&frames, &kept, map, k, &estimate_options(resolved, parallel));
    let raw = Trajectory::from_estimates(&estimates);
    let truth = Trajectory::from_reference(&path);

    let smoothing = crate::butterworth::SmoothingConfig { sample_rate: profile.frame_rate, ..cfg.filter };
    let filter = smoothing.resolve(&raw).map_err(|e| e.in_stage("filter"))?;
    let filtered = filter_trajectory(&filter, &raw, smoothing.mode).map_err(|e| e.in_stage("filter"))?;

    let digest = resolved.digest();
    let eval = |t: &Trajectory| -> Result<(MetricReport, f64)> {
        let r = MetricReport::compare(t, &truth, profile.frame_rate, &digest).map_err(|e| e.in_stage("evaluate"))?;
        let yaw = yaw_rms(t, &truth, profile.frame_rate).map_err(|e| e.in_stage("evaluate"))?;
        Ok((r, yaw))
    };
    let (report_raw, yaw_rms_raw) = eval(&raw)?;
    let (report_filtered, yaw_rms_filtered) = eval(&filtered)?;

    let gap_fraction = raw.gap_count() as f64 / raw.len() as f64;
    let visible = visible_fraction(&path, map, k, cfg.visibility_markers)?;
    let mut warnings = Vec::new();
    if gap_fraction > GAP_WARNING_FRACTION {
        warnings.push(format!(
            "{}: {:.1}% of frames have no pose (threshold {:.0}%)",
            profile.name,
            100.0 * gap_fraction,
            100.0 * GAP_WARNING_FRACTION
        ));
    }
    if visible < cfg.min_visible_fraction {
        warnings.push(format!(
            "{}: only {:.1}% of frames see at least {} markers (expected {:.0}%)",
            profile.name,
            100.0 * visible,
            cfg.visibility_markers,
            100.0 * cfg.min_visible_fraction
        ));
    }
    Ok(ProfileRun {
        profile: profile.clone(),
        truth,
        detections,
        raw,
        filtered,
        filter,
        report_raw,
        report_filtered,
        yaw_rms_raw,
        yaw_rms_filtered,
        gap_fraction,
        visible_fraction: visible,
        warnings,
    })
}

impl ProfileRun {
    /// Artifact contents keyed by [`ARTIFACT_NAMES`].
    pub fn artifacts(&self) -> Vec<(&'static str, Vec<u8>)> {
        let contents = [
            self.truth.to_csv().into_bytes(),
            detections_to_jsonl(&self.detections).into_bytes(),
            self.raw.to_csv().into_bytes(),
            self.filtered.to_csv().into_bytes(),
            self.report_raw.to_json().into_bytes(),
            self.report_filtered.to_json().into_bytes(),
        ];
        ARTIFACT_NAMES.into_iter().zip(contents).collect()
    }

    fn summary(&self, hashes: &BTreeMap<String, String>) -> serde_json::Value {
        json!({
            "cutoff_rad_s": self.filter.cutoff,
            "filter_order": self.filter.order,
            "frames": self.raw.len(),
            "gap_fraction": self.gap_fraction,
            "visible_fraction": self.visible_fraction,
            "yaw_rms_raw": self.yaw_rms_raw,
            "yaw_rms_filtered": self.yaw_rms_filtered,
            "artifacts": hashes,
        })
    }
}

/// Writes the artifacts of `run` into `dir` and returns their SHA-256.
pub fn write_profile_artifacts(run: &ProfileRun, dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut hashes = BTreeMap::new();
    for (name, bytes) in run.artifacts() {
        crate::io::write_atomic(dir.join(name), &bytes)?;
        hashes.insert(name.to_string(), crate::io::sha256_hex(&bytes));
    }
    Ok(hashes)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<ProfileRun>,
    pub config_digest: String,
    pub manifest: serde_json::Value,
    pub warnings: Vec<String>,
}

/// Runs every profile, then writes `<out>/<profile>/…` and
/// `<out>/manifest.json`. Nothing is written unless all profiles succeed.
///
/// With `parallel`, profiles and frames run on the rayon pool; results do
/// not depend on it.
pub fn run_experiment(resolved: &ResolvedConfig, out_dir: &Path, parallel: bool) -> Result<ExperimentOutcome> {
    let results = crate::par::map(&resolved.config.profiles, parallel, |p| run_profile(resolved, p, parallel));
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut summaries = serde_json::Map::new();
    let mut warnings = Vec::new();
    for run in &runs {
        let hashes = write_profile_artifacts(run, &out_dir.join(&run.profile.name))?;
        summaries.insert(run.profile.name.clone(), run.summary(&hashes));
        warnings.extend(run.warnings.iter().cloned());
    }
    let digest = resolved.digest();
    let manifest = json!({
        "config": resolved.to_json_value(),
        "config_digest": digest,
        "profiles": summaries,
        "warnings": warnings,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    crate::io::write_atomic(out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(ExperimentOutcome { runs, config_digest: digest, manifest, warnings })
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub experiment: ExperimentOutcome,
    /// `(label, report)` rows: raw then filtered for each profile.
    pub rows: Vec<(String, MetricReport)>,
    pub table: String,
}

/// [`run_experiment`] plus single-threaded throughput of the post-detector
/// stage: estimation for the raw rows, estimation and filtering for the
/// filtered rows. Timing goes to `<out>/timing.json` and the table only;
/// the report files stay deterministic.
pub fn bench(resolved: &ResolvedConfig, out_dir: &Path, parallel: bool) -> Result<BenchOutcome> {
    let experiment = run_experiment(resolved, out_dir, parallel)?;
    let mut rows = Vec::new();
    let mut timing = serde_json::Map::new();
    for run in &experiment.runs {
        let kept = threshold(&run.detections, resolved.config.min_confidence);
        let frames = frames_for(&run.profile);
        let opts = estimate_options(resolved, false);
        let estimate = || {
            let est = estimate_trajectory(&frames, &kept, &resolved.map, &resolved.intrinsics, &opts);
            Trajectory::from_estimates(&est)
        };
        let fps_raw = measure_fps(frames.len(), FPS_REPETITIONS, || {
            std::hint::black_box(estimate());
        })?;
        let mut failure = None;
        let fps_filtered = measure_fps(frames.len(), FPS_REPETITIONS, || {
            let raw = estimate();
            if let Err(e) = filter_trajectory(&run.filter, &raw, resolved.config.filter.mode) {
                failure = Some(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e.in_stage("bench"));
        }
        let stats = |s: FpsStats| json!({ "mean": s.mean, "std": s.std });
        timing.insert(
            run.profile.name.clone(),
            json!({
                "frames": frames.len(),
                "parallel": false,
                "repetitions": FPS_REPETITIONS,
                "raw": stats(fps_raw),
                "filtered": stats(fps_filtered),
            }),
        );
        rows.push((format!("{} raw", run.profile.name), MetricReport { fps: Some(fps_raw), ..run.report_raw.clone() }));
        rows.push((
            format!("{} filtered", run.profile.name),
            MetricReport { fps: Some(fps_filtered), ..run.report_filtered.clone() },
        ));
    }
    let label = json!({
        "label": "post-detector pipeline throughput (frames/s)",
        "profiles": timing,
    });
    let text = serde_json::to_string_pretty(&label).expect("timing serializes") + "\n";
    crate::io::write_atomic(out_dir.join("timing.json"), text.as_bytes())?;
    let table = format_table(&rows);
    Ok(BenchOutcome { experiment, rows, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::sim::{ExperimentConfig, NoiseConfig};

    fn short(cfg: ExperimentConfig) -> ResolvedConfig {
        let profiles = cfg.profiles.iter().map(|p| TrajectoryProfile { duration: 6.0, ..p.clone() }).collect();
        ExperimentConfig { profiles, ..cfg }.resolve(Path::new(".")).unwrap()
    }

    #[test]
    fn noiseless_run_is_exact() {
        let r = short(ExperimentConfig::default());
        for p in &r.config.profiles {
            let run = run_profile(&r, p, true).unwrap();
            assert!(run.report_raw.hausdorff < 1e-6, "{}", run.report_raw.hausdorff);
            assert_eq!(run.raw.gap_count(), 0);
            assert!(run.warnings.is_empty(), "{:?}", run.warnings);
        }
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let cfg = ExperimentConfig {
            seed: 3,
            noise: NoiseConfig { pixel_sigma: 2.0, dropout_prob: 0.1, ..NoiseConfig::default() },
            ..ExperimentConfig::default()
        };
        let r = short(cfg);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = run_experiment(&r, a.path(), true).unwrap();
        let ob = run_experiment(&r, b.path(), false).unwrap();
        assert_eq!(oa.manifest, ob.manifest);
        for p in &r.config.profiles {
            for name in ARTIFACT_NAMES {
                let fa = std::fs::read(a.path().join(&p.name).join(name)).unwrap();
                let fb = std::fs::read(b.path().join(&p.name).join(name)).unwrap();
                assert!(fa == fb, "{name} differs");
            }
        }
        assert_eq!(
            std::fs::read(a.path().join("manifest.json")).unwrap(),
            std::fs::read(b.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn simulate_matches_experiment_artifacts() {
        let cfg = ExperimentConfig {
            seed: 11,
            noise: NoiseConfig { pixel_sigma: 1.0, dropout_prob: 0.05, ..NoiseConfig::default() },
            ..ExperimentConfig::default()
        };
        let r = short(cfg);
        let sim = tempfile::tempdir().unwrap();
        let exp = tempfile::tempdir().unwrap();
        let manifest = simulate(&r, sim.path(), true).unwrap();
        run_experiment(&r, exp.path(), false).unwrap();
        for p in &r.config.profiles {
            for name in SIMULATE_ARTIFACT_NAMES {
                let a = std::fs::read(sim.path().join(&p.name).join(name)).unwrap();
                let b = std::fs::read(exp.path().join(&p.name).join(name)).unwrap();
                assert!(a == b, "{}/{name}", p.name);
            }
        }
        assert_eq!(manifest["config_digest"], r.digest());
        let map = crate::geometry::MarkerMap::load(sim.path().join("map.json")).unwrap();
        assert_eq!(map, r.map);
    }

    #[test]
    fn heavy_dropout_warns() {
        let cfg = ExperimentConfig {
            noise: NoiseConfig { dropout_prob: 0.9, ..NoiseConfig::default() },
            ..ExperimentConfig::default()
        };
        let r = short(cfg);
        let run = run_profile(&r, &r.config.profiles[0], true).unwrap();
        assert!(run.gap_fraction > 0.2);
        assert!(run.warnings.iter().any(|w| w.contains("no pose")));
    }

    #[test]
    fn failures_name_the_stage_and_write_nothing() {
        let mut cfg = ExperimentConfig::default();
        cfg.profiles[0].amplitude_x = 5.0;
        let r = short(cfg);
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(&r, dir.path(), true).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "reference", .. }), "{err}");
        assert!(matches!(err.root(), Error::OutOfRoom { .. }));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn seeds_differ_per_profile() {
        assert_ne!(profile_seed(1, "a"), profile_seed(1, "b"));
        assert_ne!(profile_seed(1, "a"), profile_seed(2, "a"));
        assert_eq!(profile_seed(1, "a"), profile_seed(1, "a"));
    }
}
