//! `markerloc`: each pipeline stage as a subcommand, connected by files.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use markerloc::butterworth::{
    self, amplitude_spectrum, auto_cutoff, filter_trajectory, frequency_response, log_space, spectrum_to_csv,
    suggest_cutoff, FilterMode, FilterSpec, DEFAULT_CUTOFF_MARGIN, DEFAULT_ORDER, DEFAULT_SAMPLE_RATE,
};
use markerloc::detect::{read_detections, threshold, DEFAULT_MIN_CONFIDENCE};
use markerloc::geometry::{
    wall_marker_map, DEFAULT_MARKER_COUNT, DEFAULT_MARKER_HEIGHT, DEFAULT_MARKER_SIDE, DEFAULT_MARKER_SPACING,
};
use markerloc::io::write_atomic;
use markerloc::metrics::MetricReport;
use markerloc::plot::{stack, trajectory_overlay, Figure};
use markerloc::pnp::{estimate_trajectory, frames_from_detections, frames_uniform, EstimateOptions, Mode};
use markerloc::sim::{ExperimentConfig, ResolvedConfig, CONFIG_DIR_ENV};
use markerloc::trajectory::Trajectory;
use markerloc::{CameraIntrinsics, Error, MarkerMap};

const DEFAULT_CONFIG: &str = "default.toml";

#[derive(Parser)]
#[command(name = "markerloc", version, about = "Fiducial-marker localization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-truth paths and synthetic detections for every configured profile.
    Simulate(SimulateArgs),
    /// Per-frame pose estimates (raw trajectory CSV) from a detections file.
    Estimate(EstimateArgs),
    /// Butterworth-smoothed trajectory from a raw trajectory CSV.
    Filter(FilterArgs),
    /// Hausdorff and Fréchet distances between two trajectories (JSON report).
    Evaluate(EvaluateArgs),
    /// Full experiment with throughput, printed as a table.
    Bench(BenchArgs),
    /// Analog Butterworth magnitude and phase over a log-spaced grid.
    Bode(BodeArgs),
    /// One-sided amplitude spectrum of one CSV column and a suggested cutoff.
    Spectrum(SpectrumArgs),
    /// Marker map JSON for a row of square markers on the wall y = 0.
    MapGen(MapGenArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML) or a run manifest (JSON). Bare names are
    /// also looked up in the config directory.
    #[arg(long, short, default_value = DEFAULT_CONFIG)]
    config: PathBuf,
    /// Directory searched for bare config names.
    #[arg(long, env = CONFIG_DIR_ENV, hide_env_values = true)]
    config_dir: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Run profiles and frames on one thread.
    #[arg(long)]
    sequential: bool,
    /// Also write `<profile>/trajectories.svg`.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "4dof")]
    FourDof,
    #[value(name = "6dof")]
    SixDof,
}

#[derive(Args)]
struct EstimateArgs {
    /// Detections, one JSON object per line.
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long, value_enum, default_value = "4dof")]
    mode: ModeArg,
    /// Frames with fewer detected markers become gaps.
    #[arg(long, default_value_t = 1)]
    min_markers: usize,
    /// Detections below this confidence are discarded.
    #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
    min_confidence: f64,
    /// Number of frames; defaults to the last frame seen in the detections.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    frame_rate: f64,
    #[arg(long)]
    sequential: bool,
    /// Output CSV; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Raw trajectory CSV.
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Cutoff in rad/s.
    #[arg(long, conflicts_with = "auto_cutoff", required_unless_present = "auto_cutoff")]
    cutoff: Option<f64>,
    /// Pick the cutoff from the energy fraction of the position spectrum.
    #[arg(long, value_name = "ENERGY_FRACTION")]
    auto_cutoff: Option<f64>,
    /// Multiplier applied to the automatic cutoff.
    #[arg(long, default_value_t = DEFAULT_CUTOFF_MARGIN, requires = "auto_cutoff")]
    margin: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: f64,
    /// Forward-backward filtering (non-causal, no lag).
    #[arg(long)]
    zero_phase: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Raw vs filtered overlay.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated trajectory CSV.
    estimated: PathBuf,
    /// Reference trajectory CSV.
    reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    frame_rate: f64,
    /// Recorded in the report.
    #[arg(long, default_value = "")]
    config_digest: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BodeArgs {
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Cutoff in rad/s.
    #[arg(long)]
    cutoff: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: f64,
    /// Lowest frequency, rad/s.
    #[arg(long, default_value_t = 0.01)]
    omega_min: f64,
    /// Highest frequency, rad/s.
    #[arg(long, default_value_t = 100.0)]
    omega_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// CSV with a header row.
    input: PathBuf,
    /// Column to analyze.
    #[arg(long, default_value = "x")]
    column: String,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: f64,
    #[arg(long, default_value_t = butterworth::DEFAULT_ENERGY_FRACTION)]
    energy_fraction: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct MapGenArgs {
    #[arg(long, default_value_t = DEFAULT_MARKER_COUNT)]
    count: usize,
    /// Marker side, m.
    #[arg(long, default_value_t = DEFAULT_MARKER_SIDE)]
    side: f64,
    /// Center-to-center spacing, m.
    #[arg(long, default_value_t = DEFAULT_MARKER_SPACING)]
    spacing: f64,
    /// Marker center height, m.
    #[arg(long, default_value_t = DEFAULT_MARKER_HEIGHT)]
    height: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

type Result<T> = std::result::Result<T, Error>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            report("usage", None, message.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => Some(*stage),
                _ => None,
            };
            let (kind, code) = classify(e.root());
            report(kind, stage, &e.to_string());
            ExitCode::from(code)
        }
    }
}

/// One JSON line on standard error.
fn report(kind: &str, stage: Option<&str>, message: &str) {
    let line = serde_json::json!({ "error": kind, "stage": stage, "message": message });
    let _ = writeln!(std::io::stderr(), "{line}");
}

/// Error kind and exit code: 1 usage, 2 input, 3 numerical.
fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::InvalidSpec(_) => ("invalid-spec", 1),
        Error::InvalidParameter(_) => ("invalid-parameter", 1),
        Error::Parse { .. } => ("parse", 2),
        Error::Schema { .. } => ("schema", 2),
        Error::Io { .. } => ("io", 2),
        Error::Config(_) => ("config", 2),
        Error::UnknownMarkerId(_) => ("unknown-marker-id", 2),
        Error::EmptyInput | Error::EmptyTrajectory => ("empty-input", 2),
        Error::TooFewSamples { .. } | Error::TooFewFrames { .. } => ("too-few-samples", 2),
        Error::NonUniformSampling { .. } => ("non-uniform-sampling", 2),
        Error::OutOfRoom { .. } => ("out-of-room", 2),
        Error::DimensionMismatch(..) => ("dimension-mismatch", 2),
        Error::BehindCamera { .. } => ("behind-camera", 3),
        Error::NonFinite(_) => ("non-finite", 3),
        Error::InsufficientPoints { .. } => ("insufficient-points", 3),
        Error::DegenerateConfiguration(_) => ("degenerate-configuration", 3),
        Error::NoConvergence(_) => ("no-convergence", 3),
        Error::Stage { source, .. } => classify(source),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Filter(a) => filter(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Bode(a) => bode(a),
        Command::Spectrum(a) => spectrum(a),
        Command::MapGen(a) => map_gen(a),
    }
}

/// Writes to `path`, or to standard output.
fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn fraction(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be in (0, 1], got {v}")))
    }
}

fn load_config(args: &ConfigArgs) -> Result<(ResolvedConfig, PathBuf)> {
    let mut path = args.config.clone();
    if let Some(dir) = &args.config_dir {
        if !path.exists() && path.components().count() == 1 {
            path = dir.join(&path);
        }
    }
    let (cfg, base) = ExperimentConfig::load(&path)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)))
        .ok_or_else(|| Error::InvalidParameter("no output directory: pass --out or set output_dir".into()))?;
    Ok((cfg.resolve(&base)?, out))
}

fn write_overlays(out: &Path, tracks: &[(String, Vec<(&str, &Trajectory)>)]) -> Result<()> {
    for (name, series) in tracks {
        let fig = trajectory_overlay(&format!("{name}: top view"), series);
        write_atomic(out.join(name).join("trajectories.svg"), fig.to_svg().as_bytes())?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (resolved, out) = load_config(&a.common)?;
    let manifest = markerloc::sim::simulate(&resolved, &out, !a.common.sequential)?;
    if a.common.svg {
        let truths: Vec<(String, Trajectory)> = resolved
            .config
            .profiles
            .iter()
            .map(|p| Ok((p.name.clone(), Trajectory::load(out.join(&p.name).join("truth.csv"))?)))
            .collect::<Result<_>>()?;
        let tracks: Vec<_> = truths.iter().map(|(n, t)| (n.clone(), vec![("truth", t)])).collect();
        write_overlays(&out, &tracks)?;
    }
    emit(None, &format!("{}\n", manifest["config_digest"].as_str().unwrap_or_default()))
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let frame_rate = positive("--frame-rate", a.frame_rate)?;
    if !(0.0..=1.0).contains(&a.min_confidence) {
        return Err(Error::InvalidParameter(format!("--min-confidence must be in [0, 1], got {}", a.min_confidence)));
    }
    let map = MarkerMap::load(&a.map)?;
    let k = CameraIntrinsics::load(&a.intrinsics)?;
    let detections = read_detections(&a.detections)?;
    let kept = threshold(&detections, a.min_confidence);
    let frames = match a.frames {
        Some(n) => {
            let t0 = detections.iter().map(|d| d.t - d.frame as f64 / frame_rate).next().unwrap_or(0.0);
            frames_uniform(n, frame_rate, t0)
        }
        None => frames_from_detections(&detections, frame_rate),
    };
    if frames.is_empty() {
        return Err(Error::EmptyInput.in_stage("estimate"));
    }
    let opts = EstimateOptions {
        mode: match a.mode {
            ModeArg::FourDof => Mode::FourDof,
            ModeArg::SixDof => Mode::SixDof,
        },
        min_markers: a.min_markers,
        parallel: !a.sequential,
        ..EstimateOptions::default()
    };
    let estimates = estimate_trajectory(&frames, &kept, &map, &k, &opts);
    emit(a.out.as_deref(), &Trajectory::from_estimates(&estimates).to_csv())
}

fn filter(a: FilterArgs) -> Result<()> {
    let fs = positive("--sample-rate", a.sample_rate)?;
    if let Some(cutoff) = a.cutoff {
        FilterSpec::new(a.order, cutoff, fs)?;
    }
    if let Some(f) = a.auto_cutoff {
        fraction("--auto-cutoff", f)?;
        if !(a.margin >= 1.0 && a.margin.is_finite()) {
            return Err(Error::InvalidParameter(format!("--margin must be at least 1, got {}", a.margin)));
        }
    }
    let raw = Trajectory::load(&a.input)?;
    let cutoff = match (a.cutoff, a.auto_cutoff) {
        (Some(c), _) => c,
        (None, Some(f)) => auto_cutoff(&raw, fs, f, a.margin).map_err(|e| e.in_stage("filter"))?,
        (None, None) => unreachable!("clap requires one of --cutoff and --auto-cutoff"),
    };
    let spec = FilterSpec::new(a.order, cutoff, fs)?;
    let mode = if a.zero_phase { FilterMode::ZeroPhase } else { FilterMode::Causal };
    let filtered = filter_trajectory(&spec, &raw, mode).map_err(|e| e.in_stage("filter"))?;
    if let Some(svg) = &a.svg {
        let fig = trajectory_overlay(
            &format!("order {} at {:.3} rad/s", spec.order, spec.cutoff),
            &[("raw", &raw), ("filtered", &filtered)],
        );
        write_atomic(svg, fig.to_svg().as_bytes())?;
    }
    emit(a.out.as_deref(), &filtered.to_csv())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let frame_rate = positive("--frame-rate", a.frame_rate)?;
    let est = Trajectory::load(&a.estimated)?;
    let reference = Trajectory::load(&a.reference)?;
    let report =
        MetricReport::compare(&est, &reference, frame_rate, &a.config_digest).map_err(|e| e.in_stage("evaluate"))?;
    if let Some(svg) = &a.svg {
        let fig = trajectory_overlay("estimated vs reference", &[("estimated", &est), ("reference", &reference)]);
        write_atomic(svg, fig.to_svg().as_bytes())?;
    }
    emit(a.out.as_deref(), &report.to_json())
}

fn bench(a: BenchArgs) -> Result<()> {
    let (resolved, out) = load_config(&a.common)?;
    let outcome = markerloc::sim::bench(&resolved, &out, !a.common.sequential)?;
    if a.common.svg {
        let tracks: Vec<_> = outcome
            .experiment
            .runs
            .iter()
            .map(|r| (r.profile.name.clone(), vec![("truth", &r.truth), ("raw", &r.raw), ("filtered", &r.filtered)]))
            .collect();
        write_overlays(&out, &tracks)?;
    }
    for w in &outcome.experiment.warnings {
        let _ = writeln!(std::io::stderr(), "warning: {w}");
    }
    emit(None, &outcome.table)
}

fn bode(a: BodeArgs) -> Result<()> {
    let spec = FilterSpec::new(a.order, a.cutoff, a.sample_rate)?;
    let lo = positive("--omega-min", a.omega_min)?;
    let hi = positive("--omega-max", a.omega_max)?;
    if hi <= lo || a.points < 2 {
        return Err(Error::InvalidParameter("need --omega-max > --omega-min and --points >= 2".into()));
    }
    let omegas = log_space(lo, hi, a.points);
    let response = frequency_response(&spec, &omegas);
    if let Some(svg) = &a.svg {
        let label = format!("order {}", spec.order);
        let mag = Figure::new(&format!("Magnitude, ωc = {} rad/s", spec.cutoff), "ω (rad/s)", "dB")
            .log_x()
            .with_series(&label, omegas.iter().zip(&response).map(|(&w, &(db, _))| (w, db)).collect());
        let phase = Figure::new("Phase", "ω (rad/s)", "degrees")
            .log_x()
            .with_series(&label, omegas.iter().zip(&response).map(|(&w, &(_, deg))| (w, deg)).collect());
        write_atomic(svg, stack(&[mag, phase]).as_bytes())?;
    }
    emit(a.out.as_deref(), &butterworth::bode_to_csv(&omegas, &response))
}

/// Values of `column` in a headed CSV. Blank cells (gaps) are skipped.
fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let origin = path.display().to_string();
    let text = markerloc::io::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse { path: origin.clone(), line, message };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| Error::Schema {
        path: origin.clone(),
        line: 1,
        message: format!("no column `{column}`"),
    })?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        match record.get(idx) {
            None | Some("") => {}
            Some(cell) => values.push(cell.parse().map_err(|_| parse_err(line, format!("not a number: `{cell}`")))?),
        }
    }
    Ok(values)
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    let fs = positive("--sample-rate", a.sample_rate)?;
    let frac = fraction("--energy-fraction", a.energy_fraction)?;
    let samples = read_column(&a.input, &a.column)?;
    let spec = amplitude_spectrum(&samples, fs).map_err(|e| e.in_stage("spectrum"))?;
    let cutoff = suggest_cutoff(&samples, fs, frac).map_err(|e| e.in_stage("spectrum"))?;
    if let Some(svg) = &a.svg {
        let fig = Figure::new(&format!("Spectrum of `{}`", a.column), "ω (rad/s)", "amplitude")
            .log_x()
            .with_series(&a.column, spec.clone());
        write_atomic(svg, fig.to_svg().as_bytes())?;
    }
    emit(a.out.as_deref(), &spectrum_to_csv(&spec))?;
    let _ = writeln!(std::io::stderr(), "suggested cutoff: {cutoff} rad/s ({:.0}% energy)", 100.0 * frac);
    Ok(())
}

fn map_gen(a: MapGenArgs) -> Result<()> {
    let map = wall_marker_map(a.count, a.side, a.spacing, a.height)?;
    emit(a.out.as_deref(), &(map.to_json() + "\n"))
}
