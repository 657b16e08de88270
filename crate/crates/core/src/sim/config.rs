//! Experiment configuration (TOML) and its fully resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RoomSpec, TrajectoryProfile};
use crate::butterworth::SmoothingConfig;
use crate::detect::{ConfidenceModel, NoiseSpec, DEFAULT_MIN_CONFIDENCE};
use crate::error::{Error, Result};
use crate::geometry::{
    wall_marker_map, CameraIntrinsics, MarkerMap, DEFAULT_MARKER_COUNT, DEFAULT_MARKER_HEIGHT, DEFAULT_MARKER_SIDE,
    DEFAULT_MARKER_SPACING,
};
use crate::pnp::Mode;

/// Directory searched for configs given by bare file name.
pub const CONFIG_DIR_ENV: &str = "MARKERLOC_CONFIG_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSource {
    File { path: PathBuf },
    Wall { count: usize, side: f64, spacing: f64, height: f64 },
    Inline(MarkerMap),
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::Wall {
            count: DEFAULT_MARKER_COUNT,
            side: DEFAULT_MARKER_SIDE,
            spacing: DEFAULT_MARKER_SPACING,
            height: DEFAULT_MARKER_HEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntrinsicsSource {
    File { path: PathBuf },
    Inline(CameraIntrinsics),
}

impl Default for IntrinsicsSource {
    fn default() -> Self {
        IntrinsicsSource::Inline(CameraIntrinsics::default())
    }
}

/// Detection noise; the random seed comes from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub pixel_sigma: f64,
    #[serde(default)]
    pub dropout_prob: f64,
    #[serde(default)]
    pub confidence: ConfidenceModel,
}

impl NoiseConfig {
    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec { pixel_sigma: self.pixel_sigma, dropout_prob: self.dropout_prob, confidence: self.confidence, seed }
    }
}

/// An experiment as written by the user. Paths are relative to the config
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Where `simulate` and `bench` write unless overridden.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f64,
    #[serde(default = "default_min_markers")]
    pub min_markers: usize,
    /// Frames needing at least this many visible markers for the
    /// visibility check.
    #[serde(default = "default_visibility_markers")]
    pub visibility_markers: usize,
    /// Warn when fewer frames than this see `visibility_markers` markers.
    #[serde(default = "default_visibility_fraction")]
    pub min_visible_fraction: f64,
    #[serde(default)]
    pub map: MapSource,
    #[serde(default)]
    pub intrinsics: IntrinsicsSource,
    #[serde(default)]
    pub room: RoomSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: SmoothingConfig,
    #[serde(default = "default_profiles", rename = "profile")]
    pub profiles: Vec<TrajectoryProfile>,
}

fn default_min_confidence() -> f64 {
    DEFAULT_MIN_CONFIDENCE
}

fn default_min_markers() -> usize {
    1
}

fn default_visibility_markers() -> usize {
    4
}

fn default_visibility_fraction() -> f64 {
    0.5
}

fn default_profiles() -> Vec<TrajectoryProfile> {
    vec![TrajectoryProfile::spiral_eight(), TrajectoryProfile::rectangular_eight()]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: None,
            mode: Mode::default(),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            min_markers: 1,
            visibility_markers: 4,
            min_visible_fraction: 0.5,
            map: MapSource::default(),
            intrinsics: IntrinsicsSource::default(),
            room: RoomSpec::default(),
            noise: NoiseConfig::default(),
            filter: SmoothingConfig::default(),
            profiles: default_profiles(),
        }
    }
}

/// Manifest wrapper; only the `config` member is read back.
#[derive(Deserialize)]
struct ManifestEcho {
    config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { path: origin.into(), line, message: e.message().to_string() }
        })
    }

    /// Reads a TOML config, or the `config` member of a run manifest
    /// (`.json`). A bare file name that does not exist in the working
    /// directory is looked up in `$MARKERLOC_CONFIG_DIR`.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = locate(path.as_ref());
        let text = crate::io::read_to_string(&path)?;
        let origin = path.display().to_string();
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            let echo: ManifestEcho = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: origin.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            echo.config
        } else {
            Self::from_toml(&text, &origin)?
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Loads external files (relative to `base`), validates everything and
    /// returns the self-contained form.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedConfig> {
        let map = match &self.map {
            MapSource::File { path } => MarkerMap::load(base.join(path))?,
            MapSource::Wall { count, side, spacing, height } => wall_marker_map(*count, *side, *spacing, *height)?,
            MapSource::Inline(m) => m.clone(),
        };
        let intrinsics = match &self.intrinsics {
            IntrinsicsSource::File { path } => CameraIntrinsics::load(base.join(path))?,
            IntrinsicsSource::Inline(k) => {
                k.validate()?;
                *k
            }
        };
        self.room.validate()?;
        self.noise.with_seed(self.seed).validate()?;
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!("min_confidence must be in [0, 1], got {}", self.min_confidence)));
        }
        if !(0.0..=1.0).contains(&self.min_visible_fraction) {
            return Err(Error::Config(format!(
                "min_visible_fraction must be in [0, 1], got {}",
                self.min_visible_fraction
            )));
        }
        if self.profiles.is_empty() {
            return Err(Error::Config("at least one [[profile]] is required".into()));
        }
        let mut names: Vec<&str> = self.profiles.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate profile name `{}`", w[0])));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        let filter = self.filter;
        if filter.order < 1 {
            return Err(Error::InvalidSpec(format!("order must be at least 1, got {}", filter.order)));
        }
        Ok(ResolvedConfig {
            config: ExperimentConfig {
                output_dir: None,
                map: MapSource::Inline(map.clone()),
                intrinsics: IntrinsicsSource::Inline(intrinsics),
                ..self.clone()
            },
            map,
            intrinsics,
        })
    }
}

/// A validated config with the map and intrinsics embedded, so it alone
/// reproduces a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    /// Echo with inline map and intrinsics and no output directory.
    pub config: ExperimentConfig,
    pub map: MarkerMap,
    pub intrinsics: CameraIntrinsics,
}

impl ResolvedConfig {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    /// SHA-256 of the compact JSON echo. The output directory is not part
    /// of it, so moving a run does not change its digest.
    pub fn digest(&self) -> String {
        crate::io::sha256_hex(serde_json::to_string(&self.config).expect("config serializes").as_bytes())
    }
}

fn locate(path: &Path) -> PathBuf {
    if path.exists() || path.components().count() != 1 {
        return path.to_path_buf();
    }
    match std::env::var_os(CONFIG_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(path),
        None => path.to_path_buf(),
    }
}
