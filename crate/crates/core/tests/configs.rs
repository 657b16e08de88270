use std::path::{Path, PathBuf};

use markerloc::butterworth::CutoffPolicy;
use markerloc::detect::DEFAULT_MIN_CONFIDENCE;
use markerloc::geometry::default_wall;
use markerloc::sim::{ExperimentConfig, ProfileKind};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn shipped_default_config() {
    let (cfg, base) = ExperimentConfig::load(config("default.toml")).unwrap();
    assert_eq!(cfg.min_confidence, 0.5);
    assert_eq!(DEFAULT_MIN_CONFIDENCE, 0.5);
    assert_eq!(cfg.noise.pixel_sigma, 2.0);
    assert_eq!(cfg.noise.dropout_prob, 0.1);
    assert_eq!(cfg.filter.order, 2);
    assert!(matches!(cfg.filter.cutoff, CutoffPolicy::Spectrum { .. }));
    let kinds: Vec<_> = cfg.profiles.iter().map(|p| p.kind).collect();
    assert_eq!(kinds, [ProfileKind::SpiralEight, ProfileKind::RectangularEight]);
    let resolved = cfg.resolve(&base).unwrap();
    assert_eq!(resolved.map, default_wall());
    // Apart from seed and noise, the shipped file spells out the built-in defaults.
    let builtin = ExperimentConfig { seed: cfg.seed, noise: cfg.noise, ..ExperimentConfig::default() };
    assert_eq!(resolved.digest(), builtin.resolve(Path::new(".")).unwrap().digest());
}

#[test]
fn noiseless_config_is_noiseless() {
    let (cfg, base) = ExperimentConfig::load(config("noiseless.toml")).unwrap();
    assert_eq!(cfg.noise.pixel_sigma, 0.0);
    assert_eq!(cfg.noise.dropout_prob, 0.0);
    cfg.resolve(&base).unwrap();
}
