//! Frame-parallel vs sequential pose estimation, and the full experiment.

use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use markerloc::detect::threshold;
use markerloc::pnp::{estimate_trajectory, frames_uniform, EstimateOptions};
use markerloc::sim::{run_profile, simulate_profile, ExperimentConfig, NoiseConfig};

fn config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 7,
        noise: NoiseConfig { pixel_sigma: 2.0, dropout_prob: 0.1, ..NoiseConfig::default() },
        ..ExperimentConfig::default()
    }
}

fn estimation(c: &mut Criterion) {
    let resolved = config().resolve(Path::new(".")).unwrap();
    let profile = &resolved.config.profiles[0];
    let (_, detections) = simulate_profile(&resolved, profile).unwrap();
    let kept = threshold(&detections, resolved.config.min_confidence);
    let frames = frames_uniform(profile.frame_count(), profile.frame_rate, 0.0);

    let mut group = c.benchmark_group("estimate_trajectory");
    group.throughput(Throughput::Elements(frames.len() as u64));
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        let opts = EstimateOptions { parallel, ..EstimateOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(label), &opts, |b, opts| {
            b.iter(|| estimate_trajectory(&frames, &kept, &resolved.map, &resolved.intrinsics, opts))
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let resolved = config().resolve(Path::new(".")).unwrap();
    let mut group = c.benchmark_group("run_profiles");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(label, |b| {
            b.iter(|| markerloc::par::map(&resolved.config.profiles, parallel, |p| run_profile(&resolved, p, parallel)))
        });
    }
    group.finish();
}

criterion_group!(benches, estimation, experiment);
criterion_main!(benches);
