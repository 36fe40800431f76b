use criterion::{criterion_group, criterion_main, Criterion};
use gesedd_core::aic::{compress, make_matrix, MeasurementKind};
use gesedd_core::delay_est::MusicConfig;
use gesedd_core::model::{
    add_noise, echo_matrix, AtomMode, AtomSynth, PowerRatio, RadarParams, Scene, Target,
};
use gesedd_core::parallel::{map_indexed, Execution};
use gesedd_core::pipeline::{run, Method, PipelineConfig};
use gesedd_core::rng::derive_seed;
use gesedd_core::{c64, CMat};

const TRIALS: usize = 16;

fn scene(p: &RadarParams) -> Scene {
    let targets: Vec<Target> = (0..6)
        .map(|i| Target {
            tau: (12.3 + 37.0 * i as f64) * p.tau0(),
            nu: (-14.2 + 5.1 * i as f64) * p.nu0(),
            alpha: c64(1.0, 0.1 * i as f64),
        })
        .collect();
    Scene::from_targets(&targets)
}

/// One noisy Monte Carlo trial with a fresh measurement matrix.
fn trial(
    p: &RadarParams,
    synth: &AtomSynth,
    clean: &CMat,
    cfg: &PipelineConfig,
    i: usize,
) -> usize {
    let mat = make_matrix(
        MeasurementKind::Gaussian,
        p.measurements(),
        p.n(),
        derive_seed(1, &[i as u64, 0]),
    )
    .unwrap();
    let noisy = add_noise(
        clean,
        PowerRatio::Db(20.0),
        p,
        derive_seed(1, &[i as u64, 1]),
    )
    .unwrap();
    let s = compress(&mat, &noisy, None).unwrap();
    run(&s, &mat, synth, cfg).unwrap().targets.len()
}

fn trial_batch(c: &mut Criterion) {
    let p = RadarParams::compact();
    let synth = AtomSynth::new(&p);
    let scene = scene(&p);
    let clean = echo_matrix(&scene, &p, AtomMode::ModelMatched);
    let cfg = PipelineConfig::new(Method::Gesedd1, MusicConfig::new(scene.k_tau(), &p));
    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| map_indexed(TRIALS, exec, |i| trial(&p, &synth, &clean, &cfg, i)))
        });
    }
    group.finish();
}

criterion_group!(benches, trial_batch);
criterion_main!(benches);
