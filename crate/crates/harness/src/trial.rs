//! One Monte-Carlo trial: synthesize data for a scene, run the estimator and
//! score it against the truth.

use std::time::Instant;

use gesedd_core::aic::{compress, make_matrix_with, MeasurementMatrix};
use gesedd_core::model::{
    draw_noise, echo_matrix_with, gen_clutter, AtomSynth, PowerRatio, Scene, Target,
};
use gesedd_core::pipeline::{run, EstimateReport};
use gesedd_core::rng::{derive_seed, stream};
use gesedd_core::CMat;

use crate::config::RunConfig;
use crate::error::Result;
use crate::metrics::{match_and_rrmse, MatchResult, NormalizedError, Pool};

/// Seed namespace of one trial: `(master, sweep point, trial index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialKey {
    pub master: u64,
    pub point: u64,
    pub trial: u64,
}

impl TrialKey {
    pub fn seed(&self, purpose: u64) -> u64 {
        derive_seed(self.master, &[self.point, self.trial, purpose])
    }
}

/// Environment a scene is observed in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditions {
    pub snr: PowerRatio,
    /// `Infinite` means no clutter.
    pub scr: PowerRatio,
    pub filter: bool,
}

/// Compressed observation of a scene.
pub struct Observation {
    pub data: CMat,
    pub mat: MeasurementMatrix,
}

/// `S = M (R + C + W)`; the SNR and SCR are both measured against the target echo `R`.
pub fn observe(
    cfg: &RunConfig,
    synth: &AtomSynth,
    scene: &Scene,
    cond: &Conditions,
    key: TrialKey,
) -> Result<Observation> {
    let p = synth.params();
    let mode = cfg.scene.atom_mode;
    let mat_seed = cfg.mat.seed.unwrap_or_else(|| key.seed(stream::MATRIX));
    let mat = make_matrix_with(
        cfg.mat.kind,
        p.measurements(),
        p.n(),
        mat_seed,
        cfg.mat.options(),
    )?;
    let echo = echo_matrix_with(synth, scene, mode);
    let mut nyquist = echo.clone();
    if !cond.scr.is_infinite() {
        let cp = cfg
            .scene
            .clutter
            .params(&cfg.scene, p, cond.scr, key.seed(stream::CLUTTER))?;
        nyquist = &nyquist + &gen_clutter(synth, &cp, &echo, &mat, mode)?;
    }
    let noise = draw_noise(&echo, cond.snr, p, key.seed(stream::NOISE))?;
    let data = compress(&mat, &nyquist, noise.as_ref().map(|(w, _)| w))?;
    Ok(Observation { data, mat })
}

pub struct TrialOutcome {
    pub report: EstimateReport,
    /// Present when the run completed with exactly `K` detections.
    pub matched: Option<MatchResult>,
    pub runtime_s: Option<f64>,
}

impl TrialOutcome {
    pub fn success(&self) -> bool {
        self.matched.is_some()
    }

    /// Errors restricted to the given truth indices.
    pub fn errors_for(&self, truth_idx: &[usize]) -> Option<Vec<NormalizedError>> {
        self.matched
            .as_ref()
            .map(|m| truth_idx.iter().map(|&i| m.errors[i]).collect())
    }

    /// Sum of squared normalized delay errors over the given truth indices;
    /// infinite for a failed trial.
    pub fn delay_sq_error(&self, truth_idx: &[usize]) -> f64 {
        self.errors_for(truth_idx)
            .map_or(f64::INFINITY, |e| e.iter().map(|x| x.0 * x.0).sum())
    }
}

/// Observes `truth` under `cond` and runs the configured pipeline.
pub fn run_trial(
    cfg: &RunConfig,
    synth: &AtomSynth,
    truth: &[Target],
    cond: &Conditions,
    key: TrialKey,
) -> Result<TrialOutcome> {
    let p = synth.params();
    let scene = Scene::from_targets(truth);
    let obs = observe(cfg, synth, &scene, cond, key)?;
    let pcfg = cfg
        .pipeline
        .build(p, &scene.class_orders_by_delay(), truth.len(), cond.filter);
    let start = Instant::now();
    let report = run(&obs.data, &obs.mat, synth, &pcfg)?;
    let runtime_s = cfg
        .pipeline
        .record_runtime
        .then(|| start.elapsed().as_secs_f64());
    let matched = (report.is_complete() && report.targets.len() == truth.len())
        .then(|| match_and_rrmse(&report.targets, truth, p));
    Ok(TrialOutcome {
        report,
        matched,
        runtime_s,
    })
}

/// Adds a trial to a pool, scoring only the given truth indices.
pub fn pool_outcome(pool: &mut Pool, outcome: &TrialOutcome, truth_idx: &[usize]) {
    match outcome.errors_for(truth_idx) {
        Some(e) => pool.add_success(&e),
        None => pool.add_failure(),
    }
    if let Some(t) = outcome.runtime_s {
        pool.add_runtime(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;
    use crate::scenes::sample_scene;
    use gesedd_core::rng::rng_from_seed;

    #[test]
    fn noiseless_trial_is_exact() {
        let mut cfg = RunConfig::for_profile(Profile::Compact);
        cfg.scene.k_tau = 3;
        let p = cfg.params().unwrap();
        let synth = AtomSynth::new(&p);
        let key = TrialKey {
            master: 1,
            point: 0,
            trial: 0,
        };
        let scene = sample_scene(
            &cfg.scene,
            &p,
            None,
            &mut rng_from_seed(key.seed(stream::SCENE)),
        )
        .unwrap();
        let cond = Conditions {
            snr: PowerRatio::Infinite,
            scr: PowerRatio::Infinite,
            filter: false,
        };
        let out = run_trial(&cfg, &synth, &scene.targets(), &cond, key).unwrap();
        let m = out.matched.expect("complete run");
        assert!(m.rrmse_tau < 1e-5 && m.rrmse_nu < 1e-5, "{m:?}");
        assert!(out.runtime_s.is_none());
    }

    #[test]
    fn failed_trial_has_infinite_delay_error() {
        let out = TrialOutcome {
            report: EstimateReport {
                method: Default::default(),
                status: gesedd_core::pipeline::Status::Complete,
                classes: vec![],
                targets: vec![],
                detection_truncated: true,
                diagnostics: Default::default(),
                delay_diagnostics: None,
                metrics: vec![],
            },
            matched: None,
            runtime_s: None,
        };
        assert_eq!(out.delay_sq_error(&[0]), f64::INFINITY);
        let mut pool = Pool::default();
        pool_outcome(&mut pool, &out, &[0]);
        assert_eq!((pool.trials(), pool.successes()), (1, 0));
    }
}
