//! Monte-Carlo sweeps. Each returns a table of [`MetricRow`]s whose rows are
//! aggregated in trial order, so results do not depend on scheduling.

use gesedd_core::aic::{com_test, rank_probability, RANK_THRESHOLD};
use gesedd_core::c64;
use gesedd_core::delay_est::theorem2_check;
use gesedd_core::model::{
    coeff_matrix, AtomSynth, DelayClass, DopplerComponent, PowerRatio, RadarParams, Scene,
};
use gesedd_core::parallel::{map_indexed, Execution};
use gesedd_core::rng::{derive_seed, rng_from_seed, stream};
use rand::Rng as _;

use crate::config::{ResolutionAxis, RunConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{MetricRow, Pool};
use crate::scenes::{resolution_scene, sample_scene};
use crate::trial::{pool_outcome, run_trial, Conditions, TrialKey, TrialOutcome};

/// A finished sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem for the emitted artifacts.
    pub name: String,
    /// Meaning of `sweep_value`.
    pub axis: String,
    /// Meaning of `success_rate` when it is not the estimation success fraction.
    pub success_meaning: String,
    pub rows: Vec<MetricRow>,
    /// Free-form `key=value` lines written next to the CSV.
    pub notes: Vec<String>,
}

impl Table {
    fn new(name: &str, axis: &str, success_meaning: &str) -> Self {
        Self {
            name: name.into(),
            axis: axis.into(),
            success_meaning: success_meaning.into(),
            rows: vec![],
            notes: vec![],
        }
    }
}

const ESTIMATION_SUCCESS: &str = "complete run with exactly K detections";

fn trial_key(cfg: &RunConfig, point: usize, trial: usize) -> TrialKey {
    TrialKey {
        master: cfg.seed,
        point: point as u64,
        trial: trial as u64,
    }
}

fn collect(
    outcomes: Vec<Result<TrialOutcome>>,
    truth_idx: Option<&[usize]>,
    k: usize,
    value: f64,
) -> Result<MetricRow> {
    let all: Vec<usize> = (0..k).collect();
    let idx = truth_idx.unwrap_or(&all);
    let mut pool = Pool::default();
    for o in outcomes {
        pool_outcome(&mut pool, &o?, idx);
    }
    Ok(pool.row(value))
}

fn k_of(cfg: &RunConfig) -> Result<usize> {
    if cfg.scene.dopplers_per_class[0] != cfg.scene.dopplers_per_class[1] {
        return Err(HarnessError::Config(
            "estimation sweeps need a fixed number of Dopplers per class".into(),
        ));
    }
    Ok(cfg.scene.k_tau * cfg.scene.dopplers_per_class[0])
}

/// RRMSE against SNR on random separated scenes.
pub fn sweep_snr(cfg: &RunConfig, exec: Execution) -> Result<Table> {
    let p = cfg.params()?;
    let synth = AtomSynth::new(&p);
    let k = k_of(cfg)?;
    let mut table = Table::new("sweep_snr", "snr_db", ESTIMATION_SUCCESS);
    for (point, &snr) in cfg.sweep.snr_db.iter().enumerate() {
        let cond = Conditions {
            snr,
            scr: PowerRatio::Infinite,
            filter: cfg.pipeline.clutter_filter,
        };
        let outcomes = map_indexed(cfg.sweep.trials, exec, |t| {
            let key = trial_key(cfg, point, t);
            let scene = sample_scene(
                &cfg.scene,
                &p,
                None,
                &mut rng_from_seed(key.seed(stream::SCENE)),
            )?;
            run_trial(cfg, &synth, &scene.targets(), &cond, key)
        });
        table.rows.push(collect(outcomes, None, k, snr.as_f64())?);
    }
    Ok(table)
}

/// RRMSE of two closely spaced targets against their normalized spacing.
/// Non-positive spacings are skipped with a message on stderr.
pub fn sweep_resolution(cfg: &RunConfig, exec: Execution) -> Result<Table> {
    let p = cfg.params()?;
    let synth = AtomSynth::new(&p);
    let axis = cfg.sweep.resolution_axis;
    let axis_name = match axis {
        ResolutionAxis::Ntd => "ntd",
        ResolutionAxis::Ndd => "ndd",
    };
    let mut table = Table::new(
        &format!("sweep_resolution_{axis_name}"),
        axis_name,
        ESTIMATION_SUCCESS,
    );
    table
        .notes
        .push("scored_targets=the two principal targets".into());
    let cond = Conditions {
        snr: cfg.sweep.resolution_snr_db,
        scr: PowerRatio::Infinite,
        filter: cfg.pipeline.clutter_filter,
    };
    for (point, &spacing) in cfg.sweep.resolution_values.iter().enumerate() {
        if !(spacing > 0.0) {
            eprintln!("skipping {axis_name} = {spacing}: the two principal targets coincide");
            table.notes.push(format!("skipped={spacing}"));
            continue;
        }
        let outcomes = map_indexed(cfg.sweep.trials, exec, |t| {
            let key = trial_key(cfg, point, t);
            let mut rng = rng_from_seed(key.seed(stream::SCENE));
            let truth = resolution_scene(axis, spacing, &cfg.scene, &p, &mut rng)?
                .expect("positive spacing");
            run_trial(cfg, &synth, &truth, &cond, key)
        });
        table
            .rows
            .push(collect(outcomes, Some(&[0, 1]), 3, spacing)?);
    }
    Ok(table)
}

/// Outcomes of one clutter trial set, exposed so callers can pair runs.
pub fn clutter_trials(
    cfg: &RunConfig,
    point: usize,
    scr: PowerRatio,
    filter: bool,
    exec: Execution,
) -> Result<Vec<TrialOutcome>> {
    let p = cfg.params()?;
    let synth = AtomSynth::new(&p);
    let cutoff = cfg.pipeline.cutoff_hz(&p);
    let cond = Conditions {
        snr: cfg.sweep.clutter_snr_db,
        scr,
        filter,
    };
    map_indexed(cfg.sweep.trials, exec, |t| {
        let key = trial_key(cfg, point, t);
        let scene = sample_scene(
            &cfg.scene,
            &p,
            Some(cutoff),
            &mut rng_from_seed(key.seed(stream::SCENE)),
        )?;
        run_trial(cfg, &synth, &scene.targets(), &cond, key)
    })
    .into_iter()
    .collect()
}

/// RRMSE against SCR with the slow-time clutter filter on and target
/// Dopplers drawn from the passband.
pub fn sweep_clutter(cfg: &RunConfig, exec: Execution) -> Result<Table> {
    let p = cfg.params()?;
    if cfg.pipeline.cutoff_hz(&p) >= p.max_doppler() {
        return Err(HarnessError::Config(
            "clutter cutoff leaves no passband".into(),
        ));
    }
    let k = k_of(cfg)?;
    let mut table = Table::new("sweep_clutter", "scr_db", ESTIMATION_SUCCESS);
    table
        .notes
        .push(format!("cutoff_hz={}", cfg.pipeline.cutoff_hz(&p)));
    for (point, &scr) in cfg.sweep.scr_db.iter().enumerate() {
        let outcomes = clutter_trials(cfg, point, scr, true, exec)?;
        table.rows.push(collect(
            outcomes.into_iter().map(Ok).collect(),
            None,
            k,
            scr.as_f64(),
        )?);
    }
    Ok(table)
}

/// Least-squares fit of `-ln(1 - rate) = c2 M` over points with
/// `0 < rate < 1`; `None` when no such point exists.
pub fn fit_exponent(points: &[(usize, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, r)| *r > 0.0 && *r < 1.0)
        .map(|&(m, r)| (m as f64, -(1.0 - r).ln()))
        .collect();
    if usable.is_empty() {
        return None;
    }
    let sxy: f64 = usable.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| x * x).sum();
    Some(sxy / sxx)
}

/// Full-column-rank probability of `M Psi` over an `(M, N, K_tau)` grid;
/// one table per `(N, K_tau)` pair.
pub fn sweep_theorem1(cfg: &RunConfig, exec: Execution) -> Result<Vec<Table>> {
    let base = cfg.params()?;
    let w = &cfg.sweep;
    if w.theorem1_m.is_empty() || w.theorem1_n.is_empty() || w.theorem1_k_tau.is_empty() {
        return Err(HarnessError::Config("theorem1 grid is empty".into()));
    }
    let mut tables = vec![];
    let mut point = 0u64;
    for &n in &w.theorem1_n {
        for &k in &w.theorem1_k_tau {
            let mut table = Table::new(
                &format!("theorem1_n{n}_k{k}"),
                "m",
                "fraction of trials where M Psi has full column rank",
            );
            let mut rates = vec![];
            for &m in &w.theorem1_m {
                let rate = if m < k {
                    0.0
                } else {
                    let p = RadarParams::new(
                        n as f64 / base.pri(),
                        base.pri(),
                        base.pulse_width(),
                        base.pulses(),
                        m,
                    )?;
                    let synth = AtomSynth::new(&p);
                    let seed = derive_seed(cfg.seed, &[point, stream::MATRIX]);
                    rank_probability(
                        cfg.mat.kind,
                        &synth,
                        k,
                        w.theorem1_trials,
                        seed,
                        RANK_THRESHOLD,
                        exec,
                    )?
                    .success_rate
                };
                point += 1;
                rates.push((m, rate));
                table.rows.push(MetricRow {
                    sweep_value: m as f64,
                    rrmse_tau: f64::NAN,
                    rrmse_nu: f64::NAN,
                    success_rate: rate,
                    mean_runtime_s: f64::NAN,
                    trials: w.theorem1_trials,
                });
            }
            let c2 = fit_exponent(&rates).map_or_else(|| "none".to_string(), |c| c.to_string());
            table.notes.push(format!("fitted_exponent_c2={c2}"));
            tables.push(table);
        }
    }
    Ok(tables)
}

/// Scene whose classes all share one Doppler with proportional amplitudes,
/// so the coefficient matrix has rank one.
pub fn coherent_scene(cfg: &RunConfig, p: &RadarParams, seed: u64) -> Result<Scene> {
    let mut rng = rng_from_seed(seed);
    let mut sec = cfg.scene.clone();
    sec.dopplers_per_class = [1, 1];
    let base = sample_scene(&sec, p, None, &mut rng)?;
    let nu = base.classes[0].members[0].nu;
    let alpha = base.classes[0].members[0].alpha;
    Ok(Scene {
        classes: base
            .classes
            .iter()
            .map(|c| DelayClass {
                tau: c.tau,
                members: vec![DopplerComponent {
                    nu,
                    alpha: alpha * c64(rng.random_range(0.1..1.0), 0.0),
                }],
            })
            .collect(),
    })
}

/// Rank verdicts of the coefficient-matrix verifier on coherent scenes
/// (row 0) and on scenes where every class owns a distinct Doppler (row 1).
pub fn sweep_theorem2(cfg: &RunConfig, exec: Execution) -> Result<Table> {
    let p = cfg.params()?;
    let trials = cfg.sweep.theorem2_trials;
    let mut table = Table::new(
        "theorem2",
        "scene_kind",
        "fraction of scenes judged full rank",
    );
    table
        .notes
        .push("scene_kind_0=coherent (shared Doppler, proportional amplitudes)".into());
    table
        .notes
        .push("scene_kind_1=every class has a Doppler distinct from all others".into());
    for point in 0..2usize {
        let verdicts = map_indexed(trials, exec, |t| -> Result<bool> {
            let seed = derive_seed(cfg.seed, &[point as u64, t as u64, stream::SCENE]);
            let scene = if point == 0 {
                coherent_scene(cfg, &p, seed)?
            } else {
                sample_scene(&cfg.scene, &p, None, &mut rng_from_seed(seed))?
            };
            Ok(theorem2_check(&coeff_matrix(&scene, &p))?.full_rank)
        });
        let mut full = 0usize;
        for v in verdicts {
            full += usize::from(v?);
        }
        table.rows.push(MetricRow {
            sweep_value: point as f64,
            rrmse_tau: f64::NAN,
            rrmse_nu: f64::NAN,
            success_rate: full as f64 / trials as f64,
            mean_runtime_s: f64::NAN,
            trials,
        });
    }
    Ok(table)
}

/// Concentration-of-measure tail against `M`.
pub fn sweep_com(cfg: &RunConfig, exec: Execution) -> Result<Table> {
    let p = cfg.params()?;
    let w = &cfg.sweep;
    if w.com_m.is_empty() {
        return Err(HarnessError::Config("com_m is empty".into()));
    }
    let mut table = Table::new(
        "com_test",
        "m",
        "fraction of trials with | ||Mx||^2/||x||^2 - 1 | < epsilon",
    );
    table.notes.push(format!("epsilon={}", w.com_epsilon));
    table.notes.push(format!("n={}", p.n()));
    for (point, &m) in w.com_m.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[point as u64, stream::PROBE]);
        let r = com_test(
            cfg.mat.kind,
            m,
            p.n(),
            w.com_epsilon,
            w.com_trials,
            seed,
            exec,
        )?;
        table
            .notes
            .push(format!("m{m}.violations={}", r.violations));
        table
            .notes
            .push(format!("m{m}.empirical_tail={}", r.empirical_tail));
        table.notes.push(format!(
            "m{m}.bound_exponent={}",
            r.bound_exponent
                .map_or_else(|| "none".to_string(), |c| c.to_string())
        ));
        table.rows.push(MetricRow {
            sweep_value: m as f64,
            rrmse_tau: f64::NAN,
            rrmse_nu: f64::NAN,
            success_rate: 1.0 - r.empirical_tail,
            mean_runtime_s: f64::NAN,
            trials: w.com_trials,
        });
    }
    Ok(table)
}
