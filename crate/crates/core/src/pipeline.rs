//! End-to-end sequential estimation: delays, then Dopplers, then
//! reflectivities, then top-K detection.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::aic::{column_rank_report, MeasurementMatrix, RANK_THRESHOLD};
use crate::delay_est::{
    build_beamspace, music_spectrum, root_music, sample_covariance, whitening_for,
    DelayDiagnostics, DelayMethod, MusicConfig, Whitening,
};
use crate::doppler_est::{
    estimate_dopplers, extract_coeffs, select_class_orders, ClassOrders, EspritSolver,
};
use crate::error::{Error, Result};
use crate::matrix::{c64, cis, norm, CMat, C64};
use crate::model::{AtomMode, AtomSynth, Target};
use crate::numerics::pinv;
use crate::parallel::Execution;

/// Relative residual above which a report is flagged as a poor model fit.
pub const LARGE_RESIDUAL: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Root-MUSIC delays + ESPRIT Dopplers.
    #[default]
    Gesedd1,
    /// Grid-search spectral MUSIC delays + ESPRIT Dopplers.
    Gesedd2,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gesedd1 => "gesedd1",
            Method::Gesedd2 => "gesedd2",
        }
    }

    pub fn delay_method(self) -> DelayMethod {
        match self {
            Method::Gesedd1 => DelayMethod::RootMusic,
            Method::Gesedd2 => DelayMethod::SpectralMusic,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gesedd1" => Ok(Method::Gesedd1),
            "gesedd2" => Ok(Method::Gesedd2),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Slow-time DFT-bin mask applied before estimation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClutterFilter {
    pub cutoff: f64,
    /// Keep `|nu| <= cutoff` instead of removing it.
    pub invert: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub music: MusicConfig,
    pub class_orders: ClassOrders,
    pub esprit: EspritSolver,
    pub clutter_filter: Option<ClutterFilter>,
    pub detection_k: usize,
    /// Parallelism across delay classes inside one run.
    pub class_execution: Execution,
}

impl PipelineConfig {
    /// One Doppler per class, `K = K_tau`.
    pub fn new(method: Method, music: MusicConfig) -> Self {
        let k = music.k_tau;
        Self {
            method,
            music,
            class_orders: ClassOrders::Fixed(vec![1; k]),
            esprit: EspritSolver::default(),
            clutter_filter: None,
            detection_k: k,
            class_execution: Execution::Sequential,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.detection_k == 0 {
            return Err(Error::Config("detection K must be at least 1".into()));
        }
        if let ClassOrders::Fixed(v) = &self.class_orders {
            if v.len() != self.music.k_tau {
                return Err(Error::Config(format!(
                    "{} per-class orders for K_tau = {}",
                    v.len(),
                    self.music.k_tau
                )));
            }
            if v.contains(&0) {
                return Err(Error::Config("per-class orders must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ClutterFilter,
    Whitening,
    Covariance,
    DelayEstimation,
    CoefficientExtraction,
    DopplerEstimation,
    Reflectivity,
    Detection,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ClutterFilter => "clutter_filter",
            Stage::Whitening => "whitening",
            Stage::Covariance => "covariance",
            Stage::DelayEstimation => "delay_estimation",
            Stage::CoefficientExtraction => "coefficient_extraction",
            Stage::DopplerEstimation => "doppler_estimation",
            Stage::Reflectivity => "reflectivity",
            Stage::Detection => "detection",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Complete,
    Failed { stage: Stage, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassEstimate {
    pub tau: f64,
    /// `(nu, alpha)` pairs.
    pub components: Vec<(f64, C64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub subspace_gap: Option<f64>,
    /// `sigma_min / sigma_max` of the compressed dictionary at estimated delays.
    pub rank_margin: Option<f64>,
    pub whitening_applied: bool,
    pub whitening_condition: Option<f64>,
    pub whitening_aborted: bool,
    /// `||s' - D alpha_hat||`.
    pub residual: Option<f64>,
    /// Residual over `||s'||`.
    pub relative_residual: Option<f64>,
    pub large_residual: bool,
    pub noise_gain: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub method: Method,
    pub status: Status,
    /// Ascending delay.
    pub classes: Vec<ClassEstimate>,
    /// Detected targets, strongest first.
    pub targets: Vec<Target>,
    /// Set when fewer pairs than `detection_k` were available.
    pub detection_truncated: bool,
    pub diagnostics: Diagnostics,
    /// Eigenvalues, roots or pseudospectrum when `music.keep_diagnostics` is set.
    pub delay_diagnostics: Option<DelayDiagnostics>,
    /// Evaluation metrics attached by the caller.
    pub metrics: Vec<(String, f64)>,
}

impl EstimateReport {
    fn new(method: Method) -> Self {
        Self {
            method,
            status: Status::Complete,
            classes: vec![],
            targets: vec![],
            detection_truncated: false,
            diagnostics: Diagnostics::default(),
            delay_diagnostics: None,
            metrics: vec![],
        }
    }

    fn fail(mut self, stage: Stage, err: Error) -> Self {
        self.status = Status::Failed {
            stage,
            message: err.to_string(),
        };
        self
    }

    pub fn is_complete(&self) -> bool {
        self.status == Status::Complete
    }

    pub fn failed_stage(&self) -> Option<Stage> {
        match &self.status {
            Status::Complete => None,
            Status::Failed { stage, .. } => Some(*stage),
        }
    }

    /// Keyed `name=value` lines; floats use the shortest round-trip form.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method={}", self.method);
        match &self.status {
            Status::Complete => {
                let _ = writeln!(s, "status=complete");
            }
            Status::Failed { stage, message } => {
                let _ = writeln!(s, "status=failed");
                let _ = writeln!(s, "failed_stage={}", stage.name());
                let _ = writeln!(s, "failure={}", message.replace('\n', " "));
            }
        }
        let _ = writeln!(s, "classes={}", self.classes.len());
        for (i, c) in self.classes.iter().enumerate() {
            let _ = writeln!(s, "class.{i}.tau={}", c.tau);
            for (j, (nu, a)) in c.components.iter().enumerate() {
                let _ = writeln!(s, "class.{i}.component.{j}.nu={nu}");
                let _ = writeln!(s, "class.{i}.component.{j}.alpha_re={}", a.re);
                let _ = writeln!(s, "class.{i}.component.{j}.alpha_im={}", a.im);
            }
        }
        let _ = writeln!(s, "targets={}", self.targets.len());
        for (k, t) in self.targets.iter().enumerate() {
            let _ = writeln!(s, "target.{k}.tau={}", t.tau);
            let _ = writeln!(s, "target.{k}.nu={}", t.nu);
            let _ = writeln!(s, "target.{k}.alpha_re={}", t.alpha.re);
            let _ = writeln!(s, "target.{k}.alpha_im={}", t.alpha.im);
        }
        let _ = writeln!(s, "detection_truncated={}", self.detection_truncated);
        let d = &self.diagnostics;
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let _ = writeln!(s, "diag.subspace_gap={}", opt(d.subspace_gap));
        let _ = writeln!(s, "diag.rank_margin={}", opt(d.rank_margin));
        let _ = writeln!(s, "diag.whitening_applied={}", d.whitening_applied);
        let _ = writeln!(s, "diag.whitening_condition={}", opt(d.whitening_condition));
        let _ = writeln!(s, "diag.whitening_aborted={}", d.whitening_aborted);
        let _ = writeln!(s, "diag.residual={}", opt(d.residual));
        let _ = writeln!(s, "diag.relative_residual={}", opt(d.relative_residual));
        let _ = writeln!(s, "diag.large_residual={}", d.large_residual);
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "metric.{k}={v}");
        }
        s
    }
}

/// Slow-time DFT-bin mask per row. By default bins with `|nu| <= cutoff`
/// are zeroed (clutter stopband at zero Doppler); `invert` keeps only them.
pub fn doppler_lowpass(s: &CMat, cutoff: f64, pri: f64, invert: bool) -> Result<CMat> {
    if !(cutoff > 0.0 && cutoff < 0.5 / pri) {
        return Err(Error::Config(format!(
            "Doppler cutoff {cutoff} Hz outside (0, {})",
            0.5 / pri
        )));
    }
    let (m, l) = s.shape();
    if l == 0 {
        return Ok(s.clone());
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l);
    let ifft = planner.plan_fft_inverse(l);
    let bin_hz = 1.0 / (l as f64 * pri);
    // small guard so bins exactly at the cutoff are treated as inside
    let guard = 1e-9 * bin_hz;
    let inside: Vec<bool> = (0..l)
        .map(|k| {
            let signed = if 2 * k < l {
                k as f64
            } else {
                k as f64 - l as f64
            };
            (signed * bin_hz).abs() <= cutoff + guard
        })
        .collect();
    let mut out = CMat::zeros(m, l);
    let mut buf = vec![c64(0.0, 0.0); l];
    for r in 0..m {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = s[(r, k)];
        }
        fft.process(&mut buf);
        for (b, &ins) in buf.iter_mut().zip(&inside) {
            if ins != invert {
                *b = c64(0.0, 0.0);
            }
        }
        ifft.process(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(r, k)] = b / l as f64;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reflectivity {
    pub alphas: Vec<C64>,
    pub residual: f64,
    pub relative_residual: f64,
}

/// Least-squares amplitudes for given `(tau, nu)` pairs against the
/// vectorized data `vec(S)` (index `l M + m`), dictionary columns
/// `b(nu) (x) M psi(tau)`.
pub fn ls_reflectivity(
    s: &CMat,
    pairs: &[(f64, f64)],
    mat: &MeasurementMatrix,
    synth: &AtomSynth,
) -> Result<Reflectivity> {
    let (m, l) = s.shape();
    if m != mat.m() {
        return Err(Error::Contract(format!(
            "data has {m} rows, matrix has M = {}",
            mat.m()
        )));
    }
    let svec = s.vectorize();
    let snorm = norm(&svec);
    if pairs.is_empty() {
        return Ok(Reflectivity {
            alphas: vec![],
            residual: snorm,
            relative_residual: if snorm > 0.0 { 1.0 } else { 0.0 },
        });
    }
    let pri = synth.params().pri();
    let dict_cols: Vec<Vec<C64>> = pairs
        .iter()
        .map(|&(tau, nu)| {
            let mpsi = mat
                .data
                .mul_vec(&synth.atom_unchecked(tau, AtomMode::ModelMatched));
            let mut col = Vec::with_capacity(m * l);
            for li in 0..l {
                let b = cis(2.0 * PI * nu * li as f64 * pri);
                col.extend(mpsi.iter().map(|z| z * b));
            }
            col
        })
        .collect();
    let dict = CMat::from_columns(&dict_cols);
    let report = column_rank_report(&dict, RANK_THRESHOLD)?;
    if !report.full_rank {
        return Err(Error::RankDeficient {
            context: format!(
                "reflectivity dictionary; colliding pairs {}",
                colliding(&dict, pairs)
            ),
            report: Box::new(report),
        });
    }
    let alphas = pinv(&dict)?.mul_vec(&svec);
    let fit = dict.mul_vec(&alphas);
    let residual = svec
        .iter()
        .zip(&fit)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(Reflectivity {
        alphas,
        residual,
        relative_residual: if snorm > 0.0 { residual / snorm } else { 0.0 },
    })
}

fn colliding(dict: &CMat, pairs: &[(f64, f64)]) -> String {
    let mut out = Vec::new();
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let (a, b) = (dict.col(i), dict.col(j));
            let c =
                crate::matrix::dot_conj(a, b).norm() / (norm(a) * norm(b)).max(f64::MIN_POSITIVE);
            if c > 1.0 - 1e-6 {
                out.push(format!(
                    "({:e} s, {} Hz)~({:e} s, {} Hz)",
                    pairs[i].0, pairs[i].1, pairs[j].0, pairs[j].1
                ));
            }
        }
    }
    if out.is_empty() {
        "none pairwise".into()
    } else {
        out.join(", ")
    }
}

/// Top `k` by `|alpha|`, ties toward smaller delay then smaller Doppler.
/// The flag is set when fewer than `k` candidates exist.
pub fn detect_topk(candidates: &[Target], k: usize) -> (Vec<Target>, bool) {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| {
        b.alpha
            .norm()
            .total_cmp(&a.alpha.norm())
            .then(a.tau.total_cmp(&b.tau))
            .then(a.nu.total_cmp(&b.nu))
    });
    let truncated = k > sorted.len();
    sorted.truncate(k);
    (sorted, truncated)
}

/// Runs the full estimator on compressed data `s` (M x L).
///
/// Shape and configuration problems are returned as errors; failures inside
/// an estimation stage produce a partial report tagged with the stage.
pub fn run(
    s: &CMat,
    mat: &MeasurementMatrix,
    synth: &AtomSynth,
    cfg: &PipelineConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let params = synth.params();
    if s.rows() != mat.m() || mat.n() != params.n() {
        return Err(Error::Contract(format!(
            "data {}x{}, matrix {}x{}, radar N = {}",
            s.rows(),
            s.cols(),
            mat.m(),
            mat.n(),
            params.n()
        )));
    }
    let mut report = EstimateReport::new(cfg.method);

    let data = match cfg.clutter_filter {
        Some(f) => match doppler_lowpass(s, f.cutoff, params.pri(), f.invert) {
            Ok(d) => d,
            Err(e) => return Ok(report.fail(Stage::ClutterFilter, e)),
        },
        None => s.clone(),
    };

    let model = match build_beamspace(mat, synth) {
        Ok(m) => m,
        Err(e) => return Ok(report.fail(Stage::Whitening, e)),
    };
    let whitening = if cfg.music.whiten.unwrap_or(mat.kind.whiten_by_default()) {
        match whitening_for(mat) {
            Ok(w) => w,
            Err(e) => return Ok(report.fail(Stage::Whitening, e)),
        }
    } else {
        Whitening::identity()
    };
    report.diagnostics.whitening_applied = whitening.applied();
    report.diagnostics.whitening_aborted = whitening.aborted;
    report.diagnostics.whitening_condition =
        (whitening.applied() || whitening.aborted).then_some(whitening.condition);
    let model_w = whitening.apply_model(&model);
    let data_w = whitening.apply(&data);

    let cov = match sample_covariance(&data_w) {
        Ok(c) => c,
        Err(e) => return Ok(report.fail(Stage::Covariance, e)),
    };

    let delays = match cfg.method {
        Method::Gesedd1 => root_music(&cov, &model_w, &cfg.music),
        Method::Gesedd2 => music_spectrum(&cov, &model_w, &cfg.music),
    };
    let delays = match delays {
        Ok(d) => d,
        Err(e) => return Ok(report.fail(Stage::DelayEstimation, e)),
    };
    report.diagnostics.subspace_gap = Some(delays.subspace_gap);
    report.delay_diagnostics = delays.diagnostics;
    let taus = delays.taus;

    let coeffs = match extract_coeffs(&data, mat, &taus, synth, AtomMode::ModelMatched) {
        Ok(c) => c,
        Err(e) => return Ok(report.fail(Stage::CoefficientExtraction, e)),
    };
    report.diagnostics.noise_gain = coeffs.noise_gain.clone();
    if let Ok(r) = crate::aic::rank_check(
        mat,
        &synth.atom_matrix(&taus, AtomMode::ModelMatched),
        RANK_THRESHOLD,
    ) {
        report.diagnostics.rank_margin = Some(r.margin);
    }

    let orders = match &cfg.class_orders {
        ClassOrders::Fixed(v) if v.len() != taus.len() => {
            let e = Error::Estimation(format!(
                "{} distinct delays after clustering, {} expected",
                taus.len(),
                v.len()
            ));
            return Ok(report.fail(Stage::DelayEstimation, e));
        }
        ClassOrders::Fixed(v) => v.clone(),
        ClassOrders::Auto(criterion) => match select_class_orders(&coeffs, *criterion) {
            Ok(v) => cap_orders(v, cfg.detection_k + 2),
            Err(e) => return Ok(report.fail(Stage::DopplerEstimation, e)),
        },
    };
    let dopplers = match estimate_dopplers(
        &coeffs,
        &ClassOrders::Fixed(orders),
        params.pri(),
        cfg.esprit,
        cfg.class_execution,
    ) {
        Ok(d) => d,
        Err(e) => return Ok(report.fail(Stage::DopplerEstimation, e)),
    };

    let pairs: Vec<(f64, f64)> = taus
        .iter()
        .zip(&dopplers.classes)
        .flat_map(|(&tau, nus)| nus.iter().map(move |&nu| (tau, nu)))
        .collect();
    let refl = match ls_reflectivity(&data, &pairs, mat, synth) {
        Ok(r) => r,
        Err(e) => {
            report.classes = taus
                .iter()
                .zip(&dopplers.classes)
                .map(|(&tau, nus)| ClassEstimate {
                    tau,
                    components: nus
                        .iter()
                        .map(|&nu| (nu, c64(f64::NAN, f64::NAN)))
                        .collect(),
                })
                .collect();
            return Ok(report.fail(Stage::Reflectivity, e));
        }
    };
    report.diagnostics.residual = Some(refl.residual);
    report.diagnostics.relative_residual = Some(refl.relative_residual);
    report.diagnostics.large_residual = refl.relative_residual > LARGE_RESIDUAL;

    let mut alphas = refl.alphas.iter();
    report.classes = taus
        .iter()
        .zip(&dopplers.classes)
        .map(|(&tau, nus)| ClassEstimate {
            tau,
            components: nus
                .iter()
                .map(|&nu| (nu, *alphas.next().expect("one amplitude per pair")))
                .collect(),
        })
        .collect();
    let candidates: Vec<Target> = report
        .classes
        .iter()
        .flat_map(|c| {
            c.components.iter().map(move |&(nu, alpha)| Target {
                tau: c.tau,
                nu,
                alpha,
            })
        })
        .collect();
    let (targets, truncated) = detect_topk(&candidates, cfg.detection_k);
    report.targets = targets;
    report.detection_truncated = truncated;
    Ok(report)
}

/// Lowers the largest per-class orders until their sum fits `budget`.
fn cap_orders(mut orders: Vec<usize>, budget: usize) -> Vec<usize> {
    let floor = orders.len();
    let budget = budget.max(floor);
    while orders.iter().sum::<usize>() > budget {
        let (i, _) = orders
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        orders[i] -= 1;
    }
    orders
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aic::{compress, make_matrix, MeasurementKind};
    use crate::model::{echo_matrix_with, RadarParams, Scene};

    fn three_targets(p: &RadarParams) -> Scene {
        Scene::from_targets(&[
            Target {
                tau: 10.37 * p.tau0(),
                nu: 3.3 * p.nu0(),
                alpha: c64(1.0, 0.3),
            },
            Target {
                tau: 77.81 * p.tau0(),
                nu: -5.6 * p.nu0(),
                alpha: c64(-0.4, 0.7),
            },
            Target {
                tau: 140.22 * p.tau0(),
                nu: 9.1 * p.nu0(),
                alpha: c64(0.6, -0.6),
            },
        ])
    }

    fn noiseless(
        kind: MeasurementKind,
        scene: &Scene,
    ) -> (RadarParams, AtomSynth, MeasurementMatrix, CMat) {
        let p = RadarParams::compact();
        let synth = AtomSynth::new(&p);
        let mat = make_matrix(kind, p.measurements(), p.n(), 31).unwrap();
        let r = echo_matrix_with(&synth, scene, AtomMode::ModelMatched);
        let s = compress(&mat, &r, None).unwrap();
        (p, synth, mat, s)
    }

    fn check_against(report: &EstimateReport, scene: &Scene, p: &RadarParams, tau_tol: f64) {
        assert!(report.is_complete(), "{:?}", report.status);
        let mut truth = scene.targets();
        truth.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        let mut est = report.targets.clone();
        est.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        assert_eq!(est.len(), truth.len());
        for (e, t) in est.iter().zip(&truth) {
            assert!(
                (e.tau - t.tau).abs() < tau_tol * p.tau0(),
                "tau {} vs {}",
                e.tau,
                t.tau
            );
            assert!(
                (e.nu - t.nu).abs() < 1e-6 * p.nu0(),
                "nu {} vs {}",
                e.nu,
                t.nu
            );
            if tau_tol < 1e-3 {
                assert!((e.alpha - t.alpha).norm() < 1e-6 * t.alpha.norm());
            }
        }
    }

    #[test]
    fn lowpass_examples() {
        let pri = 1e-4;
        let l = 20; // 500 Hz bins
        let tone = |nu: f64| {
            (0..l)
                .map(|k| cis(2.0 * PI * nu * k as f64 * pri))
                .collect::<Vec<_>>()
        };
        let clutter = CMat::from_rows(&[vec![c64(0.7, -0.2); l]]);
        let target = CMat::from_rows(&[tone(2000.0)]);
        let out = doppler_lowpass(&clutter, 600.0, pri, false).unwrap();
        assert!(out.max_abs() < 1e-10);
        let out = doppler_lowpass(&target, 600.0, pri, false).unwrap();
        assert!((&out - &target).max_abs() < 1e-10);
        let mixed = &clutter + &target;
        let out = doppler_lowpass(&mixed, 600.0, pri, false).unwrap();
        assert!((&out - &target).max_abs() < 1e-10);
        let kept = doppler_lowpass(&mixed, 600.0, pri, true).unwrap();
        assert!((&kept - &clutter).max_abs() < 1e-10);
        assert!(matches!(
            doppler_lowpass(&mixed, 0.0, pri, false),
            Err(Error::Config(_))
        ));
        assert!(doppler_lowpass(&mixed, 5000.0, pri, false).is_err());
    }

    #[test]
    fn reflectivity_examples() {
        let scene = three_targets(&RadarParams::compact());
        let (_, synth, mat, s) = noiseless(MeasurementKind::Gaussian, &scene);
        let pairs: Vec<(f64, f64)> = scene.targets().iter().map(|t| (t.tau, t.nu)).collect();
        let r = ls_reflectivity(&s, &pairs, &mat, &synth).unwrap();
        for (a, t) in r.alphas.iter().zip(scene.targets()) {
            assert!((a - t.alpha).norm() < 1e-9 * t.alpha.norm());
        }
        assert!(r.relative_residual < 1e-9);

        let one = [pairs[0]];
        let col = ls_reflectivity(&CMat::zeros(s.rows(), s.cols()), &one, &mat, &synth).unwrap();
        assert_eq!(col.alphas[0], c64(0.0, 0.0));
        let single = Scene::from_targets(&[Target {
            tau: pairs[0].0,
            nu: pairs[0].1,
            alpha: c64(2.5, 0.0),
        }]);
        let (_, _, _, s1) = noiseless(MeasurementKind::Gaussian, &single);
        let a = ls_reflectivity(&s1, &one, &mat, &synth).unwrap();
        assert!((a.alphas[0] - c64(2.5, 0.0)).norm() < 1e-9);

        let dup = [pairs[0], pairs[0]];
        assert!(matches!(
            ls_reflectivity(&s, &dup, &mat, &synth),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn topk_ordering_and_ties() {
        let t = |tau: f64, nu: f64, a: f64| Target {
            tau,
            nu,
            alpha: c64(a, 0.0),
        };
        let cands = [
            t(3.0, 0.0, 1.0),
            t(1.0, 5.0, 2.0),
            t(2.0, 1.0, 2.0),
            t(1.0, -1.0, 2.0),
        ];
        let (top, trunc) = detect_topk(&cands, 3);
        assert!(!trunc);
        assert_eq!(
            top.iter().map(|x| (x.tau, x.nu)).collect::<Vec<_>>(),
            vec![(1.0, -1.0), (1.0, 5.0), (2.0, 1.0)]
        );
        let (all, trunc) = detect_topk(&cands, 4);
        assert_eq!(all.len(), 4);
        assert!(!trunc);
        let (_, trunc) = detect_topk(&cands, 9);
        assert!(trunc);
    }

    #[test]
    fn gesedd1_noiseless_end_to_end() {
        let scene = three_targets(&RadarParams::compact());
        let (p, synth, mat, s) = noiseless(MeasurementKind::Gaussian, &scene);
        let cfg = PipelineConfig::new(Method::Gesedd1, MusicConfig::new(3, &p));
        let rep = run(&s, &mat, &synth, &cfg).unwrap();
        check_against(&rep, &scene, &p, 1e-6);
        assert!(!rep.diagnostics.large_residual);
        assert!(rep.diagnostics.whitening_applied);
    }

    #[test]
    fn gesedd2_noiseless_is_grid_limited() {
        let scene = three_targets(&RadarParams::compact());
        let (p, synth, mat, s) = noiseless(MeasurementKind::Gaussian, &scene);
        let cfg = PipelineConfig::new(Method::Gesedd2, MusicConfig::new(3, &p));
        let rep = run(&s, &mat, &synth, &cfg).unwrap();
        assert!(rep.is_complete());
        let mut est = rep.targets.clone();
        est.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        for (e, t) in est.iter().zip(scene.targets()) {
            assert!((e.tau - t.tau).abs() <= 0.2 * p.tau0() + 1e-15);
        }
    }

    #[test]
    fn shared_delay_class_with_two_dopplers() {
        let p = RadarParams::compact();
        let scene = Scene::from_targets(&[
            Target {
                tau: 50.5 * p.tau0(),
                nu: 2.2 * p.nu0(),
                alpha: c64(1.0, 0.0),
            },
            Target {
                tau: 50.5 * p.tau0(),
                nu: -6.7 * p.nu0(),
                alpha: c64(0.0, 0.8),
            },
            Target {
                tau: 120.25 * p.tau0(),
                nu: 4.4 * p.nu0(),
                alpha: c64(0.5, 0.5),
            },
        ]);
        let (p, synth, mat, s) = noiseless(MeasurementKind::Bernoulli, &scene);
        let mut cfg = PipelineConfig::new(Method::Gesedd1, MusicConfig::new(2, &p));
        cfg.class_orders = ClassOrders::Fixed(scene.class_orders_by_delay());
        cfg.detection_k = 3;
        let rep = run(&s, &mat, &synth, &cfg).unwrap();
        check_against(&rep, &scene, &p, 1e-6);
        let text = rep.to_record();
        assert!(text.contains("status=complete\n"));
        assert!(text.contains("class.0.component.1.nu="));
    }

    #[test]
    fn pure_noise_completes_with_flag() {
        let p = RadarParams::compact();
        let synth = AtomSynth::new(&p);
        let mat = make_matrix(MeasurementKind::Gaussian, p.measurements(), p.n(), 2).unwrap();
        let noise = crate::model::nyquist_noise(p.n(), p.pulses(), 1.0 / p.bandwidth(), &p, 8);
        let s = compress(&mat, &noise, None).unwrap();
        let cfg = PipelineConfig::new(Method::Gesedd1, MusicConfig::new(1, &p));
        let rep = run(&s, &mat, &synth, &cfg).unwrap();
        assert!(rep.is_complete(), "{:?}", rep.status);
        assert!(rep.diagnostics.large_residual);
    }

    #[test]
    fn failure_is_stage_tagged() {
        let scene = three_targets(&RadarParams::compact());
        let (p, synth, mat, _) = noiseless(MeasurementKind::Gaussian, &scene);
        let s = CMat::zeros(p.measurements(), p.pulses());
        let cfg = PipelineConfig::new(Method::Gesedd1, MusicConfig::new(2, &p));
        let rep = run(&s, &mat, &synth, &cfg).unwrap();
        assert_eq!(rep.failed_stage(), Some(Stage::DelayEstimation));
        assert!(rep.to_record().contains("failed_stage=delay_estimation"));
        let bad = CMat::zeros(p.measurements() + 1, p.pulses());
        assert!(run(&bad, &mat, &synth, &cfg).is_err());
    }

    #[test]
    fn orders_capped_to_budget() {
        assert_eq!(cap_orders(vec![3, 1, 4], 5), vec![2, 1, 2]);
        assert_eq!(cap_orders(vec![1, 1], 0), vec![1, 1]);
    }
}
