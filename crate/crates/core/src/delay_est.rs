//! Delay estimation as a beamspace direction-finding problem.
//!
//! With `Psi = F^-1 G A`, the compressed data read `S = Bf A Theta + N` where
//! `Bf = M F^-1 G` plays the role of a beamformer and the columns of `A` are
//! steering vectors at the normalized frequencies `f = tau / T`. Two
//! estimators are provided: spectral MUSIC on a grid refined `D` times
//! beyond the Nyquist grid, and root-MUSIC on the null-spectrum polynomial.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::aic::{column_rank_report, MeasurementMatrix, RankReport, RANK_THRESHOLD};
use crate::error::{Error, Result};
use crate::matrix::{c64, cis, dot_conj, norm_sqr, CMat, C64};
use crate::model::{AtomSynth, RadarParams};
use crate::numerics::{herm_eig, poly_roots, poly_roots_aberth, AberthOptions};

/// Whitening is skipped (and flagged) above this condition number of `M M^H`.
pub const WHITEN_MAX_CONDITION: f64 = 1e12;

/// Roots closer than this to the unit circle are refined on the null spectrum.
pub const POLISH_RADIUS: f64 = 1e-5;

/// Signal/noise eigenvalue ratio below which no signal subspace is declared.
const MIN_SUBSPACE_GAP: f64 = 1.0 + 1e-9;

/// `a[n] = exp(-j 2 pi n f)`, `n = 0..len-1`.
pub fn steering(f: f64, len: usize) -> Vec<C64> {
    (0..len).map(|n| cis(-2.0 * PI * n as f64 * f)).collect()
}

/// `tau = T mod(f + 1, 1)`.
pub fn freq_to_delay(f: f64, pri: f64) -> f64 {
    pri * (f + 1.0).rem_euclid(1.0)
}

/// `f = tau / T` wrapped to `[-1/2, 1/2)`.
pub fn delay_to_freq(tau: f64, pri: f64) -> f64 {
    wrap_half(tau / pri)
}

/// Reduces `x` to `[-1/2, 1/2)`.
pub fn wrap_half(x: f64) -> f64 {
    let r = (x + 0.5).rem_euclid(1.0) - 0.5;
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// The compressed dictionary in beamspace form, `Bf = M F^-1 diag(G)`.
#[derive(Clone, Debug)]
pub struct BeamspaceModel {
    /// M x N beamformer (possibly whitened).
    pub bf: CMat,
    /// Pulse spectrum, the diagonal of `G`.
    pub g_diag: Vec<C64>,
    pub params: RadarParams,
}

impl BeamspaceModel {
    pub fn n(&self) -> usize {
        self.bf.cols()
    }

    pub fn m(&self) -> usize {
        self.bf.rows()
    }

    /// `Bf a(f)`, the compressed atom at normalized frequency `f`.
    pub fn response(&self, f: f64) -> Vec<C64> {
        self.bf.mul_vec(&steering(f, self.n()))
    }

    /// Left-multiplies the beamformer by `w`.
    pub fn transformed(&self, w: &CMat) -> BeamspaceModel {
        BeamspaceModel {
            bf: w.matmul(&self.bf),
            g_diag: self.g_diag.clone(),
            params: self.params.clone(),
        }
    }
}

/// Row `m` of `Bf` is `conj(FFT(conj(row_m(M)))) * G / N`.
pub fn build_beamspace(mat: &MeasurementMatrix, synth: &AtomSynth) -> Result<BeamspaceModel> {
    let n = synth.params().n();
    if mat.n() != n {
        return Err(Error::Contract(format!(
            "matrix has {} columns, radar grid has N = {n}",
            mat.n()
        )));
    }
    Ok(BeamspaceModel {
        bf: beamformer(&mat.data, synth.spectrum()),
        g_diag: synth.spectrum().to_vec(),
        params: synth.params().clone(),
    })
}

/// `data F^-1 diag(g)` by row FFTs.
pub fn beamformer(data: &CMat, g: &[C64]) -> CMat {
    let (m, n) = data.shape();
    assert_eq!(g.len(), n, "pulse spectrum length must equal N");
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut out = CMat::zeros(m, n);
    let mut buf = vec![c64(0.0, 0.0); n];
    let inv_n = 1.0 / n as f64;
    for r in 0..m {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = data[(r, k)].conj();
        }
        fft.process(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(r, k)] = b.conj() * g[k] * inv_n;
        }
    }
    out
}

/// `S S^H / L`, symmetrized.
pub fn sample_covariance(s: &CMat) -> Result<CMat> {
    let l = s.cols();
    if l == 0 {
        return Err(Error::Contract(
            "sample covariance needs at least one snapshot".into(),
        ));
    }
    let r = s.matmul(&s.adjoint()).scale_real(1.0 / l as f64);
    let m = r.rows();
    Ok(CMat::from_fn(m, m, |i, j| {
        0.5 * (r[(i, j)] + r[(j, i)].conj())
    }))
}

/// Outcome of pre-whitening by `(M M^H)^{-1/2}`.
#[derive(Clone, Debug)]
pub struct Whitening {
    /// The transform actually applied; `None` when whitening was skipped.
    pub transform: Option<CMat>,
    /// Condition number of `M M^H`.
    pub condition: f64,
    /// Set when the condition number exceeded [`WHITEN_MAX_CONDITION`].
    pub aborted: bool,
}

impl Whitening {
    pub fn identity() -> Self {
        Self {
            transform: None,
            condition: 1.0,
            aborted: false,
        }
    }

    pub fn applied(&self) -> bool {
        self.transform.is_some()
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        match &self.transform {
            Some(w) => w.matmul(x),
            None => x.clone(),
        }
    }

    pub fn apply_model(&self, model: &BeamspaceModel) -> BeamspaceModel {
        match &self.transform {
            Some(w) => model.transformed(w),
            None => model.clone(),
        }
    }
}

/// Builds the whitening transform for a measurement matrix.
pub fn whitening_for(mat: &MeasurementMatrix) -> Result<Whitening> {
    let gram = mat.data.matmul(&mat.data.adjoint());
    let m = gram.rows();
    let gram = CMat::from_fn(m, m, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)].conj()));
    let eig = herm_eig(&gram)?;
    let max = eig.values.first().copied().unwrap_or(0.0);
    let min = eig.values.last().copied().unwrap_or(0.0);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= WHITEN_MAX_CONDITION) {
        return Ok(Whitening {
            transform: None,
            condition,
            aborted: true,
        });
    }
    let v = &eig.vectors;
    let scaled = CMat::from_fn(m, m, |i, j| v[(i, j)] / eig.values[j].sqrt());
    Ok(Whitening {
        transform: Some(scaled.matmul(&v.adjoint())),
        condition,
        aborted: false,
    })
}

/// Whitens data and model together so the signal model is preserved.
pub fn whiten(
    s: &CMat,
    model: &BeamspaceModel,
    mat: &MeasurementMatrix,
) -> Result<(CMat, BeamspaceModel, Whitening)> {
    let w = whitening_for(mat)?;
    Ok((w.apply(s), w.apply_model(model), w))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMethod {
    #[default]
    RootMusic,
    SpectralMusic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rooting {
    /// Aberth-Ehrlich simultaneous iteration, companion eigenvalues on failure.
    #[default]
    Aberth,
    /// Eigenvalues of the companion matrix.
    Companion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MusicConfig {
    pub k_tau: usize,
    /// Search-grid refinement relative to the Nyquist grid.
    pub grid_refinement: usize,
    /// `None` picks the default for the matrix kind.
    pub whiten: Option<bool>,
    /// Delay estimates closer than this (seconds) are merged.
    pub cluster_tol: f64,
    pub rooting: Rooting,
    /// Newton refinement of near-circle roots on the null spectrum.
    pub polish: bool,
    pub keep_diagnostics: bool,
}

impl MusicConfig {
    pub fn new(k_tau: usize, params: &RadarParams) -> Self {
        Self {
            k_tau,
            grid_refinement: 5,
            whiten: None,
            cluster_tol: 0.1 * params.tau0(),
            rooting: Rooting::default(),
            polish: true,
            keep_diagnostics: false,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.k_tau == 0 {
            return Err(Error::Config("K_tau must be at least 1".into()));
        }
        if self.k_tau >= m {
            return Err(Error::Contract(format!(
                "K_tau = {} must be smaller than M = {m}",
                self.k_tau
            )));
        }
        if self.grid_refinement == 0 {
            return Err(Error::Config("grid refinement D must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DelayDiagnostics {
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Null-polynomial roots (root-MUSIC only).
    pub roots: Vec<C64>,
    /// `(f, P(f))` samples (spectral MUSIC only).
    pub spectrum: Vec<(f64, f64)>,
}

impl DelayDiagnostics {
    pub fn eigenvalues_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "{i},{v:e}");
        }
        s
    }

    pub fn roots_csv(&self) -> String {
        let mut s = String::from("re,im,modulus\n");
        for z in &self.roots {
            let _ = writeln!(s, "{:e},{:e},{:e}", z.re, z.im, z.norm());
        }
        s
    }

    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("freq,pseudospectrum\n");
        for (f, p) in &self.spectrum {
            let _ = writeln!(s, "{f:e},{p:e}");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayEstimate {
    /// Seconds, ascending.
    pub taus: Vec<f64>,
    /// Normalized frequencies in `[-1/2, 1/2)`, paired with `taus`.
    pub freqs: Vec<f64>,
    /// `lambda_{K_tau} / lambda_{K_tau + 1}`.
    pub subspace_gap: f64,
    pub method: DelayMethod,
    pub diagnostics: Option<DelayDiagnostics>,
}

struct Subspace {
    /// Noise-subspace basis, M x (M - K).
    noise: CMat,
    gap: f64,
    eigenvalues: Vec<f64>,
}

fn noise_subspace(cov: &CMat, k: usize) -> Result<Subspace> {
    let eig = herm_eig(cov)?;
    let m = cov.rows();
    let lk = eig.values[k - 1];
    let lk1 = eig.values[k].max(0.0);
    let gap = if lk1 > 0.0 { lk / lk1 } else { f64::INFINITY };
    if !(lk > 0.0) || gap < MIN_SUBSPACE_GAP {
        return Err(Error::Estimation(format!(
            "no signal subspace of dimension {k}: eigenvalue ratio {gap:.3e}"
        )));
    }
    Ok(Subspace {
        noise: eig.vectors.col_range(k, m),
        gap,
        eigenvalues: eig.values,
    })
}

/// Spectral MUSIC on `N D` grid points over `[-1/2, 1/2)`.
pub fn music_spectrum(
    cov: &CMat,
    model: &BeamspaceModel,
    cfg: &MusicConfig,
) -> Result<DelayEstimate> {
    check_shapes(cov, model)?;
    cfg.validate(model.m())?;
    let sub = noise_subspace(cov, cfg.k_tau)?;
    let (grid, spec) = pseudospectrum(&sub.noise, model, cfg.grid_refinement);
    let peaks = local_maxima(&spec);
    if peaks.len() < cfg.k_tau {
        return Err(Error::Estimation(format!(
            "pseudospectrum has {} local maxima, {} requested",
            peaks.len(),
            cfg.k_tau
        )));
    }
    let freqs: Vec<f64> = peaks[..cfg.k_tau].iter().map(|&g| grid[g]).collect();
    let diagnostics = cfg.keep_diagnostics.then(|| DelayDiagnostics {
        eigenvalues: sub.eigenvalues.clone(),
        roots: vec![],
        spectrum: grid.iter().copied().zip(spec.iter().copied()).collect(),
    });
    Ok(finish(
        freqs,
        sub.gap,
        DelayMethod::SpectralMusic,
        diagnostics,
        model,
        cfg,
    ))
}

/// Grid frequencies and `P(f) = ||Bf a||^2 / ||En^H Bf a||^2`.
fn pseudospectrum(noise: &CMat, model: &BeamspaceModel, refinement: usize) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = model.bf.shape();
    let p = n * refinement;
    let fft = FftPlanner::new().plan_fft_forward(p);
    // column g holds Bf a(f_g), f_g = -1/2 + g/p
    let mut resp = CMat::zeros(m, p);
    let mut buf = vec![c64(0.0, 0.0); p];
    for r in 0..m {
        buf.iter_mut().for_each(|b| *b = c64(0.0, 0.0));
        for (k, b) in buf.iter_mut().take(n).enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *b = model.bf[(r, k)] * sign;
        }
        fft.process(&mut buf);
        for (g, b) in buf.iter().enumerate() {
            resp[(r, g)] = *b;
        }
    }
    let proj = noise.adjoint().matmul(&resp);
    let grid: Vec<f64> = (0..p).map(|g| -0.5 + g as f64 / p as f64).collect();
    let spec = (0..p)
        .map(|g| {
            let num = norm_sqr(resp.col(g));
            let den = norm_sqr(proj.col(g));
            if den > 0.0 {
                num / den
            } else {
                f64::INFINITY
            }
        })
        .collect();
    (grid, spec)
}

/// Strict circular local maxima, strongest first, ties toward smaller index.
fn local_maxima(spec: &[f64]) -> Vec<usize> {
    let p = spec.len();
    if p < 3 {
        return vec![];
    }
    let mut peaks: Vec<usize> = (0..p)
        .filter(|&g| {
            let prev = spec[(g + p - 1) % p];
            let next = spec[(g + 1) % p];
            spec[g] > prev && spec[g] > next
        })
        .collect();
    peaks.sort_by(|&a, &b| spec[b].total_cmp(&spec[a]).then(a.cmp(&b)));
    peaks
}

/// Root-MUSIC on the null-spectrum polynomial of degree `2(N-1)`.
pub fn root_music(cov: &CMat, model: &BeamspaceModel, cfg: &MusicConfig) -> Result<DelayEstimate> {
    check_shapes(cov, model)?;
    cfg.validate(model.m())?;
    let sub = noise_subspace(cov, cfg.k_tau)?;
    let y = sub.noise.adjoint().matmul(&model.bf);
    let coeffs = null_polynomial(&y);
    let roots = match cfg.rooting {
        Rooting::Companion => poly_roots(&coeffs)?,
        Rooting::Aberth => match poly_roots_aberth(&coeffs, &AberthOptions::default()) {
            Ok(r) => r,
            Err(Error::Numerical(_)) => poly_roots(&coeffs)?,
            Err(e) => return Err(e),
        },
    };
    let n = model.n();
    let selected = select_roots(&roots, cfg.k_tau, n)?;
    let freqs: Vec<f64> = selected
        .iter()
        .map(|z| {
            let f = -z.arg() / (2.0 * PI);
            if cfg.polish && 1.0 - z.norm() < POLISH_RADIUS {
                polish_frequency(&y, f)
            } else {
                wrap_half(f)
            }
        })
        .collect();
    let diagnostics = cfg.keep_diagnostics.then(|| DelayDiagnostics {
        eigenvalues: sub.eigenvalues.clone(),
        roots: roots.clone(),
        spectrum: vec![],
    });
    Ok(finish(
        freqs,
        sub.gap,
        DelayMethod::RootMusic,
        diagnostics,
        model,
        cfg,
    ))
}

/// Ascending coefficients of `z^{N-1} a(z)^H C a(z)` with `C = Y^H Y`, i.e.
/// `c_m = sum_k C[k, k+m]` placed at power `m + N - 1`.
pub fn null_polynomial(y: &CMat) -> Vec<C64> {
    let n = y.cols();
    let p = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(p);
    let ifft = planner.plan_fft_inverse(p);
    let mut acc = vec![c64(0.0, 0.0); p];
    let mut buf = vec![c64(0.0, 0.0); p];
    for r in 0..y.rows() {
        buf.iter_mut().for_each(|b| *b = c64(0.0, 0.0));
        for k in 0..n {
            buf[k] = y[(r, k)];
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    ifft.process(&mut acc);
    let scale = 1.0 / p as f64;
    let mut coeffs = vec![c64(0.0, 0.0); 2 * n - 1];
    for m in 0..n {
        // the correlation is Hermitian in the lag; impose it exactly
        let pos = acc[m] * scale;
        let neg = if m == 0 { pos } else { acc[p - m] * scale };
        let c = 0.5 * (pos + neg.conj());
        coeffs[n - 1 + m] = c;
        coeffs[n - 1 - m] = c.conj();
    }
    coeffs
}

/// Picks `k` roots closest to the unit circle, folding each root into the
/// closed unit disk and keeping selections at least `2 pi / (4N)` apart.
fn select_roots(roots: &[C64], k: usize, n: usize) -> Result<Vec<C64>> {
    let min_sep = 2.0 * PI / (4.0 * n as f64);
    let mut cands: Vec<C64> = roots
        .iter()
        .filter(|z| z.is_finite() && z.norm() > 0.0)
        .map(|&z| if z.norm() > 1.0 { z.conj().inv() } else { z })
        .collect();
    cands.sort_by(|a, b| {
        (1.0 - a.norm())
            .total_cmp(&(1.0 - b.norm()))
            .then(a.arg().total_cmp(&b.arg()))
    });
    let mut chosen: Vec<C64> = Vec::with_capacity(k);
    for z in cands {
        let apart = chosen.iter().all(|c| {
            let d = (z.arg() - c.arg()).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d) >= min_sep
        });
        if apart {
            chosen.push(z);
            if chosen.len() == k {
                return Ok(chosen);
            }
        }
    }
    Err(Error::Estimation(format!(
        "only {} well-separated roots near the unit circle, {k} requested",
        chosen.len()
    )))
}

/// Newton iteration on `Q'(f) = 0`, `Q(f) = ||Y a(f)||^2`, with bounded steps.
fn polish_frequency(y: &CMat, f0: f64) -> f64 {
    let n = y.cols();
    let max_step = 0.25 / n as f64;
    let eval = |f: f64| -> (f64, f64, f64) {
        let a = steering(f, n);
        let w: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64).collect();
        let a1: Vec<C64> = a.iter().zip(&w).map(|(z, w)| z * c64(0.0, -w)).collect();
        let a2: Vec<C64> = a.iter().zip(&w).map(|(z, w)| z * (-w * w)).collect();
        let v = y.mul_vec(&a);
        let v1 = y.mul_vec(&a1);
        let v2 = y.mul_vec(&a2);
        let q = norm_sqr(&v);
        let d1 = 2.0 * dot_conj(&v, &v1).re;
        let d2 = 2.0 * (norm_sqr(&v1) + dot_conj(&v, &v2).re);
        (q, d1, d2)
    };
    let mut f = f0;
    let (mut q, mut d1, mut d2) = eval(f);
    for _ in 0..30 {
        if !(d2 > 0.0) {
            break;
        }
        let step = (-d1 / d2).clamp(-max_step, max_step);
        let cand = f + step;
        let (qc, d1c, d2c) = eval(cand);
        if !(qc <= q) {
            break;
        }
        f = cand;
        (q, d1, d2) = (qc, d1c, d2c);
        if step.abs() < 1e-15 {
            break;
        }
    }
    wrap_half(f)
}

fn check_shapes(cov: &CMat, model: &BeamspaceModel) -> Result<()> {
    if cov.rows() != cov.cols() || cov.rows() != model.m() {
        return Err(Error::Contract(format!(
            "covariance is {}x{}, beamformer has M = {}",
            cov.rows(),
            cov.cols(),
            model.m()
        )));
    }
    Ok(())
}

fn finish(
    freqs: Vec<f64>,
    gap: f64,
    method: DelayMethod,
    diagnostics: Option<DelayDiagnostics>,
    model: &BeamspaceModel,
    cfg: &MusicConfig,
) -> DelayEstimate {
    let pri = model.params.pri();
    let taus: Vec<f64> = freqs.iter().map(|&f| freq_to_delay(f, pri)).collect();
    let taus = cluster_delays(&taus, cfg.cluster_tol, pri);
    let freqs = taus.iter().map(|&t| delay_to_freq(t, pri)).collect();
    DelayEstimate {
        taus,
        freqs,
        subspace_gap: gap,
        method,
        diagnostics,
    }
}

/// Sorts delays and merges runs closer than `tol` (circularly on `[0, T)`)
/// into their mean.
pub fn cluster_delays(taus: &[f64], tol: f64, pri: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for t in sorted {
        match groups.last_mut() {
            Some(g) if t - g.last().copied().unwrap_or(t) <= tol => g.push(t),
            _ => groups.push(vec![t]),
        }
    }
    if groups.len() > 1 {
        let first = groups[0][0];
        let last = *groups.last().and_then(|g| g.last()).expect("non-empty");
        if first + pri - last <= tol {
            let head = groups.remove(0);
            groups
                .last_mut()
                .expect("non-empty")
                .extend(head.into_iter().map(|t| t + pri));
        }
    }
    let mut out: Vec<f64> = groups
        .iter()
        .map(|g| (g.iter().sum::<f64>() / g.len() as f64).rem_euclid(pri))
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Full-row-rank test of the coefficient matrix `Theta` (K_tau x L).
pub fn theorem2_check(theta: &CMat) -> Result<RankReport> {
    if theta.cols() < theta.rows() {
        return Err(Error::Contract(format!(
            "need L >= K_tau, got L = {} and K_tau = {}",
            theta.cols(),
            theta.rows()
        )));
    }
    column_rank_report(&theta.adjoint(), RANK_THRESHOLD)
}
