//! Analog-to-information measurement matrices, compression, and empirical
//! checks of the properties the estimator relies on (concentration of
//! measure, full column rank of the compressed dictionary).

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{c64, cis, norm_sqr, CMat, C64};
use crate::model::AtomSynth;
use crate::numerics::singular_values;
use crate::parallel::{map_indexed, Execution};
use crate::rng::{complex_normal, derive_seed, rng_for, rng_from_seed, stream};

/// Default relative singular-value threshold for full-rank decisions.
pub const RANK_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Gaussian,
    Bernoulli,
    PartialFourier,
    RandomDemod,
}

impl MeasurementKind {
    pub const ALL: [MeasurementKind; 4] = [
        MeasurementKind::Gaussian,
        MeasurementKind::Bernoulli,
        MeasurementKind::PartialFourier,
        MeasurementKind::RandomDemod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementKind::Gaussian => "gaussian",
            MeasurementKind::Bernoulli => "bernoulli",
            MeasurementKind::PartialFourier => "partial_fourier",
            MeasurementKind::RandomDemod => "random_demod",
        }
    }

    /// Whether the compressed noise is coloured enough that the pipeline
    /// whitens by default.
    pub fn whiten_by_default(self) -> bool {
        !matches!(self, MeasurementKind::PartialFourier)
    }
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasurementKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown matrix kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MatrixOptions {
    /// Scale partial Fourier rows by `1/sqrt(N)` (unit-norm rows).
    pub fourier_orthonormal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    pub kind: MeasurementKind,
    /// M x N.
    pub data: CMat,
    pub seed: u64,
    /// Common magnitude factor applied to every entry (`1/sqrt(M)` for the
    /// random ensembles, `1` or `1/sqrt(N)` for partial Fourier).
    pub row_scaling: f64,
}

impl MeasurementMatrix {
    pub fn m(&self) -> usize {
        self.data.rows()
    }

    pub fn n(&self) -> usize {
        self.data.cols()
    }
}

pub fn make_matrix(
    kind: MeasurementKind,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<MeasurementMatrix> {
    make_matrix_with(kind, m, n, seed, MatrixOptions::default())
}

pub fn make_matrix_with(
    kind: MeasurementKind,
    m: usize,
    n: usize,
    seed: u64,
    opts: MatrixOptions,
) -> Result<MeasurementMatrix> {
    if m == 0 || m >= n {
        return Err(Error::Config(format!(
            "need 0 < M < N, got M = {m}, N = {n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (data, row_scaling) = match kind {
        MeasurementKind::Gaussian => {
            let var = 1.0 / m as f64;
            (
                CMat::from_fn(m, n, |_, _| complex_normal(&mut rng, var)),
                var.sqrt(),
            )
        }
        MeasurementKind::Bernoulli => {
            let s = 1.0 / (m as f64).sqrt();
            (
                CMat::from_fn(m, n, |_, _| {
                    c64(if rng.random::<bool>() { s } else { -s }, 0.0)
                }),
                s,
            )
        }
        MeasurementKind::PartialFourier => {
            let s = if opts.fourier_orthonormal {
                1.0 / (n as f64).sqrt()
            } else {
                1.0
            };
            (partial_dft(m, n).scale_real(s), s)
        }
        MeasurementKind::RandomDemod => {
            if !n.is_multiple_of(m) {
                return Err(Error::Config(format!(
                    "random demodulator needs M | N, got M = {m}, N = {n}"
                )));
            }
            let chips: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let data = random_demod_from_chips(m, &chips)?;
            (data, 1.0 / ((n / m) as f64).sqrt())
        }
    };
    Ok(MeasurementMatrix {
        kind,
        data,
        seed,
        row_scaling,
    })
}

/// First `m` rows of the unnormalized `n`-point DFT, `exp(-j 2 pi m k / n)`.
pub fn partial_dft(m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |r, k| dft_entry(r, k, n))
}

fn dft_entry(r: usize, k: usize, n: usize) -> C64 {
    // reduce the index product first so the phase stays exact for large n
    let idx = (r * k) % n;
    cis(-2.0 * PI * idx as f64 / n as f64)
}

/// Block integrate-and-dump rows: row `i` carries `chips[i w .. (i+1) w]` as
/// `+-1/sqrt(w)`, with `w = len / m`. `true` is a positive chip.
pub fn random_demod_from_chips(m: usize, chips: &[bool]) -> Result<CMat> {
    let n = chips.len();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(Error::Config(format!(
            "random demodulator needs M | N, got M = {m}, N = {n}"
        )));
    }
    let w = n / m;
    let s = 1.0 / (w as f64).sqrt();
    Ok(CMat::from_fn(m, n, |i, k| {
        if k / w == i {
            c64(if chips[k] { s } else { -s }, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    }))
}

/// `S = M (R + noise)`.
pub fn compress(mat: &MeasurementMatrix, nyquist: &CMat, noise: Option<&CMat>) -> Result<CMat> {
    if nyquist.rows() != mat.n() {
        return Err(Error::Contract(format!(
            "matrix has N = {} columns but data has {} rows",
            mat.n(),
            nyquist.rows()
        )));
    }
    match noise {
        Some(w) if w.shape() != nyquist.shape() => Err(Error::Contract(format!(
            "noise shape {:?} differs from data shape {:?}",
            w.shape(),
            nyquist.shape()
        ))),
        Some(w) => Ok(mat.data.matmul(&(nyquist + w))),
        None => Ok(mat.data.matmul(nyquist)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStats {
    pub per_row_variance: Vec<f64>,
    pub mean_variance: f64,
    /// `N N0 B / M`, the level for rows of expected squared norm `N/M`.
    pub nominal_variance: f64,
    /// Whether the empirical mean is within 5% of the nominal level.
    pub matches_nominal: bool,
}

/// Row-wise variance implied by the matrix: `||row_m||^2 N0 B`.
pub fn expected_compressed_variance(mat: &MeasurementMatrix, n0: f64, bandwidth: f64) -> Vec<f64> {
    (0..mat.m())
        .map(|r| mat.data.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>() * n0 * bandwidth)
        .collect()
}

/// Monte-Carlo variance of the compressed noise `M n`, `n ~ CN(0, N0 B I)`.
pub fn compressed_noise_stats(
    mat: &MeasurementMatrix,
    n0: f64,
    bandwidth: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<NoiseStats> {
    if trials < 1000 {
        return Err(Error::Contract(format!(
            "compressed noise statistics need at least 1000 trials, got {trials}"
        )));
    }
    let (m, n) = (mat.m(), mat.n());
    let var = n0 * bandwidth;
    let chunks = 16.min(trials);
    let partial = map_indexed(chunks, exec, |c| {
        let mut acc = vec![0.0; m];
        let lo = c * trials / chunks;
        let hi = (c + 1) * trials / chunks;
        for t in lo..hi {
            let mut rng = rng_for(seed, &[t as u64, stream::NOISE]);
            let x: Vec<C64> = (0..n).map(|_| complex_normal(&mut rng, var)).collect();
            for (a, y) in acc.iter_mut().zip(mat.data.mul_vec(&x)) {
                *a += y.norm_sqr();
            }
        }
        acc
    });
    let mut per_row_variance = vec![0.0; m];
    for p in partial {
        for (a, v) in per_row_variance.iter_mut().zip(p) {
            *a += v;
        }
    }
    per_row_variance
        .iter_mut()
        .for_each(|v| *v /= trials as f64);
    let mean_variance = per_row_variance.iter().sum::<f64>() / m as f64;
    let nominal_variance = n as f64 * var / m as f64;
    let matches_nominal = if nominal_variance == 0.0 {
        mean_variance == 0.0
    } else {
        (mean_variance / nominal_variance - 1.0).abs() < 0.05
    };
    Ok(NoiseStats {
        per_row_variance,
        mean_variance,
        nominal_variance,
        matches_nominal,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComReport {
    pub kind: MeasurementKind,
    pub m: usize,
    pub n: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub violations: usize,
    pub empirical_tail: f64,
    /// `-ln(tail/2)/M`, defined only when some trial violated the band.
    pub bound_exponent: Option<f64>,
}

/// `||M x||^2 / ||x||^2`.
pub fn energy_ratio(mat: &MeasurementMatrix, x: &[C64]) -> f64 {
    norm_sqr(&mat.data.mul_vec(x)) / norm_sqr(x)
}

/// Empirical concentration-of-measure tail
/// `P(| ||Mx||^2 - ||x||^2 | >= eps ||x||^2)` over fresh matrices and unit vectors.
pub fn com_test(
    kind: MeasurementKind,
    m: usize,
    n: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<ComReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if trials == 0 {
        return Err(Error::Contract("com_test needs at least one trial".into()));
    }
    let flags = map_indexed(trials, exec, |t| -> Result<bool> {
        let mat = make_matrix(kind, m, n, derive_seed(seed, &[t as u64, stream::MATRIX]))?;
        let mut rng = rng_for(seed, &[t as u64, stream::PROBE]);
        let x: Vec<C64> = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();
        Ok((energy_ratio(&mat, &x) - 1.0).abs() >= epsilon)
    });
    let mut violations = 0;
    for f in flags {
        violations += usize::from(f?);
    }
    let empirical_tail = violations as f64 / trials as f64;
    let bound_exponent = (violations > 0).then(|| -(empirical_tail / 2.0).ln() / m as f64);
    Ok(ComReport {
        kind,
        m,
        n,
        epsilon,
        trials,
        violations,
        empirical_tail,
        bound_exponent,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    /// Descending singular values of `M Psi` (empty when not computed).
    pub singular_values: Vec<f64>,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    /// `sigma_min / sigma_max`.
    pub margin: f64,
    pub full_rank: bool,
    /// Relative threshold; full rank iff `sigma_min > threshold * sigma_max`.
    pub threshold: f64,
    pub diagnostic: Option<String>,
    pub trials: usize,
    pub success_rate: f64,
}

impl RankReport {
    fn from_singular_values(sv: Vec<f64>, threshold: f64) -> Self {
        let max = sv.first().copied().unwrap_or(0.0);
        let min = sv.last().copied().unwrap_or(0.0);
        let full_rank = !sv.is_empty() && min > threshold * max;
        let margin = if max > 0.0 { min / max } else { 0.0 };
        Self {
            singular_values: sv,
            min_singular_value: min,
            max_singular_value: max,
            margin,
            full_rank,
            threshold,
            diagnostic: None,
            trials: 1,
            success_rate: if full_rank { 1.0 } else { 0.0 },
        }
    }
}

/// Full-column-rank test of an arbitrary matrix by singular values.
pub fn column_rank_report(a: &CMat, threshold: f64) -> Result<RankReport> {
    let (rows, cols) = a.shape();
    if cols > rows {
        let mut r = RankReport::from_singular_values(vec![], threshold);
        r.diagnostic = Some(format!("{cols} columns exceed {rows} rows"));
        return Ok(r);
    }
    if cols == 0 {
        let mut r = RankReport::from_singular_values(vec![], threshold);
        r.diagnostic = Some("no columns".into());
        return Ok(r);
    }
    let mut sv = singular_values(a)?;
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(RankReport::from_singular_values(sv, threshold))
}

/// Whether the compressed dictionary `M Psi` has full column rank.
pub fn rank_check(mat: &MeasurementMatrix, psi: &CMat, threshold: f64) -> Result<RankReport> {
    if psi.rows() != mat.n() {
        return Err(Error::Contract(format!(
            "Psi has {} rows, matrix has N = {}",
            psi.rows(),
            mat.n()
        )));
    }
    if psi.cols() > mat.m() {
        let mut r = RankReport::from_singular_values(vec![], threshold);
        r.diagnostic = Some(format!(
            "K_tau = {} exceeds M = {}: column rank cannot be full",
            psi.cols(),
            mat.m()
        ));
        return Ok(r);
    }
    column_rank_report(&mat.data.matmul(psi), threshold)
}

/// Monte-Carlo full-rank probability over fresh matrices and off-grid delay sets.
///
/// Delays are drawn uniformly on `[0, T - T_p)`; `trials` and `success_rate`
/// are populated, and the singular-value fields hold the worst trial.
pub fn rank_probability(
    kind: MeasurementKind,
    synth: &AtomSynth,
    k_tau: usize,
    trials: usize,
    seed: u64,
    threshold: f64,
    exec: Execution,
) -> Result<RankReport> {
    if trials == 0 {
        return Err(Error::Contract(
            "rank_probability needs at least one trial".into(),
        ));
    }
    let p = synth.params();
    let reports = map_indexed(trials, exec, |t| -> Result<RankReport> {
        let mat = make_matrix(
            kind,
            p.measurements(),
            p.n(),
            derive_seed(seed, &[t as u64, stream::MATRIX]),
        )?;
        let mut rng = rng_for(seed, &[t as u64, stream::SCENE]);
        let taus: Vec<f64> = (0..k_tau)
            .map(|_| rng.random_range(0.0..p.max_delay()))
            .collect();
        let psi = synth.atom_matrix(&taus, crate::model::AtomMode::ModelMatched);
        rank_check(&mat, &psi, threshold)
    });
    let mut successes = 0usize;
    let mut worst: Option<RankReport> = None;
    for r in reports {
        let r = r?;
        successes += usize::from(r.full_rank);
        if worst.as_ref().is_none_or(|w| r.margin < w.margin) {
            worst = Some(r);
        }
    }
    let mut out = worst.expect("at least one trial");
    out.trials = trials;
    out.success_rate = successes as f64 / trials as f64;
    out.full_rank = successes == trials;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegeneracyReport {
    pub holds: bool,
    /// `max | M F^-1 - [I_M | 0] |`.
    pub inverse_dft_residual: f64,
    /// `max | M Psi - diag(G_M) A_M |`.
    pub dictionary_residual: f64,
    pub residual: f64,
}

pub const DEGENERACY_TOL: f64 = 1e-10;

/// Checks that a partial Fourier matrix reduces the dictionary to a
/// pulse-weighted partial steering matrix.
pub fn xampling_degeneracy_check(
    mat: &MeasurementMatrix,
    synth: &AtomSynth,
    taus: &[f64],
) -> Result<DegeneracyReport> {
    if mat.kind != MeasurementKind::PartialFourier {
        return Err(Error::Contract(format!(
            "degeneracy identity applies to partial_fourier, got {}",
            mat.kind
        )));
    }
    if mat.n() != synth.params().n() {
        return Err(Error::Contract(
            "matrix and radar grid disagree on N".into(),
        ));
    }
    Ok(degeneracy_residuals(&mat.data, synth, taus))
}

/// Residuals of both identities for an arbitrary `rows x N` matrix.
pub fn degeneracy_residuals(data: &CMat, synth: &AtomSynth, taus: &[f64]) -> DegeneracyReport {
    let n = data.cols();
    let m = data.rows();
    let inv_dft = CMat::from_fn(n, n, |i, k| dft_entry(i, k, n).conj() / n as f64);
    let prod = data.matmul(&inv_dft);
    let mut inverse_dft_residual = 0.0_f64;
    for j in 0..n {
        for i in 0..m {
            let target = if i == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) };
            inverse_dft_residual = inverse_dft_residual.max((prod[(i, j)] - target).norm());
        }
    }
    let psi = synth.atom_matrix(taus, crate::model::AtomMode::ModelMatched);
    let mpsi = data.matmul(&psi);
    let g = synth.spectrum();
    let t = synth.params().pri();
    let mut dictionary_residual = 0.0_f64;
    for (k, &tau) in taus.iter().enumerate() {
        for i in 0..m {
            let expect = g[i] * cis(-2.0 * PI * i as f64 * tau / t);
            dictionary_residual = dictionary_residual.max((mpsi[(i, k)] - expect).norm());
        }
    }
    // scale-free comparison against the pulse spectrum magnitude
    let gscale = g.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = inverse_dft_residual.max(dictionary_residual / gscale);
    DegeneracyReport {
        holds: residual < DEGENERACY_TOL,
        inverse_dft_residual,
        dictionary_residual,
        residual,
    }
}

/// Row-major little-endian `(re, im)` f64 pairs.
pub fn write_matrix_le<W: Write>(mat: &CMat, mut w: W) -> std::io::Result<()> {
    for i in 0..mat.rows() {
        for j in 0..mat.cols() {
            let z = mat[(i, j)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_le<R: Read>(rows: usize, cols: usize, mut r: R) -> std::io::Result<CMat> {
    let mut buf = vec![0u8; rows * cols * 16];
    r.read_exact(&mut buf)?;
    let word = |k: usize| f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        c64(word(k), word(k + 1))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomMode, RadarParams};
    use rustfft::FftPlanner;

    #[test]
    fn partial_fourier_first_row_is_ones() {
        let m = make_matrix(MeasurementKind::PartialFourier, 4, 16, 0).unwrap();
        assert!(m
            .data
            .row(0)
            .iter()
            .all(|z| (z - c64(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn random_demod_hand_example() {
        let d = random_demod_from_chips(2, &[true, false, true, true]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expect = [[s, -s, 0.0, 0.0], [0.0, 0.0, s, s]];
        for i in 0..2 {
            for j in 0..4 {
                assert!((d[(i, j)] - c64(expect[i][j], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn random_demod_needs_divisibility() {
        assert!(matches!(
            make_matrix(MeasurementKind::RandomDemod, 3, 16, 1),
            Err(Error::Config(_))
        ));
        let m = make_matrix(MeasurementKind::RandomDemod, 4, 16, 1).unwrap();
        for i in 0..4 {
            for k in 0..16 {
                let nonzero = m.data[(i, k)].norm() > 0.0;
                assert_eq!(nonzero, k / 4 == i);
            }
        }
    }

    #[test]
    fn shapes_and_seeds() {
        assert!(make_matrix(MeasurementKind::Gaussian, 16, 16, 0).is_err());
        for kind in MeasurementKind::ALL {
            let a = make_matrix(kind, 8, 32, 9).unwrap();
            assert_eq!(a.data.shape(), (8, 32));
            assert_eq!(a, make_matrix(kind, 8, 32, 9).unwrap());
        }
        let b = make_matrix(MeasurementKind::Bernoulli, 8, 32, 3).unwrap();
        let s = 1.0 / 8f64.sqrt();
        assert!(b
            .data
            .as_slice()
            .iter()
            .all(|z| z.im == 0.0 && (z.re.abs() - s).abs() < 1e-15));
    }

    #[test]
    fn gaussian_energy_is_preserved_on_average() {
        let x: Vec<C64> = (0..32).map(|k| c64((k as f64).sin(), 0.5)).collect();
        let trials = 4000;
        let mean: f64 = (0..trials)
            .map(|t| {
                energy_ratio(
                    &make_matrix(MeasurementKind::Gaussian, 8, 32, t).unwrap(),
                    &x,
                )
            })
            .sum::<f64>()
            / trials as f64;
        // std of the ratio is 1/sqrt(M) = 0.35, so the mean has std 0.006
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn compress_is_plain_matrix_product() {
        let mat = make_matrix(MeasurementKind::Gaussian, 3, 5, 4).unwrap();
        let r = CMat::from_fn(5, 2, |i, j| c64(i as f64 - j as f64, 0.25 * (i * j) as f64));
        let s = compress(&mat, &r, None).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = c64(0.0, 0.0);
                for k in 0..5 {
                    acc += mat.data[(i, k)] * r[(k, j)];
                }
                assert!((acc - s[(i, j)]).norm() < 1e-12);
            }
        }
        let zero = compress(&mat, &CMat::zeros(5, 2), None).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert!(matches!(
            compress(&mat, &CMat::zeros(4, 2), None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn partial_fourier_compression_is_truncated_dft() {
        let p = RadarParams::compact();
        let synth = AtomSynth::new(&p);
        let atom = synth
            .atom(7.0 * p.nyquist_period(), AtomMode::ModelMatched)
            .unwrap();
        let mat = make_matrix(MeasurementKind::PartialFourier, p.measurements(), p.n(), 0).unwrap();
        let s = compress(&mat, &CMat::from_columns(std::slice::from_ref(&atom)), None).unwrap();
        let mut spec = atom;
        FftPlanner::new().plan_fft_forward(p.n()).process(&mut spec);
        for i in 0..p.measurements() {
            assert!((s[(i, 0)] - spec[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_stats_requires_trials_and_handles_zero_psd() {
        let mat = make_matrix(MeasurementKind::Gaussian, 4, 16, 1).unwrap();
        assert!(compressed_noise_stats(&mat, 1.0, 1.0, 10, 0, Execution::Sequential).is_err());
        let z = compressed_noise_stats(&mat, 0.0, 1.0, 1000, 0, Execution::Sequential).unwrap();
        assert_eq!(z.mean_variance, 0.0);
    }

    #[test]
    fn partial_fourier_noise_row_norms() {
        let mat = make_matrix(MeasurementKind::PartialFourier, 4, 16, 0).unwrap();
        let v = expected_compressed_variance(&mat, 0.5, 2.0);
        assert!(v.iter().all(|x| (x - 16.0).abs() < 1e-12));
    }

    #[test]
    fn com_negative_control() {
        let mat = make_matrix(MeasurementKind::PartialFourier, 8, 32, 0).unwrap();
        let mut e1 = vec![c64(0.0, 0.0); 32];
        e1[0] = c64(1.0, 0.0);
        assert!((energy_ratio(&mat, &e1) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn com_epsilon_domain() {
        assert!(com_test(
            MeasurementKind::Gaussian,
            8,
            32,
            1.0,
            10,
            0,
            Execution::Sequential
        )
        .is_err());
        let r = com_test(
            MeasurementKind::Gaussian,
            64,
            128,
            0.99,
            200,
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert!(r.empirical_tail < 0.02);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let p = RadarParams::compact();
        let synth = AtomSynth::new(&p);
        let mat = make_matrix(MeasurementKind::Gaussian, p.measurements(), p.n(), 2).unwrap();
        let psi = synth.atom_matrix(&[3e-6, 3e-6], AtomMode::ModelMatched);
        assert!(!rank_check(&mat, &psi, RANK_THRESHOLD).unwrap().full_rank);
        let psi = synth.atom_matrix(&[3e-6, 7.3e-6, 40.1e-6], AtomMode::ModelMatched);
        let r = rank_check(&mat, &psi, RANK_THRESHOLD).unwrap();
        assert!(r.full_rank && r.diagnostic.is_none());
    }

    #[test]
    fn too_many_delays_flagged() {
        let p = RadarParams::new(1e6, 32e-6, 4e-6, 4, 2).unwrap();
        let synth = AtomSynth::new(&p);
        let mat = make_matrix(MeasurementKind::Gaussian, 2, 32, 0).unwrap();
        let psi = synth.atom_matrix(&[1e-6, 5e-6, 9e-6], AtomMode::ModelMatched);
        let r = rank_check(&mat, &psi, RANK_THRESHOLD).unwrap();
        assert!(!r.full_rank && r.diagnostic.is_some());
    }

    #[test]
    fn degeneracy_identity() {
        let p = RadarParams::compact();
        let synth = AtomSynth::new(&p);
        let taus = [1.3e-6, 20.77e-6, 61.0e-6];
        let pf = make_matrix(MeasurementKind::PartialFourier, p.measurements(), p.n(), 0).unwrap();
        let r = xampling_degeneracy_check(&pf, &synth, &taus).unwrap();
        assert!(r.holds, "{r:?}");

        let g = make_matrix(MeasurementKind::Gaussian, p.measurements(), p.n(), 0).unwrap();
        assert!(matches!(
            xampling_degeneracy_check(&g, &synth, &taus),
            Err(Error::Contract(_))
        ));
        let neg = degeneracy_residuals(&g.data, &synth, &taus);
        assert!(!neg.holds && neg.residual > 1e-2);

        // square case: M F^-1 = I_N
        let full = partial_dft(p.n(), p.n());
        assert!(degeneracy_residuals(&full, &synth, &taus).holds);
    }

    #[test]
    fn binary_dump_round_trip() {
        let mat = make_matrix(MeasurementKind::Gaussian, 3, 7, 5).unwrap();
        let mut bytes = Vec::new();
        write_matrix_le(&mat.data, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 3 * 7 * 16);
        // first pair is entry (0, 0), second is (0, 1)
        let re01 = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        assert_eq!(re01, mat.data[(0, 1)].re);
        assert_eq!(read_matrix_le(3, 7, bytes.as_slice()).unwrap(), mat.data);
    }
}
