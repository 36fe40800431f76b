//! Radar scene, transmitted pulse, Nyquist-rate echo, noise and clutter.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng as _;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::aic::MeasurementMatrix;
use crate::error::{Error, Result};
use crate::matrix::{c64, cis, norm_sqr, CMat, C64};
use crate::rng::{complex_normal, rng_from_seed};

/// Pulse-Doppler timing and sampling parameters.
///
/// Only the primary quantities are stored; the Nyquist grid and the
/// resolution cells are derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarParams {
    bandwidth: f64,
    pri: f64,
    pulse_width: f64,
    pulses: usize,
    measurements: usize,
}

impl RadarParams {
    pub fn new(
        bandwidth: f64,
        pri: f64,
        pulse_width: f64,
        pulses: usize,
        measurements: usize,
    ) -> Result<Self> {
        let p = Self {
            bandwidth,
            pri,
            pulse_width,
            pulses,
            measurements,
        };
        p.validate()?;
        Ok(p)
    }

    /// `M = N / ratio`, i.e. sampling at `1/ratio` of the Nyquist rate.
    pub fn with_compression_ratio(
        bandwidth: f64,
        pri: f64,
        pulse_width: f64,
        pulses: usize,
        ratio: usize,
    ) -> Result<Self> {
        if ratio < 2 {
            return Err(Error::Config("compression ratio must be at least 2".into()));
        }
        let n = (bandwidth * pri).round() as usize;
        Self::new(bandwidth, pri, pulse_width, pulses, n / ratio)
    }

    /// B = 100 MHz, T_p = 10 us, T = 100 us, L = 100, one-fifth of the Nyquist rate.
    pub fn paper() -> Self {
        Self::with_compression_ratio(100e6, 100e-6, 10e-6, 100, 5).expect("valid profile")
    }

    /// Laptop-scale default: N = 512, M = 128, L = 64.
    pub fn desk() -> Self {
        Self::new(5.12e6, 100e-6, 12.5e-6, 64, 128).expect("valid profile")
    }

    /// Small grid used by the fast test suites: N = 256, M = 64, L = 32.
    pub fn compact() -> Self {
        Self::new(2.56e6, 100e-6, 12.5e-6, 32, 64).expect("valid profile")
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.bandwidth, self.pri, self.pulse_width]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.pulses == 0 || self.measurements == 0 {
            return Err(Error::Config("radar parameters must be positive".into()));
        }
        if self.pulse_width >= self.pri {
            return Err(Error::Config(format!(
                "pulse width {} s must be shorter than the PRI {} s",
                self.pulse_width, self.pri
            )));
        }
        let n = self.n();
        if self.measurements >= n {
            return Err(Error::Config(format!(
                "need M < N, got M = {} and N = {n}",
                self.measurements
            )));
        }
        if self.pulse_samples() == 0 {
            return Err(Error::Config(
                "pulse shorter than one Nyquist sample".into(),
            ));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Pulse repetition interval `T`.
    pub fn pri(&self) -> f64 {
        self.pri
    }

    pub fn pulse_width(&self) -> f64 {
        self.pulse_width
    }

    /// Pulses per CPI, `L`.
    pub fn pulses(&self) -> usize {
        self.pulses
    }

    /// Compressive measurements per PRI, `M`.
    pub fn measurements(&self) -> usize {
        self.measurements
    }

    /// Nyquist samples per PRI, `N = round(B T)`.
    pub fn n(&self) -> usize {
        (self.bandwidth * self.pri).round() as usize
    }

    pub fn nyquist_period(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// Delay resolution `1/B`.
    pub fn tau0(&self) -> f64 {
        1.0 / self.bandwidth
    }

    /// Doppler resolution `1/(L T)`.
    pub fn nu0(&self) -> f64 {
        1.0 / (self.pulses as f64 * self.pri)
    }

    pub fn pulse_samples(&self) -> usize {
        (self.bandwidth * self.pulse_width).round() as usize
    }

    /// Upper end (exclusive) of the unambiguous delay interval, `T - T_p`.
    pub fn max_delay(&self) -> f64 {
        self.pri - self.pulse_width
    }

    /// Half-width of the unambiguous Doppler interval, `1/(2T)`.
    pub fn max_doppler(&self) -> f64 {
        0.5 / self.pri
    }

    pub fn with_measurements(&self, m: usize) -> Result<Self> {
        Self::new(self.bandwidth, self.pri, self.pulse_width, self.pulses, m)
    }

    pub fn with_pulses(&self, l: usize) -> Result<Self> {
        Self::new(
            self.bandwidth,
            self.pri,
            self.pulse_width,
            l,
            self.measurements,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    /// Delay in seconds.
    pub tau: f64,
    /// Doppler in Hz.
    pub nu: f64,
    pub alpha: C64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DopplerComponent {
    pub nu: f64,
    pub alpha: C64,
}

/// Targets sharing one delay.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayClass {
    pub tau: f64,
    pub members: Vec<DopplerComponent>,
}

impl DelayClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub classes: Vec<DelayClass>,
}

impl Scene {
    /// Groups targets by exactly equal delay; class order follows first appearance.
    pub fn from_targets(targets: &[Target]) -> Self {
        let mut classes: Vec<DelayClass> = Vec::new();
        for t in targets {
            let member = DopplerComponent {
                nu: t.nu,
                alpha: t.alpha,
            };
            match classes.iter_mut().find(|c| c.tau == t.tau) {
                Some(c) => c.members.push(member),
                None => classes.push(DelayClass {
                    tau: t.tau,
                    members: vec![member],
                }),
            }
        }
        Self { classes }
    }

    /// Total number of targets `K`.
    pub fn k(&self) -> usize {
        self.classes.iter().map(DelayClass::len).sum()
    }

    /// Number of distinct delays `K_tau`.
    pub fn k_tau(&self) -> usize {
        self.classes.len()
    }

    pub fn targets(&self) -> Vec<Target> {
        self.classes
            .iter()
            .flat_map(|c| {
                c.members.iter().map(move |m| Target {
                    tau: c.tau,
                    nu: m.nu,
                    alpha: m.alpha,
                })
            })
            .collect()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.tau).collect()
    }

    /// Per-class Doppler counts in ascending-delay order.
    pub fn class_orders_by_delay(&self) -> Vec<usize> {
        let mut v: Vec<(f64, usize)> = self.classes.iter().map(|c| (c.tau, c.len())).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v.into_iter().map(|(_, k)| k).collect()
    }

    pub fn scaled(&self, factor: C64) -> Scene {
        Scene {
            classes: self
                .classes
                .iter()
                .map(|c| DelayClass {
                    tau: c.tau,
                    members: c
                        .members
                        .iter()
                        .map(|m| DopplerComponent {
                            nu: m.nu,
                            alpha: m.alpha * factor,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn validate(&self, params: &RadarParams) -> Result<()> {
        let max_delay = params.max_delay();
        let max_nu = params.max_doppler();
        for (i, c) in self.classes.iter().enumerate() {
            if !(0.0..max_delay).contains(&c.tau) {
                return Err(Error::Domain(format!(
                    "delay {} s outside [0, {max_delay})",
                    c.tau
                )));
            }
            if c.members.is_empty() {
                return Err(Error::Domain(format!("delay class {i} has no members")));
            }
            for (j, m) in c.members.iter().enumerate() {
                if !(m.nu > -max_nu && m.nu < max_nu) {
                    return Err(Error::Domain(format!(
                        "Doppler {} Hz outside (-{max_nu}, {max_nu})",
                        m.nu
                    )));
                }
                if m.alpha.norm() == 0.0 {
                    return Err(Error::Domain("zero reflectivity".into()));
                }
                if c.members[..j].iter().any(|o| o.nu == m.nu) {
                    return Err(Error::Domain(format!(
                        "repeated Doppler {} Hz within delay class {i}",
                        m.nu
                    )));
                }
            }
            if self.classes[..i].iter().any(|o| o.tau == c.tau) {
                return Err(Error::Domain(format!("repeated delay {} s", c.tau)));
            }
        }
        Ok(())
    }
}

/// How atoms are synthesized from a delay.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomMode {
    /// Circular frequency-domain delay, `F^-1 G a(tau)`; the estimator's own model.
    #[default]
    ModelMatched,
    /// Direct sampling of the delayed continuous pulse.
    Physical,
}

/// Power ratio in dB with an explicit "infinite" sentinel (no noise, no clutter).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RatioRepr", into = "RatioRepr")]
pub enum PowerRatio {
    Db(f64),
    Infinite,
}

impl PowerRatio {
    pub fn linear(self) -> Option<f64> {
        match self {
            PowerRatio::Db(db) => Some(10f64.powf(db / 10.0)),
            PowerRatio::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PowerRatio::Infinite)
    }

    /// Numeric value for tables; the sentinel maps to `+inf`.
    pub fn as_f64(self) -> f64 {
        match self {
            PowerRatio::Db(db) => db,
            PowerRatio::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for PowerRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PowerRatio::Db(db) => write!(f, "{db}"),
            PowerRatio::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RatioRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<RatioRepr> for PowerRatio {
    type Error = String;

    fn try_from(r: RatioRepr) -> std::result::Result<Self, String> {
        match r {
            RatioRepr::Num(v) if v.is_finite() => Ok(PowerRatio::Db(v)),
            RatioRepr::Num(v) if v == f64::INFINITY => Ok(PowerRatio::Infinite),
            RatioRepr::Num(v) => Err(format!("invalid power ratio {v}")),
            RatioRepr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinite" | "none" | "off" | "noiseless" => Ok(PowerRatio::Infinite),
                other => other
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(PowerRatio::Db)
                    .ok_or_else(|| format!("invalid power ratio {s:?}")),
            },
        }
    }
}

impl From<PowerRatio> for RatioRepr {
    fn from(p: PowerRatio) -> Self {
        match p {
            PowerRatio::Db(v) => RatioRepr::Num(v),
            PowerRatio::Infinite => RatioRepr::Text("inf".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// PSD level; per-sample variance is `n0 * B`.
    pub n0: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClutterParams {
    pub n_scatterers: usize,
    pub scr: PowerRatio,
    /// Width of the zero-centred Doppler interval the scatterers occupy (Hz).
    pub doppler_bin_width: f64,
    /// Delay interval `[lo, hi)` in seconds.
    pub delay_span: (f64, f64),
    pub seed: u64,
}

/// Continuous LFM envelope, symmetric sweep over `[-B/2, B/2]`, unit modulus on `[0, T_p)`.
pub fn pulse_value(params: &RadarParams, t: f64) -> C64 {
    // support edges are compared with a sub-sample guard so that on-grid
    // delays reproduce the sampled pulse exactly
    let guard = 1e-9 * params.nyquist_period();
    if t < -guard || t >= params.pulse_width() - guard {
        return c64(0.0, 0.0);
    }
    let rate = params.bandwidth() / params.pulse_width();
    let u = t - 0.5 * params.pulse_width();
    cis(PI * rate * u * u)
}

/// Nyquist samples of the transmitted pulse, length `round(B T_p)`.
pub fn lfm_pulse(params: &RadarParams) -> Vec<C64> {
    let rate = params.bandwidth() / params.pulse_width();
    let half = 0.5 * params.pulse_width();
    let dt = params.nyquist_period();
    (0..params.pulse_samples())
        .map(|i| {
            let u = i as f64 * dt - half;
            cis(PI * rate * u * u)
        })
        .collect()
}

/// Pulse zero-padded (or truncated) to `n` samples.
pub fn padded_pulse(pulse: &[C64], n: usize) -> Vec<C64> {
    let mut g = vec![c64(0.0, 0.0); n];
    let k = pulse.len().min(n);
    g[..k].copy_from_slice(&pulse[..k]);
    g
}

/// Synthesizes atoms for one radar configuration, caching the pulse spectrum.
#[derive(Clone)]
pub struct AtomSynth {
    params: RadarParams,
    pulse: Vec<C64>,
    spectrum: Vec<C64>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AtomSynth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AtomSynth")
            .field("n", &self.params.n())
            .finish()
    }
}

impl AtomSynth {
    pub fn new(params: &RadarParams) -> Self {
        Self::with_pulse(params, &lfm_pulse(params))
    }

    pub fn with_pulse(params: &RadarParams, pulse: &[C64]) -> Self {
        let n = params.n();
        let mut planner = FftPlanner::new();
        let mut spectrum = padded_pulse(pulse, n);
        planner.plan_fft_forward(n).process(&mut spectrum);
        Self {
            params: params.clone(),
            pulse: pulse.to_vec(),
            spectrum,
            ifft: planner.plan_fft_inverse(n),
        }
    }

    pub fn params(&self) -> &RadarParams {
        &self.params
    }

    pub fn pulse(&self) -> &[C64] {
        &self.pulse
    }

    /// DFT of the zero-padded pulse, the diagonal of `G`.
    pub fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }

    pub fn atom(&self, tau: f64, mode: AtomMode) -> Result<Vec<C64>> {
        let max = self.params.max_delay();
        if !(0.0..max).contains(&tau) {
            return Err(Error::Domain(format!("delay {tau} s outside [0, {max})")));
        }
        Ok(self.atom_unchecked(tau, mode))
    }

    /// Atom without the unambiguous-range check; used for hypothesised delays.
    pub fn atom_unchecked(&self, tau: f64, mode: AtomMode) -> Vec<C64> {
        let n = self.params.n();
        match mode {
            AtomMode::ModelMatched => {
                let f = tau / self.params.pri();
                let mut buf: Vec<C64> = self
                    .spectrum
                    .iter()
                    .enumerate()
                    .map(|(k, g)| g * cis(-2.0 * PI * (k as f64) * f))
                    .collect();
                self.ifft.process(&mut buf);
                let inv_n = 1.0 / n as f64;
                buf.iter_mut().for_each(|z| *z *= inv_n);
                buf
            }
            AtomMode::Physical => {
                let dt = self.params.nyquist_period();
                (0..n)
                    .map(|i| pulse_value(&self.params, i as f64 * dt - tau))
                    .collect()
            }
        }
    }

    /// `Psi`, one atom per column.
    pub fn atom_matrix(&self, taus: &[f64], mode: AtomMode) -> CMat {
        let cols: Vec<Vec<C64>> = taus.iter().map(|&t| self.atom_unchecked(t, mode)).collect();
        if cols.is_empty() {
            return CMat::zeros(self.params.n(), 0);
        }
        CMat::from_columns(&cols)
    }
}

pub fn atom(tau: f64, params: &RadarParams, mode: AtomMode) -> Result<Vec<C64>> {
    AtomSynth::new(params).atom(tau, mode)
}

/// `alpha_i[l] = sum_j alpha_ij exp(j 2 pi nu_ij l T)`, `l = 0..L-1`.
pub fn coeff_sequence(class: &DelayClass, params: &RadarParams) -> Vec<C64> {
    let t = params.pri();
    (0..params.pulses())
        .map(|l| {
            class
                .members
                .iter()
                .map(|m| m.alpha * cis(2.0 * PI * m.nu * l as f64 * t))
                .sum()
        })
        .collect()
}

/// `Theta`, one row per delay class in scene order.
pub fn coeff_matrix(scene: &Scene, params: &RadarParams) -> CMat {
    let rows: Vec<Vec<C64>> = scene
        .classes
        .iter()
        .map(|c| coeff_sequence(c, params))
        .collect();
    if rows.is_empty() {
        return CMat::zeros(0, params.pulses());
    }
    CMat::from_rows(&rows)
}

/// Nyquist-rate echo `R = Psi Theta` (N x L).
pub fn echo_matrix(scene: &Scene, params: &RadarParams, mode: AtomMode) -> CMat {
    echo_matrix_with(&AtomSynth::new(params), scene, mode)
}

pub fn echo_matrix_with(synth: &AtomSynth, scene: &Scene, mode: AtomMode) -> CMat {
    let params = synth.params();
    if scene.classes.is_empty() {
        return CMat::zeros(params.n(), params.pulses());
    }
    let psi = synth.atom_matrix(&scene.delays(), mode);
    psi.matmul(&coeff_matrix(scene, params))
}

/// Mean per-pulse energy `(1/L) sum_l ||r^l||^2`.
pub fn mean_pulse_energy(r: &CMat) -> f64 {
    if r.cols() == 0 {
        return 0.0;
    }
    (0..r.cols()).map(|l| norm_sqr(r.col(l))).sum::<f64>() / r.cols() as f64
}

/// PSD level `N0` giving the requested SNR against the mean per-pulse energy of `r`.
pub fn noise_psd_for_snr(r: &CMat, snr_db: f64, params: &RadarParams) -> Result<f64> {
    let energy = mean_pulse_energy(r);
    if energy == 0.0 {
        return Err(Error::Domain("SNR undefined for an all-zero echo".into()));
    }
    let per_sample = energy / r.rows() as f64;
    Ok(per_sample / 10f64.powf(snr_db / 10.0) / params.bandwidth())
}

/// i.i.d. circular Gaussian Nyquist-rate noise with per-sample variance `n0 B`.
pub fn nyquist_noise(rows: usize, cols: usize, n0: f64, params: &RadarParams, seed: u64) -> CMat {
    let var = n0 * params.bandwidth();
    let mut rng = rng_from_seed(seed);
    let mut out = CMat::zeros(rows, cols);
    if var == 0.0 {
        return out;
    }
    for j in 0..cols {
        for z in out.col_mut(j) {
            *z = complex_normal(&mut rng, var);
        }
    }
    out
}

/// Noise matrix for the requested SNR, or `None` for the noiseless sentinel.
pub fn draw_noise(
    r: &CMat,
    snr: PowerRatio,
    params: &RadarParams,
    seed: u64,
) -> Result<Option<(CMat, NoiseParams)>> {
    if r.is_empty() {
        return Err(Error::Contract("empty echo matrix".into()));
    }
    match snr {
        PowerRatio::Infinite => Ok(None),
        PowerRatio::Db(db) => {
            let n0 = noise_psd_for_snr(r, db, params)?;
            let noise = nyquist_noise(r.rows(), r.cols(), n0, params, seed);
            Ok(Some((noise, NoiseParams { n0, seed })))
        }
    }
}

/// `R + noise` at the requested SNR (fixed across pulses).
pub fn add_noise(r: &CMat, snr: PowerRatio, params: &RadarParams, seed: u64) -> Result<CMat> {
    Ok(match draw_noise(r, snr, params, seed)? {
        Some((noise, _)) => r + &noise,
        None => r.clone(),
    })
}

/// Swerling-0 clutter at Nyquist rate, scaled so that the compressed-domain
/// signal-to-clutter ratio against `ref_echo` equals `cp.scr`.
pub fn gen_clutter(
    synth: &AtomSynth,
    cp: &ClutterParams,
    ref_echo: &CMat,
    mat: &MeasurementMatrix,
    mode: AtomMode,
) -> Result<CMat> {
    let params = synth.params();
    let (n, l) = (params.n(), params.pulses());
    let Some(scr) = cp.scr.linear() else {
        return Ok(CMat::zeros(n, l));
    };
    if cp.n_scatterers == 0 {
        return Err(Error::Config("clutter needs at least one scatterer".into()));
    }
    let (lo, hi) = cp.delay_span;
    if !(lo >= 0.0 && hi > lo && hi <= params.max_delay()) {
        return Err(Error::Config(format!(
            "clutter delay span ({lo}, {hi}) not inside [0, {})",
            params.max_delay()
        )));
    }
    if cp.doppler_bin_width < 0.0 || cp.doppler_bin_width >= 1.0 / params.pri() {
        return Err(Error::Config("clutter Doppler width out of range".into()));
    }
    let mut rng = rng_from_seed(cp.seed);
    let mut taus = Vec::with_capacity(cp.n_scatterers);
    let mut theta = CMat::zeros(cp.n_scatterers, l);
    for s in 0..cp.n_scatterers {
        let tau = rng.random_range(lo..hi);
        let u: f64 = rng.random_range(-0.5..0.5);
        let nu = u * cp.doppler_bin_width;
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        taus.push(tau);
        for li in 0..l {
            theta[(s, li)] = cis(phase + 2.0 * PI * nu * li as f64 * params.pri());
        }
    }
    let clutter = synth.atom_matrix(&taus, mode).matmul(&theta);
    let signal_cs = mat.data.matmul(ref_echo).frobenius_norm().powi(2);
    let clutter_cs = mat.data.matmul(&clutter).frobenius_norm().powi(2);
    if clutter_cs == 0.0 {
        return Ok(clutter);
    }
    if signal_cs == 0.0 {
        return Err(Error::Domain(
            "SCR undefined for an all-zero reference echo".into(),
        ));
    }
    Ok(clutter.scale_real((signal_cs / (clutter_cs * scr)).sqrt()))
}
