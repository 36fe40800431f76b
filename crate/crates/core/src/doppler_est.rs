//! Doppler estimation per delay class.
//!
//! Once delays are known, `Theta_hat = (M Psi_hat)^+ S` separates the classes:
//! row `i` is a sum of `K_i` complex exponentials in the slow-time index, so
//! each row is an independent line-spectrum problem solved by ESPRIT.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aic::{rank_check, MeasurementMatrix, RANK_THRESHOLD};
use crate::error::{Error, Result};
use crate::matrix::{cis, norm, CMat, C64};
use crate::model::{AtomMode, AtomSynth};
use crate::numerics::{eigenvalues, pinv, svd};
use crate::parallel::{map_indexed, Execution};

/// Slow-time signature of one Doppler shift, `b[l] = exp(j 2 pi nu l T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DopplerVector {
    pub nu: f64,
    pub b: Vec<C64>,
}

impl DopplerVector {
    pub fn new(nu: f64, pulses: usize, pri: f64) -> Self {
        Self {
            nu,
            b: (0..pulses)
                .map(|l| cis(2.0 * PI * nu * l as f64 * pri))
                .collect(),
        }
    }
}

/// Reduces a Doppler shift to `[-1/(2T), 1/(2T))`.
pub fn wrap_doppler(nu: f64, pri: f64) -> f64 {
    crate::delay_est::wrap_half(nu * pri) / pri
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatrix {
    /// K_tau x L.
    pub theta_hat: CMat,
    /// Delay of each row, seconds.
    pub row_delays: Vec<f64>,
    /// Norm of each row of `(M Psi_hat)^+`.
    pub noise_gain: Vec<f64>,
}

/// `Theta_hat = pinv(M Psi_hat) S` after a full-column-rank check.
pub fn extract_coeffs(
    s: &CMat,
    mat: &MeasurementMatrix,
    taus: &[f64],
    synth: &AtomSynth,
    mode: AtomMode,
) -> Result<CoeffMatrix> {
    if s.rows() != mat.m() {
        return Err(Error::Contract(format!(
            "data has {} rows, matrix has M = {}",
            s.rows(),
            mat.m()
        )));
    }
    let psi = synth.atom_matrix(taus, mode);
    let report = rank_check(mat, &psi, RANK_THRESHOLD)?;
    if !report.full_rank {
        return Err(Error::RankDeficient {
            context: format!("compressed dictionary at {} estimated delays", taus.len()),
            report: Box::new(report),
        });
    }
    let ginv = pinv(&mat.data.matmul(&psi))?;
    let noise_gain = (0..ginv.rows()).map(|i| norm(&ginv.row(i))).collect();
    Ok(CoeffMatrix {
        theta_hat: ginv.matmul(s),
        row_delays: taus.to_vec(),
        noise_gain,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EspritSolver {
    #[default]
    LeastSquares,
    TotalLeastSquares,
}

/// Hankel matrix `H[r, c] = alpha[r + c]` of size `(L - P + 1) x P`, `P = floor(L/2) + 1`.
pub fn hankel(alpha: &[C64]) -> CMat {
    let l = alpha.len();
    let p = l / 2 + 1;
    CMat::from_fn(l + 1 - p, p, |r, c| alpha[r + c])
}

/// Descending singular values of the Hankel matrix of `alpha`.
pub fn hankel_singular_values(alpha: &[C64]) -> Result<Vec<f64>> {
    let mut sv = crate::numerics::singular_values(&hankel(alpha))?;
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn hankel_spectrum_csv(sv: &[f64]) -> String {
    let mut s = String::from("index,singular_value\n");
    for (i, v) in sv.iter().enumerate() {
        let _ = writeln!(s, "{i},{v:e}");
    }
    s
}

/// ESPRIT estimate of `k` Doppler shifts (Hz) from a slow-time sequence.
pub fn esprit(alpha: &[C64], k: usize, pri: f64, solver: EspritSolver) -> Result<Vec<f64>> {
    let l = alpha.len();
    if k == 0 {
        return Err(Error::Config("need at least one Doppler component".into()));
    }
    if l < 2 * k {
        return Err(Error::Contract(format!(
            "ESPRIT needs L >= 2K, got L = {l} and K = {k}"
        )));
    }
    let h = hankel(alpha);
    let dec = svd(&h, true)?;
    let us = dec.u.col_range(0, k);
    let rows = us.rows();
    let u1 = us.row_range(0, rows - 1);
    let u2 = us.row_range(1, rows);
    let phi = match solver {
        EspritSolver::LeastSquares => pinv(&u1)?.matmul(&u2),
        EspritSolver::TotalLeastSquares => {
            let joint = u1.hstack(&u2);
            let v = svd(&joint, false)?.v;
            let v12 = CMat::from_fn(k, k, |i, j| v[(i, k + j)]);
            let v22 = CMat::from_fn(k, k, |i, j| v[(k + i, k + j)]);
            // -V12 V22^-1
            v12.matmul(&pinv(&v22)?).scale_real(-1.0)
        }
    };
    let eig = eigenvalues(&phi)?;
    if eig.len() != k || eig.iter().any(|z| !z.is_finite() || z.norm() == 0.0) {
        return Err(Error::Estimation(
            "shift-invariance eigenproblem is degenerate".into(),
        ));
    }
    // radial projection: only the angle carries frequency
    let mut nus: Vec<f64> = eig
        .iter()
        .map(|z| wrap_doppler(z.arg() / (2.0 * PI * pri), pri))
        .collect();
    nus.sort_by(f64::total_cmp);
    Ok(nus)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderCriterion {
    Mdl,
    Aic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOrder {
    pub order: usize,
    pub criterion: OrderCriterion,
    /// Criterion value for each candidate order `0..len`.
    pub curve: Vec<f64>,
}

/// Information-theoretic order selection from descending eigenvalues of a
/// sample covariance estimated from `n_samples` snapshots.
pub fn model_order(
    values: &[f64],
    n_samples: usize,
    criterion: OrderCriterion,
) -> Result<ModelOrder> {
    let p = values.len();
    if p == 0 {
        return Err(Error::Contract(
            "model order needs at least one eigenvalue".into(),
        ));
    }
    if values.iter().any(|v| !(*v >= 0.0)) || values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Contract(
            "eigenvalues must be non-negative and descending".into(),
        ));
    }
    let floor = (values[0] * 1e-300).max(f64::MIN_POSITIVE);
    let n = n_samples.max(1) as f64;
    let curve: Vec<f64> = (0..p)
        .map(|k| {
            let tail = &values[k..];
            let q = tail.len() as f64;
            let mean_log = tail.iter().map(|v| v.max(floor).ln()).sum::<f64>() / q;
            let arith = tail.iter().map(|v| v.max(floor)).sum::<f64>() / q;
            // ln(geometric / arithmetic) <= 0
            let log_ratio = (mean_log - arith.ln()).min(0.0);
            let free = k as f64 * (2.0 * p as f64 - k as f64);
            match criterion {
                OrderCriterion::Mdl => -n * q * log_ratio + 0.5 * free * n.ln(),
                OrderCriterion::Aic => -2.0 * n * q * log_ratio + 2.0 * free,
            }
        })
        .collect();
    let order = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .expect("non-empty");
    Ok(ModelOrder {
        order,
        criterion,
        curve,
    })
}

/// How many Doppler components to extract from each class.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassOrders {
    /// One count per class, ascending-delay order.
    Fixed(Vec<usize>),
    /// Selected from the Hankel singular values, capped at `floor(L/2)`.
    Auto(OrderCriterion),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DopplerEstimate {
    /// Per class, ascending Hz.
    pub classes: Vec<Vec<f64>>,
    pub orders: Vec<usize>,
}

/// Per-class order from each row's Hankel spectrum, clamped to `1..=floor(L/2)`.
pub fn select_class_orders(coeffs: &CoeffMatrix, criterion: OrderCriterion) -> Result<Vec<usize>> {
    let l = coeffs.theta_hat.cols();
    (0..coeffs.theta_hat.rows())
        .map(|i| {
            let sv = hankel_singular_values(&coeffs.theta_hat.row(i))?;
            let eig: Vec<f64> = sv.iter().map(|s| s * s).collect();
            let k = model_order(&eig, l / 2 + 1, criterion)?.order;
            Ok(k.clamp(1, (l / 2).max(1)))
        })
        .collect()
}

/// ESPRIT on every row of `Theta_hat`.
pub fn estimate_dopplers(
    coeffs: &CoeffMatrix,
    orders: &ClassOrders,
    pri: f64,
    solver: EspritSolver,
    exec: Execution,
) -> Result<DopplerEstimate> {
    let k_tau = coeffs.theta_hat.rows();
    let per_class: Vec<usize> = match orders {
        ClassOrders::Fixed(v) => {
            if v.len() != k_tau {
                return Err(Error::Contract(format!(
                    "{} class orders given for {k_tau} delay classes",
                    v.len()
                )));
            }
            v.clone()
        }
        ClassOrders::Auto(criterion) => select_class_orders(coeffs, *criterion)?,
    };
    let results = map_indexed(k_tau, exec, |i| {
        esprit(&coeffs.theta_hat.row(i), per_class[i], pri, solver)
    });
    let classes = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DopplerEstimate {
        classes,
        orders: per_class,
    })
}
