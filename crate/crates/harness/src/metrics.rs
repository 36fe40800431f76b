//! Estimate-to-truth matching and pooled relative RMSE.

use gesedd_core::model::{RadarParams, Target};

/// Largest `K` solved by enumerating every permutation.
pub const EXHAUSTIVE_MAX_K: usize = 6;

/// Per-truth normalized errors `(dtau / tau0, dnu / nu0)`.
pub type NormalizedError = (f64, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub rrmse_tau: f64,
    pub rrmse_nu: f64,
    /// `assignment[i]` is the estimate matched to truth `i`.
    pub assignment: Vec<usize>,
    pub errors: Vec<NormalizedError>,
}

/// Signed difference of `a - b` wrapped to `[-period/2, period/2)`.
pub fn circular_diff(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b) / period;
    (d - (d + 0.5).floor()) * period
}

/// Normalized delay and Doppler error, both measured on their periodic axes.
pub fn normalized_error(est: &Target, truth: &Target, p: &RadarParams) -> NormalizedError {
    let dt = circular_diff(est.tau, truth.tau, p.pri()) / p.tau0();
    let dn = circular_diff(est.nu, truth.nu, 1.0 / p.pri()) / p.nu0();
    (dt, dn)
}

/// `cost[i][j]` for truth `i` against estimate `j`.
pub fn cost_matrix(est: &[Target], truth: &[Target], p: &RadarParams) -> Vec<Vec<f64>> {
    truth
        .iter()
        .map(|t| {
            est.iter()
                .map(|e| {
                    let (dt, dn) = normalized_error(e, t, p);
                    dt * dt + dn * dn
                })
                .collect()
        })
        .collect()
}

/// Minimum-cost perfect assignment of a square cost matrix; returns the
/// column for each row.
pub fn optimal_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    if cost.len() <= EXHAUSTIVE_MAX_K {
        exhaustive_assignment(cost)
    } else {
        hungarian(cost)
    }
}

/// Lexicographically first minimizer over all permutations.
pub fn exhaustive_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut best = (f64::INFINITY, (0..n).collect::<Vec<_>>());
    let mut perm = Vec::with_capacity(n);
    let mut used = vec![false; n];
    search(cost, &mut perm, &mut used, 0.0, &mut best);
    best.1
}

fn search(
    cost: &[Vec<f64>],
    perm: &mut Vec<usize>,
    used: &mut [bool],
    acc: f64,
    best: &mut (f64, Vec<usize>),
) {
    let row = perm.len();
    if row == cost.len() {
        if acc < best.0 {
            *best = (acc, perm.clone());
        }
        return;
    }
    for j in 0..cost.len() {
        if !used[j] {
            used[j] = true;
            perm.push(j);
            search(cost, perm, used, acc + cost[row][j], best);
            perm.pop();
            used[j] = false;
        }
    }
}

/// Shortest-augmenting-path Hungarian method with potentials, `O(n^3)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based internals; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}

/// Optimal matching of `est` to `truth` and the single-trial RRMSEs.
///
/// # Panics
/// When the lists differ in length; callers count such trials as failures.
pub fn match_and_rrmse(est: &[Target], truth: &[Target], p: &RadarParams) -> MatchResult {
    assert_eq!(
        est.len(),
        truth.len(),
        "estimate and truth lists differ in length"
    );
    let assignment = optimal_assignment(&cost_matrix(est, truth, p));
    let errors: Vec<NormalizedError> = truth
        .iter()
        .zip(&assignment)
        .map(|(t, &j)| normalized_error(&est[j], t, p))
        .collect();
    let k = errors.len().max(1) as f64;
    let rrmse_tau = (errors.iter().map(|e| e.0 * e.0).sum::<f64>() / k).sqrt();
    let rrmse_nu = (errors.iter().map(|e| e.1 * e.1).sum::<f64>() / k).sqrt();
    MatchResult {
        rrmse_tau,
        rrmse_nu,
        assignment,
        errors,
    }
}

/// One line of a sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub sweep_value: f64,
    pub rrmse_tau: f64,
    pub rrmse_nu: f64,
    pub success_rate: f64,
    pub mean_runtime_s: f64,
    pub trials: usize,
}

/// Pooled accumulator: squared errors are summed over every target of every
/// successful trial before the root is taken.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Pool {
    sum_sq_tau: f64,
    sum_sq_nu: f64,
    targets: usize,
    successes: usize,
    trials: usize,
    runtime_sum: f64,
    runtimes: usize,
}

impl Pool {
    pub fn add_success(&mut self, errors: &[NormalizedError]) {
        self.trials += 1;
        self.successes += 1;
        self.targets += errors.len();
        self.sum_sq_tau += errors.iter().map(|e| e.0 * e.0).sum::<f64>();
        self.sum_sq_nu += errors.iter().map(|e| e.1 * e.1).sum::<f64>();
    }

    pub fn add_failure(&mut self) {
        self.trials += 1;
    }

    pub fn add_runtime(&mut self, seconds: f64) {
        self.runtime_sum += seconds;
        self.runtimes += 1;
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn successes(&self) -> usize {
        self.successes
    }

    pub fn rrmse_tau(&self) -> f64 {
        rms(self.sum_sq_tau, self.targets)
    }

    pub fn rrmse_nu(&self) -> f64 {
        rms(self.sum_sq_nu, self.targets)
    }

    pub fn row(&self, sweep_value: f64) -> MetricRow {
        MetricRow {
            sweep_value,
            rrmse_tau: self.rrmse_tau(),
            rrmse_nu: self.rrmse_nu(),
            success_rate: if self.trials == 0 {
                f64::NAN
            } else {
                self.successes as f64 / self.trials as f64
            },
            mean_runtime_s: if self.runtimes == 0 {
                f64::NAN
            } else {
                self.runtime_sum / self.runtimes as f64
            },
            trials: self.trials,
        }
    }
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (sum_sq / n as f64).sqrt()
    }
}
