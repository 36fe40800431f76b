//! Reference computations for the acceptance suite, written independently of
//! the estimators they check.

#![allow(dead_code)]

use std::f64::consts::PI;

use gesedd_core::aic::MeasurementMatrix;
use gesedd_core::model::{AtomMode, AtomSynth, RadarParams, Target};
use gesedd_core::{c64, CMat, C64};

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn nrm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormal basis of the column space of `s` by modified Gram-Schmidt with
/// one reorthogonalization pass; columns whose residual falls below
/// `rel_tol` times the largest column norm are dropped.
pub fn column_space(s: &CMat, rel_tol: f64) -> Vec<Vec<C64>> {
    let cols: Vec<Vec<C64>> = (0..s.cols()).map(|j| s.col(j).to_vec()).collect();
    let scale = cols.iter().map(|c| nrm(c)).fold(0.0, f64::max);
    let mut basis: Vec<Vec<C64>> = vec![];
    for c in cols {
        let mut v = c;
        for _ in 0..2 {
            for q in &basis {
                let h = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= h * y);
            }
        }
        let r = nrm(&v);
        if r > rel_tol * scale {
            basis.push(v.into_iter().map(|z| z / r).collect());
        }
    }
    basis
}

/// Normalized distance of `x` from the span of `basis`.
pub fn distance_to_span(basis: &[Vec<C64>], x: &[C64]) -> f64 {
    let mut r = x.to_vec();
    for _ in 0..2 {
        for q in basis {
            let h = dot(q, &r);
            r.iter_mut().zip(q).for_each(|(a, b)| *a -= h * b);
        }
    }
    nrm(&r) / nrm(x)
}

/// Golden-section minimizer on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Zeros of the noiseless null spectrum: normalized frequencies where the
/// compressed model atom lies in the column space of `s`, located on a dense
/// grid and refined by golden-section search.
pub fn null_spectrum_zeros(
    s: &CMat,
    mat: &MeasurementMatrix,
    synth: &AtomSynth,
    k: usize,
) -> Vec<f64> {
    let basis = column_space(s, 1e-9);
    let pri = synth.params().pri();
    let q = |f: f64| {
        let atom = synth.atom_unchecked(f.rem_euclid(1.0) * pri, AtomMode::ModelMatched);
        distance_to_span(&basis, &mat.data.mul_vec(&atom))
    };
    let grid = 16 * synth.params().n();
    let h = 1.0 / grid as f64;
    let vals: Vec<f64> = (0..grid).map(|i| q(-0.5 + i as f64 * h)).collect();
    let mut minima: Vec<(f64, usize)> = (0..grid)
        .filter(|&i| {
            let prev = vals[(i + grid - 1) % grid];
            let next = vals[(i + 1) % grid];
            vals[i] < prev && vals[i] <= next
        })
        .map(|i| (vals[i], i))
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima
        .iter()
        .take(k)
        .map(|&(_, i)| {
            let f0 = -0.5 + i as f64 * h;
            let f = golden_section(q, f0 - h, f0 + h, 1e-14);
            f - (f + 0.5).floor()
        })
        .collect()
}

/// Roots of the monic polynomial `z^n + c[0] z^(n-1) + ... + c[n-1]` by
/// Durand-Kerner iteration.
pub fn durand_kerner(c: &[C64]) -> Vec<C64> {
    let n = c.len();
    let eval = |z: C64| c.iter().fold(c64(1.0, 0.0), |acc, &a| acc * z + a);
    let radius = 1.0 + c.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let mut roots: Vec<C64> = (0..n)
        .map(|k| c64(0.4, 0.9).powf(k as f64) * radius.min(2.0))
        .collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let denom: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| roots[i] - roots[j])
                .product();
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

/// Gaussian elimination with partial pivoting for a square system.
pub fn solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, v) in a[r].iter_mut().zip(&pivot_row).skip(col) {
                *x -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![c64(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: C64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Dopplers of a noiseless `k`-component line spectrum by the annihilating
/// filter: least-squares monic filter via normal equations, then rooting.
pub fn annihilating_filter_dopplers(alpha: &[C64], k: usize, pri: f64) -> Vec<f64> {
    let l = alpha.len();
    // rows: sum_{j=1..k} h_j alpha[i + k - j] = -alpha[i + k]
    let rows: Vec<(Vec<C64>, C64)> = (0..l - k)
        .map(|i| ((1..=k).map(|j| alpha[i + k - j]).collect(), -alpha[i + k]))
        .collect();
    let mut ata = vec![vec![c64(0.0, 0.0); k]; k];
    let mut atb = vec![c64(0.0, 0.0); k];
    for (r, y) in &rows {
        for i in 0..k {
            for j in 0..k {
                ata[i][j] += r[i].conj() * r[j];
            }
            atb[i] += r[i].conj() * y;
        }
    }
    let h = solve(ata, atb);
    let mut nus: Vec<f64> = durand_kerner(&h)
        .into_iter()
        .map(|z| z.arg() / (2.0 * PI * pri))
        .collect();
    nus.sort_by(f64::total_cmp);
    nus
}

/// Minimum-cost assignment and its RRMSEs by enumerating every permutation.
pub fn brute_force_rrmse(est: &[Target], truth: &[Target], p: &RadarParams) -> (f64, f64, f64) {
    let k = truth.len();
    let err = |e: &Target, t: &Target| {
        let dt = (e.tau - t.tau) / p.pri();
        let dn = (e.nu - t.nu) * p.pri();
        let dt = (dt - dt.round()) * p.pri() / p.tau0();
        let dn = (dn - dn.round()) / p.pri() / p.nu0();
        (dt, dn)
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut visit = |perm: &[usize]| {
        let (mut c, mut st, mut sn) = (0.0, 0.0, 0.0);
        for (i, &j) in perm.iter().enumerate() {
            let (dt, dn) = err(&est[j], &truth[i]);
            c += dt * dt + dn * dn;
            st += dt * dt;
            sn += dn * dn;
        }
        if c < best.0 {
            best = (c, (st / k as f64).sqrt(), (sn / k as f64).sqrt());
        }
    };
    // Heap's algorithm
    let mut counters = vec![0usize; k];
    visit(&perm);
    let mut i = 0;
    while i < k {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            visit(&perm);
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    (best.0, best.1, best.2)
}
