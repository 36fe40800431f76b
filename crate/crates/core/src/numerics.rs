//! Dense numerical kernels: Hermitian eigendecomposition, SVD, pseudo-inverse
//! and polynomial rooting.
//!
//! Decompositions are delegated to `faer`; everything here is deterministic in
//! its input bits. Polynomials are stored with ascending powers,
//! `p(z) = c[0] + c[1] z + ... + c[d] z^d`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::matrix::{c64, CMat, C64};

/// Relative Hermitian tolerance accepted by [`herm_eig`].
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EigResult {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `k` pairs with `values[k]`.
    pub vectors: CMat,
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: CMat,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    pub v: CMat,
}

impl SvdResult {
    /// `U * diag(s) * V^H`, using only as many columns as there are singular values.
    pub fn reconstruct(&self) -> CMat {
        let k = self.s.len();
        let us = CMat::from_fn(self.u.rows(), k, |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.col_range(0, k).adjoint())
    }
}

fn to_faer(a: &CMat) -> Mat<C64> {
    Mat::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Full spectrum of a Hermitian matrix, eigenvalues in descending order.
pub fn herm_eig(a: &CMat) -> Result<EigResult> {
    if a.rows() != a.cols() {
        return Err(Error::Contract(format!(
            "herm_eig needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(EigResult {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        });
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    if a.hermitian_defect() > HERMITIAN_TOL * scale {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (defect {:.3e})",
            a.hermitian_defect()
        )));
    }
    let evd = to_faer(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order.
    let values: Vec<f64> = (0..n).rev().map(|k| s[k].re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(EigResult { values, vectors })
}

/// Singular value decomposition. `thin` keeps `min(m, n)` columns in `U` and `V`.
pub fn svd(a: &CMat, thin: bool) -> Result<SvdResult> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(SvdResult {
            u: CMat::identity(m),
            s: vec![],
            v: CMat::identity(n),
        });
    }
    let fa = to_faer(a);
    let dec = if thin { fa.thin_svd() } else { fa.svd() }
        .map_err(|e| Error::Numerical(format!("svd: {e:?}")))?;
    let s = dec.S().column_vector();
    Ok(SvdResult {
        u: from_faer(dec.U()),
        s: (0..m.min(n)).map(|k| s[k].re).collect(),
        v: from_faer(dec.V()),
    })
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(vec![]);
    }
    let sv = to_faer(a)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))?;
    Ok(sv)
}

/// Moore-Penrose pseudo-inverse with the usual `max(m, n) * eps * sigma_max` cutoff.
pub fn pinv(a: &CMat) -> Result<CMat> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(CMat::zeros(n, m));
    }
    let dec = svd(a, true)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = (m.max(n) as f64) * f64::EPSILON * smax;
    let k = dec.s.len();
    // V * diag(1/s) * U^H
    let v_scaled = CMat::from_fn(n, k, |i, j| {
        let s = dec.s[j];
        if s > cutoff && s > 0.0 {
            dec.v[(i, j)] / s
        } else {
            c64(0.0, 0.0)
        }
    });
    Ok(v_scaled.matmul(&dec.u.col_range(0, k).adjoint()))
}

/// Eigenvalues of a general complex square matrix (unordered).
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    if a.rows() != a.cols() {
        return Err(Error::Contract("eigenvalues needs a square matrix".into()));
    }
    if a.rows() == 0 {
        return Ok(vec![]);
    }
    to_faer(a)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues: {e:?}")))
}

/// Horner evaluation of an ascending-power polynomial.
pub fn poly_eval(coeffs: &[C64], z: C64) -> C64 {
    coeffs
        .iter()
        .rev()
        .fold(c64(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Monic polynomial with the given roots, ascending powers.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut p = vec![c64(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![c64(0.0, 0.0); p.len() + 1];
        for (k, &c) in p.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        p = next;
    }
    p
}

/// Splits off exact zero roots and trims vanishing leading coefficients.
/// Returns `(number_of_zero_roots, reduced_coefficients)`.
fn normalize_poly(coeffs: &[C64]) -> Result<(usize, Vec<C64>)> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Domain(
            "polynomial is identically zero or non-finite".into(),
        ));
    }
    let mut hi = coeffs.len() - 1;
    while coeffs[hi].norm() == 0.0 {
        hi -= 1;
    }
    let mut lo = 0;
    while coeffs[lo].norm() == 0.0 {
        lo += 1;
    }
    Ok((lo, coeffs[lo..=hi].to_vec()))
}

/// Roots as eigenvalues of the companion matrix.
///
/// Exact zero low-order coefficients are returned as roots at the origin.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let (zeros, p) = normalize_poly(coeffs)?;
    let mut roots = vec![c64(0.0, 0.0); zeros];
    let d = p.len() - 1;
    if d == 0 {
        return Ok(roots);
    }
    let lead = p[d];
    let mut comp = CMat::zeros(d, d);
    for j in 0..d {
        comp[(0, j)] = -p[d - 1 - j] / lead;
    }
    for i in 1..d {
        comp[(i, i - 1)] = c64(1.0, 0.0);
    }
    roots.extend(eigenvalues(&comp)?);
    Ok(roots)
}

#[derive(Clone, Copy, Debug)]
pub struct AberthOptions {
    pub max_iter: usize,
}

impl Default for AberthOptions {
    fn default() -> Self {
        Self { max_iter: 400 }
    }
}

/// Newton ratio `p/p'` at `z`, plus whether `|p(z)|` already sits below the
/// rounding bound. Outside the unit disk the reversed polynomial is evaluated
/// to keep Horner stable.
fn newton_ratio(p: &[C64], z: C64) -> (C64, bool) {
    let d = p.len() - 1;
    let zn = z.norm();
    if zn <= 1.0 {
        let mut val = p[d];
        let mut der = c64(0.0, 0.0);
        let mut bound = p[d].norm();
        for k in (0..d).rev() {
            der = der * z + val;
            val = val * z + p[k];
            bound = bound * zn + p[k].norm();
        }
        let converged = val.norm() <= 4.0 * f64::EPSILON * bound * (d as f64).sqrt();
        (val / der, converged)
    } else {
        let y = z.inv();
        let yn = 1.0 / zn;
        // q(y) = sum_k p[d-k] y^k
        let mut val = p[0];
        let mut der = c64(0.0, 0.0);
        let mut bound = p[0].norm();
        for &pk in &p[1..=d] {
            der = der * y + val;
            val = val * y + pk;
            bound = bound * yn + pk.norm();
        }
        let converged = val.norm() <= 4.0 * f64::EPSILON * bound * (d as f64).sqrt();
        let denom = val * (d as f64) - y * der;
        (z * val / denom, converged)
    }
}

/// Polynomial roots by Aberth-Ehrlich simultaneous iteration.
///
/// Cost is `O(d^2)` per sweep against `O(d^3)` for the companion route, which
/// matters for the degree `2(N-1)` null polynomials of root-MUSIC. Returns
/// `Error::Numerical` if some root fails to meet the backward-error stopping
/// rule within `max_iter` sweeps.
pub fn poly_roots_aberth(coeffs: &[C64], opts: &AberthOptions) -> Result<Vec<C64>> {
    let (zeros, p) = normalize_poly(coeffs)?;
    let mut roots = vec![c64(0.0, 0.0); zeros];
    let d = p.len() - 1;
    if d == 0 {
        return Ok(roots);
    }
    if d == 1 {
        roots.push(-p[0] / p[1]);
        return Ok(roots);
    }
    // Starting circle from the geometric mean of root moduli.
    let radius = (p[0].norm() / p[d].norm()).powf(1.0 / d as f64);
    let mut z: Vec<C64> = (0..d)
        .map(|k| {
            let theta = std::f64::consts::TAU * (k as f64) / (d as f64) + 0.4;
            crate::matrix::cis(theta) * radius
        })
        .collect();
    let mut done = vec![false; d];
    let mut remaining = d;
    for _ in 0..opts.max_iter {
        for i in 0..d {
            if done[i] {
                continue;
            }
            let (ratio, converged) = newton_ratio(&p, z[i]);
            if converged {
                done[i] = true;
                remaining -= 1;
                continue;
            }
            if !ratio.is_finite() {
                // stationary point of p: nudge off it
                z[i] *= crate::matrix::cis(0.01) * 1.001;
                continue;
            }
            let zi = z[i];
            let mut sum = c64(0.0, 0.0);
            for (j, zj) in z.iter().enumerate() {
                if j != i {
                    sum += (zi - zj).inv();
                }
            }
            let step = ratio / (c64(1.0, 0.0) - ratio * sum);
            if step.is_finite() {
                z[i] = zi - step;
            }
        }
        if remaining == 0 {
            roots.extend(z);
            return Ok(roots);
        }
    }
    Err(Error::Numerical(format!(
        "Aberth iteration left {remaining} of {d} roots unconverged"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::cis;

    fn close_multiset(a: &[C64], b: &[C64], tol: f64) -> bool {
        if a.len() != b.len() {
            return false;
        }
        let mut used = vec![false; b.len()];
        for x in a {
            let best = b
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .min_by(|(_, u), (_, v)| (*u - x).norm().total_cmp(&(*v - x).norm()));
            match best {
                Some((j, y)) if (y - x).norm() < tol => used[j] = true,
                _ => return false,
            }
        }
        true
    }

    #[test]
    fn identity_spectrum() {
        let e = herm_eig(&CMat::identity(4)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_spectrum_descending() {
        let a = CMat::from_rows(&[
            vec![c64(1.0, 0.0), c64(0.0, 0.0)],
            vec![c64(0.0, 0.0), c64(3.0, 0.0)],
        ]);
        let e = herm_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        // leading eigenvector is e2 up to phase
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [c64(1.0, 1.0), c64(1.0, -1.0), c64(0.0, 0.0)];
        // |u| = 2
        let a = CMat::from_fn(3, 3, |i, j| u[i] * u[j].conj());
        let e = herm_eig(&a).unwrap();
        assert!((e.values[0] - 4.0).abs() < 1e-12);
        assert!(e.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = CMat::from_rows(&[
            vec![c64(1.0, 0.0), c64(1.0, 0.0)],
            vec![c64(0.0, 0.0), c64(1.0, 0.0)],
        ]);
        assert!(matches!(herm_eig(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn svd_basic_cases() {
        let s = svd(&CMat::identity(3), false).unwrap();
        assert!(s.s.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let z = svd(&CMat::zeros(3, 2), true).unwrap();
        assert!(z.s.iter().all(|v| *v == 0.0));
        let mut a = CMat::zeros(3, 2);
        a[(0, 0)] = c64(2.0, 0.0);
        a[(1, 1)] = c64(1.0, 0.0);
        let s = svd(&a, true).unwrap();
        assert!((s.s[0] - 2.0).abs() < 1e-14 && (s.s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_cases() {
        let a = CMat::from_rows(&[
            vec![c64(2.0, 0.0), c64(1.0, 1.0)],
            vec![c64(0.0, -1.0), c64(3.0, 0.0)],
        ]);
        let ai = pinv(&a).unwrap();
        assert!((&a.matmul(&ai) - &CMat::identity(2)).max_abs() < 1e-12);

        let z = pinv(&CMat::zeros(3, 2)).unwrap();
        assert_eq!(z.shape(), (2, 3));
        assert_eq!(z.max_abs(), 0.0);

        let tall = CMat::from_rows(&[vec![c64(1.0, 0.0)], vec![c64(1.0, 0.0)]]);
        let t = pinv(&tall).unwrap();
        assert!((t[(0, 0)] - c64(0.5, 0.0)).norm() < 1e-14);
        assert!((t[(0, 1)] - c64(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn simple_roots() {
        let one = c64(1.0, 0.0);
        let zero = c64(0.0, 0.0);
        let r = poly_roots(&[-one, zero, one]).unwrap();
        assert!(close_multiset(&r, &[one, -one], 1e-12));
        let r = poly_roots(&[zero, zero, one]).unwrap();
        assert!(close_multiset(&r, &[zero, zero], 1e-12));
        assert!(matches!(poly_roots(&[zero, zero]), Err(Error::Domain(_))));
    }

    #[test]
    fn conjugate_unit_circle_pair() {
        let theta = 0.3;
        let p = poly_from_roots(&[cis(theta), cis(-theta)]);
        // expanded: z^2 - 2cos(theta) z + 1
        assert!((p[1] - c64(-2.0 * theta.cos(), 0.0)).norm() < 1e-15);
        for roots in [
            poly_roots(&p).unwrap(),
            poly_roots_aberth(&p, &AberthOptions::default()).unwrap(),
        ] {
            assert!(close_multiset(&roots, &[cis(theta), cis(-theta)], 1e-12));
            assert!(roots.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn aberth_agrees_with_companion() {
        let roots: Vec<C64> = (0..40)
            .map(|k| cis(0.37 * k as f64 + 0.1) * (0.6 + 0.03 * k as f64))
            .collect();
        let p = poly_from_roots(&roots);
        let a = poly_roots_aberth(&p, &AberthOptions::default()).unwrap();
        let c = poly_roots(&p).unwrap();
        assert!(close_multiset(&a, &roots, 1e-6));
        assert!(close_multiset(&c, &roots, 1e-6));
    }
}
