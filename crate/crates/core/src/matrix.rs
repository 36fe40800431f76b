//! Dense complex matrix used throughout the crate.
//!
//! Storage is column-major so that a column (one pulse, one atom) is a
//! contiguous slice. Decompositions live in [`crate::numerics`]; this type
//! only carries the arithmetic the estimators need.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

pub type C64 = Complex64;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// `exp(j*phase)`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length columns.
    pub fn from_columns(columns: &[Vec<C64>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows_in: &[Vec<C64>]) -> Self {
        let rows = rows_in.len();
        let cols = rows_in.first().map_or(0, Vec::len);
        for r in rows_in {
            assert_eq!(r.len(), cols, "ragged rows");
        }
        Self::from_fn(rows, cols, |i, j| rows_in[i][j])
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Column-major backing slice.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<C64> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn set_row(&mut self, i: usize, values: &[C64]) {
        assert_eq!(values.len(), self.cols);
        for (j, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let out_col = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = rhs.data[j * rhs.rows + k];
                if b.re == 0.0 && b.im == 0.0 {
                    continue;
                }
                let a_col = &self.data[k * self.rows..(k + 1) * self.rows];
                for (o, a) in out_col.iter_mut().zip(a_col) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without materializing the adjoint.
    pub fn adjoint_matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.rows, rhs.rows, "adjoint_matmul shape mismatch");
        CMat::from_fn(self.cols, rhs.cols, |i, j| {
            dot_conj(self.col(i), rhs.col(j))
        })
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        for (k, xk) in x.iter().enumerate() {
            if xk.re == 0.0 && xk.im == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.col(k)) {
                *o += a * xk;
            }
        }
        out
    }

    pub fn select_cols(&self, idx: &[usize]) -> CMat {
        let cols: Vec<Vec<C64>> = idx.iter().map(|&j| self.col(j).to_vec()).collect();
        if cols.is_empty() {
            return CMat::zeros(self.rows, 0);
        }
        CMat::from_columns(&cols)
    }

    /// Rows `start..end`, all columns.
    pub fn row_range(&self, start: usize, end: usize) -> CMat {
        CMat::from_fn(end - start, self.cols, |i, j| self[(start + i, j)])
    }

    /// Columns `start..end`, all rows.
    pub fn col_range(&self, start: usize, end: usize) -> CMat {
        CMat {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    pub fn hstack(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.rows, rhs.rows);
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        CMat {
            rows: self.rows,
            cols: self.cols + rhs.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Column-wise vectorization (`vec(A)`).
    pub fn vectorize(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Largest absolute deviation from the conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for j in 0..self.cols {
            for i in 0..=j {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl Mul for &CMat {
    type Output = CMat;

    fn mul(self, rhs: &CMat) -> CMat {
        self.matmul(rhs)
    }
}

impl Add for &CMat {
    type Output = CMat;

    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;

    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// `sum_k conj(a[k]) * b[k]`
#[inline]
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}
