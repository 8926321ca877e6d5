//! Special functions and the small dense least-squares solver used by every
//! estimator in the crate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols.max(1) });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PValue(f64);

impl PValue {
    /// Clamps into `[0, 1]`; rounding in the tail functions can overshoot by an ulp.
    pub fn new(value: f64) -> Self {
        PValue(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn rejects(self, alpha: f64) -> bool {
        self.0 < alpha
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

const GAMMA_MAX_ITER: usize = 10_000;
const GAMMA_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Upper-tail probability `P(X > q)` for `X ~ chi-square(df)`.
///
/// Evaluated as the regularized upper incomplete gamma function
/// `Q(df/2, q/2)`: a power series below `a + 1`, a Lentz continued fraction
/// above.
pub fn chi_square_sf(q: f64, df: u32) -> Result<PValue> {
    if !(q >= 0.0) || !q.is_finite() {
        return Err(Error::Domain(format!("chi-square statistic must be finite and >= 0, got {q}")));
    }
    if df < 1 {
        return Err(Error::Domain("chi-square degrees of freedom must be >= 1".into()));
    }
    Ok(PValue::new(upper_regularized_gamma(f64::from(df) / 2.0, q / 2.0)))
}

fn upper_regularized_gamma(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    // log of x^a e^-x / Gamma(a)
    let log_prefactor = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        1.0 - sum * log_prefactor.exp()
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        log_prefactor.exp() * h
    }
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> Result<PValue> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("normal quantile must be finite, got {z}")));
    }
    Ok(PValue::new(0.5 * libm::erfc(z / std::f64::consts::SQRT_2)))
}

/// Weighted least-squares solution.
#[derive(Debug, Clone)]
pub struct WlsFit {
    pub coef: Vec<f64>,
    /// `(X' W X)^{-1}`; callers rescale by their residual variance.
    pub cov: Matrix,
    /// Weighted residual sum of squares, `sum w_i r_i^2`.
    pub rss: f64,
}

/// Minimises `sum w_i (y_i - x_i . coef)^2` through a Householder QR of
/// `W^{1/2} X`, never forming the normal equations.
///
/// A column whose QR pivot falls below `1e-12` times the largest pivot is
/// reported as [`Error::RankDeficient`].
pub fn wls_solve(x: &Matrix, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || w.len() != n {
        return Err(Error::Domain(format!(
            "dimension mismatch: X is {n}x{p}, y has {}, w has {}",
            y.len(),
            w.len()
        )));
    }
    if n < p {
        return Err(Error::TooFewObservations { n, p });
    }
    if let Some(row) = (0..n).find(|&i| !y[i].is_finite() || !w[i].is_finite() || w[i] < 0.0) {
        return Err(Error::NonFinite { row });
    }

    // Column-major copy of sqrt(W) X so Householder sweeps are contiguous.
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut a: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..n).map(|i| sw[i] * x.get(i, j)).collect())
        .collect();
    let mut b: Vec<f64> = y.iter().zip(&sw).map(|(v, s)| v * s).collect();
    let mut diag = vec![0.0; p];

    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        // v = a_k - alpha e_k, stored in place
        a[k][k] -= alpha;
        let vnorm2: f64 = a[k][k..].iter().map(|v| v * v).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(v) {
            *c -= f * vi;
        }
    }

    let largest = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if let Some(column) = diag.iter().position(|d| d.abs() <= 1e-12 * largest || largest == 0.0) {
        return Err(Error::RankDeficient { column });
    }

    // R is upper triangular: R[i][j] = a[j][i] for i < j, diag[i] on the diagonal.
    let r = |i: usize, j: usize| if i == j { diag[i] } else { a[j][i] };

    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r(i, j) * coef[j]).sum();
        coef[i] = (b[i] - s) / diag[i];
    }
    let rss: f64 = b[p..].iter().map(|v| v * v).sum();

    // R^{-1} by back substitution, then cov = R^{-1} R^{-T}.
    let mut rinv = Matrix::zeros(p, p);
    for j in 0..p {
        rinv.set(j, j, 1.0 / diag[j]);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv.get(k, j)).sum();
            rinv.set(i, j, -s / diag[i]);
        }
    }
    let mut cov = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (i.max(j)..p).map(|k| rinv.get(i, k) * rinv.get(j, k)).sum();
            cov.set(i, j, s);
            cov.set(j, i, s);
        }
    }

    Ok(WlsFit { coef, cov, rss })
}
