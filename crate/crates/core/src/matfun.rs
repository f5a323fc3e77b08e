//! Small dense matrices, induced norms and matrix measures, plus sampled
//! suprema of time-varying matrix functions.
//!
//! Only the two norms with closed-form measures are supported:
//!
//! | norm | ‖C‖                    | μ(C)                                |
//! |------|------------------------|-------------------------------------|
//! | inf  | max_i Σ_j \|c_ij\|     | max_i (c_ii + Σ_{j≠i} \|c_ij\|)     |
//! | one  | max_j Σ_i \|c_ij\|     | max_j (c_jj + Σ_{i≠j} \|c_ij\|)     |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{EvalError, Expr};

/// Square matrix stored row major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Mat {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Build from a row-major slice of length n².
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert!(n >= 1 && data.len() == n * n, "expected {} entries", n * n);
        Mat { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Entrywise absolute value |C|.
    pub fn abs(&self) -> Mat {
        Mat {
            n: self.n,
            data: self.data.iter().map(|v| v.abs()).collect(),
        }
    }

    /// self += s·other
    pub fn add_scaled(&mut self, s: f64, other: &Mat) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// y += self·x
    pub fn mul_vec_acc(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// True when |self| ≤ bound entrywise, up to `tol`.
    pub fn dominated_by(&self, bound: &Mat, tol: f64) -> bool {
        self.n == bound.n && self.data.iter().zip(&bound.data).all(|(a, b)| a.abs() <= b + tol)
    }

    /// Solve self·x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, MatfunError> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
                .unwrap();
            if a[pivot * n + col] == 0.0 || !a[pivot * n + col].is_finite() {
                return Err(MatfunError::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                x.swap(pivot, col);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / d;
                if factor == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= factor * a[col * n + j];
                }
                x[r] -= factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let s: f64 = (col + 1..n).map(|j| a[col * n + j] * x[j]).sum();
            x[col] = (x[col] - s) / a[col * n + col];
        }
        Ok(x)
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Maximum norm, the default.
    #[default]
    Inf,
    One,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Inf => "inf",
            NormKind::One => "one",
        })
    }
}

impl FromStr for NormKind {
    type Err = MatfunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(NormKind::Inf),
            "one" | "1" => Ok(NormKind::One),
            other => Err(MatfunError::UnsupportedNorm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatfunError {
    #[error("unsupported norm '{0}' (supported: inf, one)")]
    UnsupportedNorm(String),
    #[error("entry ({row}, {col}): {source}")]
    Entry {
        row: usize,
        col: usize,
        #[source]
        source: EvalError,
    },
    #[error("denominator {value} at t = {t} is zero or changes sign on the sample grid")]
    DenominatorSign { t: f64, value: f64 },
    #[error("denominator evaluation failed at t = {t}: {message}")]
    Denominator { t: f64, message: String },
    #[error("degenerate window [{lo}, {hi}]")]
    DegenerateWindow { lo: f64, hi: f64 },
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} entries for an {n}x{n} matrix, got {got}")]
    Shape { n: usize, expected: usize, got: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("non-finite value {value} at t = {t}")]
    NonFinite { t: f64, value: f64 },
}

/// Induced vector norm matching [`matrix_norm`].
pub fn vector_norm(x: &[f64], norm: NormKind) -> f64 {
    match norm {
        NormKind::Inf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormKind::One => x.iter().map(|v| v.abs()).sum(),
    }
}

pub fn matrix_norm(c: &Mat, norm: NormKind) -> f64 {
    (0..c.dim()).map(|k| c[(k, k)].abs() + off_diagonal(c, k, norm)).fold(0.0, f64::max)
}

/// Matrix measure (logarithmic norm) from its closed form.
pub fn matrix_measure(c: &Mat, norm: NormKind) -> f64 {
    (0..c.dim()).map(|k| c[(k, k)] + off_diagonal(c, k, norm)).fold(f64::NEG_INFINITY, f64::max)
}

/// Off-diagonal absolute sum of row k (∞-norm) or column k (1-norm). Norm
/// and measure share it so that |μ(C)| ≤ ‖C‖ holds in floating point too.
fn off_diagonal(c: &Mat, k: usize, norm: NormKind) -> f64 {
    (0..c.dim())
        .filter(|&l| l != k)
        .map(|l| match norm {
            NormKind::Inf => c[(k, l)].abs(),
            NormKind::One => c[(l, k)].abs(),
        })
        .sum()
}

/// The defining difference quotient (‖E + νC‖ − 1)/ν at a finite ν > 0.
pub fn matrix_measure_limit(c: &Mat, norm: NormKind, nu: f64) -> f64 {
    assert!(nu > 0.0, "nu must be positive");
    let mut shifted = c.scale(nu);
    for i in 0..c.dim() {
        shifted[(i, i)] += 1.0;
    }
    (matrix_norm(&shifted, norm) - 1.0) / nu
}

/// An n×n grid of expressions in `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFunction {
    n: usize,
    entries: Vec<Expr>,
    /// User-asserted bound on sup_{t ≥ t0} ‖F(t)‖.
    pub declared_sup: Option<f64>,
}

impl MatrixFunction {
    pub fn new(n: usize, entries: Vec<Expr>) -> Result<Self, MatfunError> {
        if n == 0 || entries.len() != n * n {
            return Err(MatfunError::Shape {
                n,
                expected: n * n,
                got: entries.len(),
            });
        }
        Ok(MatrixFunction {
            n,
            entries,
            declared_sup: None,
        })
    }

    pub fn constant(m: &Mat) -> Self {
        MatrixFunction {
            n: m.dim(),
            entries: m.as_slice().iter().map(|&v| Expr::Const(v)).collect(),
            declared_sup: None,
        }
    }

    pub fn zeros(n: usize) -> Self {
        MatrixFunction::constant(&Mat::zeros(n))
    }

    /// s(t)·M for a scalar function s and constant matrix M.
    pub fn scalar_times(s: &Expr, m: &Mat) -> Self {
        MatrixFunction {
            n: m.dim(),
            entries: m.as_slice().iter().map(|&v| s.clone() * v).collect(),
            declared_sup: None,
        }
    }

    pub fn with_declared_sup(mut self, sup: f64) -> Self {
        self.declared_sup = Some(sup);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    /// All entries are the constant zero.
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Expr::is_zero)
    }

    /// No entry depends on `t`.
    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Expr::is_constant)
    }

    pub fn eval(&self, t: f64) -> Result<Mat, MatfunError> {
        let mut data = Vec::with_capacity(self.entries.len());
        for (k, e) in self.entries.iter().enumerate() {
            let v = e.eval(t).map_err(|source| MatfunError::Entry {
                row: k / self.n,
                col: k % self.n,
                source,
            })?;
            data.push(v);
        }
        Ok(Mat { n: self.n, data })
    }
}

/// Pointwise evaluation of every entry.
pub fn eval_matrix(f: &MatrixFunction, t: f64) -> Result<Mat, MatfunError> {
    f.eval(t)
}

/// A uniform sample grid over a closed window, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

pub const DEFAULT_SAMPLES: usize = 2001;

impl Sampling {
    pub fn new(lo: f64, hi: f64, samples: usize) -> Result<Self, MatfunError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(MatfunError::DegenerateWindow { lo, hi });
        }
        if samples < 2 {
            return Err(MatfunError::TooFewSamples(samples));
        }
        Ok(Sampling { lo, hi, samples })
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.samples {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * (i as f64) / ((self.samples - 1) as f64)
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples).map(|i| self.point(i))
    }

    /// Same density over a different window.
    pub fn over(&self, lo: f64, hi: f64) -> Sampling {
        Sampling {
            lo,
            hi,
            samples: self.samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupMethod {
    Declared,
    Sampled,
}

/// A supremum together with how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub method: SupMethod,
    pub window: [f64; 2],
    pub samples: usize,
}

impl SupEstimate {
    pub fn declared(value: f64, sampling: &Sampling) -> Self {
        SupEstimate {
            value,
            method: SupMethod::Declared,
            window: [sampling.lo, sampling.hi],
            samples: 0,
        }
    }

    pub fn sampled(value: f64, sampling: &Sampling) -> Self {
        SupEstimate {
            value,
            method: SupMethod::Sampled,
            window: [sampling.lo, sampling.hi],
            samples: sampling.samples,
        }
    }

    pub fn is_sampled(&self) -> bool {
        self.method == SupMethod::Sampled
    }
}

/// Max of ‖F(t_i)‖ over the grid, always sampled, ignoring any declaration.
pub fn sampled_sup_norm(f: &MatrixFunction, norm: NormKind, sampling: &Sampling) -> Result<f64, MatfunError> {
    let mut best = 0.0f64;
    for t in sampling.points() {
        let v = matrix_norm(&f.eval(t)?, norm);
        if !v.is_finite() {
            return Err(MatfunError::NonFinite { t, value: v });
        }
        best = best.max(v);
    }
    Ok(best)
}

/// sup ‖F‖ over the window: the declared bound when present, otherwise the
/// sampled maximum.
pub fn sup_norm_over_window(f: &MatrixFunction, norm: NormKind, sampling: &Sampling) -> Result<SupEstimate, MatfunError> {
    Sampling::new(sampling.lo, sampling.hi, sampling.samples)?;
    match f.declared_sup {
        Some(d) => Ok(SupEstimate::declared(d, sampling)),
        None => Ok(SupEstimate::sampled(sampled_sup_norm(f, norm, sampling)?, sampling)),
    }
}

/// sup of ‖N(t)‖/|d(t)| taken pointwise over the grid. The denominator must
/// keep one strict sign on every sample.
pub fn sup_ratio_over_window<D>(
    numerator: &MatrixFunction,
    denominator: D,
    norm: NormKind,
    sampling: &Sampling,
) -> Result<SupEstimate, MatfunError>
where
    D: Fn(f64) -> Result<f64, MatfunError>,
{
    Sampling::new(sampling.lo, sampling.hi, sampling.samples)?;
    let mut sign = 0.0f64;
    let mut best = 0.0f64;
    for t in sampling.points() {
        let d = denominator(t)?;
        if d == 0.0 || !d.is_finite() || (sign != 0.0 && d.signum() != sign) {
            return Err(MatfunError::DenominatorSign { t, value: d });
        }
        sign = d.signum();
        let r = matrix_norm(&numerator.eval(t)?, norm) / d.abs();
        best = best.max(r);
    }
    Ok(SupEstimate::sampled(best, sampling))
}
