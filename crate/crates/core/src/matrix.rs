//! Dense real matrices and the rank-revealing factorizations everything else
//! is built on.
//!
//! All linear-dependence decisions go through the singular value spectrum and
//! a [`ToleranceConfig`]: a value counts as nonzero when it exceeds
//! `tau = relative * max(m, n) * sigma_max` (never below `absolute`).

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::ToleranceConfig;

/// A real dense matrix with finite entries.
///
/// Zero-column (or zero-row) matrices are representable so that a trivial null
/// space can be returned as a value; most operations reject them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries given for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(m, n, &data)
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::from_rows(cols)?.transpose())
    }

    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Self::from_row_slice(v.len(), 1, v)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    /// `[I_m, e]`: the identity with an all-ones column appended.
    pub fn identity_plus_ones(m: usize) -> Self {
        let mut inner = DMatrix::zeros(m, m + 1);
        for i in 0..m {
            inner[(i, i)] = 1.0;
            inner[(i, m)] = 1.0;
        }
        Self { inner }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0 || self.cols() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.inner.column(j).iter().copied().collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self {
            inner: &self.inner * &rhs.inner,
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "vector of length {} for a matrix with {} columns",
                v.len(),
                self.cols()
            )));
        }
        let out = &self.inner * DVector::from_column_slice(v);
        Ok(out.iter().copied().collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            inner: &self.inner * c,
        }
    }

    pub fn add(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.rows() != rhs.rows() || self.cols() != rhs.cols() {
            return Err(Error::Dimension("shape mismatch in add".into()));
        }
        Ok(Self {
            inner: &self.inner + &rhs.inner,
        })
    }

    /// Columns listed in `idx`, in that order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            inner: self.inner.select_columns(idx),
        }
    }

    /// Horizontal concatenation `[self, rhs]`.
    pub fn hstack(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.rows() != rhs.rows() {
            return Err(Error::Dimension(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows(),
                rhs.rows()
            )));
        }
        let mut inner = DMatrix::zeros(self.rows(), self.cols() + rhs.cols());
        inner.columns_mut(0, self.cols()).copy_from(&self.inner);
        inner
            .columns_mut(self.cols(), rhs.cols())
            .copy_from(&rhs.inner);
        Ok(Self { inner })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.inner.column_iter().map(|c| c.norm()).collect()
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> f64 {
        self.inner
            .iter()
            .zip(rhs.inner.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Returns the size `m` when this matrix is exactly `[I_m, e]`.
    pub fn as_identity_plus_ones(&self) -> Option<usize> {
        let m = self.rows();
        (m >= 1 && self.cols() == m + 1 && *self == Self::identity_plus_ones(m)).then_some(m)
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            rows: self.rows(),
            cols: self.cols(),
            data: self.row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        DenseMatrix::from_row_slice(r.rows, r.cols, &r.data).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Numerical rank with the spectrum it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub tolerance_used: f64,
    /// Singular values, non-increasing.
    pub spectrum: Vec<f64>,
}

fn require_nonempty(a: &DenseMatrix) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Dimension(format!(
            "empty {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.inner.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn rank(a: &DenseMatrix, tol: &ToleranceConfig) -> Result<RankReport> {
    require_nonempty(a)?;
    let spectrum = singular_values(a);
    let tau = tol.rank_threshold(a.rows(), a.cols(), spectrum[0]);
    Ok(rank_from_spectrum(spectrum, tau))
}

/// Rank decided against an externally fixed threshold.
pub(crate) fn rank_with_threshold(a: &DenseMatrix, tau: f64) -> usize {
    singular_values(a).iter().filter(|&&s| s > tau).count()
}

fn rank_from_spectrum(spectrum: Vec<f64>, tau: f64) -> RankReport {
    let rank = spectrum.iter().filter(|&&s| s > tau).count();
    RankReport {
        rank,
        tolerance_used: tau,
        spectrum,
    }
}

/// Full right-singular basis of `a`: an `n x n` orthogonal matrix whose
/// leading columns pair with the (sorted) singular values.
fn full_right_svd(a: &DenseMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = (a.rows(), a.cols());
    // Pad with zero rows so the thin SVD still yields all n right vectors.
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m).copy_from(&a.inner);
        p
    } else {
        a.inner.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v = svd.v_t.expect("requested V").transpose();
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    (sv, v)
}

/// Orthonormal basis of `N(a)` as the columns of an `n x q` matrix,
/// `q = cols - rank`.
pub fn null_space_basis(a: &DenseMatrix, tol: &ToleranceConfig) -> Result<DenseMatrix> {
    require_nonempty(a)?;
    let n = a.cols();
    let (sv, v) = full_right_svd(a);
    let tau = tol.rank_threshold(a.rows(), n, sv.first().copied().unwrap_or(0.0));
    let r = sv.iter().filter(|&&s| s > tau).count();
    Ok(DenseMatrix {
        inner: v.columns(r, n - r).into_owned(),
    })
}

/// Moore-Penrose inverse of a full-column-rank matrix, computed from the SVD.
pub fn pseudo_inverse(a: &DenseMatrix, tol: &ToleranceConfig) -> Result<DenseMatrix> {
    require_nonempty(a)?;
    let report = rank(a, tol)?;
    if report.rank < a.cols() {
        return Err(Error::AssumptionViolated(format!(
            "matrix has rank {} < {} columns, so A^T A is singular",
            report.rank,
            a.cols()
        )));
    }
    let svd = SVD::new(a.inner.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V");
    let mut sigma_inv = DMatrix::zeros(svd.singular_values.len(), svd.singular_values.len());
    for (k, s) in svd.singular_values.iter().enumerate() {
        sigma_inv[(k, k)] = 1.0 / s;
    }
    DenseMatrix::from_dmatrix(v_t.transpose() * sigma_inv * u.transpose())
}

/// Minimum-norm least-squares solution of `a w = b` and its residual norm.
pub fn least_squares(a: &DenseMatrix, b: &[f64], tol: &ToleranceConfig) -> Result<(Vec<f64>, f64)> {
    require_nonempty(a)?;
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "right-hand side of length {} for {} rows",
            b.len(),
            a.rows()
        )));
    }
    let svd = SVD::new(a.inner.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tau = tol.rank_threshold(a.rows(), a.cols(), smax);
    let rhs = DVector::from_column_slice(b);
    let w = svd
        .solve(&rhs, tau)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let resid = (&a.inner * &w - &rhs).norm();
    Ok((w.iter().copied().collect(), resid))
}

/// Condition number `sigma_max / sigma_min` of a square matrix (infinite if singular).
pub fn condition_number(a: &DenseMatrix) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}
