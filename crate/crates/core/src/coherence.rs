//! Mutual coherence and its refinements.
//!
//! For a matrix with columns `a_1..a_n`, let `g_ij = |a_i^T a_j| / (|a_i| |a_j|)`.
//!
//! * `mu` is the largest `g_ij` over distinct columns;
//! * `S_i` lists the `j != i` with `g_ij` equal to `mu`;
//! * `alpha = max_i |S_i|` (coherence rank), attained first at `i0`;
//! * `beta = max_{i != i0} |S_i|` (subcoherence rank);
//! * `mu2` is the largest `g_ij` strictly below `mu` (submutual coherence).
//!
//! "Equal to `mu`" is decided with a relative band: `g_ij >= mu * (1 - eq_tol)`.
//! `mu2` is then the largest value below the band and is absent when every
//! pair sits inside it. Columns whose norm is negligible are listed in
//! `zero_columns` and take no part in any pair.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::serde_ext::ext_f64_opt;
use crate::tolerance::ToleranceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub mu: f64,
    #[serde(with = "ext_f64_opt")]
    pub mu2: Option<f64>,
    pub alpha: usize,
    pub beta: usize,
    /// Column attaining `alpha` (smallest such index).
    pub i0: usize,
    /// `attaining_sets[i]` is `S_i`, sorted ascending (0-based indices).
    pub attaining_sets: Vec<Vec<usize>>,
    /// `|normalized inner products|`, unit diagonal on usable columns.
    pub gram_abs: DenseMatrix,
    pub eq_tol: f64,
    pub zero_columns: Vec<usize>,
}

impl CoherenceProfile {
    /// Lower edge of the band of values treated as equal to `mu`.
    pub fn band_floor(&self) -> f64 {
        self.mu * (1.0 - self.eq_tol)
    }

    pub fn has_zero_columns(&self) -> bool {
        !self.zero_columns.is_empty()
    }
}

/// Columns with norm at or below this are treated as zero.
pub(crate) fn zero_column_threshold(rows: usize, cols: usize, norms: &[f64], tol: &ToleranceConfig) -> f64 {
    let scale = norms.iter().copied().fold(0.0, f64::max);
    tol.rank_threshold(rows, cols, scale)
}

pub fn coherence_profile(a: &DenseMatrix, eq_tol: f64) -> Result<CoherenceProfile> {
    coherence_profile_with(a, eq_tol, &ToleranceConfig::default())
}

pub fn coherence_profile_with(
    a: &DenseMatrix,
    eq_tol: f64,
    tol: &ToleranceConfig,
) -> Result<CoherenceProfile> {
    profile_of(a.as_dmatrix(), eq_tol, tol)
}

pub(crate) fn profile_of(a: &DMatrix<f64>, eq_tol: f64, tol: &ToleranceConfig) -> Result<CoherenceProfile> {
    profile_from_gram(abs_gram(a, tol), eq_tol)
}

pub(crate) struct AbsGram {
    pub values: DMatrix<f64>,
    pub usable: Vec<bool>,
}

pub(crate) fn abs_gram(a: &DMatrix<f64>, tol: &ToleranceConfig) -> AbsGram {
    let (m, n) = (a.nrows(), a.ncols());
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let thr = zero_column_threshold(m, n, &norms, tol);
    let usable: Vec<bool> = norms.iter().map(|&x| x > thr).collect();
    let mut unit = a.clone();
    for (j, mut c) in unit.column_iter_mut().enumerate() {
        if usable[j] {
            c /= norms[j];
        } else {
            c.fill(0.0);
        }
    }
    let mut values = unit.transpose() * &unit;
    values.apply(|v| *v = v.abs().min(1.0));
    for j in 0..n {
        if usable[j] {
            values[(j, j)] = 1.0;
        }
    }
    AbsGram { values, usable }
}

pub(crate) fn profile_from_gram(gram: AbsGram, eq_tol: f64) -> Result<CoherenceProfile> {
    let AbsGram { values, usable } = gram;
    let n = values.ncols();
    let usable_count = usable.iter().filter(|&&u| u).count();
    if usable_count < 2 {
        return Err(Error::InsufficientColumns {
            usable: usable_count,
            total: n,
        });
    }
    let pairs = || {
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    };
    let live = |&(i, j): &(usize, usize)| usable[i] && usable[j];

    let mu = pairs().filter(live).map(|(i, j)| values[(i, j)]).fold(0.0, f64::max);
    let floor = mu * (1.0 - eq_tol);
    let mu2 = pairs()
        .filter(live)
        .map(|(i, j)| values[(i, j)])
        .filter(|&g| g < floor)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));

    let mut sets = vec![Vec::new(); n];
    for (i, j) in pairs().filter(live) {
        if values[(i, j)] >= floor {
            sets[i].push(j);
            sets[j].push(i);
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let alpha = sets.iter().map(Vec::len).max().unwrap_or(0);
    let i0 = sets.iter().position(|s| s.len() == alpha).unwrap_or(0);
    let beta = sets
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != i0)
        .map(|(_, s)| s.len())
        .max()
        .unwrap_or(0);
    let zero_columns = (0..n).filter(|&j| !usable[j]).collect();

    Ok(CoherenceProfile {
        mu,
        mu2,
        alpha,
        beta,
        i0,
        attaining_sets: sets,
        gram_abs: DenseMatrix::from_dmatrix(values)?,
        eq_tol,
        zero_columns,
    })
}

/// Scales each non-negligible column to unit Euclidean norm; negligible
/// columns are returned unchanged.
pub fn normalize_columns(a: &DenseMatrix) -> DenseMatrix {
    let tol = ToleranceConfig::default();
    let norms = a.column_norms();
    let thr = zero_column_threshold(a.rows(), a.cols(), &norms, &tol);
    let mut inner = a.as_dmatrix().clone();
    for (j, mut c) in inner.column_iter_mut().enumerate() {
        if norms[j] > thr {
            c /= norms[j];
        }
    }
    DenseMatrix::from_dmatrix(inner).expect("scaling keeps entries finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_plus_ones() {
        let a = DenseMatrix::identity_plus_ones(3);
        let p = coherence_profile(&a, 1e-10).unwrap();
        assert_abs_diff_eq!(p.mu, 3f64.powf(-0.5), epsilon = 1e-15);
        assert_eq!(p.attaining_sets[0], vec![3]);
        assert_eq!(p.attaining_sets[1], vec![3]);
        assert_eq!(p.attaining_sets[2], vec![3]);
        assert_eq!(p.attaining_sets[3], vec![0, 1, 2]);
        assert_eq!((p.alpha, p.beta, p.i0), (3, 1, 3));
        assert_eq!(p.mu2, Some(0.0));
    }

    #[test]
    fn orthogonal_columns() {
        let p = coherence_profile(&DenseMatrix::identity(3), 1e-10).unwrap();
        assert_eq!(p.mu, 0.0);
        assert_eq!(p.mu2, None);
    }

    #[test]
    fn three_columns_in_plane() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let p = coherence_profile(&a, 1e-10).unwrap();
        assert_abs_diff_eq!(p.mu, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(p.attaining_sets[2], vec![0, 1]);
        assert_eq!((p.alpha, p.beta), (2, 1));
        assert_eq!(p.mu2, Some(0.0));
    }

    #[test]
    fn zero_columns_reported_and_skipped() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let p = coherence_profile(&a, 1e-10).unwrap();
        assert_eq!(p.zero_columns, vec![1]);
        assert!(p.attaining_sets[1].is_empty());
        assert_abs_diff_eq!(p.mu, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn insufficient_columns() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            coherence_profile(&a, 1e-10),
            Err(Error::InsufficientColumns { usable: 1, total: 2 })
        ));
    }

    #[test]
    fn normalize_examples() {
        let a = DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let u = normalize_columns(&a);
        assert_abs_diff_eq!(u.get(0, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(u.get(1, 0), 0.8, epsilon = 1e-15);
        assert_eq!(normalize_columns(&DenseMatrix::identity(3)), DenseMatrix::identity(3));
        let z = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let u = normalize_columns(&z);
        assert_eq!(u.column(0), vec![0.0, 0.0]);
        assert_eq!(u.column(1), vec![1.0, 0.0]);
    }
}
