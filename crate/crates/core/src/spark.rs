//! Spark: the smallest number of linearly dependent columns.
//!
//! [`spark_exact`] enumerates column subsets by increasing size, in
//! lexicographic order within a size, and stops at the first rank-deficient
//! one. Dependence is judged against one threshold fixed from the whole
//! matrix, so a subset's verdict does not depend on its own scale.
//!
//! Two cheap lower bounds come from a [`CoherenceProfile`]:
//!
//! * `1 + 1/mu`, the classical coherence bound;
//! * the refined bound
//!   `1 + 2 (1 - a b d^2) / (mu2 (d (a + b) + sqrt(d^2 (a - b)^2 + 4)))`
//!   with `a = alpha`, `b = beta`, `d = mu - mu2`. It needs `alpha < 1/mu`,
//!   or `alpha <= 1/mu` together with `beta < alpha`, and a positive `mu2`.
//!   It follows from Brauer's ovals of Cassini applied to the singular Gram
//!   matrix of a minimal dependent set, and is strictly larger than `1 + 1/mu`
//!   whenever it applies.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceProfile;
use crate::error::{Error, Result};
use crate::matrix::{rank_with_threshold, singular_values, DenseMatrix};
use crate::serde_ext::{ext_f64, ext_f64_opt};
use crate::tolerance::ToleranceConfig;

pub const DEFAULT_SUBSET_BUDGET: u64 = 2_000_000;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparkValue {
    Finite(usize),
    /// Columns are linearly independent; compares as `+inf`.
    NoDependence,
}

impl SparkValue {
    pub fn as_f64(self) -> f64 {
        match self {
            SparkValue::Finite(k) => k as f64,
            SparkValue::NoDependence => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparkResult {
    pub value: SparkValue,
    /// Lexicographically smallest dependent subset of minimal size.
    pub witness: Option<Vec<usize>>,
    pub subsets_examined: u64,
    pub tol_policy: ToleranceConfig,
    /// Singular-value threshold applied to every subset.
    pub threshold: f64,
    /// Whether the witness is still rank-deficient at a ten times tighter
    /// tolerance. `true` when there is no witness.
    pub witness_stable: bool,
}

fn dependence_threshold(a: &DenseMatrix, tol: &ToleranceConfig) -> f64 {
    let smax = singular_values(a).first().copied().unwrap_or(0.0);
    tol.rank_threshold(a.rows(), a.cols(), smax)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

fn first_dependent(a: &DenseMatrix, k: usize, tau: f64) -> (Option<Vec<usize>>, u64) {
    let mut examined = 0u64;
    for chunk in &(0..a.cols()).combinations(k).chunks(CHUNK) {
        let chunk: Vec<Vec<usize>> = chunk.collect();
        let hit = chunk
            .par_iter()
            .position_first(|s| rank_with_threshold(&a.select_columns(s), tau) < k);
        match hit {
            Some(pos) => return (Some(chunk[pos].clone()), examined + pos as u64 + 1),
            None => examined += chunk.len() as u64,
        }
    }
    (None, examined)
}

pub fn spark_exact(a: &DenseMatrix, budget: u64, tol: &ToleranceConfig) -> Result<SparkResult> {
    if a.is_empty() {
        return Err(Error::Dimension(format!(
            "spark of an empty {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.cols();
    let tau = dependence_threshold(a, tol);
    let k_max = (a.rows() + 1).min(n);
    let mut examined = 0u64;
    for k in 1..=k_max {
        let level = binomial(n, k);
        if examined.saturating_add(level) > budget {
            return Err(Error::BudgetExceeded {
                budget,
                verified_k: k - 1,
                examined,
            });
        }
        let (hit, count) = first_dependent(a, k, tau);
        examined += count;
        if let Some(witness) = hit {
            let tight = dependence_threshold(a, &tol.tightened());
            let witness_stable = rank_with_threshold(&a.select_columns(&witness), tight) < k;
            return Ok(SparkResult {
                value: SparkValue::Finite(k),
                witness: Some(witness),
                subsets_examined: examined,
                tol_policy: *tol,
                threshold: tau,
                witness_stable,
            });
        }
    }
    Ok(SparkResult {
        value: SparkValue::NoDependence,
        witness: None,
        subsets_examined: examined,
        tol_policy: *tol,
        threshold: tau,
        witness_stable: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    DonohoElad,
    Brauer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparkBound {
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub kind: BoundKind,
    pub applicable: bool,
    pub mu: f64,
    #[serde(with = "ext_f64_opt")]
    pub mu2: Option<f64>,
    pub alpha: usize,
    pub beta: usize,
}

/// `1 + 1/mu`, or `+inf` when `mu = 0`. A zero column makes the spark 1, so
/// the bound is reported as inapplicable with value 1 in that case.
pub fn de_lower_bound(profile: &CoherenceProfile) -> SparkBound {
    let (value, applicable) = if profile.has_zero_columns() {
        (1.0, false)
    } else if profile.mu == 0.0 {
        (f64::INFINITY, true)
    } else {
        (1.0 + 1.0 / profile.mu, true)
    };
    SparkBound {
        value,
        kind: BoundKind::DonohoElad,
        applicable,
        mu: profile.mu,
        mu2: profile.mu2,
        alpha: profile.alpha,
        beta: profile.beta,
    }
}

/// Whether `(mu, alpha, beta)` satisfy the hypotheses of the refined bound.
pub fn brauer_conditions(mu: f64, alpha: usize, beta: usize) -> bool {
    if mu <= 0.0 {
        return false;
    }
    // alpha < 1/mu as alpha mu < 1, with a margin so that mu rounded just
    // below 1/alpha does not pass the strict test
    let prod = alpha as f64 * mu;
    prod < 1.0 - 1e-12 || (prod <= 1.0 && beta < alpha)
}

/// The refined bound as a plain function of its four inputs.
pub fn brauer_value(mu: f64, mu2: f64, alpha: usize, beta: usize) -> f64 {
    let (a, b) = (alpha as f64, beta as f64);
    let d = mu - mu2;
    let root = (d * d * (a - b) * (a - b) + 4.0).sqrt();
    1.0 + 2.0 * (1.0 - a * b * d * d) / (mu2 * (d * (a + b) + root))
}

pub fn brauer_lower_bound(profile: &CoherenceProfile) -> SparkBound {
    let de = de_lower_bound(profile);
    let applicable = !profile.has_zero_columns()
        && brauer_conditions(profile.mu, profile.alpha, profile.beta)
        && profile.mu2.is_some_and(|m2| m2 > 0.0);
    let value = if applicable {
        brauer_value(profile.mu, profile.mu2.unwrap(), profile.alpha, profile.beta)
    } else {
        de.value
    };
    SparkBound {
        value,
        kind: BoundKind::Brauer,
        applicable,
        ..de
    }
}
