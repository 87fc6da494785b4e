//! Quantities over the family `F` of all bases of `N(A2^T)`.
//!
//! Every basis is `B = B0 T` with `B0` a fixed orthonormal basis and `T`
//! invertible, so every scaled matrix is `B^T A1 = T^T V` with `V = B0^T A1`.
//!
//! * Spark is unchanged by an invertible left factor, so `Spark(B^T A1)` is
//!   the same for every `B` and the supremum over `F` is attained everywhere.
//! * Normalized inner products of `T^T V` depend on `T` only through the
//!   SPD matrix `W = T T^T`. The searches therefore parameterize
//!   `W = L L^T` with `L` lower triangular (positive diagonal, stored as a
//!   log), scaled so that `trace(W) = q`, and use `T = L`.
//!
//! Extrema of coherence-type quantities over `F` are found by multistart
//! pattern search. Minimum-coherence results are usable as certificates
//! (any basis gives a valid bound); maximum-type results under-estimate a
//! supremum and are reported as heuristic.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{abs_gram, profile_from_gram, CoherenceProfile};
use crate::error::{Error, Result};
use crate::matrix::{condition_number, null_space_basis, rank, DenseMatrix};
use crate::serde_ext::ext_f64_opt;
use crate::spark::{brauer_conditions, spark_exact, SparkResult};
use crate::tolerance::{SearchConfig, ToleranceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFamily {
    /// Orthonormal reference basis of `N(A2^T)`, `m x q`.
    pub b0: DenseMatrix,
    pub q: usize,
}

pub fn basis_family(a2: &DenseMatrix, tol: &ToleranceConfig) -> Result<BasisFamily> {
    let b0 = if a2.cols() == 0 {
        DenseMatrix::identity(a2.rows())
    } else {
        null_space_basis(&a2.transpose(), tol)?
    };
    if b0.cols() == 0 {
        return Err(Error::EmptyNullSpace);
    }
    Ok(BasisFamily { q: b0.cols(), b0 })
}

/// `(B0 T)^T A1`; `T = I` when `transform` is `None`.
pub fn scaled_matrix(
    family: &BasisFamily,
    a1: &DenseMatrix,
    transform: Option<&DenseMatrix>,
) -> Result<DenseMatrix> {
    let v = family.b0.transpose().matmul(a1)?;
    match transform {
        None => Ok(v),
        Some(t) => {
            if t.rows() != family.q || t.cols() != family.q {
                return Err(Error::Dimension(format!(
                    "transform must be {q}x{q}, got {}x{}",
                    t.rows(),
                    t.cols(),
                    q = family.q
                )));
            }
            if rank(t, &ToleranceConfig::default())?.rank < family.q {
                return Err(Error::SingularTransform);
            }
            t.transpose().matmul(&v)
        }
    }
}

/// A random `q x q` matrix with condition number in `[1, max_cond]`:
/// `Q1 diag(s) Q2` with orthogonal factors and log-uniform `s`.
pub fn random_well_conditioned<R: Rng>(q: usize, max_cond: f64, rng: &mut R) -> DenseMatrix {
    let mut orth = || {
        let g = DMatrix::from_fn(q, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        g.qr().q()
    };
    let (q1, q2) = (orth(), orth());
    let span = max_cond.max(1.0).ln();
    let mut s = DMatrix::zeros(q, q);
    for k in 0..q {
        let frac = if q == 1 { 0.0 } else { rng.gen::<f64>() };
        // pin the extremes so the full range is exercised
        let frac = match k {
            0 => 0.0,
            _ if k == q - 1 && q > 1 => 1.0,
            _ => frac,
        };
        s[(k, k)] = (frac * span).exp();
    }
    DenseMatrix::from_dmatrix(q1 * s * q2).expect("finite")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSparkResult {
    pub value: SparkResult,
    pub invariance_checked: bool,
    pub invariance_trials: usize,
}

/// `Spark(B0^T A1)`, plus a check that `invariance_trials` random
/// well-conditioned transforms leave it unchanged.
pub fn scaled_spark(
    family: &BasisFamily,
    a1: &DenseMatrix,
    invariance_trials: usize,
    budget: u64,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<ScaledSparkResult> {
    let v = scaled_matrix(family, a1, None)?;
    let reference = spark_exact(&v, budget, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..invariance_trials {
        let t = random_well_conditioned(family.q, 1e3, &mut rng);
        let observed = spark_exact(&scaled_matrix(family, a1, Some(&t))?, budget, tol)?;
        if observed.value != reference.value {
            return Err(Error::InvarianceViolation {
                reference: format!("{:?}", reference.value),
                observed: format!("{:?}", observed.value),
                trial,
            });
        }
    }
    Ok(ScaledSparkResult {
        value: reference,
        invariance_checked: invariance_trials > 0,
        invariance_trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    MinScaled,
    MaxScaled,
    MaxScaledSub,
    MaxAlpha,
    MaxBeta,
}

impl EstimateKind {
    fn score(self, p: &CoherenceProfile) -> Option<f64> {
        match self {
            EstimateKind::MinScaled => Some(-p.mu),
            EstimateKind::MaxScaled => Some(p.mu),
            EstimateKind::MaxScaledSub => p.mu2,
            EstimateKind::MaxAlpha => Some(p.alpha as f64),
            EstimateKind::MaxBeta => Some(p.beta as f64),
        }
    }

    fn value(self, p: &CoherenceProfile) -> Option<f64> {
        match self {
            EstimateKind::MinScaled | EstimateKind::MaxScaled => Some(p.mu),
            EstimateKind::MaxScaledSub => p.mu2,
            EstimateKind::MaxAlpha => Some(p.alpha as f64),
            EstimateKind::MaxBeta => Some(p.beta as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledCoherenceEstimate {
    pub kind: EstimateKind,
    /// Best value found; `None` when no evaluated basis has the quantity
    /// (a submutual coherence with every pair in the top band).
    #[serde(with = "ext_f64_opt")]
    pub value: Option<f64>,
    /// `T` (lower triangular) of the best basis `B0 T`.
    pub best_transform: DenseMatrix,
    pub certified: bool,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledRankEstimates {
    pub alpha_star: ScaledCoherenceEstimate,
    pub beta_star: ScaledCoherenceEstimate,
    pub mu2_star_star: ScaledCoherenceEstimate,
}

fn theta_len(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Lower-triangular `L` from parameters, scaled to `||L||_F^2 = q`.
fn lower_from_theta(q: usize, theta: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(q, q);
    let mut k = 0;
    for i in 0..q {
        for j in 0..=i {
            l[(i, j)] = if i == j { theta[k].exp() } else { theta[k] };
            k += 1;
        }
    }
    let f = l.norm();
    l * ((q as f64).sqrt() / f)
}

struct Evaluator<'a> {
    v: &'a DMatrix<f64>,
    q: usize,
    eq_tol: f64,
    cond_cap: f64,
    tol: &'a ToleranceConfig,
}

impl Evaluator<'_> {
    fn profile(&self, theta: &[f64]) -> Option<CoherenceProfile> {
        let l = lower_from_theta(self.q, theta);
        let lm = DenseMatrix::from_dmatrix(l.clone()).ok()?;
        // cond(W) = cond(L)^2
        let c = condition_number(&lm);
        if !(c * c <= self.cond_cap) {
            return None;
        }
        let scaled = l.transpose() * self.v;
        profile_from_gram(abs_gram(&scaled, self.tol), self.eq_tol).ok()
    }
}

struct Run {
    score: f64,
    theta: Vec<f64>,
    profile: CoherenceProfile,
    evaluations: u64,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn pattern_search(ev: &Evaluator<'_>, kind: EstimateKind, start: Vec<f64>, cfg: &SearchConfig) -> Option<Run> {
    let mut evaluations = 1u64;
    let mut theta = start;
    let mut profile = ev.profile(&theta)?;
    let mut score = kind.score(&profile).unwrap_or(f64::NEG_INFINITY);
    let mut step = cfg.initial_step;
    for _ in 0..cfg.max_iters {
        let mut best: Option<(f64, Vec<f64>, CoherenceProfile)> = None;
        for c in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[c] += dir * step;
                evaluations += 1;
                let Some(p) = ev.profile(&cand) else { continue };
                let Some(s) = kind.score(&p) else { continue };
                if s > best.as_ref().map_or(score, |b| b.0) {
                    best = Some((s, cand, p));
                }
            }
        }
        match best {
            Some((s, cand, p)) => {
                score = s;
                theta = cand;
                profile = p;
            }
            None => {
                step *= cfg.step_shrink;
                if step < cfg.min_step {
                    break;
                }
            }
        }
    }
    Some(Run {
        score,
        theta,
        profile,
        evaluations,
    })
}

fn start_theta(q: usize, index: usize, seed: u64) -> Vec<f64> {
    let len = theta_len(q);
    if index == 0 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (0..len).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn run_search(
    family: &BasisFamily,
    a1: &DenseMatrix,
    kind: EstimateKind,
    cfg: &SearchConfig,
    tol: &ToleranceConfig,
) -> Result<ScaledCoherenceEstimate> {
    let v = scaled_matrix(family, a1, None)?;
    let q = family.q;
    // fails early with InsufficientColumns
    let base = profile_from_gram(abs_gram(v.as_dmatrix(), tol), tol.eq_band)?;
    let identity = DenseMatrix::identity(q);
    if q == 1 {
        // every normalized scaled column is +-1: the profile is the same for all bases
        return Ok(ScaledCoherenceEstimate {
            kind,
            value: kind.value(&base),
            best_transform: identity,
            certified: true,
            evaluations: 1,
        });
    }
    let ev = Evaluator {
        v: v.as_dmatrix(),
        q,
        eq_tol: tol.eq_band,
        cond_cap: cfg.cond_cap,
        tol,
    };
    let runs: Vec<Run> = (0..=cfg.n_starts)
        .into_par_iter()
        .filter_map(|i| pattern_search(&ev, kind, start_theta(q, i, cfg.seed), cfg))
        .collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| {
            if b.score > a.score || (b.score == a.score && lex_less(&b.theta, &a.theta)) {
                b
            } else {
                a
            }
        })
        .expect("identity start is always feasible");
    Ok(ScaledCoherenceEstimate {
        kind,
        value: kind.value(&best.profile),
        best_transform: DenseMatrix::from_dmatrix(lower_from_theta(q, &best.theta))?,
        certified: kind == EstimateKind::MinScaled,
        evaluations,
    })
}

/// Smallest (`Min`) or largest (`Max`) `mu(B^T A1)` found over `F`.
pub fn search_scaled_coherence(
    family: &BasisFamily,
    a1: &DenseMatrix,
    extremum: Extremum,
    cfg: &SearchConfig,
    tol: &ToleranceConfig,
) -> Result<ScaledCoherenceEstimate> {
    let kind = match extremum {
        Extremum::Min => EstimateKind::MinScaled,
        Extremum::Max => EstimateKind::MaxScaled,
    };
    run_search(family, a1, kind, cfg, tol)
}

/// Largest coherence rank, subcoherence rank and submutual coherence found over `F`.
pub fn search_scaled_rank_quantities(
    family: &BasisFamily,
    a1: &DenseMatrix,
    cfg: &SearchConfig,
    tol: &ToleranceConfig,
) -> Result<ScaledRankEstimates> {
    Ok(ScaledRankEstimates {
        alpha_star: run_search(family, a1, EstimateKind::MaxAlpha, cfg, tol)?,
        beta_star: run_search(family, a1, EstimateKind::MaxBeta, cfg, tol)?,
        mu2_star_star: run_search(family, a1, EstimateKind::MaxScaledSub, cfg, tol)?,
    })
}

/// `phi* = 1 + (sqrt(rho) - (alpha* + beta*) d) / (2 mu2**)` with
/// `d = mu** - mu2**` and `rho = (alpha* - beta*)^2 d^2 + 4`.
pub fn phi_star(alpha_star: usize, beta_star: usize, mu_star_star: f64, mu2_star_star: f64) -> Result<f64> {
    if !brauer_conditions(mu_star_star, alpha_star, beta_star) {
        return Err(Error::NotApplicable(format!(
            "alpha* = {alpha_star}, beta* = {beta_star} with mu** = {mu_star_star} \
             fail both rank conditions"
        )));
    }
    if !(mu2_star_star > 0.0) {
        return Err(Error::NotApplicable("mu2** must be positive".into()));
    }
    let (a, b) = (alpha_star as f64, beta_star as f64);
    let d = mu_star_star - mu2_star_star;
    let rho = (a - b) * (a - b) * d * d + 4.0;
    Ok(1.0 + (rho.sqrt() - (a + b) * d) / (2.0 * mu2_star_star))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum PropositionOutcome {
    /// `mu2** < mu* (1 - d)`; `phi*` is checked to exceed `1 + 1/mu*`.
    Improved { phi_star: f64, coherence_bound: f64, verified: bool },
    NotImproved,
    /// `alpha* = 1 < 1/mu**` or `mu2** > 0` does not hold.
    ConditionFails,
}

/// Decides whether `phi*` beats the minimal-coherence bound when `alpha* = 1`.
pub fn proposition_comparator(mu_star: f64, mu_star_star: f64, mu2_star_star: f64) -> PropositionOutcome {
    let Ok(phi) = phi_star(1, 1, mu_star_star, mu2_star_star) else {
        return PropositionOutcome::ConditionFails;
    };
    let d = mu_star_star - mu2_star_star;
    if mu2_star_star < mu_star * (1.0 - d) {
        let coherence_bound = 1.0 + 1.0 / mu_star;
        PropositionOutcome::Improved {
            phi_star: phi,
            coherence_bound,
            verified: phi > coherence_bound,
        }
    } else {
        PropositionOutcome::NotImproved
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::coherence_profile;
    use crate::spark::{SparkValue, DEFAULT_SUBSET_BUDGET};
    use approx::assert_abs_diff_eq;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn ones(m: usize) -> DenseMatrix {
        DenseMatrix::column_vector(&vec![1.0; m]).unwrap()
    }

    #[test]
    fn family_examples() {
        let f = basis_family(&ones(3), &tol()).unwrap();
        assert_eq!(f.q, 2);
        let f = basis_family(&DenseMatrix::zeros(4, 2), &tol()).unwrap();
        assert_eq!(f.q, 4);
        let g = f.b0.transpose().matmul(&f.b0).unwrap();
        assert!(g.max_abs_diff(&DenseMatrix::identity(4)) < 1e-14);
        assert!(matches!(
            basis_family(&DenseMatrix::identity(3), &tol()),
            Err(Error::EmptyNullSpace)
        ));
    }

    #[test]
    fn scaled_matrix_examples() {
        let f = basis_family(&ones(3), &tol()).unwrap();
        let v = scaled_matrix(&f, &DenseMatrix::identity(3), None).unwrap();
        assert!(v.max_abs_diff(&f.b0.transpose()) < 1e-15);
        let z = scaled_matrix(&f, &DenseMatrix::zeros(3, 4), None).unwrap();
        assert_eq!(z, DenseMatrix::zeros(2, 4));
        let singular = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            scaled_matrix(&f, &DenseMatrix::identity(3), Some(&singular)),
            Err(Error::SingularTransform)
        ));
    }

    #[test]
    fn orthogonal_transform_keeps_profile() {
        let f = basis_family(&ones(3), &tol()).unwrap();
        let a1 = DenseMatrix::from_rows(&[
            vec![1.0, 0.3, -0.2, 2.0],
            vec![0.5, 1.0, 0.7, -1.0],
            vec![0.0, -0.4, 1.0, 0.1],
        ])
        .unwrap();
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let p0 = coherence_profile(&scaled_matrix(&f, &a1, None).unwrap(), 1e-10).unwrap();
        let p1 = coherence_profile(&scaled_matrix(&f, &a1, Some(&rot)).unwrap(), 1e-10).unwrap();
        assert_abs_diff_eq!(p0.mu, p1.mu, epsilon = 1e-12);
        assert_eq!((p0.alpha, p0.beta), (p1.alpha, p1.beta));
    }

    #[test]
    fn scaled_spark_examples() {
        let f = basis_family(&ones(3), &tol()).unwrap();
        let r = scaled_spark(&f, &DenseMatrix::identity(3), 5, DEFAULT_SUBSET_BUDGET, 7, &tol()).unwrap();
        assert_eq!(r.value.value, SparkValue::Finite(3));
        assert!(r.invariance_checked);

        let a1 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let f0 = basis_family(&DenseMatrix::zeros(2, 1), &tol()).unwrap();
        let r = scaled_spark(&f0, &a1, 3, DEFAULT_SUBSET_BUDGET, 7, &tol()).unwrap();
        let direct = spark_exact(&a1, DEFAULT_SUBSET_BUDGET, &tol()).unwrap();
        assert_eq!(r.value.value, direct.value);

        // column 0 lies in range(A2)
        let a2 = DenseMatrix::column_vector(&[1.0, 2.0, 0.0]).unwrap();
        let a1 = DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![4.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]])
            .unwrap();
        let f = basis_family(&a2, &tol()).unwrap();
        let r = scaled_spark(&f, &a1, 3, DEFAULT_SUBSET_BUDGET, 7, &tol()).unwrap();
        assert_eq!(r.value.value, SparkValue::Finite(1));
    }

    #[test]
    fn one_dimensional_family_is_analytic() {
        // A2 = two independent columns in R^3 -> q = 1
        let a2 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let f = basis_family(&a2, &tol()).unwrap();
        assert_eq!(f.q, 1);
        let a1 = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 2.0, 1.0],
            vec![0.0, 1.0, 1.0, 3.0],
            vec![1.0, -2.0, 0.5, 4.0],
        ])
        .unwrap();
        let cfg = SearchConfig::default();
        for ext in [Extremum::Min, Extremum::Max] {
            let e = search_scaled_coherence(&f, &a1, ext, &cfg, &tol()).unwrap();
            assert_abs_diff_eq!(e.value.unwrap(), 1.0, epsilon = 1e-12);
        }
        let r = search_scaled_rank_quantities(&f, &a1, &cfg, &tol()).unwrap();
        assert_eq!(r.alpha_star.value, Some(3.0));
    }

    #[test]
    fn min_search_on_orthogonal_columns() {
        let f = basis_family(&DenseMatrix::zeros(3, 1), &tol()).unwrap();
        let cfg = SearchConfig {
            n_starts: 0,
            ..Default::default()
        };
        let e = search_scaled_coherence(&f, &DenseMatrix::identity(3), Extremum::Min, &cfg, &tol()).unwrap();
        assert!(e.value.unwrap() <= 1e-12);
        assert!(e.certified);
    }

    #[test]
    fn max_search_dominates_reference() {
        let f = basis_family(&ones(4), &tol()).unwrap();
        let a1 = DenseMatrix::from_rows(&[
            vec![1.0, 0.2, -0.5, 0.3, 1.0],
            vec![0.1, 1.0, 0.4, -0.7, 0.0],
            vec![-0.3, 0.5, 1.0, 0.2, 0.6],
            vec![0.0, -0.1, 0.3, 1.0, -0.4],
        ])
        .unwrap();
        let cfg = SearchConfig::default();
        let v = scaled_matrix(&f, &a1, None).unwrap();
        let mu0 = coherence_profile(&v, 1e-10).unwrap().mu;
        let hi = search_scaled_coherence(&f, &a1, Extremum::Max, &cfg, &tol()).unwrap();
        let lo = search_scaled_coherence(&f, &a1, Extremum::Min, &cfg, &tol()).unwrap();
        assert!(hi.value.unwrap() >= mu0 - 1e-12);
        assert!(lo.value.unwrap() <= mu0 + 1e-12);
        assert!(!hi.certified);
        // the reported transform reproduces the reported value
        let at = scaled_matrix(&f, &a1, Some(&lo.best_transform)).unwrap();
        assert_abs_diff_eq!(coherence_profile(&at, 1e-10).unwrap().mu, lo.value.unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn phi_star_examples() {
        assert_abs_diff_eq!(phi_star(1, 1, 0.5, 0.2).unwrap(), 4.5, epsilon = 1e-12);
        assert!(matches!(phi_star(1, 1, 0.5, 0.0), Err(Error::NotApplicable(_))));
        assert!(matches!(phi_star(3, 3, 0.5, 0.1), Err(Error::NotApplicable(_))));
        // alpha* = beta*: closed form 1 + (1 - d) / mu2**
        let (mu, mu2) = (0.37, 0.21);
        assert_abs_diff_eq!(
            phi_star(2, 2, mu, mu2).unwrap(),
            1.0 + (1.0 - 2.0 * (mu - mu2)) / mu2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn comparator_examples() {
        match proposition_comparator(0.4, 0.5, 0.2) {
            PropositionOutcome::Improved { phi_star, coherence_bound, verified } => {
                assert_abs_diff_eq!(phi_star, 4.5, epsilon = 1e-12);
                assert_abs_diff_eq!(coherence_bound, 3.5, epsilon = 1e-12);
                assert!(verified);
            }
            other => panic!("unexpected {other:?}"),
        }
        // mu2** = mu* (1 - d) exactly: 0.25 = 0.5 * (1 - 0.5)
        assert_eq!(proposition_comparator(0.5, 0.75, 0.25), PropositionOutcome::NotImproved);
        assert_eq!(proposition_comparator(0.3, 0.3, 0.3), PropositionOutcome::NotImproved);
        assert_eq!(proposition_comparator(0.4, 1.0, 0.2), PropositionOutcome::ConditionFails);
    }
}
