//! Uniqueness certificates for a candidate `(x, y)`.
//!
//! Every certificate has the form `||x||_0 < threshold`. When a certified one
//! holds, `x` is the unique sparsest x-part. The thresholds are
//!
//! | id                        | threshold                                   |
//! |---------------------------|---------------------------------------------|
//! | `PsiZero`                 | `1/2 Spark(M) / (1 + psi_0(A2^+ A1))`       |
//! | `ScaledSpark`(`Star`)     | `1/2 Spark(B^T A1)` (same for every basis)  |
//! | `ScaledCoherencePerBasis` | `1/2 (1 + 1/mu(B0^T A1))`                   |
//! | `MinScaledCoherence`      | `1/2 (1 + 1/mu(B^T A1))`, best basis found  |
//! | `BrauerPerBasis`          | `1/2 max_B phi(B^T A1)` over evaluated bases|
//! | `PhiStar`                 | `1/2 phi*` from search estimates (heuristic)|
//!
//! `PhiStar` uses lower estimates of suprema and can overstate its threshold,
//! so it never certifies anything.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coherence::{coherence_profile_with, CoherenceProfile};
use crate::error::{Error, Result};
use crate::lp_norm::{psi_zero, LpNormResult, DEFAULT_P_SEQUENCE};
use crate::matrix::{pseudo_inverse, DenseMatrix};
use crate::oracle::{a2_full_column_rank, Instance};
use crate::scaled::{
    basis_family, phi_star, scaled_matrix, scaled_spark, search_scaled_coherence,
    search_scaled_rank_quantities, BasisFamily, Extremum, ScaledCoherenceEstimate, ScaledRankEstimates,
    ScaledSparkResult,
};
use crate::serde_ext::ext_f64;
use crate::spark::{brauer_lower_bound, spark_exact, SparkResult, SparkValue, DEFAULT_SUBSET_BUDGET};
use crate::tolerance::{SearchConfig, ToleranceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual: f64,
    pub x_support_size: usize,
}

impl CandidateSolution {
    pub fn new(inst: &Instance, x: Vec<f64>, y: Vec<f64>, tol: &ToleranceConfig) -> Result<Self> {
        if x.len() != inst.n1() || y.len() != inst.n2() {
            return Err(Error::Dimension(format!(
                "candidate has |x| = {}, |y| = {}; instance needs {} and {}",
                x.len(),
                y.len(),
                inst.n1(),
                inst.n2()
            )));
        }
        let ax = inst.a1.mul_vec(&x)?;
        let ay = inst.a2.mul_vec(&y)?;
        let residual = ax
            .iter()
            .zip(&ay)
            .zip(&inst.b)
            .map(|((p, q), r)| (p + q - r).powi(2))
            .sum::<f64>()
            .sqrt();
        let x_support_size = x.iter().filter(|v| v.abs() > tol.zero).count();
        Ok(Self {
            x,
            y,
            residual,
            x_support_size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateId {
    PsiZero,
    ScaledSpark,
    ScaledSparkStar,
    ScaledCoherencePerBasis,
    MinScaledCoherence,
    BrauerPerBasis,
    PhiStar,
}

impl CertificateId {
    pub const ALL: [CertificateId; 7] = [
        CertificateId::PsiZero,
        CertificateId::ScaledSpark,
        CertificateId::ScaledSparkStar,
        CertificateId::ScaledCoherencePerBasis,
        CertificateId::MinScaledCoherence,
        CertificateId::BrauerPerBasis,
        CertificateId::PhiStar,
    ];

    /// Whether a holding certificate of this kind proves uniqueness.
    pub fn is_certified_kind(self) -> bool {
        self != CertificateId::PhiStar
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub id: CertificateId,
    #[serde(with = "ext_f64")]
    pub threshold: f64,
    pub holds: bool,
    pub certified: bool,
    pub applicable: bool,
    /// Quantities the threshold was computed from.
    pub inputs: BTreeMap<String, Value>,
    /// `T` in `B = B0 T`, when a basis other than `B0` was used.
    pub basis_used: Option<DenseMatrix>,
    pub note: Option<String>,
}

impl Certificate {
    fn inapplicable(id: CertificateId, why: impl Into<String>) -> Self {
        Self {
            id,
            threshold: f64::NAN,
            holds: false,
            certified: false,
            applicable: false,
            inputs: BTreeMap::new(),
            basis_used: None,
            note: Some(why.into()),
        }
    }

    fn evaluated(id: CertificateId, threshold: f64, cand: &CandidateSolution, inputs: BTreeMap<String, Value>) -> Self {
        Self {
            id,
            threshold,
            holds: (cand.x_support_size as f64) < threshold,
            certified: id.is_certified_kind(),
            applicable: true,
            inputs,
            basis_used: None,
            note: None,
        }
    }
}

/// JSON number, or `"inf"`/`"-inf"`/`"nan"` for non-finite values.
pub(crate) fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

fn inputs<const N: usize>(pairs: [(&str, Value); N]) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    UniqueCertified,
    SuggestedUnique,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub candidate: CandidateSolution,
    pub certificates: Vec<Certificate>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    pub tol: ToleranceConfig,
    pub search: SearchConfig,
    pub spark_budget: u64,
    /// Random transforms used to re-check basis invariance of the scaled spark.
    pub invariance_trials: usize,
    pub p_sequence: Vec<f64>,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            tol: ToleranceConfig::default(),
            search: SearchConfig::default(),
            spark_budget: DEFAULT_SUBSET_BUDGET,
            invariance_trials: 2,
            p_sequence: DEFAULT_P_SEQUENCE.to_vec(),
        }
    }
}

/// Spark with a budget: either exact, or "all subsets of size <= k are
/// independent", i.e. `Spark > k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparkKnowledge {
    Exact(SparkValue),
    AtLeast(usize),
}

impl SparkKnowledge {
    fn from_result(r: &Result<SparkResult>) -> Option<Self> {
        match r {
            Ok(s) => Some(SparkKnowledge::Exact(s.value)),
            Err(Error::BudgetExceeded { verified_k, .. }) => Some(SparkKnowledge::AtLeast(verified_k + 1)),
            Err(_) => None,
        }
    }

    /// A value known to be `<= Spark`.
    pub fn lower(self) -> f64 {
        match self {
            SparkKnowledge::Exact(v) => v.as_f64(),
            SparkKnowledge::AtLeast(k) => k as f64,
        }
    }

    fn note(self) -> Option<String> {
        match self {
            SparkKnowledge::AtLeast(k) => Some(format!(
                "subset budget exhausted; only Spark >= {k} is certified and used"
            )),
            SparkKnowledge::Exact(_) => None,
        }
    }
}

/// Lazily computed quantities shared by the certificates of one instance.
pub struct Analysis<'a> {
    pub instance: &'a Instance,
    pub config: &'a CertificateConfig,
    pub use_search: bool,
    spark_m: OnceLock<Result<SparkResult>>,
    psi0: OnceLock<Result<LpNormResult>>,
    family: OnceLock<Result<BasisFamily>>,
    scaled_spark: OnceLock<Result<ScaledSparkResult>>,
    base_profile: OnceLock<Result<CoherenceProfile>>,
    min_coherence: OnceLock<Result<ScaledCoherenceEstimate>>,
    max_coherence: OnceLock<Result<ScaledCoherenceEstimate>>,
    rank_estimates: OnceLock<Result<ScaledRankEstimates>>,
}

fn not_searched<T>() -> Result<T> {
    Err(Error::NotApplicable("search disabled".into()))
}

fn cloned_err<T>(e: &Error) -> Result<T> {
    Err(match e {
        Error::EmptyNullSpace => Error::EmptyNullSpace,
        other => Error::NotApplicable(other.to_string()),
    })
}

impl<'a> Analysis<'a> {
    pub fn new(instance: &'a Instance, config: &'a CertificateConfig, use_search: bool) -> Self {
        Self {
            instance,
            config,
            use_search,
            spark_m: OnceLock::new(),
            psi0: OnceLock::new(),
            family: OnceLock::new(),
            scaled_spark: OnceLock::new(),
            base_profile: OnceLock::new(),
            min_coherence: OnceLock::new(),
            max_coherence: OnceLock::new(),
            rank_estimates: OnceLock::new(),
        }
    }

    fn tol(&self) -> &ToleranceConfig {
        &self.config.tol
    }

    pub fn spark_m(&self) -> &Result<SparkResult> {
        self.spark_m
            .get_or_init(|| spark_exact(&self.instance.combined(), self.config.spark_budget, self.tol()))
    }

    /// `psi_0(A2^+ A1)`; fails unless `A2` has full column rank.
    pub fn psi0(&self) -> &Result<LpNormResult> {
        self.psi0.get_or_init(|| {
            if !a2_full_column_rank(self.instance, self.tol()) {
                return Err(Error::AssumptionViolated(
                    "A2^T A2 is singular (A2 lacks full column rank)".into(),
                ));
            }
            let g = pseudo_inverse(&self.instance.a2, self.tol())?.matmul(&self.instance.a1)?;
            if g.frobenius_norm() == 0.0 {
                // psi_0 of the zero matrix is 0
                return Ok(LpNormResult {
                    p: 0.0,
                    closed_form: 0.0,
                    search_value: 0.0,
                    agree: true,
                    argmax_column: 0,
                    sequence: Vec::new(),
                });
            }
            psi_zero(&g, &self.config.p_sequence, self.tol().zero)
        })
    }

    pub fn family(&self) -> &Result<BasisFamily> {
        self.family.get_or_init(|| basis_family(&self.instance.a2, self.tol()))
    }

    pub fn scaled_spark(&self) -> &Result<ScaledSparkResult> {
        self.scaled_spark.get_or_init(|| match self.family() {
            Ok(f) => scaled_spark(
                f,
                &self.instance.a1,
                self.config.invariance_trials,
                self.config.spark_budget,
                self.config.search.seed,
                self.tol(),
            ),
            Err(e) => cloned_err(e),
        })
    }

    /// Coherence profile of `B0^T A1`.
    pub fn base_profile(&self) -> &Result<CoherenceProfile> {
        self.base_profile.get_or_init(|| match self.family() {
            Ok(f) => {
                let v = scaled_matrix(f, &self.instance.a1, None)?;
                coherence_profile_with(&v, self.tol().eq_band, self.tol())
            }
            Err(e) => cloned_err(e),
        })
    }

    pub fn min_coherence(&self) -> &Result<ScaledCoherenceEstimate> {
        self.min_coherence.get_or_init(|| self.search(Extremum::Min))
    }

    pub fn max_coherence(&self) -> &Result<ScaledCoherenceEstimate> {
        self.max_coherence.get_or_init(|| self.search(Extremum::Max))
    }

    fn search(&self, ext: Extremum) -> Result<ScaledCoherenceEstimate> {
        if !self.use_search {
            return not_searched();
        }
        match self.family() {
            Ok(f) => search_scaled_coherence(f, &self.instance.a1, ext, &self.config.search, self.tol()),
            Err(e) => cloned_err(e),
        }
    }

    pub fn rank_estimates(&self) -> &Result<ScaledRankEstimates> {
        self.rank_estimates.get_or_init(|| {
            if !self.use_search {
                return not_searched();
            }
            match self.family() {
                Ok(f) => search_scaled_rank_quantities(f, &self.instance.a1, &self.config.search, self.tol()),
                Err(e) => cloned_err(e),
            }
        })
    }

    /// Transforms `T` of every basis the searches ended on, identity first.
    fn evaluated_transforms(&self) -> Vec<DenseMatrix> {
        let Ok(f) = self.family() else { return Vec::new() };
        let mut out = vec![DenseMatrix::identity(f.q)];
        let mut push = |t: &DenseMatrix| {
            if !out.iter().any(|o| o == t) {
                out.push(t.clone());
            }
        };
        if let Ok(e) = self.min_coherence() {
            push(&e.best_transform);
        }
        if let Ok(e) = self.max_coherence() {
            push(&e.best_transform);
        }
        if let Ok(r) = self.rank_estimates() {
            push(&r.alpha_star.best_transform);
            push(&r.beta_star.best_transform);
            push(&r.mu2_star_star.best_transform);
        }
        out
    }
}

fn evaluable(inst: &Instance, cand: &CandidateSolution, tol: &ToleranceConfig) -> Option<String> {
    let thr = inst.feasibility_threshold(tol);
    (cand.residual > thr).then(|| format!("candidate residual {:.3e} exceeds {:.3e}", cand.residual, thr))
}

pub fn check_psi_zero_with(an: &Analysis<'_>, cand: &CandidateSolution) -> Certificate {
    let id = CertificateId::PsiZero;
    if let Some(why) = evaluable(an.instance, cand, an.tol()) {
        return Certificate::inapplicable(id, why);
    }
    let psi = match an.psi0() {
        Ok(p) => p,
        Err(e) => return Certificate::inapplicable(id, e.to_string()),
    };
    let Some(spark) = SparkKnowledge::from_result(an.spark_m()) else {
        return Certificate::inapplicable(id, "Spark(M) unavailable");
    };
    let threshold = 0.5 * spark.lower() / (1.0 + psi.closed_form);
    let mut c = Certificate::evaluated(
        id,
        threshold,
        cand,
        inputs([
            ("spark_m", num(spark.lower())),
            ("psi0", num(psi.closed_form)),
            ("psi0_extrapolated", num(psi.search_value)),
        ]),
    );
    c.note = spark.note();
    c
}

/// Emits `ScaledSpark` and `ScaledSparkStar`; the scaled spark does not
/// depend on the basis, so both carry the same threshold.
pub fn check_scaled_spark_with(an: &Analysis<'_>, cand: &CandidateSolution) -> [Certificate; 2] {
    let ids = [CertificateId::ScaledSpark, CertificateId::ScaledSparkStar];
    let one = |id: CertificateId| -> Certificate {
        if let Some(why) = evaluable(an.instance, cand, an.tol()) {
            return Certificate::inapplicable(id, why);
        }
        let knowledge = match an.scaled_spark() {
            Ok(r) => SparkKnowledge::Exact(r.value.value),
            Err(Error::BudgetExceeded { verified_k, .. }) => SparkKnowledge::AtLeast(verified_k + 1),
            Err(e) => return Certificate::inapplicable(id, e.to_string()),
        };
        let q = an.family().as_ref().map(|f| f.q).unwrap_or(0);
        let mut c = Certificate::evaluated(
            id,
            0.5 * knowledge.lower(),
            cand,
            inputs([("scaled_spark", num(knowledge.lower())), ("q", Value::from(q))]),
        );
        c.note = knowledge.note();
        c
    };
    ids.map(one)
}

fn coherence_threshold(mu: f64) -> f64 {
    if mu == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (1.0 + 1.0 / mu)
    }
}

/// `ScaledCoherencePerBasis` at `B0`, and `MinScaledCoherence` at the best
/// basis found by the minimizing search.
pub fn check_scaled_coherence_with(an: &Analysis<'_>, cand: &CandidateSolution) -> [Certificate; 2] {
    let per_basis = (|| {
        let id = CertificateId::ScaledCoherencePerBasis;
        if let Some(why) = evaluable(an.instance, cand, an.tol()) {
            return Certificate::inapplicable(id, why);
        }
        let p = match an.base_profile() {
            Ok(p) => p,
            Err(e) => return Certificate::inapplicable(id, e.to_string()),
        };
        if p.has_zero_columns() {
            return Certificate::inapplicable(id, "scaled matrix has zero columns");
        }
        Certificate::evaluated(id, coherence_threshold(p.mu), cand, inputs([("mu", num(p.mu))]))
    })();
    let min = (|| {
        let id = CertificateId::MinScaledCoherence;
        if let Some(why) = evaluable(an.instance, cand, an.tol()) {
            return Certificate::inapplicable(id, why);
        }
        let est = match an.min_coherence() {
            Ok(e) => e,
            Err(e) => return Certificate::inapplicable(id, e.to_string()),
        };
        if matches!(an.base_profile(), Ok(p) if p.has_zero_columns()) {
            return Certificate::inapplicable(id, "scaled matrix has zero columns");
        }
        let Some(mu) = est.value else {
            return Certificate::inapplicable(id, "no coherence value found");
        };
        let mut c = Certificate::evaluated(
            id,
            coherence_threshold(mu),
            cand,
            inputs([("mu_star", num(mu)), ("evaluations", Value::from(est.evaluations))]),
        );
        c.basis_used = Some(est.best_transform.clone());
        c
    })();
    [per_basis, min]
}

/// Refined bound maximized over `B0` and every basis the searches visited last.
pub fn check_brauer_scaled_with(an: &Analysis<'_>, cand: &CandidateSolution) -> Certificate {
    let id = CertificateId::BrauerPerBasis;
    if let Some(why) = evaluable(an.instance, cand, an.tol()) {
        return Certificate::inapplicable(id, why);
    }
    let family = match an.family() {
        Ok(f) => f,
        Err(e) => return Certificate::inapplicable(id, e.to_string()),
    };
    let mut best: Option<(f64, DenseMatrix, CoherenceProfile)> = None;
    let mut evaluated = 0usize;
    for t in an.evaluated_transforms() {
        let Ok(v) = scaled_matrix(family, &an.instance.a1, Some(&t)) else { continue };
        let Ok(p) = coherence_profile_with(&v, an.tol().eq_band, an.tol()) else { continue };
        evaluated += 1;
        let bound = brauer_lower_bound(&p);
        if bound.applicable && best.as_ref().map_or(true, |b| bound.value > b.0) {
            best = Some((bound.value, t, p));
        }
    }
    let Some((phi, t, p)) = best else {
        return Certificate::inapplicable(id, format!("rank conditions fail at all {evaluated} evaluated bases"));
    };
    let mut c = Certificate::evaluated(
        id,
        0.5 * phi,
        cand,
        inputs([
            ("phi", num(phi)),
            ("mu", num(p.mu)),
            ("mu2", num(p.mu2.unwrap_or(f64::NAN))),
            ("alpha", Value::from(p.alpha)),
            ("beta", Value::from(p.beta)),
            ("bases_evaluated", Value::from(evaluated)),
        ]),
    );
    if t != DenseMatrix::identity(family.q) {
        c.basis_used = Some(t);
    }
    c
}

/// Search estimates `(alpha*, beta*, mu**, mu2**)`; with search disabled they
/// collapse to the profile at `B0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarEstimates {
    pub alpha_star: usize,
    pub beta_star: usize,
    pub mu_star_star: f64,
    pub mu2_star_star: Option<f64>,
}

impl StarEstimates {
    pub fn from_analysis(an: &Analysis<'_>) -> Result<Self> {
        if an.use_search {
            let r = match an.rank_estimates() {
                Ok(r) => r,
                Err(e) => return cloned_err(e),
            };
            let mx = match an.max_coherence() {
                Ok(m) => m,
                Err(e) => return cloned_err(e),
            };
            Ok(Self {
                alpha_star: r.alpha_star.value.unwrap_or(0.0) as usize,
                beta_star: r.beta_star.value.unwrap_or(0.0) as usize,
                mu_star_star: mx.value.unwrap_or(f64::NAN),
                mu2_star_star: r.mu2_star_star.value,
            })
        } else {
            match an.base_profile() {
                Ok(p) => Ok(Self {
                    alpha_star: p.alpha,
                    beta_star: p.beta,
                    mu_star_star: p.mu,
                    mu2_star_star: p.mu2,
                }),
                Err(e) => cloned_err(e),
            }
        }
    }
}

pub fn check_phi_star(cand: &CandidateSolution, estimates: &StarEstimates) -> Certificate {
    let id = CertificateId::PhiStar;
    let Some(mu2) = estimates.mu2_star_star else {
        return Certificate::inapplicable(id, "mu2** absent");
    };
    match phi_star(estimates.alpha_star, estimates.beta_star, estimates.mu_star_star, mu2) {
        Ok(phi) => {
            let mut c = Certificate::evaluated(
                id,
                0.5 * phi,
                cand,
                inputs([
                    ("phi_star", num(phi)),
                    ("alpha_star", Value::from(estimates.alpha_star)),
                    ("beta_star", Value::from(estimates.beta_star)),
                    ("mu_star_star", num(estimates.mu_star_star)),
                    ("mu2_star_star", num(mu2)),
                ]),
            );
            c.note = Some("estimate, not a proof of uniqueness".into());
            c
        }
        Err(e) => Certificate::inapplicable(id, e.to_string()),
    }
}

fn check_phi_star_with(an: &Analysis<'_>, cand: &CandidateSolution) -> Certificate {
    if let Some(why) = evaluable(an.instance, cand, an.tol()) {
        return Certificate::inapplicable(CertificateId::PhiStar, why);
    }
    match StarEstimates::from_analysis(an) {
        Ok(est) => check_phi_star(cand, &est),
        Err(e) => Certificate::inapplicable(CertificateId::PhiStar, e.to_string()),
    }
}

pub fn check_psi_zero(inst: &Instance, cand: &CandidateSolution, cfg: &CertificateConfig) -> Certificate {
    check_psi_zero_with(&Analysis::new(inst, cfg, false), cand)
}

pub fn check_scaled_spark(inst: &Instance, cand: &CandidateSolution, cfg: &CertificateConfig) -> [Certificate; 2] {
    check_scaled_spark_with(&Analysis::new(inst, cfg, false), cand)
}

pub fn check_scaled_coherence(
    inst: &Instance,
    cand: &CandidateSolution,
    use_search: bool,
    cfg: &CertificateConfig,
) -> [Certificate; 2] {
    check_scaled_coherence_with(&Analysis::new(inst, cfg, use_search), cand)
}

pub fn check_brauer_scaled(
    inst: &Instance,
    cand: &CandidateSolution,
    use_search: bool,
    cfg: &CertificateConfig,
) -> Certificate {
    check_brauer_scaled_with(&Analysis::new(inst, cfg, use_search), cand)
}

/// Message attached whenever a matrix is exactly `[I_m, e]`.
pub fn identity_plus_ones_note(m: usize) -> String {
    format!(
        "[I_{m}, e]: with normalized columns mu = 1/sqrt({m}), so 1 + 1/mu = 1 + sqrt({m}) = {:.6}; \
         the value 2 sometimes quoted for this example uses unnormalized inner products and is \
         inconsistent with the normalized definition",
        1.0 + (m as f64).sqrt()
    )
}

pub fn instance_notes(inst: &Instance) -> Vec<String> {
    let mut notes = Vec::new();
    if let Some(m) = inst.a1.as_identity_plus_ones() {
        notes.push(format!("A1 is {}", identity_plus_ones_note(m)));
    }
    if let Some(m) = inst.combined().as_identity_plus_ones() {
        notes.push(format!("M is {}", identity_plus_ones_note(m)));
    }
    if inst.constraint == crate::oracle::Constraint::NonnegativeY {
        notes.push("certificates ignore the constraint on y; they hold for free y and hence for y >= 0".into());
    }
    notes
}

/// Evaluates every certificate on a shared [`Analysis`].
pub fn all_certificates(an: &Analysis<'_>, cand: &CandidateSolution) -> Vec<Certificate> {
    let mut out = vec![check_psi_zero_with(an, cand)];
    out.extend(check_scaled_spark_with(an, cand));
    out.extend(check_scaled_coherence_with(an, cand));
    out.push(check_brauer_scaled_with(an, cand));
    out.push(check_phi_star_with(an, cand));
    out
}

pub fn aggregate_report(inst: &Instance, cand: &CandidateSolution, certificates: Vec<Certificate>) -> VerdictReport {
    let mut certificates = certificates;
    certificates.sort_by_key(|c| c.id);
    let verdict = if certificates.iter().any(|c| c.applicable && c.holds && c.certified) {
        Verdict::UniqueCertified
    } else if certificates.iter().any(|c| c.applicable && c.holds) {
        Verdict::SuggestedUnique
    } else {
        Verdict::Unknown
    };
    VerdictReport {
        verdict,
        candidate: cand.clone(),
        certificates,
        notes: instance_notes(inst),
    }
}

/// Convenience: every certificate plus the verdict.
pub fn certify(inst: &Instance, cand: &CandidateSolution, cfg: &CertificateConfig, use_search: bool) -> VerdictReport {
    let an = Analysis::new(inst, cfg, use_search);
    aggregate_report(inst, cand, all_certificates(&an, cand))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Constraint;
    use approx::assert_abs_diff_eq;

    fn cfg() -> CertificateConfig {
        CertificateConfig::default()
    }

    fn ones(m: usize) -> DenseMatrix {
        DenseMatrix::column_vector(&vec![1.0; m]).unwrap()
    }

    fn worked() -> Instance {
        Instance::new(
            DenseMatrix::identity(3),
            ones(3),
            vec![1.0, 0.0, 0.0],
            Constraint::FreeY,
            None,
            &ToleranceConfig::default(),
        )
        .unwrap()
    }

    fn cand(inst: &Instance, x: Vec<f64>, y: Vec<f64>) -> CandidateSolution {
        CandidateSolution::new(inst, x, y, &ToleranceConfig::default()).unwrap()
    }

    fn find(r: &VerdictReport, id: CertificateId) -> &Certificate {
        r.certificates.iter().find(|c| c.id == id).unwrap()
    }

    #[test]
    fn psi_zero_threshold_on_worked_example() {
        let inst = worked();
        let c = check_psi_zero(&inst, &cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0]), &cfg());
        assert!(c.applicable && c.certified);
        assert_abs_diff_eq!(c.threshold, 1.0, epsilon = 1e-12);
        assert!(!c.holds);
        let zero = Instance::new(DenseMatrix::identity(3), ones(3), vec![2.0; 3], Constraint::FreeY, None, &cfg().tol)
            .unwrap();
        let c = check_psi_zero(&zero, &cand(&zero, vec![0.0; 3], vec![2.0]), &cfg());
        assert!(c.holds);
    }

    #[test]
    fn psi_zero_needs_full_column_rank() {
        let a2 = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let inst = Instance::new(DenseMatrix::identity(3), a2, vec![1.0, 0.0, 0.0], Constraint::FreeY, None, &cfg().tol)
            .unwrap();
        let c = check_psi_zero(&inst, &cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0, 0.0]), &cfg());
        assert!(!c.applicable && !c.holds);
    }

    #[test]
    fn scaled_spark_worked_example() {
        let inst = worked();
        let [s, star] = check_scaled_spark(&inst, &cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0]), &cfg());
        assert_eq!(s.threshold, 1.5);
        assert_eq!(star.threshold, 1.5);
        assert!(s.holds && s.certified);
        let two = cand(&inst, vec![0.0, -1.0, -1.0], vec![1.0]);
        let [s, _] = check_scaled_spark(&inst, &two, &cfg());
        assert!(!s.holds);
    }

    #[test]
    fn scaled_spark_reduces_to_classical_without_a2() {
        let a1 = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let inst = Instance::new(a1, DenseMatrix::zeros(2, 0), vec![1.0, 0.0], Constraint::FreeY, None, &cfg().tol)
            .unwrap();
        let [s, _] = check_scaled_spark(&inst, &cand(&inst, vec![1.0, 0.0, 0.0], vec![]), &cfg());
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn one_dimensional_null_space() {
        // q = 1: every scaled column is a multiple of the same scalar row
        let a2 = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let a1 = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![1.0, 1.0, 3.0]]).unwrap();
        let inst = Instance::new(a1, a2, vec![0.0, 0.0], Constraint::FreeY, None, &cfg().tol).unwrap();
        let [c, m] = check_scaled_coherence(&inst, &cand(&inst, vec![0.0; 3], vec![0.0]), true, &cfg());
        assert_abs_diff_eq!(c.threshold, 1.0, epsilon = 1e-12);
        assert!(c.holds);
        assert_abs_diff_eq!(m.threshold, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_star_examples() {
        let inst = worked();
        let x = cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0]);
        let est = StarEstimates {
            alpha_star: 1,
            beta_star: 1,
            mu_star_star: 0.5,
            mu2_star_star: Some(0.2),
        };
        let c = check_phi_star(&x, &est);
        assert_abs_diff_eq!(c.threshold, 2.25, epsilon = 1e-12);
        assert!(!c.certified && c.holds);
        let c = check_phi_star(&x, &StarEstimates { mu2_star_star: Some(0.0), ..est });
        assert!(!c.applicable);
    }

    #[test]
    fn worked_example_verdict() {
        let inst = worked();
        let r = certify(&inst, &cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0]), &cfg(), true);
        assert_eq!(r.verdict, Verdict::UniqueCertified);
        assert!(find(&r, CertificateId::ScaledSpark).holds);
        assert_eq!(r.certificates.len(), 7);
    }

    #[test]
    fn verdict_labels() {
        let inst = worked();
        let x = cand(&inst, vec![1.0, 0.0, 0.0], vec![0.0]);
        let phi = check_phi_star(
            &x,
            &StarEstimates {
                alpha_star: 1,
                beta_star: 1,
                mu_star_star: 0.5,
                mu2_star_star: Some(0.2),
            },
        );
        assert_eq!(aggregate_report(&inst, &x, vec![phi]).verdict, Verdict::SuggestedUnique);
        let none = Certificate::inapplicable(CertificateId::PsiZero, "x");
        assert_eq!(aggregate_report(&inst, &x, vec![none]).verdict, Verdict::Unknown);
    }

    #[test]
    fn infeasible_candidate_not_evaluable() {
        let inst = worked();
        let r = certify(&inst, &cand(&inst, vec![0.0, 1.0, 0.0], vec![0.0]), &cfg(), false);
        assert_eq!(r.verdict, Verdict::Unknown);
        assert!(r.certificates.iter().all(|c| !c.applicable));
    }

    #[test]
    fn search_never_lowers_certified_thresholds() {
        let a1 = DenseMatrix::from_rows(&[
            vec![1.0, 0.2, -0.4, 0.9, 0.3],
            vec![0.1, 1.0, 0.5, -0.2, 0.8],
            vec![-0.3, 0.4, 1.0, 0.6, -0.7],
            vec![0.5, -0.6, 0.2, 1.0, 0.1],
        ])
        .unwrap();
        let a2 = DenseMatrix::column_vector(&[1.0, 0.5, -0.5, 0.25]).unwrap();
        let inst = Instance::new(a1, a2, vec![1.0, 0.1, -0.3, 0.5], Constraint::FreeY, None, &cfg().tol).unwrap();
        let x = cand(&inst, vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0]);
        let off = certify(&inst, &x, &cfg(), false);
        let on = certify(&inst, &x, &cfg(), true);
        for (a, b) in off.certificates.iter().zip(&on.certificates) {
            if a.applicable && a.certified {
                assert!(b.applicable && b.threshold >= a.threshold, "{:?}", a.id);
            }
        }
        let per = find(&on, CertificateId::ScaledCoherencePerBasis).threshold;
        assert!(find(&on, CertificateId::MinScaledCoherence).threshold >= per);
    }

    #[test]
    fn identity_plus_ones_note_present() {
        let inst = worked();
        let notes = instance_notes(&inst);
        assert!(notes.iter().any(|n| n.starts_with("M is [I_3, e]")));
    }
}
