//! Instance generation, single-instance analysis and seeded ensembles.
//!
//! Every report is a [`ReportDocument`]. Wall-clock measurements live only
//! under `timings`, so two runs with the same seed produce identical JSON once
//! that key is removed. Trial `i` of an ensemble draws from
//! `seed ^ splitmix64(i)` and is independent of scheduling.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::certificates::{
    aggregate_report, all_certificates, num, Analysis, CandidateSolution, CertificateConfig, CertificateId,
    StarEstimates, Verdict, VerdictReport,
};
use crate::coherence::{coherence_profile_with, CoherenceProfile};
use crate::error::{Error, Result};
use crate::lp_norm::{l0_ratio_sup, psi_p, L0RatioConfig};
use crate::matrix::{least_squares, pseudo_inverse, DenseMatrix};
use crate::oracle::{nnls_vec, solve_exhaustive, Constraint, Instance, OracleResult, Planted, SupportSize, DEFAULT_K_MAX};
use crate::scaled::{phi_star, proposition_comparator, scaled_matrix, PropositionOutcome, ScaledCoherenceEstimate};
use crate::serde_ext::{ext_f64, ext_f64_opt};
use crate::spark::{brauer_lower_bound, de_lower_bound, spark_exact, SparkResult};
use crate::tolerance::{SearchConfig, ToleranceConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(seed: u64, trial_index: usize) -> u64 {
    seed ^ splitmix64(trial_index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    GaussianIid,
    /// `A1 = [I_m, e, G]` with `G` Gaussian; `n1 = m + 1` gives `[I_m, e]`.
    PartialIdentityPlusDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub k0: usize,
    pub trials: usize,
    pub seed: u64,
    pub distribution: Distribution,
    pub tolerances: ToleranceConfig,
    pub search: SearchConfig,
    pub constraint: Constraint,
    pub use_search: bool,
    pub oracle_k_max: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 6,
            n1: 10,
            n2: 2,
            k0: 2,
            trials: 20,
            seed: 42,
            distribution: Distribution::GaussianIid,
            tolerances: ToleranceConfig::default(),
            search: SearchConfig::default(),
            constraint: Constraint::FreeY,
            use_search: true,
            oracle_k_max: DEFAULT_K_MAX,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.n1 {
            return Err(Error::Dimension(format!("need 1 <= m <= n1, got m = {}, n1 = {}", self.m, self.n1)));
        }
        if self.k0 > self.n1 {
            return Err(Error::Dimension(format!("k0 = {} exceeds n1 = {}", self.k0, self.n1)));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn certificate_config(&self) -> CertificateConfig {
        CertificateConfig {
            tol: self.tolerances,
            search: self.search,
            ..CertificateConfig::default()
        }
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_row_slice(rows, cols, &data).expect("finite")
}

/// Deterministic in `(config.seed, trial_index)`.
pub fn generate_instance(config: &ExperimentConfig, trial_index: usize) -> Result<Instance> {
    config.validate()?;
    let (m, n1, n2) = (config.m, config.n1, config.n2);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, trial_index));
    let a1 = match config.distribution {
        Distribution::GaussianIid => gaussian(m, n1, &mut rng),
        Distribution::PartialIdentityPlusDense => {
            let mut cols: Vec<Vec<f64>> = (0..m)
                .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            if n1 > m {
                cols.push(vec![1.0; m]);
            }
            let rest = n1.saturating_sub(m + 1);
            let g = gaussian(m, rest, &mut rng);
            cols.extend((0..rest).map(|j| g.column(j)));
            DenseMatrix::from_columns(&cols)?
        }
    };
    let a2 = gaussian(m, n2, &mut rng);
    let mut x0 = vec![0.0; n1];
    for j in sample(&mut rng, n1, config.k0).into_vec() {
        let g: f64 = rng.sample(StandardNormal);
        x0[j] = g + 0.1f64.copysign(g);
    }
    let y0: Vec<f64> = (0..n2)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            match config.constraint {
                Constraint::FreeY => g,
                Constraint::NonnegativeY => g.abs(),
            }
        })
        .collect();
    let b: Vec<f64> = a1
        .mul_vec(&x0)?
        .iter()
        .zip(a2.mul_vec(&y0)?)
        .map(|(p, q)| p + q)
        .collect();
    Instance::new(
        a1,
        a2,
        b,
        config.constraint,
        Some(Planted { x: x0, y: y0 }),
        &config.tolerances,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparkSummary {
    /// Exact spark; `"inf"` when the columns are independent.
    #[serde(with = "ext_f64_opt")]
    pub value: Option<f64>,
    /// Certified lower bound when the subset budget ran out.
    pub at_least: Option<usize>,
    pub witness: Option<Vec<usize>>,
    pub subsets_examined: u64,
    pub witness_stable: bool,
}

impl SparkSummary {
    fn from_result(r: &Result<SparkResult>) -> Option<Self> {
        match r {
            Ok(s) => Some(Self {
                value: Some(s.value.as_f64()),
                at_least: None,
                witness: s.witness.clone(),
                subsets_examined: s.subsets_examined,
                witness_stable: s.witness_stable,
            }),
            Err(Error::BudgetExceeded { verified_k, examined, .. }) => Some(Self {
                value: None,
                at_least: Some(verified_k + 1),
                witness: None,
                subsets_examined: *examined,
                witness_stable: true,
            }),
            Err(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSummary {
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub applicable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixQuantities {
    pub rows: usize,
    pub cols: usize,
    pub mu: Option<f64>,
    #[serde(with = "ext_f64_opt")]
    pub mu2: Option<f64>,
    pub alpha: Option<usize>,
    pub beta: Option<usize>,
    pub zero_columns: Vec<usize>,
    pub spark: Option<SparkSummary>,
    pub coherence_bound: Option<BoundSummary>,
    pub brauer_bound: Option<BoundSummary>,
}

impl MatrixQuantities {
    fn compute(a: &DenseMatrix, spark: &Result<SparkResult>, tol: &ToleranceConfig) -> Self {
        let profile = coherence_profile_with(a, tol.eq_band, tol).ok();
        Self::assemble(a, profile.as_ref(), spark)
    }

    fn assemble(a: &DenseMatrix, profile: Option<&CoherenceProfile>, spark: &Result<SparkResult>) -> Self {
        let bound = |b: crate::spark::SparkBound| BoundSummary {
            value: b.value,
            applicable: b.applicable,
        };
        Self {
            rows: a.rows(),
            cols: a.cols(),
            mu: profile.map(|p| p.mu),
            mu2: profile.and_then(|p| p.mu2),
            alpha: profile.map(|p| p.alpha),
            beta: profile.map(|p| p.beta),
            zero_columns: profile.map(|p| p.zero_columns.clone()).unwrap_or_default(),
            spark: SparkSummary::from_result(spark),
            coherence_bound: profile.map(|p| bound(de_lower_bound(p))),
            brauer_bound: profile.map(|p| bound(brauer_lower_bound(p))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSummary {
    #[serde(with = "ext_f64_opt")]
    pub value: Option<f64>,
    pub certified: bool,
    pub evaluations: u64,
}

impl From<&ScaledCoherenceEstimate> for EstimateSummary {
    fn from(e: &ScaledCoherenceEstimate) -> Self {
        Self {
            value: e.value,
            certified: e.certified,
            evaluations: e.evaluations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledQuantities {
    pub q: usize,
    /// Quantities of `B0^T A1`; its spark is the scaled spark for every basis.
    pub reference_basis: MatrixQuantities,
    pub invariance_trials: usize,
    pub min_mu: Option<EstimateSummary>,
    pub max_mu: Option<EstimateSummary>,
    pub max_mu2: Option<EstimateSummary>,
    pub max_alpha: Option<EstimateSummary>,
    pub max_beta: Option<EstimateSummary>,
    /// Heuristic: built from lower estimates of suprema.
    #[serde(with = "ext_f64_opt")]
    pub phi_star: Option<f64>,
    pub proposition: Option<PropositionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpQuantities {
    pub psi0: f64,
    pub psi0_extrapolated: f64,
    pub psi0_agree: bool,
    /// Brute-force sup of `||Gz||_0 / ||z||_0` (small `n1` only).
    pub l0_ratio_sup: Option<f64>,
    pub psi_half_closed_form: f64,
    pub psi_half_search: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantities {
    pub a1: MatrixQuantities,
    pub m: MatrixQuantities,
    pub scaled: Option<ScaledQuantities>,
    /// Quantities of `A2^+ A1`; absent unless `A2` has full column rank.
    pub lp: Option<LpQuantities>,
    /// Why a section is missing.
    pub unavailable: BTreeMap<String, String>,
}

fn compute_quantities(an: &Analysis<'_>, tol: &ToleranceConfig) -> Quantities {
    let inst = an.instance;
    let budget = an.config.spark_budget;
    let mut unavailable = BTreeMap::new();
    let a1 = MatrixQuantities::compute(&inst.a1, &spark_exact(&inst.a1, budget, tol), tol);
    let m = MatrixQuantities::compute(&inst.combined(), an.spark_m(), tol);

    let scaled = match an.family() {
        Ok(family) => {
            let v = scaled_matrix(family, &inst.a1, None).expect("shapes agree");
            let spark = match an.scaled_spark() {
                Ok(s) => Ok(s.value.clone()),
                Err(Error::BudgetExceeded {
                    budget,
                    verified_k,
                    examined,
                }) => Err(Error::BudgetExceeded {
                    budget: *budget,
                    verified_k: *verified_k,
                    examined: *examined,
                }),
                Err(e) => {
                    unavailable.insert("scaled_spark".into(), e.to_string());
                    Err(Error::NotApplicable(e.to_string()))
                }
            };
            let reference_basis = MatrixQuantities::assemble(&v, an.base_profile().as_ref().ok(), &spark);
            let est = |r: &Result<ScaledCoherenceEstimate>| r.as_ref().ok().map(EstimateSummary::from);
            let ranks = an.rank_estimates().as_ref().ok();
            let stars = StarEstimates::from_analysis(an).ok();
            let phi = stars.and_then(|s| {
                phi_star(s.alpha_star, s.beta_star, s.mu_star_star, s.mu2_star_star?).ok()
            });
            let proposition = match (an.min_coherence(), stars) {
                (Ok(min), Some(s)) if s.alpha_star == 1 => match (min.value, s.mu2_star_star) {
                    (Some(mu_star), Some(mu2)) => Some(proposition_comparator(mu_star, s.mu_star_star, mu2)),
                    _ => None,
                },
                _ => None,
            };
            Some(ScaledQuantities {
                q: family.q,
                reference_basis,
                invariance_trials: an.config.invariance_trials,
                min_mu: est(an.min_coherence()),
                max_mu: est(an.max_coherence()),
                max_mu2: ranks.map(|r| EstimateSummary::from(&r.mu2_star_star)),
                max_alpha: ranks.map(|r| EstimateSummary::from(&r.alpha_star)),
                max_beta: ranks.map(|r| EstimateSummary::from(&r.beta_star)),
                phi_star: phi,
                proposition,
            })
        }
        Err(e) => {
            unavailable.insert("scaled".into(), e.to_string());
            None
        }
    };

    let lp = match an.psi0() {
        Ok(psi0) => {
            let g = pseudo_inverse(&inst.a2, tol)
                .and_then(|p| p.matmul(&inst.a1))
                .expect("psi0 succeeded on the same product");
            let ratio_cfg = L0RatioConfig {
                zero_tol: tol.zero,
                ..L0RatioConfig::default()
            };
            let half = psi_p(&g, 0.5).ok();
            Some(LpQuantities {
                psi0: psi0.closed_form,
                psi0_extrapolated: psi0.search_value,
                psi0_agree: psi0.agree,
                l0_ratio_sup: l0_ratio_sup(&g, &ratio_cfg).ok(),
                psi_half_closed_form: half.as_ref().map_or(0.0, |h| h.closed_form),
                psi_half_search: half.as_ref().map_or(0.0, |h| h.search_value),
            })
        }
        Err(e) => {
            unavailable.insert("lp".into(), e.to_string());
            None
        }
    };
    Quantities {
        a1,
        m,
        scaled,
        lp,
        unavailable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEcho {
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub constraint: Constraint,
    pub seed: Option<u64>,
    pub trial_index: Option<usize>,
}

impl InstanceEcho {
    fn of(inst: &Instance) -> Self {
        Self {
            m: inst.m(),
            n1: inst.n1(),
            n2: inst.n2(),
            constraint: inst.constraint,
            seed: None,
            trial_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Analyze,
    Solve,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub instance: Option<InstanceEcho>,
    pub quantities: Option<Quantities>,
    pub verdict: Option<VerdictReport>,
    pub oracle: Option<OracleResult>,
    /// Set when the oracle could not run (e.g. size caps).
    pub oracle_error: Option<String>,
    pub ensemble: Option<EnsembleSummary>,
    /// Wall-clock seconds; the only nondeterministic part of a report.
    pub timings: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ReportDocument {
    fn empty(kind: ReportKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            instance: None,
            quantities: None,
            verdict: None,
            oracle: None,
            oracle_error: None,
            ensemble: None,
            timings: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    /// 0 when something was evaluated, 2 when every certificate was inapplicable.
    pub fn exit_code(&self) -> i32 {
        match &self.verdict {
            Some(v) if v.certificates.iter().all(|c| !c.applicable) => 2,
            _ => 0,
        }
    }

    /// The JSON form with `timings` removed.
    pub fn deterministic_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub certificates: CertificateConfig,
    pub use_search: bool,
    pub run_oracle: bool,
    pub oracle_k_max: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            certificates: CertificateConfig::default(),
            use_search: true,
            run_oracle: true,
            oracle_k_max: DEFAULT_K_MAX,
        }
    }
}

/// A `y` completing `x`: least squares for free `y`, nonnegative least
/// squares otherwise.
pub fn complete_y(inst: &Instance, x: &[f64], tol: &ToleranceConfig) -> Result<Vec<f64>> {
    if inst.n2() == 0 {
        return Ok(Vec::new());
    }
    let r: Vec<f64> = inst.a1.mul_vec(x)?.iter().zip(&inst.b).map(|(p, b)| b - p).collect();
    match inst.constraint {
        Constraint::FreeY => Ok(least_squares(&inst.a2, &r, tol)?.0),
        Constraint::NonnegativeY => Ok(nnls_vec(&inst.a2, &r)),
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Quantities, certificates and (when small enough) the oracle for one
/// instance. Without an explicit candidate the planted solution is used,
/// then the oracle's first optimal x-part.
pub fn run_analyze(inst: &Instance, candidate: Option<CandidateSolution>, cfg: &AnalyzeConfig) -> Result<ReportDocument> {
    let tol = &cfg.certificates.tol;
    let mut doc = ReportDocument::empty(ReportKind::Analyze);
    doc.instance = Some(InstanceEcho::of(inst));

    let t = Instant::now();
    let oracle = cfg.run_oracle.then(|| solve_exhaustive(inst, cfg.oracle_k_max, tol));
    doc.timings.insert("oracle".into(), secs(t));
    let oracle = match oracle {
        Some(Ok(o)) => Some(o),
        Some(Err(e)) => {
            doc.oracle_error = Some(e.to_string());
            None
        }
        None => None,
    };

    let candidate = match candidate {
        Some(c) => Some(c),
        None => match (&inst.planted, &oracle) {
            (Some(p), _) => Some(CandidateSolution::new(inst, p.x.clone(), p.y.clone(), tol)?),
            (None, Some(o)) if !o.optimal_x_parts.is_empty() => {
                let x = o.optimal_x_parts[0].clone();
                let y = complete_y(inst, &x, tol)?;
                Some(CandidateSolution::new(inst, x, y, tol)?)
            }
            _ => None,
        },
    };

    let an = Analysis::new(inst, &cfg.certificates, cfg.use_search);
    let t = Instant::now();
    doc.quantities = Some(compute_quantities(&an, tol));
    doc.timings.insert("quantities".into(), secs(t));
    let t = Instant::now();
    match candidate {
        Some(c) => {
            let certs = all_certificates(&an, &c);
            let report = aggregate_report(inst, &c, certs);
            doc.notes.extend(report.notes.iter().cloned());
            doc.verdict = Some(report);
        }
        None => doc.notes.push("no candidate solution: certificates not evaluated".into()),
    }
    doc.timings.insert("certificates".into(), secs(t));
    if !cfg.use_search {
        doc.notes.push("searches over bases disabled; starred quantities use the reference basis".into());
    }
    doc.oracle = oracle;
    Ok(doc)
}

/// Oracle only.
pub fn run_solve(inst: &Instance, k_max: usize, tol: &ToleranceConfig) -> Result<ReportDocument> {
    let mut doc = ReportDocument::empty(ReportKind::Solve);
    doc.instance = Some(InstanceEcho::of(inst));
    let t = Instant::now();
    doc.oracle = Some(solve_exhaustive(inst, k_max, tol)?);
    doc.timings.insert("oracle".into(), secs(t));
    if inst.constraint == Constraint::NonnegativeY {
        doc.notes.push("nonnegative y: feasibility decided by a residual threshold (approximate)".into());
    }
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateOutcome {
    pub id: CertificateId,
    pub applicable: bool,
    pub holds: bool,
    pub threshold: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundGaps {
    /// `Spark(A) - (1 + 1/mu(A))`.
    pub coherence: Option<f64>,
    /// `Spark(A) - phi(A)` when the refined bound applies.
    pub brauer: Option<f64>,
}

fn gaps(q: &MatrixQuantities) -> BoundGaps {
    let spark = q.spark.as_ref().and_then(|s| s.value).filter(|v| v.is_finite());
    let gap = |b: &Option<BoundSummary>| match (spark, b) {
        (Some(s), Some(b)) if b.applicable && b.value.is_finite() => Some(s - b.value),
        _ => None,
    };
    BoundGaps {
        coherence: gap(&q.coherence_bound),
        brauer: gap(&q.brauer_bound),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub planted_support: Vec<usize>,
    pub verdict: Verdict,
    pub certificates: Vec<CertificateOutcome>,
    pub oracle_k_star: Option<usize>,
    pub oracle_unique: Option<bool>,
    pub oracle_error: Option<String>,
    /// Certified unique, but the oracle found another sparsest x-part.
    pub soundness_violation: bool,
    /// Certified unique, but the oracle could not confirm either way.
    pub unconfirmed: bool,
    pub a1_gaps: BoundGaps,
    pub scaled_gaps: BoundGaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanGaps {
    pub a1_coherence: Option<f64>,
    pub a1_brauer: Option<f64>,
    pub scaled_coherence: Option<f64>,
    pub scaled_brauer: Option<f64>,
    /// Trials where the refined bound applied to `A1`.
    pub a1_brauer_count: usize,
    /// Whether the refined gap never exceeded the coherence gap.
    pub brauer_never_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSummary {
    pub config: ExperimentConfig,
    pub trials: usize,
    /// Fraction of trials where each certificate held.
    pub fire_rates: BTreeMap<CertificateId, f64>,
    pub applicable_rates: BTreeMap<CertificateId, f64>,
    pub verdict_counts: BTreeMap<String, usize>,
    pub soundness_violations: usize,
    pub unconfirmed: usize,
    pub mean_gaps: MeanGaps,
    pub records: Vec<TrialRecord>,
}

fn same_x(a: &[f64], b: &[f64]) -> bool {
    let inf = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-8 * (1.0 + inf))
}

fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<(TrialRecord, f64)> {
    let start = Instant::now();
    let tol = &config.tolerances;
    let inst = generate_instance(config, trial)?;
    let planted = inst.planted.clone().expect("generated instances are planted");
    let cand = CandidateSolution::new(&inst, planted.x.clone(), planted.y.clone(), tol)?;
    let cert_cfg = CertificateConfig {
        search: SearchConfig {
            seed: trial_seed(config.search.seed, trial),
            ..config.search
        },
        ..config.certificate_config()
    };
    let an = Analysis::new(&inst, &cert_cfg, config.use_search);
    let report = aggregate_report(&inst, &cand, all_certificates(&an, &cand));

    let oracle = solve_exhaustive(&inst, config.oracle_k_max, tol);
    let (k_star, unique, oracle_error) = match &oracle {
        Ok(o) => (
            match o.k_star {
                SupportSize::Size(k) => Some(k),
                SupportSize::Infeasible => None,
            },
            Some(o.unique_x_part),
            None,
        ),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let certified = report.verdict == Verdict::UniqueCertified;
    let confirmed = match &oracle {
        Ok(o) => Some(o.unique_x_part && same_x(&o.optimal_x_parts[0], &planted.x)),
        Err(_) => None,
    };
    let a1_q = MatrixQuantities::compute(&inst.a1, &spark_exact(&inst.a1, cert_cfg.spark_budget, tol), tol);
    let scaled_gaps = match an.family() {
        Ok(f) => {
            let v = scaled_matrix(f, &inst.a1, None)?;
            gaps(&MatrixQuantities::compute(&v, &spark_exact(&v, cert_cfg.spark_budget, tol), tol))
        }
        Err(_) => BoundGaps {
            coherence: None,
            brauer: None,
        },
    };
    let record = TrialRecord {
        trial,
        seed: trial_seed(config.seed, trial),
        planted_support: (0..inst.n1()).filter(|&j| planted.x[j] != 0.0).collect(),
        verdict: report.verdict,
        certificates: report
            .certificates
            .iter()
            .map(|c| CertificateOutcome {
                id: c.id,
                applicable: c.applicable,
                holds: c.holds,
                threshold: num(c.threshold),
            })
            .collect(),
        oracle_k_star: k_star,
        oracle_unique: unique,
        oracle_error,
        soundness_violation: certified && confirmed == Some(false),
        unconfirmed: certified && confirmed.is_none(),
        a1_gaps: gaps(&a1_q),
        scaled_gaps,
    };
    Ok((record, secs(start)))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1);
    sorted[idx]
}

pub fn run_ensemble(config: &ExperimentConfig) -> Result<ReportDocument> {
    config.validate()?;
    let start = Instant::now();
    let results = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect::<Result<Vec<_>>>()?;
    let (records, mut times): (Vec<TrialRecord>, Vec<f64>) = results.into_iter().unzip();
    let n = records.len() as f64;

    let mut fire_rates = BTreeMap::new();
    let mut applicable_rates = BTreeMap::new();
    for id in CertificateId::ALL {
        let of = |pred: &dyn Fn(&CertificateOutcome) -> bool| {
            records
                .iter()
                .filter(|r| r.certificates.iter().any(|c| c.id == id && pred(c)))
                .count() as f64
                / n
        };
        fire_rates.insert(id, of(&|c| c.applicable && c.holds));
        applicable_rates.insert(id, of(&|c| c.applicable));
    }
    let mut verdict_counts = BTreeMap::new();
    for r in &records {
        let key = serde_json::to_value(r.verdict)?.as_str().unwrap_or_default().to_string();
        *verdict_counts.entry(key).or_insert(0) += 1;
    }
    let mean_gaps = MeanGaps {
        a1_coherence: mean(records.iter().filter_map(|r| r.a1_gaps.coherence)),
        a1_brauer: mean(records.iter().filter_map(|r| r.a1_gaps.brauer)),
        scaled_coherence: mean(records.iter().filter_map(|r| r.scaled_gaps.coherence)),
        scaled_brauer: mean(records.iter().filter_map(|r| r.scaled_gaps.brauer)),
        a1_brauer_count: records.iter().filter(|r| r.a1_gaps.brauer.is_some()).count(),
        brauer_never_worse: records.iter().all(|r| {
            [&r.a1_gaps, &r.scaled_gaps].iter().all(|g| match (g.brauer, g.coherence) {
                (Some(b), Some(c)) => b <= c,
                _ => true,
            })
        }),
    };
    let summary = EnsembleSummary {
        config: config.clone(),
        trials: records.len(),
        fire_rates,
        applicable_rates,
        verdict_counts,
        soundness_violations: records.iter().filter(|r| r.soundness_violation).count(),
        unconfirmed: records.iter().filter(|r| r.unconfirmed).count(),
        mean_gaps,
        records,
    };

    let mut doc = ReportDocument::empty(ReportKind::Ensemble);
    times.sort_by(f64::total_cmp);
    doc.timings.insert("total".into(), secs(start));
    doc.timings.insert("trial_p50".into(), percentile(&times, 0.5));
    doc.timings.insert("trial_p90".into(), percentile(&times, 0.9));
    doc.timings.insert("trial_max".into(), percentile(&times, 1.0));
    if config.constraint == Constraint::NonnegativeY {
        doc.notes.push("nonnegative y: oracle feasibility is approximate".into());
    }
    if config.distribution == Distribution::PartialIdentityPlusDense && config.n1 == config.m + 1 {
        doc.notes.push(format!(
            "A1 is {}",
            crate::certificates::identity_plus_ones_note(config.m)
        ));
    }
    doc.ensemble = Some(summary);
    Ok(doc)
}

pub const CSV_HEADER: &str = "trial,seed,planted_support_size,verdict,oracle_k_star,oracle_unique,\
soundness_violation,unconfirmed,a1_gap_coherence,a1_gap_brauer,scaled_gap_coherence,scaled_gap_brauer";

/// One row per trial, then per-certificate `holds` columns in id order.
pub fn ensemble_csv(summary: &EnsembleSummary) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let ids: Vec<String> = CertificateId::ALL
        .iter()
        .map(|id| serde_json::to_value(id).expect("unit variant").as_str().unwrap_or_default().to_string())
        .collect();
    let mut out = String::from(CSV_HEADER);
    for id in &ids {
        out.push_str(&format!(",{id}_holds"));
    }
    out.push('\n');
    for r in &summary.records {
        let verdict = serde_json::to_value(r.verdict).expect("unit variant");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.planted_support.len(),
            verdict.as_str().unwrap_or_default(),
            r.oracle_k_star.map(|k| k.to_string()).unwrap_or_default(),
            r.oracle_unique.map(|k| k.to_string()).unwrap_or_default(),
            r.soundness_violation,
            r.unconfirmed,
            opt(r.a1_gaps.coherence),
            opt(r.a1_gaps.brauer),
            opt(r.scaled_gaps.coherence),
            opt(r.scaled_gaps.brauer),
        ));
        for id in CertificateId::ALL {
            let holds = r.certificates.iter().any(|c| c.id == id && c.applicable && c.holds);
            out.push_str(&format!(",{holds}"));
        }
        out.push('\n');
    }
    out
}
