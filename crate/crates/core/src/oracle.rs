//! Exhaustive ground truth for `min ||x||_0 s.t. A1 x + A2 y = b, y in C`.
//!
//! Supports of `x` are scanned by increasing size. For a support `S`, the
//! instance is feasible when `b` lies in the range of `[A1_S, A2]` (free `y`),
//! or when the nonnegative least-squares residual vanishes (`y >= 0`). The
//! first size with a feasible support is the optimum. The `x` part on `S` is
//! unique exactly when no null vector of `[A1_S, A2]` has a nonzero `x`
//! component, i.e. `rank [A1_S, A2] = |S| + rank A2`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::CandidateSolution;
use crate::error::{Error, Result};
use crate::matrix::{least_squares, rank, singular_values, DenseMatrix};
use crate::tolerance::ToleranceConfig;

pub const DEFAULT_MAX_N1: usize = 20;
pub const DEFAULT_K_MAX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    FreeY,
    NonnegativeY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Planted {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub a1: DenseMatrix,
    pub a2: DenseMatrix,
    pub b: Vec<f64>,
    pub constraint: Constraint,
    pub planted: Option<Planted>,
}

impl Instance {
    pub fn new(
        a1: DenseMatrix,
        a2: DenseMatrix,
        b: Vec<f64>,
        constraint: Constraint,
        planted: Option<Planted>,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let m = a1.rows();
        if m == 0 || a1.cols() == 0 {
            return Err(Error::Dimension("A1 must be nonempty".into()));
        }
        if a2.rows() != m || b.len() != m {
            return Err(Error::Dimension(format!(
                "A1 has {m} rows but A2 has {} and b has {}",
                a2.rows(),
                b.len()
            )));
        }
        if m > a1.cols() {
            return Err(Error::Dimension(format!(
                "expected m <= n1, got m = {m}, n1 = {}",
                a1.cols()
            )));
        }
        let inst = Self {
            a1,
            a2,
            b,
            constraint,
            planted: None,
        };
        if let Some(p) = planted {
            let cand = CandidateSolution::new(&inst, p.x.clone(), p.y.clone(), tol)?;
            let report = verify_candidate(&inst, &cand, tol);
            if !report.ok {
                return Err(Error::Domain(format!(
                    "planted solution is not feasible: {}",
                    report.diagnostics.join("; ")
                )));
            }
            return Ok(Self {
                planted: Some(p),
                ..inst
            });
        }
        Ok(inst)
    }

    pub fn m(&self) -> usize {
        self.a1.rows()
    }

    pub fn n1(&self) -> usize {
        self.a1.cols()
    }

    pub fn n2(&self) -> usize {
        self.a2.cols()
    }

    /// `M = [A1, A2]`.
    pub fn combined(&self) -> DenseMatrix {
        self.a1.hstack(&self.a2).expect("row counts checked")
    }

    pub fn feasibility_threshold(&self, tol: &ToleranceConfig) -> f64 {
        let bn = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        tol.feasibility * (1.0 + bn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportSize {
    Size(usize),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub k_star: SupportSize,
    /// Distinct optimal x parts (one per feasible optimal support unless duplicated).
    pub optimal_x_parts: Vec<Vec<f64>>,
    pub optimal_supports: Vec<Vec<usize>>,
    /// Some optimal support admits a continuum of x parts.
    pub infinite_family: bool,
    pub unique_x_part: bool,
    pub supports_checked: u64,
    /// Nonnegative-y feasibility is decided by a residual threshold.
    pub approximate: bool,
}

struct SupportOutcome {
    x: Vec<f64>,
    infinite: bool,
}

struct Solver<'a> {
    inst: &'a Instance,
    tol: &'a ToleranceConfig,
    threshold: f64,
    rank_a2: usize,
    tau: f64,
}

impl Solver<'_> {
    fn try_support(&self, support: &[usize]) -> Result<Option<SupportOutcome>> {
        let k = support.len();
        let n1 = self.inst.n1();
        let a1s = self.inst.a1.select_columns(support);
        let c = a1s.hstack(&self.inst.a2)?;
        if c.cols() == 0 {
            let bn = self.inst.b.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Ok((bn <= self.threshold).then(|| SupportOutcome {
                x: vec![0.0; n1],
                infinite: false,
            }));
        }
        let (xs, resid) = match self.inst.constraint {
            Constraint::FreeY => {
                let (w, r) = least_squares(&c, &self.inst.b, self.tol)?;
                (w[..k].to_vec(), r)
            }
            Constraint::NonnegativeY => nonneg_feasibility(&a1s, &self.inst.a2, &self.inst.b, self.tol)?,
        };
        if resid > self.threshold {
            return Ok(None);
        }
        let rank_c = singular_values(&c).iter().filter(|&&s| s > self.tau).count();
        let infinite = rank_c < k + self.rank_a2;
        let mut x = vec![0.0; n1];
        for (&j, v) in support.iter().zip(xs) {
            x[j] = v;
        }
        Ok(Some(SupportOutcome { x, infinite }))
    }
}

/// Least squares over `u` free and `v >= 0` for `A1s u + A2 v ~ b`.
/// Returns `(u, residual)`.
fn nonneg_feasibility(
    a1s: &DenseMatrix,
    a2: &DenseMatrix,
    b: &[f64],
    tol: &ToleranceConfig,
) -> Result<(Vec<f64>, f64)> {
    let m = b.len();
    // project onto the orthogonal complement of range(A1s)
    let project = |x: &DMatrix<f64>| -> DMatrix<f64> {
        if a1s.cols() == 0 {
            return x.clone();
        }
        let svd = a1s.as_dmatrix().clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tau = tol.rank_threshold(a1s.rows(), a1s.cols(), smax);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tau)
            .collect();
        let q = u.select_columns(&keep);
        x - &q * (q.transpose() * x)
    };
    let bm = DMatrix::from_column_slice(m, 1, b);
    let v = if a2.cols() == 0 {
        DVector::zeros(0)
    } else {
        let pa2 = project(a2.as_dmatrix());
        let pb = project(&bm);
        nnls(&pa2, &pb.column(0).into_owned())
    };
    let rhs: Vec<f64> = (DVector::from_column_slice(b) - a2.as_dmatrix() * &v).iter().copied().collect();
    if a1s.cols() == 0 {
        let r = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        return Ok((Vec::new(), r));
    }
    least_squares(a1s, &rhs, tol)
}

/// Lawson-Hanson active-set nonnegative least squares.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.norm() * b.norm();
    let eps = 1e-12 * scale.max(1e-300);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let ap = a.select_columns(&idx);
        let sol = ap
            .svd(true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = sol[k];
        }
        z
    };
    for _ in 0..3 * n + 3 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > eps)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        // each pass drops at least one index, so n + 1 passes suffice
        for _ in 0..=n {
            if !passive.contains(&true) {
                break;
            }
            let z = solve_passive(&passive);
            let blocking: Vec<usize> = (0..n).filter(|&i| passive[i] && z[i] <= 0.0).collect();
            if blocking.is_empty() {
                x = z;
                break;
            }
            // largest step from x toward z that keeps x >= 0
            let (step, hit) = blocking
                .iter()
                .map(|&i| {
                    let d = x[i] - z[i];
                    (if d > 0.0 { x[i] / d } else { 0.0 }, i)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty");
            x += (&z - &x) * step;
            passive[hit] = false;
            x[hit] = 0.0;
            for i in 0..n {
                if passive[i] && x[i] <= 0.0 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
        x.apply(|v| *v = v.max(0.0));
    }
    x
}

/// Nonnegative least squares `min ||A v - b||` over `v >= 0`.
pub fn nnls_vec(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    nnls(a.as_dmatrix(), &DVector::from_column_slice(b)).iter().copied().collect()
}

fn same_x(a: &[f64], b: &[f64]) -> bool {
    let inf = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-8 * (1.0 + inf))
}

pub fn solve_exhaustive(inst: &Instance, k_max: usize, tol: &ToleranceConfig) -> Result<OracleResult> {
    let n1 = inst.n1();
    if n1 > DEFAULT_MAX_N1 {
        return Err(Error::CapExceeded(format!(
            "n1 = {n1} exceeds the exhaustive limit of {DEFAULT_MAX_N1}"
        )));
    }
    let m_full = inst.combined();
    let smax = singular_values(&m_full).first().copied().unwrap_or(0.0);
    let tau = tol.rank_threshold(m_full.rows(), m_full.cols(), smax);
    let rank_a2 = if inst.n2() == 0 {
        0
    } else {
        singular_values(&inst.a2).iter().filter(|&&s| s > tau).count()
    };
    let solver = Solver {
        inst,
        tol,
        threshold: inst.feasibility_threshold(tol),
        rank_a2,
        tau,
    };
    let approximate = inst.constraint == Constraint::NonnegativeY;

    let all: Vec<usize> = (0..n1).collect();
    if solver.try_support(&all)?.is_none() {
        return Ok(OracleResult {
            k_star: SupportSize::Infeasible,
            optimal_x_parts: Vec::new(),
            optimal_supports: Vec::new(),
            infinite_family: false,
            unique_x_part: false,
            supports_checked: 1,
            approximate,
        });
    }

    let mut checked = 1u64;
    for k in 0..=k_max.min(n1) {
        let supports: Vec<Vec<usize>> = (0..n1).combinations(k).collect();
        checked += supports.len() as u64;
        let outcomes = supports
            .par_iter()
            .map(|s| solver.try_support(s))
            .collect::<Result<Vec<_>>>()?;
        let feasible: Vec<(Vec<usize>, SupportOutcome)> = supports
            .into_iter()
            .zip(outcomes)
            .filter_map(|(s, o)| o.map(|o| (s, o)))
            .collect();
        if feasible.is_empty() {
            continue;
        }
        let infinite_family = feasible.iter().any(|(_, o)| o.infinite);
        let mut parts: Vec<Vec<f64>> = Vec::new();
        for (_, o) in &feasible {
            if !parts.iter().any(|p| same_x(p, &o.x)) {
                parts.push(o.x.clone());
            }
        }
        let unique_x_part = parts.len() == 1 && !infinite_family;
        return Ok(OracleResult {
            k_star: SupportSize::Size(k),
            optimal_x_parts: parts,
            optimal_supports: feasible.into_iter().map(|(s, _)| s).collect(),
            infinite_family,
            unique_x_part,
            supports_checked: checked,
            approximate,
        });
    }
    Err(Error::CapExceeded(format!(
        "no solution with ||x||_0 <= {k_max}"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub residual: f64,
    pub residual_threshold: f64,
    pub constraint_ok: bool,
    pub support_size: usize,
    pub diagnostics: Vec<String>,
}

pub fn verify_candidate(inst: &Instance, cand: &CandidateSolution, tol: &ToleranceConfig) -> VerifyReport {
    let mut diagnostics = Vec::new();
    let threshold = inst.feasibility_threshold(tol);
    let mut ok = true;
    if cand.x.len() != inst.n1() || cand.y.len() != inst.n2() {
        diagnostics.push(format!(
            "shape: x has {} entries (want {}), y has {} (want {})",
            cand.x.len(),
            inst.n1(),
            cand.y.len(),
            inst.n2()
        ));
        ok = false;
    }
    if cand.residual > threshold {
        diagnostics.push(format!(
            "residual {:.3e} exceeds {:.3e}",
            cand.residual, threshold
        ));
        ok = false;
    }
    let constraint_ok = match inst.constraint {
        Constraint::FreeY => true,
        Constraint::NonnegativeY => cand.y.iter().all(|&v| v >= -tol.zero),
    };
    if !constraint_ok {
        diagnostics.push("constraint: y has negative entries".into());
        ok = false;
    }
    VerifyReport {
        ok,
        residual: cand.residual,
        residual_threshold: threshold,
        constraint_ok,
        support_size: cand.x_support_size,
        diagnostics,
    }
}

/// Rank of `A2`, used to decide whether `A2^T A2` is invertible.
pub fn a2_full_column_rank(inst: &Instance, tol: &ToleranceConfig) -> bool {
    inst.n2() > 0 && rank(&inst.a2, tol).map_or(false, |r| r.rank == inst.n2())
}
