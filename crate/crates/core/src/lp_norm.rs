//! The l_p-induced norm `psi_p(A) = sup_{z != 0} ||Az||_p^p / ||z||_p^p`
//! for `0 < p < 1`, and its limit as `p -> 0`.
//!
//! # Closed form
//!
//! For `p < 1` the map `t -> |t|^p` is subadditive, so
//!
//! ```text
//! ||Az||_p^p = sum_i |sum_j a_ij z_j|^p
//!           <= sum_j |z_j|^p sum_i |a_ij|^p
//!           <= (max_j ||a_j||_p^p) ||z||_p^p
//! ```
//!
//! and `z = e_j` at the maximizing column attains the bound. Hence
//! `psi_p(A) = max_j ||a_j||_p^p`, and letting `p -> 0` gives
//! `psi_0(A) = max_j ||a_j||_0`, the largest column support.
//!
//! The closed form is always cross-checked against a derivative-free
//! multistart search over the unit quasi-sphere `||z||_p^p = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const DEFAULT_P_SEQUENCE: [f64; 5] = [0.5, 0.25, 0.1, 0.05, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpSearchConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Relative agreement required between search and closed form.
    pub agree_rel: f64,
}

impl Default for LpSearchConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            max_iters: 200,
            seed: 0x1_0b5e,
            agree_rel: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpNormResult {
    /// `0` for the limit `psi_0`.
    pub p: f64,
    pub closed_form: f64,
    pub search_value: f64,
    pub agree: bool,
    pub argmax_column: usize,
    /// `(p, psi_p)` along the sequence used for the `p -> 0` limit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sequence: Vec<(f64, f64)>,
}

fn require_nonzero(a: &DenseMatrix) -> Result<()> {
    if a.is_empty() || a.row_major().iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("psi is defined for nonzero matrices".into()));
    }
    Ok(())
}

/// `(max_j sum_i |a_ij|^p, argmax)`, smallest index on ties.
pub fn max_column_quasinorm(a: &DenseMatrix, p: f64) -> (f64, usize) {
    (0..a.cols())
        .map(|j| (a.column(j).iter().map(|v| v.abs().powf(p)).sum::<f64>(), j))
        .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

pub fn psi_p(a: &DenseMatrix, p: f64) -> Result<LpNormResult> {
    psi_p_with(a, p, &LpSearchConfig::default())
}

pub fn psi_p_with(a: &DenseMatrix, p: f64, cfg: &LpSearchConfig) -> Result<LpNormResult> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("p = {p} is outside (0, 1)")));
    }
    require_nonzero(a)?;
    let (closed_form, argmax_column) = max_column_quasinorm(a, p);
    let search_value = ascent_search(a, p, cfg);
    let agree = (closed_form - search_value).abs() <= cfg.agree_rel * closed_form;
    Ok(LpNormResult {
        p,
        closed_form,
        search_value,
        agree,
        argmax_column,
        sequence: Vec::new(),
    })
}

/// `||A z||_p^p` for `z_j = s_j w_j^{1/p}`, which has `||z||_p^p = sum w`.
fn ratio_on_simplex(a: &DenseMatrix, p: f64, w: &[f64], signs: &[f64]) -> f64 {
    let z: Vec<f64> = w
        .iter()
        .zip(signs)
        .map(|(&wj, &s)| s * wj.max(0.0).powf(1.0 / p))
        .collect();
    let mass: f64 = w.iter().sum();
    let az = a.mul_vec(&z).expect("shape checked");
    az.iter().map(|v| v.abs().powf(p)).sum::<f64>() / mass
}

/// Pattern search over `w` on the probability simplex and the sign vector.
///
/// Gradients in `w` vanish on every face of the simplex (`d z_j / d w_j` is
/// zero at `w_j = 0` since `1/p > 1`), so moves are mass transfers
/// `w <- (1 - t) w + t e_j`, optionally flipping `s_j`, with `t` halved
/// whenever no move improves.
fn ascent_search(a: &DenseMatrix, p: f64, cfg: &LpSearchConfig) -> f64 {
    let n = a.cols();
    let runs: Vec<f64> = (0..cfg.n_starts.max(1))
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut w: Vec<f64> = if start == 0 {
                vec![1.0 / n as f64; n]
            } else {
                let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            };
            let mut signs: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let mut best = ratio_on_simplex(a, p, &w, &signs);
            let mut t = 0.5;
            for _ in 0..cfg.max_iters {
                let mut improved: Option<(f64, Vec<f64>, Vec<f64>)> = None;
                for j in 0..n {
                    let moved: Vec<f64> = w
                        .iter()
                        .enumerate()
                        .map(|(k, &wk)| (1.0 - t) * wk + if k == j { t } else { 0.0 })
                        .collect();
                    for flip in [false, true] {
                        let mut s = signs.clone();
                        if flip {
                            s[j] = -s[j];
                        }
                        let v = ratio_on_simplex(a, p, &moved, &s);
                        if v > improved.as_ref().map_or(best, |c| c.0) {
                            improved = Some((v, moved.clone(), s));
                        }
                    }
                }
                match improved {
                    Some((v, nw, ns)) if v > best * (1.0 + 1e-15) => {
                        best = v;
                        w = nw;
                        signs = ns;
                    }
                    _ => {
                        t *= 0.5;
                        if t < 1e-4 {
                            break;
                        }
                    }
                }
            }
            best
        })
        .collect();
    runs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `psi_0(A) = max_j ||a_j||_0`, with `psi_p` evaluated along `p_sequence`
/// and extrapolated to `p = 0` as a consistency check.
pub fn psi_zero(a: &DenseMatrix, p_sequence: &[f64], zero_tol: f64) -> Result<LpNormResult> {
    require_nonzero(a)?;
    if p_sequence.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Domain("p sequence must lie in (0, 1)".into()));
    }
    if p_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("p sequence must be strictly decreasing".into()));
    }
    let (closed_form, argmax_column) = (0..a.cols())
        .map(|j| (a.column(j).iter().filter(|v| v.abs() > zero_tol).count(), j))
        .fold((0usize, 0usize), |best, cur| if cur.0 > best.0 { cur } else { best });
    let closed_form = closed_form as f64;
    let sequence: Vec<(f64, f64)> = p_sequence
        .iter()
        .map(|&p| (p, max_column_quasinorm(a, p).0))
        .collect();
    let extrapolated = extrapolate_to_zero(&sequence);
    let agree = (extrapolated - closed_form).abs() <= 0.5;
    Ok(LpNormResult {
        p: 0.0,
        closed_form,
        search_value: extrapolated,
        agree,
        argmax_column,
        sequence,
    })
}

/// Polynomial (Richardson) extrapolation to `p = 0` through the last three
/// points, or fewer when the sequence is shorter.
fn extrapolate_to_zero(seq: &[(f64, f64)]) -> f64 {
    let pts = &seq[seq.len().saturating_sub(3)..];
    match pts.len() {
        0 => f64::NAN,
        1 => pts[0].1,
        _ => pts
            .iter()
            .enumerate()
            .map(|(i, &(pi, vi))| {
                let weight: f64 = pts
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, &(pk, _))| pk / (pk - pi))
                    .product();
                vi * weight
            })
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L0RatioConfig {
    pub n_cap: usize,
    pub draws: usize,
    pub seed: u64,
    pub zero_tol: f64,
}

impl Default for L0RatioConfig {
    fn default() -> Self {
        Self {
            n_cap: 12,
            draws: 3,
            seed: 0x10_7a,
            zero_tol: 1e-9,
        }
    }
}

/// Brute-force `sup ||Az||_0 / ||z||_0` over every support and a few random
/// coefficient draws per support.
pub fn l0_ratio_sup(a: &DenseMatrix, cfg: &L0RatioConfig) -> Result<f64> {
    let n = a.cols();
    if n > cfg.n_cap {
        return Err(Error::CapExceeded(format!(
            "{n} columns exceed the brute-force cap of {}",
            cfg.n_cap
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let amax = a.row_major().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let best = (1u32..(1u32 << n))
        .into_par_iter()
        .map(|mask| {
            let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ u64::from(mask));
            (0..cfg.draws.max(1))
                .map(|_| {
                    let mut z = vec![0.0; n];
                    for &j in &support {
                        let mag: f64 = rng.gen_range(0.5..2.0);
                        z[j] = if rng.gen::<bool>() { mag } else { -mag };
                    }
                    let zsum: f64 = z.iter().map(|v| v.abs()).sum();
                    let thr = cfg.zero_tol * (amax * zsum).max(1.0);
                    let az = a.mul_vec(&z).expect("shape checked");
                    az.iter().filter(|v| v.abs() > thr).count() as f64 / support.len() as f64
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn upper_tri() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap()
    }

    #[test]
    fn psi_half_closed_form() {
        let r = psi_p(&upper_tri(), 0.5).unwrap();
        assert_abs_diff_eq!(r.closed_form, 2f64.sqrt() + 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(r.argmax_column, 1);
        assert!(r.agree, "{r:?}");
        assert!(r.search_value <= r.closed_form + 1e-9);
    }

    #[test]
    fn psi_identity_and_scaling() {
        for p in [0.2, 0.5, 0.9] {
            let r = psi_p(&DenseMatrix::identity(4), p).unwrap();
            assert_abs_diff_eq!(r.closed_form, 1.0, epsilon = 1e-15);
            let r = psi_p(&DenseMatrix::identity(3).scale(2.5), p).unwrap();
            assert_abs_diff_eq!(r.closed_form, 2.5f64.powf(p), epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_domain_errors() {
        assert!(matches!(psi_p(&upper_tri(), 1.0), Err(Error::Domain(_))));
        assert!(matches!(psi_p(&upper_tri(), 0.0), Err(Error::Domain(_))));
        assert!(matches!(psi_p(&DenseMatrix::zeros(2, 2), 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn psi_zero_examples() {
        let r = psi_zero(&upper_tri(), &DEFAULT_P_SEQUENCE, 1e-9).unwrap();
        assert_eq!(r.closed_form, 2.0);
        assert!(r.agree);
        let r = psi_zero(&DenseMatrix::identity(3), &DEFAULT_P_SEQUENCE, 1e-9).unwrap();
        assert_eq!(r.closed_form, 1.0);
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, -2.0], vec![0.0, 0.5]]).unwrap();
        let r = psi_zero(&a, &DEFAULT_P_SEQUENCE, 1e-9).unwrap();
        assert_eq!(r.closed_form, 3.0);
        assert_eq!(r.argmax_column, 1);
    }

    #[test]
    fn l0_ratio_examples() {
        let cfg = L0RatioConfig::default();
        assert_eq!(l0_ratio_sup(&DenseMatrix::identity(3), &cfg).unwrap(), 1.0);
        assert_eq!(l0_ratio_sup(&upper_tri(), &cfg).unwrap(), 2.0);
        let e = DenseMatrix::column_vector(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(l0_ratio_sup(&e, &cfg).unwrap(), 3.0);
        let wide = DenseMatrix::zeros(1, 13);
        assert!(matches!(l0_ratio_sup(&wide, &cfg), Err(Error::CapExceeded(_))));
    }
}
