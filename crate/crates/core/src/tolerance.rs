use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every linear-dependence decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Relative rank threshold: `tau = relative * max(m, n) * sigma_max`.
    pub relative: f64,
    /// Absolute floor on `tau`.
    pub absolute: f64,
    /// Residual threshold for feasibility, scaled by `1 + ||b||`.
    pub feasibility: f64,
    /// Entries with magnitude at or below this count as zero in `||.||_0`.
    pub zero: f64,
    /// Relative width of the band treated as "equal to mu".
    pub eq_band: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            relative: 1e-12,
            absolute: 1e-14,
            feasibility: 1e-9,
            zero: 1e-9,
            eq_band: 1e-10,
        }
    }
}

impl ToleranceConfig {
    /// Rank threshold for a matrix of the given shape and largest singular value.
    pub fn rank_threshold(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        (self.relative * rows.max(cols) as f64 * sigma_max).max(self.absolute)
    }

    /// The same policy with a relative threshold ten times tighter.
    pub fn tightened(&self) -> Self {
        Self {
            relative: self.relative / 10.0,
            absolute: self.absolute / 10.0,
            ..*self
        }
    }
}

/// Configuration of the multistart local search over bases of `N(A2^T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub step_shrink: f64,
    pub min_step: f64,
    /// Candidates whose weight matrix `W` exceeds this condition number are rejected.
    pub cond_cap: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_starts: 16,
            max_iters: 200,
            initial_step: 0.5,
            step_shrink: 0.5,
            min_step: 1e-4,
            cond_cap: 1e6,
            seed: 0x5eed,
        }
    }
}
