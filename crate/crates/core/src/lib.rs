//! Uniqueness analysis for partial sparsity problems
//!
//! ```text
//!     min ||x||_0   subject to   A1 x + A2 y = b,  y in C
//! ```
//!
//! where only the `x` part is required to be sparse. The crate computes spark,
//! mutual and submutual coherence, coherence ranks, l_p-induced norms, their
//! "scaled" versions over bases of `N(A2^T)`, evaluates the resulting
//! uniqueness certificates for a candidate `(x, y)`, and checks them against
//! an exhaustive solver on small instances.

pub mod certificates;
pub mod coherence;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lp_norm;
pub mod matrix;
pub mod oracle;
pub mod scaled;
mod serde_ext;
pub mod spark;
pub mod tolerance;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use tolerance::{SearchConfig, ToleranceConfig};
