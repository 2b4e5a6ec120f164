//! Constructive optimal Gaussian covariances for the extremal entropy
//! inequality `h(X+W) − μ h(X+V) ≤ h(X*+W) − μ h(X*+V)` under `Σ_X ⪯ R`,
//! with matrix certificates, a numerical verification oracle, and two
//! application solvers.
//!
//! Module map:
//! - [`gaussmat`]: PSD matrices, simultaneous diagonalization, Gaussian
//!   entropy, conditional covariance, Markov residual.
//! - [`eei_construct`]: the `L`/`K` multiplier constructions and the
//!   optimal covariances.
//! - [`verify_oracle`]: quadrature entropies, EPI and worst-noise checks,
//!   random Gaussian search, variational residuals.
//! - [`applications`]: private-message broadcast design and the LMMSE
//!   mutual-information bound.
//! - [`cli`]: the `eei` command-line front end.

pub mod applications;
pub mod cli;
pub mod eei_construct;
pub mod error;
pub mod gaussmat;
pub mod verify_oracle;

pub use error::{EeiError, Result};
pub use gaussmat::CovMatrix;

/// Library version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
