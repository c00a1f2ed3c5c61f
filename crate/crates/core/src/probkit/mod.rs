//! Numerical primitives: log-domain weights, quadrature, random streams and
//! rate regression.

pub mod logspace;
pub mod quadrature;
pub mod regression;
pub mod rng;

pub(crate) use logspace::exp_nonpositive;
pub use logspace::{ess, logsumexp, normalize_log_weights, normalized_log_weights, LogWeights};
pub use quadrature::{log_trapezoid_integrate, trapezoid_integrate, Grid1D};
pub use regression::fit_loglog_slope;
pub use rng::SeededStream;

/// Log density of `N(mean, sd²)` at `x`.
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - HALF_LN_2PI
}
