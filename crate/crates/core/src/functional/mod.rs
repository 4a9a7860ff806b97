//! Action functionals on density and current trajectories.
//!
//! The quadratic cost of a joint trajectory is assembled from space-time
//! cells: each time interval carries the forward-difference current slope and
//! the average of its two density slices, and each space cell carries the
//! logarithmic-mean mobility of its endpoint densities. With this quadrature
//! the odd part of the cost telescopes exactly to the boundary fugacity gap,
//! so the current-reversal identity holds to round-off and the cost of the
//! typical pair vanishes identically for constant reservoir schedules.
//!
//! Submodules: [`rate`] for the joint functional, its marginal lower bound
//! and the bias layer; [`bd`] for the single-variable contraction solved by
//! constrained descent; [`regularize`] for the smoothing maps that pull a
//! trajectory into the domain where the bias layer is usable.

pub mod bd;
pub mod rate;
pub mod regularize;

use crate::grid::GridError;
use thiserror::Error;

pub use bd::{bd_rate, contracted_rate, BdOutcome};
pub use rate::{
    current_marginal, fluctuation_difference, optimal_tilt, rate_functional, variational_objective,
    RateBreakdown,
};
pub use regularize::{
    regularize_convex, regularize_resolvent, resolvent_identity_residual, truncate_current,
};

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("mobility {found} below floor {floor}; regularize the density first")]
    MobilityBelowFloor { found: f64, floor: f64 },
    #[error("descent stalled after {iterations} iterations, residual {residual}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Tunables for the functional layer.
#[derive(Debug, Clone)]
pub struct RateOptions {
    /// Mobility floor used in denominators.
    pub phi_floor: f64,
    /// Boundary compatibility tolerance; `None` means two space steps.
    pub boundary_tol: Option<f64>,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            phi_floor: 1e-12,
            boundary_tol: None,
        }
    }
}

impl RateOptions {
    pub fn boundary_tol(&self, dy: f64) -> f64 {
        self.boundary_tol.unwrap_or(2.0 * dy)
    }
}

pub(crate) fn phi(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

/// Mobility attached to a space cell with endpoint densities `a`, `b`:
/// the difference quotient of density against fugacity. For nearly equal
/// endpoints this degenerates to the midpoint mobility; endpoints at the
/// extremes 0 or 1 give zero, left to the caller's floor.
pub(crate) fn cell_mobility(a: f64, b: f64) -> f64 {
    if (b - a).abs() <= 1e-9 {
        return phi(0.5 * (a + b));
    }
    let span = crate::protocol::logit(b) - crate::protocol::logit(a);
    let ratio = (b - a) / span;
    if ratio.is_finite() {
        ratio
    } else {
        0.0
    }
}

/// Partial derivatives of [`cell_mobility`] with respect to its endpoints.
pub(crate) fn cell_mobility_grad(a: f64, b: f64) -> (f64, f64) {
    if (b - a).abs() <= 1e-9 {
        let half_slope = 0.5 * (1.0 - (a + b));
        return (half_slope, half_slope);
    }
    let span = crate::protocol::logit(b) - crate::protocol::logit(a);
    if !span.is_finite() || span == 0.0 {
        return (0.0, 0.0);
    }
    let d = b - a;
    let da = (-span + d / phi(a)) / (span * span);
    let db = (span - d / phi(b)) / (span * span);
    let da = if da.is_finite() { da } else { 0.0 };
    let db = if db.is_finite() { db } else { 0.0 };
    (da, db)
}
