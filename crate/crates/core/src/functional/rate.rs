//! The joint density-current cost, its variational form, and its marginals.

use super::{cell_mobility, phi, FunctionalError, RateOptions};
use crate::grid::{CurrentPath, DensityField, GridError, TiltField};
use crate::protocol::{logit, BoundaryProtocol, Side};

/// Cost of a joint trajectory split into its even and odd parts.
///
/// `total` is the sum of the three parts when `finite`; an incompatible
/// boundary is reported as an infinite total with the offending mismatch,
/// never as an error. The even parts are quadratic in the current slope and
/// in the density gradient; the odd part couples the current slope to the
/// boundary fugacity gap and telescopes exactly, so flipping the sign of the
/// current flips `cross_part` and nothing else.
#[derive(Debug, Clone)]
pub struct RateBreakdown {
    pub total: f64,
    pub current_part: f64,
    pub gradient_part: f64,
    pub cross_part: f64,
    pub boundary_mismatch: f64,
    pub floored_cells: usize,
    pub finite: bool,
}

impl RateBreakdown {
    fn incompatible(mismatch: f64) -> Self {
        Self {
            total: f64::INFINITY,
            current_part: 0.0,
            gradient_part: 0.0,
            cross_part: 0.0,
            boundary_mismatch: mismatch,
            floored_cells: 0,
            finite: false,
        }
    }
}

fn check_grids(
    j: &CurrentPath,
    rho: &DensityField,
    protocol: &BoundaryProtocol,
) -> Result<(), FunctionalError> {
    if j.grid() != rho.grid() {
        return Err(GridError::GridMismatch.into());
    }
    if (j.grid().horizon() - protocol.horizon()).abs() > 1e-9 {
        return Err(FunctionalError::BadParameter(format!(
            "grid horizon {} does not match protocol horizon {}",
            j.grid().horizon(),
            protocol.horizon()
        )));
    }
    Ok(())
}

/// Reservoir densities averaged over time interval `i`.
fn interval_densities(protocol: &BoundaryProtocol, g: &crate::grid::Grid, i: usize) -> (f64, f64) {
    let (t0, t1) = (g.t(i), g.t(i + 1));
    let lo = 0.5 * (protocol.density(Side::Left, t0) + protocol.density(Side::Left, t1));
    let hi = 0.5 * (protocol.density(Side::Right, t0) + protocol.density(Side::Right, t1));
    (lo, hi)
}

/// Quadratic cost of the pair `(J, rho)` against the reservoir schedules.
///
/// The quadrature works on space-time cells: each time interval carries the
/// forward-difference slope of `J` and the mean of its two density slices;
/// each space cell carries the logarithmic-mean mobility of its endpoints.
/// The cost of the typical pair then vanishes to rounding for constant and
/// ramp schedules, and the odd part reduces exactly to the fugacity work
/// term computed by [`fluctuation_difference`].
pub fn rate_functional(
    j: &CurrentPath,
    rho: &DensityField,
    protocol: &BoundaryProtocol,
    opts: &RateOptions,
) -> Result<RateBreakdown, FunctionalError> {
    check_grids(j, rho, protocol)?;
    let g = rho.grid().clone();
    let (dt, dy) = (g.dt(), g.dy());
    let mismatch = rho.boundary_mismatch(protocol);
    if mismatch > opts.boundary_tol(dy) {
        return Ok(RateBreakdown::incompatible(mismatch));
    }

    let mut current_part = 0.0;
    let mut gradient_part = 0.0;
    let mut cross_part = 0.0;
    let mut floored = 0usize;
    for i in 0..g.m_t() {
        let jp = j.slope(i);
        let mut a = 0.5 * (rho.get(i, 0) + rho.get(i + 1, 0));
        let edge_lo = a;
        let mut cur_i = 0.0;
        let mut grad_i = 0.0;
        for cell in 0..g.m_y() {
            let b = 0.5 * (rho.get(i, cell + 1) + rho.get(i + 1, cell + 1));
            let slope = (b - a) / dy;
            let mut mob = cell_mobility(a, b);
            if mob < opts.phi_floor {
                mob = opts.phi_floor;
                floored += 1;
            }
            cur_i += jp * jp / mob;
            grad_i += slope * slope / mob;
            a = b;
        }
        let edge_hi = a;
        current_part += cur_i * dy * dt;
        gradient_part += grad_i * dy * dt;
        cross_part += jp * (logit(edge_hi) - logit(edge_lo)) * dt;
    }
    current_part *= 0.25;
    gradient_part *= 0.25;
    cross_part *= 0.5;

    Ok(RateBreakdown {
        total: current_part + gradient_part + cross_part,
        current_part,
        gradient_part,
        cross_part,
        boundary_mismatch: mismatch,
        floored_cells: floored,
        finite: true,
    })
}

/// Fugacity work term of a current path against the reservoir schedules.
///
/// Each time interval contributes its current increment times the fugacity
/// gap of the interval-averaged reservoir densities; this is the exact image
/// of the odd part of [`rate_functional`] for boundary-compatible densities.
pub fn fluctuation_difference(j: &CurrentPath, protocol: &BoundaryProtocol) -> f64 {
    let g = j.grid();
    let mut acc = 0.0;
    for i in 0..g.m_t() {
        let (lo, hi) = interval_densities(protocol, g, i);
        acc += j.slope(i) * (logit(hi) - logit(lo)) * g.dt();
    }
    acc
}

/// Lower bound on the joint cost depending on the current path only through
/// its slope and on the density only through its space-averaged mobility.
pub fn current_marginal(
    j: &CurrentPath,
    rho: &DensityField,
    protocol: &BoundaryProtocol,
    opts: &RateOptions,
) -> Result<f64, FunctionalError> {
    check_grids(j, rho, protocol)?;
    let g = rho.grid();
    let (dt, dy) = (g.dt(), g.dy());
    let mut acc = 0.0;
    for i in 0..g.m_t() {
        let jp = j.slope(i);
        let mut a = 0.5 * (rho.get(i, 0) + rho.get(i + 1, 0));
        let mut mean_mob = 0.0;
        for cell in 0..g.m_y() {
            let b = 0.5 * (rho.get(i, cell + 1) + rho.get(i + 1, cell + 1));
            mean_mob += cell_mobility(a, b).max(opts.phi_floor);
            a = b;
        }
        mean_mob *= dy;
        let (lo, hi) = interval_densities(protocol, g, i);
        let drive = 2.0 * jp + (hi - lo);
        acc += drive * drive / mean_mob * dt;
    }
    Ok(0.25 * acc)
}

fn time_derivative(values: &[f64], i: usize, dt: f64) -> f64 {
    let n = values.len();
    if i == 0 {
        (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    } else if i == n - 1 {
        (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt)
    } else {
        (values[i + 1] - values[i - 1]) / (2.0 * dt)
    }
}

fn row(field: &TiltField, i: usize) -> Vec<f64> {
    (0..field.grid().ny()).map(|j| field.get(i, j)).collect()
}

fn space_derivative(row: &[f64], j: usize, dy: f64) -> f64 {
    let n = row.len();
    if j == 0 {
        (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dy)
    } else if j == n - 1 {
        (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * dy)
    } else {
        (row[j + 1] - row[j - 1]) / (2.0 * dy)
    }
}

fn space_second(row: &[f64], j: usize, dy: f64) -> f64 {
    let n = row.len();
    let dy2 = dy * dy;
    if j == 0 {
        (2.0 * row[0] - 5.0 * row[1] + 4.0 * row[2] - row[3]) / dy2
    } else if j == n - 1 {
        (2.0 * row[n - 1] - 5.0 * row[n - 2] + 4.0 * row[n - 3] - row[n - 4]) / dy2
    } else {
        (row[j - 1] - 2.0 * row[j] + row[j + 1]) / dy2
    }
}

/// Bias-field functional whose supremum over fields recovers the joint cost.
///
/// Node-based trapezoid quadrature with central differences inside and
/// one-sided second-order stencils at the edges; for any bias field the
/// value stays below [`rate_functional`] up to discretization slack.
pub fn variational_objective(
    h: &TiltField,
    j: &CurrentPath,
    rho: &DensityField,
    protocol: &BoundaryProtocol,
) -> Result<f64, FunctionalError> {
    check_grids(j, rho, protocol)?;
    if h.grid() != rho.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let g = rho.grid();
    let (dt, dy) = (g.dt(), g.dy());
    let (mt, my) = (g.m_t(), g.m_y());
    if mt < 2 || my < 3 {
        return Err(FunctionalError::BadParameter(
            "bias-field quadrature needs at least 2 time and 3 space intervals".into(),
        ));
    }
    let wt = |i: usize| if i == 0 || i == mt { 0.5 * dt } else { dt };
    let wy = |j: usize| if j == 0 || j == my { 0.5 * dy } else { dy };

    let edge_series: Vec<f64> = (0..g.nt()).map(|i| h.get(i, my)).collect();
    let mut value = h.get(mt, my) * j.get(mt);
    for i in 0..g.nt() {
        let t = g.t(i);
        let hrow = row(h, i);
        value -= wt(i) * time_derivative(&edge_series, i, dt) * j.get(i);
        value += wt(i)
            * (space_derivative(&hrow, my, dy) * protocol.density(Side::Right, t)
                - space_derivative(&hrow, 0, dy) * protocol.density(Side::Left, t));
        for jn in 0..g.ny() {
            let grad = space_derivative(&hrow, jn, dy);
            value -= wt(i) * wy(jn) * space_second(&hrow, jn, dy) * rho.get(i, jn);
            value -= wt(i) * wy(jn) * grad * grad * phi(rho.get(i, jn));
        }
    }
    Ok(value)
}

/// Bias field maximizing the variational objective for the given pair:
/// half the cumulative space integral of the drive over the mobility.
pub fn optimal_tilt(
    j: &CurrentPath,
    rho: &DensityField,
    opts: &RateOptions,
) -> Result<TiltField, FunctionalError> {
    if j.grid() != rho.grid() {
        return Err(GridError::GridMismatch.into());
    }
    let g = rho.grid().clone();
    let (dt, dy) = (g.dt(), g.dy());
    if g.m_t() < 2 || g.m_y() < 2 {
        return Err(FunctionalError::BadParameter(
            "optimal bias field needs at least 2 intervals in each direction".into(),
        ));
    }
    let mut draft = vec![0.0; g.nodes()];
    for i in 0..g.nt() {
        let jp = time_derivative(j.values(), i, dt);
        let rrow: Vec<f64> = (0..g.ny()).map(|jn| rho.get(i, jn)).collect();
        let drive: Vec<f64> = (0..g.ny())
            .map(|jn| {
                let mob = phi(rrow[jn]);
                if mob < opts.phi_floor {
                    Err(FunctionalError::MobilityBelowFloor {
                        found: mob,
                        floor: opts.phi_floor,
                    })
                } else {
                    Ok(0.5 * (jp + space_derivative(&rrow, jn, dy)) / mob)
                }
            })
            .collect::<Result<_, _>>()?;
        let base = i * g.ny();
        for jn in 0..g.m_y() {
            draft[base + jn + 1] = draft[base + jn] + 0.5 * dy * (drive[jn] + drive[jn + 1]);
        }
    }
    Ok(TiltField::new(g, draft)?)
}
