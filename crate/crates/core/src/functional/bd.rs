//! Static contraction: minimal cost of a fixed current slope over profiles.
//!
//! For one time slice the cost of holding current slope `q` against boundary
//! densities is minimized over density profiles pinned at the ends. The
//! objective splits into an even part, quadratic in `q` and the profile
//! slopes, and a profile-independent odd part, half of `q` times the boundary
//! fugacity gap; only the even part is descended. Minimization uses projected
//! gradient descent with a Barzilai-Borwein step and nonmonotone backtracking
//! line search, started from the affine profile.

use super::{cell_mobility, cell_mobility_grad, FunctionalError};
use crate::grid::CurrentPath;
use crate::protocol::{logit, BoundaryProtocol, Side};

#[derive(Debug, Clone)]
pub struct BdOptions {
    /// Number of space cells for the profile.
    pub m_y: usize,
    /// Clamp distance from the degenerate densities 0 and 1.
    pub margin: f64,
    /// Convergence threshold on the projected-gradient sup norm.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for BdOptions {
    fn default() -> Self {
        Self {
            m_y: 200,
            margin: 1e-6,
            tol: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BdOutcome {
    pub value: f64,
    /// Minimizing profile on the `m_y + 1` space nodes.
    pub profile: Vec<f64>,
    pub iterations: usize,
    /// Projected-gradient sup norm at exit.
    pub residual: f64,
}

struct EvenObjective {
    q2: f64,
    dy: f64,
    lo: f64,
    hi: f64,
}

impl EvenObjective {
    fn energy(&self, profile: &[f64]) -> f64 {
        let mut acc = 0.0;
        for w in profile.windows(2) {
            let s = (w[1] - w[0]) / self.dy;
            acc += (self.q2 + s * s) / cell_mobility(w[0], w[1]);
        }
        0.25 * self.dy * acc
    }

    /// Gradient with respect to the interior nodes (length `profile.len() - 2`).
    fn gradient(&self, profile: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let n = profile.len();
        for k in 0..n - 1 {
            let (a, b) = (profile[k], profile[k + 1]);
            let s = (b - a) / self.dy;
            let mob = cell_mobility(a, b);
            let (da, db) = cell_mobility_grad(a, b);
            let num = self.q2 + s * s;
            let ga = 0.25 * (-2.0 * s / mob - self.dy * num * da / (mob * mob));
            let gb = 0.25 * (2.0 * s / mob - self.dy * num * db / (mob * mob));
            if k > 0 {
                out[k - 1] += ga;
            }
            if k + 1 < n - 1 {
                out[k] += gb;
            }
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Minimal static cost of current slope `q` between boundary densities
/// `rho_minus` at the left end and `rho_plus` at the right end.
pub fn bd_rate(
    q: f64,
    rho_minus: f64,
    rho_plus: f64,
    opts: &BdOptions,
) -> Result<BdOutcome, FunctionalError> {
    if !(0.0 < rho_minus && rho_minus < 1.0 && 0.0 < rho_plus && rho_plus < 1.0) {
        return Err(FunctionalError::BadParameter(format!(
            "boundary densities ({rho_minus}, {rho_plus}) must lie strictly inside (0, 1)"
        )));
    }
    if opts.m_y < 2 {
        return Err(FunctionalError::BadParameter(
            "profile needs at least 2 cells".into(),
        ));
    }
    let obj = EvenObjective {
        q2: q * q,
        dy: 2.0 / opts.m_y as f64,
        lo: opts.margin,
        hi: 1.0 - opts.margin,
    };
    let n = opts.m_y + 1;
    let mut profile: Vec<f64> = (0..n)
        .map(|k| obj.clamp(rho_minus + (rho_plus - rho_minus) * k as f64 / opts.m_y as f64))
        .collect();
    profile[0] = rho_minus;
    profile[n - 1] = rho_plus;

    let mut grad = vec![0.0; n - 2];
    let mut prev_grad = vec![0.0; n - 2];
    let mut energy = obj.energy(&profile);
    let mut recent = [energy; 8];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    obj.gradient(&profile, &mut grad);

    while iterations < opts.max_iterations {
        residual = (0..n - 2)
            .map(|k| (profile[k + 1] - obj.clamp(profile[k + 1] - grad[k])).abs())
            .fold(0.0f64, f64::max);
        if residual < opts.tol {
            return Ok(finish(
                q, rho_minus, rho_plus, energy, profile, iterations, residual,
            ));
        }
        let reference = recent.iter().fold(f64::MIN, |m, &e| m.max(e));
        let mut trial_step = step.clamp(1e-12, 1e6);
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = (0..n)
                .map(|k| {
                    if k == 0 || k == n - 1 {
                        profile[k]
                    } else {
                        obj.clamp(profile[k] - trial_step * grad[k - 1])
                    }
                })
                .collect();
            let moved: f64 = (1..n - 1)
                .map(|k| (candidate[k] - profile[k]).powi(2))
                .sum();
            if moved == 0.0 {
                // clamped to a corner with no room to move: stationary
                return Ok(finish(
                    q, rho_minus, rho_plus, energy, profile, iterations, residual,
                ));
            }
            let cand_energy = obj.energy(&candidate);
            if cand_energy <= reference - 1e-4 / trial_step * moved {
                // Barzilai-Borwein step from the accepted displacement
                prev_grad.copy_from_slice(&grad);
                obj.gradient(&candidate, &mut grad);
                let mut sy = 0.0;
                let mut ss = 0.0;
                for k in 1..n - 1 {
                    let s = candidate[k] - profile[k];
                    ss += s * s;
                    sy += s * (grad[k - 1] - prev_grad[k - 1]);
                }
                step = if sy > 0.0 {
                    (ss / sy).clamp(1e-12, 1e6)
                } else {
                    trial_step * 2.0
                };
                profile = candidate;
                energy = cand_energy;
                recent[iterations % recent.len()] = energy;
                accepted = true;
                break;
            }
            trial_step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // line search exhausted: accept only if already essentially flat
            if residual < 1e2 * opts.tol {
                return Ok(finish(
                    q, rho_minus, rho_plus, energy, profile, iterations, residual,
                ));
            }
            return Err(FunctionalError::NoConvergence {
                iterations,
                residual,
            });
        }
    }
    Err(FunctionalError::NoConvergence {
        iterations,
        residual,
    })
}

fn finish(
    q: f64,
    rho_minus: f64,
    rho_plus: f64,
    energy: f64,
    profile: Vec<f64>,
    iterations: usize,
    residual: f64,
) -> BdOutcome {
    let value = energy + 0.5 * q * (logit(rho_plus) - logit(rho_minus));
    BdOutcome {
        value,
        profile,
        iterations,
        residual,
    }
}

/// Current-only cost: the static contraction integrated over time intervals,
/// each against its interval-averaged boundary densities.
pub fn contracted_rate(
    j: &CurrentPath,
    protocol: &BoundaryProtocol,
    opts: &BdOptions,
) -> Result<f64, FunctionalError> {
    if (j.grid().horizon() - protocol.horizon()).abs() > 1e-9 {
        return Err(FunctionalError::BadParameter(
            "current grid horizon does not match protocol horizon".into(),
        ));
    }
    let g = j.grid();
    let mut acc = 0.0;
    for i in 0..g.m_t() {
        let (t0, t1) = (g.t(i), g.t(i + 1));
        let lo = 0.5 * (protocol.density(Side::Left, t0) + protocol.density(Side::Left, t1));
        let hi = 0.5 * (protocol.density(Side::Right, t0) + protocol.density(Side::Right, t1));
        acc += bd_rate(j.slope(i), lo, hi, opts)?.value * g.dt();
    }
    Ok(acc)
}
