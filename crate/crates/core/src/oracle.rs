//! Exact small-lattice reference computations.
//!
//! For half-widths up to [`N_MAX`] the full configuration space (bitmask
//! indexed, site `-N` at bit 0) fits in memory, so the time-inhomogeneous
//! master equation can be integrated directly and compared against Monte
//! Carlo output. The same sparse transition structure drives weighted
//! semigroups: multiplying each channel's off-diagonal rate by `e^z`
//! while keeping the plain diagonal computes the expectation of the
//! exponential jump functional; switching the diagonal to the weighted
//! escape rate yields the compensated evolution whose total mass is
//! conserved exactly, the unit-mean martingale property.
//!
//! All evolutions use an embedded Dormand-Prince 5(4) pair with absolute
//! per-component error control and per-step renormalization; weighted
//! evolutions carry a running log-normalizer so intermediate vectors stay
//! bounded regardless of the tilt strength.

use crate::protocol::{BoundaryProtocol, ScalingParameters, Side};
use crate::tilt::Channel;

/// Largest half-width the exact layer accepts: 2^(2*6+1) = 8192 states.
pub const N_MAX: u32 = 6;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("half-width {n} exceeds the exact-computation cap {max}")]
    WidthTooLarge { n: u32, max: u32 },
    #[error("probability vector has length {got}, expected {expected}")]
    BadDimension { got: usize, expected: usize },
    #[error("vector is not a probability distribution: {0}")]
    NotProbability(String),
    #[error("time interval [{t0}, {t1}] is not ordered")]
    BadInterval { t0: f64, t1: f64 },
    #[error("step size underflow at h = {h}; reduce N or loosen the tolerance")]
    StepUnderflow { h: f64 },
}

fn check_width(scaling: &ScalingParameters) -> Result<usize, OracleError> {
    let n = scaling.n();
    if n > N_MAX {
        return Err(OracleError::WidthTooLarge { n, max: N_MAX });
    }
    Ok(1usize << (2 * n + 1))
}

/// Exact probability vector over all configurations at a fixed time.
#[derive(Debug, Clone)]
pub struct MasterState {
    n: u32,
    time: f64,
    probabilities: Vec<f64>,
}

impl MasterState {
    pub fn new(
        scaling: &ScalingParameters,
        time: f64,
        probabilities: Vec<f64>,
    ) -> Result<MasterState, OracleError> {
        let dim = check_width(scaling)?;
        if probabilities.len() != dim {
            return Err(OracleError::BadDimension {
                got: probabilities.len(),
                expected: dim,
            });
        }
        let mut state = MasterState {
            n: scaling.n(),
            time,
            probabilities,
        };
        let total = state.total();
        if state
            .probabilities
            .iter()
            .any(|&p| p < -1e-9 || !p.is_finite())
        {
            return Err(OracleError::NotProbability(
                "negative or non-finite entry".into(),
            ));
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(OracleError::NotProbability(format!(
                "total mass {total} is not 1"
            )));
        }
        state.renormalize();
        Ok(state)
    }

    /// All mass on a single configuration bitmask.
    pub fn point_mass(
        scaling: &ScalingParameters,
        time: f64,
        config: u64,
    ) -> Result<MasterState, OracleError> {
        let dim = check_width(scaling)?;
        let mut probabilities = vec![0.0; dim];
        probabilities[config as usize] = 1.0;
        Ok(MasterState {
            n: scaling.n(),
            time,
            probabilities,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dimension(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, config: u64) -> f64 {
        self.probabilities[config as usize]
    }

    fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    fn renormalize(&mut self) {
        for p in &mut self.probabilities {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total = self.total();
        for p in &mut self.probabilities {
            *p /= total;
        }
    }
}

/// Mean occupation of site `x` under an exact law.
pub fn exact_mean_density(master: &MasterState, x: isize) -> f64 {
    let n = master.n as isize;
    assert!((-n..=n).contains(&x), "site out of range");
    let bit = 1u64 << (x + n);
    master
        .probabilities
        .iter()
        .enumerate()
        .filter(|(config, _)| (*config as u64) & bit != 0)
        .map(|(_, &p)| p)
        .sum()
}

/// How a single transition's rate depends on time and the tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionKind {
    /// Exchange across `(bond, bond+1)`; `rightward` is the particle's
    /// direction of motion.
    Exchange { bond: i8, rightward: bool },
    /// Reservoir flip; `enter` means a particle is created at the edge.
    Flip { side: Side, enter: bool },
}

impl TransitionKind {
    /// Untilted rate at time `t` (already including the accelerated factor).
    fn rate(&self, scaling: &ScalingParameters, protocol: &BoundaryProtocol, t: f64) -> f64 {
        let base = scaling.accelerated_rate();
        match *self {
            TransitionKind::Exchange { .. } => base * scaling.gamma(),
            TransitionKind::Flip { side, enter } => {
                let rho = protocol.density(side, t);
                base * if enter { rho } else { 1.0 - rho }
            }
        }
    }

    /// Signed log-weight the tilt assigns to this jump.
    fn z_dir(&self, z: &impl Fn(Channel, f64) -> f64, t: f64) -> f64 {
        match *self {
            TransitionKind::Exchange { bond, rightward } => {
                let w = z(Channel::Bulk(bond as isize), t);
                if rightward {
                    w
                } else {
                    -w
                }
            }
            TransitionKind::Flip { side, enter } => match side {
                // entering on the left and exiting on the right are the
                // rightward directions of the reservoir channels
                Side::Left => {
                    let w = z(Channel::LeftReservoir, t);
                    if enter {
                        w
                    } else {
                        -w
                    }
                }
                Side::Right => {
                    let w = z(Channel::RightReservoir, t);
                    if enter {
                        -w
                    } else {
                        w
                    }
                }
            },
        }
    }
}

/// Static transition structure of the chain: per configuration, every
/// outgoing jump with its target and kind. Rates are attached per time.
struct TransitionTable {
    transitions: Vec<Vec<(u32, TransitionKind)>>,
}

impl TransitionTable {
    fn build(scaling: &ScalingParameters) -> Result<TransitionTable, OracleError> {
        let dim = check_width(scaling)?;
        let n = scaling.n();
        let sites = 2 * n as usize + 1;
        let mut transitions = Vec::with_capacity(dim);
        for config in 0..dim as u64 {
            let mut row = Vec::new();
            for b in 0..sites - 1 {
                let lo = (config >> b) & 1;
                let hi = (config >> (b + 1)) & 1;
                if lo != hi {
                    let target = config ^ (0b11 << b);
                    row.push((
                        target as u32,
                        TransitionKind::Exchange {
                            bond: b as i8 - n as i8,
                            rightward: lo == 1,
                        },
                    ));
                }
            }
            let left_bit = 1u64;
            row.push((
                (config ^ left_bit) as u32,
                TransitionKind::Flip {
                    side: Side::Left,
                    enter: config & left_bit == 0,
                },
            ));
            let right_bit = 1u64 << (sites - 1);
            row.push((
                (config ^ right_bit) as u32,
                TransitionKind::Flip {
                    side: Side::Right,
                    enter: config & right_bit == 0,
                },
            ));
            transitions.push(row);
        }
        Ok(TransitionTable { transitions })
    }
}

/// Sparse snapshot of the generator at a fixed time: off-diagonal rates
/// per configuration, diagonal implied by the zero-row-sum property.
pub struct GeneratorAction {
    dim: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

pub fn build_generator(
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
    t: f64,
) -> Result<GeneratorAction, OracleError> {
    let table = TransitionTable::build(scaling)?;
    let rows = table
        .transitions
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(target, kind)| (target, kind.rate(scaling, protocol, t)))
                .collect()
        })
        .collect();
    Ok(GeneratorAction {
        dim: table.transitions.len(),
        rows,
    })
}

impl GeneratorAction {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Off-diagonal transitions out of `config` as `(target, rate)`.
    pub fn transitions(&self, config: usize) -> &[(u32, f64)] {
        &self.rows[config]
    }

    /// Diagonal entry, minus the total escape rate.
    pub fn diagonal(&self, config: usize) -> f64 {
        -self.rows[config].iter().map(|&(_, r)| r).sum::<f64>()
    }

    /// Forward-equation action `(L* p)`, written into `out`.
    pub fn apply_adjoint(&self, p: &[f64], out: &mut [f64]) {
        assert_eq!(p.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        out.fill(0.0);
        for (config, row) in self.rows.iter().enumerate() {
            let mass = p[config];
            if mass == 0.0 {
                continue;
            }
            for &(target, rate) in row {
                out[target as usize] += rate * mass;
                out[config] -= rate * mass;
            }
        }
    }
}

/// Dormand-Prince 5(4) embedded step on a generic right-hand side.
/// Returns the infinity-norm error estimate of the lower-order solution.
fn dp45_step(
    rhs: &mut impl FnMut(f64, &[f64], &mut [f64]),
    t: f64,
    h: f64,
    y: &[f64],
    k1: &[f64],
    out: &mut [f64],
    err: &mut [f64],
    stages: &mut [Vec<f64>; 6],
    scratch: &mut [f64],
) {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    // difference between the 5th-order weights and the embedded 4th-order ones
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let dim = y.len();
    for s in 0..6 {
        for i in 0..dim {
            let mut acc = A[s][0] * k1[i];
            for (j, stage) in stages.iter().enumerate().take(s) {
                acc += A[s][j + 1] * stage[i];
            }
            scratch[i] = y[i] + h * acc;
        }
        rhs(t + C[s] * h, scratch, &mut stages[s]);
    }
    // the 6th stage row holds the 5th-order weights (FSAL pair)
    for i in 0..dim {
        let mut acc = A[5][0] * k1[i];
        for (j, stage) in stages.iter().enumerate().take(5) {
            acc += A[5][j + 1] * stage[i];
        }
        out[i] = y[i] + h * acc;
    }
    for i in 0..dim {
        let mut acc = E[0] * k1[i];
        for (j, stage) in stages.iter().enumerate().take(6) {
            acc += E[j + 1] * stage[i];
        }
        err[i] = h * acc;
    }
}

/// Adaptive DP45 driver with per-component absolute tolerance and a
/// renormalization hook applied after every accepted step.
fn integrate_adaptive(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]),
    y: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    tol: f64,
    weights: &[f64],
    mut after_step: impl FnMut(&mut Vec<f64>, f64),
) -> Result<usize, OracleError> {
    if !(t1 >= t0) {
        return Err(OracleError::BadInterval { t0, t1 });
    }
    if t1 == t0 {
        return Ok(0);
    }
    let dim = y.len();
    let mut stages: [Vec<f64>; 6] = Default::default();
    for s in &mut stages {
        s.resize(dim, 0.0);
    }
    let mut k1 = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut t = t0;
    let span = t1 - t0;
    // conservative first step: resolve the fastest escape rate
    let rhs_norm = {
        rhs(t0, y, &mut k1);
        k1.iter()
            .zip(weights)
            .map(|(v, w)| (v / w).abs())
            .fold(0.0f64, f64::max)
    };
    let mut h = if rhs_norm > 0.0 {
        (0.05 / rhs_norm).min(span)
    } else {
        span
    };
    let mut steps = 0usize;
    let mut k1_fresh = true;
    loop {
        if t >= t1 {
            return Ok(steps);
        }
        h = h.min(t1 - t);
        if h < 1e-15 * span.max(1.0) {
            return Err(OracleError::StepUnderflow { h });
        }
        if !k1_fresh {
            rhs(t, y, &mut k1);
            k1_fresh = true;
        }
        dp45_step(
            &mut rhs,
            t,
            h,
            y,
            &k1,
            &mut out,
            &mut err,
            &mut stages,
            &mut scratch,
        );
        let err_ratio = err
            .iter()
            .zip(weights)
            .map(|(e, w)| (e / (tol * w)).abs())
            .fold(0.0f64, f64::max);
        if err_ratio <= 1.0 {
            t += h;
            std::mem::swap(y, &mut out);
            after_step(y, t);
            k1_fresh = false;
            steps += 1;
        }
        let factor = if err_ratio > 0.0 {
            (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
    }
}

/// Result of an exact forward-equation integration: the final law plus
/// the exactly integrated mean signed jump counts per bond.
pub struct MasterEvolution {
    pub state: MasterState,
    bond_currents: Vec<f64>,
    pub steps: usize,
    /// Largest per-step deviation of the total mass from one, observed
    /// before renormalization.
    pub max_drift: f64,
}

/// Exact mean signed current across bond `x` (raw counts, unrescaled),
/// integrated along the master-equation trajectory.
pub fn exact_mean_current(evolution: &MasterEvolution, x: isize) -> f64 {
    let n = evolution.state.n as isize;
    assert!((-n - 1..=n).contains(&x), "bond out of range");
    evolution.bond_currents[(x + n + 1) as usize]
}

/// Integrates the master equation from `initial` (at `t0`) to `t1`.
pub fn evolve_master(
    initial: &MasterState,
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<MasterEvolution, OracleError> {
    let dim = check_width(scaling)?;
    if initial.dimension() != dim {
        return Err(OracleError::BadDimension {
            got: initial.dimension(),
            expected: dim,
        });
    }
    if (initial.time - t0).abs() > 1e-9 {
        return Err(OracleError::BadInterval {
            t0,
            t1: initial.time,
        });
    }
    let table = TransitionTable::build(scaling)?;
    let n = scaling.n() as usize;
    let bonds = 2 * n + 2;
    let base = scaling.accelerated_rate();

    // augmented state: probabilities ++ mean bond counts
    let mut y = initial.probabilities.clone();
    y.extend(std::iter::repeat_n(0.0, bonds));
    let mut weights = vec![1.0; dim];
    weights.extend(std::iter::repeat_n(base.max(1.0), bonds));

    let rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        let (p, _) = y.split_at(dim);
        out.fill(0.0);
        let (dp, dc) = out.split_at_mut(dim);
        for (config, row) in table.transitions.iter().enumerate() {
            let mass = p[config];
            if mass == 0.0 {
                continue;
            }
            for &(target, kind) in row {
                let rate = kind.rate(scaling, protocol, t);
                dp[target as usize] += rate * mass;
                dp[config] -= rate * mass;
            }
        }
        // instantaneous mean net rate across each bond
        let rho_left = protocol.density(Side::Left, t);
        let rho_right = protocol.density(Side::Right, t);
        let mut occupation = vec![0.0; 2 * n + 1];
        for (config, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let mut bits = config;
            let mut site = 0;
            while bits != 0 {
                if bits & 1 != 0 {
                    occupation[site] += mass;
                }
                bits >>= 1;
                site += 1;
            }
        }
        dc[0] = base * (rho_left - occupation[0]);
        for b in 0..2 * n {
            dc[b + 1] = base * scaling.gamma() * (occupation[b] - occupation[b + 1]);
        }
        dc[bonds - 1] = base * (occupation[2 * n] - rho_right);
    };

    let mut max_drift = 0.0f64;
    let steps = integrate_adaptive(rhs, &mut y, t0, t1, tol, &weights, |y, _| {
        let (p, _) = y.split_at_mut(dim);
        let total: f64 = p.iter().sum();
        max_drift = max_drift.max((total - 1.0).abs());
        for v in p.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        for v in p.iter_mut() {
            *v /= total;
        }
    })?;

    let bond_currents = y.split_off(dim);
    let state = MasterState {
        n: scaling.n(),
        time: t1,
        probabilities: y,
    };
    Ok(MasterEvolution {
        state,
        bond_currents,
        steps,
        max_drift,
    })
}

/// Product Bernoulli law matched to the interpolated reservoir profile.
pub fn product_bernoulli_measure(
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
    t: f64,
) -> Result<MasterState, OracleError> {
    let dim = check_width(scaling)?;
    let n = scaling.n() as isize;
    let marginals: Vec<f64> = (-n..=n)
        .map(|x| protocol.profile(t, x as f64 / n as f64))
        .collect();
    let mut probabilities = vec![0.0; dim];
    for (config, slot) in probabilities.iter_mut().enumerate() {
        let mut p = 1.0;
        for (site, &rho) in marginals.iter().enumerate() {
            if config >> site & 1 == 1 {
                p *= rho;
            } else {
                p *= 1.0 - rho;
            }
        }
        *slot = p;
    }
    MasterState::new(scaling, t, probabilities)
}

/// Expectation of the exponential jump functional with per-channel
/// log-weights `z`, starting the evolution from `initial` and running to
/// `t1`. With `compensated` the evolution conserves total mass exactly
/// and the result is the unit-mean martingale expectation; without it the
/// raw weighted semigroup `E[exp(sum_jumps z)]` is computed. The vector
/// is renormalized every step with a running log-normalizer.
pub fn feynman_kac_tilted(
    initial: &MasterState,
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
    z: impl Fn(Channel, f64) -> f64,
    t1: f64,
    compensated: bool,
    tol: f64,
) -> Result<f64, OracleError> {
    let dim = check_width(scaling)?;
    if initial.dimension() != dim {
        return Err(OracleError::BadDimension {
            got: initial.dimension(),
            expected: dim,
        });
    }
    let table = TransitionTable::build(scaling)?;
    let t0 = initial.time;
    let mut v = initial.probabilities.clone();
    let mut log_scale = 0.0f64;
    let weights = vec![1.0; dim];

    let rhs = |t: f64, v: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        for (config, row) in table.transitions.iter().enumerate() {
            let mass = v[config];
            if mass == 0.0 {
                continue;
            }
            for &(target, kind) in row {
                let rate = kind.rate(scaling, protocol, t);
                let weighted = rate * kind.z_dir(&z, t).exp();
                out[target as usize] += weighted * mass;
                out[config] -= if compensated { weighted } else { rate } * mass;
            }
        }
    };

    integrate_adaptive(rhs, &mut v, t0, t1, tol, &weights, |v, _| {
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            for x in v.iter_mut() {
                *x /= total;
            }
            log_scale += total.ln();
        }
    })?;
    let total: f64 = v.iter().sum();
    Ok((log_scale + total.ln()).exp())
}
