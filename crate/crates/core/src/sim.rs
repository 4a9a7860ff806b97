//! Continuous-time event engine for the accelerated exclusion process.
//!
//! Jump times are drawn by thinning against a dominating envelope: with
//! `A` active bonds the total rate is at most
//! `N^(2+alpha) e^(z_cap) (gamma A + 2)`, since each discrepant bond
//! exchanges at `gamma N^(2+alpha) e^(+-z)` and each reservoir channel
//! flips its edge site at most at `N^(2+alpha) e^(z_cap)`. A proposal is
//! accepted with the ratio of the true time-dependent rate to its envelope
//! share; plain bulk exchanges accept with probability one and skip the
//! coin flip entirely, so an untilted run and a zero-field tilted run
//! consume identical random streams.
//!
//! Between accepted events the configuration is frozen, so every recorded
//! integral is advanced lazily over maximal constant-configuration
//! segments: the jump-count and window-sum observables exactly, the
//! reservoir-density factors by two-point Gauss quadrature per segment.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lattice::{CurrentCounters, LatticeState};
use crate::protocol::{BoundaryProtocol, ScalingParameters, Side};
use crate::quad;
use crate::tilt::{Channel, TiltSpecification};

/// Bernoulli mobility `rho (1 - rho)`, the variance of a single occupation.
pub fn mobility(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("sample grid invalid: {0}")]
    BadSampleGrid(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("explicit initial occupation rejected (length or values)")]
    BadInitial,
    #[error("thinning acceptance probability {probability} exceeds one; envelope cap is broken")]
    EnvelopeViolation { probability: f64 },
    #[error("event budget of {guard} proposals exhausted before the horizon")]
    EventBudgetExceeded { guard: u64 },
    #[error("internal audit `{check}` failed at t = {time}")]
    AuditFailure { check: &'static str, time: f64 },
    #[error("trajectory carries no event stream; rerun with event recording enabled")]
    MissingEvents,
}

/// Initial occupation law for a run.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    AllEmpty,
    AllFull,
    /// Product Bernoulli measure matched to the interpolated reservoir
    /// profile at time zero.
    ProductProfile,
    /// A fixed occupation vector of length `2N + 1` over sites `-N..=N`.
    Explicit(Vec<u8>),
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Hard cap on thinning proposals before the run aborts.
    pub event_guard: u64,
    /// Keep the full accepted-event stream in the record.
    pub record_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            event_guard: 1_000_000_000,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Exchange across the bond `(bond, bond + 1)`.
    Exchange { bond: isize },
    /// Creation or annihilation at the edge site facing `side`.
    BoundaryFlip { side: Side },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventLogEntry {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSnapshot {
    pub time: f64,
    /// Raw occupation over sites `-N..=N`.
    pub occupation: Vec<u8>,
    /// Rescaled signed jump counts over bonds `-N-1..=N`.
    pub current: Vec<f64>,
    /// Cumulative integral of the replacement observable with unit weight.
    pub v_integral: f64,
    /// Cumulative log likelihood ratio of the tilted path law; zero untilted.
    pub log_rn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub n: u32,
    pub alpha: f64,
    pub gamma: f64,
    pub eps: f64,
    pub seed: u64,
    pub initial_occupation: Vec<u8>,
    pub samples: Vec<SampleSnapshot>,
    pub events: Option<Vec<EventLogEntry>>,
    pub event_count: u64,
    pub proposal_count: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Zone {
    Left,
    Bulk,
    Right,
}

/// Classifies a site against the `eps`-boundary layers: the bulk is
/// `|x| < N(1 - eps)`, everything at or beyond that is a reservoir zone.
pub(crate) fn site_zone(n: usize, eps: f64, x: isize) -> Zone {
    let threshold = n as f64 * (1.0 - eps) - 1e-9;
    if x as f64 >= threshold {
        Zone::Right
    } else if (x as f64) <= -threshold {
        Zone::Left
    } else {
        Zone::Bulk
    }
}

pub(crate) fn window_radius(n: usize, eps: f64) -> usize {
    (eps * n as f64 + 1e-9).floor() as usize
}

/// Average occupation over the window `|x' - x| <= eps N` in the bulk;
/// in the boundary zones the instantaneous reservoir density.
pub fn local_average(
    state: &LatticeState,
    protocol: &BoundaryProtocol,
    t: f64,
    eps: f64,
    x: isize,
) -> f64 {
    assert!(
        eps > 0.0 && eps < 1.0,
        "window radius fraction out of range"
    );
    let n = state.half_width();
    match site_zone(n, eps, x) {
        Zone::Left => protocol.density(Side::Left, t),
        Zone::Right => protocol.density(Side::Right, t),
        Zone::Bulk => {
            let w = window_radius(n, eps) as isize;
            let mut sum = 0u32;
            for u in (x - w)..=(x + w) {
                sum += u32::from(state.occupied(u));
            }
            f64::from(sum) / (2 * w + 1) as f64
        }
    }
}

/// Weighted sum over bonds of the descending-pair indicator minus the
/// mobility of the local average, `sum_x G(t, x/N) [eta(x)(1 - eta(x+1))
/// - phi(avg)]`.
pub fn replacement_observable(
    state: &LatticeState,
    protocol: &BoundaryProtocol,
    t: f64,
    eps: f64,
    g: impl Fn(f64, f64) -> f64,
) -> f64 {
    let n = state.half_width() as isize;
    let mut total = 0.0;
    for x in -n..n {
        let descending = f64::from(state.occupied(x) && !state.occupied(x + 1));
        let avg = local_average(state, protocol, t, eps, x);
        total += g(t, x as f64 / n as f64) * (descending - mobility(avg));
    }
    total
}

/// Step-function view of an occupation vector: `pi_N(y) = eta([N y])`.
#[derive(Debug, Clone)]
pub struct EmpiricalDensity {
    n: usize,
    occupation: Vec<u8>,
}

pub fn empirical_density(state: &LatticeState) -> EmpiricalDensity {
    EmpiricalDensity {
        n: state.half_width(),
        occupation: state.occupation().to_vec(),
    }
}

impl EmpiricalDensity {
    pub fn from_occupation(n: usize, occupation: &[u8]) -> Option<EmpiricalDensity> {
        if occupation.len() != 2 * n + 1 || occupation.iter().any(|&v| v > 1) {
            return None;
        }
        Some(EmpiricalDensity {
            n,
            occupation: occupation.to_vec(),
        })
    }

    pub fn eval(&self, y: f64) -> f64 {
        let n = self.n as f64;
        let x = (n * y).floor().clamp(-n, n) as isize;
        f64::from(self.occupation[(x + self.n as isize) as usize])
    }

    /// Exact integral of the step function over `[-1, 1]`.
    pub fn integral(&self) -> f64 {
        // each site x in -N..N-1 owns the cell [x/N, (x+1)/N); site N has
        // zero width under the floor convention
        let n = self.n as f64;
        self.occupation[..2 * self.n]
            .iter()
            .map(|&v| f64::from(v))
            .sum::<f64>()
            / n
    }
}

/// Event-driven bookkeeping for the replacement observable with unit
/// weight: the descending-bond count, per-window occupation sums over the
/// bulk, and their exact time integrals.
struct VAccumulator {
    n: usize,
    w: usize,
    /// `phi(s / (2w + 1))` for s = 0..=2w+1.
    table: Vec<f64>,
    /// Site-indexed (offset by N): does the site anchor a bulk window?
    is_bulk: Vec<bool>,
    /// Site-indexed window sums, meaningful only where `is_bulk`.
    window: Vec<u32>,
    descending: i64,
    phi_total: f64,
    left_zone_bonds: usize,
    right_zone_bonds: usize,
    desc_time: f64,
    phi_time: f64,
}

impl VAccumulator {
    fn new(state: &LatticeState, eps: f64) -> VAccumulator {
        let n = state.half_width();
        let w = window_radius(n, eps);
        let k = 2 * w + 1;
        let table: Vec<f64> = (0..=k).map(|s| mobility(s as f64 / k as f64)).collect();
        let sites = 2 * n + 1;
        let mut is_bulk = vec![false; sites];
        let mut window = vec![0u32; sites];
        let mut phi_total = 0.0;
        let mut left_zone_bonds = 0;
        let mut right_zone_bonds = 0;
        let ni = n as isize;
        for x in -ni..=ni {
            let idx = (x + ni) as usize;
            match site_zone(n, eps, x) {
                Zone::Bulk => {
                    // bulk windows stay strictly inside the open lattice:
                    // |x| < N(1-eps) and w <= eps N give |x +- w| < N
                    is_bulk[idx] = true;
                    let wi = w as isize;
                    let mut sum = 0u32;
                    for u in (x - wi)..=(x + wi) {
                        sum += u32::from(state.occupied(u));
                    }
                    window[idx] = sum;
                    phi_total += table[sum as usize];
                }
                Zone::Left => {
                    if x < ni {
                        left_zone_bonds += 1;
                    }
                }
                Zone::Right => {
                    if x < ni {
                        right_zone_bonds += 1;
                    }
                }
            }
        }
        let mut descending = 0i64;
        for x in -ni..ni {
            descending += i64::from(state.occupied(x) && !state.occupied(x + 1));
        }
        VAccumulator {
            n,
            w,
            table,
            is_bulk,
            window,
            descending,
            phi_total,
            left_zone_bonds,
            right_zone_bonds,
            desc_time: 0.0,
            phi_time: 0.0,
        }
    }

    fn advance(&mut self, dt: f64) {
        self.desc_time += self.descending as f64 * dt;
        self.phi_time += self.phi_total * dt;
    }

    fn bond_descending(state: &LatticeState, ni: isize, b: isize) -> i64 {
        if b < -ni || b >= ni {
            return 0;
        }
        i64::from(state.occupied(b) && !state.occupied(b + 1))
    }

    fn shift_window(&mut self, c: isize, delta: i32) {
        let ni = self.n as isize;
        if c < -ni || c > ni {
            return;
        }
        let idx = (c + ni) as usize;
        if !self.is_bulk[idx] {
            return;
        }
        let old = self.window[idx];
        let new = (old as i32 + delta) as u32;
        self.window[idx] = new;
        self.phi_total += self.table[new as usize] - self.table[old as usize];
    }

    /// Applies an exchange across bond `x` to both the state and the sums.
    fn apply_exchange(&mut self, state: &mut LatticeState, x: isize) {
        let ni = self.n as isize;
        // a swap of (x, x+1) changes a window sum only where exactly one
        // endpoint sits inside: the windows anchored at x - w and x + 1 + w
        let delta = if state.occupied(x) { -1 } else { 1 };
        let wi = self.w as isize;
        self.shift_window(x - wi, delta);
        self.shift_window(x + 1 + wi, -delta);
        let before: i64 = (x - 1..=x + 1)
            .map(|b| Self::bond_descending(state, ni, b))
            .sum();
        state.exchange(x);
        let after: i64 = (x - 1..=x + 1)
            .map(|b| Self::bond_descending(state, ni, b))
            .sum();
        self.descending += after - before;
    }

    /// Applies a reservoir flip at edge site `x = -N` or `x = N`. Edge
    /// sites never enter a bulk window, so only one bond is touched.
    fn apply_flip(&mut self, state: &mut LatticeState, x: isize) {
        let ni = self.n as isize;
        let bond = if x < 0 { -ni } else { ni - 1 };
        let before = Self::bond_descending(state, ni, bond);
        state.flip_edge(x);
        let after = Self::bond_descending(state, ni, bond);
        self.descending += after - before;
    }

    /// Cumulative `int_0^t V dt` with the deterministic reservoir-zone
    /// mobility integrated directly.
    fn integral(&self, protocol: &BoundaryProtocol, t: f64) -> f64 {
        let mut value = self.desc_time - self.phi_time;
        if t > 0.0 {
            if self.left_zone_bonds > 0 {
                let q = quad::adaptive(
                    |s| mobility(protocol.density(Side::Left, s)),
                    0.0,
                    t,
                    1e-12,
                    1e-14,
                );
                value -= self.left_zone_bonds as f64 * q.value;
            }
            if self.right_zone_bonds > 0 {
                let q = quad::adaptive(
                    |s| mobility(protocol.density(Side::Right, s)),
                    0.0,
                    t,
                    1e-12,
                    1e-14,
                );
                value -= self.right_zone_bonds as f64 * q.value;
            }
        }
        value
    }

    #[cfg(test)]
    fn audit(&self, state: &LatticeState) -> bool {
        let fresh = VAccumulator::new(state, self.eps_from_radius());
        fresh.descending == self.descending
            && fresh.window == self.window
            && (fresh.phi_total - self.phi_total).abs() <= 1e-9
    }

    #[cfg(test)]
    fn eps_from_radius(&self) -> f64 {
        // any eps reproducing the same radius and zones works for an audit;
        // radii are only used in tests with round fractions
        (self.w as f64 + 0.5) / self.n as f64
    }
}

/// Signed log-weight of the jump a channel would perform in the current
/// configuration, together with its reservoir density factor.
fn channel_rate_parts(
    state: &LatticeState,
    protocol: &BoundaryProtocol,
    tilt: &TiltSpecification,
    channel: Channel,
    t: f64,
) -> (f64, f64) {
    match channel {
        Channel::Bulk(x) => {
            let z = tilt.z_rightward(channel, t);
            let z_dir = if state.occupied(x) { z } else { -z };
            (z_dir, 1.0)
        }
        Channel::LeftReservoir => {
            let z = tilt.z_rightward(channel, t);
            let rho = protocol.density(Side::Left, t);
            if state.occupied(-(state.half_width() as isize)) {
                (-z, 1.0 - rho)
            } else {
                (z, rho)
            }
        }
        Channel::RightReservoir => {
            let z = tilt.z_rightward(channel, t);
            let rho = protocol.density(Side::Right, t);
            if state.occupied(state.half_width() as isize) {
                (z, 1.0 - rho)
            } else {
                (-z, rho)
            }
        }
    }
}

/// Instantaneous compensator density `N^(2+alpha) sum_channels
/// (e^(z) - 1) rate_factor` for the frozen configuration.
fn compensator_density(
    state: &LatticeState,
    protocol: &BoundaryProtocol,
    tilt: &TiltSpecification,
    scaling: &ScalingParameters,
    t: f64,
) -> f64 {
    let mut sum = 0.0;
    for k in 0..state.active_bonds() {
        let x = state.active_bond(k);
        let (z_dir, _) = channel_rate_parts(state, protocol, tilt, Channel::Bulk(x), t);
        sum += scaling.gamma() * (z_dir.exp() - 1.0);
    }
    for channel in [Channel::LeftReservoir, Channel::RightReservoir] {
        let (z_dir, factor) = channel_rate_parts(state, protocol, tilt, channel, t);
        sum += factor * (z_dir.exp() - 1.0);
    }
    scaling.accelerated_rate() * sum
}

struct Engine<'a> {
    scaling: &'a ScalingParameters,
    protocol: &'a BoundaryProtocol,
    tilt: &'a TiltSpecification,
    state: LatticeState,
    counters: CurrentCounters,
    acc: VAccumulator,
    /// Last time up to which the path integrals have been advanced.
    mark: f64,
    jump_z: f64,
    compensator: f64,
}

impl Engine<'_> {
    /// Advances every path integral over the constant-configuration
    /// segment `[mark, t]`.
    fn advance_to(&mut self, t: f64) {
        if t <= self.mark {
            return;
        }
        self.acc.advance(t - self.mark);
        if !self.tilt.is_untilted() {
            self.compensator += quad::gauss2(
                |s| compensator_density(&self.state, self.protocol, self.tilt, self.scaling, s),
                self.mark,
                t,
            );
        }
        self.mark = t;
    }

    fn apply(&mut self, kind: EventKind, z_dir: f64) {
        let ni = self.state.half_width() as isize;
        self.jump_z += z_dir;
        match kind {
            EventKind::Exchange { bond } => {
                let rightward = self.state.occupied(bond);
                self.counters.record(bond, rightward);
                self.acc.apply_exchange(&mut self.state, bond);
            }
            EventKind::BoundaryFlip { side } => match side {
                Side::Left => {
                    let was_occupied = self.state.occupied(-ni);
                    self.counters.record(-ni - 1, !was_occupied);
                    self.acc.apply_flip(&mut self.state, -ni);
                }
                Side::Right => {
                    let was_occupied = self.state.occupied(ni);
                    self.counters.record(ni, was_occupied);
                    self.acc.apply_flip(&mut self.state, ni);
                }
            },
        }
    }
}

fn validate_sample_grid(sample_grid: &[f64], horizon: f64) -> Result<(), SimError> {
    if sample_grid.is_empty() {
        return Err(SimError::BadSampleGrid("empty sample grid".into()));
    }
    if sample_grid[0].abs() > 1e-12 {
        return Err(SimError::BadSampleGrid(format!(
            "first sample time must be 0, got {}",
            sample_grid[0]
        )));
    }
    for pair in sample_grid.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(SimError::BadSampleGrid(format!(
                "sample times must increase strictly: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let last = *sample_grid.last().unwrap();
    if !last.is_finite() || last > horizon + 1e-9 {
        return Err(SimError::BadSampleGrid(format!(
            "final sample time {last} beyond the horizon {horizon}"
        )));
    }
    Ok(())
}

fn validate_tilt(
    tilt: &TiltSpecification,
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
) -> Result<(), SimError> {
    if let TiltSpecification::Field(weights) = tilt {
        if weights.n() != scaling.n() as usize {
            return Err(SimError::BadParameter(format!(
                "tilt weights compiled for N = {}, run uses N = {}",
                weights.n(),
                scaling.n()
            )));
        }
        if (weights.horizon() - protocol.horizon()).abs() > 1e-9 {
            return Err(SimError::BadParameter(format!(
                "tilt horizon {} does not match schedule horizon {}",
                weights.horizon(),
                protocol.horizon()
            )));
        }
        if !tilt.z_cap().is_finite() {
            return Err(SimError::BadParameter(
                "tilt weight cap is not finite".into(),
            ));
        }
    }
    Ok(())
}

/// Runs one trajectory of the inhomogeneous chain and records observables
/// at the requested sample times.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
    tilt: &TiltSpecification,
    initial: &InitialCondition,
    seed: u64,
    sample_grid: &[f64],
    eps: f64,
    options: &SimOptions,
) -> Result<TrajectoryRecord, SimError> {
    let start = Instant::now();
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SimError::BadParameter(format!(
            "window radius fraction must lie in (0, 1), got {eps}"
        )));
    }
    validate_sample_grid(sample_grid, protocol.horizon())?;
    validate_tilt(tilt, scaling, protocol)?;

    let n = scaling.n() as usize;
    let ni = n as isize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = match initial {
        InitialCondition::AllEmpty => LatticeState::all_empty(n),
        InitialCondition::AllFull => LatticeState::all_full(n),
        InitialCondition::ProductProfile => {
            LatticeState::sample_product(n, |y| protocol.profile(0.0, y), &mut rng)
        }
        InitialCondition::Explicit(occupation) => {
            LatticeState::from_occupation(n, occupation.clone()).ok_or(SimError::BadInitial)?
        }
    };
    let initial_occupation = state.occupation().to_vec();
    let acc = VAccumulator::new(&state, eps);
    let mut engine = Engine {
        scaling,
        protocol,
        tilt,
        state,
        counters: CurrentCounters::new(n),
        acc,
        mark: 0.0,
        jump_z: 0.0,
        compensator: 0.0,
    };

    let t_end = *sample_grid.last().unwrap();
    let z_cap = tilt.z_cap();
    let envelope_scale = scaling.accelerated_rate() * z_cap.exp();
    let gamma = scaling.gamma();
    let tilted = !tilt.is_untilted();

    let mut samples = Vec::with_capacity(sample_grid.len());
    let mut events: Vec<EventLogEntry> = Vec::new();
    let mut next_sample = 0usize;
    let mut t = 0.0f64;
    let mut event_count = 0u64;
    let mut proposal_count = 0u64;

    // emit every sample at or before the current clock, advancing the
    // integrals first so cumulative fields are exact at the sample time
    macro_rules! emit_due {
        ($limit:expr) => {
            while next_sample < sample_grid.len() && sample_grid[next_sample] <= $limit {
                let ts = sample_grid[next_sample];
                engine.advance_to(ts);
                let snap = build_snapshot(&engine, &initial_occupation, ts)?;
                samples.push(snap);
                next_sample += 1;
            }
        };
    }

    emit_due!(0.0);
    while next_sample < sample_grid.len() {
        let weight = gamma * engine.state.active_bonds() as f64 + 2.0;
        let lambda = envelope_scale * weight;
        proposal_count += 1;
        if proposal_count > options.event_guard {
            return Err(SimError::EventBudgetExceeded {
                guard: options.event_guard,
            });
        }
        let u: f64 = rng.random();
        let dt = -(1.0 - u).ln() / lambda;
        let t_next = t + dt;
        emit_due!(t_next);
        if next_sample >= sample_grid.len() {
            break;
        }
        t = t_next;

        // channel selection within the envelope
        let r: f64 = rng.random::<f64>() * weight;
        let bulk_weight = gamma * engine.state.active_bonds() as f64;
        let (kind, z_dir, accept_probability) = if r < bulk_weight {
            let k = ((r / gamma) as usize).min(engine.state.active_bonds() - 1);
            let bond = engine.state.active_bond(k);
            let (z_dir, _) =
                channel_rate_parts(&engine.state, protocol, tilt, Channel::Bulk(bond), t);
            (EventKind::Exchange { bond }, z_dir, (z_dir - z_cap).exp())
        } else {
            let (side, channel) = if r < bulk_weight + 1.0 {
                (Side::Left, Channel::LeftReservoir)
            } else {
                (Side::Right, Channel::RightReservoir)
            };
            let (z_dir, factor) = channel_rate_parts(&engine.state, protocol, tilt, channel, t);
            (
                EventKind::BoundaryFlip { side },
                z_dir,
                factor * (z_dir - z_cap).exp(),
            )
        };
        if accept_probability > 1.0 + 1e-12 {
            return Err(SimError::EnvelopeViolation {
                probability: accept_probability,
            });
        }
        let accepted = accept_probability >= 1.0 || rng.random::<f64>() < accept_probability;
        if accepted {
            engine.advance_to(t);
            engine.apply(kind, if tilted { z_dir } else { 0.0 });
            event_count += 1;
            if options.record_events {
                events.push(EventLogEntry { time: t, kind });
            }
        }
    }

    // audits are exact invariants of the counter bookkeeping; a failure
    // here means the engine itself is broken
    let final_state = engine.state.occupation();
    if !engine
        .counters
        .conservation_holds(&initial_occupation, final_state)
    {
        return Err(SimError::AuditFailure {
            check: "conservation",
            time: t_end,
        });
    }
    if engine.counters.homogeneity_span() > 2 * ni as i64 {
        return Err(SimError::AuditFailure {
            check: "homogeneity",
            time: t_end,
        });
    }

    Ok(TrajectoryRecord {
        n: scaling.n(),
        alpha: scaling.alpha(),
        gamma,
        eps,
        seed,
        initial_occupation,
        samples,
        events: options.record_events.then_some(events),
        event_count,
        proposal_count,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Builds a snapshot and runs the exact per-sample audits.
fn build_snapshot(
    engine: &Engine<'_>,
    initial_occupation: &[u8],
    t: f64,
) -> Result<SampleSnapshot, SimError> {
    if !engine
        .counters
        .conservation_holds(initial_occupation, engine.state.occupation())
    {
        return Err(SimError::AuditFailure {
            check: "conservation",
            time: t,
        });
    }
    let ni = engine.state.half_width() as isize;
    if engine.counters.homogeneity_span() > 2 * ni as i64 {
        return Err(SimError::AuditFailure {
            check: "homogeneity",
            time: t,
        });
    }
    let norm = engine.scaling.current_normalization();
    let current = (-ni - 1..=ni)
        .map(|x| engine.counters.signed(x) as f64 / norm)
        .collect();
    Ok(SampleSnapshot {
        time: t,
        occupation: engine.state.occupation().to_vec(),
        current,
        v_integral: engine.acc.integral(engine.protocol, t),
        log_rn: if engine.tilt.is_untilted() {
            0.0
        } else {
            engine.jump_z - engine.compensator
        },
    })
}

/// Log likelihood ratio of the tilted path law on a recorded trajectory:
/// the sum of per-jump log-weights minus the exactly integrated
/// compensator. Requires the event stream; identically zero untilted.
pub fn log_radon_nikodym(
    record: &TrajectoryRecord,
    tilt: &TiltSpecification,
    scaling: &ScalingParameters,
    protocol: &BoundaryProtocol,
) -> Result<f64, SimError> {
    if tilt.is_untilted() {
        return Ok(0.0);
    }
    validate_tilt(tilt, scaling, protocol)?;
    if record.n != scaling.n() {
        return Err(SimError::BadParameter(format!(
            "record built at N = {}, scaling has N = {}",
            record.n,
            scaling.n()
        )));
    }
    let events = record.events.as_ref().ok_or(SimError::MissingEvents)?;
    let n = scaling.n() as usize;
    let ni = n as isize;
    let mut state = LatticeState::from_occupation(n, record.initial_occupation.clone())
        .ok_or(SimError::BadInitial)?;
    let t_end = record.samples.last().map_or(0.0, |s| s.time);

    let mut mark = 0.0f64;
    let mut jump_z = 0.0f64;
    let mut compensator = 0.0f64;
    let mut sample_idx = 0usize;
    let advance = |state: &LatticeState, mark: &mut f64, compensator: &mut f64, t: f64| {
        if t > *mark {
            *compensator += quad::gauss2(
                |s| compensator_density(state, protocol, tilt, scaling, s),
                *mark,
                t,
            );
            *mark = t;
        }
    };
    for entry in events {
        // split segments at sample times exactly as the engine did, so the
        // replayed compensator matches the recorded one bit for bit
        while sample_idx < record.samples.len() && record.samples[sample_idx].time <= entry.time {
            advance(
                &state,
                &mut mark,
                &mut compensator,
                record.samples[sample_idx].time,
            );
            sample_idx += 1;
        }
        advance(&state, &mut mark, &mut compensator, entry.time);
        match entry.kind {
            EventKind::Exchange { bond } => {
                let (z_dir, _) =
                    channel_rate_parts(&state, protocol, tilt, Channel::Bulk(bond), entry.time);
                jump_z += z_dir;
                state.exchange(bond);
            }
            EventKind::BoundaryFlip { side } => {
                let (channel, edge) = match side {
                    Side::Left => (Channel::LeftReservoir, -ni),
                    Side::Right => (Channel::RightReservoir, ni),
                };
                let (z_dir, _) = channel_rate_parts(&state, protocol, tilt, channel, entry.time);
                jump_z += z_dir;
                state.flip_edge(edge);
            }
        }
    }
    while sample_idx < record.samples.len() {
        advance(
            &state,
            &mut mark,
            &mut compensator,
            record.samples[sample_idx].time,
        );
        sample_idx += 1;
    }
    advance(&state, &mut mark, &mut compensator, t_end);
    Ok(jump_z - compensator)
}
