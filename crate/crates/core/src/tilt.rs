//! Bond and boundary bias weights for the weakly asymmetric dynamics.
//!
//! A bias field `H(t, y)` induces per-bond log-weights: a rightward jump
//! across bond `x` carries `z(t, x) = H(t, (x+1)/N) - H(t, x/N)`, a leftward
//! jump the negative. The two reservoir channels use the one-sided edge
//! extensions: entering on the left carries `-(1/N)` times the left edge
//! gradient, and exiting on the right carries `(1/N)` times the right edge
//! gradient minus the last increment of `H` toward the edge. Since `H` is
//! interpolated linearly in time, every weight is piecewise linear in `t`
//! and the envelope cap taken over grid times is exact.

use crate::grid::TiltField;
use crate::protocol::ScalingParameters;

/// Jump channels as seen by the tilt: one per bulk bond plus two reservoir
/// channels addressed by the same bond coordinate convention as the
/// counters (`-N-1` on the left, `N` on the right).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Bulk bond `x` with `-N <= x < N`.
    Bulk(isize),
    LeftReservoir,
    RightReservoir,
}

#[derive(Debug, Clone)]
pub struct TiltWeights {
    field: TiltField,
    n: usize,
    /// Per-time-node one-sided gradients at the two edges.
    left_gradient: Vec<f64>,
    right_gradient: Vec<f64>,
    z_cap: f64,
}

/// Either the plain dynamics or a bias field with precomputed weights.
#[derive(Debug, Clone)]
pub enum TiltSpecification {
    Untilted,
    Field(TiltWeights),
}

impl TiltSpecification {
    pub fn from_field(field: &TiltField, scaling: &ScalingParameters) -> TiltSpecification {
        TiltSpecification::Field(TiltWeights::new(field, scaling))
    }

    pub fn is_untilted(&self) -> bool {
        matches!(self, TiltSpecification::Untilted)
    }

    /// Largest absolute log-weight over all channels and times.
    pub fn z_cap(&self) -> f64 {
        match self {
            TiltSpecification::Untilted => 0.0,
            TiltSpecification::Field(w) => w.z_cap,
        }
    }

    /// Log-weight of a rightward jump through `channel` at time `t`;
    /// leftward jumps carry the negative.
    pub fn z_rightward(&self, channel: Channel, t: f64) -> f64 {
        match self {
            TiltSpecification::Untilted => 0.0,
            TiltSpecification::Field(w) => w.z_rightward(channel, t),
        }
    }
}

impl TiltWeights {
    /// Lattice half-width the weights were compiled for.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Time horizon of the underlying bias field.
    pub fn horizon(&self) -> f64 {
        self.field.grid().horizon()
    }

    fn new(field: &TiltField, scaling: &ScalingParameters) -> TiltWeights {
        let g = field.grid();
        let left_gradient: Vec<f64> = (0..g.nt()).map(|i| field.edge_gradient(i, false)).collect();
        let right_gradient: Vec<f64> = (0..g.nt()).map(|i| field.edge_gradient(i, true)).collect();
        let mut weights = TiltWeights {
            field: field.clone(),
            n: scaling.n() as usize,
            left_gradient,
            right_gradient,
            z_cap: 0.0,
        };
        let mut cap: f64 = 0.0;
        let n = scaling.n() as isize;
        for i in 0..g.nt() {
            let t = g.t(i);
            for x in -n..n {
                cap = cap.max(weights.z_rightward(Channel::Bulk(x), t).abs());
            }
            cap = cap.max(weights.z_rightward(Channel::LeftReservoir, t).abs());
            cap = cap.max(weights.z_rightward(Channel::RightReservoir, t).abs());
        }
        weights.z_cap = cap;
        weights
    }

    fn gradient_at(&self, series: &[f64], t: f64) -> f64 {
        let g = self.field.grid();
        let i = ((t / g.dt()).floor() as isize).clamp(0, g.m_t() as isize - 1) as usize;
        let w = ((t - g.t(i)) / g.dt()).clamp(0.0, 1.0);
        (1.0 - w) * series[i] + w * series[i + 1]
    }

    fn z_rightward(&self, channel: Channel, t: f64) -> f64 {
        let n = self.n as f64;
        match channel {
            Channel::Bulk(x) => {
                let y0 = x as f64 / n;
                self.field.interpolate(t, y0 + 1.0 / n) - self.field.interpolate(t, y0)
            }
            Channel::LeftReservoir => -self.gradient_at(&self.left_gradient, t) / n,
            Channel::RightReservoir => {
                self.gradient_at(&self.right_gradient, t) / n - self.field.interpolate(t, 1.0)
                    + self.field.interpolate(t, 1.0 - 1.0 / n)
            }
        }
    }
}
