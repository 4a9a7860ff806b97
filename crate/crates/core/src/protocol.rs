//! Reservoir density schedules and the macroscopic objects they determine.
//!
//! A [`BoundaryProtocol`] prescribes the left and right reservoir densities
//! on a finite horizon `[0, T]`, each bounded away from 0 and 1 by a floor
//! `a`. In the accelerated-time regime the density profile is, at every
//! instant, the straight line between the momentary reservoir values, and the
//! integrated boundary current is Fick's law applied to the momentary gap:
//!
//! * profile: `rho(t, y) = ((rho_+ - rho_-) y + rho_+ + rho_-) / 2`,
//! * current: `J(t) = -(gamma / 2) \int_0^t (rho_+(s) - rho_-(s)) ds`.
//!
//! Schedules expose exact values, derivatives, and antiderivatives, so the
//! current needs no quadrature; integral quantities without a closed form
//! (the entropy cost of reversing the current) use the adaptive rule from
//! [`crate::quad`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;

/// Which reservoir a quantity refers to. `Left` drives the site `-N` (density
/// `rho_-`), `Right` drives the site `N` (density `rho_+`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Time-dependence descriptor for one reservoir. `Ramp` interpolates linearly
/// from `start` at `t = 0` to `end` at the horizon; `CubicSpline` is the
/// natural cubic interpolant of `(time, value)` knots spanning the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        value: f64,
    },
    Ramp {
        start: f64,
        end: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    CubicSpline {
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("floor must lie in (0, 0.5), got {0}")]
    InvalidFloor(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("{side:?} schedule attains [{min}, {max}], outside the admissible band [{lo}, {hi}]")]
    RangeViolation {
        side: Side,
        min: f64,
        max: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid spline knots: {0}")]
    SplineKnots(String),
    #[error("schedule parameter is not finite")]
    NonFiniteParameter,
    #[error("relative entropy undefined: reference density {0} not in (0, 1)")]
    EntropyReference(f64),
    #[error("relative entropy undefined: density {0} not in [0, 1]")]
    EntropyDensity(f64),
}

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("lattice half-width must be at least 1")]
    ZeroWidth,
    #[error("time-scale exponent must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("exchange rate constant must be positive and finite, got {0}")]
    InvalidGamma(f64),
}

/// Lattice half-width `N`, acceleration exponent `alpha`, and bulk exchange
/// rate constant `gamma`. The generator carries the overall factor
/// `N^(2 + alpha)`; integrated currents are compared on the scale
/// `N^(1 + alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParameters {
    n: u32,
    alpha: f64,
    gamma: f64,
}

impl ScalingParameters {
    pub fn new(n: u32, alpha: f64, gamma: f64) -> Result<Self, ScalingError> {
        if n == 0 {
            return Err(ScalingError::ZeroWidth);
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(ScalingError::InvalidAlpha(alpha));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(ScalingError::InvalidGamma(gamma));
        }
        Ok(Self { n, alpha, gamma })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of lattice sites, `2N + 1`.
    pub fn sites(&self) -> usize {
        2 * self.n as usize + 1
    }

    /// Number of nearest-neighbour bonds, `2N`.
    pub fn bonds(&self) -> usize {
        2 * self.n as usize
    }

    /// `N^(2 + alpha)`, the common factor on every jump rate.
    pub fn accelerated_rate(&self) -> f64 {
        (self.n as f64).powf(2.0 + self.alpha)
    }

    /// `N^(1 + alpha)`, the normalization of integrated currents.
    pub fn current_normalization(&self) -> f64 {
        (self.n as f64).powf(1.0 + self.alpha)
    }
}

/// log(x / (1 - x)), the fugacity of a Bernoulli density.
pub fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Relative entropy of Bernoulli(`rho`) with respect to Bernoulli(`nu`), with
/// the convention `0 log 0 = 0`. The reference `nu` must be non-degenerate.
pub fn relative_entropy_bernoulli(rho: f64, nu: f64) -> Result<f64, ProtocolError> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(ProtocolError::EntropyReference(nu));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(ProtocolError::EntropyDensity(rho));
    }
    let part = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * (p / q).ln() };
    Ok(part(rho, nu) + part(1.0 - rho, 1.0 - nu))
}

/// Natural cubic spline in power-basis form per segment, with prefix
/// antiderivative values at the knots.
#[derive(Debug, Clone, PartialEq)]
struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at knots (natural: zero at both ends).
    m: Vec<f64>,
    /// Linear coefficient per segment.
    b: Vec<f64>,
    /// Antiderivative from x[0] accumulated at each knot.
    prefix: Vec<f64>,
}

impl Spline {
    fn build(knots: &[(f64, f64)], horizon: f64) -> Result<Self, ProtocolError> {
        let n = knots.len();
        if n < 2 {
            return Err(ProtocolError::SplineKnots("need at least two knots".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(ProtocolError::SplineKnots(
                    "knot times must be strictly increasing".into(),
                ));
            }
        }
        let span_tol = 1e-9 * horizon.max(1.0);
        if knots[0].0.abs() > span_tol || (knots[n - 1].0 - horizon).abs() > span_tol {
            return Err(ProtocolError::SplineKnots(format!(
                "knots must span [0, {horizon}], got [{}, {}]",
                knots[0].0,
                knots[n - 1].0
            )));
        }
        if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(ProtocolError::NonFiniteParameter);
        }

        let x: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let y: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut sub = vec![0.0; k];
            let mut sup = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                sub[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            // Thomas elimination.
            for i in 1..k {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (1..k).rev() {
                m[i] = (rhs[i - 1] - sup[i - 1] * m[i + 1]) / diag[i - 1];
            }
        }

        let mut b = vec![0.0; n - 1];
        let mut prefix = vec![0.0; n];
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            b[i] = (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
            let seg = y[i] * h
                + b[i] * h * h / 2.0
                + m[i] * h * h * h / 6.0
                + (m[i + 1] - m[i]) * h * h * h / 24.0;
            prefix[i + 1] = prefix[i] + seg;
        }
        Ok(Self { x, y, m, b, prefix })
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x[1..n - 1].partition_point(|&xi| xi <= t)
    }

    fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let dt = (t - self.x[i]).clamp(0.0, self.x[i + 1] - self.x[i]);
        let h = self.x[i + 1] - self.x[i];
        self.y[i]
            + self.b[i] * dt
            + self.m[i] * dt * dt / 2.0
            + (self.m[i + 1] - self.m[i]) * dt * dt * dt / (6.0 * h)
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let dt = (t - self.x[i]).clamp(0.0, self.x[i + 1] - self.x[i]);
        let h = self.x[i + 1] - self.x[i];
        self.b[i] + self.m[i] * dt + (self.m[i + 1] - self.m[i]) * dt * dt / (2.0 * h)
    }

    fn integral(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let dt = (t - self.x[i]).clamp(0.0, self.x[i + 1] - self.x[i]);
        let h = self.x[i + 1] - self.x[i];
        self.prefix[i]
            + self.y[i] * dt
            + self.b[i] * dt * dt / 2.0
            + self.m[i] * dt * dt * dt / 6.0
            + (self.m[i + 1] - self.m[i]) * dt * dt * dt * dt / (24.0 * h)
    }

    /// Exact attained (min, max) over the knot span: segment endpoints plus
    /// interior roots of the quadratic derivative.
    fn extremes(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.x.len() - 1 {
            let h = self.x[i + 1] - self.x[i];
            for v in [self.y[i], self.y[i + 1]] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            // derivative: b + m dt + c2 dt^2 with c2 = (m[i+1] - m[i]) / (2h)
            let c2 = (self.m[i + 1] - self.m[i]) / (2.0 * h);
            let roots: Vec<f64> = if c2.abs() < 1e-14 {
                if self.m[i].abs() < 1e-14 {
                    vec![]
                } else {
                    vec![-self.b[i] / self.m[i]]
                }
            } else {
                let disc = self.m[i] * self.m[i] - 4.0 * c2 * self.b[i];
                if disc < 0.0 {
                    vec![]
                } else {
                    let s = disc.sqrt();
                    vec![(-self.m[i] + s) / (2.0 * c2), (-self.m[i] - s) / (2.0 * c2)]
                }
            };
            for dt in roots {
                if dt > 0.0 && dt < h {
                    let v = self.y[i]
                        + self.b[i] * dt
                        + self.m[i] * dt * dt / 2.0
                        + (self.m[i + 1] - self.m[i]) * dt * dt * dt / (6.0 * h);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }
}

/// Attained (min, max) of sin(theta) over [a, b].
fn sin_extremes(a: f64, b: f64) -> (f64, f64) {
    use core::f64::consts::PI;
    let mut lo = a.sin().min(b.sin());
    let mut hi = a.sin().max(b.sin());
    let has_crit = |center: f64| {
        let k0 = ((a - center) / (2.0 * PI)).ceil();
        center + 2.0 * PI * k0 <= b
    };
    if has_crit(0.5 * PI) {
        hi = 1.0;
    }
    if has_crit(-0.5 * PI) {
        lo = -1.0;
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
enum Compiled {
    Constant {
        value: f64,
    },
    Ramp {
        start: f64,
        rate: f64,
    },
    Sinusoid {
        mean: f64,
        amp: f64,
        omega: f64,
        phase: f64,
    },
    Spline(Spline),
}

impl Compiled {
    fn build(schedule: &Schedule, horizon: f64) -> Result<Self, ProtocolError> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match schedule {
            Schedule::Constant { value } => {
                if !finite(&[*value]) {
                    return Err(ProtocolError::NonFiniteParameter);
                }
                Ok(Compiled::Constant { value: *value })
            }
            Schedule::Ramp { start, end } => {
                if !finite(&[*start, *end]) {
                    return Err(ProtocolError::NonFiniteParameter);
                }
                Ok(Compiled::Ramp {
                    start: *start,
                    rate: (end - start) / horizon,
                })
            }
            Schedule::Sinusoid {
                mean,
                amplitude,
                angular_frequency,
                phase,
            } => {
                if !finite(&[*mean, *amplitude, *angular_frequency, *phase]) {
                    return Err(ProtocolError::NonFiniteParameter);
                }
                Ok(Compiled::Sinusoid {
                    mean: *mean,
                    amp: *amplitude,
                    omega: *angular_frequency,
                    phase: *phase,
                })
            }
            Schedule::CubicSpline { knots } => Ok(Compiled::Spline(Spline::build(knots, horizon)?)),
        }
    }

    fn value(&self, t: f64) -> f64 {
        match self {
            Compiled::Constant { value } => *value,
            Compiled::Ramp { start, rate } => start + rate * t,
            Compiled::Sinusoid {
                mean,
                amp,
                omega,
                phase,
            } => mean + amp * (omega * t + phase).sin(),
            Compiled::Spline(s) => s.value(t),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match self {
            Compiled::Constant { .. } => 0.0,
            Compiled::Ramp { rate, .. } => *rate,
            Compiled::Sinusoid {
                amp, omega, phase, ..
            } => amp * omega * (omega * t + phase).cos(),
            Compiled::Spline(s) => s.derivative(t),
        }
    }

    fn integral(&self, t: f64) -> f64 {
        match self {
            Compiled::Constant { value } => value * t,
            Compiled::Ramp { start, rate } => start * t + 0.5 * rate * t * t,
            Compiled::Sinusoid {
                mean,
                amp,
                omega,
                phase,
            } => {
                if omega.abs() < 1e-300 {
                    (mean + amp * phase.sin()) * t
                } else {
                    mean * t + amp / omega * (phase.cos() - (omega * t + phase).cos())
                }
            }
            Compiled::Spline(s) => s.integral(t),
        }
    }

    fn extremes(&self, horizon: f64) -> (f64, f64) {
        match self {
            Compiled::Constant { value } => (*value, *value),
            Compiled::Ramp { start, rate } => {
                let end = start + rate * horizon;
                (start.min(end), start.max(end))
            }
            Compiled::Sinusoid {
                mean,
                amp,
                omega,
                phase,
            } => {
                if omega.abs() < 1e-300 {
                    let v = mean + amp * phase.sin();
                    (v, v)
                } else {
                    let (t0, t1) = if *omega > 0.0 {
                        (*phase, omega * horizon + phase)
                    } else {
                        (omega * horizon + phase, *phase)
                    };
                    let (slo, shi) = sin_extremes(t0, t1);
                    if *amp >= 0.0 {
                        (mean + amp * slo, mean + amp * shi)
                    } else {
                        (mean + amp * shi, mean + amp * slo)
                    }
                }
            }
            Compiled::Spline(s) => s.extremes(),
        }
    }
}

/// Reservoir densities on `[0, horizon]`, validated to stay in
/// `[floor, 1 - floor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProtocol {
    left: Schedule,
    right: Schedule,
    horizon: f64,
    floor: f64,
    compiled_left: Compiled,
    compiled_right: Compiled,
}

impl BoundaryProtocol {
    pub const DEFAULT_FLOOR: f64 = 0.05;

    pub fn new(
        left: Schedule,
        right: Schedule,
        horizon: f64,
        floor: f64,
    ) -> Result<Self, ProtocolError> {
        if !(floor > 0.0 && floor < 0.5) {
            return Err(ProtocolError::InvalidFloor(floor));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ProtocolError::InvalidHorizon(horizon));
        }
        let compiled_left = Compiled::build(&left, horizon)?;
        let compiled_right = Compiled::build(&right, horizon)?;
        let tol = 1e-12;
        for (side, c) in [(Side::Left, &compiled_left), (Side::Right, &compiled_right)] {
            let (min, max) = c.extremes(horizon);
            if min < floor - tol || max > 1.0 - floor + tol {
                return Err(ProtocolError::RangeViolation {
                    side,
                    min,
                    max,
                    lo: floor,
                    hi: 1.0 - floor,
                });
            }
        }
        Ok(Self {
            left,
            right,
            horizon,
            floor,
            compiled_left,
            compiled_right,
        })
    }

    /// Both reservoirs constant, with the default floor.
    pub fn constant(left: f64, right: f64, horizon: f64) -> Result<Self, ProtocolError> {
        Self::new(
            Schedule::Constant { value: left },
            Schedule::Constant { value: right },
            horizon,
            Self::DEFAULT_FLOOR,
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn schedule(&self, side: Side) -> &Schedule {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn compiled(&self, side: Side) -> &Compiled {
        match side {
            Side::Left => &self.compiled_left,
            Side::Right => &self.compiled_right,
        }
    }

    /// Reservoir density at time `t`.
    pub fn density(&self, side: Side, t: f64) -> f64 {
        self.compiled(side).value(t)
    }

    /// Exact time derivative of the reservoir density.
    pub fn density_derivative(&self, side: Side, t: f64) -> f64 {
        self.compiled(side).derivative(t)
    }

    /// Exact antiderivative of the reservoir density from 0 to `t`.
    pub fn density_integral(&self, side: Side, t: f64) -> f64 {
        self.compiled(side).integral(t)
    }

    /// Reservoir fugacity `log(rho / (1 - rho))`.
    pub fn fugacity(&self, side: Side, t: f64) -> f64 {
        logit(self.density(side, t))
    }

    /// Instantaneous linear profile at `y` in `[-1, 1]`. Edge values are the
    /// reservoir densities by construction, bit-for-bit.
    pub fn profile(&self, t: f64, y: f64) -> f64 {
        let minus = self.density(Side::Left, t);
        let plus = self.density(Side::Right, t);
        if y == 1.0 {
            plus
        } else if y == -1.0 {
            minus
        } else {
            0.5 * ((plus - minus) * y + plus + minus)
        }
    }

    /// Integrated boundary current up to `t`: `-(gamma/2) \int (rho_+ - rho_-)`.
    /// Uses exact antiderivatives of both schedules.
    pub fn current(&self, scaling: &ScalingParameters, t: f64) -> f64 {
        -0.5 * scaling.gamma()
            * (self.density_integral(Side::Right, t) - self.density_integral(Side::Left, t))
    }

    /// Entropy cost of reversing the typical current: the symmetrized
    /// Bernoulli relative entropy between the reservoirs, integrated over the
    /// horizon (adaptive quadrature, relative tolerance 1e-8), scaled by
    /// `gamma / 2`.
    pub fn reversed_current_cost(&self, scaling: &ScalingParameters) -> f64 {
        let integrand = |t: f64| {
            let m = self.density(Side::Left, t);
            let p = self.density(Side::Right, t);
            relative_entropy_bernoulli(p, m).expect("densities are floored away from 0 and 1")
                + relative_entropy_bernoulli(m, p).expect("densities are floored away from 0 and 1")
        };
        0.5 * scaling.gamma() * quad::adaptive(integrand, 0.0, self.horizon, 1e-8, 1e-14).value
    }
}
