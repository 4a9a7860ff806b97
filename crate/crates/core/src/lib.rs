//! Toolkit for the boundary-driven symmetric exclusion process run at an
//! accelerated time scale, where the density profile tracks the
//! instantaneous reservoir values and the integrated current obeys Fick's
//! law against the momentary boundary gap.
//!
//! The crate has four layers:
//!
//! * [`protocol`]: reservoir density schedules, the limiting linear profile
//!   and integrated current, and entropy costs between reservoir pairs;
//! * [`sim`] (with [`lattice`] and [`tilt`]): an event-driven kinetic Monte
//!   Carlo engine for the particle system, including exponentially tilted
//!   (weakly asymmetric) dynamics and exact likelihood-ratio weights;
//! * [`oracle`]: dense master-equation integration for small systems, used
//!   to validate the stochastic engine to statistical exactness;
//! * [`functional`] (with [`grid`]): discrete quadratic cost functionals
//!   for joint current/density trajectories, their variational form, the
//!   single-time contraction, and the smoothing operators that regularize
//!   rough inputs.
//!
//! The [`harness`] module ties the layers into reproducible experiments
//! driven by a single TOML config; the `qsx` binary crate is a thin CLI
//! over it. Monte Carlo replicas fan out with rayon when the `parallel`
//! feature (default) is enabled and fall back to a sequential loop
//! otherwise; results are bit-identical either way because every replica
//! derives its own RNG stream from the master seed and aggregation follows
//! replica order.

pub mod exec;
pub mod functional;
pub mod grid;
pub mod harness;
pub mod lattice;
pub mod oracle;
pub mod protocol;
pub mod quad;
pub mod sim;
pub mod stats;
pub mod tilt;

pub use grid::{CurrentPath, DensityField, Grid, TiltField};
pub use lattice::{CurrentCounters, LatticeState};
pub use protocol::{BoundaryProtocol, ScalingParameters, Schedule, Side};
pub use sim::{InitialCondition, SimOptions, TrajectoryRecord};
pub use tilt::TiltSpecification;
