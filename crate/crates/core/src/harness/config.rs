//! Experiment configuration: one structured text document per run.
//!
//! A configuration names the experiment kind, the lattice scaling, the
//! reservoir schedules, the replica budget, the master seed, and the grid
//! resolutions; optional blocks carry kind-specific knobs and named
//! tolerance overrides. Everything downstream (seeds, outputs, verdicts) is
//! a pure function of this document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{BoundaryProtocol, ProtocolError, ScalingError, ScalingParameters, Schedule};

/// Rejected configuration documents.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scaling: {0}")]
    Scaling(#[from] ScalingError),
    #[error("invalid protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// The eight experiment kinds the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Empirical profiles and currents against the quasi-static limit over a
    /// ladder of lattice widths.
    HydroConvergence,
    /// Monte Carlo occupation laws against the exact master equation on a
    /// small lattice.
    OracleCheck,
    /// Unit-mean checks for the exponential tilt martingale, both by exact
    /// evolution and by Monte Carlo reweighting.
    MartingaleCheck,
    /// Entropy production of tilted dynamics against the macroscopic cost of
    /// the target pair, over a ladder of widths.
    TiltedEntropy,
    /// Cost functional evaluations on the typical and reversed pairs.
    RateEval,
    /// Static cost scan over current slopes between fixed reservoirs.
    BdScan,
    /// Time-reversal identity on random compatible pairs, joint and
    /// contracted.
    FluctuationCheck,
    /// Cost continuity under current truncation and profile smoothing.
    RegularizationScan,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::HydroConvergence => "hydro-convergence",
            ExperimentKind::OracleCheck => "oracle-check",
            ExperimentKind::MartingaleCheck => "martingale-check",
            ExperimentKind::TiltedEntropy => "tilted-entropy",
            ExperimentKind::RateEval => "rate-eval",
            ExperimentKind::BdScan => "bd-scan",
            ExperimentKind::FluctuationCheck => "fluctuation-check",
            ExperimentKind::RegularizationScan => "regularization-scan",
        }
    }
}

/// Lattice scaling block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub n: u32,
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl ScalingSpec {
    pub fn build(&self) -> Result<ScalingParameters, ConfigError> {
        Ok(ScalingParameters::new(self.n, self.alpha, self.gamma)?)
    }

    /// Same scaling at a different lattice width.
    pub fn build_at(&self, n: u32) -> Result<ScalingParameters, ConfigError> {
        Ok(ScalingParameters::new(n, self.alpha, self.gamma)?)
    }
}

/// Reservoir schedule block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub left: Schedule,
    pub right: Schedule,
    pub horizon: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    BoundaryProtocol::DEFAULT_FLOOR
}

impl ProtocolSpec {
    pub fn build(&self) -> Result<BoundaryProtocol, ConfigError> {
        Ok(BoundaryProtocol::new(
            self.left.clone(),
            self.right.clone(),
            self.horizon,
            self.floor,
        )?)
    }
}

/// Grid resolutions: macroscopic quadrature cells and trajectory sample
/// times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Time intervals of the macroscopic grid.
    pub m_t: usize,
    /// Space intervals of the macroscopic grid.
    pub m_y: usize,
    /// Trajectory sample times (uniform over the horizon, endpoints
    /// included).
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m_t: 200,
            m_y: 200,
            samples: 9,
        }
    }
}

/// Kind-specific knobs; unused entries are ignored by the other kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    /// Lattice widths for ladder experiments.
    pub widths: Vec<u32>,
    /// Mesoscopic averaging fraction for local profiles.
    pub eps: f64,
    /// Constant added to the current slope of the tilted-entropy target.
    pub current_shift: f64,
    /// Number of deterministic or random fields for martingale and
    /// fluctuation experiments.
    pub field_count: usize,
    /// Run the full end-state law test in the oracle check.
    pub end_state_law: bool,
    /// Points in the static current-slope scan.
    pub q_count: usize,
    /// Half-width of the static current-slope scan around the typical slope.
    pub q_halfwidth: f64,
    /// Truncation levels as fractions of the raw slope sup norm
    /// (regularization scan; paired with `smoothing_levels`).
    pub truncation_levels: Vec<f64>,
    /// Resolvent smoothing scales (regularization scan).
    pub smoothing_levels: Vec<f64>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32],
            eps: 0.1,
            current_shift: -0.2,
            field_count: 5,
            end_state_law: false,
            q_count: 21,
            q_halfwidth: 0.5,
            truncation_levels: vec![0.55, 0.7, 0.85, 1.0, 1.2],
            smoothing_levels: vec![0.3, 0.1, 0.02, 0.003, 1e-5],
        }
    }
}

/// A full experiment description, parsed from a single TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub scaling: ScalingSpec,
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    /// Named tolerance overrides; unknown names are rejected at validation.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

fn default_replicas() -> usize {
    1
}

/// Tolerance names the harness understands, with their default values.
pub const TOLERANCE_DEFAULTS: &[(&str, f64)] = &[
    ("rate_zero", 1e-8),
    ("reversed_cost", 1e-4),
    ("reversed_cost_refined", 1e-6),
    ("fluctuation_residual", 1e-9),
    ("contracted_residual", 1e-4),
    ("bd_zero", 1e-8),
    ("bd_convexity", 1e-9),
    ("hydro_l1", 0.05),
    ("entropy_relative", 0.15),
    ("regularization_gap", 1e-3),
    ("replacement_mean", 0.02),
    ("martingale_exact", 1e-5),
    ("law_p_value", 0.01),
    ("z_score", 3.0),
];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Tolerance by name, falling back to the published default.
    pub fn tolerance(&self, name: &str) -> f64 {
        if let Some(&v) = self.tolerances.get(name) {
            return v;
        }
        TOLERANCE_DEFAULTS
            .iter()
            .find(|(k, _)| *k == name)
            .map(|&(_, v)| v)
            .unwrap_or_else(|| panic!("unknown tolerance name {name}"))
    }

    /// Uniform trajectory sample times over the horizon.
    pub fn sample_times(&self) -> Vec<f64> {
        let k = self.grid.samples;
        let horizon = self.protocol.horizon;
        (0..k)
            .map(|i| horizon * i as f64 / (k - 1) as f64)
            .collect()
    }

    /// Structural checks that do not require running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        self.scaling.build()?;
        self.protocol.build()?;
        if self.replicas == 0 {
            return fail("replicas must be at least 1".into());
        }
        if self.grid.samples < 2 {
            return fail("sample count must be at least 2".into());
        }
        if self.grid.m_t < 2 || self.grid.m_y < 3 {
            return fail(format!(
                "grid {}x{} too coarse: need at least 2 time and 3 space intervals",
                self.grid.m_t, self.grid.m_y
            ));
        }
        let e = &self.experiment;
        if !(e.eps > 0.0 && e.eps < 1.0) {
            return fail(format!("averaging fraction {} outside (0, 1)", e.eps));
        }
        if e.field_count == 0 {
            return fail("field count must be at least 1".into());
        }
        for name in self.tolerances.keys() {
            if !TOLERANCE_DEFAULTS.iter().any(|(k, _)| k == name) {
                return fail(format!("unknown tolerance override {name}"));
            }
        }
        if matches!(
            self.kind,
            ExperimentKind::RateEval
                | ExperimentKind::TiltedEntropy
                | ExperimentKind::BdScan
                | ExperimentKind::FluctuationCheck
                | ExperimentKind::RegularizationScan
        ) && (self.scaling.gamma - 1.0).abs() > 1e-12
        {
            return fail(
                "macroscopic cost experiments are expressed in diffusive time units; \
                 set gamma = 1 and rescale the horizon instead"
                    .into(),
            );
        }
        if self.kind == ExperimentKind::MartingaleCheck && self.replicas < 2 {
            return fail("reweighting check needs at least 2 replicas".into());
        }
        match self.kind {
            ExperimentKind::HydroConvergence | ExperimentKind::TiltedEntropy => {
                if e.widths.is_empty() {
                    return fail("width ladder must be nonempty".into());
                }
                if e.widths.windows(2).any(|w| w[1] <= w[0]) {
                    return fail("width ladder must be strictly increasing".into());
                }
                for &n in &e.widths {
                    self.scaling.build_at(n)?;
                }
            }
            ExperimentKind::OracleCheck | ExperimentKind::MartingaleCheck => {
                if self.scaling.n > crate::oracle::N_MAX {
                    return fail(format!(
                        "exact evolution is limited to half-width {} (got {})",
                        crate::oracle::N_MAX,
                        self.scaling.n
                    ));
                }
            }
            ExperimentKind::BdScan => {
                if e.q_count < 3 {
                    return fail("slope scan needs at least 3 points".into());
                }
                if !(e.q_halfwidth > 0.0) {
                    return fail("slope scan half-width must be positive".into());
                }
            }
            ExperimentKind::RegularizationScan => {
                if e.truncation_levels.len() != e.smoothing_levels.len()
                    || e.truncation_levels.is_empty()
                {
                    return fail(
                        "truncation and smoothing ladders must be nonempty and equal length".into(),
                    );
                }
                if e.truncation_levels.windows(2).any(|w| w[1] <= w[0]) {
                    return fail("truncation ladder must be strictly increasing".into());
                }
                if e.smoothing_levels.windows(2).any(|w| w[1] >= w[0]) {
                    return fail("smoothing ladder must be strictly decreasing".into());
                }
                if e.smoothing_levels.iter().any(|&s| !(s > 0.0)) {
                    return fail("smoothing scales must be positive".into());
                }
            }
            ExperimentKind::RateEval | ExperimentKind::FluctuationCheck => {}
        }
        Ok(())
    }
}
