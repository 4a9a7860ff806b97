//! Experiment harness: parse a configuration, fan out replicas, write
//! columnar tables and a manifest, and return machine-readable verdicts.
//!
//! A run is a pure function of its configuration document. The manifest
//! echoes the configuration, the toolkit version, and the per-replica seeds,
//! so re-running the same document reproduces every stochastic output
//! bit for bit; only wall-clock fields differ between reruns.

mod config;
mod experiments;

pub use config::{
    ConfigError, ExperimentConfig, ExperimentKind, ExperimentSpec, GridSpec, ProtocolSpec,
    ScalingSpec, TOLERANCE_DEFAULTS,
};
pub use experiments::EntropyRow;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::replica_seeds;
use crate::functional::FunctionalError;
use crate::grid::GridError;
use crate::oracle::OracleError;
use crate::sim::SimError;

/// Failures while preparing or executing an experiment.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("grid error: {0}")]
    Grid(#[from] GridError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("exact evolution error: {0}")]
    Oracle(#[from] OracleError),
    #[error("functional error: {0}")]
    Functional(#[from] FunctionalError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

/// One named scalar estimate with its sampling uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub name: String,
    pub count: u64,
    pub mean: f64,
    pub se: f64,
}

/// One named check: the measured value against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    /// Check that passes when `value` stays at or below `threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Verdict {
        Verdict {
            name: name.into(),
            value,
            threshold,
            passed: value.is_finite() && value <= threshold,
        }
    }

    /// Check that passes when `value` is at or above `threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Verdict {
        Verdict {
            name: name.into(),
            value,
            threshold,
            passed: value.is_finite() && value >= threshold,
        }
    }
}

/// A columnar text table produced by an experiment.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<&'static str>) -> Table {
        Table {
            name: name.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.columns.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Everything an experiment body reports back to the harness.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub summaries: Vec<SummaryStat>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<Table>,
}

mod seed_hex {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(seeds: &[u64], s: S) -> Result<S::Ok, S::Error> {
        let hex: Vec<String> = seeds.iter().map(|v| format!("{v:#018x}")).collect();
        hex.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u64>, D::Error> {
        let hex: Vec<String> = Vec::deserialize(d)?;
        hex.iter()
            .map(|h| {
                u64::from_str_radix(h.trim_start_matches("0x"), 16)
                    .map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

/// Record of one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub kind: String,
    pub config: ExperimentConfig,
    /// Per-replica seeds, stored as hex strings because the structured text
    /// format only carries signed 64-bit integers.
    #[serde(with = "seed_hex")]
    pub replica_seeds: Vec<u64>,
    pub wall_seconds: f64,
    pub summaries: Vec<SummaryStat>,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<String>,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn summary(&self, name: &str) -> Option<&SummaryStat> {
        self.summaries.iter().find(|s| s.name == name)
    }

    /// Everything that must agree between reruns of the same document.
    pub fn deterministic_eq(&self, other: &RunManifest) -> bool {
        self.toolkit_version == other.toolkit_version
            && self.kind == other.kind
            && self.config == other.config
            && self.replica_seeds == other.replica_seeds
            && self.summaries == other.summaries
            && self.verdicts == other.verdicts
            && self.tables == other.tables
    }
}

/// Executes the configured experiment and, if `out_dir` is given, writes the
/// columnar tables, a `verdicts.tsv`, and a `manifest.toml` into it.
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunManifest, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    let output = match config.kind {
        ExperimentKind::RateEval => experiments::rate_eval(config)?,
        ExperimentKind::BdScan => experiments::bd_scan(config)?,
        ExperimentKind::FluctuationCheck => experiments::fluctuation_check(config)?,
        ExperimentKind::RegularizationScan => experiments::regularization_scan(config)?,
        ExperimentKind::OracleCheck => experiments::oracle_check(config)?,
        ExperimentKind::MartingaleCheck => experiments::martingale_check(config)?,
        ExperimentKind::HydroConvergence => experiments::hydro_convergence(config)?,
        ExperimentKind::TiltedEntropy => experiments::tilted_entropy(config)?.1,
    };

    let manifest = RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        kind: config.kind.as_str().into(),
        config: config.clone(),
        replica_seeds: replica_seeds(config.seed, config.replicas),
        wall_seconds: start.elapsed().as_secs_f64(),
        summaries: output.summaries,
        verdicts: output.verdicts,
        tables: output
            .tables
            .iter()
            .map(|t| format!("{}.tsv", t.name))
            .collect(),
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for table in &output.tables {
            std::fs::write(dir.join(format!("{}.tsv", table.name)), table.render())?;
        }
        let mut verdicts = Table::new("verdicts", vec!["name", "value", "threshold", "passed"]);
        for v in &manifest.verdicts {
            verdicts.push(vec![
                v.name.clone(),
                format!("{:.12e}", v.value),
                format!("{:.12e}", v.threshold),
                v.passed.to_string(),
            ]);
        }
        std::fs::write(dir.join("verdicts.tsv"), verdicts.render())?;
        let text = toml::to_string_pretty(&manifest)
            .map_err(|e| ConfigError::Invalid(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
    }
    Ok(manifest)
}

/// Entropy-production scan of tilted dynamics over a width ladder; returns
/// one row per width. The configuration must be of the tilted-entropy kind.
pub fn entropy_scan(config: &ExperimentConfig) -> Result<Vec<EntropyRow>, HarnessError> {
    if config.kind != ExperimentKind::TiltedEntropy {
        return Err(ConfigError::Invalid(format!(
            "entropy scan needs a tilted-entropy configuration (got {})",
            config.kind.as_str()
        ))
        .into());
    }
    config.validate()?;
    Ok(experiments::tilted_entropy(config)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate_eval_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
                kind = "rate-eval"
                seed = 11

                [scaling]
                n = 8
                alpha = 1.0

                [protocol]
                horizon = 1.0
                left = { kind = "constant", value = 0.2 }
                right = { kind = "constant", value = 0.8 }

                [grid]
                m_t = 40
                m_y = 40
            "#,
        )
        .unwrap()
    }

    #[test]
    fn rate_eval_run_writes_tables_and_passes() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = run(&rate_eval_config(), Some(dir.path())).unwrap();
        assert!(manifest.all_passed(), "verdicts: {:?}", manifest.verdicts);
        assert!(dir.path().join("manifest.toml").is_file());
        assert!(dir.path().join("verdicts.tsv").is_file());
        for t in &manifest.tables {
            assert!(dir.path().join(t).is_file(), "missing table {t}");
        }
        let text = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        let parsed: RunManifest = toml::from_str(&text).unwrap();
        assert!(parsed.deterministic_eq(&manifest));
    }

    #[test]
    fn stochastic_rerun_is_bit_exact() {
        let config = ExperimentConfig::from_toml_str(
            r#"
                kind = "oracle-check"
                seed = 20240
                replicas = 60

                [scaling]
                n = 2
                alpha = 1.0

                [protocol]
                horizon = 0.4
                left = { kind = "constant", value = 0.3 }
                right = { kind = "constant", value = 0.7 }

                [grid]
                samples = 3
            "#,
        )
        .unwrap();
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run(&config, Some(da.path())).unwrap();
        let mb = run(&config, Some(db.path())).unwrap();
        assert!(ma.deterministic_eq(&mb));
        for t in &ma.tables {
            let ba = std::fs::read(da.path().join(t)).unwrap();
            let bb = std::fs::read(db.path().join(t)).unwrap();
            assert_eq!(ba, bb, "table {t} differs between reruns");
        }
    }

    #[test]
    fn entropy_scan_requires_matching_kind() {
        let err = entropy_scan(&rate_eval_config()).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)));
    }
}
