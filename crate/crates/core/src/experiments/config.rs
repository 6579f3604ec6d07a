//! TOML experiment files. See `docs/config.md` for the schema.

use std::path::Path;

use serde::Deserialize;

use crate::domain::{
    ErrorFunction, ErrorKind, Extension, RandomWalkSource, SourceModel, TwoStateSource,
};
use crate::meanfield::ThresholdMapping;
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::{derive_seed, Concern, DrawStream, Streams};
use crate::sim::{ContentionModel, InitialState, NodeConfig, SimConfig};

use super::{add_summaries, report_rows, run_jobs, ExperimentError, Job, Row};

/// A fixed value or a per-node uniform draw `{ uniform = [lo, hi] }`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Uniform { uniform: [f64; 2] },
}

impl Param {
    fn draw(&self, rng: &mut DrawStream) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Uniform { uniform: [lo, hi] } => rng.between(lo, hi),
        }
    }

    fn range(&self) -> (f64, f64) {
        match *self {
            Param::Fixed(v) => (v, v),
            Param::Uniform { uniform: [lo, hi] } => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    TwoState {
        p: Param,
    },
    RandomWalk {
        q_up: f64,
        q_down: f64,
        #[serde(default)]
        q_stay: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKindSpec {
    Linear,
    Quadratic,
    Exponential,
    Indicator,
    Threshold,
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionSpec {
    #[default]
    None,
    HoldLast,
    LinearTail,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    pub kind: ErrorKindSpec,
    #[serde(default = "one")]
    pub weight: f64,
    /// Threshold of the `threshold` kind.
    pub d0: Option<u64>,
    /// Table of the `tabulated` kind, starting at `d = 0`.
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub extension: ExtensionSpec,
}

fn one() -> f64 {
    1.0
}

impl ErrorSpec {
    fn build(&self) -> Result<ErrorFunction, String> {
        let kind = match self.kind {
            ErrorKindSpec::Linear => ErrorKind::Linear,
            ErrorKindSpec::Quadratic => ErrorKind::Quadratic,
            ErrorKindSpec::Exponential => ErrorKind::Exponential,
            ErrorKindSpec::Indicator => ErrorKind::Indicator,
            ErrorKindSpec::Threshold => ErrorKind::Threshold {
                d0: self.d0.ok_or("threshold error needs d0")?,
            },
            ErrorKindSpec::Tabulated => ErrorKind::Tabulated {
                values: self.values.clone().ok_or("tabulated error needs values")?,
                extension: match self.extension {
                    ExtensionSpec::None => Extension::None,
                    ExtensionSpec::HoldLast => Extension::HoldLast,
                    ExtensionSpec::LinearTail => Extension::LinearTail,
                },
            },
        };
        ErrorFunction::new(kind, self.weight).map_err(|e| e.to_string())
    }
}

/// A block of identically specified nodes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub count: usize,
    pub source: SourceSpec,
    pub error: ErrorSpec,
    #[serde(default = "zero_param")]
    pub p_e: Param,
}

fn zero_param() -> Param {
    Param::Fixed(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Overrides every node's `p_e`.
    PE,
    Nu,
    SlotRatio,
    Horizon,
    /// Overrides every group's `count`.
    Count,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written to the `preset` column.
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub replications: u32,
    pub horizon: u64,
    /// CSV destination; the CLI prints to stdout when absent.
    pub output: Option<String>,
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub warmup: u64,
    #[serde(default)]
    pub contention: ContentionModel,
    #[serde(default = "default_ratio")]
    pub slot_ratio: f64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub drift_correction: bool,
    /// ETSU population fraction.
    pub nu: Option<f64>,
    /// ETSU mapping override `{ i_th, p_tx }`.
    pub mapping: Option<ThresholdMapping>,
    pub track_threshold: Option<u64>,
    pub groups: Vec<GroupSpec>,
    pub sweep: Option<SweepSpec>,
}

fn default_seed() -> u64 {
    1
}

fn default_reps() -> u32 {
    1
}

fn default_ratio() -> f64 {
    10.0
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|message| ExperimentError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Checks that do not need a simulation. Simulation-level checks run
    /// again when each point is built.
    pub fn validate(&self) -> Result<(), String> {
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        if self.policies.is_empty() {
            return Err("at least one policy is required".into());
        }
        if self.groups.is_empty() {
            return Err("at least one node group is required".into());
        }
        for (g, group) in self.groups.iter().enumerate() {
            let (lo, hi) = group.p_e.range();
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(format!("group {g}: p_e range [{lo}, {hi}] outside [0, 1]"));
            }
            if let SourceSpec::TwoState { p } = &group.source {
                let (lo, hi) = p.range();
                if !(0.0 < lo && lo <= hi && hi <= 0.5) {
                    return Err(format!("group {g}: p range [{lo}, {hi}] outside (0, 0.5]"));
                }
            }
            group.error.build().map_err(|e| format!("group {g}: {e}"))?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err("sweep needs at least one value".into());
            }
            let integral = matches!(
                sweep.variable,
                SweepVariable::Horizon | SweepVariable::Count
            );
            if integral && sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
                return Err("horizon and count sweeps need positive integers".into());
            }
        }
        if self.policies.contains(&PolicyKind::Etsu) && self.nu.is_none() && self.mapping.is_none()
        {
            let sweeps_nu = matches!(&self.sweep, Some(s) if s.variable == SweepVariable::Nu);
            if !sweeps_nu {
                return Err("etsu needs nu, a mapping, or a nu sweep".into());
            }
        }
        Ok(())
    }

    fn sweep_points(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) => s.values.clone(),
            None => vec![0.0],
        }
    }

    /// Simulation config for one (sweep value, replication, policy).
    pub fn sim_config(
        &self,
        sweep_value: f64,
        replication: u32,
        kind: PolicyKind,
    ) -> Result<SimConfig, ExperimentError> {
        let variable = self.sweep.as_ref().map(|s| s.variable);
        let seed = derive_seed(self.seed, replication as u64);
        // Node parameters depend on the replication but not on the policy,
        // so policies compared at one point share their network.
        let mut setup = Streams::new(seed).stream(Concern::Setup, 0);
        let mut nodes = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            let count = match variable {
                Some(SweepVariable::Count) => sweep_value as usize,
                _ => group.count,
            };
            let error = group
                .error
                .build()
                .map_err(|e| ExperimentError::Invalid(format!("group {g}: {e}")))?;
            for _ in 0..count {
                let source = match &group.source {
                    SourceSpec::TwoState { p } => SourceModel::TwoState(
                        TwoStateSource::new(p.draw(&mut setup))
                            .map_err(|e| ExperimentError::Invalid(format!("group {g}: {e}")))?,
                    ),
                    SourceSpec::RandomWalk {
                        q_up,
                        q_down,
                        q_stay,
                    } => SourceModel::RandomWalk(
                        RandomWalkSource::new(*q_up, *q_down, *q_stay)
                            .map_err(|e| ExperimentError::Invalid(format!("group {g}: {e}")))?,
                    ),
                };
                let mut p_e = group.p_e.draw(&mut setup);
                if variable == Some(SweepVariable::PE) {
                    p_e = sweep_value;
                }
                nodes.push(NodeConfig {
                    source,
                    error: error.clone(),
                    p_e,
                });
            }
        }
        let mut spec = PolicySpec::new(kind);
        if kind == PolicyKind::Etsu {
            spec.nu = match variable {
                Some(SweepVariable::Nu) => Some(sweep_value),
                _ => self.nu,
            };
            spec.mapping = self.mapping;
        }
        let horizon = match variable {
            Some(SweepVariable::Horizon) => sweep_value as u64,
            _ => self.horizon,
        };
        let mut cfg = SimConfig::new(nodes, horizon, spec, seed);
        cfg.contention = self.contention;
        cfg.slot_ratio = match variable {
            Some(SweepVariable::SlotRatio) => sweep_value,
            _ => self.slot_ratio,
        };
        cfg.initial = self.initial;
        cfg.warmup = self.warmup;
        cfg.drift_correction = self.drift_correction;
        cfg.track_threshold = self.track_threshold;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Runs every (sweep point, policy, replication) and returns sorted rows
    /// with summaries.
    pub fn run(&self) -> Result<Vec<Row>, ExperimentError> {
        self.validate().map_err(ExperimentError::Invalid)?;
        let mut jobs = Vec::new();
        for x in self.sweep_points() {
            for rep in 0..self.replications {
                for &kind in &self.policies {
                    jobs.push(Job {
                        sweep_value: x,
                        policy: kind.name().to_string(),
                        replication: rep,
                        config: self.sim_config(x, rep, kind)?,
                    });
                }
            }
        }
        let reports = run_jobs(&jobs)?;
        let mut rows = report_rows(&self.name, self.seed, &jobs, &reports);
        add_summaries(&mut rows);
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"
seed = 3
replications = 2
horizon = 2000
policies = ["centralized_whittle", "etsu", "round_robin"]
nu = 0.2
contention = "slotted"
initial = { rule = "random_offset", spread = 3 }

[[groups]]
count = 4
source = { kind = "random_walk", q_up = 0.5, q_down = 0.5 }
error = { kind = "linear", weight = 2.0 }
p_e = { uniform = [0.0, 0.3] }

[[groups]]
count = 2
source = { kind = "random_walk", q_up = 0.25, q_down = 0.25, q_stay = 0.5 }
error = { kind = "tabulated", values = [0.0, 1.0, 3.0], extension = "linear_tail" }

[sweep]
variable = "p_e"
values = [0.0, 0.2]
"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.groups.len(), 2);
        let sim = cfg.sim_config(0.2, 0, PolicyKind::Etsu).unwrap();
        assert_eq!(sim.nodes.len(), 6);
        assert!(sim.nodes.iter().all(|n| n.p_e == 0.2));
        assert_eq!(sim.initial, InitialState::RandomOffset { spread: 3 });
        let rows = cfg.run().unwrap();
        // 2 points x 3 policies x 2 metrics x (2 reps + mean + stderr)
        assert_eq!(rows.len(), 2 * 3 * 2 * 4);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = SAMPLE.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("weight = 2.0", "weight = 2.0, slope = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        let bad = SAMPLE.replace("uniform = [0.0, 0.3]", "uniform = [0.0, 1.3]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SAMPLE.replace("nu = 0.2\n", "");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn policies_share_nodes() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let a = cfg.sim_config(0.0, 1, PolicyKind::Etsu).unwrap();
        let b = cfg.sim_config(0.0, 1, PolicyKind::RoundRobin).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.seed, b.seed);
    }
}
