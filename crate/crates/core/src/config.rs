//! TOML run configuration shared by fitting, testing and simulation.
//!
//! ```toml
//! [[sender]]
//! statistic = "intercept"
//! effect = "random"
//! mean = -1.0      # simulation only
//! sd = 0.5         # simulation only
//!
//! [[receiver]]
//! statistic = "inertia"
//! effect = "fixed"
//! value = 0.4      # simulation only
//!
//! [sampler]
//! chains = 4
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::bf_tests::TestConfig;
use crate::model::{EffectType, HyperPriorConfig, ModelSpec, ModelTerm};
use crate::sampler::ChainConfig;
use crate::simulator::{AttributeSpec, Count, PopulationParams, SimConfig};
use crate::statistics::{StatKind, StatisticSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub statistic: String,
    #[serde(default = "fixed")]
    pub effect: EffectType,
    /// Overrides the statistic's default standardization.
    pub standardize: Option<bool>,
    /// True coefficient of a fixed effect.
    pub value: Option<f64>,
    /// True mean and standard deviation of a random effect.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

fn fixed() -> EffectType {
    EffectType::Fixed
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub clusters: usize,
    pub actors: Count,
    pub events: Count,
    #[serde(default = "one")]
    pub seed: u64,
}

fn one() -> u64 {
    1
}

/// Correlation matrices of the simulated random effects, in statistic order.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    pub sender: Option<Vec<Vec<f64>>>,
    pub receiver: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub sender: Vec<TermConfig>,
    #[serde(default)]
    pub receiver: Vec<TermConfig>,
    #[serde(default)]
    pub hyper: HyperPriorConfig,
    #[serde(default)]
    pub sampler: ChainConfig,
    #[serde(default)]
    pub test: TestConfig,
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub attribute: Vec<AttributeSpec>,
    #[serde(default)]
    pub correlation: CorrelationSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        if self.sender.is_empty() && self.receiver.is_empty() {
            return Err(ConfigError::Invalid("the model has no statistics".into()));
        }
        let terms = |list: &[TermConfig]| -> Vec<ModelTerm> {
            list.iter()
                .map(|t| {
                    let kind = StatKind::from_name(&t.statistic);
                    let mut spec = StatisticSpec::new(kind);
                    if let Some(s) = t.standardize {
                        spec.standardize = s;
                    }
                    ModelTerm { spec, effect: t.effect }
                })
                .collect()
        };
        let spec = ModelSpec {
            sender: terms(&self.sender),
            receiver: terms(&self.receiver),
            hyper: self.hyper,
        };
        for side in [&spec.sender, &spec.receiver] {
            let mut seen = std::collections::BTreeSet::new();
            for t in side.iter() {
                if !seen.insert(t.name()) {
                    return Err(ConfigError::Invalid(format!("statistic `{}` listed twice", t.name())));
                }
            }
        }
        spec.hyper
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    /// Simulation setup; needs a `[simulation]` section and true values on every term.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let sim = self
            .simulation
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("missing [simulation] section".into()))?;
        let spec = self.model_spec()?;
        let mut params = PopulationParams::default();
        for (side, list) in [("sender", &self.sender), ("receiver", &self.receiver)] {
            for t in list {
                let need = |v: Option<f64>, key: &str| {
                    v.ok_or_else(|| {
                        ConfigError::Invalid(format!("{side} term `{}` needs `{key}`", t.statistic))
                    })
                };
                let (fixed, means, sds) = if side == "sender" {
                    (&mut params.phi, &mut params.zeta, &mut params.sigma_gamma)
                } else {
                    (&mut params.psi, &mut params.mu, &mut params.sigma_beta)
                };
                match t.effect {
                    EffectType::Fixed => fixed.push(need(t.value, "value")?),
                    EffectType::Random => {
                        means.push(need(t.mean, "mean")?);
                        sds.push(need(t.sd, "sd")?);
                    }
                }
            }
        }
        let flatten = |m: &Option<Vec<Vec<f64>>>| m.as_ref().map(|rows| rows.concat());
        params.corr_gamma = flatten(&self.correlation.sender);
        params.corr_beta = flatten(&self.correlation.receiver);
        Ok(SimConfig {
            clusters: sim.clusters,
            actors: sim.actors,
            events: sim.events,
            attributes: self.attribute.clone(),
            spec,
            params,
            seed: sim.seed,
        })
    }
}
