//! JSON run configuration. The format is documented in `docs/config.md`.

use crate::error::CliError;
use realizable_core::adversary::{Adversary, Statistic, Tail};
use realizable_core::{ContaminationParams, PatternSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// `{"kind": "name", ...fields}` on disk, serde's external tagging in memory.
///
/// serde's own internal tagging buffers the object and loses the path of
/// any error inside it; going through the external form keeps it.
mod tagged {
    use serde::de::{DeserializeOwned, Error as _};
    use serde::ser::{Error as _, SerializeMap};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::{Map, Value};

    pub fn serialize<T: Serialize, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        let (kind, fields) = match serde_json::to_value(v).map_err(S::Error::custom)? {
            Value::String(kind) => (kind, Map::new()),
            Value::Object(outer) if outer.len() == 1 => match outer.into_iter().next().expect("one entry") {
                (kind, Value::Object(fields)) => (kind, fields),
                (kind, _) => (kind, Map::new()),
            },
            other => return Err(S::Error::custom(format!("not an enum value: {other}"))),
        };
        let mut m = s.serialize_map(Some(fields.len() + 1))?;
        m.serialize_entry("kind", &kind)?;
        for (k, v) in &fields {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }

    pub fn deserialize<'de, T: DeserializeOwned, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let mut fields = Map::deserialize(d)?;
        let kind = match fields.remove("kind") {
            Some(Value::String(k)) => k,
            Some(other) => return Err(D::Error::custom(format!("`kind` must be a string, found {other}"))),
            None => return Err(D::Error::missing_field("kind")),
        };
        let external = if fields.is_empty() { Value::String(kind.clone()) } else { Value::Object(Map::from_iter([(kind.clone(), Value::Object(fields))])) };
        serde_path_to_error::deserialize(external).map_err(|e| {
            let path = e.path().to_string();
            let inner = path.strip_prefix(kind.as_str()).unwrap_or(&path).trim_start_matches('.').to_string();
            if inner.is_empty() || inner == "?" {
                D::Error::custom(format!("kind `{kind}`: {}", e.inner()))
            } else {
                D::Error::custom(format!("kind `{kind}`, field `{inner}`: {}", e.inner()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default)]
    pub n: usize,
    #[serde(with = "tagged")]
    pub model: ModelSpec,
    #[serde(default)]
    pub contamination: ContaminationSpec,
    #[serde(default, with = "tagged")]
    pub adversary: AdversarySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PatternSpec>,
    #[serde(default)]
    pub estimate: EstimateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
    },
    Regression {
        theta: Vec<f64>,
        #[serde(default = "one")]
        sigma: f64,
    },
    MeanHard {
        d: usize,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    CovHard {
        d: usize,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
    RegHard {
        d: usize,
        gamma: f64,
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    /// Width of a generated row (regression rows carry `y` last).
    pub fn width(&self) -> usize {
        match self {
            ModelSpec::Gaussian { mean, .. } => mean.len(),
            ModelSpec::Regression { theta, .. } => theta.len() + 1,
            ModelSpec::MeanHard { d, .. } | ModelSpec::CovHard { d, .. } => *d,
            ModelSpec::RegHard { d, .. } => d + 1,
        }
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, ModelSpec::Regression { .. } | ModelSpec::RegHard { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub epsilon: f64,
    #[serde(default = "one")]
    pub q: f64,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        Self { epsilon: 0.0, q: 1.0 }
    }
}

impl ContaminationSpec {
    pub fn params(&self) -> Result<ContaminationParams, CliError> {
        ContaminationParams::new(self.epsilon, self.q).map_err(|e| CliError::Config(format!("contamination: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    #[default]
    RevealAll,
    CensorAll,
    TailCensor {
        #[serde(with = "tagged")]
        statistic: StatisticSpec,
        tail: TailSpec,
        fraction: f64,
    },
    Threshold {
        #[serde(with = "tagged")]
        statistic: StatisticSpec,
        tail: TailSpec,
        cutoff: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StatisticSpec {
    Coordinate { index: usize },
    Projection { v: Vec<f64> },
    AbsProjection { v: Vec<f64> },
    Residual { theta: Vec<f64> },
    AbsResidual { theta: Vec<f64> },
    OlsAbsResidual,
    ResidualTimesProjection { theta: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailSpec {
    Upper,
    Lower,
}

impl AdversarySpec {
    pub fn build(&self) -> Adversary {
        let tail = |t: &TailSpec| match t {
            TailSpec::Upper => Tail::Upper,
            TailSpec::Lower => Tail::Lower,
        };
        match self {
            AdversarySpec::RevealAll => Adversary::RevealAll,
            AdversarySpec::CensorAll => Adversary::CensorAll,
            AdversarySpec::TailCensor { statistic, tail: t, fraction } => {
                Adversary::TailCensor { statistic: statistic.build(), tail: tail(t), fraction: *fraction }
            }
            AdversarySpec::Threshold { statistic, tail: t, cutoff } => {
                Adversary::Threshold { statistic: statistic.build(), tail: tail(t), cutoff: *cutoff }
            }
        }
    }
}

impl StatisticSpec {
    fn build(&self) -> Statistic {
        match self {
            StatisticSpec::Coordinate { index } => Statistic::Coordinate(*index),
            StatisticSpec::Projection { v } => Statistic::Projection(v.clone()),
            StatisticSpec::AbsProjection { v } => Statistic::AbsProjection(v.clone()),
            StatisticSpec::Residual { theta } => Statistic::Residual(theta.clone()),
            StatisticSpec::AbsResidual { theta } => Statistic::AbsResidual(theta.clone()),
            StatisticSpec::OlsAbsResidual => Statistic::OlsAbsResidual,
            StatisticSpec::ResidualTimesProjection { theta, v } => Statistic::ResidualTimesProjection { theta: theta.clone(), v: v.clone() },
        }
    }
}

/// Missingness patterns as 0-based coordinate lists with weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub sets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl PatternSpec {
    pub fn build(&self, d: usize) -> Result<PatternSet, CliError> {
        PatternSet::new(d, self.sets.clone(), self.weights.clone()).map_err(|e| CliError::Config(format!("patterns: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSpec {
    pub delta: f64,
    /// Known coordinate scale for location estimators.
    pub sigma: f64,
    pub net_radius: f64,
    pub net_seed: u64,
    pub net_max_iters: usize,
    /// Moment order for moment-mean and loss order for polyreg; polyreg picks
    /// its own when absent.
    pub k: Option<u32>,
    pub choose_k_c: f64,
    pub choose_k_c_prime: f64,
    pub cov_c2: f64,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        Self {
            delta: 0.05,
            sigma: 1.0,
            net_radius: 0.5,
            net_seed: 0,
            net_max_iters: 20_000,
            k: None,
            choose_k_c: 0.1,
            choose_k_c_prime: 10.0,
            cov_c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub task: Task,
    pub methods: Vec<String>,
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    /// Loss or moment orders to sweep; `[null]` means the method default.
    #[serde(default = "default_k")]
    pub k: Vec<Option<u32>>,
    pub trials: usize,
}

fn default_k() -> Vec<Option<u32>> {
    vec![None]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Mean,
    Cov,
    Reg,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Mean => "mean",
            Task::Cov => "cov",
            Task::Reg => "reg",
        }
    }
}

/// Parses a configuration, naming the offending field and position on failure.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!("line {}, column {}, field `{}`: {inner}", inner.line(), inner.column(), e.path()))
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("field `schema_version`: expected {SCHEMA_VERSION}, found {}", cfg.schema_version)));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
