use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use volterra_split::criteria::CriteriaOptions;
use volterra_split::operators::{GridSpec, NormOptions};
use volterra_split::weights::SamplingPlan;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckDoubling,
    Hardy,
    SplitCriteria,
    RlCriteria,
    OpNorm,
    SplitExperiment,
    Orthopoly,
    Gram,
    Witness,
    Lemma35,
    Multiplier,
    Counterexample,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckDoubling => "check-doubling",
            Command::Hardy => "hardy",
            Command::SplitCriteria => "split-criteria",
            Command::RlCriteria => "rl-criteria",
            Command::OpNorm => "op-norm",
            Command::SplitExperiment => "split-experiment",
            Command::Orthopoly => "orthopoly",
            Command::Gram => "gram",
            Command::Witness => "witness",
            Command::Lemma35 => "lemma35",
            Command::Multiplier => "multiplier",
            Command::Counterexample => "counterexample",
        }
    }
}

/// Expressions and parameters. Unset fields take per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    pub u: Option<String>,
    pub v: Option<String>,
    /// Weight for `check-doubling` and `orthopoly`.
    pub w: Option<String>,
    pub phi: Option<String>,
    /// Coefficients `a_0, ..., a_n`.
    pub kernel: Option<Vec<String>>,
    /// Riemann-Liouville order.
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    /// Polynomial degree.
    pub n: Option<usize>,
    /// Interval end, or truncation point for `op-norm`.
    pub r: Option<f64>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub a: Option<f64>,
}

/// `2^min_log2, 2^(min_log2 + 1), ..., 2^max_log2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub min_log2: i32,
    pub max_log2: i32,
}

impl Ladder {
    pub fn points(&self) -> Vec<f64> {
        (self.min_log2..=self.max_log2).map(|k| 2f64.powi(k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub criteria: CriteriaOptions,
    pub sampling: SamplingPlan,
    pub grid: GridSpec,
    pub norm: NormOptions,
    /// Relative change across the top two rungs below which a norm is stable.
    pub stable_tol: f64,
    /// Target matrix size `N` of a discretization.
    pub points: Option<usize>,
    pub ladder: Option<Ladder>,
    /// Root-spacing floor as a fraction of the first rung.
    pub floor_fraction: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            criteria: CriteriaOptions::default(),
            sampling: SamplingPlan::default(),
            grid: GridSpec::default(),
            norm: NormOptions::default(),
            stable_tol: 0.01,
            points: None,
            ladder: None,
            floor_fraction: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    /// Standard output when unset.
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Output,
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

impl RunConfig {
    /// Fills every unset input with the default of the command, so that the
    /// echoed config alone reproduces the run.
    pub fn resolve(mut self) -> RunConfig {
        let i = &mut self.inputs;
        let nu = &mut self.numerics;
        let s = |x: &str| x.to_string();
        match self.command {
            Command::Counterexample => {
                fill(&mut i.u, s("exp(-x)"));
                fill(&mut i.v, s("exp(-x)"));
                fill(&mut i.alpha, 2.0);
                fill(&mut nu.points, 2048);
                fill(&mut nu.ladder, Ladder { min_log2: 4, max_log2: 8 });
            }
            Command::Hardy | Command::SplitCriteria | Command::OpNorm | Command::SplitExperiment => {
                fill(&mut i.u, s("1"));
                fill(&mut i.v, s("1/x"));
                fill(&mut i.kernel, vec![s("1")]);
                fill(&mut i.r, 1024.0);
                fill(&mut nu.points, if self.command == Command::OpNorm { 2048 } else { 512 });
                fill(&mut nu.ladder, Ladder { min_log2: 4, max_log2: 10 });
            }
            Command::RlCriteria => {
                fill(&mut i.u, s("1"));
                fill(&mut i.v, s("(1+x)^(-2)"));
                fill(&mut i.alpha, 2.0);
            }
            Command::CheckDoubling | Command::Orthopoly => {
                fill(&mut i.w, s("1"));
                fill(&mut i.n, 2);
                fill(&mut i.r, 1.0);
                fill(&mut nu.ladder, Ladder { min_log2: 2, max_log2: 12 });
            }
            Command::Gram | Command::Witness => {
                fill(&mut i.u, s("1"));
                fill(&mut i.n, 1);
                fill(&mut i.r, 1.0);
                fill(&mut nu.ladder, Ladder { min_log2: 2, max_log2: 12 });
            }
            Command::Lemma35 => {
                fill(&mut i.beta, 0.75);
                fill(&mut i.gamma, 0.5);
                fill(&mut i.a, 0.25);
            }
            Command::Multiplier => {
                fill(&mut i.phi, s("1"));
                fill(&mut i.u, s("(1+x)^2"));
                fill(&mut i.v, s("(1+x)^(-1)"));
                fill(&mut i.l, 1);
                fill(&mut i.m, 0);
            }
        }
        fill(&mut i.delta, self.numerics.criteria.delta);
        self
    }
}

/// Sets `value` at the dotted `path`, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let bad = || CliError::Config(format!("cannot set `{path}`"));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    for (i, part) in parts.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().ok_or_else(bad)?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// `key=value`, with the value read as JSON and otherwise taken as a string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("expected key=value, got `{s}`")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// A config file, or a report whose embedded config is reused.
pub fn load(text: &str, origin: &str) -> Result<Value, CliError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    match v {
        Value::Object(mut o) if o.contains_key("schema_version") => {
            o.remove("config").ok_or_else(|| CliError::Config(format!("{origin}: report without a config")))
        }
        Value::Object(_) => Ok(v),
        _ => Err(CliError::Config(format!("{origin}: expected a JSON object"))),
    }
}

pub fn from_value(v: Value) -> Result<RunConfig, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}
