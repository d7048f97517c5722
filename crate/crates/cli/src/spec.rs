//! Experiment descriptors and their parameter schemas.

use crate::error::{config, CliError, CliResult};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelCheck,
    RenewalLlt,
    Partition,
    FreeEnergy,
    HlStats,
    LemmaCheck,
    FracMoment,
    Monotonicity,
    CoarseGrain,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::RenewalLlt => "renewal-llt",
            Command::Partition => "partition",
            Command::FreeEnergy => "free-energy",
            Command::HlStats => "hl-stats",
            Command::LemmaCheck => "lemma-check",
            Command::FracMoment => "frac-moment",
            Command::Monotonicity => "monotonicity",
            Command::CoarseGrain => "coarse-grain",
        }
    }

    /// Parameter names with their defaults. The default's JSON type fixes
    /// the accepted type: integers stay integers, floats accept any number.
    pub fn schema(self) -> Vec<(&'static str, Value)> {
        let mut s = vec![("kernel", json!("simple")), ("dim", json!(3))];
        let extra: Vec<(&'static str, Value)> = match self {
            Command::KernelCheck => vec![("rate", json!(1.0)), ("t_lclt", json!(200.0)), ("green_tol", json!(1e-4)), ("lclt_tol", json!(0.02))],
            Command::RenewalLlt => vec![("rho", json!(0.0)), ("t", json!(1e4)), ("h", json!(0.05)), ("tol", json!(0.05))],
            Command::Partition => vec![
                ("rho", json!(1.0)),
                ("beta", json!(0.5)),
                ("t", json!(10.0)),
                ("method", json!("volterra")),
                ("n", json!(10_000)),
                ("h", json!(0.025)),
            ],
            Command::FreeEnergy => vec![
                ("rho", json!(1.0)),
                ("beta", json!(0.5)),
                ("t", json!(50.0)),
                ("h", json!(0.05)),
                ("n_disorder", json!(16)),
                ("n_inner", json!(0)),
            ],
            Command::HlStats => vec![("rho", json!(1.0)), ("L", json!(200.0)), ("zeta", json!(3.0)), ("a2", json!(50.0)), ("n", json!(2000))],
            Command::LemmaCheck => vec![
                ("lemma", json!("tilted-law")),
                ("rho", json!(1.0)),
                ("L", json!(200.0)),
                ("zeta", json!(3.0)),
                ("a2", json!(50.0)),
                ("delta", json!(20.0)),
                ("n", json!(10_000)),
                ("instances", json!(20)),
                ("n_points", json!(50)),
                ("log_l", json!(40.0)),
                ("h_count", json!(1.0)),
                ("threshold_d", json!(1.0)),
                ("tail_max", json!(0.05)),
            ],
            Command::FracMoment => vec![
                ("rho", json!(1.0)),
                ("z", json!(1.05)),
                ("gamma", json!(0.75)),
                ("t", json!(20.0)),
                ("n_disorder", json!(32)),
                ("h", json!(0.05)),
            ],
            Command::Monotonicity => vec![
                ("rho", json!(0.0)),
                ("rho_prime", json!(1.0)),
                ("beta", json!(0.5)),
                ("t", json!(20.0)),
                ("n_outer", json!(10_000)),
                ("n_inner", json!(1)),
            ],
            Command::CoarseGrain => vec![
                ("rho", json!(1.0)),
                ("z", json!(1.1)),
                ("m", json!(3)),
                ("L", json!(10.0)),
                ("h", json!(0.05)),
                ("gamma", json!(0.75)),
            ],
        };
        s.extend(extra);
        s
    }

    /// The parameter `--grid-step` overrides, if any.
    pub fn grid_param(self) -> Option<&'static str> {
        match self {
            Command::RenewalLlt | Command::Partition | Command::FreeEnergy | Command::FracMoment | Command::CoarseGrain => Some("h"),
            _ => None,
        }
    }
}

/// One experiment: what to run, with which parameters, seed and output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub seed: u64,
    #[serde(alias = "out")]
    pub out_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
}

impl ExperimentSpec {
    pub fn new(command: Command, seed: u64, out_path: impl Into<PathBuf>) -> Self {
        ExperimentSpec { command, params: Map::new(), seed, out_path: out_path.into(), workers: None, grid_step: None }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad experiment file: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Check every supplied parameter against the schema and fill in defaults.
    pub fn resolve(&self) -> CliResult<Params> {
        let schema = self.command.schema();
        let mut out = Map::new();
        if let Some(key) = self.params.keys().find(|k| !schema.iter().any(|(s, _)| s == k)) {
            return config(format!("unknown parameter '{key}' for {}", self.command.name()));
        }
        for (key, default) in schema {
            let mut v = self.params.get(key).cloned().unwrap_or_else(|| default.clone());
            if Some(key) == self.command.grid_param() {
                if let Some(h) = self.grid_step {
                    v = json!(h);
                }
            }
            check_type(self.command, key, &default, &v)?;
            out.insert(key.to_string(), v);
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return config("workers must be at least 1");
            }
        }
        if let Some(h) = self.grid_step {
            if !(h > 0.0 && h.is_finite()) {
                return config("grid step must be positive");
            }
        }
        Ok(Params(out))
    }
}

fn check_type(cmd: Command, key: &str, default: &Value, v: &Value) -> CliResult<()> {
    let ok = match default {
        Value::String(_) => v.is_string(),
        Value::Number(n) if n.is_u64() => v.is_u64(),
        Value::Number(_) => v.as_f64().is_some_and(f64::is_finite),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        let want = match default {
            Value::String(_) => "a string",
            Value::Number(n) if n.is_u64() => "a non-negative integer",
            _ => "a finite number",
        };
        config(format!("parameter '{key}' of {} must be {want}, got {v}", cmd.name()))
    }
}

/// Resolved parameters: every schema key present and type-checked.
#[derive(Clone, Debug, PartialEq)]
pub struct Params(pub Map<String, Value>);

impl Params {
    pub fn f(&self, key: &str) -> f64 {
        self.0[key].as_f64().expect("schema-checked number")
    }

    pub fn u(&self, key: &str) -> usize {
        self.0[key].as_u64().expect("schema-checked integer") as usize
    }

    pub fn s(&self, key: &str) -> &str {
        self.0[key].as_str().expect("schema-checked string")
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.clone())
    }
}

/// Parse `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_assignment(text: &str) -> CliResult<(String, Value)> {
    let Some((k, v)) = text.split_once('=') else {
        return config(format!("expected key=value, got '{text}'"));
    };
    let k = k.trim();
    if k.is_empty() {
        return config(format!("empty parameter name in '{text}'"));
    }
    let v = v.trim();
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}
