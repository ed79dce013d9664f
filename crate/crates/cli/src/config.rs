//! Flag / config-file merging. Flags win over the config file, which wins
//! over the built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fraclab_core::{Params, QuadSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// Dimension
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Fractional order, in (0, 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Integrability exponent, > 1
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Power of the nonlinearity u^q
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Perturbation exponent of the supersolution profile
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Seed for every random draw of the run
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo sample budget
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_budget: Option<usize>,
    /// Relative tolerance of the adaptive quadrature
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// JSON file with default values for any flag (keys as flag names, `-` → `_`)
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Fully resolved shared settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub n: Option<usize>,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub sigma: Option<f64>,
    pub quad: QuadSpec,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Settings {
    pub fn resolve(c: &Common) -> Self {
        let mut quad = QuadSpec::default();
        if let Some(seed) = c.seed {
            quad.seed = seed;
        }
        if let Some(b) = c.mc_budget {
            quad.mc_budget = b;
        }
        if let Some(t) = c.rel_tol {
            quad.rel_tol = t;
        }
        Self {
            n: c.n,
            s: c.s,
            p: c.p,
            q: c.q,
            sigma: c.sigma,
            quad,
            threads: c.threads,
            out: c.out.clone(),
            format: c.format.unwrap_or_default(),
        }
    }

    /// `(n, s, p)` plus `q` and `sigma` when given.
    pub fn params(&self) -> Result<Params, CliError> {
        let n = self.n.ok_or(CliError::Usage("--n is required".into()))?;
        let s = self.s.ok_or(CliError::Usage("--s is required".into()))?;
        let p = self.p.ok_or(CliError::Usage("--p is required".into()))?;
        let params = Params { n, s, p, q: self.q, sigma: self.sigma };
        params.validate()?;
        Ok(params)
    }
}

/// What a run was asked to do, after merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub settings: Settings,
    pub args: Value,
}

pub fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Usage("config file must hold a JSON object".into())),
        Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
    }
}

/// Overlays the set fields of `flags` on `file` and reads the result back.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: &Map<String, Value>) -> Result<T, CliError> {
    let Value::Object(set) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("flag structs serialize to objects")
    };
    let mut merged = file.clone();
    merged.extend(set.into_iter().filter(|(_, v)| !v.is_null()));
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let flags = Common { n: Some(2), seed: Some(9), ..Common::default() };
        let file = serde_json::json!({"n": 1, "s": 0.5, "mc_budget": 1000, "unrelated": true});
        let merged = merge(&flags, file.as_object().unwrap()).unwrap();
        assert_eq!(merged.n, Some(2));
        assert_eq!(merged.s, Some(0.5));
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.mc_budget, Some(1000));
        let s = Settings::resolve(&merged);
        assert_eq!(s.quad.mc_budget, 1000);
        assert_eq!(s.quad.rel_tol, QuadSpec::default().rel_tol);
    }

    #[test]
    fn bad_types_in_the_file_are_usage_errors() {
        let file = serde_json::json!({"n": "two"});
        assert!(matches!(merge(&Common::default(), file.as_object().unwrap()), Err(CliError::Usage(_))));
    }

    #[test]
    fn run_config_round_trips() {
        let common = Common { n: Some(2), s: Some(0.5), p: Some(2.0), q: Some(4.0), ..Common::default() };
        let rc = RunConfig {
            command: "supersolution".into(),
            settings: Settings::resolve(&common),
            args: serde_json::json!({"radii": [1.0, 10.0]}),
        };
        let text = serde_json::to_string(&rc).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), rc);
    }
}
