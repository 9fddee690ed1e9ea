//! Experiment configuration: one JSON document shared by every subcommand,
//! with `--set key=value` overrides applied before validation.

use std::path::Path;

use qaoi_core::sim::{InitialQuery, Scheduler};
use qaoi_core::SubMdpParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Discount factor of the discounted baseline when the config has none.
pub const DEFAULT_BETA: f64 = 0.99;
/// Spacing of the cost grid used by `sweep` and `verify`.
pub const DEFAULT_C_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepField {
    Lambda,
    Gamma,
    P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub field: SweepField,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arms: Vec<ArmSpec>,
    pub d_max: usize,
    pub channels: usize,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub policies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_query: Option<InitialQuery>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_step: Option<f64>,
}

/// One point of the sweep: the swept value (if any) and the arms it yields.
#[derive(Debug, Clone)]
pub struct Point {
    pub value: Option<f64>,
    pub arms: Vec<SubMdpParams>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if self.arms.is_empty() {
            return bad("arms", "at least one arm is required".into());
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if let Err(e) = SubMdpParams::new(arm.lambda, arm.gamma, arm.p, self.d_max) {
                return bad(&format!("arms[{i}]"), e.to_string());
            }
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs", "must be at least 1".into());
        }
        if self.burn_in.unwrap_or(0) >= self.horizon {
            return bad("burn_in", format!("must be below horizon {}", self.horizon));
        }
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta < 1.0) {
                return bad("beta", format!("must lie in (0, 1), got {beta}"));
            }
        }
        if let Some(step) = self.c_step {
            if !(step > 0.0 && step.is_finite()) {
                return bad("c_step", format!("must be positive, got {step}"));
            }
        }
        for (i, name) in self.policies.iter().enumerate() {
            if let Err(e) = Scheduler::from_name(name, self.beta()) {
                return bad(&format!("policies[{i}]"), e.to_string());
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return bad("sweep.values", "must not be empty".into());
            }
            for (k, &v) in sweep.values.iter().enumerate() {
                for arm in &self.arms {
                    let (l, g, p) = swept(arm, sweep.field, v);
                    if let Err(e) = SubMdpParams::new(l, g, p, self.d_max) {
                        return bad(&format!("sweep.values[{k}]"), e.to_string());
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks the fields only the simulator needs.
    pub fn validate_network(&self) -> Result<(), CliError> {
        let n = self.arms.len();
        if self.channels == 0 || self.channels >= n {
            return Err(CliError::Config(format!(
                "channels: need 0 < channels < {n} arms, got {}",
                self.channels
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(DEFAULT_BETA)
    }

    pub fn c_step(&self) -> f64 {
        self.c_step.unwrap_or(DEFAULT_C_STEP)
    }

    pub fn schedulers(&self) -> Vec<Scheduler> {
        self.policies
            .iter()
            .map(|n| Scheduler::from_name(n, self.beta()).expect("validated"))
            .collect()
    }

    pub fn points(&self) -> Vec<Point> {
        let build = |value: Option<f64>| Point {
            value,
            arms: self
                .arms
                .iter()
                .map(|arm| {
                    let (l, g, p) = match (value, &self.sweep) {
                        (Some(v), Some(s)) => swept(arm, s.field, v),
                        _ => (arm.lambda, arm.gamma, arm.p),
                    };
                    SubMdpParams::new(l, g, p, self.d_max).expect("validated")
                })
                .collect(),
        };
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| build(Some(v))).collect(),
            None => vec![build(None)],
        }
    }

    /// SHA-256 of the effective configuration, after overrides.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

fn swept(arm: &ArmSpec, field: SweepField, v: f64) -> (f64, f64, f64) {
    match field {
        SweepField::Lambda => (v, arm.gamma, arm.p),
        SweepField::Gamma => (arm.lambda, v, arm.p),
        SweepField::P => (arm.lambda, arm.gamma, v),
    }
}

/// Applies `path=value`, where `path` is dot-separated object keys and array
/// positions (`arms.0.lambda`) and `value` is JSON, or a bare string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {assignment:?}: expected key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("--set {assignment:?}: empty key")));
    }
    let mut node = doc;
    for (depth, key) in keys.iter().enumerate() {
        let last = depth + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let len = items.len();
                let slot = key
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| CliError::Config(format!("--set {path}: no element {key} in a list of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Config(format!(
                    "--set {path}: {} is not an object or list",
                    keys[..depth].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last key")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_reach_nested_fields() {
        let mut doc = json!({"runs": 10, "arms": [{"lambda": 0.1}, {"lambda": 0.2}]});
        apply_override(&mut doc, "runs=20").unwrap();
        apply_override(&mut doc, "arms.1.lambda=0.7").unwrap();
        apply_override(&mut doc, "sweep.field=lambda").unwrap();
        assert_eq!(doc, json!({"runs": 20, "arms": [{"lambda": 0.1}, {"lambda": 0.7}], "sweep": {"field": "lambda"}}));
        assert!(apply_override(&mut doc, "arms.5.lambda=1").is_err());
        assert!(apply_override(&mut doc, "runs").is_err());
        assert!(apply_override(&mut doc, "runs.x=1").is_err());
    }
}
