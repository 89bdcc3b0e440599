use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use qnflow_core::FlowConfig;

/// Serializable copy of [`FlowConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub t_max: f64,
    pub grad_tol: f64,
    pub discard_eps: f64,
    pub drift_tol: f64,
    pub record_stride: usize,
}

impl From<FlowConfig> for ConfigSnapshot {
    fn from(c: FlowConfig) -> Self {
        ConfigSnapshot {
            abs_tol: c.abs_tol,
            rel_tol: c.rel_tol,
            t_max: c.t_max,
            grad_tol: c.grad_tol,
            discard_eps: c.discard_eps,
            drift_tol: c.drift_tol,
            record_stride: c.record_stride,
        }
    }
}

impl From<ConfigSnapshot> for FlowConfig {
    fn from(c: ConfigSnapshot) -> Self {
        FlowConfig {
            abs_tol: c.abs_tol,
            rel_tol: c.rel_tol,
            t_max: c.t_max,
            grad_tol: c.grad_tol,
            discard_eps: c.discard_eps,
            drift_tol: c.drift_tol,
            record_stride: c.record_stride,
        }
    }
}

/// Everything needed to repeat a run: the exact arguments, the resolved
/// seed and configuration, plus a few facts about the result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: ConfigSnapshot,
    pub dims: Map<String, Value>,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub summary: Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: u64, config: FlowConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            seed,
            config: config.into(),
            dims: Map::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            summary: Map::new(),
        }
    }

    pub fn dim(mut self, key: &str, value: usize) -> Self {
        self.dims.insert(key.to_string(), value.into());
        self
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// JSON numbers cannot hold NaN or infinities; store those as strings.
pub fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}
