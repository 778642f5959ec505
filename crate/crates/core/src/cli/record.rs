//! Persisted results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour::{DipParams, SolvabilityCertificate};
use crate::spectral::EigenStructure;
use crate::verify::CheckResult;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueEntry {
    pub value: C64,
    pub multiplicity: usize,
}

pub fn eigenvalue_entries(eig: &EigenStructure) -> Vec<EigenvalueEntry> {
    eig.blocks
        .iter()
        .map(|b| EigenvalueEntry {
            value: b.value,
            multiplicity: b.multiplicity,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Summary {
    pub r0: f64,
    pub argmin: DipParams,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    #[serde(default)]
    pub certificate: Option<SolvabilityCertificate>,
    #[serde(default)]
    pub eigenvalues: Vec<EigenvalueEntry>,
    /// Named residuals, e.g. the final fixed-point residual.
    #[serde(default)]
    pub residuals: BTreeMap<String, f64>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub checks: Vec<CheckResult>,
    #[serde(default)]
    pub r0: Option<R0Summary>,
    /// Rows of the root perturbation `X`.
    #[serde(default)]
    pub x: Vec<Vec<C64>>,
}

impl ResultRecord {
    pub fn new(task: &str, config_text: &str) -> Self {
        Self {
            task: task.into(),
            config_hash: config_hash(config_text),
            started: now(),
            finished: String::new(),
            certificate: None,
            eigenvalues: Vec::new(),
            residuals: BTreeMap::new(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            r0: None,
            x: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished = now();
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Inserts a metric, skipping non-finite values (JSON has no representation for them).
    pub fn metric(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.into(), value);
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
