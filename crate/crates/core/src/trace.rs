//! Trace documents: one JSON document per run.
//!
//! Fields appear in a fixed order and maps are sorted, so two traces are
//! byte-identical iff they describe the same run. Payloads are lowercase hex.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{JointAction, Payload, ProcessId, Round, Run, SystemConfig};
use crate::sim::AdversarySpec;

pub const TRACE_SCHEMA: &str = "linchain-trace/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub schema: String,
    pub config: SystemConfig,
    pub seed: Option<u64>,
    pub adversary: Option<AdversarySpec>,
    pub horizon: Round,
    pub quiescent: bool,
    pub crashes: BTreeMap<ProcessId, Round>,
    pub initial: Vec<Payload>,
    pub rounds: Vec<JointAction>,
}

impl From<&Run> for TraceDocument {
    fn from(run: &Run) -> Self {
        Self {
            schema: TRACE_SCHEMA.into(),
            config: run.config.clone(),
            seed: run.seed,
            adversary: run.adversary.clone(),
            horizon: run.horizon(),
            quiescent: run.quiescent,
            crashes: run.crashes.clone(),
            initial: run.initial.clone(),
            rounds: run.rounds.clone(),
        }
    }
}

impl TraceDocument {
    pub fn into_run(self) -> Result<Run> {
        if self.schema != TRACE_SCHEMA {
            return Err(Error::Trace(format!(
                "unsupported schema `{}` (expected `{TRACE_SCHEMA}`)",
                self.schema
            )));
        }
        self.config.check()?;
        if self.horizon != self.rounds.len() {
            return Err(Error::Trace(format!(
                "horizon {} but {} rounds",
                self.horizon,
                self.rounds.len()
            )));
        }
        if self.initial.len() != self.config.n {
            return Err(Error::Trace(format!(
                "{} initial values for {} processes",
                self.initial.len(),
                self.config.n
            )));
        }
        Ok(Run {
            config: self.config,
            initial: self.initial,
            rounds: self.rounds,
            crashes: self.crashes,
            quiescent: self.quiescent,
            seed: self.seed,
            adversary: self.adversary,
        })
    }
}

/// Compact canonical JSON, newline-terminated.
pub fn to_json(run: &Run) -> Result<String> {
    let mut s = serde_json::to_string(&TraceDocument::from(run))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<Run> {
    serde_json::from_str::<TraceDocument>(text)?.into_run()
}

/// `sha256:<hex>` of the canonical JSON.
pub fn digest(run: &Run) -> Result<String> {
    Ok(digest_bytes(to_json(run)?.as_bytes()))
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

pub fn save(run: &Run, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json(run)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
