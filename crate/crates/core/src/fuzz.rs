//! Seed sweeps with shrinking.
//!
//! A seed fails when its run is not legal or not linearizable. Failing runs
//! are shrunk by replaying their environment script: first the shortest
//! failing prefix is found by bisection, then invocations are dropped one at
//! a time while the run still fails, then the prefix is trimmed again.
//! Linearizability is closed under prefixes, so a failing prefix stays
//! failing under extension and bisection is sound.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::history::extract_operations;
use crate::linearize::{find_linearization_with, DEFAULT_SEARCH_BOUND};
use crate::model::{validate_run, Round, Run, SystemConfig};
use crate::protocol::{by_name, ProtocolSpec};
use crate::scenario::SeedRange;
use crate::sim::{simulate, AdversarySpec, Script, Step};
use crate::trace::{self, digest};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub config: SystemConfig,
    pub adversary: AdversarySpec,
    pub horizon: Round,
    pub seeds: SeedRange,
    pub search_bound: usize,
    /// How many failing seeds to shrink.
    pub shrink: usize,
}

impl FuzzConfig {
    pub fn new(config: SystemConfig, adversary: AdversarySpec, horizon: Round, seeds: SeedRange) -> Self {
        Self {
            config,
            adversary,
            horizon,
            seeds,
            search_bound: DEFAULT_SEARCH_BOUND,
            shrink: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Invalid,
    NotLinearizable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shrunk {
    pub horizon: Round,
    pub operations: usize,
    pub invocations_removed: usize,
    pub digest: String,
    /// The shrunk run replays to a legal run that still fails.
    pub verified: bool,
    pub trace: Option<PathBuf>,
    #[serde(skip)]
    pub run: Option<Run>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzFailure {
    pub seed: u64,
    pub kind: FailureKind,
    pub detail: String,
    pub digest: String,
    pub horizon: Round,
    pub operations: usize,
    pub trace: Option<PathBuf>,
    pub shrunk: Option<Shrunk>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub seeds: u64,
    pub failures: Vec<FuzzFailure>,
    /// Seeds whose histories exceeded the search bound, with the error.
    pub skipped: Vec<(u64, String)>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

enum Check {
    Pass,
    Fail(FailureKind, String),
    Skip(String),
}

fn check(run: &Run, protocol: &ProtocolSpec, bound: usize) -> Check {
    let report = validate_run(run, protocol);
    if !report.is_clean() {
        return Check::Fail(FailureKind::Invalid, report.to_string());
    }
    match find_linearization_with(run, bound) {
        Ok(res) if res.is_linearizable() => Check::Pass,
        Ok(res) => Check::Fail(
            FailureKind::NotLinearizable,
            serde_json::to_string(&res.verdict).unwrap_or_default(),
        ),
        Err(e) => Check::Skip(e.to_string()),
    }
}

fn fails(run: &Run, protocol: &ProtocolSpec, bound: usize) -> bool {
    matches!(check(run, protocol, bound), Check::Fail(FailureKind::NotLinearizable, _))
}

/// Shrinks a non-linearizable run. Returns the smallest failing replay found.
pub fn shrink(run: &Run, protocol: &ProtocolSpec, bound: usize) -> Result<Option<Shrunk>> {
    let config = &run.config;
    let mut script = Script::of(run);
    let replay = |s: &Script| s.run(config, protocol);
    if !fails(&replay(&script)?, protocol, bound) {
        return Ok(None);
    }
    let before = script.invocations();
    trim(&mut script, config, protocol, bound)?;
    for r in 0..script.rounds.len() {
        for p in 0..config.n {
            if !matches!(script.rounds[r][p], Step::Invoke(_)) {
                continue;
            }
            let saved = std::mem::replace(&mut script.rounds[r][p], Step::Skip);
            if !fails(&replay(&script)?, protocol, bound) {
                script.rounds[r][p] = saved;
            }
        }
    }
    trim(&mut script, config, protocol, bound)?;
    let mut out = replay(&script)?;
    out.seed = run.seed;
    let verified = validate_run(&out, protocol).is_clean() && fails(&out, protocol, bound);
    Ok(Some(Shrunk {
        horizon: out.horizon(),
        operations: extract_operations(&out).map(|o| o.len()).unwrap_or_default(),
        invocations_removed: before - script.invocations(),
        digest: digest(&out)?,
        verified,
        trace: None,
        run: Some(out),
    }))
}

/// Cuts the script to its shortest failing prefix.
fn trim(script: &mut Script, config: &SystemConfig, protocol: &ProtocolSpec, bound: usize) -> Result<()> {
    let (mut lo, mut hi) = (0, script.rounds.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        let prefix = Script {
            crashes: script.crashes.clone(),
            rounds: script.rounds[..mid].to_vec(),
        };
        if fails(&prefix.run(config, protocol)?, protocol, bound) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    script.rounds.truncate(hi);
    Ok(())
}

/// Sweeps the seed range. Failing runs, and their shrunk versions, are
/// written to `out_dir` when given.
pub fn fuzz(cfg: &FuzzConfig, out_dir: Option<&Path>) -> Result<FuzzReport> {
    let protocol = by_name(&cfg.config)?;
    let checked: Vec<Result<(u64, Run, Check)>> = cfg
        .seeds
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let run = simulate(&cfg.config, &protocol, &cfg.adversary, cfg.horizon, seed)?;
            let c = check(&run, &protocol, cfg.search_bound);
            Ok((seed, run, c))
        })
        .collect();
    let mut failures = Vec::new();
    let mut skipped = Vec::new();
    for item in checked {
        let (seed, run, c) = item?;
        let (kind, detail) = match c {
            Check::Pass => continue,
            Check::Skip(e) => {
                skipped.push((seed, e));
                continue;
            }
            Check::Fail(kind, detail) => (kind, detail),
        };
        let mut failure = FuzzFailure {
            seed,
            kind,
            detail,
            digest: digest(&run)?,
            horizon: run.horizon(),
            operations: extract_operations(&run).map(|o| o.len()).unwrap_or_default(),
            trace: None,
            shrunk: None,
        };
        if failures.len() < cfg.shrink && kind == FailureKind::NotLinearizable {
            failure.shrunk = shrink(&run, &protocol, cfg.search_bound)?;
        }
        if let Some(dir) = out_dir {
            let path = dir.join(format!("fuzz-seed-{seed}.trace.json"));
            trace::save(&run, &path)?;
            failure.trace = Some(path);
            if let Some(s) = failure.shrunk.as_mut() {
                if let Some(r) = &s.run {
                    let path = dir.join(format!("fuzz-seed-{seed}.min.trace.json"));
                    trace::save(r, &path)?;
                    s.trace = Some(path);
                }
            }
        }
        failures.push(failure);
    }
    Ok(FuzzReport {
        seeds: cfg.seeds.len(),
        failures,
        skipped,
    })
}
