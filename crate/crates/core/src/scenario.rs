//! Scenario files and batch runs.
//!
//! A scenario names a system, an adversary, a horizon, a seed range, the
//! analyses to run on every seed, and what the outcome is expected to be.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit, audit_chains, refute_with, AuditReport};
use crate::error::{Error, Result};
use crate::history::extract_operations;
use crate::linearize::{find_linearization_with, DEFAULT_SEARCH_BOUND};
use crate::model::{validate_run, Network, ProcessId, Round, Run, SystemConfig};
use crate::protocol::{by_name, ProtocolSpec};
use crate::sim::{simulate, AdversarySpec, CrashPlan, InvocationPlan};
use crate::trace::{self, digest, digest_bytes};

pub const SCENARIO_SCHEMA: &str = "linchain-scenario/1";
pub const REPORT_SCHEMA: &str = "linchain-report/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub n: usize,
    pub f: usize,
    pub protocol: String,
    /// Channels; the complete network when absent.
    #[serde(default)]
    pub net: Option<Vec<(ProcessId, ProcessId)>>,
}

impl ConfigSpec {
    pub fn to_config(&self) -> Result<SystemConfig> {
        let net = match &self.net {
            Some(edges) => Network::from_edges(edges.iter().copied()),
            None => Network::complete(self.n),
        };
        SystemConfig::with_net(self.n, self.f, &self.protocol, net)
    }
}

/// Half-open seed range `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn single(seed: u64) -> Self {
        Self {
            start: seed,
            end: seed + 1,
        }
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seeds(&self) -> std::ops::Range<u64> {
        self.start..self.end
    }
}

impl std::str::FromStr for SeedRange {
    type Err = Error;

    /// `A..B` (half-open) or a single seed.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Scenario(format!("seed range `{s}` is not of the form A..B"));
        match s.split_once("..") {
            Some((a, b)) => Ok(Self {
                start: a.trim().parse().map_err(|_| bad())?,
                end: b.trim().parse().map_err(|_| bad())?,
            }),
            None => Ok(Self::single(s.trim().parse().map_err(|_| bad())?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Every seed is a legal run, linearizable, clean under the requested
    /// audits, and (when liveness is requested) completes every operation.
    Linearizable,
    /// Some seed violates linearizability or an audit rule; with `refute`,
    /// some refutation yields a legal non-linearizable run.
    Violation,
}

impl std::str::FromStr for Expectation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linearizable" => Ok(Self::Linearizable),
            "violation" => Ok(Self::Violation),
            _ => Err(Error::Scenario(format!("unknown expectation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analyses {
    pub check_lin: bool,
    pub audit: bool,
    pub refute: bool,
    pub liveness: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaveTraces {
    None,
    /// Seeds that fail an assertion, or that exhibit the expected violation.
    #[default]
    Notable,
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub config: ConfigSpec,
    pub adversary: AdversarySpec,
    pub horizon: Round,
    pub seeds: SeedRange,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default)]
    pub save_traces: SaveTraces,
    #[serde(default = "default_bound")]
    pub search_bound: usize,
}

fn default_bound() -> usize {
    DEFAULT_SEARCH_BOUND
}

impl ScenarioSpec {
    /// Parses and checks a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| {
            Error::Scenario(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::Scenario(format!(
                "field `schema`: expected `{SCENARIO_SCHEMA}`, got `{}`",
                self.schema
            )));
        }
        let config = self
            .config
            .to_config()
            .map_err(|e| Error::Constraint(e.to_string()))?;
        by_name(&config).map_err(|e| Error::Constraint(e.to_string()))?;
        if self.horizon == 0 {
            return Err(Error::Constraint("horizon must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Constraint("seed range is empty".into()));
        }
        let crashes = match &self.adversary.crashes {
            CrashPlan::None => 0,
            CrashPlan::Fixed { crashes } => crashes.len(),
            CrashPlan::Random { count, .. } => *count,
        };
        if crashes > config.f {
            return Err(Error::Constraint(format!(
                "crash plan has {crashes} crashes but f = {}",
                config.f
            )));
        }
        if let CrashPlan::Fixed { crashes } = &self.adversary.crashes {
            if let Some(p) = crashes.keys().find(|&&p| p >= config.n) {
                return Err(Error::Constraint(format!("crash plan names process {p}")));
            }
        }
        if let InvocationPlan::Fixed { invocations } = &self.adversary.invocations {
            if let Some(i) = invocations.iter().find(|i| i.process >= config.n || i.round == 0) {
                return Err(Error::Constraint(format!(
                    "invalid planned invocation at process {} round {}",
                    i.process, i.round
                )));
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> Result<String> {
        Ok(digest_bytes(serde_json::to_string(self)?.as_bytes()))
    }
}

/// What happened on one seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub digest: String,
    pub horizon: Round,
    pub quiescent: bool,
    pub operations: usize,
    /// Pending operations at processes that did not crash.
    pub pending_at_correct: usize,
    pub valid: bool,
    pub linearizable: Option<bool>,
    pub aba_violations: usize,
    pub audit_findings: Option<usize>,
    /// Refutations attempted and how many produced a legal
    /// non-linearizable run.
    pub refutations: Option<(usize, usize)>,
    pub errors: Vec<String>,
    /// Assertion failures under a `linearizable` expectation.
    pub failures: Vec<String>,
    /// The seed exhibits a violation.
    pub violation: bool,
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub seeds: u64,
    pub valid: u64,
    pub quiescent: u64,
    pub linearizable: u64,
    pub not_linearizable: u64,
    pub audit_clean: u64,
    pub violations: u64,
    pub refuted: u64,
    pub failed_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub expect: Option<Expectation>,
    pub summary: ScenarioSummary,
    pub passed: bool,
    pub outcomes: Vec<SeedOutcome>,
}

/// Report envelope written by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub command: String,
    pub inputs_digest: String,
    pub results: serde_json::Value,
    pub timing_ms: u64,
}

impl ReportDocument {
    pub fn new(command: &str, inputs_digest: String, results: impl Serialize, started: Instant) -> Result<Self> {
        Ok(Self {
            schema: REPORT_SCHEMA.into(),
            command: command.into(),
            inputs_digest,
            results: serde_json::to_value(results)?,
            timing_ms: started.elapsed().as_millis() as u64,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Runs the requested analyses on one run. Errors from individual analyses
/// are recorded, not propagated.
pub fn analyze_seed(
    spec: &ScenarioSpec,
    protocol: &ProtocolSpec,
    run: &Run,
) -> (SeedOutcome, Vec<(String, Run)>) {
    let mut extra = Vec::new();
    let mut out = SeedOutcome {
        seed: run.seed.unwrap_or_default(),
        digest: digest(run).unwrap_or_default(),
        horizon: run.horizon(),
        quiescent: run.quiescent,
        operations: 0,
        pending_at_correct: 0,
        valid: false,
        linearizable: None,
        aba_violations: 0,
        audit_findings: None,
        refutations: None,
        errors: Vec::new(),
        failures: Vec::new(),
        violation: false,
        trace: None,
    };
    let report = validate_run(run, protocol);
    out.valid = report.is_clean();
    if !out.valid {
        out.failures.push(format!("invalid run: {report}"));
    }
    match extract_operations(run) {
        Ok(ops) => {
            out.operations = ops.len();
            out.pending_at_correct = ops
                .iter()
                .filter(|o| o.is_pending() && !run.crashes.contains_key(&o.process))
                .count();
            out.aba_violations = crate::linearize::aba_violations(&ops).len();
        }
        Err(e) => out.errors.push(e.to_string()),
    }
    let a = &spec.analyses;
    if a.liveness && (!run.quiescent || out.pending_at_correct > 0) {
        out.failures.push(format!(
            "liveness: quiescent={}, {} pending operation(s) at correct processes",
            run.quiescent, out.pending_at_correct
        ));
    }
    if a.check_lin {
        match find_linearization_with(run, spec.search_bound) {
            Ok(res) => {
                out.linearizable = Some(res.is_linearizable());
                if !res.is_linearizable() {
                    out.violation = true;
                    out.failures.push("not linearizable".into());
                }
            }
            Err(e) => out.errors.push(e.to_string()),
        }
    }
    if out.aba_violations > 0 {
        out.violation = true;
    }
    let audit_report: Option<AuditReport> = if a.audit || a.refute {
        match if a.audit { audit(run, spec.config.f) } else { audit_chains(run) } {
            Ok(r) => Some(r),
            Err(e) => {
                out.errors.push(e.to_string());
                None
            }
        }
    } else {
        None
    };
    if let Some(r) = &audit_report {
        let count = r.chains.len() + r.quorum.len();
        if a.audit {
            out.audit_findings = Some(count);
            if count > 0 {
                out.failures.push(format!("audit: {count} finding(s)"));
            }
        }
        if count > 0 {
            out.violation = true;
        }
    }
    if a.refute {
        if let Some(r) = &audit_report {
            let mut tried = 0;
            let mut refuted = 0;
            for finding in r.findings() {
                tried += 1;
                match refute_with(run, protocol, &finding, spec.search_bound) {
                    Ok(res) if res.refuted() => {
                        if refuted == 0 {
                            if let Some(rr) = res.run {
                                extra.push(("refuted".to_string(), rr));
                            }
                        }
                        refuted += 1;
                    }
                    Ok(_) => {}
                    Err(e) => out.errors.push(format!("refute: {e}")),
                }
            }
            out.refutations = Some((tried, refuted));
        }
    }
    if !out.errors.is_empty() {
        out.failures.extend(out.errors.iter().map(|e| format!("error: {e}")));
    }
    (out, extra)
}

/// Simulates and analyzes every seed of the scenario in parallel. Traces go
/// to `out_dir` when given, according to `spec.save_traces`.
pub fn run_scenario(spec: &ScenarioSpec, out_dir: Option<&Path>) -> Result<ScenarioReport> {
    spec.check()?;
    let config = spec.config.to_config()?;
    let protocol = by_name(&config)?;
    let results: Vec<Result<SeedOutcome>> = spec
        .seeds
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let run = simulate(&config, &protocol, &spec.adversary, spec.horizon, seed)?;
            let (mut outcome, extra) = analyze_seed(spec, &protocol, &run);
            let notable = match spec.expect {
                Some(Expectation::Violation) => outcome.violation,
                _ => !outcome.failures.is_empty(),
            };
            let save = match spec.save_traces {
                SaveTraces::None => false,
                SaveTraces::Notable => notable,
                SaveTraces::All => true,
            };
            if let (true, Some(dir)) = (save, out_dir) {
                let path = dir.join(format!("seed-{seed}.trace.json"));
                trace::save(&run, &path)?;
                outcome.trace = Some(path);
                for (tag, r) in extra {
                    trace::save(&r, dir.join(format!("seed-{seed}.{tag}.trace.json")))?;
                }
            }
            Ok(outcome)
        })
        .collect();
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let count = |f: &dyn Fn(&SeedOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let summary = ScenarioSummary {
        seeds: outcomes.len() as u64,
        valid: count(&|o| o.valid),
        quiescent: count(&|o| o.quiescent),
        linearizable: count(&|o| o.linearizable == Some(true)),
        not_linearizable: count(&|o| o.linearizable == Some(false)),
        audit_clean: count(&|o| o.audit_findings == Some(0)),
        violations: count(&|o| o.violation),
        refuted: count(&|o| o.refutations.is_some_and(|(_, k)| k > 0)),
        failed_seeds: outcomes
            .iter()
            .filter(|o| !o.failures.is_empty())
            .map(|o| o.seed)
            .collect(),
    };
    let passed = match spec.expect {
        None => true,
        Some(Expectation::Linearizable) => summary.failed_seeds.is_empty(),
        Some(Expectation::Violation) => {
            summary.valid == summary.seeds
                && summary.violations > 0
                && (!spec.analyses.refute || summary.refuted > 0)
        }
    };
    Ok(ScenarioReport {
        name: spec.name.clone(),
        expect: spec.expect,
        summary,
        passed,
        outcomes,
    })
}
