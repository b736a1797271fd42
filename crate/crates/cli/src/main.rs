//! `linchain`: simulate register protocols, transform runs, check
//! linearizability and audit message chains.
//!
//! Every command prints a report document on stdout and, when an output
//! directory is configured, also writes it there. Exit status is 0 when all
//! requested assertions hold, 1 when one fails, and 2 on errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linchain::audit::{audit as run_audit, refute, AuditReport, Refutation};
use linchain::fuzz::{fuzz, FuzzConfig};
use linchain::history::OpId;
use linchain::linearize::{check_no_aba, find_linearization_with, DEFAULT_SEARCH_BOUND};
use linchain::model::{validate_run, Node, Round, Run};
use linchain::scenario::{run_scenario, Expectation, ReportDocument, ScenarioSpec, SeedRange};
use linchain::sim::{simulate, AdversarySpec, InvocationPlan};
use linchain::trace::{self, digest_bytes};
use linchain::{by_name, extract_operations, delay_future, reorder_operations, SystemConfig};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "linchain", version, about = "Message-chain analysis of register protocols")]
struct Cli {
    /// Directory for traces and reports.
    #[arg(long, global = true, env = "LINCHAIN_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Expect {
    Linearizable,
    Violation,
}

impl From<Expect> for Expectation {
    fn from(e: Expect) -> Self {
        match e {
            Expect::Linearizable => Expectation::Linearizable,
            Expect::Violation => Expectation::Violation,
        }
    }
}

#[derive(Args)]
struct SystemArgs {
    /// Scenario file supplying the system and adversary.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "abd")]
    protocol: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    f: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seed and save its trace.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon: Option<Round>,
    },
    /// Re-execute a trace, validate it, and re-simulate it from its seed.
    Replay { trace: PathBuf },
    /// Validation, operations, linearizability and audits of a trace.
    Analyze {
        trace: PathBuf,
        #[arg(long)]
        f: Option<usize>,
    },
    /// Delay everything outside the past of a node.
    Transform {
        trace: PathBuf,
        /// Pivot node `p:t`.
        #[arg(long, value_parser = parse_node)]
        pivot: Node,
        #[arg(long)]
        delta: Round,
    },
    /// Move operation Y before operation X.
    Reorder {
        trace: PathBuf,
        #[arg(long)]
        x: OpId,
        #[arg(long)]
        y: OpId,
    },
    /// Search for a linearization.
    CheckLin {
        trace: PathBuf,
        #[arg(long, value_enum)]
        expect: Option<Expect>,
        #[arg(long, default_value_t = DEFAULT_SEARCH_BOUND)]
        bound: usize,
    },
    /// Observer, witness and chain audits.
    Audit {
        trace: PathBuf,
        #[arg(long)]
        f: Option<usize>,
        /// Build a refuting run for every finding.
        #[arg(long)]
        refute: bool,
        #[arg(long, value_enum)]
        expect: Option<Expect>,
    },
    /// Sweep seeds of a scenario and shrink failures.
    Fuzz {
        scenario: PathBuf,
        #[arg(long)]
        seeds: Option<SeedRange>,
        #[arg(long)]
        horizon: Option<Round>,
        #[arg(long, value_enum)]
        expect: Option<Expect>,
    },
    /// Run a scenario file.
    RunScenario {
        scenario: PathBuf,
        #[arg(long)]
        seeds: Option<SeedRange>,
        #[arg(long)]
        horizon: Option<Round>,
        #[arg(long)]
        refute: bool,
        #[arg(long, value_enum)]
        expect: Option<Expect>,
    },
}

fn parse_node(s: &str) -> Result<Node, String> {
    let (p, t) = s.split_once(':').ok_or_else(|| format!("node `{s}` is not of the form p:t"))?;
    Ok(Node::new(
        p.parse().map_err(|_| format!("bad process in `{s}`"))?,
        t.parse().map_err(|_| format!("bad time in `{s}`"))?,
    ))
}

struct Outcome {
    command: &'static str,
    inputs: Vec<u8>,
    results: Value,
    ok: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    match dispatch(&cli).and_then(|o| emit(&cli, o, started)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(cli: &Cli, outcome: Outcome, started: Instant) -> Result<bool> {
    let doc = ReportDocument::new(outcome.command, digest_bytes(&outcome.inputs), &outcome.results, started)?;
    let text = doc.to_json()?;
    print!("{text}");
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.report.json", outcome.command)), &text)?;
    }
    Ok(outcome.ok)
}

fn read(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Ok((bytes, text))
}

fn load_trace(path: &Path) -> Result<(Vec<u8>, Run)> {
    let (bytes, text) = read(path)?;
    let run = trace::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    Ok((bytes, run))
}

fn load_scenario(path: &Path) -> Result<(Vec<u8>, ScenarioSpec)> {
    let (bytes, text) = read(path)?;
    let spec = ScenarioSpec::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    Ok((bytes, spec))
}

fn save(cli: &Cli, name: &str, run: &Run) -> Result<Option<PathBuf>> {
    let Some(dir) = &cli.out else { return Ok(None) };
    let path = dir.join(name);
    trace::save(run, &path)?;
    Ok(Some(path))
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.trim_end_matches(".json").trim_end_matches(".trace").to_string()
}

fn expectation_met(expect: Option<Expect>, violation: bool) -> bool {
    match expect {
        None => true,
        Some(Expect::Linearizable) => !violation,
        Some(Expect::Violation) => violation,
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Simulate { system, seed, horizon } => simulate_cmd(cli, system, *seed, *horizon),
        Command::Replay { trace } => replay_cmd(trace),
        Command::Analyze { trace, f } => analyze_cmd(trace, *f),
        Command::Transform { trace, pivot, delta } => {
            let (inputs, run) = load_trace(trace)?;
            let (r2, cert) = delay_future(&run, *pivot, *delta)?;
            let saved = save(cli, &format!("{}.delayed.trace.json", stem(trace)), &r2)?;
            Ok(Outcome {
                command: "transform",
                inputs,
                results: json!({ "certificate": cert, "trace": saved }),
                ok: cert.passed(),
            })
        }
        Command::Reorder { trace, x, y } => {
            let (inputs, run) = load_trace(trace)?;
            let (r2, cert) = reorder_operations(&run, *x, *y)?;
            let saved = save(cli, &format!("{}.reordered.trace.json", stem(trace)), &r2)?;
            Ok(Outcome {
                command: "reorder",
                inputs,
                results: json!({ "certificate": cert, "trace": saved }),
                ok: cert.passed(),
            })
        }
        Command::CheckLin { trace, expect, bound } => {
            let (inputs, run) = load_trace(trace)?;
            let res = find_linearization_with(&run, *bound)?;
            let aba = check_no_aba(&run)?;
            Ok(Outcome {
                command: "check-lin",
                inputs,
                ok: expectation_met(*expect, !res.is_linearizable()),
                results: json!({ "result": res, "aba": aba }),
            })
        }
        Command::Audit { trace, f, refute: do_refute, expect } => audit_cmd(cli, trace, *f, *do_refute, *expect),
        Command::Fuzz { scenario, seeds, horizon, expect } => {
            let (inputs, spec) = load_scenario(scenario)?;
            let mut cfg = FuzzConfig::new(
                spec.config.to_config()?,
                spec.adversary.clone(),
                horizon.unwrap_or(spec.horizon),
                seeds.unwrap_or(spec.seeds),
            );
            cfg.search_bound = spec.search_bound;
            let report = fuzz(&cfg, cli.out.as_deref())?;
            let expect = expect.or(spec.expect.map(|e| match e {
                Expectation::Linearizable => Expect::Linearizable,
                Expectation::Violation => Expect::Violation,
            }));
            Ok(Outcome {
                command: "fuzz",
                inputs,
                ok: expectation_met(expect.or(Some(Expect::Linearizable)), !report.passed()),
                results: serde_json::to_value(&report)?,
            })
        }
        Command::RunScenario { scenario, seeds, horizon, refute: do_refute, expect } => {
            let (inputs, mut spec) = load_scenario(scenario)?;
            if let Some(s) = seeds {
                spec.seeds = *s;
            }
            if let Some(h) = horizon {
                spec.horizon = *h;
            }
            if *do_refute {
                spec.analyses.refute = true;
            }
            if let Some(e) = expect {
                spec.expect = Some((*e).into());
            }
            let report = run_scenario(&spec, cli.out.as_deref())?;
            Ok(Outcome {
                command: "run-scenario",
                inputs,
                ok: report.passed,
                results: serde_json::to_value(&report)?,
            })
        }
    }
}

fn simulate_cmd(cli: &Cli, system: &SystemArgs, seed: u64, horizon: Option<Round>) -> Result<Outcome> {
    let (inputs, config, adversary, default_horizon) = match &system.scenario {
        Some(path) => {
            let (bytes, spec) = load_scenario(path)?;
            (bytes, spec.config.to_config()?, spec.adversary, spec.horizon)
        }
        None => {
            let config = SystemConfig::new(system.n, system.f, &system.protocol)?;
            let adversary = AdversarySpec::default()
                .with_invocations(InvocationPlan::Random {
                    percent: 20,
                    until: 60,
                    max_ops: 2 * system.n,
                    read_percent: 50,
                })
                .quiescing();
            let args = format!("{} {} {}", system.protocol, system.n, system.f);
            (args.into_bytes(), config, adversary, 200)
        }
    };
    let protocol = by_name(&config)?;
    let run = simulate(&config, &protocol, &adversary, horizon.unwrap_or(default_horizon), seed)?;
    let saved = save(cli, &format!("{}-seed-{seed}.trace.json", config.protocol), &run)?;
    let ops = extract_operations(&run)?;
    Ok(Outcome {
        command: "simulate",
        inputs,
        results: json!({
            "seed": seed,
            "digest": trace::digest(&run)?,
            "horizon": run.horizon(),
            "quiescent": run.quiescent,
            "crashes": run.crashes,
            "operations": ops.len(),
            "pending": ops.iter().filter(|o| o.is_pending()).count(),
            "trace": saved,
        }),
        ok: true,
    })
}

fn replay_cmd(path: &Path) -> Result<Outcome> {
    let (inputs, run) = load_trace(path)?;
    let protocol = by_name(&run.config)?;
    let validation = validate_run(&run, &protocol);
    let digest = trace::digest(&run)?;
    let reproduced = match (run.seed, &run.adversary) {
        (Some(seed), Some(adv)) => {
            let again = simulate(&run.config, &protocol, adv, run.horizon(), seed)?;
            Some(trace::digest(&again)? == digest)
        }
        _ => None,
    };
    Ok(Outcome {
        command: "replay",
        inputs,
        ok: validation.is_clean() && reproduced != Some(false),
        results: json!({
            "digest": digest,
            "horizon": run.horizon(),
            "validation": validation,
            "reproduced": reproduced,
        }),
    })
}

fn analyze_cmd(path: &Path, f: Option<usize>) -> Result<Outcome> {
    let (inputs, run) = load_trace(path)?;
    let protocol = by_name(&run.config)?;
    let validation = validate_run(&run, &protocol);
    let ops = extract_operations(&run)?;
    let lin = find_linearization_with(&run, DEFAULT_SEARCH_BOUND);
    let report = run_audit(&run, f.unwrap_or(run.config.f))?;
    Ok(Outcome {
        command: "analyze",
        inputs,
        ok: validation.is_clean(),
        results: json!({
            "validation": validation,
            "operations": ops,
            "linearizability": match lin {
                Ok(r) => serde_json::to_value(r)?,
                Err(e) => json!({ "error": e.to_string() }),
            },
            "aba": check_no_aba(&run)?,
            "audit": report,
        }),
    })
}

fn audit_cmd(cli: &Cli, path: &Path, f: Option<usize>, do_refute: bool, expect: Option<Expect>) -> Result<Outcome> {
    let (inputs, run) = load_trace(path)?;
    let report: AuditReport = run_audit(&run, f.unwrap_or(run.config.f))?;
    let mut refutations: Vec<Value> = Vec::new();
    let mut refuted = 0;
    if do_refute {
        for (k, finding) in report.findings().iter().enumerate() {
            match refute(&run, finding) {
                Ok(r) => {
                    let saved = match &r.run {
                        Some(r2) if r.refuted() => save(cli, &format!("{}.refuted-{k}.trace.json", stem(path)), r2)?,
                        _ => None,
                    };
                    refuted += r.refuted() as usize;
                    refutations.push(refutation_json(&r, saved)?);
                }
                Err(e) => refutations.push(json!({ "finding": finding, "error": e.to_string() })),
            }
        }
    }
    let violation = !report.is_clean();
    let ok = match expect {
        Some(Expect::Violation) if do_refute => violation && refuted > 0,
        other => expectation_met(other, violation),
    };
    Ok(Outcome {
        command: "audit",
        inputs,
        ok,
        results: json!({ "report": report, "refutations": refutations, "refuted": refuted }),
    })
}

fn refutation_json(r: &Refutation, trace: Option<PathBuf>) -> Result<Value> {
    let mut v = serde_json::to_value(r)?;
    v["refuted"] = json!(r.refuted());
    v["trace"] = json!(trace);
    Ok(v)
}
