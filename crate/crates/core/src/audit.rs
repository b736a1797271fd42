//! Audits of register runs: observers and witnesses of operations, quorum
//! bounds, and the message chains a linearizable register must create.
//!
//! Chain rules checked by [`audit_chains`]:
//!
//! * `write_to_read`: a read returning `v != ⊥` is reached by a chain from
//!   `W(v)`;
//! * `chain_to_read_value`: if `Rb` is a completed read with no chain
//!   `Rb ⟿ Yb` to a completed `b`-operation `Yb`, every completed `Xc <_r Rb`
//!   with `c != b` has a chain `Xc ⟿ Yb`;
//! * `chain_to_isolated`: a completed `Yb` running in isolation is reached by
//!   a chain from every `Xa <_r Yb` with `a != b`.
//!
//! [`refute`] turns a finding into a concrete run that no linearizable
//! register could produce.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::causality::{locally_equivalent, CausalIndex};
use crate::error::{Error, Result};
use crate::history::{extract_operations, find_op, OpId, OperationInstance};
use crate::linearize::{aba_violations, linearize, AbaViolation, LinearizationResult, DEFAULT_SEARCH_BOUND};
use crate::model::{validate_run, EnvComponent, Execution, Input, Node, OpKind, ProcessId, Round, Run, ValidationReport, Value};
use crate::protocol::{by_name, ProtocolSpec};
use crate::sim::Engine;
use crate::transform::{delay_future_with, reorder_delta, reorder_operations_with, TransformCertificate};

/// Processes reached by a chain from `X.s` by time `t_{X.e}`, including
/// `X`'s own process.
pub fn observers(index: &CausalIndex, x: &OperationInstance) -> Result<BTreeSet<ProcessId>> {
    let end = x.end.ok_or(Error::PendingOperation(x.id))?;
    let mut set: BTreeSet<ProcessId> = (0..index.n())
        .filter(|&p| index.happens_before(x.start, Node::new(p, end.time)))
        .collect();
    set.insert(x.process);
    Ok(set)
}

/// Processes with a node on some chain from `X.s` to `X.e`, including `X`'s
/// own process.
pub fn witnesses(index: &CausalIndex, x: &OperationInstance) -> Result<BTreeSet<ProcessId>> {
    let end = x.end.ok_or(Error::PendingOperation(x.id))?;
    let reach = index.reach(x.start);
    let mut set: BTreeSet<ProcessId> = (0..index.n())
        .filter(|&p| reach[p] <= index.horizon() && index.happens_before(Node::new(p, reach[p]), end))
        .collect();
    set.insert(x.process);
    Ok(set)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationAudit {
    pub op: OpId,
    pub kind: OpKind,
    pub value: Option<Value>,
    pub start: Node,
    pub end: Option<Node>,
    /// Empty for pending operations.
    pub observers: Vec<ProcessId>,
    pub witnesses: Vec<ProcessId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuorumRule {
    FewObservers,
    FewWitnesses,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumViolation {
    pub rule: QuorumRule,
    pub op: OpId,
    pub count: usize,
    pub f: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainRule {
    WriteToRead,
    ChainToReadValue,
    ChainToIsolated,
}

/// A missing chain `source ⟿ sink`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainViolation {
    pub rule: ChainRule,
    /// `None` when a read returns a value nobody writes.
    pub source: Option<OpId>,
    pub sink: OpId,
    /// The read `Rb` for `chain_to_read_value`.
    pub read: Option<OpId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Finding {
    Chain(ChainViolation),
    Quorum(QuorumViolation),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub f: Option<usize>,
    pub operations: Vec<OperationAudit>,
    pub quorum: Vec<QuorumViolation>,
    pub chains: Vec<ChainViolation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.quorum.is_empty() && self.chains.is_empty()
    }

    pub fn findings(&self) -> Vec<Finding> {
        self.chains
            .iter()
            .cloned()
            .map(Finding::Chain)
            .chain(self.quorum.iter().cloned().map(Finding::Quorum))
            .collect()
    }
}

fn operation_audits(index: &CausalIndex, ops: &[OperationInstance]) -> Result<Vec<OperationAudit>> {
    ops.iter()
        .map(|x| {
            let (obs, wit) = if x.is_completed() {
                (observers(index, x)?, witnesses(index, x)?)
            } else {
                Default::default()
            };
            Ok(OperationAudit {
                op: x.id,
                kind: x.kind,
                value: x.value,
                start: x.start,
                end: x.end,
                observers: obs.into_iter().collect(),
                witnesses: wit.into_iter().collect(),
            })
        })
        .collect()
}

/// Flags completed operations with at most `f` observers or witnesses.
pub fn audit_quorum(run: &Run, f: usize) -> Result<AuditReport> {
    let ops = extract_operations(run)?;
    let index = CausalIndex::new(&Execution::of(run)?);
    let operations = operation_audits(&index, &ops)?;
    let mut quorum = Vec::new();
    for a in operations.iter().filter(|a| a.end.is_some()) {
        if a.observers.len() <= f {
            quorum.push(QuorumViolation {
                rule: QuorumRule::FewObservers,
                op: a.op,
                count: a.observers.len(),
                f,
            });
        }
        if a.witnesses.len() <= f {
            quorum.push(QuorumViolation {
                rule: QuorumRule::FewWitnesses,
                op: a.op,
                count: a.witnesses.len(),
                f,
            });
        }
    }
    Ok(AuditReport {
        f: Some(f),
        operations,
        quorum,
        chains: Vec::new(),
    })
}

pub fn audit_chains(run: &Run) -> Result<AuditReport> {
    let ops = extract_operations(run)?;
    let index = CausalIndex::new(&Execution::of(run)?);
    Ok(AuditReport {
        f: None,
        operations: operation_audits(&index, &ops)?,
        quorum: Vec::new(),
        chains: chain_violations(&index, &ops),
    })
}

/// Both audits.
pub fn audit(run: &Run, f: usize) -> Result<AuditReport> {
    let mut report = audit_quorum(run, f)?;
    let ops = extract_operations(run)?;
    let index = CausalIndex::new(&Execution::of(run)?);
    report.chains = chain_violations(&index, &ops);
    Ok(report)
}

fn chain(index: &CausalIndex, x: &OperationInstance, y: &OperationInstance) -> bool {
    y.end.is_some_and(|e| index.happens_before(x.start, e))
}

pub fn chain_violations(index: &CausalIndex, ops: &[OperationInstance]) -> Vec<ChainViolation> {
    let done: Vec<&OperationInstance> = ops.iter().filter(|o| o.is_completed()).collect();
    let mut out = Vec::new();

    for r in done.iter().filter(|o| o.is_read()) {
        let Some(v) = r.value else { continue };
        match ops.iter().find(|w| w.is_write() && w.value == Some(v)) {
            None => out.push(ChainViolation {
                rule: ChainRule::WriteToRead,
                source: None,
                sink: r.id,
                read: None,
            }),
            Some(w) if !chain(index, w, r) => out.push(ChainViolation {
                rule: ChainRule::WriteToRead,
                source: Some(w.id),
                sink: r.id,
                read: None,
            }),
            Some(_) => {}
        }
    }

    let mut seen = BTreeSet::new();
    for r in done.iter().filter(|o| o.is_read()) {
        for y in done.iter().filter(|y| y.value == r.value && !chain(index, r, y)) {
            for x in done.iter().filter(|x| x.precedes(r) && x.value != r.value) {
                if !chain(index, x, y) && seen.insert((x.id, y.id)) {
                    out.push(ChainViolation {
                        rule: ChainRule::ChainToReadValue,
                        source: Some(x.id),
                        sink: y.id,
                        read: Some(r.id),
                    });
                }
            }
        }
    }

    for y in done.iter().filter(|o| o.isolated) {
        for x in done.iter().filter(|x| x.precedes(y) && x.value != y.value) {
            if !chain(index, x, y) {
                out.push(ChainViolation {
                    rule: ChainRule::ChainToIsolated,
                    source: Some(x.id),
                    sink: y.id,
                    read: None,
                });
            }
        }
    }
    out
}

/// How a refutation run was extended past a prefix of the input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extension {
    /// Length of the prefix that was kept.
    pub prefix: Round,
    /// Processes crashed at the end of the prefix.
    pub crashed: Vec<ProcessId>,
    pub write: Option<OpId>,
    pub read: OpId,
    pub read_value: Option<Value>,
    pub horizon: Round,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refutation {
    pub finding: Finding,
    /// Transformations applied, in order.
    pub certificates: Vec<TransformCertificate>,
    pub extension: Option<Extension>,
    pub validation: ValidationReport,
    /// Whether the constructed run is locally equivalent to the input run.
    /// Refutations that extend a prefix are equivalent to the extended run
    /// instead.
    pub equivalent_to_input: bool,
    pub aba: Vec<AbaViolation>,
    pub verdict: LinearizationResult,
    #[serde(skip)]
    pub run: Option<Run>,
}

impl Refutation {
    pub fn refuted(&self) -> bool {
        !self.verdict.is_linearizable() && self.validation.is_clean()
    }
}

pub fn refute(run: &Run, finding: &Finding) -> Result<Refutation> {
    refute_with(run, &by_name(&run.config)?, finding, DEFAULT_SEARCH_BOUND)
}

/// Builds the run that contradicts linearizability for `finding`, and checks
/// it.
pub fn refute_with(
    run: &Run,
    protocol: &ProtocolSpec,
    finding: &Finding,
    bound: usize,
) -> Result<Refutation> {
    let (result, certificates, extension) = match finding {
        Finding::Chain(v) => match v.rule {
            ChainRule::WriteToRead | ChainRule::ChainToReadValue => {
                check_chain_finding(run, v)?;
                match v.source {
                    None => (run.clone(), Vec::new(), None),
                    Some(x) => {
                        let (r, cert) = move_after(run, protocol, x, v.sink)?;
                        (r, cert.into_iter().collect(), None)
                    }
                }
            }
            ChainRule::ChainToIsolated => {
                check_chain_finding(run, v)?;
                refute_isolated(run, protocol, v)?
            }
        },
        Finding::Quorum(q) => refute_quorum(run, protocol, q)?,
    };
    let ops = extract_operations(&result)?;
    Ok(Refutation {
        finding: finding.clone(),
        certificates,
        validation: validate_run(&result, protocol),
        equivalent_to_input: extension.is_none() && locally_equivalent(run, &result)?,
        extension,
        aba: aba_violations(&ops),
        verdict: linearize(&ops, bound)?,
        run: Some(result),
    })
}

fn check_chain_finding(run: &Run, v: &ChainViolation) -> Result<()> {
    let ops = extract_operations(run)?;
    let index = CausalIndex::new(&Execution::of(run)?);
    let sink = find_op(&ops, v.sink)?;
    if let Some(src) = v.source {
        if chain(&index, find_op(&ops, src)?, sink) {
            return Err(Error::PreconditionFailed(format!("{src} ⟿ {} holds", v.sink)));
        }
    }
    let fresh = chain_violations(&index, &ops);
    if !fresh.contains(v) {
        return Err(Error::PreconditionFailed(format!("finding {v:?} does not hold in this run")));
    }
    Ok(())
}

/// Moves `x` after `y`. If `y` already ends before `x` starts, the run is
/// returned unchanged.
fn move_after(run: &Run, protocol: &ProtocolSpec, x: OpId, y: OpId) -> Result<(Run, Option<TransformCertificate>)> {
    let ops = extract_operations(run)?;
    let (xo, yo) = (find_op(&ops, x)?, find_op(&ops, y)?);
    if yo.precedes(xo) {
        return Ok((run.clone(), None));
    }
    let index = CausalIndex::new(&Execution::of(run)?);
    reorder_delta(&index, xo, yo)?;
    let (r, cert) = reorder_operations_with(run, protocol, x, y)?;
    Ok((r, Some(cert)))
}

type Constructed = (Run, Vec<TransformCertificate>, Option<Extension>);

/// Rounds allowed for each phase of an extension.
fn phase_budget(n: usize) -> usize {
    200 + 40 * n * n
}

/// Drives `engine` with drain choices (move busy processes, deliver the
/// oldest message not sent by a process in `muted`) until `done` holds.
fn drive(
    engine: &mut Engine,
    muted: &BTreeSet<ProcessId>,
    invoke: Option<(ProcessId, Input)>,
    done: impl Fn(&Engine) -> bool,
) -> Result<()> {
    let mut pending_invoke = invoke;
    for _ in 0..phase_budget(engine.n()) {
        if pending_invoke.is_none() && done(engine) {
            return Ok(());
        }
        let round = engine.time() + 1;
        let env = (0..engine.n())
            .map(|i| {
                if engine.is_crashed_in(i, round) {
                    return EnvComponent::Skip;
                }
                if let Some((p, input)) = pending_invoke {
                    if p == i && !engine.has_pending(i) {
                        return EnvComponent::Invoke(input);
                    }
                }
                if !engine.is_idle(i) {
                    return EnvComponent::Move;
                }
                engine
                    .incoming_heads(i)
                    .into_iter()
                    .filter(|(from, _)| !muted.contains(from))
                    .min_by_key(|(from, rec)| (rec.send_round, *from))
                    .map_or(EnvComponent::Skip, |(from, record)| EnvComponent::Deliver { record, from })
            })
            .collect::<Vec<_>>();
        if let Some((p, _)) = pending_invoke {
            if matches!(env[p], EnvComponent::Invoke(_)) {
                pending_invoke = None;
            }
        }
        engine.step(env)?;
    }
    Err(Error::PreconditionFailed(
        "extension did not settle within its round budget".into(),
    ))
}

/// No correct process has work or a deliverable message left.
fn settled(engine: &Engine, muted: &BTreeSet<ProcessId>) -> bool {
    let round = engine.time() + 1;
    (0..engine.n()).filter(|&p| !engine.is_crashed_in(p, round)).all(|p| {
        engine.is_idle(p)
            && !engine.has_pending(p)
            && engine.incoming_heads(p).iter().all(|(from, _)| muted.contains(from))
    })
}

fn last_op_of(run: &Run, p: ProcessId) -> Result<OperationInstance> {
    extract_operations(run)?
        .into_iter()
        .rfind(|o| o.process == p)
        .ok_or_else(|| Error::PreconditionFailed(format!("no operation at {p}")))
}

/// Extends the prefix of `run` ending at the sink with a read at a correct
/// process, then moves the source after the sink.
fn refute_isolated(run: &Run, protocol: &ProtocolSpec, v: &ChainViolation) -> Result<Constructed> {
    let ops = extract_operations(run)?;
    let y = find_op(&ops, v.sink)?;
    let x = v.source.ok_or_else(|| Error::PreconditionFailed("missing source".into()))?;
    let prefix = y.end.expect("completed").time;
    let base = run.truncated(prefix);
    let mut engine = Engine::resume(&base, protocol)?;
    let reader = (0..run.config.n)
        .find(|p| !base.crashes.contains_key(p))
        .ok_or_else(|| Error::PreconditionFailed("no correct process left".into()))?;
    let muted = BTreeSet::new();
    drive(&mut engine, &muted, Some((reader, Input::Read)), |e| !e.has_pending(reader))?;
    let extended = engine.to_run();
    let read = last_op_of(&extended, reader)?;
    let ext = Extension {
        prefix,
        crashed: Vec::new(),
        write: None,
        read: read.id,
        read_value: read.value,
        horizon: extended.horizon(),
    };
    if read.value != y.value {
        return Ok((extended, Vec::new(), Some(ext)));
    }
    let (r, cert) = move_after(&extended, protocol, x, v.sink)?;
    Ok((r, cert.into_iter().collect(), Some(ext)))
}

/// Collapses observers onto witnesses, crashes them right after the
/// operation ends, lets the rest settle, then writes a fresh value and reads
/// it back at correct processes. If the read returns the fresh value, the
/// operation is moved after the write.
fn refute_quorum(run: &Run, protocol: &ProtocolSpec, q: &QuorumViolation) -> Result<Constructed> {
    let mut certificates = Vec::new();
    let ops = extract_operations(run)?;
    let x = find_op(&ops, q.op)?;
    let end = x.end.ok_or(Error::PendingOperation(x.id))?;
    let index = CausalIndex::new(&Execution::of(run)?);
    let mut r1 = run.clone();
    if observers(&index, x)?.len() > q.f {
        let delta = end.time - x.start.time + 1;
        let (r, cert) = delay_future_with(run, protocol, end, delta)?;
        r1 = r;
        certificates.push(cert);
    }
    let ops1 = extract_operations(&r1)?;
    let x1 = find_op(&ops1, q.op)?;
    let end1 = x1.end.expect("completed").time;
    let index1 = CausalIndex::new(&Execution::of(&r1)?);
    let obs = observers(&index1, x1)?;
    if obs.len() > q.f {
        return Err(Error::PreconditionFailed(format!(
            "{} has {} observers, more than f = {}",
            q.op,
            obs.len(),
            q.f
        )));
    }
    let base = r1.truncated(end1);
    let crashed: BTreeSet<ProcessId> = base.crashes.keys().copied().chain(obs.iter().copied()).collect();
    if crashed.len() > q.f {
        return Err(Error::PreconditionFailed(format!(
            "crashing the observers of {} would exceed f = {}",
            q.op, q.f
        )));
    }
    let mut engine = Engine::resume(&base, protocol)?;
    for &p in &obs {
        engine.crash(p, end1);
    }
    let writer = (0..run.config.n)
        .find(|p| !crashed.contains(p))
        .ok_or_else(|| Error::PreconditionFailed("no correct process left".into()))?;
    let written: BTreeSet<Value> = ops.iter().filter_map(|o| o.value).collect();
    let fresh = (0..)
        .map(|k| Value::tagged(writer, engine.invocations(writer) as u64 + k))
        .find(|v| !written.contains(v))
        .expect("unbounded");

    drive(&mut engine, &obs, None, |e| settled(e, &obs))?;
    drive(&mut engine, &obs, Some((writer, Input::Write(fresh))), |e| settled(e, &obs))?;
    let write = last_op_of(&engine.to_run(), writer)?.id;
    drive(&mut engine, &obs, Some((writer, Input::Read)), |e| settled(e, &obs))?;
    let extended = engine.to_run();
    let read = last_op_of(&extended, writer)?;
    let ext = Extension {
        prefix: end1,
        crashed: obs.iter().copied().collect(),
        write: Some(write),
        read: read.id,
        read_value: read.value,
        horizon: extended.horizon(),
    };
    if read.value != Some(fresh) {
        return Ok((extended, certificates, Some(ext)));
    }
    let (r, cert) = move_after(&extended, protocol, q.op, write)?;
    certificates.extend(cert);
    Ok((r, certificates, Some(ext)))
}
