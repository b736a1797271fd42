//! Register operations extracted from runs, and sequential histories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    show_value, EnvComponent, Input, Node, OpKind, ProcessAction, ProcessId, Response, Run, Value,
};

/// Identifies an operation by its process and the per-process invocation
/// index (0-based). Stable across locally equivalent runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub process: ProcessId,
    pub seq: usize,
}

impl OpId {
    pub const fn new(process: ProcessId, seq: usize) -> Self {
        Self { process, seq }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.process, self.seq)
    }
}

impl FromStr for OpId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Trace(format!("operation id `{s}` is not of the form p.k"));
        let (p, k) = s.split_once('.').ok_or_else(bad)?;
        Ok(OpId::new(
            p.trim().parse().map_err(|_| bad())?,
            k.trim().parse().map_err(|_| bad())?,
        ))
    }
}

impl Serialize for OpId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OpId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A read or write in a run. `start` is the node right after the invocation
/// round, `end` the node right after the response round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationInstance {
    pub id: OpId,
    pub process: ProcessId,
    pub kind: OpKind,
    /// Written value, or the value returned by a completed read (`None` for
    /// ⊥ and for pending reads).
    pub value: Option<Value>,
    pub start: Node,
    pub end: Option<Node>,
    /// No other operation is concurrent with this one.
    pub isolated: bool,
}

impl OperationInstance {
    pub fn is_completed(&self) -> bool {
        self.end.is_some()
    }

    pub fn is_pending(&self) -> bool {
        self.end.is_none()
    }

    pub fn is_read(&self) -> bool {
        self.kind == OpKind::Read
    }

    pub fn is_write(&self) -> bool {
        self.kind == OpKind::Write
    }

    /// `self <_r other`.
    pub fn precedes(&self, other: &OperationInstance) -> bool {
        self.end.is_some_and(|e| e.time < other.start.time)
    }

    pub fn concurrent_with(&self, other: &OperationInstance) -> bool {
        !self.precedes(other) && !other.precedes(self)
    }

    pub fn input(&self) -> Input {
        match self.kind {
            OpKind::Read => Input::Read,
            OpKind::Write => Input::Write(self.value.expect("writes carry a value")),
        }
    }

    pub fn response(&self) -> Response {
        match self.kind {
            OpKind::Read => Response::Read(self.value),
            OpKind::Write => Response::Write,
        }
    }
}

impl fmt::Display for OperationInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            OpKind::Read => "R",
            OpKind::Write => "W",
        };
        let end = self.end.map_or_else(|| "pending".to_string(), |e| e.to_string());
        write!(
            f,
            "{} {kind}({}) [{} .. {end}]",
            self.id,
            show_value(self.value),
            self.start
        )
    }
}

/// Pairs every invocation with its response, in order of invocation time
/// (ties by process).
pub fn extract_operations(run: &Run) -> Result<Vec<OperationInstance>> {
    let n = run.config.n;
    let mut ops: Vec<OperationInstance> = Vec::new();
    let mut open: Vec<Option<usize>> = vec![None; n];
    let mut seq = vec![0usize; n];
    for (idx, ja) in run.rounds.iter().enumerate() {
        let round = idx + 1;
        for p in 0..n {
            match (&ja.env[p], &ja.actions[p]) {
                (EnvComponent::Invoke(input), _) => {
                    if open[p].is_some() {
                        return Err(Error::ProtocolViolation {
                            round,
                            process: p,
                            reason: "invocation while an operation is pending".into(),
                        });
                    }
                    open[p] = Some(ops.len());
                    ops.push(OperationInstance {
                        id: OpId::new(p, seq[p]),
                        process: p,
                        kind: input.kind(),
                        value: match input {
                            Input::Write(v) => Some(*v),
                            Input::Read => None,
                        },
                        start: Node::new(p, round),
                        end: None,
                        isolated: false,
                    });
                    seq[p] += 1;
                }
                (EnvComponent::Move, ProcessAction::Return(resp)) => {
                    let Some(i) = open[p].take() else {
                        return Err(Error::ProtocolViolation {
                            round,
                            process: p,
                            reason: "return without a pending invocation".into(),
                        });
                    };
                    if ops[i].kind != resp.kind() {
                        return Err(Error::ProtocolViolation {
                            round,
                            process: p,
                            reason: format!("{:?} response to a {:?} invocation", resp.kind(), ops[i].kind),
                        });
                    }
                    if let Response::Read(v) = resp {
                        ops[i].value = *v;
                    }
                    ops[i].end = Some(Node::new(p, round));
                }
                _ => {}
            }
        }
    }
    let isolated: Vec<bool> = (0..ops.len())
        .map(|i| {
            (0..ops.len()).all(|j| i == j || !ops[i].concurrent_with(&ops[j]))
        })
        .collect();
    for (op, iso) in ops.iter_mut().zip(isolated) {
        op.isolated = iso;
    }
    Ok(ops)
}

pub fn find_op(ops: &[OperationInstance], id: OpId) -> Result<&OperationInstance> {
    ops.iter()
        .find(|o| o.id == id)
        .ok_or(Error::UnknownOperation(id))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum HistoryEntry {
    Invoke { op: OpId, input: Input },
    Respond { op: OpId, response: Response },
}

impl HistoryEntry {
    pub fn op(&self) -> OpId {
        match self {
            HistoryEntry::Invoke { op, .. } | HistoryEntry::Respond { op, .. } => *op,
        }
    }
}

/// `S_0, S_1, ...`: invocations at even positions, each followed by its
/// matching response (the last invocation may lack one).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequentialHistory {
    pub entries: Vec<HistoryEntry>,
}

impl SequentialHistory {
    pub fn push_op(&mut self, op: OpId, input: Input, response: Response) {
        self.entries.push(HistoryEntry::Invoke { op, input });
        self.entries.push(HistoryEntry::Respond { op, response });
    }

    /// Operation ids in history order.
    pub fn order(&self) -> Vec<OpId> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                HistoryEntry::Invoke { op, .. } => Some(*op),
                HistoryEntry::Respond { .. } => None,
            })
            .collect()
    }

    /// Alternation and matching: every odd entry responds to the preceding
    /// invocation with the same operation kind.
    pub fn is_well_formed(&self) -> bool {
        self.entries.chunks(2).all(|pair| match pair {
            [HistoryEntry::Invoke { op, input }, HistoryEntry::Respond { op: r, response }] => {
                op == r && input.kind() == response.kind()
            }
            [HistoryEntry::Invoke { .. }] => true,
            _ => false,
        })
    }
}

impl fmt::Display for SequentialHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| match e {
                HistoryEntry::Invoke { op, input: Input::Write(v) } => format!("inv {op} W({v})"),
                HistoryEntry::Invoke { op, input: Input::Read } => format!("inv {op} R"),
                HistoryEntry::Respond { op, response: Response::Write } => format!("res {op} W"),
                HistoryEntry::Respond { op, response: Response::Read(v) } => {
                    format!("res {op} R({})", show_value(*v))
                }
            })
            .collect();
        write!(f, "{}", parts.join(", "))
    }
}

/// Every read returns the value of the latest preceding write, or ⊥ if
/// there is none.
pub fn is_atomic_history(h: &SequentialHistory) -> bool {
    if !h.is_well_formed() {
        return false;
    }
    let mut current = None;
    let mut last_input = None;
    for e in &h.entries {
        match e {
            HistoryEntry::Invoke { input, .. } => {
                if let Input::Write(v) = input {
                    current = Some(*v);
                }
                last_input = Some(*input);
            }
            HistoryEntry::Respond { response, .. } => {
                if let (Some(Input::Read), Response::Read(v)) = (last_input, response) {
                    if *v != current {
                        return false;
                    }
                }
            }
        }
    }
    true
}
