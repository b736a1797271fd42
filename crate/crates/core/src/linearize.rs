//! Exhaustive linearizability checking for register histories.
//!
//! The search places operations one at a time. An operation is eligible once
//! every completed operation that precedes it in real time has been placed; a
//! read may only be placed when it returns the current register value. Pending
//! writes may be placed or left out. Pending reads never constrain anything
//! (they can always be completed with the current value), so they are left out
//! of the search. Failed `(placed set, current value)` states are memoized,
//! which keeps the search exhaustive while bounding it by `2^k` states.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{extract_operations, OpId, OperationInstance, SequentialHistory};
use crate::model::{Run, Value};

pub const DEFAULT_SEARCH_BOUND: usize = 12;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Operations taking part in the search (completed ones plus pending writes).
    pub operations: usize,
    pub pending_writes: usize,
    pub states: u64,
    pub memo_hits: u64,
}

/// `Xa <_r Yb <_r Zc` with `a != b` and `a == c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbaViolation {
    pub x: OpId,
    pub y: OpId,
    pub z: OpId,
    pub a: Option<Value>,
    pub b: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    /// The longest sequence of operations the search managed to place.
    pub longest_prefix: Vec<OpId>,
    /// Register value after that prefix.
    pub value_after_prefix: Option<Value>,
    /// Completed operations that could not be placed after it.
    pub stuck: Vec<OpId>,
    pub aba: Vec<AbaViolation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Verdict {
    Linearizable { history: SequentialHistory },
    NotLinearizable { evidence: Evidence },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizationResult {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub stats: SearchStats,
}

impl LinearizationResult {
    pub fn is_linearizable(&self) -> bool {
        matches!(self.verdict, Verdict::Linearizable { .. })
    }

    pub fn history(&self) -> Option<&SequentialHistory> {
        match &self.verdict {
            Verdict::Linearizable { history } => Some(history),
            Verdict::NotLinearizable { .. } => None,
        }
    }
}

pub fn find_linearization(run: &Run) -> Result<LinearizationResult> {
    find_linearization_with(run, DEFAULT_SEARCH_BOUND)
}

pub fn find_linearization_with(run: &Run, bound: usize) -> Result<LinearizationResult> {
    linearize(&extract_operations(run)?, bound)
}

/// Decides whether the given operations admit a linearization.
pub fn linearize(ops: &[OperationInstance], bound: usize) -> Result<LinearizationResult> {
    let cands: Vec<&OperationInstance> = ops
        .iter()
        .filter(|o| o.is_completed() || o.is_write())
        .collect();
    let k = cands.len();
    if k > bound || k > 63 {
        return Err(Error::HistoryTooLarge { ops: k, bound });
    }
    let preds: Vec<u64> = cands
        .iter()
        .map(|y| {
            cands
                .iter()
                .enumerate()
                .filter(|(_, x)| x.precedes(y))
                .fold(0u64, |m, (i, _)| m | (1 << i))
        })
        .collect();
    let required = cands
        .iter()
        .enumerate()
        .filter(|(_, o)| o.is_completed())
        .fold(0u64, |m, (i, _)| m | (1 << i));

    let mut search = Search {
        cands: &cands,
        preds,
        required,
        failed: HashSet::new(),
        path: Vec::new(),
        best: (Vec::new(), None),
        stats: SearchStats {
            operations: k,
            pending_writes: cands.iter().filter(|o| o.is_pending()).count(),
            ..SearchStats::default()
        },
    };
    let found = search.dfs(0, None);
    let stats = search.stats.clone();
    let verdict = if found {
        let mut history = SequentialHistory::default();
        for &i in &search.path {
            let op = cands[i];
            history.push_op(op.id, op.input(), op.response());
        }
        Verdict::Linearizable { history }
    } else {
        let (prefix, value) = search.best.clone();
        let placed: u64 = prefix.iter().fold(0, |m, &i| m | (1 << i));
        Verdict::NotLinearizable {
            evidence: Evidence {
                longest_prefix: prefix.iter().map(|&i| cands[i].id).collect(),
                value_after_prefix: value,
                stuck: (0..k)
                    .filter(|&i| required & (1 << i) != 0 && placed & (1 << i) == 0)
                    .map(|i| cands[i].id)
                    .collect(),
                aba: aba_violations(ops),
            },
        }
    };
    Ok(LinearizationResult { verdict, stats })
}

struct Search<'a> {
    cands: &'a [&'a OperationInstance],
    preds: Vec<u64>,
    required: u64,
    failed: HashSet<(u64, Option<Value>)>,
    path: Vec<usize>,
    best: (Vec<usize>, Option<Value>),
    stats: SearchStats,
}

impl Search<'_> {
    fn dfs(&mut self, placed: u64, current: Option<Value>) -> bool {
        self.stats.states += 1;
        if placed & self.required == self.required {
            return true;
        }
        if self.failed.contains(&(placed, current)) {
            self.stats.memo_hits += 1;
            return false;
        }
        if self.path.len() > self.best.0.len() {
            self.best = (self.path.clone(), current);
        }
        for i in 0..self.cands.len() {
            if placed & (1 << i) != 0 || self.preds[i] & !placed != 0 {
                continue;
            }
            let op = self.cands[i];
            let next = if op.is_write() {
                op.value
            } else if op.value == current {
                current
            } else {
                continue;
            };
            self.path.push(i);
            if self.dfs(placed | (1 << i), next) {
                return true;
            }
            self.path.pop();
        }
        self.failed.insert((placed, current));
        false
    }
}

/// All completed triples `Xa <_r Yb <_r Zc` with `a != b` and `a == c`,
/// where `⊥` counts as a value.
pub fn aba_violations(ops: &[OperationInstance]) -> Vec<AbaViolation> {
    let done: Vec<&OperationInstance> = ops.iter().filter(|o| o.is_completed()).collect();
    let mut out = Vec::new();
    for x in &done {
        for y in done.iter().filter(|y| x.precedes(y) && y.value != x.value) {
            for z in done.iter().filter(|z| y.precedes(z) && z.value == x.value) {
                out.push(AbaViolation {
                    x: x.id,
                    y: y.id,
                    z: z.id,
                    a: x.value,
                    b: y.value,
                });
            }
        }
    }
    out
}

pub fn check_no_aba(run: &Run) -> Result<Vec<AbaViolation>> {
    Ok(aba_violations(&extract_operations(run)?))
}
