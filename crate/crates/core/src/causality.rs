//! Message chains (happens-before) over runs.
//!
//! `<p,t> ⇝ <q,t'>` holds when `p = q` and `t < t'`, when `p` sends a message
//! to `q` in round `t + 1` that is delivered no later than round `t'`, or by
//! transitivity. The receiving process need not take a step at `t'`.
//!
//! [`CausalIndex`] stores, for every node, the earliest time at which each
//! process is reached by a chain from it. Reachability is upward closed in
//! time (same-process order), so a single vector per node answers every query
//! in constant time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::OperationInstance;
use crate::model::{Execution, Node, ProcessId, Round, Run};

/// Marker for "never reached within the horizon".
const NEVER: Round = Round::MAX;

#[derive(Clone, Debug)]
pub struct CausalIndex {
    n: usize,
    horizon: Round,
    /// `earliest[t * n + p][q]`: minimal `t'` with `<p,t> ⇝ <q,t'>`.
    earliest: Vec<Vec<Round>>,
}

impl CausalIndex {
    pub fn new(exec: &Execution) -> Self {
        let n = exec.n();
        let horizon = exec.horizon();
        // sends[t][p] lists (receiver, delivery round) of messages p sent in round t + 1.
        let mut sends = vec![vec![Vec::new(); n]; horizon + 1];
        for m in &exec.messages {
            if let Some(d) = m.delivered {
                sends[m.sent - 1][m.from].push((m.to, d));
            }
        }
        let mut earliest = vec![Vec::new(); (horizon + 1) * n];
        for t in (0..=horizon).rev() {
            for p in 0..n {
                let mut reach = if t < horizon {
                    earliest[(t + 1) * n + p].clone()
                } else {
                    vec![NEVER; n]
                };
                reach[p] = reach[p].min(t + 1);
                for &(q, d) in &sends[t][p] {
                    reach[q] = reach[q].min(d);
                    let via = &earliest[d * n + q];
                    for (r, &e) in reach.iter_mut().zip(via.iter()) {
                        *r = (*r).min(e);
                    }
                }
                earliest[t * n + p] = reach;
            }
        }
        Self {
            n,
            horizon,
            earliest,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> Round {
        self.horizon
    }

    fn in_range(&self, node: &Node) -> bool {
        node.process < self.n && node.time <= self.horizon
    }

    /// Earliest time each process is reached from `node` (`Round::MAX` if
    /// never). Values above the horizon mean "not within this prefix".
    pub fn reach(&self, node: Node) -> &[Round] {
        &self.earliest[node.time * self.n + node.process]
    }

    /// `a ⇝ b`. False when either node lies outside the run.
    pub fn happens_before(&self, a: Node, b: Node) -> bool {
        if !self.in_range(&a) || !self.in_range(&b) {
            return false;
        }
        let hb = self.reach(a)[b.process] <= b.time;
        debug_assert!(!hb || a.time < b.time, "chain {a} ⇝ {b} goes back in time");
        hb
    }

    /// The past cone of `pivot` as per-process cut times.
    pub fn past_frontier(&self, pivot: Node) -> Result<PastFrontier> {
        if !self.in_range(&pivot) {
            return Err(Error::NodeOutOfRange(pivot));
        }
        let cut = (0..self.n)
            .map(|j| {
                (0..=self.horizon)
                    .find(|&l| !self.happens_before(Node::new(j, l), pivot))
                    .unwrap_or(self.horizon + 1)
            })
            .collect();
        Ok(PastFrontier { pivot, cut })
    }

    /// `X ⟿ Y`: a chain from `X`'s invocation node to `Y`'s response node.
    pub fn op_chain(&self, x: &OperationInstance, y: &OperationInstance) -> Result<bool> {
        let end = y.end.ok_or(Error::PendingOperation(y.id))?;
        Ok(self.happens_before(x.start, end))
    }
}

/// `past(θ)` as cut times: `<j, l>` is in the past of the pivot iff `l < cut[j]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastFrontier {
    pub pivot: Node,
    pub cut: Vec<Round>,
}

impl PastFrontier {
    pub fn contains(&self, node: Node) -> bool {
        node.time < self.cut[node.process]
    }
}

pub fn build_index(run: &Run) -> Result<CausalIndex> {
    Ok(CausalIndex::new(&Execution::of(run)?))
}

/// Real-time precedence `X <_r Y`: `X` completes before `Y` is invoked.
pub fn precedes(x: &OperationInstance, y: &OperationInstance) -> bool {
    x.end.is_some_and(|e| e.time < y.start.time)
}

/// Both runs traverse the same sequence of local states at every process.
pub fn locally_equivalent(run1: &Run, run2: &Run) -> Result<bool> {
    if run1.config != run2.config {
        return Err(Error::ConfigMismatch);
    }
    let (a, b) = (Execution::of(run1)?, Execution::of(run2)?);
    Ok(first_difference(&a, &b).is_none())
}

/// The first process whose local-state sequences differ.
///
/// Local states only ever grow by one event, so the sequences of distinct
/// states agree iff the final histories agree.
pub fn first_difference(a: &Execution, b: &Execution) -> Option<ProcessId> {
    (0..a.n().min(b.n()))
        .find(|&p| a.history(p) != b.history(p))
        .or((a.n() != b.n()).then_some(a.n().min(b.n())))
}

/// All nodes of `run2` corresponding to `node` of `run1`: same process, same
/// local state.
pub fn corresponding_nodes(run1: &Run, run2: &Run, node: Node) -> Result<Vec<Node>> {
    if run1.config != run2.config {
        return Err(Error::ConfigMismatch);
    }
    let (a, b) = (Execution::of(run1)?, Execution::of(run2)?);
    corresponding_in(&a, &b, node)
}

pub fn corresponding_in(a: &Execution, b: &Execution, node: Node) -> Result<Vec<Node>> {
    if let Some(p) = first_difference(a, b) {
        return Err(Error::NotEquivalent(p));
    }
    if node.process >= a.n() || node.time > a.horizon() {
        return Err(Error::NodeOutOfRange(node));
    }
    let len = a.len_at(node.process, node.time);
    Ok((0..=b.horizon())
        .filter(|&t| b.len_at(node.process, t) == len)
        .map(|t| Node::new(node.process, t))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        EnvComponent, JointAction, MessageRecord, Payload, ProcessAction, SystemConfig,
    };

    fn send(to: usize, text: &str) -> ProcessAction {
        ProcessAction::Send {
            payload: Payload::text(text),
            to,
        }
    }

    /// p=0 sends μ in round 1, delivered to q=1 in round 3.
    fn one_message_run() -> Run {
        let cfg = SystemConfig::new(2, 0, "gossip").unwrap();
        let mut run = Run::new(cfg);
        let mut r1 = JointAction::idle(2);
        r1.env[0] = EnvComponent::Move;
        r1.actions[0] = send(1, "ping 0");
        let r2 = JointAction::idle(2);
        let mut r3 = JointAction::idle(2);
        r3.env[1] = EnvComponent::Deliver {
            record: MessageRecord {
                payload: Payload::text("ping 0"),
                send_round: 1,
            },
            from: 0,
        };
        r3.actions[1] = ProcessAction::Receive;
        run.rounds = vec![r1, r2, r3, JointAction::idle(2)];
        run
    }

    #[test]
    fn delivery_creates_chain_from_send_node() {
        let idx = build_index(&one_message_run()).unwrap();
        assert!(idx.happens_before(Node::new(0, 0), Node::new(1, 3)));
        assert!(!idx.happens_before(Node::new(0, 0), Node::new(1, 2)));
        assert!(idx.happens_before(Node::new(0, 0), Node::new(1, 4)));
        assert!(!idx.happens_before(Node::new(0, 1), Node::new(1, 4)));
        assert!(!idx.happens_before(Node::new(1, 0), Node::new(0, 4)));
    }

    #[test]
    fn same_process_order_and_strictness() {
        let idx = build_index(&one_message_run()).unwrap();
        assert!(idx.happens_before(Node::new(0, 2), Node::new(0, 4)));
        assert!(!idx.happens_before(Node::new(0, 2), Node::new(0, 2)));
        assert!(!idx.happens_before(Node::new(0, 2), Node::new(0, 9)));
    }

    #[test]
    fn frontier_of_receiving_node() {
        let idx = build_index(&one_message_run()).unwrap();
        let fr = idx.past_frontier(Node::new(1, 3)).unwrap();
        assert_eq!(fr.cut, vec![1, 3]);
        assert!(fr.contains(Node::new(0, 0)));
        assert!(!fr.contains(Node::new(0, 1)));
    }

    #[test]
    fn frontier_without_messages() {
        let cfg = SystemConfig::new(3, 0, "gossip").unwrap();
        let mut run = Run::new(cfg);
        run.rounds = vec![JointAction::idle(3); 5];
        let idx = build_index(&run).unwrap();
        let fr = idx.past_frontier(Node::new(1, 4)).unwrap();
        assert_eq!(fr.cut, vec![0, 4, 0]);
        assert!(idx.past_frontier(Node::new(1, 6)).is_err());
    }

    #[test]
    fn skip_padding_keeps_equivalence() {
        let run = one_message_run();
        let mut padded = run.clone();
        padded.rounds.insert(1, JointAction::idle(2));
        for r in padded.rounds.iter_mut().skip(2) {
            if let EnvComponent::Deliver { record, .. } = &mut r.env[1] {
                record.send_round = 1;
            }
        }
        assert!(locally_equivalent(&run, &run).unwrap());
        assert!(locally_equivalent(&run, &padded).unwrap());
        let nodes = corresponding_nodes(&run, &padded, Node::new(0, 1)).unwrap();
        assert_eq!(nodes, vec![Node::new(0, 1), Node::new(0, 2), Node::new(0, 3), Node::new(0, 4), Node::new(0, 5)]);
    }

    #[test]
    fn config_mismatch_is_an_error() {
        let run = one_message_run();
        let mut other = run.clone();
        other.config.protocol = "abd".into();
        assert!(matches!(locally_equivalent(&run, &other), Err(Error::ConfigMismatch)));
    }
}
