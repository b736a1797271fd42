use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Engine;
use crate::error::{Error, Result};
use crate::model::{EnvComponent, Input, OpKind, ProcessId, Round, Value};

/// When processes are scheduled to move (if nothing else claims the round).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum Schedule {
    /// Process `(m - 1) mod n` moves in round `m`.
    RoundRobin,
    /// Every process moves with the given probability.
    Random { move_percent: u32 },
    /// Every process moves every round.
    Always,
}

/// When in-transit messages are delivered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum Delivery {
    /// Deliver the oldest incoming message as soon as there is one.
    Immediate,
    /// With the given probability, deliver the head of a uniformly chosen
    /// non-empty incoming channel.
    Random { percent: u32 },
    Never,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum CrashPlan {
    None,
    /// `crashes[p] = c`: `p` takes no step after round `c`.
    Fixed { crashes: BTreeMap<ProcessId, Round> },
    /// `count` distinct processes crash at rounds drawn from `1..=latest_round`.
    Random { count: usize, latest_round: Round },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedInvocation {
    pub process: ProcessId,
    /// Earliest round of the invocation; it is postponed while the process
    /// has a pending operation.
    pub round: Round,
    pub input: Input,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum InvocationPlan {
    None,
    Fixed { invocations: Vec<PlannedInvocation> },
    /// Each idle correct process is invoked with probability `percent` in
    /// every round up to `until`, for at most `max_ops` operations overall.
    /// Written values are `Value::tagged(process, k)` for the process's
    /// `k`-th invocation.
    Random {
        percent: u32,
        until: Round,
        max_ops: usize,
        read_percent: u32,
    },
}

/// Seeded resolution of all environment nondeterminism.
///
/// Draws come from `ChaCha8Rng::seed_from_u64(seed)`: first the crash plan
/// (when random), then per round and per process `0..n` in order the
/// invocation draw, the delivery draw and channel pick, and the move draw,
/// each made only when the corresponding choice is open.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub schedule: Schedule,
    pub delivery: Delivery,
    pub crashes: CrashPlan,
    pub invocations: InvocationPlan,
    /// Once invocations are exhausted, move busy processes and deliver
    /// everything until the system is quiescent, then skip.
    pub quiesce: bool,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            schedule: Schedule::Random { move_percent: 50 },
            delivery: Delivery::Random { percent: 50 },
            crashes: CrashPlan::None,
            invocations: InvocationPlan::None,
            quiesce: false,
        }
    }
}

impl AdversarySpec {
    /// Round-robin moves with immediate delivery.
    pub fn reliable() -> Self {
        Self {
            schedule: Schedule::RoundRobin,
            delivery: Delivery::Immediate,
            ..Self::default()
        }
    }

    pub fn with_invocations(mut self, invocations: InvocationPlan) -> Self {
        self.invocations = invocations;
        self
    }

    pub fn with_crashes(mut self, crashes: CrashPlan) -> Self {
        self.crashes = crashes;
        self
    }

    pub fn quiescing(mut self) -> Self {
        self.quiesce = true;
        self
    }

    /// Checks the plan against `n` and `f` and resolves the crash plan.
    pub(crate) fn resolve_crashes(
        &self,
        n: usize,
        f: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<BTreeMap<ProcessId, Round>> {
        let crashes = match &self.crashes {
            CrashPlan::None => BTreeMap::new(),
            CrashPlan::Fixed { crashes } => {
                if let Some(p) = crashes.keys().find(|&&p| p >= n) {
                    return Err(Error::AdversaryExhausted(format!(
                        "crash plan names process {p}, but n = {n}"
                    )));
                }
                crashes.clone()
            }
            CrashPlan::Random {
                count,
                latest_round,
            } => {
                if *count > n {
                    return Err(Error::AdversaryExhausted(format!(
                        "cannot crash {count} of {n} processes"
                    )));
                }
                let mut procs: Vec<ProcessId> = (0..n).collect();
                procs.shuffle(rng);
                procs
                    .into_iter()
                    .take(*count)
                    .map(|p| (p, rng.gen_range(1..=(*latest_round).max(1))))
                    .collect()
            }
        };
        if crashes.len() > f {
            return Err(Error::AdversaryExhausted(format!(
                "crash plan has {} crashes but f = {f}",
                crashes.len()
            )));
        }
        if let InvocationPlan::Fixed { invocations } = &self.invocations {
            if let Some(inv) = invocations.iter().find(|i| i.process >= n) {
                return Err(Error::AdversaryExhausted(format!(
                    "invocation plan names process {}, but n = {n}",
                    inv.process
                )));
            }
        }
        Ok(crashes)
    }
}

/// Mutable per-run adversary state.
pub(crate) struct Driver {
    spec: AdversarySpec,
    rng: ChaCha8Rng,
    planned: Vec<VecDeque<PlannedInvocation>>,
    issued: usize,
}

impl Driver {
    pub(crate) fn new(spec: AdversarySpec, rng: ChaCha8Rng, n: usize) -> Self {
        let mut planned = vec![VecDeque::new(); n];
        if let InvocationPlan::Fixed { invocations } = &spec.invocations {
            let mut sorted = invocations.clone();
            sorted.sort_by_key(|i| i.round);
            for inv in sorted {
                planned[inv.process].push_back(inv);
            }
        }
        Self {
            spec,
            rng,
            planned,
            issued: 0,
        }
    }

    fn invocations_done(&self, engine: &Engine, round: Round) -> bool {
        match &self.spec.invocations {
            InvocationPlan::None => true,
            InvocationPlan::Fixed { .. } => self
                .planned
                .iter()
                .enumerate()
                .all(|(p, q)| q.is_empty() || engine.is_crashed_in(p, round)),
            InvocationPlan::Random { until, max_ops, .. } => round > *until || self.issued >= *max_ops,
        }
    }

    /// Environment components for the next round of `engine`.
    pub(crate) fn choose(&mut self, engine: &Engine) -> Vec<EnvComponent> {
        let n = engine.n();
        let round = engine.time() + 1;
        let drain = self.spec.quiesce && self.invocations_done(engine, round);
        let mut env = Vec::with_capacity(n);
        for i in 0..n {
            env.push(self.choose_one(engine, i, round, drain));
        }
        env
    }

    fn choose_one(&mut self, engine: &Engine, i: ProcessId, round: Round, drain: bool) -> EnvComponent {
        if engine.is_crashed_in(i, round) {
            return EnvComponent::Skip;
        }
        if let Some(input) = self.invocation(engine, i, round) {
            self.issued += 1;
            return EnvComponent::Invoke(input);
        }
        if drain {
            if !engine.is_idle(i) {
                return EnvComponent::Move;
            }
            return match engine.oldest_incoming(i) {
                Some((from, record)) => EnvComponent::Deliver { record, from },
                None => EnvComponent::Skip,
            };
        }
        match self.spec.delivery {
            Delivery::Immediate => {
                if let Some((from, record)) = engine.oldest_incoming(i) {
                    return EnvComponent::Deliver { record, from };
                }
            }
            Delivery::Random { percent } => {
                let heads = engine.incoming_heads(i);
                if !heads.is_empty() && self.rng.gen_range(0..100) < percent {
                    let (from, record) = heads[self.rng.gen_range(0..heads.len())].clone();
                    return EnvComponent::Deliver { record, from };
                }
            }
            Delivery::Never => {}
        }
        let moves = match self.spec.schedule {
            Schedule::RoundRobin => (round - 1) % engine.n() == i,
            Schedule::Random { move_percent } => self.rng.gen_range(0..100) < move_percent,
            Schedule::Always => true,
        };
        if moves {
            EnvComponent::Move
        } else {
            EnvComponent::Skip
        }
    }

    fn invocation(&mut self, engine: &Engine, i: ProcessId, round: Round) -> Option<Input> {
        if engine.has_pending(i) {
            return None;
        }
        match &self.spec.invocations {
            InvocationPlan::None => None,
            InvocationPlan::Fixed { .. } => {
                let due = self.planned[i].front().is_some_and(|inv| inv.round <= round);
                due.then(|| self.planned[i].pop_front().expect("due").input)
            }
            InvocationPlan::Random {
                percent,
                until,
                max_ops,
                read_percent,
            } => {
                if round > *until || self.issued >= *max_ops {
                    return None;
                }
                if self.rng.gen_range(0..100) >= *percent {
                    return None;
                }
                let kind = if self.rng.gen_range(0..100) < *read_percent {
                    OpKind::Read
                } else {
                    OpKind::Write
                };
                Some(match kind {
                    OpKind::Read => Input::Read,
                    OpKind::Write => Input::Write(Value::tagged(i, engine.invocations(i) as u64)),
                })
            }
        }
    }
}
