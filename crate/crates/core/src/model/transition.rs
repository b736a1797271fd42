use std::collections::{BTreeMap, VecDeque};

use super::{
    EnvComponent, GlobalState, JointAction, LocalEvent, LocalHistory, MessageRecord, Payload,
    ProcessAction, ProcessId, Round, Run,
};
use crate::error::{Error, Result};

fn malformed(round: Round, reason: impl Into<String>) -> Error {
    Error::MalformedJointAction {
        round,
        reason: reason.into(),
    }
}

impl GlobalState {
    /// Checks `ja` against this state without changing anything.
    pub(crate) fn check_joint_action(&self, ja: &JointAction) -> Result<()> {
        let round = self.time() + 1;
        let n = self.locals.len();
        if ja.env.len() != n || ja.actions.len() != n {
            return Err(malformed(
                round,
                format!(
                    "expected {n} components, got {} env and {} actions",
                    ja.env.len(),
                    ja.actions.len()
                ),
            ));
        }
        for (i, (env, action)) in ja.env.iter().zip(&ja.actions).enumerate() {
            match env {
                EnvComponent::Move => match action {
                    ProcessAction::Send { to, .. } if !self.channels.contains_key(&(i, *to)) => {
                        return Err(malformed(round, format!("process {i} sends on non-edge {i} -> {to}")));
                    }
                    a if !a.is_step() => {
                        return Err(malformed(round, format!("process {i} is moved but performs {a:?}")));
                    }
                    _ => {}
                },
                EnvComponent::Deliver { from, .. } => {
                    if !self.channels.contains_key(&(*from, i)) {
                        return Err(malformed(
                            round,
                            format!("delivery to {i} names non-edge {from} -> {i}"),
                        ));
                    }
                }
                EnvComponent::Skip | EnvComponent::Invoke(_) => {}
            }
        }
        Ok(())
    }

    /// Applies one round in place and returns the recorded joint action
    /// (`Receive` for successful deliveries, `Bottom` for every process that
    /// was not moved and received nothing).
    pub fn step(&mut self, ja: &JointAction) -> Result<JointAction> {
        self.check_joint_action(ja)?;
        let round = self.time() + 1;
        let mut recorded = ja.clone();

        // Deliveries see the channel contents at the start of the round, so
        // they are resolved before this round's sends are enqueued.
        for (i, env) in ja.env.iter().enumerate() {
            recorded.actions[i] = ProcessAction::Bottom;
            if let EnvComponent::Deliver { record, from } = env {
                let chan = self.channels.get_mut(&(*from, i)).expect("checked edge");
                if chan.head() == Some(record) {
                    let rec = chan.in_transit.pop_front().expect("non-empty");
                    self.locals[i].push(
                        round,
                        LocalEvent::Received {
                            from: *from,
                            payload: rec.payload,
                        },
                    );
                    recorded.actions[i] = ProcessAction::Receive;
                }
            }
        }
        for (i, env) in ja.env.iter().enumerate() {
            match env {
                EnvComponent::Move => {
                    let action = ja.actions[i].clone();
                    if let ProcessAction::Send { payload, to } = &action {
                        self.channels
                            .get_mut(&(i, *to))
                            .expect("checked edge")
                            .in_transit
                            .push_back(MessageRecord {
                                payload: payload.clone(),
                                send_round: round,
                            });
                    }
                    recorded.actions[i] = action.clone();
                    self.locals[i].push(round, LocalEvent::Performed(action));
                }
                EnvComponent::Invoke(input) => {
                    self.locals[i].push(round, LocalEvent::Input(*input));
                }
                EnvComponent::Skip | EnvComponent::Deliver { .. } => {}
            }
        }
        self.env_history.push(recorded.clone());
        Ok(recorded)
    }
}

/// Successor of `state` under the joint action `ja`.
pub fn apply_transition(state: &GlobalState, ja: &JointAction) -> Result<GlobalState> {
    let mut next = state.clone();
    next.step(ja)?;
    Ok(next)
}

/// Materializes the global states at times `0..=horizon`.
pub fn replay(run: &Run) -> Result<Vec<GlobalState>> {
    let mut states = Vec::with_capacity(run.horizon() + 1);
    let mut state = run.initial_state();
    states.push(state.clone());
    for ja in &run.rounds {
        state.step(ja)?;
        let m = state.time();
        for (&p, &c) in &run.crashes {
            if m >= c {
                state.crashed.insert(p, c);
            }
        }
        states.push(state.clone());
    }
    Ok(states)
}

/// A message sent in a run, with its delivery round if it was delivered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageEvent {
    pub from: ProcessId,
    pub to: ProcessId,
    pub payload: Payload,
    pub sent: Round,
    pub delivered: Option<Round>,
}

/// Compact result of replaying a run: final state, per-process history
/// lengths at every time, and all message sends.
///
/// The local state of process `p` at time `t` is the prefix of its final
/// history of length `len_at(p, t)`, so comparing local states across times or
/// runs never requires materializing every global state.
#[derive(Clone, Debug)]
pub struct Execution {
    pub final_state: GlobalState,
    pub messages: Vec<MessageEvent>,
    len_at: Vec<Vec<usize>>,
}

impl Execution {
    pub fn of(run: &Run) -> Result<Self> {
        let n = run.config.n;
        let mut state = run.initial_state();
        let mut len_at = vec![vec![0usize]; n];
        let mut messages: Vec<MessageEvent> = Vec::new();
        let mut queued: BTreeMap<(ProcessId, ProcessId), VecDeque<usize>> = BTreeMap::new();

        for ja in &run.rounds {
            let recorded = state.step(ja)?;
            let round = state.time();
            for (i, action) in recorded.actions.iter().enumerate() {
                if let (ProcessAction::Receive, EnvComponent::Deliver { from, .. }) =
                    (action, &recorded.env[i])
                {
                    let idx = queued
                        .get_mut(&(*from, i))
                        .and_then(VecDeque::pop_front)
                        .expect("delivered message was sent");
                    messages[idx].delivered = Some(round);
                }
            }
            for (i, action) in recorded.actions.iter().enumerate() {
                if let ProcessAction::Send { payload, to } = action {
                    queued.entry((i, *to)).or_default().push_back(messages.len());
                    messages.push(MessageEvent {
                        from: i,
                        to: *to,
                        payload: payload.clone(),
                        sent: round,
                        delivered: None,
                    });
                }
            }
            for (p, lens) in len_at.iter_mut().enumerate() {
                lens.push(state.locals[p].len());
            }
        }
        for (&p, &c) in &run.crashes {
            if state.time() >= c {
                state.crashed.insert(p, c);
            }
        }
        Ok(Self {
            final_state: state,
            messages,
            len_at,
        })
    }

    pub fn horizon(&self) -> Round {
        self.final_state.time()
    }

    pub fn n(&self) -> usize {
        self.final_state.locals.len()
    }

    pub fn history(&self, p: ProcessId) -> &LocalHistory {
        &self.final_state.locals[p]
    }

    /// Length of `p`'s history at time `t`.
    pub fn len_at(&self, p: ProcessId, t: Round) -> usize {
        self.len_at[p][t]
    }

    /// The events of `p`'s local state at time `t`.
    pub fn local_at(&self, p: ProcessId, t: Round) -> &[LocalEvent] {
        &self.final_state.locals[p].events[..self.len_at[p][t]]
    }

    /// Whether `p` has the same local state at time `t` here as at time `u` in `other`.
    pub fn same_local_state(&self, p: ProcessId, t: Round, other: &Execution, u: Round) -> bool {
        self.history(p).initial == other.history(p).initial
            && self.local_at(p, t) == other.local_at(p, u)
    }

    /// The recorded joint action of round `m` (1-indexed).
    pub fn round(&self, m: Round) -> &JointAction {
        &self.final_state.env_history[m - 1]
    }
}
