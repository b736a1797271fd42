use serde::{Deserialize, Serialize};

use super::{EnvComponent, ProcessAction, ProcessId, Round, Run};
use crate::protocol::ProtocolSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationKind {
    /// A moved process performed an action its protocol does not permit.
    IllegalAction { expected: String, actual: String },
    /// The delivered record is in transit but is not the channel head.
    FifoOrder,
    /// The delivered record was never sent or was already delivered.
    NotInTransit,
    MovedAfterCrash { crash_round: Round },
    InvokedAfterCrash { crash_round: Round },
    /// An invocation arrived while the process had a pending operation.
    OverlappingInvocation,
    /// A `Return` without a pending invocation, or of the wrong kind.
    UnmatchedReturn,
    Malformed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub round: Round,
    pub process: Option<ProcessId>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_clean() {
            return write!(f, "legal run");
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        if let Some(v) = self.violations.first() {
            write!(f, "; first in round {} at {:?}: {:?}", v.round, v.process, v.kind)?;
        }
        Ok(())
    }
}

/// Checks that `run` is a run of `protocol`: every moved process performs
/// its permitted action, every delivery takes the head of its channel, and no
/// crashed process moves or receives input. An empty report means the run is
/// legal.
///
/// A delivery whose record is not at the channel head is reported even
/// though the transition function tolerates it as a no-op.
pub fn validate_run(run: &Run, protocol: &ProtocolSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = run.config.n;
    let mut state = run.initial_state();
    let mut automata: Vec<_> = (0..n)
        .map(|p| protocol.automaton(p, &state.locals[p].initial))
        .collect();
    let mut open = vec![None; n];

    for (idx, ja) in run.rounds.iter().enumerate() {
        let round = idx + 1;
        if let Err(e) = state.check_joint_action(ja) {
            report.violations.push(Violation {
                round,
                process: None,
                kind: ViolationKind::Malformed {
                    reason: e.to_string(),
                },
            });
            return report;
        }
        for (i, env) in ja.env.iter().enumerate() {
            let crash = run.crashes.get(&i).copied().filter(|&c| round > c);
            let mut flag = |kind| {
                report.violations.push(Violation {
                    round,
                    process: Some(i),
                    kind,
                })
            };
            match env {
                EnvComponent::Move => {
                    if let Some(crash_round) = crash {
                        flag(ViolationKind::MovedAfterCrash { crash_round });
                    }
                    let expected = automata[i].next_action();
                    if expected != ja.actions[i] {
                        flag(ViolationKind::IllegalAction {
                            expected: format!("{expected:?}"),
                            actual: format!("{:?}", ja.actions[i]),
                        });
                    }
                    if let ProcessAction::Return(resp) = &ja.actions[i] {
                        match open[i] {
                            Some(kind) if kind == resp.kind() => open[i] = None,
                            _ => flag(ViolationKind::UnmatchedReturn),
                        }
                    }
                }
                EnvComponent::Invoke(input) => {
                    if let Some(crash_round) = crash {
                        flag(ViolationKind::InvokedAfterCrash { crash_round });
                    }
                    if open[i].is_some() {
                        flag(ViolationKind::OverlappingInvocation);
                    }
                    open[i] = Some(input.kind());
                }
                EnvComponent::Deliver { record, from } => {
                    let chan = &state.channels[&(*from, i)];
                    if chan.head() != Some(record) {
                        if chan.in_transit.contains(record) {
                            flag(ViolationKind::FifoOrder);
                        } else {
                            flag(ViolationKind::NotInTransit);
                        }
                    }
                }
                EnvComponent::Skip => {}
            }
        }

        let before: Vec<usize> = state.locals.iter().map(|h| h.len()).collect();
        state.step(ja).expect("joint action checked above");
        for (i, a) in automata.iter_mut().enumerate() {
            for e in &state.locals[i].events[before[i]..] {
                a.observe(e);
            }
        }
    }
    report
}
