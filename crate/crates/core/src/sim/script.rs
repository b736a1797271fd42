//! Environment scripts: a run's environment choices with deliveries named
//! by channel instead of by record, so a script can be replayed after the
//! messages themselves have changed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Engine;
use crate::error::Result;
use crate::model::{EnvComponent, Input, Payload, ProcessId, Round, Run, SystemConfig};
use crate::protocol::ProtocolSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Move,
    Skip,
    Invoke(Input),
    /// Deliver the head of the channel from the given process, if any.
    DeliverFrom(ProcessId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub crashes: BTreeMap<ProcessId, Round>,
    pub rounds: Vec<Vec<Step>>,
}

impl Script {
    pub fn of(run: &Run) -> Self {
        let rounds = run
            .rounds
            .iter()
            .map(|ja| {
                ja.env
                    .iter()
                    .map(|e| match e {
                        EnvComponent::Move => Step::Move,
                        EnvComponent::Skip => Step::Skip,
                        EnvComponent::Invoke(i) => Step::Invoke(*i),
                        EnvComponent::Deliver { from, .. } => Step::DeliverFrom(*from),
                    })
                    .collect()
            })
            .collect();
        Self {
            crashes: run.crashes.clone(),
            rounds,
        }
    }

    /// Number of invocations in the script.
    pub fn invocations(&self) -> usize {
        self.rounds
            .iter()
            .flatten()
            .filter(|s| matches!(s, Step::Invoke(_)))
            .count()
    }

    /// Replays the script. Deliveries from empty channels and invocations at
    /// processes with a pending operation become skips, and nothing happens
    /// at a process after its crash round, so the result is always a legal
    /// run of `protocol`.
    pub fn run(&self, config: &SystemConfig, protocol: &ProtocolSpec) -> Result<Run> {
        let mut engine = Engine::new(config, protocol, vec![Payload::default(); config.n]);
        for (&p, &c) in &self.crashes {
            engine.crash(p, c);
        }
        for steps in &self.rounds {
            let round = engine.time() + 1;
            let env = steps
                .iter()
                .enumerate()
                .map(|(i, s)| match s {
                    _ if engine.is_crashed_in(i, round) => EnvComponent::Skip,
                    Step::Move => EnvComponent::Move,
                    Step::Skip => EnvComponent::Skip,
                    Step::Invoke(_) if engine.has_pending(i) => EnvComponent::Skip,
                    Step::Invoke(input) => EnvComponent::Invoke(*input),
                    Step::DeliverFrom(from) => engine
                        .incoming_heads(i)
                        .into_iter()
                        .find(|(src, _)| src == from)
                        .map_or(EnvComponent::Skip, |(from, record)| EnvComponent::Deliver {
                            record,
                            from,
                        }),
                })
                .collect();
            engine.step(env)?;
        }
        Ok(engine.into_run())
    }
}
