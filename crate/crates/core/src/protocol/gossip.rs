//! Message-heavy background protocol for exercising the causality and
//! transformation machinery. On every move a process sends `ping k` to its
//! out-neighbors in turn, `k` counting its sends. Invoked operations return
//! on the next move: writes acknowledge, reads return ⊥.

use super::{Automaton, Protocol, ProtocolSpec};
use crate::error::Result;
use crate::model::{Input, LocalEvent, Payload, ProcessAction, ProcessId, Response, SystemConfig};

#[derive(Clone, Debug)]
struct GossipProcess {
    peers: Vec<ProcessId>,
    sent: usize,
    pending: Option<Input>,
}

impl Automaton for GossipProcess {
    fn observe(&mut self, event: &LocalEvent) {
        match event {
            LocalEvent::Input(i) => self.pending = Some(*i),
            LocalEvent::Performed(ProcessAction::Return(_)) => self.pending = None,
            LocalEvent::Performed(ProcessAction::Send { .. }) => self.sent += 1,
            _ => {}
        }
    }

    fn next_action(&self) -> ProcessAction {
        match self.pending {
            Some(Input::Write(_)) => ProcessAction::Return(Response::Write),
            Some(Input::Read) => ProcessAction::Return(Response::Read(None)),
            None if self.peers.is_empty() => ProcessAction::NoOp,
            None => ProcessAction::Send {
                payload: Payload::text(&format!("ping {}", self.sent)),
                to: self.peers[self.sent % self.peers.len()],
            },
        }
    }

    fn clone_box(&self) -> Box<dyn Automaton> {
        Box::new(self.clone())
    }
}

#[derive(Debug)]
struct Gossip {
    peers: Vec<Vec<ProcessId>>,
}

impl Protocol for Gossip {
    fn name(&self) -> &str {
        "gossip"
    }

    fn automaton(&self, process: ProcessId, _initial: &Payload) -> Box<dyn Automaton> {
        Box::new(GossipProcess {
            peers: self.peers[process].clone(),
            sent: 0,
            pending: None,
        })
    }
}

pub fn gossip_protocol(config: &SystemConfig) -> Result<ProtocolSpec> {
    Ok(ProtocolSpec::new(Gossip {
        peers: (0..config.n).map(|p| config.net.out_neighbors(p)).collect(),
    }))
}
