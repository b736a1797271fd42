//! A register that skips all coordination: operations return on the first
//! move after invocation. A write updates the local copy, returns, and then
//! sends its value once to every peer without waiting for anything; a read
//! returns the local copy. Receivers adopt values with higher timestamps.
//!
//! Wire format: `set ts v` with `ts` as `counter.writer`.
//!
//! This is a negative fixture: its runs are linearizable only under lucky
//! schedules.

use std::collections::VecDeque;

use super::{Automaton, Protocol, ProtocolSpec, Timestamp, TimestampedValue};
use crate::error::Result;
use crate::model::{Input, LocalEvent, Payload, ProcessAction, ProcessId, Response, SystemConfig};

#[derive(Clone, Debug)]
struct BrokenProcess {
    me: ProcessId,
    peers: Vec<ProcessId>,
    stored: TimestampedValue,
    ready: Option<Response>,
    outbox: VecDeque<(ProcessId, Payload)>,
}

impl Automaton for BrokenProcess {
    fn observe(&mut self, event: &LocalEvent) {
        match event {
            LocalEvent::Input(Input::Write(v)) => {
                self.stored = TimestampedValue {
                    ts: Timestamp {
                        counter: self.stored.ts.counter + 1,
                        writer: self.me,
                    },
                    value: Some(*v),
                };
                self.ready = Some(Response::Write);
            }
            LocalEvent::Input(Input::Read) => {
                self.ready = Some(Response::Read(self.stored.value));
            }
            LocalEvent::Performed(ProcessAction::Return(Response::Write)) => {
                self.ready = None;
                let msg = Payload::text(&format!("set {}", self.stored.encode()));
                for &p in &self.peers {
                    self.outbox.push_back((p, msg.clone()));
                }
            }
            LocalEvent::Performed(ProcessAction::Return(_)) => self.ready = None,
            LocalEvent::Performed(ProcessAction::Send { .. }) => {
                self.outbox.pop_front();
            }
            LocalEvent::Performed(_) => {}
            LocalEvent::Received { payload, .. } => {
                let decoded = std::str::from_utf8(payload.as_bytes())
                    .ok()
                    .and_then(|s| s.strip_prefix("set "))
                    .and_then(|s| s.split_once(' '))
                    .and_then(|(ts, v)| TimestampedValue::decode(ts, v));
                if let Some(tv) = decoded {
                    if tv > self.stored {
                        self.stored = tv;
                    }
                }
            }
        }
    }

    fn next_action(&self) -> ProcessAction {
        if let Some(r) = self.ready {
            return ProcessAction::Return(r);
        }
        match self.outbox.front() {
            Some((to, payload)) => ProcessAction::Send {
                payload: payload.clone(),
                to: *to,
            },
            None => ProcessAction::NoOp,
        }
    }

    fn clone_box(&self) -> Box<dyn Automaton> {
        Box::new(self.clone())
    }
}

#[derive(Debug)]
struct Broken {
    peers: Vec<Vec<ProcessId>>,
}

impl Protocol for Broken {
    fn name(&self) -> &str {
        "broken"
    }

    fn automaton(&self, process: ProcessId, _initial: &Payload) -> Box<dyn Automaton> {
        Box::new(BrokenProcess {
            me: process,
            peers: self.peers[process].clone(),
            stored: TimestampedValue::default(),
            ready: None,
            outbox: VecDeque::new(),
        })
    }
}

pub fn broken_protocol(config: &SystemConfig) -> Result<ProtocolSpec> {
    Ok(ProtocolSpec::new(Broken {
        peers: (0..config.n).map(|p| config.net.out_neighbors(p)).collect(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Value;

    #[test]
    fn write_returns_before_broadcasting() {
        let cfg = SystemConfig::new(3, 1, "broken").unwrap();
        let spec = broken_protocol(&cfg).unwrap();
        let mut a = spec.automaton(1, &Payload::default());
        a.observe(&LocalEvent::Input(Input::Write(Value(8))));
        assert_eq!(a.next_action(), ProcessAction::Return(Response::Write));
        a.observe(&LocalEvent::Performed(ProcessAction::Return(Response::Write)));
        assert_eq!(
            a.next_action(),
            ProcessAction::Send {
                payload: Payload::text("set 1.1 8"),
                to: 0
            }
        );
    }

    #[test]
    fn read_returns_latest_adopted_value() {
        let cfg = SystemConfig::new(2, 0, "broken").unwrap();
        let spec = broken_protocol(&cfg).unwrap();
        let mut a = spec.automaton(0, &Payload::default());
        a.observe(&LocalEvent::Received {
            from: 1,
            payload: Payload::text("set 2.1 40"),
        });
        a.observe(&LocalEvent::Received {
            from: 1,
            payload: Payload::text("set 1.1 30"),
        });
        a.observe(&LocalEvent::Input(Input::Read));
        assert_eq!(
            a.next_action(),
            ProcessAction::Return(Response::Read(Some(Value(40))))
        );
    }
}
