//! Multi-writer multi-reader ABD register.
//!
//! Every process is both client and server. An operation runs two phases,
//! each a broadcast to all peers that completes once `n - f` processes
//! (counting the invoker itself) have answered:
//!
//! * write: query for the highest timestamp, then update with
//!   `(max.counter + 1, self)` and the new value;
//! * read: query for the highest timestamped value, then write it back, then
//!   return it.
//!
//! Wire format (ASCII, space separated; `ts` is `counter.writer`, `v` is a
//! decimal value or `_` for ⊥):
//!
//! | message      | form               |
//! |--------------|--------------------|
//! | query        | `abd/q rid`        |
//! | query reply  | `abd/qr rid ts v`  |
//! | update       | `abd/u rid ts v`   |
//! | update ack   | `abd/ua rid`       |
//!
//! `rid` is a per-process request counter; each phase uses a fresh one, so
//! replies to an earlier phase are ignored.

use std::collections::{BTreeSet, VecDeque};

use super::{Automaton, Protocol, ProtocolSpec, Timestamp, TimestampedValue};
use crate::error::{Error, Result};
use crate::model::{Input, LocalEvent, Payload, ProcessAction, ProcessId, Response, SystemConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Message {
    Query { rid: u64 },
    QueryReply { rid: u64, tv: TimestampedValue },
    Update { rid: u64, tv: TimestampedValue },
    UpdateAck { rid: u64 },
}

impl Message {
    fn encode(&self) -> Payload {
        Payload::text(&match self {
            Message::Query { rid } => format!("abd/q {rid}"),
            Message::QueryReply { rid, tv } => format!("abd/qr {rid} {}", tv.encode()),
            Message::Update { rid, tv } => format!("abd/u {rid} {}", tv.encode()),
            Message::UpdateAck { rid } => format!("abd/ua {rid}"),
        })
    }

    fn decode(payload: &Payload) -> Option<Self> {
        let text = std::str::from_utf8(payload.as_bytes()).ok()?;
        let parts: Vec<&str> = text.split(' ').collect();
        let rid = parts.get(1)?.parse().ok()?;
        match (parts[0], parts.len()) {
            ("abd/q", 2) => Some(Message::Query { rid }),
            ("abd/ua", 2) => Some(Message::UpdateAck { rid }),
            ("abd/qr", 4) => Some(Message::QueryReply {
                rid,
                tv: TimestampedValue::decode(parts[2], parts[3])?,
            }),
            ("abd/u", 4) => Some(Message::Update {
                rid,
                tv: TimestampedValue::decode(parts[2], parts[3])?,
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Query,
    Update,
    Done,
}

#[derive(Clone, Debug)]
struct ClientOp {
    input: Input,
    phase: Phase,
    rid: u64,
    responders: BTreeSet<ProcessId>,
    best: TimestampedValue,
    chosen: TimestampedValue,
}

#[derive(Clone, Debug)]
struct AbdProcess {
    me: ProcessId,
    quorum: usize,
    peers: Vec<ProcessId>,
    stored: TimestampedValue,
    next_rid: u64,
    outbox: VecDeque<(ProcessId, Message)>,
    op: Option<ClientOp>,
}

impl AbdProcess {
    fn broadcast(&mut self, msg: Message) {
        for &p in &self.peers {
            self.outbox.push_back((p, msg.clone()));
        }
    }

    fn fresh_rid(&mut self) -> u64 {
        self.next_rid += 1;
        self.next_rid
    }

    fn adopt(&mut self, tv: TimestampedValue) {
        if tv > self.stored {
            self.stored = tv;
        }
    }

    /// Moves the current operation forward while its phase has a quorum.
    fn advance(&mut self) {
        loop {
            let Some(op) = self.op.as_ref() else { return };
            if op.phase == Phase::Done || op.responders.len() < self.quorum {
                return;
            }
            match op.phase {
                Phase::Query => {
                    let chosen = match op.input {
                        Input::Write(v) => TimestampedValue {
                            ts: Timestamp {
                                counter: op.best.ts.counter + 1,
                                writer: self.me,
                            },
                            value: Some(v),
                        },
                        Input::Read => op.best,
                    };
                    let rid = self.fresh_rid();
                    self.adopt(chosen);
                    let me = self.me;
                    let op = self.op.as_mut().expect("checked");
                    op.phase = Phase::Update;
                    op.rid = rid;
                    op.chosen = chosen;
                    op.responders = BTreeSet::from([me]);
                    self.broadcast(Message::Update { rid, tv: chosen });
                }
                Phase::Update => {
                    self.op.as_mut().expect("checked").phase = Phase::Done;
                }
                Phase::Done => unreachable!(),
            }
        }
    }

    fn on_message(&mut self, from: ProcessId, msg: Message) {
        match msg {
            Message::Query { rid } => {
                let tv = self.stored;
                self.outbox.push_back((from, Message::QueryReply { rid, tv }));
            }
            Message::Update { rid, tv } => {
                self.adopt(tv);
                self.outbox.push_back((from, Message::UpdateAck { rid }));
            }
            Message::QueryReply { rid, tv } => {
                if let Some(op) = self.op.as_mut() {
                    if op.phase == Phase::Query && op.rid == rid {
                        op.responders.insert(from);
                        op.best = op.best.max(tv);
                    }
                }
                self.advance();
            }
            Message::UpdateAck { rid } => {
                if let Some(op) = self.op.as_mut() {
                    if op.phase == Phase::Update && op.rid == rid {
                        op.responders.insert(from);
                    }
                }
                self.advance();
            }
        }
    }
}

impl Automaton for AbdProcess {
    fn observe(&mut self, event: &LocalEvent) {
        match event {
            LocalEvent::Input(input) => {
                let rid = self.fresh_rid();
                self.op = Some(ClientOp {
                    input: *input,
                    phase: Phase::Query,
                    rid,
                    responders: BTreeSet::from([self.me]),
                    best: self.stored,
                    chosen: self.stored,
                });
                self.broadcast(Message::Query { rid });
                self.advance();
            }
            LocalEvent::Received { from, payload } => {
                if let Some(msg) = Message::decode(payload) {
                    self.on_message(*from, msg);
                }
            }
            LocalEvent::Performed(ProcessAction::Send { .. }) => {
                self.outbox.pop_front();
            }
            LocalEvent::Performed(ProcessAction::Return(_)) => {
                self.op = None;
            }
            LocalEvent::Performed(_) => {}
        }
    }

    fn next_action(&self) -> ProcessAction {
        if let Some((to, msg)) = self.outbox.front() {
            return ProcessAction::Send {
                payload: msg.encode(),
                to: *to,
            };
        }
        match &self.op {
            Some(op) if op.phase == Phase::Done => ProcessAction::Return(match op.input {
                Input::Write(_) => Response::Write,
                Input::Read => Response::Read(op.chosen.value),
            }),
            _ => ProcessAction::NoOp,
        }
    }

    fn clone_box(&self) -> Box<dyn Automaton> {
        Box::new(self.clone())
    }
}

#[derive(Debug)]
struct Abd {
    quorum: usize,
    peers: Vec<Vec<ProcessId>>,
}

impl Protocol for Abd {
    fn name(&self) -> &str {
        "abd"
    }

    fn automaton(&self, process: ProcessId, _initial: &Payload) -> Box<dyn Automaton> {
        Box::new(AbdProcess {
            me: process,
            quorum: self.quorum,
            peers: self.peers[process].clone(),
            stored: TimestampedValue::default(),
            next_rid: 0,
            outbox: VecDeque::new(),
            op: None,
        })
    }
}

/// ABD register for `config`; requires `n >= 2f + 1`.
pub fn abd_protocol(config: &SystemConfig) -> Result<ProtocolSpec> {
    if config.n < 2 * config.f + 1 {
        return Err(Error::Config(format!(
            "ABD needs n >= 2f + 1, got n = {}, f = {}",
            config.n, config.f
        )));
    }
    Ok(ProtocolSpec::new(Abd {
        quorum: config.n - config.f,
        peers: (0..config.n).map(|p| config.net.out_neighbors(p)).collect(),
    }))
}
