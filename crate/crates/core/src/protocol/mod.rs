//! Protocols bound to processes.
//!
//! A protocol maps every local history to the set of actions the process may
//! perform when moved. All protocols here are deterministic, so the set is a
//! singleton, and they are written as automata folded over the local
//! history: feeding the events of a history into a fresh automaton and asking
//! for `next_action` yields the protocol's action at that history.

mod abd;
mod broken;
mod gossip;

pub use abd::abd_protocol;
pub use broken::broken_protocol;
pub use gossip::gossip_protocol;

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{LocalHistory, Payload, ProcessAction, ProcessId, SystemConfig, Value};

/// Per-process protocol state.
pub trait Automaton: Send {
    /// Folds the next event of the local history into the state.
    fn observe(&mut self, event: &crate::model::LocalEvent);

    /// The action performed if the process is moved now. `NoOp` when idle.
    fn next_action(&self) -> ProcessAction;

    fn clone_box(&self) -> Box<dyn Automaton>;
}

impl Clone for Box<dyn Automaton> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub trait Protocol: Send + Sync {
    fn name(&self) -> &str;

    /// Automaton of `process` in its initial local state.
    fn automaton(&self, process: ProcessId, initial: &Payload) -> Box<dyn Automaton>;
}

/// Shared handle to a protocol `P = (P_1, ..., P_n)`.
#[derive(Clone)]
pub struct ProtocolSpec(Arc<dyn Protocol>);

impl ProtocolSpec {
    pub fn new(protocol: impl Protocol + 'static) -> Self {
        Self(Arc::new(protocol))
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    pub fn automaton(&self, process: ProcessId, initial: &Payload) -> Box<dyn Automaton> {
        self.0.automaton(process, initial)
    }

    /// The automaton of `process` after folding `history`.
    pub fn automaton_at(&self, process: ProcessId, history: &LocalHistory) -> Box<dyn Automaton> {
        let mut a = self.automaton(process, &history.initial);
        for e in &history.events {
            a.observe(e);
        }
        a
    }

    /// `P_i(ℓ_i)`: the permitted actions at a local state.
    pub fn permitted(&self, process: ProcessId, history: &LocalHistory) -> Vec<ProcessAction> {
        vec![self.automaton_at(process, history).next_action()]
    }
}

impl fmt::Debug for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ProtocolSpec").field(&self.name()).finish()
    }
}

/// Names accepted by [`by_name`].
pub const PROTOCOL_NAMES: [&str; 3] = ["abd", "broken", "gossip"];

/// Resolves the protocol named in `config`.
pub fn by_name(config: &SystemConfig) -> Result<ProtocolSpec> {
    match config.protocol.as_str() {
        "abd" => abd_protocol(config),
        "broken" => broken_protocol(config),
        "gossip" => gossip_protocol(config),
        other => Err(Error::UnknownProtocol(other.to_string())),
    }
}

/// Lexicographic `(counter, writer)` timestamp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub counter: u64,
    pub writer: ProcessId,
}

/// A register value with the timestamp of the write that produced it. The
/// initial register holds ⊥ at timestamp `(0, 0)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct TimestampedValue {
    pub ts: Timestamp,
    pub value: Option<Value>,
}

impl PartialOrd for TimestampedValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimestampedValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ts.cmp(&other.ts).then(self.value.cmp(&other.value))
    }
}

impl TimestampedValue {
    /// Wire form `counter.writer value`, with `_` for ⊥.
    pub(crate) fn encode(&self) -> String {
        format!(
            "{}.{} {}",
            self.ts.counter,
            self.ts.writer,
            crate::model::show_value(self.value)
        )
    }

    pub(crate) fn decode(ts: &str, value: &str) -> Option<Self> {
        let (c, w) = ts.split_once('.')?;
        let value = match value {
            "_" => None,
            v => Some(Value(v.parse().ok()?)),
        };
        Some(Self {
            ts: Timestamp {
                counter: c.parse().ok()?,
                writer: w.parse().ok()?,
            },
            value,
        })
    }
}
