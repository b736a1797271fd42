//! The asynchronous message-passing model: processes, channels, environment
//! and process actions, local histories, global states, and runs.
//!
//! Time is measured in rounds. Round `m` (1-indexed) takes the global state at
//! time `m - 1` to the state at time `m`; the initial state is time 0. Within a
//! round every process gets exactly one environment component: it moves,
//! skips, receives an external input, or is delivered the head of one of its
//! incoming FIFO channels.

mod transition;
mod validate;

pub use transition::{apply_transition, replay, Execution, MessageEvent};
pub use validate::{validate_run, ValidationReport, Violation, ViolationKind};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::AdversarySpec;

pub type ProcessId = usize;
pub type Round = usize;

/// A process-time pair `<p, t>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub process: ProcessId,
    pub time: Round,
}

impl Node {
    pub const fn new(process: ProcessId, time: Round) -> Self {
        Self { process, time }
    }

    /// Real-time order between nodes: strictly earlier time.
    pub fn before(&self, other: &Node) -> bool {
        self.time < other.time
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.process, self.time)
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, t) = s
            .split_once(':')
            .ok_or_else(|| Error::Trace(format!("node `{s}` is not of the form p:t")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::Trace(format!("node `{s}` is not of the form p:t")))
        };
        Ok(Node::new(parse(p)?, parse(t)?))
    }
}

/// Opaque byte string. Serialized as lowercase hex.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Payload(pub Vec<u8>);

impl Payload {
    pub fn text(s: &str) -> Self {
        Payload(s.as_bytes().to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.bytes().all(|b| b.is_ascii_graphic() || b == b' ') => write!(f, "{s:?}"),
            _ => write!(f, "0x{}", hex::encode(&self.0)),
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for Payload {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map(Payload).map_err(serde::de::Error::custom)
    }
}

/// A register value. `None` in a read response stands for the default
/// value ⊥.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(pub u64);

impl Value {
    /// The `counter`-th value written by `process`. Distinct arguments give
    /// distinct values, which keeps every written value unique in a run.
    pub fn tagged(process: ProcessId, counter: u64) -> Self {
        Value(((process as u64 + 1) << 32) | (counter & 0xffff_ffff))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Shows an optional register value, rendering ⊥ as `_`.
pub fn show_value(v: Option<Value>) -> String {
    v.map_or_else(|| "_".to_string(), |v| v.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Write,
}

/// External input delivered by `Invoke`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Read,
    Write(Value),
}

impl Input {
    pub fn kind(&self) -> OpKind {
        match self {
            Input::Read => OpKind::Read,
            Input::Write(_) => OpKind::Write,
        }
    }
}

/// Argument of a `Return` action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Read(Option<Value>),
    Write,
}

impl Response {
    pub fn kind(&self) -> OpKind {
        match self {
            Response::Read(_) => OpKind::Read,
            Response::Write => OpKind::Write,
        }
    }
}

/// `|μ, t|`: payload `μ` sent in round `t`, still in transit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageRecord {
    pub payload: Payload,
    pub send_round: Round,
}

/// FIFO channel along one edge of the network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub src: ProcessId,
    pub dst: ProcessId,
    pub in_transit: VecDeque<MessageRecord>,
}

impl Channel {
    pub fn new(src: ProcessId, dst: ProcessId) -> Self {
        Self {
            src,
            dst,
            in_transit: VecDeque::new(),
        }
    }

    pub fn head(&self) -> Option<&MessageRecord> {
        self.in_transit.front()
    }
}

/// One process's component of the environment action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvComponent {
    Move,
    Skip,
    Invoke(Input),
    Deliver { record: MessageRecord, from: ProcessId },
}

/// Action recorded for a process in a joint action.
///
/// `Bottom` marks a process that was not moved and received nothing;
/// `Receive` marks a successful delivery (a reception, not a protocol step).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessAction {
    Local { tag: String, args: Payload },
    Send { payload: Payload, to: ProcessId },
    Return(Response),
    NoOp,
    Receive,
    Bottom,
}

impl ProcessAction {
    /// Whether this is something a moved process may perform.
    pub fn is_step(&self) -> bool {
        !matches!(self, ProcessAction::Receive | ProcessAction::Bottom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction {
    pub env: Vec<EnvComponent>,
    pub actions: Vec<ProcessAction>,
}

impl JointAction {
    /// A round in which every process skips.
    pub fn idle(n: usize) -> Self {
        Self {
            env: vec![EnvComponent::Skip; n],
            actions: vec![ProcessAction::Bottom; n],
        }
    }

    pub fn is_idle(&self) -> bool {
        self.env.iter().all(|e| matches!(e, EnvComponent::Skip))
    }
}

/// Entry of a local history: an action performed, an input received, or a
/// message received.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEvent {
    Performed(ProcessAction),
    Input(Input),
    Received { from: ProcessId, payload: Payload },
}

/// A process's local state: its initial value and everything it has
/// observed, in order.
///
/// The round at which each event happened is kept alongside for reporting,
/// but it is not part of the local state: two histories are equal iff their
/// initial values and event sequences are equal.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LocalHistory {
    pub initial: Payload,
    pub events: Vec<LocalEvent>,
    pub rounds: Vec<Round>,
}

impl LocalHistory {
    pub fn new(initial: Payload) -> Self {
        Self {
            initial,
            events: Vec::new(),
            rounds: Vec::new(),
        }
    }

    pub fn push(&mut self, round: Round, event: LocalEvent) {
        debug_assert!(self.rounds.last().is_none_or(|&r| r < round));
        self.events.push(event);
        self.rounds.push(round);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

impl PartialEq for LocalHistory {
    fn eq(&self, other: &Self) -> bool {
        self.initial == other.initial && self.events == other.events
    }
}

impl Eq for LocalHistory {}

/// Directed communication graph. Edges are channels `(src, dst)`, `src != dst`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Network {
    edges: BTreeSet<(ProcessId, ProcessId)>,
}

impl Network {
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self { edges }
    }

    pub fn empty() -> Self {
        Self {
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (ProcessId, ProcessId)>) -> Self {
        Self {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn has_edge(&self, src: ProcessId, dst: ProcessId) -> bool {
        self.edges.contains(&(src, dst))
    }

    pub fn edges(&self) -> impl Iterator<Item = (ProcessId, ProcessId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn out_neighbors(&self, p: ProcessId) -> Vec<ProcessId> {
        self.edges
            .range((p, 0)..(p + 1, 0))
            .map(|&(_, j)| j)
            .collect()
    }

    pub fn in_neighbors(&self, p: ProcessId) -> Vec<ProcessId> {
        self.edges
            .iter()
            .filter(|&&(_, j)| j == p)
            .map(|&(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    pub f: usize,
    pub net: Network,
    pub protocol: String,
}

impl SystemConfig {
    /// `n` processes on a complete network.
    pub fn new(n: usize, f: usize, protocol: &str) -> Result<Self> {
        Self::with_net(n, f, protocol, Network::complete(n))
    }

    pub fn with_net(n: usize, f: usize, protocol: &str, net: Network) -> Result<Self> {
        let config = Self {
            n,
            f,
            net,
            protocol: protocol.to_string(),
        };
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.f >= self.n {
            return Err(Error::Config(format!("f = {} must be below n = {}", self.f, self.n)));
        }
        for (i, j) in self.net.edges() {
            if i >= self.n || j >= self.n || i == j {
                return Err(Error::Config(format!("invalid channel {i} -> {j}")));
            }
        }
        Ok(())
    }
}

/// Snapshot of the whole system at one time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalState {
    /// Recorded joint actions of all rounds so far.
    pub env_history: Vec<JointAction>,
    pub channels: BTreeMap<(ProcessId, ProcessId), Channel>,
    pub locals: Vec<LocalHistory>,
    /// Processes that have taken their last permitted step, with the crash round.
    pub crashed: BTreeMap<ProcessId, Round>,
}

impl GlobalState {
    pub fn initial(config: &SystemConfig, initial: &[Payload]) -> Self {
        let channels = config
            .net
            .edges()
            .map(|(i, j)| ((i, j), Channel::new(i, j)))
            .collect();
        let locals = (0..config.n)
            .map(|i| LocalHistory::new(initial.get(i).cloned().unwrap_or_default()))
            .collect();
        Self {
            env_history: Vec::new(),
            channels,
            locals,
            crashed: BTreeMap::new(),
        }
    }

    /// Current time: number of rounds applied.
    pub fn time(&self) -> Round {
        self.env_history.len()
    }
}

/// A finite prefix of a run.
///
/// `crashes[p] = c` means process `p` takes no step (and receives no input)
/// in any round after `c`; processes absent from the map are correct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub config: SystemConfig,
    pub initial: Vec<Payload>,
    pub rounds: Vec<JointAction>,
    pub crashes: BTreeMap<ProcessId, Round>,
    pub quiescent: bool,
    pub seed: Option<u64>,
    pub adversary: Option<AdversarySpec>,
}

impl Run {
    /// An empty run (horizon 0) with empty initial values.
    pub fn new(config: SystemConfig) -> Self {
        let initial = vec![Payload::default(); config.n];
        Self {
            config,
            initial,
            rounds: Vec::new(),
            crashes: BTreeMap::new(),
            quiescent: false,
            seed: None,
            adversary: None,
        }
    }

    pub fn horizon(&self) -> Round {
        self.rounds.len()
    }

    pub fn initial_state(&self) -> GlobalState {
        GlobalState::initial(&self.config, &self.initial)
    }

    pub fn is_crashed_in(&self, p: ProcessId, round: Round) -> bool {
        self.crashes.get(&p).is_some_and(|&c| round > c)
    }

    /// The prefix up to and including round `horizon`.
    pub fn truncated(&self, horizon: Round) -> Run {
        let mut run = self.clone();
        run.rounds.truncate(horizon);
        run.crashes.retain(|_, c| *c < horizon);
        run.quiescent = false;
        run
    }
}
