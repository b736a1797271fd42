//! Seeded simulation of protocols under an adversarial environment.

mod adversary;
mod script;

pub use adversary::{AdversarySpec, CrashPlan, Delivery, InvocationPlan, PlannedInvocation, Schedule};
pub use script::{Script, Step};

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    EnvComponent, Execution, GlobalState, JointAction, LocalEvent, MessageRecord, Payload,
    ProcessAction, ProcessId, Round, Run, SystemConfig,
};
use crate::protocol::{Automaton, ProtocolSpec};

/// Incremental executor: a global state plus each process's protocol
/// automaton, advanced one round at a time. Moved processes perform exactly
/// the action their automaton prescribes, so every run an engine produces is a
/// legal run of its protocol.
#[derive(Clone)]
pub struct Engine {
    config: SystemConfig,
    initial: Vec<Payload>,
    state: GlobalState,
    automata: Vec<Box<dyn Automaton>>,
    crashes: BTreeMap<ProcessId, Round>,
    pending: Vec<bool>,
    invoked: Vec<usize>,
}

impl Engine {
    pub fn new(config: &SystemConfig, protocol: &ProtocolSpec, initial: Vec<Payload>) -> Self {
        let state = GlobalState::initial(config, &initial);
        let automata = (0..config.n)
            .map(|p| protocol.automaton(p, &state.locals[p].initial))
            .collect();
        Self {
            config: config.clone(),
            initial,
            state,
            automata,
            crashes: BTreeMap::new(),
            pending: vec![false; config.n],
            invoked: vec![0; config.n],
        }
    }

    /// An engine positioned at the end of `run`.
    pub fn resume(run: &Run, protocol: &ProtocolSpec) -> Result<Self> {
        let mut engine = Self::new(&run.config, protocol, run.initial.clone());
        engine.crashes = run.crashes.clone();
        for ja in &run.rounds {
            engine.apply(ja)?;
        }
        Ok(engine)
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn time(&self) -> Round {
        self.state.time()
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn crash(&mut self, p: ProcessId, round: Round) {
        self.crashes.insert(p, round);
    }

    pub fn crashes(&self) -> &BTreeMap<ProcessId, Round> {
        &self.crashes
    }

    pub fn is_crashed_in(&self, p: ProcessId, round: Round) -> bool {
        self.crashes.get(&p).is_some_and(|&c| round > c)
    }

    pub fn is_faulty(&self, p: ProcessId) -> bool {
        self.crashes.contains_key(&p)
    }

    /// Whether `p` would perform `NoOp` if moved now.
    pub fn is_idle(&self, p: ProcessId) -> bool {
        self.automata[p].next_action() == ProcessAction::NoOp
    }

    pub fn has_pending(&self, p: ProcessId) -> bool {
        self.pending[p]
    }

    /// Number of invocations `p` has received so far.
    pub fn invocations(&self, p: ProcessId) -> usize {
        self.invoked[p]
    }

    /// Heads of `p`'s non-empty incoming channels, by sender.
    pub fn incoming_heads(&self, p: ProcessId) -> Vec<(ProcessId, MessageRecord)> {
        self.state
            .channels
            .iter()
            .filter(|((_, dst), _)| *dst == p)
            .filter_map(|((src, _), chan)| chan.head().map(|h| (*src, h.clone())))
            .collect()
    }

    /// The head with the earliest send round (ties to the lowest sender).
    pub fn oldest_incoming(&self, p: ProcessId) -> Option<(ProcessId, MessageRecord)> {
        self.incoming_heads(p)
            .into_iter()
            .min_by_key(|(src, rec)| (rec.send_round, *src))
    }

    /// No correct process has work left: nothing to send or return, no
    /// pending operation, nothing in transit towards it.
    pub fn is_quiescent(&self) -> bool {
        (0..self.n()).filter(|&p| !self.is_faulty(p)).all(|p| {
            self.is_idle(p) && !self.pending[p] && self.incoming_heads(p).is_empty()
        })
    }

    /// Runs one round with the given environment components; moved
    /// processes act according to their automata.
    pub fn step(&mut self, env: Vec<EnvComponent>) -> Result<&JointAction> {
        let actions = env
            .iter()
            .enumerate()
            .map(|(i, e)| match e {
                EnvComponent::Move => self.automata[i].next_action(),
                _ => ProcessAction::Bottom,
            })
            .collect();
        self.apply(&JointAction { env, actions })?;
        Ok(self.state.env_history.last().expect("just applied"))
    }

    fn apply(&mut self, ja: &JointAction) -> Result<()> {
        let before: Vec<usize> = self.state.locals.iter().map(|h| h.len()).collect();
        self.state.step(ja)?;
        for (p, automaton) in self.automata.iter_mut().enumerate() {
            for event in &self.state.locals[p].events[before[p]..] {
                automaton.observe(event);
                match event {
                    LocalEvent::Input(_) => {
                        self.pending[p] = true;
                        self.invoked[p] += 1;
                    }
                    LocalEvent::Performed(ProcessAction::Return(_)) => self.pending[p] = false,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn into_run(self) -> Run {
        let quiescent = self.is_quiescent();
        Run {
            config: self.config,
            initial: self.initial,
            rounds: self.state.env_history,
            crashes: self.crashes,
            quiescent,
            seed: None,
            adversary: None,
        }
    }

    /// The run so far, without consuming the engine.
    pub fn to_run(&self) -> Run {
        self.clone().into_run()
    }
}

/// Simulates `horizon` rounds of `protocol` with every environment choice
/// made by `adversary` under `seed`.
pub fn simulate(
    config: &SystemConfig,
    protocol: &ProtocolSpec,
    adversary: &AdversarySpec,
    horizon: Round,
    seed: u64,
) -> Result<Run> {
    if horizon == 0 {
        return Err(Error::AdversaryExhausted("horizon must be at least 1".into()));
    }
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crashes = adversary.resolve_crashes(config.n, config.f, &mut rng)?;
    let mut engine = Engine::new(config, protocol, vec![Payload::default(); config.n]);
    for (&p, &c) in &crashes {
        engine.crash(p, c);
    }
    let mut driver = adversary::Driver::new(adversary.clone(), rng, config.n);
    for _ in 0..horizon {
        let env = driver.choose(&engine);
        engine.step(env)?;
    }
    let mut run = engine.into_run();
    run.seed = Some(seed);
    run.adversary = Some(adversary.clone());
    Ok(run)
}

/// Messages sent but never delivered in the run prefix: the channel contents
/// at the horizon.
pub fn lost_messages(run: &Run) -> Result<BTreeSet<((ProcessId, ProcessId), MessageRecord)>> {
    let exec = Execution::of(run)?;
    Ok(exec
        .final_state
        .channels
        .iter()
        .flat_map(|(edge, chan)| chan.in_transit.iter().map(move |r| (*edge, r.clone())))
        .collect())
}
