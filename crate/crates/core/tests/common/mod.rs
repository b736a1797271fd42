//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::VecDeque;

use linchain::history::OperationInstance;
use linchain::model::{EnvComponent, LocalEvent, Node, OpKind, ProcessAction, Round, Run, Value};
use linchain::sim::{AdversarySpec, CrashPlan, Delivery, InvocationPlan, Schedule};
use linchain::{by_name, simulate, SystemConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Nodes `<p,t>` with plain adjacency lists: same-process successor edges
/// plus one edge per reception, read off the local histories as the run is
/// stepped.
pub struct Graph {
    pub n: usize,
    pub h: Round,
    pub succ: Vec<Vec<usize>>,
    pub pred: Vec<Vec<usize>>,
}

impl Graph {
    pub fn of(run: &Run) -> Self {
        let n = run.config.n;
        let h = run.horizon();
        let mut g = Graph {
            n,
            h,
            succ: vec![Vec::new(); n * (h + 1)],
            pred: vec![Vec::new(); n * (h + 1)],
        };
        for p in 0..n {
            for t in 0..h {
                g.edge(Node::new(p, t), Node::new(p, t + 1));
            }
        }
        let mut state = run.initial_state();
        for (idx, ja) in run.rounds.iter().enumerate() {
            let before: Vec<usize> = state.locals.iter().map(|l| l.events.len()).collect();
            state.step(ja).expect("run replays");
            let m = idx + 1;
            for i in 0..n {
                let events = &state.locals[i].events;
                if events.len() == before[i] {
                    continue;
                }
                if let Some(LocalEvent::Received { from, .. }) = events.last() {
                    let EnvComponent::Deliver { record, from: f } = &state.env_history[idx].env[i] else {
                        panic!("reception without a delivery");
                    };
                    assert_eq!(from, f);
                    g.edge(Node::new(*from, record.send_round - 1), Node::new(i, m));
                }
            }
        }
        g
    }

    pub fn id(&self, node: Node) -> usize {
        node.process * (self.h + 1) + node.time
    }

    pub fn node(&self, id: usize) -> Node {
        Node::new(id / (self.h + 1), id % (self.h + 1))
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    fn edge(&mut self, a: Node, b: Node) {
        let (a, b) = (self.id(a), self.id(b));
        self.succ[a].push(b);
        self.pred[b].push(a);
    }

    fn search(&self, start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = adj[start].iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if !std::mem::replace(&mut seen[v], true) {
                queue.extend(adj[v].iter().copied());
            }
        }
        seen
    }

    /// Nodes reachable from `a` by a nonempty path.
    pub fn forward(&self, a: Node) -> Vec<bool> {
        self.search(self.id(a), &self.succ)
    }

    /// Nodes with a nonempty path to `b`.
    pub fn backward(&self, b: Node) -> Vec<bool> {
        self.search(self.id(b), &self.pred)
    }

    /// Transitive closure by the textbook triple loop.
    pub fn closure(&self) -> Vec<Vec<bool>> {
        let k = self.len();
        let mut r = vec![vec![false; k]; k];
        for (a, out) in self.succ.iter().enumerate() {
            for &b in out {
                r[a][b] = true;
            }
        }
        for m in 0..k {
            for i in 0..k {
                if r[i][m] {
                    for j in 0..k {
                        if r[m][j] {
                            r[i][j] = true;
                        }
                    }
                }
            }
        }
        r
    }

    /// For each process `j`, the least `l` with `<j,l>` outside the past of `pivot`.
    pub fn cut(&self, pivot: Node) -> Vec<Round> {
        let back = self.backward(pivot);
        (0..self.n)
            .map(|j| {
                (0..=self.h)
                    .find(|&l| !back[self.id(Node::new(j, l))])
                    .unwrap_or(self.h + 1)
            })
            .collect()
    }

    /// Processes `p` with `x_s ⇝ <p, t_end>`, plus `x_s`'s own.
    pub fn observers(&self, x_s: Node, t_end: Round) -> Vec<usize> {
        let fwd = self.forward(x_s);
        (0..self.n)
            .filter(|&p| p == x_s.process || fwd[self.id(Node::new(p, t_end))])
            .collect()
    }

    /// Processes lying on a chain from `x_s` to `x_e`, plus `x_s`'s own.
    pub fn witnesses(&self, x_s: Node, x_e: Node) -> Vec<usize> {
        let fwd = self.forward(x_s);
        let back = self.backward(x_e);
        (0..self.n)
            .filter(|&p| {
                p == x_s.process
                    || (0..=self.h).any(|t| {
                        let id = self.id(Node::new(p, t));
                        fwd[id] && back[id]
                    })
            })
            .collect()
    }
}

fn before(x: &OperationInstance, y: &OperationInstance) -> bool {
    x.end.is_some_and(|e| e.time < y.start.time)
}

/// Tries every subset of pending operations and every ordering of the
/// chosen operations. Pending reads may return anything.
pub fn brute_force_linearizable(ops: &[OperationInstance]) -> bool {
    let done: Vec<&OperationInstance> = ops.iter().filter(|o| o.end.is_some()).collect();
    let pending: Vec<&OperationInstance> = ops.iter().filter(|o| o.end.is_none()).collect();
    for mask in 0..(1u32 << pending.len()) {
        let mut chosen = done.clone();
        chosen.extend(
            pending
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, o)| *o),
        );
        let mut order: Vec<usize> = (0..chosen.len()).collect();
        if permutations(&mut order, 0, &mut |perm| legal(&chosen, perm)) {
            return true;
        }
    }
    false
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == v.len() {
        return f(v);
    }
    for i in k..v.len() {
        v.swap(k, i);
        if permutations(v, k + 1, f) {
            v.swap(k, i);
            return true;
        }
        v.swap(k, i);
    }
    false
}

fn legal(ops: &[&OperationInstance], perm: &[usize]) -> bool {
    for (a, &i) in perm.iter().enumerate() {
        for &j in &perm[a + 1..] {
            if before(ops[j], ops[i]) {
                return false;
            }
        }
    }
    let mut current: Option<Value> = None;
    for &i in perm {
        let op = ops[i];
        match op.kind {
            OpKind::Write => current = op.value,
            OpKind::Read => {
                if op.end.is_some() && op.value != current {
                    return false;
                }
            }
        }
    }
    true
}

/// Whether some completed `X <_r Y <_r Z` returns or writes `a, b, a`, `a != b`.
pub fn has_aba(ops: &[OperationInstance]) -> bool {
    let done: Vec<&OperationInstance> = ops.iter().filter(|o| o.end.is_some()).collect();
    done.iter().any(|x| {
        done.iter().any(|y| {
            before(x, y)
                && y.value != x.value
                && done.iter().any(|z| before(y, z) && z.value == x.value)
        })
    })
}

/// Operations invoked but never answered, counted from the local histories of
/// processes that do not crash.
pub fn pending_at_correct(run: &Run) -> usize {
    let mut state = run.initial_state();
    for ja in &run.rounds {
        state.step(ja).expect("run replays");
    }
    (0..run.config.n)
        .filter(|p| !run.crashes.contains_key(p))
        .map(|p| {
            let events = &state.locals[p].events;
            let invoked = events.iter().filter(|e| matches!(e, LocalEvent::Input(_))).count();
            let returned = events
                .iter()
                .filter(|e| matches!(e, LocalEvent::Performed(ProcessAction::Return(_))))
                .count();
            invoked - returned
        })
        .sum()
}

/// Local histories of every process at every time, by direct replay.
pub fn local_states(run: &Run) -> Vec<Vec<(Vec<u8>, Vec<LocalEvent>)>> {
    let n = run.config.n;
    let mut state = run.initial_state();
    let snap = |s: &linchain::model::GlobalState, p: usize| {
        (s.locals[p].initial.as_bytes().to_vec(), s.locals[p].events.clone())
    };
    let mut out: Vec<Vec<_>> = (0..n).map(|p| vec![snap(&state, p)]).collect();
    for ja in &run.rounds {
        state.step(ja).expect("run replays");
        for (p, v) in out.iter_mut().enumerate() {
            v.push(snap(&state, p));
        }
    }
    out
}

/// Same initial values and final event sequences at every process.
pub fn same_local_runs(a: &Run, b: &Run) -> bool {
    let (sa, sb) = (local_states(a), local_states(b));
    sa.iter().zip(&sb).all(|(x, y)| x.last() == y.last())
}

/// An adversary with randomly chosen policies.
pub fn mixed_adversary(rng: &mut ChaCha8Rng, n: usize, f: usize, horizon: Round) -> AdversarySpec {
    let schedule = match rng.gen_range(0..3) {
        0 => Schedule::RoundRobin,
        1 => Schedule::Always,
        _ => Schedule::Random { move_percent: rng.gen_range(20..90) },
    };
    let delivery = match rng.gen_range(0..3) {
        0 => Delivery::Immediate,
        _ => Delivery::Random { percent: rng.gen_range(20..90) },
    };
    let crashes = if f > 0 && rng.gen_bool(0.3) {
        CrashPlan::Random {
            count: rng.gen_range(1..=f),
            latest_round: horizon,
        }
    } else {
        CrashPlan::None
    };
    AdversarySpec {
        schedule,
        delivery,
        crashes,
        invocations: InvocationPlan::Random {
            percent: rng.gen_range(10..50),
            until: horizon,
            max_ops: 2 * n,
            read_percent: 50,
        },
        quiesce: rng.gen_bool(0.5),
    }
}

pub fn random_run(rng: &mut ChaCha8Rng, protocol: &str, n: usize, f: usize, horizon: Round) -> Run {
    let config = SystemConfig::new(n, f, protocol).unwrap();
    let spec = by_name(&config).unwrap();
    let adversary = mixed_adversary(rng, n, f, horizon);
    simulate(&config, &spec, &adversary, horizon, rng.gen()).unwrap()
}
