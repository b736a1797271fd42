//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{brute_force_linearizable, has_aba, local_states, pending_at_correct, random_run, same_local_runs, Graph};
use linchain::audit::{ChainRule, Finding};
use linchain::history::OpId;
use linchain::linearize::{aba_violations, linearize};
use linchain::model::Node;
use linchain::sim::{AdversarySpec, CrashPlan, Delivery, InvocationPlan, Schedule};
use linchain::transform::shift;
use linchain::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// `(has a-b-a, linearizable)` for every run checked by suites 4 to 7.
static ABA: Mutex<Vec<(bool, bool)>> = Mutex::new(Vec::new());

fn record_aba(aba: bool, linearizable: bool) {
    ABA.lock().unwrap().push((aba, linearizable));
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn delay_future_soundness() -> Outcome {
    let protocols = ["abd", "gossip", "broken"];
    let results: Vec<Result<(), String>> = (0..500u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + i);
            let run = random_run(&mut rng, protocols[i as usize % 3], 4, 1, 30);
            let h = run.horizon();
            let pivot = Node::new(rng.gen_range(0..4), rng.gen_range(0..=h));
            let delta = rng.gen_range(1..=10);
            let (r2, cert) = delay_future(&run, pivot, delta).map_err(|e| format!("run {i}: {e}"))?;
            let cut = Graph::of(&run).cut(pivot);
            ensure(cert.passed(), || format!("run {i}: certificate fails"))?;
            ensure(cert.shift.frontier.cut == cut, || format!("run {i}: cut {:?} vs {cut:?}", cert.shift.frontier.cut))?;
            ensure(validate_run(&r2, &by_name(&r2.config).unwrap()).is_clean(), || format!("run {i}: invalid"))?;
            ensure(same_local_runs(&run, &r2), || format!("run {i}: not locally equivalent"))?;
            let (s1, s2) = (local_states(&run), local_states(&r2));
            for j in 0..4 {
                for m in 0..=h {
                    ensure(s1[j][m] == s2[j][shift(m, cut[j], delta)], || {
                        format!("run {i}: r_{j}({m}) differs from its image")
                    })?;
                }
                for m2 in cut[j] + 1..=cut[j] + delta {
                    ensure(s2[j][m2] == s1[j][cut[j]], || format!("run {i}: band state of {j} at {m2}"))?;
                }
            }
            Ok(())
        })
        .collect();
    let errs: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    match errs.first() {
        None => Ok("500/500 certificates and pointwise checks".into()),
        Some(e) => Err(format!("{} failures, first: {e}", errs.len())),
    }
}

fn reorder_soundness() -> Outcome {
    let mut triples = 0;
    let mut z_checked = 0;
    let mut i = 0u64;
    while triples < 200 {
        i += 1;
        if i > 5000 {
            return Err(format!("only {triples} triples generated"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + i);
        let protocol = if i % 2 == 0 { "abd" } else { "gossip" };
        let run = random_run(&mut rng, protocol, 4, 1, 40);
        let ops = extract_operations(&run).map_err(|e| e.to_string())?;
        let g = Graph::of(&run);
        let mut pairs = Vec::new();
        for x in &ops {
            let fwd = g.forward(x.start);
            for y in ops.iter().filter(|y| y.id != x.id) {
                let Some(ye) = y.end else { continue };
                if !fwd[g.id(ye)] && ye.time >= x.start.time {
                    pairs.push((x, y));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let (x, y) = pairs[rng.gen_range(0..pairs.len())];
        let (r2, cert) = reorder_operations(&run, x.id, y.id)
            .map_err(|e| format!("run {i}, X={} Y={}: {e}", x.id, y.id))?;
        ensure(cert.passed(), || format!("run {i}: certificate fails"))?;
        ensure(same_local_runs(&run, &r2), || format!("run {i}: not locally equivalent"))?;
        let ops2: HashMap<OpId, _> = extract_operations(&r2)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|o| (o.id, o))
            .collect();
        let (x2, y2) = (&ops2[&x.id], &ops2[&y.id]);
        ensure(y2.end.unwrap().time < x2.start.time, || format!("run {i}: Y not before X"))?;
        let ye = g.id(y.end.unwrap());
        for z in &ops {
            let qualifies = z.end.is_some()
                && x.end.is_some_and(|xe| xe.time < z.start.time)
                && !g.forward(z.start)[ye];
            if qualifies {
                z_checked += 1;
                let z2 = &ops2[&z.id];
                ensure(x2.end.is_some_and(|xe| xe.time < z2.start.time), || {
                    format!("run {i}: {} no longer after {}", z.id, x.id)
                })?;
            }
        }
        triples += 1;
    }
    Ok(format!("200/200 triples, {z_checked} qualifying Z checked"))
}

fn causality_oracle() -> Outcome {
    let protocols = ["abd", "gossip", "broken"];
    let results: Vec<Result<usize, String>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(30_000 + i);
            let n = rng.gen_range(2..=4);
            let h = rng.gen_range(1..=15);
            let protocol = protocols[i as usize % 3];
            let f = if protocol == "abd" { (n - 1) / 2 } else { 1.min(n - 1) };
            let run = random_run(&mut rng, protocol, n, f, h);
            let index = build_index(&run).map_err(|e| e.to_string())?;
            let g = Graph::of(&run);
            let closure = g.closure();
            let mut positives = 0;
            for a in 0..g.len() {
                for b in 0..g.len() {
                    let (na, nb) = (g.node(a), g.node(b));
                    let hb = index.happens_before(na, nb);
                    ensure(hb == closure[a][b], || format!("run {i}: {na} ⇝ {nb}: index {hb}"))?;
                    if hb {
                        positives += 1;
                        ensure(na.time < nb.time, || format!("run {i}: chain {na} ⇝ {nb} not forward"))?;
                    }
                }
            }
            Ok(positives)
        })
        .collect();
    let mut total = 0;
    for r in results {
        total += r?;
    }
    Ok(format!("100 runs agree, {total} positive pairs all forward in time"))
}

fn checker_completeness() -> Outcome {
    let protocols = ["abd", "gossip", "broken"];
    let results: Vec<Result<Option<(bool, bool)>, String>> = (0..300u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + i);
            let n = rng.gen_range(2..=4);
            let protocol = protocols[i as usize % 3];
            let f = if protocol == "abd" { (n - 1) / 2 } else { 1.min(n - 1) };
            let config = SystemConfig::new(n, f, protocol).unwrap();
            let mut adv = common::mixed_adversary(&mut rng, n, f, 40);
            if let InvocationPlan::Random { max_ops, .. } = &mut adv.invocations {
                *max_ops = 6;
            }
            let run = simulate(&config, &by_name(&config).unwrap(), &adv, 40, rng.gen())
                .map_err(|e| e.to_string())?;
            let ops = extract_operations(&run).map_err(|e| e.to_string())?;
            if ops.len() > 6 {
                return Ok(None);
            }
            let lin = linearize(&ops, 12).map_err(|e| e.to_string())?.is_linearizable();
            let oracle = brute_force_linearizable(&ops);
            ensure(lin == oracle, || format!("run {i}: checker {lin}, brute force {oracle}"))?;
            let aba = has_aba(&ops);
            ensure(aba == !aba_violations(&ops).is_empty(), || format!("run {i}: a-b-a detection differs"))?;
            record_aba(aba, lin);
            Ok(Some((lin, aba)))
        })
        .collect();
    let (mut checked, mut lin) = (0, 0);
    for r in results {
        if let Some((l, _)) = r? {
            checked += 1;
            lin += l as usize;
        }
    }
    ensure(checked == 300, || format!("only {checked} histories had at most 6 operations"))?;
    Ok(format!("{checked} histories agree ({lin} linearizable, {} not)", checked - lin))
}

fn abd_adversary(crashes: usize) -> AdversarySpec {
    AdversarySpec {
        schedule: Schedule::Random { move_percent: 50 },
        delivery: Delivery::Random { percent: 50 },
        crashes: if crashes == 0 {
            CrashPlan::None
        } else {
            CrashPlan::Random { count: crashes, latest_round: 80 }
        },
        invocations: InvocationPlan::Random {
            percent: 20,
            until: 60,
            max_ops: 8,
            read_percent: 50,
        },
        quiesce: true,
    }
}

fn abd_positive() -> Outcome {
    let config = SystemConfig::new(5, 2, "abd").unwrap();
    let protocol = by_name(&config).unwrap();
    let results: Vec<Result<(bool, usize), String>> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let adv = abd_adversary(seed as usize % 3);
            let run = simulate(&config, &protocol, &adv, 400, seed).map_err(|e| e.to_string())?;
            ensure(validate_run(&run, &protocol).is_clean(), || format!("seed {seed}: invalid run"))?;
            let ops = extract_operations(&run).map_err(|e| e.to_string())?;
            let lin = find_linearization(&run).map_err(|e| e.to_string())?.is_linearizable();
            if run.quiescent {
                ensure(lin, || format!("seed {seed}: quiescent run not linearizable"))?;
            }
            let g = Graph::of(&run);
            let report = audit(&run, 2).map_err(|e| e.to_string())?;
            ensure(report.chains.is_empty(), || format!("seed {seed}: chain findings {:?}", report.chains))?;
            for (x, a) in ops.iter().zip(&report.operations) {
                let Some(xe) = x.end else { continue };
                let obs = g.observers(x.start, xe.time);
                let wit = g.witnesses(x.start, xe);
                ensure(obs.len() > 2 && wit.len() > 2, || {
                    format!("seed {seed}: {} has observers {obs:?} witnesses {wit:?}", x.id)
                })?;
                ensure(a.observers == obs && a.witnesses == wit, || {
                    format!("seed {seed}: audit sets for {} differ from oracle", x.id)
                })?;
            }
            ensure(report.quorum.is_empty(), || format!("seed {seed}: quorum findings"))?;
            record_aba(has_aba(&ops), lin);
            Ok((run.quiescent, ops.iter().filter(|o| o.end.is_some()).count()))
        })
        .collect();
    let (mut quiescent, mut completed) = (0, 0);
    for r in results {
        let (q, c) = r?;
        quiescent += q as usize;
        completed += c;
    }
    Ok(format!("1000 seeds, {quiescent} quiescent, {completed} completed operations all with >2 observers and witnesses"))
}

fn abd_liveness() -> Outcome {
    let config = SystemConfig::new(5, 0, "abd").unwrap();
    let protocol = by_name(&config).unwrap();
    let results: Vec<Result<usize, String>> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let run = simulate(&config, &protocol, &abd_adversary(0), 400, seed).map_err(|e| e.to_string())?;
            let pending = pending_at_correct(&run);
            ensure(pending == 0, || format!("seed {seed}: {pending} pending (quiescent={})", run.quiescent))?;
            let ops = extract_operations(&run).map_err(|e| e.to_string())?;
            ensure(ops.iter().all(|o| o.end.is_some()), || format!("seed {seed}: extractor reports pending"))?;
            let lin = find_linearization(&run).map_err(|e| e.to_string())?.is_linearizable();
            record_aba(has_aba(&ops), lin);
            Ok(ops.len())
        })
        .collect();
    let mut total = 0;
    for r in results {
        total += r?;
    }
    Ok(format!("200 seeds, {total} operations, none pending"))
}

fn negative_suite() -> Outcome {
    let config = SystemConfig::new(3, 1, "broken").unwrap();
    let protocol = by_name(&config).unwrap();
    let adv = AdversarySpec {
        invocations: InvocationPlan::Random {
            percent: 20,
            until: 60,
            max_ops: 6,
            read_percent: 50,
        },
        ..abd_adversary(0)
    };
    let mut seeds_refuted = Vec::new();
    let mut flagged = 0;
    for seed in 0..50u64 {
        let run = simulate(&config, &protocol, &adv, 200, seed).map_err(|e| e.to_string())?;
        let ops = extract_operations(&run).map_err(|e| e.to_string())?;
        let lin = find_linearization(&run).map_err(|e| e.to_string())?.is_linearizable();
        record_aba(has_aba(&ops), lin);
        let report = audit_chains(&run).map_err(|e| e.to_string())?;
        let mut refuted_here = false;
        for v in report
            .chains
            .iter()
            .filter(|v| matches!(v.rule, ChainRule::WriteToRead | ChainRule::ChainToReadValue))
        {
            flagged += 1;
            let r = refute(&run, &Finding::Chain(v.clone())).map_err(|e| format!("seed {seed}: {e}"))?;
            let Some(r2) = r.run.as_ref() else { continue };
            let ops2 = extract_operations(r2).map_err(|e| e.to_string())?;
            let oracle_lin = brute_force_linearizable(&ops2);
            ensure(oracle_lin == r.verdict.is_linearizable(), || format!("seed {seed}: verdict disagrees with brute force"))?;
            record_aba(has_aba(&ops2), oracle_lin);
            if r.refuted()
                && r.equivalent_to_input
                && same_local_runs(&run, r2)
                && validate_run(r2, &protocol).is_clean()
                && !oracle_lin
            {
                refuted_here = true;
            }
        }
        if refuted_here {
            seeds_refuted.push(seed);
        }
    }
    ensure(!seeds_refuted.is_empty(), || format!("no seed refuted ({flagged} findings)"))?;
    Ok(format!(
        "{} of 50 seeds refuted via a locally equivalent legal run ({flagged} findings), first seed {}",
        seeds_refuted.len(),
        seeds_refuted[0]
    ))
}

fn aba_coupling() -> Outcome {
    let seen = ABA.lock().unwrap();
    ensure(!seen.is_empty(), || "suites 4 to 7 recorded nothing".into())?;
    let bad_aba = seen.iter().filter(|(aba, lin)| *aba && *lin).count();
    let with_aba = seen.iter().filter(|(aba, _)| *aba).count();
    ensure(bad_aba == 0, || format!("{bad_aba} linearizable runs with an a-b-a triple"))?;
    Ok(format!("{} runs, {with_aba} with a-b-a, all not linearizable", seen.len()))
}

fn shift_identities() -> Outcome {
    let mut checks = 0;
    for delta in 1..=10 {
        for t in 0..=50 {
            for m in 0..=50 {
                let expected = if m <= t { m } else { m + delta };
                ensure(shift(m, t, delta) == expected, || format!("shift({m},{t},{delta})"))?;
                if m > 0 && m != t + 1 {
                    ensure(shift(m - 1, t, delta) == shift(m, t, delta) - 1, || {
                        format!("step identity at m={m} t={t} delta={delta}")
                    })?;
                }
                ensure(!(t + 1..=t + delta).contains(&shift(m, t, delta)), || {
                    format!("shift({m},{t},{delta}) lands in the band")
                })?;
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} (m, t_j, delta) triples"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("1 delay-the-future soundness", Duration::from_secs(30), delay_future_soundness),
        ("2 reordering soundness", Duration::from_secs(10), reorder_soundness),
        ("3 causality oracle equivalence", Duration::from_secs(60), causality_oracle),
        ("4 linearization checker completeness", Duration::from_secs(60), checker_completeness),
        ("5 ABD positive suite", Duration::from_secs(300), abd_positive),
        ("6 ABD liveness", Duration::from_secs(60), abd_liveness),
        ("7 negative suite", Duration::from_secs(60), negative_suite),
        ("8 no-a-b-a coupling", Duration::from_secs(1), aba_coupling),
        ("9 shift identities", Duration::from_secs(1), shift_identities),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > budget => Err(format!("{detail}; took {took:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
