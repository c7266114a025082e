//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines always show.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{spawn_server, Client};
use meerkat::hub::{Hub, HubOptions};
use meerkat::server::ServeOptions;
use meerkat::sim::gen::{
    mutual_block_scenarios, observable, random_dag, random_do_pair, random_evolution_pair, random_writes,
    run_pair, structured_scenarios,
};
use meerkat::sim::{check_state, check_waves, explore, Check, Mode, Scenario, Violation};
use meerkat_core::runtime::{FirstEnabled, StepChoice, StepOutcome};
use meerkat_core::syntax::{parse_do, parse_expr, parse_program};
use meerkat_core::typesys::{check_do, compatible, infer_expr, infer_program, well_formed, LocalCtx, Type, TypeEnv};
use meerkat_core::{Config, Value};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

const CHAIN: &str = "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;";

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.1?}, budget {budget:?}"))
}

fn chain_example() -> Outcome {
    let start = Instant::now();
    let mut cfg = Config::new();
    cfg.submit_evolution(parse_program(CHAIN).map_err(|e| e.to_string())?, "p");
    cfg.submit_do(parse_do("do (action { x := 2 })").map_err(|e| e.to_string())?, "u");
    cfg.run_until_quiescent(&mut FirstEnabled);
    let (a, b) = (cfg.read("inc1"), cfg.read("inc2"));
    ensure(a == Some(Value::Int(3)) && b == Some(Value::Int(4)), || format!("inc1 = {a:?}, inc2 = {b:?}"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("inc1 = 3, inc2 = 4 in {:.1?}", start.elapsed()))
}

fn statics_suite() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut case = |name: &str, ok: bool| -> Result<(), String> {
        cases += 1;
        ensure(ok, || format!("case `{name}` failed"))
    };
    let env = infer_program(&TypeEnv::new(), &parse_program(CHAIN).unwrap()).map_err(|e| e.to_string())?;
    let delta = |src: &str| infer_program(&env, &parse_program(src).unwrap());
    let codes = |src: &str| -> Vec<&'static str> {
        compatible(&env, &delta(src).unwrap()).violations.iter().map(|v| v.code()).collect()
    };

    // Action rule: reads and writes land in the action type, not in δ.
    let (t, d) = infer_expr(&env, &LocalCtx::new(), &parse_expr("action { x := inc2 }").unwrap()).unwrap();
    case("action type", matches!(&t, Type::Action { reads, writes } if reads.contains("inc2") && writes.contains("x")))?;
    case("action has empty δ", d.is_empty())?;
    case("write to a definition", infer_expr(&env, &LocalCtx::new(), &parse_expr("action { inc1 := 3 }").unwrap()).is_err())?;
    case("write of the wrong type", infer_expr(&env, &LocalCtx::new(), &parse_expr("action { x := true }").unwrap()).is_err())?;
    // Reads judgment: a do's footprint is the transitive closure.
    let plan = check_do(&env, &parse_do("do (action { x := inc2 })").unwrap()).unwrap();
    case("reads vars", plan.reads.vars == BTreeSet::from(["x".to_string()]))?;
    case("reads defs", plan.reads.defs == BTreeSet::from(["inc1".to_string(), "inc2".to_string()]))?;
    case("do of a non-action", check_do(&env, &parse_do("do 1").unwrap()).map_err(|e| e.code()) == Err("NotAnAction"))?;
    // Well-formedness.
    case("chain is well formed", well_formed(&env).is_ok())?;
    let mut cyclic = env.clone();
    cyclic.bind_def("inc1", [("inc2".to_string(), Type::INT)].into_iter().collect(), Type::INT);
    case("cycle is rejected", well_formed(&cyclic).violations.iter().any(|v| v.code() == "Cycle"))?;
    // Compatibility.
    case("extension", codes("def inc3 = inc2 + 1;").is_empty())?;
    case("cycle through an evolution", codes("def inc1 = inc2 + 1;").contains(&"Cycle"))?;
    case("stale dependent", codes("var x = true;").contains(&"StaleDependent"))?;
    case("retype with dependents", codes("var x = true; def inc1 = if x then 1 else 0;").is_empty())?;
    case("kind flip", codes("def x = 5;").contains(&"KindFlip"))?;
    case("unbound name", delta("def z = nosuch;").map_err(|e| e.code()) == Err("UnboundName"))?;
    within(start, Duration::from_secs(5))?;
    Ok(format!("{cases} statics cases in {:.1?}", start.elapsed()))
}

/// Violations from exploring the structured configurations, by check.
struct Structured {
    configs: usize,
    schedules: u64,
    states: u64,
    truncated: u64,
    by_check: BTreeMap<Check, Vec<Violation>>,
    elapsed: Duration,
}

fn explore_structured() -> Structured {
    let start = Instant::now();
    let all = structured_scenarios();
    let mut s = Structured {
        configs: all.len(),
        schedules: 0,
        states: 0,
        truncated: 0,
        by_check: BTreeMap::new(),
        elapsed: Duration::ZERO,
    };
    for sc in &all {
        let v = explore(sc, Mode::Exhaustive { depth: 8 });
        s.schedules += v.schedules;
        s.states += v.states;
        s.truncated += v.truncated;
        for x in v.violations {
            s.by_check.entry(x.check).or_default().push(x);
        }
    }
    s.elapsed = start.elapsed();
    s
}

fn first_of(s: &Structured, checks: &[Check]) -> Option<String> {
    checks.iter().find_map(|c| s.by_check.get(c).and_then(|v| v.first()).map(|v| v.to_string()))
}

fn progress(s: &Structured) -> Outcome {
    ensure(s.configs >= 10_000, || format!("only {} configurations", s.configs))?;
    ensure(s.truncated == 0, || format!("{} schedules hit the depth cap", s.truncated))?;
    if let Some(v) = first_of(s, &[Check::Setup, Check::Progress, Check::Notification]) {
        return Err(v);
    }
    ensure(s.elapsed < Duration::from_secs(300), || format!("took {:.1?}", s.elapsed))?;
    Ok(format!(
        "{} configs, {} schedules, {} states, no stuck state, in {:.1?}",
        s.configs, s.schedules, s.states, s.elapsed
    ))
}

fn preservation(s: &Structured) -> Outcome {
    if let Some(v) = first_of(s, &[Check::Preservation]) {
        return Err(v);
    }
    Ok(format!("well formed and well typed at all {} states", s.states))
}

struct Glitch {
    programs: usize,
    transactions: usize,
    oracle_checks: usize,
    oracle_mismatches: Vec<String>,
    result: Outcome,
}

fn glitch_freedom() -> Glitch {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut g = Glitch { programs: 0, transactions: 0, oracle_checks: 0, oracle_mismatches: Vec::new(), result: Ok(String::new()) };
    let mut problems = Vec::new();
    for _ in 0..1000 {
        let dag = random_dag(&mut rng, 50, 4);
        let mut cfg = match (Scenario { initial: dag.program.clone(), ..Scenario::default() }).build() {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("setup: {e}"));
                continue;
            }
        };
        g.programs += 1;
        for _ in 0..3 {
            let (src, targets) = random_writes(&mut rng, &dag.vars, &dag.vars);
            let t = cfg.submit_do(parse_do(&src).unwrap(), "u");
            let rec = cfg.step(StepChoice::DoOne(t.id)).unwrap();
            if !matches!(rec.outcomes[..], [StepOutcome::Executed { .. }]) {
                problems.push(format!("`{src}` did not execute: {:?}", rec.outcomes));
                continue;
            }
            g.transactions += 1;
            let want = cfg.store().graph().affected_by(&targets);
            for w in &rec.waves {
                if w.affected != want {
                    problems.push(format!("txn {} affected {:?}, expected {:?}", w.txn.0, w.affected, want));
                }
            }
            problems.extend(check_waves(&rec, cfg.store().graph()).into_iter().map(|(_, m)| m));
            for (c, m) in check_state(&cfg) {
                if c == Check::Oracle {
                    g.oracle_mismatches.push(m);
                } else {
                    problems.push(m);
                }
            }
            g.oracle_checks += 1;
        }
    }
    g.result = match problems.first() {
        Some(p) => Err(format!("{} violations, first: {p}", problems.len())),
        None if start.elapsed() > Duration::from_secs(120) => Err(format!("took {:.1?}", start.elapsed())),
        None => Ok(format!(
            "{} programs, {} transactions, each affected definition recomputed once in order, in {:.1?}",
            g.programs,
            g.transactions,
            start.elapsed()
        )),
    };
    g
}

fn oracle_equivalence(s: &Structured, g: &Glitch, pair_checks: usize, pair_mismatches: &[String]) -> Outcome {
    if let Some(v) = first_of(s, &[Check::Oracle]) {
        return Err(v);
    }
    if let Some(m) = g.oracle_mismatches.first().or(pair_mismatches.first()) {
        return Err(m.clone());
    }
    Ok(format!(
        "store equals the oracle at {} explored states, {} DAG transactions, {} pair results",
        s.states, g.oracle_checks, pair_checks
    ))
}

struct Confluence {
    do_pairs: usize,
    evolution_pairs: usize,
    oracle_checks: usize,
    oracle_mismatches: Vec<String>,
    result: Outcome,
}

fn confluence() -> Confluence {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut c = Confluence { do_pairs: 0, evolution_pairs: 0, oracle_checks: 0, oracle_mismatches: Vec::new(), result: Ok(String::new()) };
    let mut mismatches = Vec::new();
    let mut check = |label: &str, base: &Config, a: u64, b: u64, pair: fn(u64, u64) -> StepChoice, single: fn(u64) -> StepChoice, c: &mut Confluence| -> bool {
        let runs = run_pair(base, a, b, pair, single);
        let Some(conc) = runs.concurrent else { return false };
        let got = observable(&conc);
        for (order, serial) in [("a;b", &runs.first_second), ("b;a", &runs.second_first)] {
            if observable(serial) != got {
                mismatches.push(format!("{label}: concurrent result differs from {order}"));
            }
        }
        for (k, m) in check_state(&conc) {
            if k == Check::Oracle {
                c.oracle_mismatches.push(m);
            } else {
                mismatches.push(format!("{label}: {m}"));
            }
        }
        c.oracle_checks += 1;
        true
    };
    let mut attempts = 0;
    while c.do_pairs < 1000 && attempts < 20_000 {
        attempts += 1;
        let dag = random_dag(&mut rng, 20, 4);
        let Some((a, b)) = random_do_pair(&mut rng, &dag) else { continue };
        let Ok(mut base) = (Scenario { initial: dag.program, ..Scenario::default() }).build() else { continue };
        let ta = base.submit_do(parse_do(&a).unwrap(), "a").id;
        let tb = base.submit_do(parse_do(&b).unwrap(), "b").id;
        if check("do pair", &base, ta, tb, StepChoice::DoTwo, StepChoice::DoOne, &mut c) {
            c.do_pairs += 1;
        }
    }
    attempts = 0;
    while c.evolution_pairs < 1000 && attempts < 50_000 {
        attempts += 1;
        let dag = random_dag(&mut rng, 12, 3);
        let (a, b) = random_evolution_pair(&mut rng, &dag);
        let (Ok(ra), Ok(rb)) = (parse_program(&a), parse_program(&b)) else { continue };
        let Ok(mut base) = (Scenario { initial: dag.program, ..Scenario::default() }).build() else { continue };
        let ta = base.submit_evolution(ra, "a").id;
        let tb = base.submit_evolution(rb, "b").id;
        if check("evolution pair", &base, ta, tb, StepChoice::EvolveTwo, StepChoice::EvolveOne, &mut c) {
            c.evolution_pairs += 1;
        }
    }
    c.result = if let Some(m) = mismatches.first() {
        Err(format!("{} mismatches, first: {m}", mismatches.len()))
    } else if c.do_pairs < 1000 {
        Err(format!("only {} concurrent do pairs generated", c.do_pairs))
    } else if c.evolution_pairs == 0 {
        Err("no concurrently approvable evolution pair generated".into())
    } else if start.elapsed() > Duration::from_secs(120) {
        Err(format!("took {:.1?}", start.elapsed()))
    } else {
        Ok(format!(
            "{} do pairs and {} evolution pairs equal both serial orders, in {:.1?}",
            c.do_pairs,
            c.evolution_pairs,
            start.elapsed()
        ))
    };
    c
}

fn wait_die() -> Outcome {
    let start = Instant::now();
    let all = mutual_block_scenarios();
    ensure(!all.is_empty(), || "no mutually blocked scenario generated".into())?;
    let triples = all.iter().filter(|s| s.evolutions.len() == 3).count();
    let mut schedules = 0;
    for s in &all {
        let v = explore(s, Mode::Exhaustive { depth: 8 });
        if let Some(x) = v.violations.first() {
            return Err(format!("{x}"));
        }
        ensure(v.truncated == 0, || "a schedule hit the depth cap".into())?;
        schedules += v.schedules;
    }
    Ok(format!(
        "{} scenarios ({} with three evolutions), {} schedules, all died with nothing changed, in {:.1?}",
        all.len(),
        triples,
        schedules,
        start.elapsed()
    ))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    const INIT: &str = "var n0 = 0; var n1 = 0; var n2 = 0;";
    let evolution = |p: usize, k: usize| format!("def p{p}_{k} = n{} + {k};", (p + k) % 3);
    let action = |u: usize| format!("do (action {{ n{u} := n{u} + 1 }})");

    let mut hub = Hub::new(HubOptions::default());
    hub.boot(parse_program(INIT).unwrap())?;
    let srv = spawn_server(hub, ServeOptions::default());

    let mut obs = Client::connect(srv.addr, "user");
    let ack = obs.call(json!({"type":"subscribe","name":"n0","req":"s"}));
    ensure(ack["value"] == 0, || format!("subscribe ack {ack}"))?;

    let mut threads = Vec::new();
    for p in 0..3 {
        let addr = srv.addr;
        threads.push(std::thread::spawn(move || -> Result<(), String> {
            let mut c = Client::connect(addr, "programmer");
            for k in 0..20 {
                c.send(json!({"type":"evolve","req":k,"code":evolution(p, k)}));
            }
            for _ in 0..20 {
                let m = c.recv();
                ensure(m["type"] == "accepted", || format!("programmer {p}: {m}"))?;
            }
            Ok(())
        }));
    }
    for u in 0..3 {
        let addr = srv.addr;
        threads.push(std::thread::spawn(move || -> Result<(), String> {
            let mut c = Client::connect(addr, "user");
            for k in 0..50 {
                c.send(json!({"type":"do","req":k,"expr":action(u)}));
            }
            let mut seen = BTreeSet::new();
            while seen.len() < 50 {
                let m = c.recv();
                ensure(m["type"] == "executed", || format!("user {u}: {m}"))?;
                ensure(seen.insert(m["req"].as_u64().unwrap()), || format!("user {u}: duplicate {m}"))?;
            }
            Ok(())
        }));
    }
    for t in threads {
        t.join().map_err(|_| "client thread panicked".to_string())??;
    }

    // The observer saw n0 go 0 -> 50 one step at a time, in txn order.
    let mut last_txn = 0;
    for i in 0..50 {
        let m = obs.recv();
        ensure(m["type"] == "changed" && m["name"] == "n0", || format!("observer: {m}"))?;
        ensure(m["old"] == i && m["new"] == i + 1, || format!("observer out of order: {m}"))?;
        let t = m["txn"].as_u64().unwrap();
        ensure(t > last_txn, || format!("txn went backwards: {m}"))?;
        last_txn = t;
    }

    let mut c = Client::connect(srv.addr, "programmer");
    let dump = c.call(json!({"type":"dump","req":"d"}))["value"].clone();
    let env = c.call(json!({"type":"env","req":"e"}))["value"].clone();

    let mut serial = Config::new();
    let run = |cfg: &mut Config| {
        cfg.run_until_quiescent(&mut FirstEnabled);
    };
    serial.submit_evolution(parse_program(INIT).unwrap(), "init");
    run(&mut serial);
    for p in 0..3 {
        for k in 0..20 {
            serial.submit_evolution(parse_program(&evolution(p, k)).unwrap(), "p");
            run(&mut serial);
        }
    }
    for u in 0..3 {
        for _ in 0..50 {
            serial.submit_do(parse_do(&action(u)).unwrap(), "u");
            run(&mut serial);
        }
    }
    let strip = |d: &Json| json!({ "vars": d["vars"], "defs": d["defs"] });
    let want = meerkat::json::dump(serial.store());
    ensure(strip(&dump) == strip(&want), || "served store differs from the serial replay".into())?;
    ensure(env == meerkat::json::env(serial.env()), || "served environment differs from the serial replay".into())?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "60 evolutions and 150 actions over loopback equal the serial replay, in {:.1?}",
        start.elapsed()
    ))
}

fn report(n: usize, title: &str, o: &Outcome, failed: &mut usize) {
    match o {
        Ok(d) => println!("criterion {n} ({title}): PASS - {d}"),
        Err(e) => {
            *failed += 1;
            println!("criterion {n} ({title}): FAIL - {e}");
        }
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the libtest protocol.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }

    let mut failed = 0;
    report(1, "chain example", &chain_example(), &mut failed);
    report(2, "statics suite", &statics_suite(), &mut failed);
    let s = explore_structured();
    report(3, "progress", &progress(&s), &mut failed);
    report(4, "preservation", &preservation(&s), &mut failed);
    let g = glitch_freedom();
    report(5, "glitch freedom", &g.result, &mut failed);
    let c = confluence();
    report(6, "oracle equivalence", &oracle_equivalence(&s, &g, c.oracle_checks, &c.oracle_mismatches), &mut failed);
    report(7, "confluence", &c.result, &mut failed);
    report(8, "wait-die", &wait_die(), &mut failed);
    report(9, "end-to-end protocol", &end_to_end(), &mut failed);
    if failed == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 9 criteria fail");
        ExitCode::FAILURE
    }
}
