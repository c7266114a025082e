//! Scenario and program generators for the property suites.

use std::collections::BTreeMap;

use meerkat_core::runtime::StepChoice;
use meerkat_core::Config;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Action, Evolution, Expect, Scenario};

/// Initial programs for the structured generator.
pub const BASES: &[&str] = &[
    "",
    "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;",
    "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;\ndef setx2 = action { x := 2 };",
    "var x = 1; var y = 10; def s = x + y; def d = s * 2;",
    "var x = 1; var b = true; def inc1 = x + 1; def f = fn n => n + inc1; def g = if b then f 1 else 0;",
    "var x = 0; var y = 0; def inc1 = x + y; def inc2 = inc1 + 1; def setx = action { x := inc2 };",
];

/// Queueable items; a leading `do` marks an action, anything else is an
/// evolution. Several only make sense against some bases, on purpose.
pub const ITEMS: &[&str] = &[
    "var x = 1;",
    "def inc1 = x + 5;",
    "def inc1 = x + 6;",
    "var y = 3; def s = x + y;",
    "def inc2 = inc1 * 2;",
    "def setx = action { x := inc2 };",
    "def z = nosuch + 1;",
    "def inc1 = true;",
    "def c1 = c2 + 1; def c2 = c1 + 1;",
    "def q = 1 / 0;",
    "var x = true;",
    "",
    "do (action { x := 2 })",
    "do (action { x := x + 1 })",
    "do (action { y := 5 })",
    "do (action { x := 1 / 0 })",
    "do 1",
    "do setx2",
    "do (action { x := inc2 })",
    "do (if x < 2 then action { x := 7 } else action { x := 8 })",
    "do (action { x := 3; y := x })",
];

fn scenario_of(base: &str, items: &[&str]) -> Scenario {
    let mut s = Scenario { initial: base.into(), ..Scenario::default() };
    for (i, it) in items.iter().enumerate() {
        let who = format!("s{i}");
        if it.starts_with("do ") {
            s.actions.push(Action { who, expr: (*it).into() });
        } else {
            s.evolutions.push(Evolution { who, code: (*it).into() });
        }
    }
    s
}

/// Every base with every multiset of at most three items.
pub fn structured_scenarios() -> Vec<Scenario> {
    let n = ITEMS.len();
    let mut picks: Vec<Vec<usize>> = vec![vec![]];
    for a in 0..n {
        picks.push(vec![a]);
        for b in a..n {
            picks.push(vec![a, b]);
            for c in b..n {
                picks.push(vec![a, b, c]);
            }
        }
    }
    let mut out = Vec::with_capacity(BASES.len() * picks.len());
    for base in BASES {
        for p in &picks {
            let items: Vec<&str> = p.iter().map(|&i| ITEMS[i]).collect();
            out.push(scenario_of(base, &items));
        }
    }
    out
}

/// A random acyclic program: `vars` state variables, then definitions that
/// each read one to `max_deps` earlier names. Values stay small.
#[derive(Clone, Debug)]
pub struct Dag {
    pub program: String,
    pub vars: Vec<String>,
    pub defs: Vec<String>,
}

pub fn random_dag<R: Rng>(rng: &mut R, max_names: usize, max_deps: usize) -> Dag {
    let total = rng.gen_range(2..=max_names.max(2));
    let nvars = rng.gen_range(1..=(total / 3).max(1));
    let mut names = Vec::new();
    let mut src = String::new();
    let mut vars = Vec::new();
    let mut defs = Vec::new();
    for i in 0..nvars {
        let n = format!("v{i}");
        src.push_str(&format!("var {n} = {};\n", rng.gen_range(0..10)));
        names.push(n.clone());
        vars.push(n);
    }
    for i in 0..total - nvars {
        let n = format!("d{i}");
        let k = rng.gen_range(1..=max_deps.min(names.len()));
        let deps: Vec<&String> = names.choose_multiple(rng, k).collect();
        let body = match (rng.gen_range(0..3), &deps[..]) {
            (0, [a, b, ..]) => format!("if {a} < {b} then {a} else {b} + 1"),
            (1, _) => format!("{} + {}", deps[0], rng.gen_range(0..5)),
            _ => {
                let sum: Vec<&str> = deps.iter().map(|s| s.as_str()).collect();
                format!("({}) / {} + 1", sum.join(" + "), deps.len())
            }
        };
        src.push_str(&format!("def {n} = {body};\n"));
        names.push(n.clone());
        defs.push(n);
    }
    Dag { program: src, vars, defs }
}

/// An action assigning random constants, or other listed variables, to a
/// random non-empty subset of `vars`. Returns the source and the targets.
pub fn random_writes<R: Rng>(rng: &mut R, vars: &[String], readable: &[String]) -> (String, Vec<String>) {
    let k = rng.gen_range(1..=vars.len().min(4));
    let mut body = Vec::new();
    let targets: Vec<String> = vars.choose_multiple(rng, k).cloned().collect();
    for v in &targets {
        let rhs = match readable.choose(rng) {
            Some(r) if rng.gen_bool(0.3) => format!("{r} + {}", rng.gen_range(0..3)),
            _ => rng.gen_range(-5..50).to_string(),
        };
        body.push(format!("{v} := {rhs}"));
    }
    (format!("do (action {{ {} }})", body.join("; ")), targets)
}

/// Two actions over the DAG's variables with disjoint write sets, each
/// reading only variables on its own side. Needs two variables.
pub fn random_do_pair<R: Rng>(rng: &mut R, dag: &Dag) -> Option<(String, String)> {
    if dag.vars.len() < 2 {
        return None;
    }
    let mut vars = dag.vars.clone();
    vars.shuffle(rng);
    let cut = vars.len() / 2;
    let (l, r) = vars.split_at(cut);
    Some((random_writes(rng, l, l).0, random_writes(rng, r, r).0))
}

/// Two evolutions over the DAG: fresh names, or a rebinding of one existing
/// definition, each reading random existing names.
pub fn random_evolution_pair<R: Rng>(rng: &mut R, dag: &Dag) -> (String, String) {
    let mut all: Vec<&String> = dag.vars.iter().chain(&dag.defs).collect();
    all.shuffle(rng);
    let one = |rng: &mut R, tag: &str| {
        let mut src = String::new();
        for i in 0..rng.gen_range(1..=3) {
            let a = all.choose(rng).unwrap();
            match rng.gen_range(0..4) {
                0 => src.push_str(&format!("var {tag}{i} = {};\n", rng.gen_range(0..9))),
                1 if !dag.defs.is_empty() => {
                    let d = dag.defs.choose(rng).unwrap();
                    src.push_str(&format!("def {d} = {a} + {};\n", rng.gen_range(0..9)));
                }
                _ => src.push_str(&format!("def {tag}{i} = {a} * 2;\n")),
            }
        }
        src
    };
    (one(rng, "na"), one(rng, "nb"))
}

/// Outcome of running the same pair concurrently and in both serial orders.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub concurrent: Option<Config>,
    pub first_second: Config,
    pub second_first: Config,
}

/// Runs the two tickets queued in `cfg` as a pair step (if enabled) and
/// serially in both orders. `pair` builds the pair choice from the ids.
pub fn run_pair(cfg: &Config, a: u64, b: u64, pair: fn(u64, u64) -> StepChoice, single: fn(u64) -> StepChoice) -> PairRun {
    let mut conc = cfg.clone();
    let concurrent = conc.step(pair(a, b)).ok().map(|_| conc);
    let serial = |x: u64, y: u64| {
        let mut c = cfg.clone();
        for s in [single(x), single(y)] {
            if c.step(s).is_err() {
                break;
            }
        }
        c.run_until_quiescent(&mut meerkat_core::runtime::FirstEnabled);
        c
    };
    PairRun { concurrent, first_second: serial(a, b), second_first: serial(b, a) }
}

/// The observable state compared across serializations.
pub fn observable(cfg: &Config) -> (meerkat_core::TypeEnv, BTreeMap<String, meerkat_core::Value>) {
    (cfg.env().clone(), cfg.store().values())
}

/// Small evolutions over the bases, used to assemble blocked sets.
pub const BLOCKING_ITEMS: &[&str] = &[
    "def inc1 = x + 5;",
    "def inc1 = x + 6;",
    "def inc1 = inc2 - 1;",
    "def inc2 = inc1 + 7;",
    "def inc2 = x;",
    "var x = 4;",
    "var x = 9;",
    "def inc1 = 10; def inc2 = 20;",
    "def s = x; def d = y;",
    "def d = s + 1;",
    "def s = d - 1;",
    "var y = 2;",
    "def setx2 = action { x := inc1 };",
    "def extra = inc2 + 1; def inc1 = 0;",
];

/// Every set of two or three blocking items, on every base, in which each
/// evolution is blocked by another so that dying is the only evolution step.
pub fn mutual_block_scenarios() -> Vec<Scenario> {
    let n = BLOCKING_ITEMS.len();
    let mut out = Vec::new();
    for base in BASES {
        let mut sets: Vec<Vec<usize>> = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                sets.push(vec![a, b]);
                for c in b + 1..n {
                    sets.push(vec![a, b, c]);
                }
            }
        }
        for set in sets {
            let items: Vec<&str> = set.iter().map(|&i| BLOCKING_ITEMS[i]).collect();
            let mut s = scenario_of(base, &items);
            s.expect = Expect { confluent: true, die: true };
            let Ok(cfg) = s.build() else { continue };
            if cfg.enabled_steps() == [StepChoice::QueueDie] {
                out.push(s);
            }
        }
    }
    out
}
