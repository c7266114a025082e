//! Schedule exploration over the runtime stepper.
//!
//! A [`Scenario`] is an initial program plus queued evolutions and actions.
//! [`explore`] runs it under every schedule up to a depth cap, or under a
//! number of seeded random schedules, and checks after every step:
//!
//! * preservation: [`Config::check_invariants`] is empty;
//! * progress: a non-quiescent configuration has an enabled step;
//! * oracle: every definition equals a from-scratch recomputation;
//! * glitch freedom: each wave recomputes every affected definition once,
//!   after its affected dependencies, and never reads a pending one.
//!
//! At quiescence it checks that every submission got exactly one outcome and,
//! if the scenario asks for it, that all schedules agree on the final state
//! or that the evolution queue died with nothing changed.

pub mod gen;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use meerkat_core::runtime::{FirstEnabled, ScheduleSource, StepChoice, StepOutcome, StepRecord};
use meerkat_core::store::{eval, Cells, DepGraph, LocalEnv, RuntimeError, Store, Value};
use meerkat_core::syntax::{parse_program, Name};
use meerkat_core::typesys::{Kind, TypeEnv};
use meerkat_core::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hub::parse_do_text;

/// Exhaustive exploration refuses deeper caps than this.
pub const MAX_DEPTH: usize = 8;

/// Uniform choice among enabled steps from a seeded ChaCha8 stream.
#[derive(Clone, Debug)]
pub struct SeededSchedule {
    rng: ChaCha8Rng,
}

impl SeededSchedule {
    pub fn new(seed: u64) -> SeededSchedule {
        SeededSchedule { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl ScheduleSource for SeededSchedule {
    fn pick(&mut self, enabled: &[StepChoice]) -> Option<usize> {
        Some(self.rng.gen_range(0..enabled.len()))
    }
}

/// Values of all definitions, recomputed from scratch.
///
/// `env` supplies the definitions and their dependency sets; `store`
/// supplies state-variable values and definition bodies. The order is an
/// independent depth-first topological sort, not the store's own.
pub fn oracle_recompute(env: &TypeEnv, store: &Store) -> Result<BTreeMap<Name, Value>, RuntimeError> {
    struct Scratch<'a> {
        vars: &'a Store,
        defs: BTreeMap<Name, Value>,
    }
    impl Cells for Scratch<'_> {
        fn read(&self, name: &str) -> Option<Value> {
            match self.vars.vars().get(name) {
                Some(v) => Some(v.c.clone()),
                None => self.defs.get(name).cloned(),
            }
        }
    }

    fn visit<'a>(env: &'a TypeEnv, n: &'a Name, seen: &mut BTreeSet<&'a Name>, order: &mut Vec<&'a Name>) {
        if !seen.insert(n) {
            return;
        }
        if let Some(Kind::Def(deps)) = env.get(n).map(|b| &b.kind) {
            for d in deps.names() {
                visit(env, d, seen, order);
            }
            order.push(n);
        }
    }

    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    for n in env.names() {
        visit(env, n, &mut seen, &mut order);
    }
    let mut s = Scratch { vars: store, defs: BTreeMap::new() };
    for n in order {
        let cell = store.defs().get(n).ok_or_else(|| RuntimeError::Unbound(n.clone()))?;
        let v = eval(&s, &LocalEnv::new(), &cell.e)?;
        s.defs.insert(n.clone(), v);
    }
    Ok(s.defs)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    pub who: String,
    pub code: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub who: String,
    /// `do e` or just `e`.
    pub expr: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// All schedules reach the same environment and values.
    #[serde(default)]
    pub confluent: bool,
    /// Every schedule ends with the evolution queue dying and nothing
    /// changed.
    #[serde(default)]
    pub die: bool,
}

/// The file format read by `meerkat-sim`; see `docs/scenario.md`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Program installed before anything is queued.
    #[serde(default)]
    pub initial: String,
    #[serde(default)]
    pub evolutions: Vec<Evolution>,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub expect: Expect,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, String> {
        serde_json::from_str(text).map_err(|e| format!("bad scenario: {e}"))
    }

    pub fn len(&self) -> usize {
        self.evolutions.len() + self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The configuration with the initial program installed and every
    /// submission queued, evolutions first.
    pub fn build(&self) -> Result<Config, String> {
        let mut cfg = Config::new();
        if !self.initial.trim().is_empty() {
            let r = parse_program(&self.initial).map_err(|e| format!("initial program: {e}"))?;
            cfg.submit_evolution(r, "init");
            for rec in cfg.run_until_quiescent(&mut FirstEnabled) {
                for o in rec.outcomes {
                    if let StepOutcome::Rejected { reason, .. } = o {
                        return Err(format!("initial program rejected: {reason}"));
                    }
                }
            }
        }
        for e in &self.evolutions {
            let r = parse_program(&e.code).map_err(|err| format!("evolution from {}: {err}", e.who))?;
            cfg.submit_evolution(r, &e.who);
        }
        for a in &self.actions {
            let d = parse_do_text(&a.expr).map_err(|err| format!("action from {}: {err}", a.who))?;
            cfg.submit_do(d, &a.who);
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Every schedule, each cut off after `depth` steps.
    Exhaustive { depth: usize },
    Seeded { runs: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Setup,
    Preservation,
    Progress,
    Oracle,
    Glitch,
    Notification,
    Confluence,
    Die,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

/// One failed check and the schedule that led to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub check: Check,
    pub message: String,
    pub trace: Vec<StepChoice>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} after [", self.check, self.message)?;
        for (i, c) in self.trace.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Verdict {
    /// Complete or cut-off schedules run.
    pub schedules: u64,
    /// Configurations visited, the start included.
    pub states: u64,
    /// Schedules cut off by the depth cap before quiescence.
    pub truncated: u64,
    pub violations: Vec<Violation>,
    /// Different quiescent (environment, values) outcomes seen.
    pub distinct_finals: usize,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Keep at most this many violations per exploration.
const MAX_VIOLATIONS: usize = 16;

type Final = (TypeEnv, BTreeMap<Name, Value>);

struct Explorer<'s> {
    scenario: &'s Scenario,
    start: Final,
    submitters: BTreeMap<u64, String>,
    evolution_tickets: BTreeSet<u64>,
    verdict: Verdict,
    finals: Vec<(Final, Vec<StepChoice>)>,
}

impl Explorer<'_> {
    fn flag(&mut self, check: Check, message: String, trace: &[StepChoice]) {
        if self.verdict.violations.len() < MAX_VIOLATIONS {
            self.verdict.violations.push(Violation { check, message, trace: trace.to_vec() });
        }
    }

    fn finish(&mut self, cfg: &Config, outcomes: &BTreeMap<u64, Vec<String>>, trace: &[StepChoice]) {
        self.verdict.schedules += 1;
        let mut problems = Vec::new();
        for (id, who) in &self.submitters {
            let n = outcomes.get(id).map_or(0, Vec::len);
            if n != 1 {
                problems.push((Check::Notification, format!("ticket {id} from {who} got {n} outcomes")));
            }
        }
        let fin: Final = (cfg.env().clone(), cfg.store().values());
        if self.scenario.expect.die {
            if fin != self.start {
                problems.push((Check::Die, "queue died but the environment or store changed".into()));
            }
            for id in &self.evolution_tickets {
                let got = outcomes.get(id).map(Vec::as_slice).unwrap_or_default();
                if got != ["queue_died"] {
                    problems.push((Check::Die, format!("evolution {id} ended with {got:?}")));
                }
            }
        }
        for (k, m) in problems {
            self.flag(k, m, trace);
        }
        if !self.finals.iter().any(|(f, _)| *f == fin) {
            if self.scenario.expect.confluent {
                if let Some((_, first)) = self.finals.first() {
                    let msg = format!("final state differs from the one reached by {first:?}");
                    self.flag(Check::Confluence, msg, trace);
                }
            }
            self.finals.push((fin, trace.to_vec()));
        }
    }
}

fn outcome_name(o: &StepOutcome) -> &'static str {
    match o {
        StepOutcome::Accepted { .. } => "accepted",
        StepOutcome::Rejected { .. } => "rejected",
        StepOutcome::Executed { .. } => "executed",
        StepOutcome::ActionFailed { .. } => "failed",
        StepOutcome::QueueDied { .. } => "queue_died",
    }
}

/// Checks that do not depend on other schedules.
pub fn check_state(cfg: &Config) -> Vec<(Check, String)> {
    let mut out: Vec<(Check, String)> =
        cfg.check_invariants().into_iter().map(|m| (Check::Preservation, m)).collect();
    if !cfg.is_quiescent() && cfg.enabled_steps().is_empty() {
        out.push((Check::Progress, "non-quiescent configuration with no enabled step".into()));
    }
    match oracle_recompute(cfg.env(), cfg.store()) {
        Err(e) => out.push((Check::Oracle, format!("oracle faulted: {e}"))),
        Ok(want) => {
            for (n, v) in &want {
                let got = cfg.store().defs().get(n).map(|d| &d.c);
                if got != Some(v) {
                    out.push((Check::Oracle, format!("{n}: store has {got:?}, oracle {v}")));
                }
            }
        }
    }
    out
}

/// Glitch-freedom checks on the waves of one step, against the graph in
/// force after it.
pub fn check_waves(rec: &StepRecord, graph: &DepGraph) -> Vec<(Check, String)> {
    let mut out = Vec::new();
    for w in &rec.waves {
        let t = w.txn.0;
        if !w.stale_reads.is_empty() {
            out.push((Check::Glitch, format!("txn {t} read pending {:?}", w.stale_reads)));
        }
        let mut pos = BTreeMap::new();
        for (i, n) in w.recomputed.iter().enumerate() {
            if pos.insert(n, i).is_some() {
                out.push((Check::Glitch, format!("txn {t} recomputed {n} twice")));
            }
        }
        for n in &w.affected {
            if !pos.contains_key(n) {
                out.push((Check::Glitch, format!("txn {t} never recomputed {n}")));
            }
        }
        for (n, &i) in &pos {
            if !w.affected.contains(*n) {
                out.push((Check::Glitch, format!("txn {t} recomputed unaffected {n}")));
            }
            for d in graph.deps(n) {
                if pos.get(d).is_some_and(|&j| j > i) {
                    out.push((Check::Glitch, format!("txn {t} recomputed {n} before its dependency {d}")));
                }
            }
        }
    }
    out
}

/// Runs one step and every per-step check.
fn step_checked(cfg: &mut Config, choice: StepChoice) -> (StepRecord, Vec<(Check, String)>) {
    let rec = cfg.step(choice).expect("explorer only picks enabled steps");
    let mut problems = check_waves(&rec, cfg.store().graph());
    problems.extend(check_state(cfg));
    (rec, problems)
}

fn record_outcomes(rec: &StepRecord, outcomes: &mut BTreeMap<u64, Vec<String>>) {
    for o in &rec.outcomes {
        for t in o.tickets() {
            outcomes.entry(t.id).or_default().push(outcome_name(o).into());
        }
    }
}

pub fn explore(scenario: &Scenario, mode: Mode) -> Verdict {
    let cfg = match scenario.build() {
        Ok(c) => c,
        Err(e) => {
            let mut v = Verdict::default();
            v.violations.push(Violation { check: Check::Setup, message: e, trace: Vec::new() });
            return v;
        }
    };
    let mut ex = Explorer {
        scenario,
        start: (cfg.env().clone(), cfg.store().values()),
        submitters: cfg
            .queued_evolutions()
            .iter()
            .map(|q| &q.ticket)
            .chain(cfg.queued_dos().iter().map(|q| &q.ticket))
            .map(|t| (t.id, t.who.clone()))
            .collect(),
        evolution_tickets: cfg.queued_evolutions().iter().map(|q| q.ticket.id).collect(),
        verdict: Verdict::default(),
        finals: Vec::new(),
    };
    ex.verdict.states = 1;
    for (c, m) in check_state(&cfg) {
        ex.flag(c, m, &[]);
    }
    match mode {
        Mode::Exhaustive { depth } => {
            let mut trace = Vec::new();
            dfs(&mut ex, cfg, depth.min(MAX_DEPTH), &mut trace, &BTreeMap::new());
        }
        Mode::Seeded { runs, seed } => {
            let mut sched = SeededSchedule::new(seed);
            for _ in 0..runs {
                let mut c = cfg.clone();
                let mut trace = Vec::new();
                let mut outcomes = BTreeMap::new();
                loop {
                    let enabled = c.enabled_steps();
                    if enabled.is_empty() {
                        break;
                    }
                    let choice = enabled[sched.pick(&enabled).unwrap()];
                    trace.push(choice);
                    let (rec, problems) = step_checked(&mut c, choice);
                    ex.verdict.states += 1;
                    record_outcomes(&rec, &mut outcomes);
                    for (k, m) in problems {
                        ex.flag(k, m, &trace);
                    }
                }
                ex.finish(&c, &outcomes, &trace);
            }
        }
    }
    ex.verdict.distinct_finals = ex.finals.len();
    ex.verdict
}

fn dfs(
    ex: &mut Explorer<'_>,
    cfg: Config,
    depth: usize,
    trace: &mut Vec<StepChoice>,
    outcomes: &BTreeMap<u64, Vec<String>>,
) {
    let enabled = cfg.enabled_steps();
    if enabled.is_empty() {
        // A stuck state was already flagged by check_state; a quiescent one
        // is a complete schedule.
        if cfg.is_quiescent() {
            ex.finish(&cfg, outcomes, trace);
        } else {
            ex.verdict.schedules += 1;
        }
        return;
    }
    if depth == 0 {
        ex.verdict.schedules += 1;
        ex.verdict.truncated += 1;
        return;
    }
    for choice in enabled {
        let mut next = cfg.clone();
        trace.push(choice);
        let (rec, problems) = step_checked(&mut next, choice);
        ex.verdict.states += 1;
        for (k, m) in problems {
            ex.flag(k, m, trace);
        }
        let mut out = outcomes.clone();
        record_outcomes(&rec, &mut out);
        dfs(ex, next, depth - 1, trace, &out);
        trace.pop();
    }
}

/// What replaying a trace produced.
#[derive(Clone, Debug)]
pub struct Replayed {
    pub config: Config,
    pub records: Vec<StepRecord>,
    /// Per-step check failures, with the prefix of the trace that led there.
    pub violations: Vec<Violation>,
}

/// Re-runs `trace` on the scenario with the same per-step checks.
pub fn replay(scenario: &Scenario, trace: &[StepChoice]) -> Result<Replayed, String> {
    let mut cfg = scenario.build()?;
    let mut violations = Vec::new();
    for (c, m) in check_state(&cfg) {
        violations.push(Violation { check: c, message: m, trace: Vec::new() });
    }
    let mut records = Vec::new();
    for (i, &choice) in trace.iter().enumerate() {
        if !cfg.is_enabled(&choice) {
            return Err(format!("step {i} ({choice}) is not enabled"));
        }
        let (rec, problems) = step_checked(&mut cfg, choice);
        for (c, m) in problems {
            violations.push(Violation { check: c, message: m, trace: trace[..=i].to_vec() });
        }
        records.push(rec);
    }
    Ok(Replayed { config: cfg, records, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use meerkat_core::store::DEFAULT_HIST_CAP;

    const CHAIN: &str = "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;";

    #[test]
    fn oracle_on_chain() {
        let s = Scenario { initial: CHAIN.into(), ..Scenario::default() };
        let mut cfg = s.build().unwrap();
        let mut writes = BTreeMap::new();
        writes.insert("x".to_string(), Value::Int(2));
        let mut store = cfg.store().clone();
        store.propagate(writes, TxnId(5)).unwrap();
        let got = oracle_recompute(cfg.env(), &store).unwrap();
        assert_eq!(got["inc1"], Value::Int(3));
        assert_eq!(got["inc2"], Value::Int(4));
        assert_eq!(got.len(), 2);
        cfg = Config::with_hist_cap(DEFAULT_HIST_CAP);
        assert!(oracle_recompute(cfg.env(), cfg.store()).unwrap().is_empty());
    }

    use meerkat_core::store::TxnId;

    #[test]
    fn empty_scenario_is_ok() {
        let v = explore(&Scenario::default(), Mode::Exhaustive { depth: 8 });
        assert!(v.is_ok(), "{:?}", v.violations);
        assert_eq!((v.schedules, v.states, v.distinct_finals), (1, 1, 1));
    }

    #[test]
    fn disjoint_actions_are_confluent() {
        let s = Scenario {
            initial: "var x = 1; var y = 1; def inc1 = x + 1; def inc2 = inc1 + y;".into(),
            actions: vec![
                Action { who: "u1".into(), expr: "do (action { x := 2 })".into() },
                Action { who: "u2".into(), expr: "do (action { y := 7 })".into() },
            ],
            expect: Expect { confluent: true, die: false },
            ..Scenario::default()
        };
        let v = explore(&s, Mode::Exhaustive { depth: 6 });
        assert!(v.is_ok(), "{:?}", v.violations);
        assert_eq!(v.truncated, 0);
        assert_eq!(v.distinct_finals, 1);
        // do_one, do_one in both orders, plus do_two.
        assert_eq!(v.schedules, 3);
    }

    #[test]
    fn mutually_blocked_evolutions_die() {
        let s = Scenario {
            initial: CHAIN.into(),
            evolutions: vec![
                Evolution { who: "p1".into(), code: "def inc1 = x + 5;".into() },
                Evolution { who: "p2".into(), code: "def inc1 = x + 6;".into() },
            ],
            expect: Expect { confluent: true, die: true },
            ..Scenario::default()
        };
        let v = explore(&s, Mode::Exhaustive { depth: 8 });
        assert!(v.is_ok(), "{:?}", v.violations);
        assert_eq!(v.schedules, 1);
    }

    #[test]
    fn die_expectation_catches_success() {
        let s = Scenario {
            initial: CHAIN.into(),
            evolutions: vec![Evolution { who: "p1".into(), code: "def inc1 = x + 5;".into() }],
            expect: Expect { confluent: false, die: true },
            ..Scenario::default()
        };
        let v = explore(&s, Mode::Exhaustive { depth: 8 });
        assert!(v.violations.iter().any(|x| x.check == Check::Die));
        let bad = &v.violations[0];
        assert_eq!(bad.trace, [StepChoice::EvolveOne(2)]);
    }

    #[test]
    fn racing_writes_are_not_confluent() {
        let s = Scenario {
            initial: "var x = 0;".into(),
            actions: vec![
                Action { who: "a".into(), expr: "action { x := 1 }".into() },
                Action { who: "b".into(), expr: "action { x := 2 }".into() },
            ],
            expect: Expect { confluent: true, die: false },
            ..Scenario::default()
        };
        let v = explore(&s, Mode::Exhaustive { depth: 4 });
        assert_eq!(v.distinct_finals, 2);
        let bad = v.violations.iter().find(|x| x.check == Check::Confluence).unwrap();
        let r = replay(&s, &bad.trace).unwrap();
        assert!(r.config.is_quiescent());
        assert_ne!(r.config.read("x"), explore_first_final(&s));
    }

    fn explore_first_final(s: &Scenario) -> Option<Value> {
        let mut cfg = s.build().unwrap();
        cfg.run_until_quiescent(&mut FirstEnabled);
        cfg.read("x")
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let s = Scenario {
            initial: CHAIN.into(),
            evolutions: vec![Evolution { who: "p".into(), code: "def setx = action { x := inc2 };".into() }],
            actions: vec![Action { who: "u".into(), expr: "do (action { x := 4 })".into() }],
            ..Scenario::default()
        };
        let a = explore(&s, Mode::Seeded { runs: 20, seed: 3 });
        let b = explore(&s, Mode::Seeded { runs: 20, seed: 3 });
        assert!(a.is_ok(), "{:?}", a.violations);
        assert_eq!(a, b);
        assert_eq!(a.schedules, 20);
    }

    #[test]
    fn truncation_is_counted() {
        let s = Scenario {
            initial: "var x = 0;".into(),
            actions: (0..3).map(|i| Action { who: "u".into(), expr: format!("action {{ x := {i} }}") }).collect(),
            ..Scenario::default()
        };
        let v = explore(&s, Mode::Exhaustive { depth: 1 });
        assert_eq!(v.truncated, v.schedules);
        assert!(v.schedules >= 3);
    }

    #[test]
    fn scenario_json() {
        let s = Scenario::from_json(
            r#"{"initial":"var x = 1;","actions":[{"who":"u","expr":"do (action { x := 2 })"}],"expect":{"confluent":true}}"#,
        )
        .unwrap();
        assert_eq!(s.actions.len(), 1);
        assert!(s.expect.confluent && !s.expect.die);
        assert!(Scenario::from_json(r#"{"bogus":1}"#).is_err());
    }
}
