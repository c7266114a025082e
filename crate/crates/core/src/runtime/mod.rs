//! The configuration stepper.
//!
//! A [`Config`] is the typing environment, the store and two unordered
//! queues: pending evolutions and pending `do`s. [`Config::enabled_steps`]
//! lists every step the dynamics allow from the current configuration and
//! [`Config::step`] performs one. Which step fires is left to a
//! [`ScheduleSource`], so tests and the exploration harness can drive every
//! interleaving deterministically.
//!
//! Locking: a queued evolution holds write locks on the existing names it
//! rebinds. An evolution cannot be approved while another queued evolution
//! write-locks a name it reads or rebinds. When no evolution can be approved,
//! alone or paired, the evolution queue dies and every submitter is
//! notified. `do`s are never blocked by evolutions and always execute alone;
//! two `do`s run concurrently only when their lock requests are compatible.

mod locks;
mod schedule;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::store::{
    eval, run_action, Change, DepGraph, LocalEnv, RuntimeError, Staged, Store, TxnId, Value,
    WaveReport,
};
use crate::syntax::{DoStmt, Name, Program};
use crate::typesys::{
    check_do, compatible, infer_program, well_formed, CompatReport, DoPlan, Kind, TypeEnv,
    TypeError,
};

pub use locks::{Lock, LockConflict, LockRequest, LockTable};
pub use schedule::{FirstEnabled, PickWith, Replay, ScheduleSource};

/// A submission's receipt. `who` identifies the submitter to notify.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticket {
    pub id: u64,
    pub who: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Queued<T> {
    pub ticket: Ticket,
    pub item: T,
}

/// One step of the dynamics, naming queued items by ticket id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepChoice {
    EvolveOne(u64),
    EvolveTwo(u64, u64),
    QueueDie,
    DoOne(u64),
    DoTwo(u64, u64),
}

impl StepChoice {
    pub fn tickets(&self) -> Vec<u64> {
        match *self {
            StepChoice::EvolveOne(a) | StepChoice::DoOne(a) => alloc::vec![a],
            StepChoice::EvolveTwo(a, b) | StepChoice::DoTwo(a, b) => alloc::vec![a, b],
            StepChoice::QueueDie => Vec::new(),
        }
    }
}

impl fmt::Display for StepChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepChoice::EvolveOne(a) => write!(f, "evolve_one({a})"),
            StepChoice::EvolveTwo(a, b) => write!(f, "evolve_two({a},{b})"),
            StepChoice::QueueDie => f.write_str("queue_die"),
            StepChoice::DoOne(a) => write!(f, "do_one({a})"),
            StepChoice::DoTwo(a, b) => write!(f, "do_two({a},{b})"),
        }
    }
}

/// Why an evolution was turned down.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    Type(TypeError),
    Incompatible(CompatReport),
    Runtime(RuntimeError),
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::Type(e) => e.code(),
            Rejection::Incompatible(r) => r.violations.first().map_or("Incompatible", |v| v.code()),
            Rejection::Runtime(e) => e.code(),
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Type(e) => e.fmt(f),
            Rejection::Incompatible(r) => r.fmt(f),
            Rejection::Runtime(e) => e.fmt(f),
        }
    }
}

/// Why an action did not commit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionError {
    Type(TypeError),
    Runtime(RuntimeError),
}

impl ActionError {
    pub fn code(&self) -> &'static str {
        match self {
            ActionError::Type(e) => e.code(),
            ActionError::Runtime(e) => e.code(),
        }
    }
}

impl fmt::Display for ActionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionError::Type(e) => e.fmt(f),
            ActionError::Runtime(e) => e.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// `delta` is the evolution's own bindings.
    Accepted { sub: Ticket, delta: TypeEnv },
    Rejected { sub: Ticket, reason: Rejection },
    /// Changes committed by this action's transaction.
    Executed { sub: Ticket, changes: Vec<Change> },
    ActionFailed { sub: Ticket, error: ActionError },
    QueueDied { notified: Vec<Ticket> },
}

impl StepOutcome {
    pub fn tickets(&self) -> Vec<&Ticket> {
        match self {
            StepOutcome::Accepted { sub, .. }
            | StepOutcome::Rejected { sub, .. }
            | StepOutcome::Executed { sub, .. }
            | StepOutcome::ActionFailed { sub, .. } => alloc::vec![sub],
            StepOutcome::QueueDied { notified } => notified.iter().collect(),
        }
    }
}

/// Everything one step did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub choice: StepChoice,
    pub outcomes: Vec<StepOutcome>,
    /// All committed changes in transaction order.
    pub changes: Vec<Change>,
    pub waves: Vec<WaveReport>,
    pub txns: Vec<TxnId>,
}

/// The requested step is not enabled in this configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotEnabled(pub StepChoice);

impl fmt::Display for NotEnabled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} is not enabled", self.0)
    }
}

/// Lock footprint of an evolution against the current environment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Footprint {
    /// Existing names the program rebinds.
    pub writes: BTreeSet<Name>,
    /// Existing names the program's initialisers mention.
    pub reads: BTreeSet<Name>,
}

impl Footprint {
    pub fn of(env: &TypeEnv, r: &Program) -> Footprint {
        let writes = r.bound_names().filter(|n| env.contains(n)).cloned().collect();
        let reads = r
            .decls
            .iter()
            .flat_map(|d| d.init.free_names())
            .filter(|n| env.contains(n))
            .collect();
        Footprint { writes, reads }
    }

    fn request(&self, owner: u64) -> LockRequest {
        LockRequest { owner, reads: self.reads.clone(), writes: self.writes.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    env: TypeEnv,
    store: Store,
    q_r: Vec<Queued<Program>>,
    q_do: Vec<Queued<DoStmt>>,
    next_txn: TxnId,
    next_ticket: u64,
}

impl Default for Config {
    fn default() -> Config {
        Config::new()
    }
}

/// Per-call analysis of the evolution queue.
struct EvolveScan {
    ids: Vec<u64>,
    requests: Vec<LockRequest>,
    typed: Vec<Result<TypeEnv, Rejection>>,
    blocked: Vec<bool>,
}

impl Config {
    pub fn new() -> Config {
        Config::with_store(Store::default())
    }

    pub fn with_hist_cap(cap: usize) -> Config {
        Config::with_store(Store::new(cap))
    }

    fn with_store(store: Store) -> Config {
        Config {
            env: TypeEnv::new(),
            store,
            q_r: Vec::new(),
            q_do: Vec::new(),
            next_txn: TxnId(1),
            next_ticket: 1,
        }
    }

    pub fn env(&self) -> &TypeEnv {
        &self.env
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn queued_evolutions(&self) -> &[Queued<Program>] {
        &self.q_r
    }

    pub fn queued_dos(&self) -> &[Queued<DoStmt>] {
        &self.q_do
    }

    pub fn next_txn(&self) -> TxnId {
        self.next_txn
    }

    pub fn is_quiescent(&self) -> bool {
        self.q_r.is_empty() && self.q_do.is_empty()
    }

    pub fn read(&self, name: &str) -> Option<Value> {
        use crate::store::Cells;
        self.store.read(name)
    }

    fn ticket(&mut self, who: &str) -> Ticket {
        let t = Ticket { id: self.next_ticket, who: who.into() };
        self.next_ticket += 1;
        t
    }

    pub fn submit_evolution(&mut self, r: Program, who: &str) -> Ticket {
        let ticket = self.ticket(who);
        self.q_r.push(Queued { ticket: ticket.clone(), item: r });
        ticket
    }

    pub fn submit_do(&mut self, d: DoStmt, who: &str) -> Ticket {
        let ticket = self.ticket(who);
        self.q_do.push(Queued { ticket: ticket.clone(), item: d });
        ticket
    }

    fn type_evolution(&self, r: &Program) -> Result<TypeEnv, Rejection> {
        let delta = infer_program(&self.env, r).map_err(Rejection::Type)?;
        let report = compatible(&self.env, &delta);
        if !report.is_ok() {
            return Err(Rejection::Incompatible(report));
        }
        Ok(delta)
    }

    fn scan_evolutions(&self) -> EvolveScan {
        let ids: Vec<u64> = self.q_r.iter().map(|q| q.ticket.id).collect();
        let requests: Vec<LockRequest> = self
            .q_r
            .iter()
            .map(|q| Footprint::of(&self.env, &q.item).request(q.ticket.id))
            .collect();
        let blocked = (0..ids.len())
            .map(|i| {
                (0..ids.len()).any(|j| {
                    j != i && !LockTable::compatible([&requests[i], &requests[j].writes_only()])
                })
            })
            .collect();
        let typed = self.q_r.iter().map(|q| self.type_evolution(&q.item)).collect();
        EvolveScan { ids, requests, typed, blocked }
    }

    /// Premises of concurrent approval, given both programs are unblocked.
    fn pair_ok(&self, scan: &EvolveScan, i: usize, j: usize) -> bool {
        let n = scan.ids.len();
        // Third parties must not hold locks either program needs.
        for k in (0..n).filter(|&k| k != i && k != j) {
            let held = scan.requests[k].writes_only();
            if !LockTable::compatible([&scan.requests[i], &held])
                || !LockTable::compatible([&scan.requests[j], &held])
            {
                return false;
            }
        }
        // Disjoint rebinds and neither reads what the other rewrites. With
        // that, typing each under the environment without the other's write
        // partition gives the same result as typing it alone.
        if !LockTable::compatible([&scan.requests[i], &scan.requests[j]]) {
            return false;
        }
        let (Ok(d1), Ok(d2)) = (&scan.typed[i], &scan.typed[j]) else {
            return false;
        };
        if d1.names().any(|n| d2.contains(n)) {
            return false;
        }
        compatible(&self.env, &d1.merged(d2)).is_ok()
    }

    /// Every step the dynamics allow, in a fixed order.
    pub fn enabled_steps(&self) -> Vec<StepChoice> {
        let mut out = Vec::new();
        if !self.q_r.is_empty() {
            let scan = self.scan_evolutions();
            let n = scan.ids.len();
            for i in 0..n {
                if !scan.blocked[i] {
                    out.push(StepChoice::EvolveOne(scan.ids[i]));
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    if self.pair_ok(&scan, i, j) {
                        out.push(StepChoice::EvolveTwo(scan.ids[i], scan.ids[j]));
                    }
                }
            }
            if out.is_empty() {
                out.push(StepChoice::QueueDie);
            }
        }
        let plans: Vec<Option<DoPlan>> =
            self.q_do.iter().map(|q| check_do(&self.env, &q.item).ok()).collect();
        for q in &self.q_do {
            out.push(StepChoice::DoOne(q.ticket.id));
        }
        for i in 0..self.q_do.len() {
            for j in i + 1..self.q_do.len() {
                let (Some(p1), Some(p2)) = (&plans[i], &plans[j]) else { continue };
                let r1 = plan_request(self.q_do[i].ticket.id, p1);
                let r2 = plan_request(self.q_do[j].ticket.id, p2);
                if LockTable::compatible([&r1, &r2]) {
                    out.push(StepChoice::DoTwo(self.q_do[i].ticket.id, self.q_do[j].ticket.id));
                }
            }
        }
        out
    }

    pub fn is_enabled(&self, choice: &StepChoice) -> bool {
        self.enabled_steps().contains(choice)
    }

    /// Performs `choice` if it is enabled.
    pub fn step(&mut self, choice: StepChoice) -> Result<StepRecord, NotEnabled> {
        if !self.is_enabled(&choice) {
            return Err(NotEnabled(choice));
        }
        Ok(match choice {
            StepChoice::EvolveOne(a) => self.evolve_one(a),
            StepChoice::EvolveTwo(a, b) => self.evolve_two(a, b),
            StepChoice::QueueDie => self.queue_die(),
            StepChoice::DoOne(a) => self.do_one(a),
            StepChoice::DoTwo(a, b) => self.do_two(a, b),
        })
    }

    /// Lets `source` pick one enabled step and performs it. `None` when the
    /// configuration is quiescent or the source stops.
    pub fn step_with(&mut self, source: &mut dyn ScheduleSource) -> Option<StepRecord> {
        let enabled = self.enabled_steps();
        if enabled.is_empty() {
            return None;
        }
        let i = source.pick(&enabled)?;
        let choice = *enabled.get(i)?;
        Some(self.step(choice).expect("an enabled step"))
    }

    /// Steps until both queues are empty (or the source stops).
    pub fn run_until_quiescent(&mut self, source: &mut dyn ScheduleSource) -> Vec<StepRecord> {
        let mut out = Vec::new();
        while let Some(rec) = self.step_with(source) {
            out.push(rec);
        }
        out
    }

    fn take_evolution(&mut self, id: u64) -> Queued<Program> {
        let i = self.q_r.iter().position(|q| q.ticket.id == id).expect("queued evolution");
        self.q_r.remove(i)
    }

    fn take_do(&mut self, id: u64) -> Queued<DoStmt> {
        let i = self.q_do.iter().position(|q| q.ticket.id == id).expect("queued do");
        self.q_do.remove(i)
    }

    fn record(choice: StepChoice) -> StepRecord {
        StepRecord { choice, outcomes: Vec::new(), changes: Vec::new(), waves: Vec::new(), txns: Vec::new() }
    }

    fn fresh_txn(&mut self) -> TxnId {
        let t = self.next_txn;
        self.next_txn = t.next();
        t
    }

    /// Applies an already typed evolution, or reports why it cannot run.
    fn install(
        &mut self,
        r: &Program,
        merged: TypeEnv,
        rec: &mut StepRecord,
    ) -> Result<(), RuntimeError> {
        if r.is_empty() {
            return Ok(());
        }
        let txn = self.next_txn;
        let staged = self.store.stage_program(&merged, r, txn)?;
        self.next_txn = txn.next();
        self.env = merged;
        let res = self.store.commit(staged);
        rec.changes = res.changes;
        rec.waves = res.waves;
        rec.txns = res.txns;
        Ok(())
    }

    fn evolve_one(&mut self, id: u64) -> StepRecord {
        let mut rec = Config::record(StepChoice::EvolveOne(id));
        let q = self.take_evolution(id);
        let outcome = match self.type_evolution(&q.item) {
            Err(reason) => StepOutcome::Rejected { sub: q.ticket, reason },
            Ok(delta) => {
                let merged = self.env.merged(&delta);
                match self.install(&q.item, merged, &mut rec) {
                    Ok(()) => StepOutcome::Accepted { sub: q.ticket, delta },
                    Err(e) => StepOutcome::Rejected { sub: q.ticket, reason: Rejection::Runtime(e) },
                }
            }
        };
        rec.outcomes.push(outcome);
        rec
    }

    fn evolve_two(&mut self, a: u64, b: u64) -> StepRecord {
        let mut rec = Config::record(StepChoice::EvolveTwo(a, b));
        let q1 = self.take_evolution(a);
        let q2 = self.take_evolution(b);
        let d1 = self.type_evolution(&q1.item).expect("checked when enabled");
        let d2 = self.type_evolution(&q2.item).expect("checked when enabled");
        let merged = self.env.merged(&d1).merged(&d2);
        let mut both = q1.item.clone();
        both.decls.extend(q2.item.decls.iter().cloned());
        match self.install(&both, merged, &mut rec) {
            Ok(()) => {
                rec.outcomes.push(StepOutcome::Accepted { sub: q1.ticket, delta: d1 });
                rec.outcomes.push(StepOutcome::Accepted { sub: q2.ticket, delta: d2 });
            }
            Err(e) => {
                for sub in [q1.ticket, q2.ticket] {
                    rec.outcomes.push(StepOutcome::Rejected { sub, reason: Rejection::Runtime(e.clone()) });
                }
            }
        }
        rec
    }

    fn queue_die(&mut self) -> StepRecord {
        let mut rec = Config::record(StepChoice::QueueDie);
        let notified = core::mem::take(&mut self.q_r).into_iter().map(|q| q.ticket).collect();
        rec.outcomes.push(StepOutcome::QueueDied { notified });
        rec
    }

    /// Types, evaluates and stages one action against the committed store.
    fn stage_do(&self, d: &DoStmt, txn: TxnId) -> Result<Staged, ActionError> {
        check_do(&self.env, d).map_err(ActionError::Type)?;
        let v = eval(&self.store, &LocalEnv::new(), &d.expr).map_err(ActionError::Runtime)?;
        let Value::Action(action) = v else {
            return Err(ActionError::Runtime(RuntimeError::TypeFault("do of a non-action")));
        };
        let writes = run_action(&self.store, &action).map_err(ActionError::Runtime)?;
        self.store.begin(writes, txn).and_then(|w| w.finish()).map_err(ActionError::Runtime)
    }

    fn commit_do(&mut self, staged: Staged, rec: &mut StepRecord) -> Vec<Change> {
        let res = self.store.commit(staged);
        rec.changes.extend(res.changes.iter().cloned());
        rec.waves.extend(res.waves);
        rec.txns.extend(res.txns);
        res.changes
    }

    fn run_single_do(&mut self, q: Queued<DoStmt>, rec: &mut StepRecord) {
        let txn = self.next_txn;
        let outcome = match self.stage_do(&q.item, txn) {
            Ok(staged) => {
                self.next_txn = txn.next();
                let changes = self.commit_do(staged, rec);
                StepOutcome::Executed { sub: q.ticket, changes }
            }
            Err(error) => StepOutcome::ActionFailed { sub: q.ticket, error },
        };
        rec.outcomes.push(outcome);
    }

    fn do_one(&mut self, id: u64) -> StepRecord {
        let mut rec = Config::record(StepChoice::DoOne(id));
        let q = self.take_do(id);
        self.run_single_do(q, &mut rec);
        rec
    }

    fn do_two(&mut self, a: u64, b: u64) -> StepRecord {
        let mut rec = Config::record(StepChoice::DoTwo(a, b));
        let q1 = self.take_do(a);
        let q2 = self.take_do(b);
        let t1 = self.fresh_txn();
        let t2 = self.fresh_txn();
        // Both run against the same committed base.
        let s1 = self.stage_do(&q1.item, t1);
        let s2 = self.stage_do(&q2.item, t2);
        match (s1, s2) {
            (Ok(s1), Ok(s2)) => match self.store.stage_merged(s1.clone(), s2) {
                Ok(merged) => {
                    self.commit_do(merged, &mut rec);
                    for (q, t) in [(q1, t1), (q2, t2)] {
                        let changes = rec.changes.iter().filter(|c| c.txn == t).cloned().collect();
                        rec.outcomes.push(StepOutcome::Executed { sub: q.ticket, changes });
                    }
                }
                Err(_) => {
                    // The merged recomputation faulted although each action
                    // alone did not; fall back to running them one by one.
                    let changes = self.commit_do(s1, &mut rec);
                    rec.outcomes.push(StepOutcome::Executed { sub: q1.ticket, changes });
                    self.run_single_do(q2, &mut rec);
                }
            },
            (Ok(s), Err(error)) => {
                let changes = self.commit_do(s, &mut rec);
                rec.outcomes.push(StepOutcome::Executed { sub: q1.ticket, changes });
                rec.outcomes.push(StepOutcome::ActionFailed { sub: q2.ticket, error });
            }
            (Err(error), Ok(s)) => {
                rec.outcomes.push(StepOutcome::ActionFailed { sub: q1.ticket, error });
                let changes = self.commit_do(s, &mut rec);
                rec.outcomes.push(StepOutcome::Executed { sub: q2.ticket, changes });
            }
            (Err(e1), Err(e2)) => {
                rec.outcomes.push(StepOutcome::ActionFailed { sub: q1.ticket, error: e1 });
                rec.outcomes.push(StepOutcome::ActionFailed { sub: q2.ticket, error: e2 });
            }
        }
        rec
    }

    /// Preservation invariants; returns a description of each breach.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        let wf = well_formed(&self.env);
        if !wf.is_ok() {
            out.push(alloc::format!("environment not well formed: {wf}"));
        }
        for (name, b) in self.env.iter() {
            let value = match (&b.kind, self.store.vars().get(name), self.store.defs().get(name)) {
                (Kind::StateVar, Some(v), None) => &v.c,
                (Kind::Def(_), None, Some(d)) => &d.c,
                _ => {
                    out.push(alloc::format!("{name}: store cell missing or of the wrong kind"));
                    continue;
                }
            };
            if !value.conforms(&b.ty) {
                out.push(alloc::format!("{name}: value {value} does not have type {}", b.ty));
            }
        }
        if self.store.len() != self.env.len() {
            out.push(alloc::format!(
                "store has {} cells, environment {} bindings",
                self.store.len(),
                self.env.len()
            ));
        }
        if *self.store.graph() != DepGraph::from_env(&self.env) {
            out.push("dependency graph out of sync with the environment".into());
        }
        if self.store.committed() >= self.next_txn {
            out.push("transaction counter behind the store".into());
        }
        out.extend(self.store.check_invariants());
        out
    }
}

fn plan_request(owner: u64, plan: &DoPlan) -> LockRequest {
    LockRequest {
        owner,
        reads: plan.reads.all().cloned().collect(),
        writes: plan.writes.as_set().clone(),
    }
}
