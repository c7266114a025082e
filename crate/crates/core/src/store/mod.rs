//! Runtime cells and glitch-free propagation.
//!
//! State variables live in [`VarCell`]s, definitions in [`DefCell`]s that
//! also carry the bookkeeping of the versioned propagation model:
//! transactions applied (`done`), committed values per transaction (`hist`),
//! transactions admitted but not yet applied (`upda`) and the logical
//! replicas holding the cell (`repi`).
//!
//! Every mutation is staged first. A [`Wave`] borrows the store immutably,
//! recomputes the affected definitions in topological order into an
//! overlay, and only [`Store::commit`] installs the result. Readers of the
//! store therefore never observe a half-applied transaction, and a fault
//! during staging leaves the store untouched.

mod eval;
mod txnset;
mod value;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::syntax::{DeclKind, Expr, Name, Program};
use crate::typesys::{Kind, TypeEnv};

pub use eval::{apply, eval, run_action, Cells, RuntimeError};
pub use txnset::{History, TxnId, TxnSet};
pub use value::{ActionValue, Closure, LocalEnv, Value};

pub const DEFAULT_HIST_CAP: usize = 1024;
pub const LOCAL_REPLICA: &str = "local";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarCell {
    pub c: Value,
    /// Value before the most recent committed write.
    pub prev: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DefCell {
    pub c: Value,
    pub e: Arc<Expr>,
    pub prev: Value,
    pub done: TxnSet,
    pub hist: History<Value>,
    pub upda: TxnSet,
    pub repi: BTreeSet<String>,
}

impl DefCell {
    fn placeholder(e: Arc<Expr>, cap: usize) -> DefCell {
        DefCell {
            c: Value::Unit,
            e,
            prev: Value::Unit,
            done: TxnSet::new(),
            hist: History::new(cap),
            upda: TxnSet::new(),
            repi: [String::from(LOCAL_REPLICA)].into_iter().collect(),
        }
    }
}

pub type VarMap = BTreeMap<Name, VarCell>;
pub type DefMap = BTreeMap<Name, DefCell>;

/// Definition dependency edges, mirrored from the governing environment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepGraph {
    deps: BTreeMap<Name, BTreeSet<Name>>,
    dependents: BTreeMap<Name, BTreeSet<Name>>,
}

impl DepGraph {
    pub fn from_env(env: &TypeEnv) -> DepGraph {
        let mut g = DepGraph::default();
        for (name, binding) in env.iter() {
            g.deps.entry(name.clone()).or_default();
            if let Kind::Def(deps) = &binding.kind {
                for d in deps.names() {
                    g.deps.get_mut(name).unwrap().insert(d.clone());
                    g.dependents.entry(d.clone()).or_default().insert(name.clone());
                }
            }
        }
        g
    }

    pub fn deps(&self, name: &str) -> impl Iterator<Item = &Name> {
        self.deps.get(name).into_iter().flatten()
    }

    pub fn dependents(&self, name: &str) -> impl Iterator<Item = &Name> {
        self.dependents.get(name).into_iter().flatten()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Name, &Name)> {
        self.deps.iter().flat_map(|(f, gs)| gs.iter().map(move |g| (f, g)))
    }

    /// Everything transitively depending on `roots` (roots excluded unless
    /// reachable from another root).
    pub fn affected_by<'a>(&self, roots: impl IntoIterator<Item = &'a Name>) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&Name> = roots.into_iter().collect();
        while let Some(n) = stack.pop() {
            for d in self.dependents(n) {
                if out.insert(d.clone()) {
                    stack.push(d);
                }
            }
        }
        out
    }

    /// Topological order of `subset` (dependencies first); ties broken by name.
    pub fn topo_order(&self, subset: &BTreeSet<Name>) -> Vec<Name> {
        let mut pending: BTreeMap<&Name, usize> = subset
            .iter()
            .map(|n| (n, self.deps(n).filter(|d| subset.contains(*d)).count()))
            .collect();
        let mut ready: BTreeSet<&Name> =
            pending.iter().filter(|(_, &c)| c == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(subset.len());
        while let Some(n) = ready.pop_first() {
            pending.remove(n);
            order.push(n.clone());
            for d in self.dependents(n) {
                if let Some(c) = pending.get_mut(d) {
                    *c -= 1;
                    if *c == 0 {
                        ready.insert(d);
                    }
                }
            }
        }
        debug_assert!(pending.is_empty(), "dependency graph has a cycle");
        order
    }
}

/// One committed change to a cell. `old` is `None` for a newly created cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Change {
    pub name: Name,
    pub old: Option<Value>,
    pub new: Value,
    pub txn: TxnId,
}

/// What one propagation wave did, for glitch-freedom checks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WaveReport {
    pub txn: TxnId,
    pub affected: BTreeSet<Name>,
    /// Recomputation order.
    pub recomputed: Vec<Name>,
    /// Definitions read while still pending in this wave. Always empty
    /// unless propagation is broken.
    pub stale_reads: Vec<Name>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropagationResult {
    pub txns: Vec<TxnId>,
    pub changes: Vec<Change>,
    pub waves: Vec<WaveReport>,
}

impl PropagationResult {
    pub fn change_of(&self, name: &str) -> Option<&Change> {
        self.changes.iter().rev().find(|c| c.name == name)
    }
}

/// Fully recomputed cells ready to be installed by [`Store::commit`].
#[derive(Clone, Debug)]
pub struct Staged {
    txns: Vec<TxnId>,
    vars: VarMap,
    defs: DefMap,
    graph: Option<DepGraph>,
    changes: Vec<Change>,
    waves: Vec<WaveReport>,
}

impl Staged {
    pub fn txns(&self) -> &[TxnId] {
        &self.txns
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn defs(&self) -> &DefMap {
        &self.defs
    }

    pub fn changes(&self) -> &[Change] {
        &self.changes
    }
}

/// Values of a set of cells at one committed transaction boundary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub txn: TxnId,
    pub values: BTreeMap<Name, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Store {
    vars: VarMap,
    defs: DefMap,
    graph: DepGraph,
    committed: TxnId,
    hist_cap: usize,
}

impl Default for Store {
    fn default() -> Store {
        Store::new(DEFAULT_HIST_CAP)
    }
}

impl Cells for Store {
    fn read(&self, name: &str) -> Option<Value> {
        self.vars
            .get(name)
            .map(|v| v.c.clone())
            .or_else(|| self.defs.get(name).map(|d| d.c.clone()))
    }
}

impl Store {
    pub fn new(hist_cap: usize) -> Store {
        Store {
            vars: VarMap::new(),
            defs: DefMap::new(),
            graph: DepGraph::default(),
            committed: TxnId(0),
            hist_cap: hist_cap.max(1),
        }
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn defs(&self) -> &DefMap {
        &self.defs
    }

    pub fn graph(&self) -> &DepGraph {
        &self.graph
    }

    /// Last committed transaction.
    pub fn committed(&self) -> TxnId {
        self.committed
    }

    pub fn hist_cap(&self) -> usize {
        self.hist_cap
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name) || self.defs.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.vars.keys().chain(self.defs.keys())
    }

    pub fn len(&self) -> usize {
        self.vars.len() + self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Current value of every cell.
    pub fn values(&self) -> BTreeMap<Name, Value> {
        self.vars
            .iter()
            .map(|(n, v)| (n.clone(), v.c.clone()))
            .chain(self.defs.iter().map(|(n, d)| (n.clone(), d.c.clone())))
            .collect()
    }

    /// Reads `names` at the latest committed boundary, which is at or after
    /// `floor` in a single-owner store. Unknown names are left out.
    pub fn snapshot_read<'a>(
        &self,
        names: impl IntoIterator<Item = &'a Name>,
        floor: TxnId,
    ) -> Snapshot {
        debug_assert!(self.committed >= floor);
        let values = names
            .into_iter()
            .filter_map(|n| self.read(n).map(|v| (n.clone(), v)))
            .collect();
        Snapshot { txn: self.committed, values }
    }

    /// Starts a wave that writes `writes` (state variables only) under `txn`.
    pub fn begin(&self, writes: BTreeMap<Name, Value>, txn: TxnId) -> Result<Wave<'_>, RuntimeError> {
        assert!(txn > self.committed, "transaction ids must increase");
        let mut wave = Wave::new(self, txn, None);
        for (name, v) in writes {
            let old = self
                .vars
                .get(&name)
                .ok_or_else(|| RuntimeError::Unbound(name.clone()))?;
            wave.vars.insert(name, VarCell { c: v, prev: old.c.clone() });
        }
        let affected = self.graph.affected_by(wave.vars.keys());
        wave.admit(affected);
        Ok(wave)
    }

    /// Writes state variables and propagates to every transitive dependent
    /// as one transaction. On error nothing changes.
    pub fn propagate(
        &mut self,
        writes: BTreeMap<Name, Value>,
        txn: TxnId,
    ) -> Result<PropagationResult, RuntimeError> {
        let staged = self.begin(writes, txn)?.finish()?;
        Ok(self.commit(staged))
    }

    /// Installs or re-initialises the cells declared by `r`, then updates
    /// every dependent. `env` is the governing environment after the
    /// evolution; the dependency graph is rebuilt from it. An empty `r` is
    /// not a transaction.
    pub fn init_cells(
        &mut self,
        env: &TypeEnv,
        r: &Program,
        txn: TxnId,
    ) -> Result<PropagationResult, RuntimeError> {
        if r.is_empty() {
            return Ok(PropagationResult::default());
        }
        Ok(self.commit(self.stage_program(env, r, txn)?))
    }

    pub fn stage_program(&self, env: &TypeEnv, r: &Program, txn: TxnId) -> Result<Staged, RuntimeError> {
        assert!(txn > self.committed, "transaction ids must increase");
        let graph = DepGraph::from_env(env);
        let mut wave = Wave::new(self, txn, Some(graph));
        let mut defs = BTreeSet::new();
        for decl in &r.decls {
            match decl.kind {
                DeclKind::Var => {
                    let v = eval(&wave, &LocalEnv::new(), &decl.init)?;
                    let prev = self.vars.get(&decl.name).map_or_else(|| v.clone(), |c| c.c.clone());
                    wave.vars.insert(decl.name.clone(), VarCell { c: v, prev });
                }
                DeclKind::Def => {
                    let e = Arc::new(decl.init.clone());
                    let cell = match self.defs.get(&decl.name) {
                        Some(old) => DefCell { e, ..old.clone() },
                        None => {
                            wave.fresh.insert(decl.name.clone());
                            DefCell::placeholder(e, self.hist_cap)
                        }
                    };
                    wave.defs.insert(decl.name.clone(), cell);
                    defs.insert(decl.name.clone());
                }
            }
        }
        let mut affected = wave.graph().affected_by(r.bound_names());
        affected.extend(defs);
        wave.admit(affected);
        wave.finish()
    }

    /// Installs staged cells. Every transaction of the batch is recorded in
    /// the `done` set of every definition.
    pub fn commit(&mut self, staged: Staged) -> PropagationResult {
        let Staged { txns, vars, defs, graph, changes, waves } = staged;
        self.vars.extend(vars);
        self.defs.extend(defs);
        for cell in self.defs.values_mut() {
            for &t in &txns {
                cell.upda.remove(t);
                cell.done.insert(t);
            }
        }
        if let Some(g) = graph {
            self.graph = g;
        }
        if let Some(&max) = txns.iter().max() {
            self.committed = self.committed.max(max);
        }
        PropagationResult { txns, changes, waves }
    }

    /// Merges definition maps produced from this store by two transactions
    /// with disjoint write sets. Cells touched by both get their histories
    /// and version sets unioned and are recomputed against `vars` (the
    /// merged state variables), with the result recorded under the later
    /// transaction. Inputs may be partial maps; missing cells are read from
    /// `self`.
    pub fn merge_defs(&self, d1: &DefMap, d2: &DefMap, vars: &VarMap) -> Result<DefMap, RuntimeError> {
        self.merge_defs_reported(d1, d2, vars).map(|(m, _)| m)
    }

    fn merge_defs_reported(
        &self,
        d1: &DefMap,
        d2: &DefMap,
        vars: &VarMap,
    ) -> Result<(DefMap, WaveReport), RuntimeError> {
        let mut merged = DefMap::new();
        let mut both = BTreeSet::new();
        for name in d1.keys().chain(d2.keys()) {
            if merged.contains_key(name) {
                continue;
            }
            let cell = match (d1.get(name), d2.get(name)) {
                (Some(a), None) | (None, Some(a)) => a.clone(),
                (Some(a), Some(b)) if a == b => a.clone(),
                (Some(a), Some(b)) => {
                    both.insert(name.clone());
                    let mut cell = a.clone();
                    for (t, v) in b.hist.iter() {
                        cell.hist.insert(t, v.clone());
                    }
                    cell.done = a.done.union(&b.done);
                    cell.upda = a.upda.union(&b.upda);
                    cell.repi.extend(b.repi.iter().cloned());
                    cell
                }
                (None, None) => unreachable!(),
            };
            merged.insert(name.clone(), cell);
        }
        let txn = both
            .iter()
            .filter_map(|n| merged[n].hist.latest().map(|(t, _)| t))
            .max()
            .unwrap_or_default();
        let mut report = WaveReport { txn, affected: both.clone(), ..WaveReport::default() };
        for name in self.graph.topo_order(&both) {
            let view = Overlay { store: self, vars, defs: &merged };
            let v = eval(&view, &LocalEnv::new(), &merged[&name].e)?;
            let cell = merged.get_mut(&name).unwrap();
            if let Some((latest, _)) = cell.hist.latest() {
                // As if the two transactions had run one after the other.
                if let Some((_, before)) = cell.hist.as_of(TxnId(latest.0 - 1)) {
                    cell.prev = before.clone();
                }
                let oldest = cell.hist.insert(latest, v.clone());
                cell.done.retain_from(oldest);
            }
            cell.c = v;
            report.recomputed.push(name);
        }
        Ok((merged, report))
    }

    /// Combines two waves staged from this store into one batch, using
    /// [`Store::merge_defs`] for definitions touched by both.
    pub fn stage_merged(&self, first: Staged, second: Staged) -> Result<Staged, RuntimeError> {
        let (first, second) =
            if first.txns <= second.txns { (first, second) } else { (second, first) };
        let mut vars = first.vars.clone();
        vars.extend(second.vars.clone());
        let (defs, report) = self.merge_defs_reported(&first.defs, &second.defs, &vars)?;

        let t1 = first.txns.iter().copied().max().unwrap_or_default();
        let t2 = second.txns.iter().copied().max().unwrap_or_default();
        let mut changes: Vec<Change> = first
            .changes
            .iter()
            .chain(second.changes.iter())
            .filter(|c| vars.contains_key(&c.name))
            .cloned()
            .collect();
        for (name, cell) in &defs {
            let base = self.defs.get(name).map(|d| d.c.clone());
            match (first.defs.get(name), second.defs.get(name)) {
                (Some(a), Some(_)) => {
                    if base.as_ref() != Some(&a.c) {
                        changes.push(Change { name: name.clone(), old: base, new: a.c.clone(), txn: t1 });
                    }
                    if a.c != cell.c {
                        changes.push(Change {
                            name: name.clone(),
                            old: Some(a.c.clone()),
                            new: cell.c.clone(),
                            txn: t2,
                        });
                    }
                }
                (only_first, _) => {
                    let txn = if only_first.is_some() { t1 } else { t2 };
                    if base.as_ref() != Some(&cell.c) {
                        changes.push(Change { name: name.clone(), old: base, new: cell.c.clone(), txn });
                    }
                }
            }
        }
        changes.sort_by_key(|a| a.txn);
        let mut txns = first.txns;
        txns.extend(second.txns);
        let mut waves = first.waves;
        waves.extend(second.waves);
        if !report.affected.is_empty() {
            waves.push(report);
        }
        Ok(Staged { txns, vars, defs, graph: None, changes, waves })
    }

    /// Internal bookkeeping invariants; returns a description of each breach.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, cell) in &self.defs {
            if !cell.done.is_disjoint(&cell.upda) {
                out.push(alloc::format!("{name}: done and upda overlap"));
            }
            if !cell.upda.is_empty() {
                out.push(alloc::format!("{name}: pending transactions after commit"));
            }
            match cell.hist.latest() {
                Some((_, v)) if *v != cell.c => {
                    out.push(alloc::format!("{name}: newest history entry differs from c"))
                }
                None => out.push(alloc::format!("{name}: empty history")),
                _ => {}
            }
            if let (Some(first_done), Some(oldest)) = (cell.done.min(), cell.hist.oldest()) {
                if first_done < oldest {
                    out.push(alloc::format!("{name}: done entry {first_done} predates history"));
                }
            }
            if cell.repi.is_empty() {
                out.push(alloc::format!("{name}: no replica"));
            }
        }
        for name in self.vars.keys() {
            if self.defs.contains_key(name) {
                out.push(alloc::format!("{name}: both a state variable and a definition"));
            }
        }
        out
    }
}

struct Overlay<'a> {
    store: &'a Store,
    vars: &'a VarMap,
    defs: &'a DefMap,
}

impl Cells for Overlay<'_> {
    fn read(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.vars.get(name) {
            return Some(v.c.clone());
        }
        if let Some(d) = self.defs.get(name) {
            return Some(d.c.clone());
        }
        self.store.read(name)
    }
}

/// A transaction being staged against a borrowed store.
///
/// Reads through the wave see staged cells first; the store itself is never
/// modified, so concurrent readers of the store only see committed state.
pub struct Wave<'s> {
    store: &'s Store,
    graph: Option<DepGraph>,
    txn: TxnId,
    vars: VarMap,
    defs: DefMap,
    fresh: BTreeSet<Name>,
    order: Vec<Name>,
    next: usize,
    report: WaveReport,
    stale: RefCell<Vec<Name>>,
}

impl Cells for Wave<'_> {
    fn read(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.vars.get(name) {
            return Some(v.c.clone());
        }
        if let Some(d) = self.defs.get(name) {
            if d.upda.contains(self.txn) {
                self.stale.borrow_mut().push(name.into());
            }
            return Some(d.c.clone());
        }
        self.store.read(name)
    }
}

impl<'s> Wave<'s> {
    fn new(store: &'s Store, txn: TxnId, graph: Option<DepGraph>) -> Wave<'s> {
        Wave {
            store,
            graph,
            txn,
            vars: VarMap::new(),
            defs: DefMap::new(),
            fresh: BTreeSet::new(),
            order: Vec::new(),
            next: 0,
            report: WaveReport { txn, ..WaveReport::default() },
            stale: RefCell::new(Vec::new()),
        }
    }

    fn graph(&self) -> &DepGraph {
        self.graph.as_ref().unwrap_or(&self.store.graph)
    }

    fn admit(&mut self, affected: BTreeSet<Name>) {
        for name in &affected {
            let cell = match self.defs.remove(name) {
                Some(c) => c,
                None => self.store.defs[name].clone(),
            };
            let mut cell = cell;
            cell.upda.insert(self.txn);
            self.defs.insert(name.clone(), cell);
        }
        self.order = self.graph().topo_order(&affected);
        self.report.affected = affected;
    }

    pub fn txn(&self) -> TxnId {
        self.txn
    }

    /// Definitions not yet recomputed, in the order they will be.
    pub fn remaining(&self) -> &[Name] {
        &self.order[self.next..]
    }

    /// Recomputes the next pending definition; `None` when all are done.
    pub fn step(&mut self) -> Result<Option<Name>, RuntimeError> {
        let Some(name) = self.order.get(self.next).cloned() else {
            return Ok(None);
        };
        let expr = self.defs[&name].e.clone();
        let v = eval(&*self, &LocalEnv::new(), &expr)?;
        let fresh = self.fresh.contains(&name);
        let txn = self.txn;
        let cell = self.defs.get_mut(&name).unwrap();
        cell.prev = if fresh { v.clone() } else { core::mem::replace(&mut cell.c, Value::Unit) };
        cell.c = v.clone();
        let oldest = cell.hist.insert(txn, v);
        cell.upda.remove(txn);
        cell.done.insert(txn);
        cell.done.retain_from(oldest);
        self.report.recomputed.push(name.clone());
        self.next += 1;
        Ok(Some(name))
    }

    /// Runs the remaining recomputations.
    pub fn finish(mut self) -> Result<Staged, RuntimeError> {
        while self.step()?.is_some() {}
        let mut changes = Vec::new();
        for (name, cell) in &self.vars {
            let old = self.store.vars.get(name).map(|v| v.c.clone());
            if old.as_ref() != Some(&cell.c) {
                changes.push(Change { name: name.clone(), old, new: cell.c.clone(), txn: self.txn });
            }
        }
        for name in &self.order {
            let cell = &self.defs[name];
            let old = self.store.defs.get(name).map(|d| d.c.clone());
            if old.as_ref() != Some(&cell.c) {
                changes.push(Change { name: name.clone(), old, new: cell.c.clone(), txn: self.txn });
            }
        }
        self.report.stale_reads = self.stale.into_inner();
        Ok(Staged {
            txns: alloc::vec![self.txn],
            vars: self.vars,
            defs: self.defs,
            graph: self.graph,
            changes,
            waves: alloc::vec![self.report],
        })
    }
}
