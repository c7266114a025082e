use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::*;

/// `base ⊎ delta`: bindings of `delta` shadow same-named ones in `base`,
/// in place; new names are appended.
pub fn env_merge(base: &TypeEnv, delta: &TypeEnv) -> TypeEnv {
    let mut out = base.clone();
    for (n, b) in delta.iter() {
        out.insert(n.clone(), b.clone());
    }
    out
}

/// Names a binding depends on: its direct dependencies plus every name its
/// type mentions (latent reads and write targets).
fn mentions(binding: &Binding) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    if let Some(deps) = binding.kind.deps() {
        out.extend(deps.names().cloned());
    }
    binding.ty.for_each_mention(&mut |m| match m {
        Mention::Read(n, _) | Mention::Write(n) => {
            out.insert(n.clone());
        }
    });
    out
}

fn consistency(env: &TypeEnv, out: &mut Vec<Violation>) {
    for (name, binding) in env.iter() {
        let mut check = |dep: &Name, recorded: &Type| {
            let actual = env.get(dep).map(|b| &b.ty);
            if actual != Some(recorded) {
                out.push(Violation::InconsistentDependency {
                    binding: name.clone(),
                    dependency: dep.clone(),
                    recorded: recorded.clone(),
                    actual: actual.cloned(),
                });
            }
        };
        if let Some(deps) = binding.kind.deps() {
            for (dep, recorded) in deps.iter() {
                check(dep, recorded);
            }
        }
        let mut latent = Vec::new();
        let mut targets = BTreeSet::new();
        binding.ty.for_each_mention(&mut |m| match m {
            Mention::Read(n, t) => latent.push((n.clone(), t.clone())),
            Mention::Write(n) => {
                targets.insert(n.clone());
            }
        });
        let direct = binding.kind.deps();
        for (dep, recorded) in &latent {
            // Already reported through the direct dependency set.
            if direct.is_some_and(|d| d.get(dep) == Some(recorded)) {
                continue;
            }
            check(dep, recorded);
        }
        for target in targets {
            if !env.get(&target).is_some_and(|b| b.kind.is_state_var()) {
                out.push(Violation::BadWriteTarget { binding: name.clone(), target });
            }
        }
    }
}

fn find_cycle(edges: &BTreeMap<&Name, Vec<&Name>>, remaining: &BTreeSet<&Name>) -> Vec<Name> {
    // Every remaining node lies on or leads to a cycle; walk until a repeat.
    let Some(&start) = remaining.iter().next() else { return Vec::new() };
    let mut path: Vec<&Name> = alloc::vec![start];
    let mut cur = start;
    loop {
        let next = edges[cur]
            .iter()
            .copied()
            .find(|n| remaining.contains(n))
            .expect("a node left by Kahn's algorithm has a remaining successor");
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cyc: Vec<Name> = path[pos..].iter().map(|n| (*n).clone()).collect();
            cyc.push(next.clone());
            return cyc;
        }
        path.push(next);
        cur = next;
    }
}

fn acyclicity(env: &TypeEnv, out: &mut Vec<Violation>) {
    let mut edges: BTreeMap<&Name, Vec<&Name>> = BTreeMap::new();
    let mut indegree: BTreeMap<&Name, usize> = BTreeMap::new();
    for (name, _) in env.iter() {
        edges.entry(name).or_default();
        indegree.entry(name).or_insert(0);
    }
    // Edge f -> g for g in deps(f); count, per node, how many of its own
    // dependencies are still unresolved.
    for (name, binding) in env.iter() {
        if let Some(deps) = binding.kind.deps() {
            for dep in deps.names() {
                if env.contains(dep) {
                    edges.get_mut(name).unwrap().push(dep);
                    *indegree.get_mut(name).unwrap() += 1;
                }
            }
        }
    }
    let mut dependents: BTreeMap<&Name, Vec<&Name>> = BTreeMap::new();
    for (&f, gs) in &edges {
        for &g in gs {
            dependents.entry(g).or_default().push(f);
        }
    }
    let mut ready: Vec<&Name> =
        indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut remaining: BTreeSet<&Name> = indegree.keys().copied().collect();
    while let Some(n) = ready.pop() {
        remaining.remove(n);
        if let Some(ds) = dependents.get(n) {
            for &d in ds {
                let c = indegree.get_mut(d).unwrap();
                *c -= 1;
                if *c == 0 {
                    ready.push(d);
                }
            }
        }
    }
    if !remaining.is_empty() {
        out.push(Violation::Cycle { path: find_cycle(&edges, &remaining) });
    }
}

/// Checks that `env` is consistent and acyclic.
///
/// Consistency covers the direct dependency sets of definitions and the
/// latent reads recorded inside every binding's type; action types must only
/// write state variables.
pub fn well_formed(env: &TypeEnv) -> CompatReport {
    let mut violations = Vec::new();
    consistency(env, &mut violations);
    acyclicity(env, &mut violations);
    CompatReport { violations }
}

/// `base ▷ delta`: is `base ⊎ delta` well formed, without kind flips or
/// dependents left behind by a type change?
pub fn compatible(base: &TypeEnv, delta: &TypeEnv) -> CompatReport {
    let merged = env_merge(base, delta);
    let mut violations = Vec::new();
    let mut retyped = BTreeSet::new();
    for (name, new) in delta.iter() {
        if let Some(old) = base.get(name) {
            if old.kind.is_state_var() != new.kind.is_state_var() {
                violations.push(Violation::KindFlip { name: name.clone() });
            }
            if old.ty != new.ty {
                retyped.insert(name.clone());
            }
        }
    }
    let mut stale = BTreeSet::new();
    for (name, binding) in merged.iter() {
        if delta.contains(name) {
            continue;
        }
        for m in mentions(binding).intersection(&retyped) {
            stale.insert((name.clone(), m.clone()));
            violations.push(Violation::StaleDependent { dependent: name.clone(), changed: m.clone() });
        }
    }
    for v in well_formed(&merged).violations {
        if let Violation::InconsistentDependency { binding, dependency, .. } = &v {
            if stale.contains(&(binding.clone(), dependency.clone())) {
                continue;
            }
        }
        violations.push(v);
    }
    CompatReport { violations }
}

/// Transitive closure of `roots` over definition dependencies, split into
/// state variables and definitions. Roots are included.
pub fn transitive_reads(env: &TypeEnv, roots: &DepSet) -> ReadSet {
    let mut out = ReadSet::default();
    let mut stack: Vec<&Name> = roots.names().collect();
    while let Some(n) = stack.pop() {
        if out.contains(n) {
            continue;
        }
        match env.get(n).map(|b| &b.kind) {
            Some(Kind::StateVar) => {
                out.vars.insert(n.clone());
            }
            Some(Kind::Def(deps)) => {
                out.defs.insert(n.clone());
                stack.extend(deps.names());
            }
            None => {}
        }
    }
    out
}
