//! Monomorphic inference over one declaration.
//!
//! Lambda parameters get type variables solved by unification. Latent
//! annotations (the reads of a function or action type) live in annotation
//! classes: unifying two function types merges their classes, so a value
//! that may be one of several functions reads the union of what they read.
//! A lambda's class *includes* the dependency accumulator of its body, which
//! is resolved only once the declaration has been fully typed.
//!
//! Classes instantiated from negative positions of environment types (write
//! targets, function domains) are rigid: nothing may flow into them that
//! reads more than the declared annotation.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::*;
use crate::syntax::{BinOp, DeclKind, DoStmt, Expr, Literal, Program, UnOp};

#[derive(Clone, Debug)]
enum ITy {
    Var(u32),
    Base(BaseType),
    Func(Box<ITy>, Box<ITy>, u32),
    Action(u32),
}

#[derive(Clone, Debug, Default)]
struct Class {
    parent: Option<u32>,
    reads: BTreeMap<Name, Type>,
    includes: BTreeSet<u32>,
    writes: BTreeSet<Name>,
    rigid: Option<(DepSet, WriteSet)>,
}

/// Dependencies of an expression: concrete entries plus latent classes it
/// may trigger.
#[derive(Clone, Debug, Default)]
struct Acc {
    reads: BTreeMap<Name, Type>,
    classes: BTreeSet<u32>,
}

enum Unify {
    Mismatch,
    Conflict(Name),
}

struct Infer<'a> {
    env: &'a TypeEnv,
    subst: Vec<Option<ITy>>,
    classes: Vec<Class>,
    base_checks: Vec<ITy>,
    locals: Vec<(Name, ITy)>,
}

fn err(kind: TypeErrorKind) -> TypeError {
    TypeError::new(kind)
}

impl<'a> Infer<'a> {
    fn new(env: &'a TypeEnv) -> Infer<'a> {
        Infer { env, subst: Vec::new(), classes: Vec::new(), base_checks: Vec::new(), locals: Vec::new() }
    }

    fn fresh(&mut self) -> ITy {
        self.subst.push(None);
        ITy::Var(self.subst.len() as u32 - 1)
    }

    fn class(&mut self, c: Class) -> u32 {
        self.classes.push(c);
        self.classes.len() as u32 - 1
    }

    fn find(&self, mut c: u32) -> u32 {
        while let Some(p) = self.classes[c as usize].parent {
            c = p;
        }
        c
    }

    fn prune(&self, t: &ITy) -> ITy {
        let mut t = t.clone();
        while let ITy::Var(v) = t {
            match &self.subst[v as usize] {
                Some(next) => t = next.clone(),
                None => break,
            }
        }
        t
    }

    fn occurs(&self, v: u32, t: &ITy) -> bool {
        match self.prune(t) {
            ITy::Var(w) => v == w,
            ITy::Base(_) | ITy::Action(_) => false,
            ITy::Func(a, b, _) => self.occurs(v, &a) || self.occurs(v, &b),
        }
    }

    fn union(&mut self, a: u32, b: u32) -> Result<(), Unify> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        let moved = core::mem::take(&mut self.classes[rb as usize]);
        if let (Some(x), Some(y)) = (&self.classes[ra as usize].rigid, &moved.rigid) {
            if x != y {
                self.classes[rb as usize] = moved;
                return Err(Unify::Mismatch);
            }
        }
        let target = &mut self.classes[ra as usize];
        for (n, t) in moved.reads {
            match target.reads.get(&n) {
                Some(existing) if *existing != t => return Err(Unify::Conflict(n)),
                _ => {
                    target.reads.insert(n, t);
                }
            }
        }
        target.includes.extend(moved.includes);
        target.writes.extend(moved.writes);
        if target.rigid.is_none() {
            target.rigid = moved.rigid;
        }
        self.classes[rb as usize].parent = Some(ra);
        Ok(())
    }

    fn unify(&mut self, a: &ITy, b: &ITy) -> Result<(), Unify> {
        let (a, b) = (self.prune(a), self.prune(b));
        match (&a, &b) {
            (ITy::Var(x), ITy::Var(y)) if x == y => Ok(()),
            (ITy::Var(v), t) | (t, ITy::Var(v)) => {
                if self.occurs(*v, t) {
                    return Err(Unify::Mismatch);
                }
                self.subst[*v as usize] = Some(t.clone());
                Ok(())
            }
            (ITy::Base(x), ITy::Base(y)) if x == y => Ok(()),
            (ITy::Func(d1, c1, e1), ITy::Func(d2, c2, e2)) => {
                self.unify(d1, d2)?;
                self.unify(c1, c2)?;
                self.union(*e1, *e2)
            }
            (ITy::Action(e1), ITy::Action(e2)) => self.union(*e1, *e2),
            _ => Err(Unify::Mismatch),
        }
    }

    /// Imports a ground type. `positive` positions may grow by joining;
    /// negative ones are rigid.
    fn instantiate(&mut self, t: &Type, positive: bool) -> ITy {
        match t {
            Type::Base(b) => ITy::Base(*b),
            Type::Func { dom, cod, deps } => {
                let d = self.instantiate(dom, !positive);
                let c = self.instantiate(cod, positive);
                let class = self.class(Class {
                    reads: deps.0.clone(),
                    rigid: (!positive).then(|| (deps.clone(), WriteSet::new())),
                    ..Class::default()
                });
                ITy::Func(Box::new(d), Box::new(c), class)
            }
            Type::Action { reads, writes } => {
                let class = self.class(Class {
                    reads: reads.0.clone(),
                    writes: writes.0.clone(),
                    rigid: (!positive).then(|| (reads.clone(), writes.clone())),
                    ..Class::default()
                });
                ITy::Action(class)
            }
        }
    }

    fn show(&self, t: &ITy) -> String {
        match self.prune(t) {
            ITy::Var(v) => format!("'t{v}"),
            ITy::Base(b) => format!("{b}"),
            ITy::Func(d, c, _) => {
                let dom = self.show(&d);
                if matches!(self.prune(&d), ITy::Func(..)) {
                    format!("({dom}) -> {}", self.show(&c))
                } else {
                    format!("{dom} -> {}", self.show(&c))
                }
            }
            ITy::Action(c) => {
                let root = self.find(c);
                let writes: Vec<&str> =
                    self.classes[root as usize].writes.iter().map(|s| s.as_str()).collect();
                format!("Action[writes {{{}}}]", writes.join(", "))
            }
        }
    }

    fn join(&self, acc: &mut Acc, other: Acc) -> Result<(), TypeError> {
        for (n, t) in other.reads {
            match acc.reads.get(&n) {
                Some(existing) if *existing != t => {
                    return Err(err(TypeErrorKind::DepConflict(n)))
                }
                _ => {
                    acc.reads.insert(n, t);
                }
            }
        }
        acc.classes.extend(other.classes);
        Ok(())
    }

    fn expect(&mut self, found: &ITy, expected: &ITy) -> Result<(), TypeError> {
        self.unify(found, expected).map_err(|e| match e {
            Unify::Conflict(n) => err(TypeErrorKind::DepConflict(n)),
            Unify::Mismatch => err(TypeErrorKind::TypeMismatch {
                expected: self.show(expected),
                found: self.show(found),
            }),
        })
    }

    fn infer(&mut self, e: &Expr) -> Result<(ITy, Acc), TypeError> {
        match e {
            Expr::Lit(lit) => {
                let b = match lit {
                    Literal::Int(_) => BaseType::Int,
                    Literal::Bool(_) => BaseType::Bool,
                    Literal::Str(_) => BaseType::String,
                    Literal::Unit => BaseType::Unit,
                };
                Ok((ITy::Base(b), Acc::default()))
            }
            Expr::Ref(n) => {
                if let Some((_, t)) = self.locals.iter().rev().find(|(l, _)| l == n) {
                    return Ok((t.clone(), Acc::default()));
                }
                let Some(binding) = self.env.get(n) else {
                    return Err(err(TypeErrorKind::UnboundName(n.clone())));
                };
                let ty = binding.ty.clone();
                let it = self.instantiate(&ty, true);
                let mut acc = Acc::default();
                acc.reads.insert(n.clone(), ty);
                Ok((it, acc))
            }
            Expr::Lambda { param, body } => {
                let p = self.fresh();
                self.locals.push((param.clone(), p.clone()));
                let res = self.infer(body);
                self.locals.pop();
                let (cod, acc) = res?;
                let class =
                    self.class(Class { reads: acc.reads, includes: acc.classes, ..Class::default() });
                Ok((ITy::Func(Box::new(p), Box::new(cod), class), Acc::default()))
            }
            Expr::App { func, arg } => {
                let (tf, mut acc) = self.infer(func)?;
                let (ta, acc_arg) = self.infer(arg)?;
                self.join(&mut acc, acc_arg)?;
                let pruned = self.prune(&tf);
                if matches!(pruned, ITy::Base(_) | ITy::Action(_)) {
                    return Err(err(TypeErrorKind::NonFunctionApplication {
                        found: self.show(&pruned),
                    }));
                }
                let result = self.fresh();
                let latent = self.class(Class::default());
                let expected = ITy::Func(Box::new(ta), Box::new(result.clone()), latent);
                self.expect(&tf, &expected)?;
                acc.classes.insert(latent);
                Ok((result, acc))
            }
            Expr::BinOp { op, lhs, rhs } => {
                let (tl, mut acc) = self.infer(lhs)?;
                let (tr, acc_r) = self.infer(rhs)?;
                self.join(&mut acc, acc_r)?;
                let int = ITy::Base(BaseType::Int);
                let boolean = ITy::Base(BaseType::Bool);
                let out = match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                        self.expect(&tl, &int)?;
                        self.expect(&tr, &int)?;
                        int
                    }
                    BinOp::Lt => {
                        self.expect(&tl, &int)?;
                        self.expect(&tr, &int)?;
                        boolean
                    }
                    BinOp::And | BinOp::Or => {
                        self.expect(&tl, &boolean)?;
                        self.expect(&tr, &boolean)?;
                        boolean
                    }
                    BinOp::Eq => {
                        self.expect(&tr, &tl)?;
                        self.base_checks.push(tl);
                        boolean
                    }
                };
                Ok((out, acc))
            }
            Expr::Unary { op, operand } => {
                let (t, acc) = self.infer(operand)?;
                let want = ITy::Base(match op {
                    UnOp::Not => BaseType::Bool,
                    UnOp::Neg => BaseType::Int,
                });
                self.expect(&t, &want)?;
                Ok((want, acc))
            }
            Expr::If { cond, then, els } => {
                let (tc, mut acc) = self.infer(cond)?;
                self.expect(&tc, &ITy::Base(BaseType::Bool))?;
                let (tt, acc_t) = self.infer(then)?;
                let (te, acc_e) = self.infer(els)?;
                self.join(&mut acc, acc_t)?;
                self.join(&mut acc, acc_e)?;
                self.unify(&tt, &te).map_err(|e| match e {
                    Unify::Conflict(n) => err(TypeErrorKind::DepConflict(n)),
                    Unify::Mismatch => err(TypeErrorKind::BranchMismatch {
                        then: self.show(&tt),
                        els: self.show(&te),
                    }),
                })?;
                Ok((tt, acc))
            }
            Expr::Action(body) => {
                let mut reads = Acc::default();
                let mut writes = BTreeSet::new();
                for w in &body.writes {
                    if self.locals.iter().any(|(l, _)| *l == w.target) {
                        return Err(err(TypeErrorKind::KindMismatch {
                            name: w.target.clone(),
                            found: "lambda parameter",
                        }));
                    }
                    let binding = self
                        .env
                        .get(&w.target)
                        .ok_or_else(|| err(TypeErrorKind::UnboundName(w.target.clone())))?;
                    if !binding.kind.is_state_var() {
                        return Err(err(TypeErrorKind::KindMismatch {
                            name: w.target.clone(),
                            found: "definition",
                        }));
                    }
                    let target_ty = binding.ty.clone();
                    let target = self.instantiate(&target_ty, false);
                    let (t, acc) = self.infer(&w.rhs)?;
                    self.expect(&t, &target)?;
                    self.join(&mut reads, acc)?;
                    writes.insert(w.target.clone());
                }
                let class = self.class(Class {
                    reads: reads.reads,
                    includes: reads.classes,
                    writes,
                    ..Class::default()
                });
                Ok((ITy::Action(class), Acc::default()))
            }
        }
    }

    /// Reads of a class including everything it transitively includes.
    fn resolve_reads(&self, class: u32) -> Result<DepSet, TypeError> {
        let mut out = DepSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![class];
        while let Some(c) = stack.pop() {
            let root = self.find(c);
            if !seen.insert(root) {
                continue;
            }
            let class = &self.classes[root as usize];
            for (n, t) in &class.reads {
                out.insert(n.clone(), t.clone())
                    .map_err(|n| err(TypeErrorKind::DepConflict(n)))?;
            }
            stack.extend(class.includes.iter().copied());
        }
        Ok(out)
    }

    fn resolve_acc(&self, acc: &Acc) -> Result<DepSet, TypeError> {
        let mut out: DepSet = acc.reads.clone().into_iter().collect();
        for &c in &acc.classes {
            out = out.union(&self.resolve_reads(c)?).map_err(|n| err(TypeErrorKind::DepConflict(n)))?;
        }
        Ok(out)
    }

    fn ground(&self, t: &ITy) -> Result<Type, TypeError> {
        match self.prune(t) {
            ITy::Var(_) => Err(err(TypeErrorKind::AmbiguousType)),
            ITy::Base(b) => Ok(Type::Base(b)),
            ITy::Func(d, c, class) => {
                Ok(Type::func(self.ground(&d)?, self.ground(&c)?, self.resolve_reads(class)?))
            }
            ITy::Action(class) => {
                let root = self.find(class);
                let writes = self.classes[root as usize].writes.iter().cloned().collect();
                Ok(Type::action(self.resolve_reads(class)?, writes))
            }
        }
    }

    /// Checks deferred constraints once every variable is solved.
    fn finish(&self) -> Result<(), TypeError> {
        for t in &self.base_checks {
            let g = self.ground(t)?;
            if !matches!(g, Type::Base(_)) {
                return Err(err(TypeErrorKind::TypeMismatch {
                    expected: "a base type".into(),
                    found: format!("{g}"),
                }));
            }
        }
        for (i, class) in self.classes.iter().enumerate() {
            if class.parent.is_some() {
                continue;
            }
            if let Some((reads, writes)) = &class.rigid {
                let actual = self.resolve_reads(i as u32)?;
                let actual_writes: WriteSet = class.writes.iter().cloned().collect();
                if actual != *reads || actual_writes != *writes {
                    return Err(err(TypeErrorKind::TypeMismatch {
                        expected: format!("a value reading {reads} and writing {writes}"),
                        found: format!("one reading {actual} and writing {actual_writes}"),
                    }));
                }
            }
        }
        Ok(())
    }
}

/// Types `e` and returns its type with the top-level names it reads.
///
/// `ctx` binds lambda parameters in scope; they shadow `env` and never enter
/// the dependency set.
pub fn infer_expr(env: &TypeEnv, ctx: &LocalCtx, e: &Expr) -> Result<(Type, DepSet), TypeError> {
    let mut inf = Infer::new(env);
    for (n, t) in ctx {
        let it = inf.instantiate(t, true);
        inf.locals.push((n.clone(), it));
    }
    let (t, acc) = inf.infer(e)?;
    let deps = inf.resolve_acc(&acc)?;
    let ty = inf.ground(&t)?;
    inf.finish()?;
    Ok((ty, deps))
}

/// Types the declarations of `r` left to right, each under `env` merged with
/// the bindings contributed so far, and returns only the new bindings.
pub fn infer_program(env: &TypeEnv, r: &Program) -> Result<TypeEnv, TypeError> {
    let mut delta = TypeEnv::new();
    for decl in &r.decls {
        let locate = |mut e: TypeError| {
            e.decl = Some(decl.name.clone());
            e.span = Some(decl.span);
            e
        };
        if delta.contains(&decl.name) {
            return Err(locate(err(TypeErrorKind::DuplicateInProgram(decl.name.clone()))));
        }
        let scope = env.merged(&delta);
        let (ty, deps) = infer_expr(&scope, &LocalCtx::new(), &decl.init).map_err(locate)?;
        match decl.kind {
            DeclKind::Var => {
                if !deps.is_empty() {
                    return Err(locate(err(TypeErrorKind::StateInitNotClosed {
                        name: decl.name.clone(),
                        deps: deps.names().cloned().collect(),
                    })));
                }
                delta.bind_var(&decl.name, ty);
            }
            DeclKind::Def => delta.bind_def(&decl.name, deps, ty),
        }
    }
    Ok(delta)
}

/// Types a `do` and returns its lock footprint. The environment is unchanged.
pub fn check_do(env: &TypeEnv, stmt: &DoStmt) -> Result<DoPlan, TypeError> {
    let (ty, outer) = infer_expr(env, &LocalCtx::new(), &stmt.expr).map_err(|mut e| {
        e.span = Some(stmt.span);
        e
    })?;
    let Type::Action { reads, writes } = ty else {
        let mut e = err(TypeErrorKind::NotAnAction { found: format!("{ty}") });
        e.span = Some(stmt.span);
        return Err(e);
    };
    let roots = outer.union(&reads).map_err(|n| err(TypeErrorKind::DepConflict(n)))?;
    Ok(DoPlan { reads: transitive_reads(env, &roots), writes })
}
