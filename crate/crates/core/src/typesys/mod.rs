//! Dependency-annotated types.
//!
//! Every expression is assigned a type and the set of top-level names it
//! reads (its dependency set). Function and action types carry the
//! dependencies they read when applied or executed; action types also carry
//! the state variables they write.
//!
//! A [`TypeEnv`] is well formed when it is consistent (each recorded
//! dependency type matches the dependency's current binding) and acyclic.

mod check;
mod infer;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{Name, Span};

pub use check::{compatible, env_merge, transitive_reads, well_formed};
pub use infer::{check_do, infer_expr, infer_program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseType {
    Int,
    Bool,
    String,
    Unit,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Type {
    Base(BaseType),
    /// `dom -> cod`; `deps` is read when the function is applied.
    Func { dom: alloc::boxed::Box<Type>, cod: alloc::boxed::Box<Type>, deps: DepSet },
    /// A suspended transaction: what it reads and which state variables it writes.
    Action { reads: DepSet, writes: WriteSet },
}

impl Type {
    pub const INT: Type = Type::Base(BaseType::Int);
    pub const BOOL: Type = Type::Base(BaseType::Bool);
    pub const STRING: Type = Type::Base(BaseType::String);
    pub const UNIT: Type = Type::Base(BaseType::Unit);

    pub fn func(dom: Type, cod: Type, deps: DepSet) -> Type {
        Type::Func { dom: dom.into(), cod: cod.into(), deps }
    }

    pub fn action(reads: DepSet, writes: WriteSet) -> Type {
        Type::Action { reads, writes }
    }

    /// Visits every latent dependency and write target inside this type.
    pub(crate) fn for_each_mention(&self, f: &mut dyn FnMut(Mention<'_>)) {
        match self {
            Type::Base(_) => {}
            Type::Func { dom, cod, deps } => {
                dom.for_each_mention(f);
                cod.for_each_mention(f);
                for (n, t) in deps.iter() {
                    f(Mention::Read(n, t));
                    t.for_each_mention(f);
                }
            }
            Type::Action { reads, writes } => {
                for (n, t) in reads.iter() {
                    f(Mention::Read(n, t));
                    t.for_each_mention(f);
                }
                for n in writes.iter() {
                    f(Mention::Write(n));
                }
            }
        }
    }
}

pub(crate) enum Mention<'a> {
    Read(&'a Name, &'a Type),
    Write(&'a Name),
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseType::Int => "Int",
            BaseType::Bool => "Bool",
            BaseType::String => "String",
            BaseType::Unit => "Unit",
        })
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Base(b) => b.fmt(f),
            Type::Func { dom, cod, deps } => {
                if matches!(**dom, Type::Func { .. }) {
                    write!(f, "({dom})")?;
                } else {
                    write!(f, "{dom}")?;
                }
                if deps.is_empty() {
                    write!(f, " -> {cod}")
                } else {
                    write!(f, " -{deps}-> {cod}")
                }
            }
            Type::Action { reads, writes } => write!(f, "Action[{reads}; {writes}]"),
        }
    }
}

/// Names read, each with the type it was read at.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct DepSet(BTreeMap<Name, Type>);

impl DepSet {
    pub fn new() -> DepSet {
        DepSet::default()
    }

    pub fn single(name: &str, ty: Type) -> DepSet {
        let mut d = DepSet::new();
        d.0.insert(name.into(), ty);
        d
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, name: &str) -> Option<&Type> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Type)> {
        self.0.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.0.keys()
    }

    /// Adds one entry. The same name at two different types is an error.
    pub fn insert(&mut self, name: Name, ty: Type) -> Result<(), Name> {
        match self.0.get(&name) {
            Some(existing) if *existing != ty => Err(name),
            Some(_) => Ok(()),
            None => {
                self.0.insert(name, ty);
                Ok(())
            }
        }
    }

    pub fn union(&self, other: &DepSet) -> Result<DepSet, Name> {
        let mut out = self.clone();
        for (n, t) in other.iter() {
            out.insert(n.clone(), t.clone())?;
        }
        Ok(out)
    }
}

impl FromIterator<(Name, Type)> for DepSet {
    fn from_iter<I: IntoIterator<Item = (Name, Type)>>(iter: I) -> Self {
        DepSet(iter.into_iter().collect())
    }
}

impl fmt::Display for DepSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (n, t)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}: {t}")?;
        }
        f.write_str("}")
    }
}

/// State variables an action assigns.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct WriteSet(BTreeSet<Name>);

impl WriteSet {
    pub fn new() -> WriteSet {
        WriteSet::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: Name) {
        self.0.insert(name);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Name> {
        self.0.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<Name> {
        &self.0
    }
}

impl FromIterator<Name> for WriteSet {
    fn from_iter<I: IntoIterator<Item = Name>>(iter: I) -> Self {
        WriteSet(iter.into_iter().collect())
    }
}

impl fmt::Display for WriteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(n)?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kind {
    /// A state variable; it has no dependencies.
    StateVar,
    /// A definition with its direct dependencies.
    Def(DepSet),
}

impl Kind {
    pub fn is_state_var(&self) -> bool {
        matches!(self, Kind::StateVar)
    }

    pub fn deps(&self) -> Option<&DepSet> {
        match self {
            Kind::StateVar => None,
            Kind::Def(d) => Some(d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub kind: Kind,
    pub ty: Type,
}

/// Insertion-ordered map from names to bindings. Equality ignores the
/// order: two environments are equal when they bind the same names alike.
#[derive(Clone, Debug, Default)]
pub struct TypeEnv {
    entries: Vec<(Name, Binding)>,
    index: BTreeMap<Name, usize>,
}

impl PartialEq for TypeEnv {
    fn eq(&self, other: &TypeEnv) -> bool {
        self.len() == other.len() && self.iter().all(|(n, b)| other.get(n) == Some(b))
    }
}

impl Eq for TypeEnv {}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Binding> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Overwrites in place if `name` is bound, appends otherwise.
    pub fn insert(&mut self, name: Name, binding: Binding) {
        match self.index.get(&name) {
            Some(&i) => self.entries[i].1 = binding,
            None => {
                self.index.insert(name.clone(), self.entries.len());
                self.entries.push((name, binding));
            }
        }
    }

    pub fn bind_var(&mut self, name: &str, ty: Type) {
        self.insert(name.into(), Binding { kind: Kind::StateVar, ty });
    }

    pub fn bind_def(&mut self, name: &str, deps: DepSet, ty: Type) {
        self.insert(name.into(), Binding { kind: Kind::Def(deps), ty });
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Binding)> {
        self.entries.iter().map(|(n, b)| (n, b))
    }

    pub fn names(&self) -> impl Iterator<Item = &Name> {
        self.entries.iter().map(|(n, _)| n)
    }

    /// The environment without the given names (order of the rest kept).
    pub fn without(&self, names: &BTreeSet<Name>) -> TypeEnv {
        let mut out = TypeEnv::new();
        for (n, b) in self.iter() {
            if !names.contains(n) {
                out.insert(n.clone(), b.clone());
            }
        }
        out
    }

    /// `self ⊎ delta`.
    pub fn merged(&self, delta: &TypeEnv) -> TypeEnv {
        env_merge(self, delta)
    }
}

/// Top-level names an action reads, split by kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadSet {
    pub vars: BTreeSet<Name>,
    pub defs: BTreeSet<Name>,
}

impl ReadSet {
    pub fn all(&self) -> impl Iterator<Item = &Name> {
        self.vars.iter().chain(self.defs.iter())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains(name) || self.defs.contains(name)
    }
}

/// Static lock footprint of a `do`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoPlan {
    pub reads: ReadSet,
    pub writes: WriteSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeErrorKind {
    UnboundName(Name),
    /// Assignment to something that is not a state variable.
    KindMismatch { name: Name, found: &'static str },
    TypeMismatch { expected: String, found: String },
    BranchMismatch { then: String, els: String },
    NonFunctionApplication { found: String },
    NotAnAction { found: String },
    StateInitNotClosed { name: Name, deps: Vec<Name> },
    DuplicateInProgram(Name),
    /// A type variable that nothing constrained.
    AmbiguousType,
    DepConflict(Name),
}

impl TypeErrorKind {
    /// Stable identifier used for error reporting on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            TypeErrorKind::UnboundName(_) => "UnboundName",
            TypeErrorKind::KindMismatch { .. } => "KindMismatch",
            TypeErrorKind::TypeMismatch { .. } => "TypeMismatch",
            TypeErrorKind::BranchMismatch { .. } => "BranchMismatch",
            TypeErrorKind::NonFunctionApplication { .. } => "NonFunctionApplication",
            TypeErrorKind::NotAnAction { .. } => "NotAnAction",
            TypeErrorKind::StateInitNotClosed { .. } => "StateInitNotClosed",
            TypeErrorKind::DuplicateInProgram(_) => "DuplicateInProgram",
            TypeErrorKind::AmbiguousType => "AmbiguousType",
            TypeErrorKind::DepConflict(_) => "DepConflict",
        }
    }
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeErrorKind::UnboundName(n) => write!(f, "unbound name `{n}`"),
            TypeErrorKind::KindMismatch { name, found } => {
                write!(f, "`{name}` is a {found}, only state variables can be assigned")
            }
            TypeErrorKind::TypeMismatch { expected, found } => {
                write!(f, "type mismatch: expected {expected}, found {found}")
            }
            TypeErrorKind::BranchMismatch { then, els } => {
                write!(f, "if branches disagree: {then} vs {els}")
            }
            TypeErrorKind::NonFunctionApplication { found } => {
                write!(f, "cannot apply a value of type {found}")
            }
            TypeErrorKind::NotAnAction { found } => {
                write!(f, "`do` needs an action, found {found}")
            }
            TypeErrorKind::StateInitNotClosed { name, deps } => {
                write!(f, "state variable `{name}` cannot depend on {}", deps.join(", "))
            }
            TypeErrorKind::DuplicateInProgram(n) => write!(f, "`{n}` is declared twice"),
            TypeErrorKind::AmbiguousType => f.write_str("cannot determine a monomorphic type"),
            TypeErrorKind::DepConflict(n) => write!(f, "`{n}` is read at two different types"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    /// Declaration being checked, if any.
    pub decl: Option<Name>,
    pub span: Option<Span>,
}

impl TypeError {
    pub(crate) fn new(kind: TypeErrorKind) -> TypeError {
        TypeError { kind, decl: None, span: None }
    }

    pub fn code(&self) -> &'static str {
        self.kind.code()
    }

    /// The name the error is about: the unbound or offending name when there
    /// is one, otherwise the enclosing declaration.
    pub fn name(&self) -> Option<&str> {
        match &self.kind {
            TypeErrorKind::UnboundName(n)
            | TypeErrorKind::DuplicateInProgram(n)
            | TypeErrorKind::DepConflict(n)
            | TypeErrorKind::KindMismatch { name: n, .. }
            | TypeErrorKind::StateInitNotClosed { name: n, .. } => Some(n),
            _ => self.decl.as_deref(),
        }
    }
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(span) = self.span {
            write!(f, "{span}: ")?;
        }
        if let Some(d) = &self.decl {
            write!(f, "in `{d}`: ")?;
        }
        self.kind.fmt(f)
    }
}

impl core::error::Error for TypeError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Dependency cycle, first name repeated at the end.
    Cycle { path: Vec<Name> },
    InconsistentDependency {
        binding: Name,
        dependency: Name,
        recorded: Type,
        actual: Option<Type>,
    },
    KindFlip { name: Name },
    /// `dependent` was typed against the old type of `changed`.
    StaleDependent { dependent: Name, changed: Name },
    /// An action type writes a name that is not a state variable.
    BadWriteTarget { binding: Name, target: Name },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::Cycle { .. } => "Cycle",
            Violation::InconsistentDependency { .. } => "InconsistentDependency",
            Violation::KindFlip { .. } => "KindFlip",
            Violation::StaleDependent { .. } => "StaleDependent",
            Violation::BadWriteTarget { .. } => "BadWriteTarget",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { path } => write!(f, "dependency cycle {}", path.join(" -> ")),
            Violation::InconsistentDependency { binding, dependency, recorded, actual } => {
                let actual = match actual {
                    Some(t) => format!("{t}"),
                    None => "nothing".into(),
                };
                write!(
                    f,
                    "`{binding}` reads `{dependency}` at {recorded}, but it is bound to {actual}"
                )
            }
            Violation::KindFlip { name } => {
                write!(f, "`{name}` cannot change between state variable and definition")
            }
            Violation::StaleDependent { dependent, changed } => write!(
                f,
                "`{dependent}` depends on `{changed}`, whose type changes; redefine `{dependent}` too"
            ),
            Violation::BadWriteTarget { binding, target } => {
                write!(f, "`{binding}` writes `{target}`, which is not a state variable")
            }
        }
    }
}

/// Outcome of [`well_formed`] or [`compatible`]; empty means OK.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompatReport {
    pub violations: Vec<Violation>,
}

impl CompatReport {
    pub fn ok() -> CompatReport {
        CompatReport::default()
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            v.fmt(f)?;
        }
        Ok(())
    }
}

/// Lambda-parameter types visible while typing an expression.
pub type LocalCtx = BTreeMap<Name, Type>;

#[cfg(test)]
mod tests;
