use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

/// Identifier of a top-level cell or a lambda parameter.
pub type Name = String;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    Str(String),
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Lt,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Lt => "<",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub(crate) fn level(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Lt => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::Neg => "-",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Lit(Literal),
    Ref(Name),
    Lambda { param: Name, body: Arc<Expr> },
    App { func: Arc<Expr>, arg: Arc<Expr> },
    BinOp { op: BinOp, lhs: Arc<Expr>, rhs: Arc<Expr> },
    Unary { op: UnOp, operand: Arc<Expr> },
    If { cond: Arc<Expr>, then: Arc<Expr>, els: Arc<Expr> },
    Action(Arc<ActionBody>),
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Lit(Literal::Int(n))
    }

    pub fn name(n: &str) -> Expr {
        Expr::Ref(n.into())
    }

    pub fn binop(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::BinOp { op, lhs: Arc::new(lhs), rhs: Arc::new(rhs) }
    }

    /// Top-level names this expression mentions, excluding lambda-bound ones.
    /// Write targets of action literals count as mentions.
    pub fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }
}

fn collect_free(e: &Expr, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match e {
        Expr::Lit(_) => {}
        Expr::Ref(n) => {
            if !bound.iter().any(|b| b == n) {
                out.insert(n.clone());
            }
        }
        Expr::Lambda { param, body } => {
            bound.push(param.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Expr::App { func, arg } => {
            collect_free(func, bound, out);
            collect_free(arg, bound, out);
        }
        Expr::BinOp { lhs, rhs, .. } => {
            collect_free(lhs, bound, out);
            collect_free(rhs, bound, out);
        }
        Expr::Unary { operand, .. } => collect_free(operand, bound, out),
        Expr::If { cond, then, els } => {
            collect_free(cond, bound, out);
            collect_free(then, bound, out);
            collect_free(els, bound, out);
        }
        Expr::Action(body) => {
            for w in &body.writes {
                if !bound.iter().any(|b| b == &w.target) {
                    out.insert(w.target.clone());
                }
                collect_free(&w.rhs, bound, out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Write {
    pub target: Name,
    pub rhs: Expr,
}

/// Ordered writes of an action literal; applied all-or-nothing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActionBody {
    pub writes: Vec<Write>,
}

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeclKind {
    /// `def f = e`
    Def,
    /// `var f = e`
    Var,
}

#[derive(Clone, Debug)]
pub struct Decl {
    pub kind: DeclKind,
    pub name: Name,
    pub init: Expr,
    pub span: Span,
}

// Spans are positional metadata and never take part in structural equality.
impl PartialEq for Decl {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.name == other.name && self.init == other.init
    }
}

impl Eq for Decl {}

impl Decl {
    pub fn new(kind: DeclKind, name: &str, init: Expr) -> Decl {
        Decl { kind, name: name.into(), init, span: Span::default() }
    }
}

/// A declaration sequence, the unit of code evolution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    /// Names this program binds, in declaration order (duplicates kept).
    pub fn bound_names(&self) -> impl Iterator<Item = &Name> {
        self.decls.iter().map(|d| &d.name)
    }
}

#[derive(Clone, Debug)]
pub struct DoStmt {
    pub expr: Expr,
    pub span: Span,
}

impl PartialEq for DoStmt {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl Eq for DoStmt {}

impl DoStmt {
    pub fn new(expr: Expr) -> DoStmt {
        DoStmt { expr, span: Span::default() }
    }
}
