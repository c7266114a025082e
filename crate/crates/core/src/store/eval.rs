use alloc::collections::BTreeMap;
use alloc::sync::Arc;

use super::value::*;
use crate::syntax::{BinOp, Expr, Literal, Name, UnOp};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("unbound name `{0}`")]
    Unbound(Name),
    /// Only reachable on input that did not typecheck.
    #[error("ill-typed operation: {0}")]
    TypeFault(&'static str),
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            RuntimeError::DivByZero => "DivByZero",
            RuntimeError::Overflow => "Overflow",
            RuntimeError::Unbound(_) => "Unbound",
            RuntimeError::TypeFault(_) => "TypeFault",
        }
    }
}

/// Read access to top-level cells.
pub trait Cells {
    fn read(&self, name: &str) -> Option<Value>;
}

impl Cells for BTreeMap<Name, Value> {
    fn read(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

impl<C: Cells + ?Sized> Cells for &C {
    fn read(&self, name: &str) -> Option<Value> {
        (**self).read(name)
    }
}

/// Call-by-value evaluation. Never writes; action literals evaluate to
/// suspended [`ActionValue`]s.
pub fn eval<C: Cells + ?Sized>(cells: &C, locals: &LocalEnv, e: &Expr) -> Result<Value, RuntimeError> {
    match e {
        Expr::Lit(lit) => Ok(match lit {
            Literal::Int(n) => Value::Int(*n),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Str(s) => Value::Str(s.as_str().into()),
            Literal::Unit => Value::Unit,
        }),
        Expr::Ref(n) => match locals.get(n) {
            Some(v) => Ok(v.clone()),
            None => cells.read(n).ok_or_else(|| RuntimeError::Unbound(n.clone())),
        },
        Expr::Lambda { param, body } => Ok(Value::Closure(Arc::new(Closure {
            param: param.clone(),
            body: body.clone(),
            captured: locals.clone(),
        }))),
        Expr::App { func, arg } => {
            let f = eval(cells, locals, func)?;
            let a = eval(cells, locals, arg)?;
            apply(cells, &f, a)
        }
        Expr::BinOp { op, lhs, rhs } => {
            let l = eval(cells, locals, lhs)?;
            match op {
                BinOp::And | BinOp::Or => {
                    let lb = l.as_bool().ok_or(RuntimeError::TypeFault("boolean operand"))?;
                    if (*op == BinOp::And) != lb {
                        return Ok(Value::Bool(lb));
                    }
                    let r = eval(cells, locals, rhs)?;
                    r.as_bool().map(Value::Bool).ok_or(RuntimeError::TypeFault("boolean operand"))
                }
                _ => {
                    let r = eval(cells, locals, rhs)?;
                    binop(*op, &l, &r)
                }
            }
        }
        Expr::Unary { op, operand } => {
            let v = eval(cells, locals, operand)?;
            match (op, v) {
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnOp::Neg, Value::Int(n)) => n.checked_neg().map(Value::Int).ok_or(RuntimeError::Overflow),
                _ => Err(RuntimeError::TypeFault("unary operand")),
            }
        }
        Expr::If { cond, then, els } => {
            let c = eval(cells, locals, cond)?;
            match c.as_bool() {
                Some(true) => eval(cells, locals, then),
                Some(false) => eval(cells, locals, els),
                None => Err(RuntimeError::TypeFault("if condition")),
            }
        }
        Expr::Action(body) => Ok(Value::Action(Arc::new(ActionValue {
            body: body.clone(),
            captured: locals.clone(),
        }))),
    }
}

pub fn apply<C: Cells + ?Sized>(cells: &C, f: &Value, arg: Value) -> Result<Value, RuntimeError> {
    let Value::Closure(c) = f else {
        return Err(RuntimeError::TypeFault("application of a non-function"));
    };
    let mut env = c.captured.clone();
    env.insert(c.param.clone(), arg);
    eval(cells, &env, &c.body)
}

fn binop(op: BinOp, l: &Value, r: &Value) -> Result<Value, RuntimeError> {
    use Value::Int;
    match (op, l, r) {
        (BinOp::Add, Int(a), Int(b)) => a.checked_add(*b).map(Int).ok_or(RuntimeError::Overflow),
        (BinOp::Sub, Int(a), Int(b)) => a.checked_sub(*b).map(Int).ok_or(RuntimeError::Overflow),
        (BinOp::Mul, Int(a), Int(b)) => a.checked_mul(*b).map(Int).ok_or(RuntimeError::Overflow),
        (BinOp::Div, Int(_), Int(0)) => Err(RuntimeError::DivByZero),
        (BinOp::Div, Int(a), Int(b)) => a.checked_div(*b).map(Int).ok_or(RuntimeError::Overflow),
        (BinOp::Lt, Int(a), Int(b)) => Ok(Value::Bool(a < b)),
        (BinOp::Eq, a, b) => Ok(Value::Bool(a == b)),
        _ => Err(RuntimeError::TypeFault("binary operands")),
    }
}

/// Runs an action's writes left to right. Each right-hand side sees the
/// state variables already assigned by earlier writes of the same action;
/// definitions keep their pre-action values. Returns the final value per
/// target.
pub fn run_action<C: Cells + ?Sized>(
    cells: &C,
    action: &ActionValue,
) -> Result<BTreeMap<Name, Value>, RuntimeError> {
    struct Pending<'a, C: ?Sized> {
        base: &'a C,
        written: &'a BTreeMap<Name, Value>,
    }
    impl<C: Cells + ?Sized> Cells for Pending<'_, C> {
        fn read(&self, name: &str) -> Option<Value> {
            self.written.get(name).cloned().or_else(|| self.base.read(name))
        }
    }
    let mut written = BTreeMap::new();
    for w in &action.body.writes {
        let v = eval(&Pending { base: cells, written: &written }, &action.captured, &w.rhs)?;
        written.insert(w.target.clone(), v);
    }
    Ok(written)
}
