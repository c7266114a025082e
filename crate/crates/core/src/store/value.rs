use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use crate::syntax::{render_expr, render_str_literal, ActionBody, Expr, Name};
use crate::typesys::{BaseType, Type};

/// Lambda-parameter bindings captured by closures and action values.
pub type LocalEnv = BTreeMap<Name, Value>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Closure {
    pub param: Name,
    pub body: Arc<Expr>,
    pub captured: LocalEnv,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionValue {
    pub body: Arc<ActionBody>,
    pub captured: LocalEnv,
}

/// Runtime value. Top-level names inside closure and action bodies are read
/// live when the body runs; only lambda parameters are captured.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    Unit,
    Closure(Arc<Closure>),
    Action(Arc<ActionValue>),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(s.into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Shape check against a declared type. Closure bodies are not re-typed.
    pub fn conforms(&self, ty: &Type) -> bool {
        matches!(
            (self, ty),
            (Value::Int(_), Type::Base(BaseType::Int))
                | (Value::Bool(_), Type::Base(BaseType::Bool))
                | (Value::Str(_), Type::Base(BaseType::String))
                | (Value::Unit, Type::Base(BaseType::Unit))
                | (Value::Closure(_), Type::Func { .. })
                | (Value::Action(_), Type::Action { .. })
        )
    }

    /// Source text for closures and actions; literal text for base values.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match self {
            Value::Int(n) => out = alloc::format!("{n}"),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Str(s) => render_str_literal(&mut out, s),
            Value::Unit => out.push_str("()"),
            Value::Closure(c) => {
                out = render_expr(&Expr::Lambda { param: c.param.clone(), body: c.body.clone() })
            }
            Value::Action(a) => out = render_expr(&Expr::Action(a.body.clone())),
        }
        out
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Value {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Value {
        Value::Bool(b)
    }
}
