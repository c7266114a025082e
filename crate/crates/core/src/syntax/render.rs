//! Pretty printer. Output re-parses to the same tree; parentheses are added
//! only where precedence or right-extending forms require them.

use alloc::string::String;
use core::fmt::Write as _;

use super::ast::*;

const TOP: u8 = 0;
const UNARY: u8 = 6;
const APP: u8 = 7;
const ATOM: u8 = 8;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Lambda { .. } | Expr::If { .. } => TOP,
        Expr::BinOp { op, .. } => op.level(),
        Expr::Unary { .. } => UNARY,
        Expr::Lit(Literal::Int(n)) if *n < 0 => UNARY,
        Expr::App { .. } => APP,
        _ => ATOM,
    }
}

pub fn render_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e, TOP);
    out
}

pub fn render_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        out.push_str(match d.kind {
            DeclKind::Var => "var ",
            DeclKind::Def => "def ",
        });
        out.push_str(&d.name);
        out.push_str(" = ");
        write_expr(&mut out, &d.init, TOP);
        out.push_str(";\n");
    }
    out
}

pub fn render_do(d: &DoStmt) -> String {
    let mut out = String::from("do ");
    write_expr(&mut out, &d.expr, TOP);
    out
}

pub(crate) fn render_str_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    if level(e) < min {
        out.push('(');
        write_expr(out, e, TOP);
        out.push(')');
        return;
    }
    match e {
        Expr::Lit(lit) => match lit {
            Literal::Int(n) => {
                let _ = write!(out, "{n}");
            }
            Literal::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Literal::Str(s) => render_str_literal(out, s),
            Literal::Unit => out.push_str("()"),
        },
        Expr::Ref(n) => out.push_str(n),
        Expr::Lambda { param, body } => {
            out.push_str("fn ");
            out.push_str(param);
            out.push_str(" => ");
            write_expr(out, body, TOP);
        }
        Expr::App { func, arg } => {
            write_expr(out, func, APP);
            out.push(' ');
            write_expr(out, arg, ATOM);
        }
        Expr::BinOp { op, lhs, rhs } => {
            let l = op.level();
            write_expr(out, lhs, l);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, rhs, l + 1);
        }
        Expr::Unary { op, operand } => {
            out.push_str(op.symbol());
            let mut inner = String::new();
            write_expr(&mut inner, operand, UNARY);
            // `-5` would lex back as a negative literal.
            if *op == UnOp::Neg && inner.starts_with(|c: char| c.is_ascii_digit()) {
                out.push('(');
                out.push_str(&inner);
                out.push(')');
            } else {
                out.push_str(&inner);
            }
        }
        Expr::If { cond, then, els } => {
            out.push_str("if ");
            write_expr(out, cond, TOP);
            out.push_str(" then ");
            write_expr(out, then, TOP);
            out.push_str(" else ");
            write_expr(out, els, TOP);
        }
        Expr::Action(body) => write_action(out, body),
    }
}

fn write_action(out: &mut String, body: &ActionBody) {
    if body.writes.is_empty() {
        out.push_str("action { }");
        return;
    }
    out.push_str("action { ");
    for (i, w) in body.writes.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&w.target);
        out.push_str(" := ");
        write_expr(out, &w.rhs, TOP);
    }
    out.push_str(" }");
}

impl core::fmt::Display for Expr {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&render_expr(self))
    }
}

impl core::fmt::Display for Program {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&render_program(self))
    }
}

impl core::fmt::Display for DoStmt {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&render_do(self))
    }
}
