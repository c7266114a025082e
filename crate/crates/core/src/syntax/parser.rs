use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::ast::*;
use super::lexer::{tokenize, Tok};
use super::ParseError;

/// Deepest expression nesting accepted; keeps recursion bounded on hostile input.
pub const MAX_NESTING: usize = 256;

const EXPR_START: &[&str] = &[
    "integer", "string", "identifier", "`true`", "`false`", "`(`", "`action`", "`fn`", "`if`",
    "`!`", "`-`",
];

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser { toks: tokenize(src)?, pos: 0, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn advance(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
            message: None,
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<Span, ParseError> {
        if *self.peek() == tok {
            Ok(self.advance().1)
        } else {
            Err(self.error(&[label]))
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(n) => {
                self.advance();
                Ok(n)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            Err(ParseError::message(self.span(), "expression nesting too deep"))
        } else {
            Ok(())
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut decls = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Semi => {
                    self.advance();
                }
                Tok::Var | Tok::Def => {
                    decls.push(self.decl()?);
                    match self.peek() {
                        Tok::Semi => {
                            self.advance();
                        }
                        Tok::Eof => break,
                        _ => return Err(self.error(&["`;`", "end of input"])),
                    }
                }
                _ => return Err(self.error(&["`var`", "`def`", "end of input"])),
            }
        }
        Ok(Program { decls })
    }

    fn decl(&mut self) -> Result<Decl, ParseError> {
        let (kw, span) = self.advance();
        let kind = if kw == Tok::Var { DeclKind::Var } else { DeclKind::Def };
        let name = self.ident()?;
        self.expect(Tok::Assign, "`=`")?;
        let init = self.expr()?;
        Ok(Decl { kind, name, init, span })
    }

    fn do_stmt(&mut self) -> Result<DoStmt, ParseError> {
        let span = self.expect(Tok::Do, "`do`")?;
        let expr = self.expr()?;
        if *self.peek() == Tok::Semi {
            self.advance();
        }
        if *self.peek() != Tok::Eof {
            return Err(self.error(&["end of input"]));
        }
        Ok(DoStmt { expr, span })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = match self.peek() {
            Tok::Fn => self.lambda(),
            Tok::If => self.conditional(),
            _ => self.binary(1),
        };
        self.depth -= 1;
        e
    }

    fn lambda(&mut self) -> Result<Expr, ParseError> {
        self.advance();
        let param = self.ident()?;
        self.expect(Tok::Arrow, "`=>`")?;
        let body = self.expr()?;
        Ok(Expr::Lambda { param, body: Arc::new(body) })
    }

    fn conditional(&mut self) -> Result<Expr, ParseError> {
        self.advance();
        let cond = self.expr()?;
        self.expect(Tok::Then, "`then`")?;
        let then = self.expr()?;
        self.expect(Tok::Else, "`else`")?;
        let els = self.expr()?;
        Ok(Expr::If { cond: Arc::new(cond), then: Arc::new(then), els: Arc::new(els) })
    }

    fn binop_at(&self, level: u8) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::Lt => BinOp::Lt,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            _ => return None,
        };
        (op.level() == level).then_some(op)
    }

    /// Left-associative binary operators at `level` and tighter.
    fn binary(&mut self, level: u8) -> Result<Expr, ParseError> {
        if level > 5 {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(op) = self.binop_at(level) {
            self.advance();
            let rhs = self.binary(level + 1)?;
            lhs = Expr::binop(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = match self.peek() {
            Tok::Bang => {
                self.advance();
                let operand = self.unary()?;
                Ok(Expr::Unary { op: UnOp::Not, operand: Arc::new(operand) })
            }
            Tok::Minus => {
                if let Tok::Int(mag) = *self.peek_at(1) {
                    let span = self.span();
                    self.advance();
                    self.advance();
                    let lit = if mag <= i64::MAX as u64 + 1 {
                        (mag as i64).wrapping_neg()
                    } else {
                        return Err(ParseError::message(span, "integer literal out of range"));
                    };
                    self.application(Expr::int(lit))
                } else {
                    self.advance();
                    let operand = self.unary()?;
                    Ok(Expr::Unary { op: UnOp::Neg, operand: Arc::new(operand) })
                }
            }
            Tok::Fn => self.lambda(),
            Tok::If => self.conditional(),
            _ => {
                let head = self.atom()?;
                self.application(head)
            }
        };
        self.depth -= 1;
        e
    }

    fn application(&mut self, mut func: Expr) -> Result<Expr, ParseError> {
        while self.starts_atom() {
            let arg = self.atom()?;
            func = Expr::App { func: Arc::new(func), arg: Arc::new(arg) };
        }
        Ok(func)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Int(_)
                | Tok::Str(_)
                | Tok::Ident(_)
                | Tok::True
                | Tok::False
                | Tok::LParen
                | Tok::Action
        )
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(mag) => {
                self.advance();
                let n = i64::try_from(mag)
                    .map_err(|_| ParseError::message(span, "integer literal out of range"))?;
                Ok(Expr::int(n))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::Ident(n) => {
                self.advance();
                Ok(Expr::Ref(n))
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Lit(Literal::Bool(true)))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Lit(Literal::Bool(false)))
            }
            Tok::LParen => {
                self.advance();
                if *self.peek() == Tok::RParen {
                    self.advance();
                    return Ok(Expr::Lit(Literal::Unit));
                }
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Action => {
                self.advance();
                self.action_body().map(|b| Expr::Action(Arc::new(b)))
            }
            _ => Err(self.error(EXPR_START)),
        }
    }

    fn action_body(&mut self) -> Result<ActionBody, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut writes = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.advance();
                    break;
                }
                Tok::Ident(_) => {
                    let target = self.ident()?;
                    self.expect(Tok::Define, "`:=`")?;
                    let rhs = self.expr()?;
                    writes.push(Write { target, rhs });
                    match self.peek() {
                        Tok::Semi => {
                            self.advance();
                        }
                        Tok::RBrace => {}
                        _ => return Err(self.error(&["`;`", "`}`"])),
                    }
                }
                _ => return Err(self.error(&["identifier", "`}`"])),
            }
        }
        Ok(ActionBody { writes })
    }
}

/// Parses a declaration sequence: `var f = e; def g = e2; ...`.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    Parser::new(source)?.program()
}

/// Parses `do <expr>`, with an optional trailing `;`.
pub fn parse_do(source: &str) -> Result<DoStmt, ParseError> {
    Parser::new(source)?.do_stmt()
}

/// Parses a single expression spanning the whole input.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(source)?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error(&["end of input"]));
    }
    Ok(e)
}

/// True for names that can be bound: not a keyword, `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !super::lexer::KEYWORDS.contains(&s)
}
