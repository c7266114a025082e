use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::ast::Span;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Unsigned magnitude; sign is folded in by the parser.
    Int(u64),
    Str(String),
    Ident(String),
    Var,
    Def,
    Action,
    Do,
    Fn,
    If,
    Then,
    Else,
    True,
    False,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Assign,
    Define,
    Arrow,
    Plus,
    Minus,
    Star,
    Slash,
    EqEq,
    Lt,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Int(n) => return write!(f, "integer `{n}`"),
            Tok::Str(_) => "string literal",
            Tok::Ident(n) => return write!(f, "identifier `{n}`"),
            Tok::Var => "`var`",
            Tok::Def => "`def`",
            Tok::Action => "`action`",
            Tok::Do => "`do`",
            Tok::Fn => "`fn`",
            Tok::If => "`if`",
            Tok::Then => "`then`",
            Tok::Else => "`else`",
            Tok::True => "`true`",
            Tok::False => "`false`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::Semi => "`;`",
            Tok::Assign => "`=`",
            Tok::Define => "`:=`",
            Tok::Arrow => "`=>`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Slash => "`/`",
            Tok::EqEq => "`==`",
            Tok::Lt => "`<`",
            Tok::AndAnd => "`&&`",
            Tok::OrOr => "`||`",
            Tok::Bang => "`!`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

pub(crate) const KEYWORDS: &[&str] =
    &["var", "def", "action", "do", "fn", "if", "then", "else", "true", "false"];

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "var" => Tok::Var,
        "def" => Tok::Def,
        "action" => Tok::Action,
        "do" => Tok::Do,
        "fn" => Tok::Fn,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "true" => Tok::True,
        "false" => Tok::False,
        _ => return None,
    })
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' {
            bump!();
            if chars.peek() == Some(&'/') {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            } else {
                out.push((Tok::Slash, span));
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut value: u64 = 0;
            while let Some(&d) = chars.peek() {
                let Some(digit) = d.to_digit(10) else { break };
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add(u64::from(digit)))
                    .ok_or_else(|| ParseError::message(span, "integer literal out of range"))?;
                bump!();
            }
            if chars.peek().is_some_and(|c| c.is_ascii_alphabetic() || *c == '_') {
                return Err(ParseError::message(span, "identifier cannot start with a digit"));
            }
            out.push((Tok::Int(value), span));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    word.push(d);
                    bump!();
                } else {
                    break;
                }
            }
            out.push((keyword(&word).unwrap_or(Tok::Ident(word)), span));
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match bump!() {
                    None => return Err(ParseError::message(span, "unterminated string literal")),
                    Some('"') => break,
                    Some('\\') => {
                        let esc = match bump!() {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('r') => '\r',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => {
                                return Err(ParseError::message(
                                    Span { line, col },
                                    "unknown escape sequence",
                                ))
                            }
                        };
                        s.push(esc);
                    }
                    Some(ch) => s.push(ch),
                }
            }
            out.push((Tok::Str(s), span));
            continue;
        }
        bump!();
        let next = chars.peek().copied();
        let tok = match (c, next) {
            ('(', _) => Tok::LParen,
            (')', _) => Tok::RParen,
            ('{', _) => Tok::LBrace,
            ('}', _) => Tok::RBrace,
            (';', _) => Tok::Semi,
            ('+', _) => Tok::Plus,
            ('-', _) => Tok::Minus,
            ('*', _) => Tok::Star,
            ('<', _) => Tok::Lt,
            ('=', Some('=')) => {
                bump!();
                Tok::EqEq
            }
            ('=', Some('>')) => {
                bump!();
                Tok::Arrow
            }
            ('=', _) => Tok::Assign,
            (':', Some('=')) => {
                bump!();
                Tok::Define
            }
            ('&', Some('&')) => {
                bump!();
                Tok::AndAnd
            }
            ('|', Some('|')) => {
                bump!();
                Tok::OrOr
            }
            ('!', _) => Tok::Bang,
            _ => {
                return Err(ParseError::message(span, "unexpected character"));
            }
        };
        out.push((tok, span));
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}
