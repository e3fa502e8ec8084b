//! Tokenizer and recursive-descent parser.
//!
//! Precedence, tightest first: `^` (right-associative, integer exponent),
//! unary minus, `* /`, `+ -` (left-associative). No implicit multiplication.

use super::{ExprError, Func, Node};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn syntax(pos: usize, msg: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        pos,
        msg: msg.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
                if !v.is_finite() {
                    return Err(syntax(start, format!("number `{text}` overflows")));
                }
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let exp_pos = self.pos();
        let exponent = self.unary()?;
        let n = constant_value(&exponent)
            .filter(|v| v.fract() == 0.0 && v.abs() <= i32::MAX as f64)
            .ok_or_else(|| syntax(exp_pos, "exponent must be an integer constant"))?;
        Ok(Node::Pow(Box::new(base), n as i32))
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| syntax(pos, format!("unknown function `{name}`")))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => Err(ExprError::Undeclared(name)),
                }
            }
            Tok::End => Err(syntax(pos, "unexpected end of input")),
            other => Err(syntax(
                pos,
                format!("unexpected token {}", describe(&other)),
            )),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let pos = self.pos();
        match self.bump() {
            Tok::RParen => Ok(()),
            Tok::End => Err(syntax(pos, "missing `)`")),
            other => Err(syntax(
                pos,
                format!("expected `)`, found {}", describe(&other)),
            )),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Value of a variable-free subtree built from literals, negation and `^`.
fn constant_value(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        Node::Neg(a) => constant_value(a).map(|v| -v),
        Node::Pow(a, k) => constant_value(a).map(|v| v.powi(*k)),
        _ => None,
    }
}

pub(super) fn parse(src: &str, vars: &[String]) -> Result<Node, ExprError> {
    if src.trim().is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let toks = lex(src)?;
    let mut p = Parser { toks, at: 0, vars };
    let node = p.expr()?;
    if *p.peek() != Tok::End {
        let pos = p.pos();
        let t = p.peek().clone();
        return Err(syntax(pos, format!("unexpected token {}", describe(&t))));
    }
    Ok(node)
}
