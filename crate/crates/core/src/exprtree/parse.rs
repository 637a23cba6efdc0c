//! Text form of expression trees.
//!
//! ```text
//! expr  := "(" expr binop expr ")" | unop "(" expr ")" | leaf
//! binop := "+" | "-" | "*" | "/" | "**"
//! leaf  := "x" INT | "_c" INT | FLOAT
//! ```
//!
//! Whitespace is insignificant on input. Output is fully parenthesized with
//! single spaces around binary operators and none inside unary calls.

use std::fmt::Write as _;

use super::ops::{Op, OpVocabulary};
use super::tree::{ExprTree, Node};
use crate::error::{Error, Result};

pub fn to_text(tree: &ExprTree) -> String {
    let mut out = String::with_capacity(tree.len() * 4);
    write_node(tree.nodes(), 0, &mut out);
    out
}

fn write_node(nodes: &[Node], i: usize, out: &mut String) -> usize {
    match nodes[i] {
        Node::Var(j) => {
            let _ = write!(out, "x{j}");
            i + 1
        }
        Node::Param(c) => {
            let _ = write!(out, "_c{c}");
            i + 1
        }
        Node::Const(v) => {
            let _ = write!(out, "{v:?}");
            i + 1
        }
        Node::Op(op) if op.arity() == 1 => {
            out.push_str(op.name());
            out.push('(');
            let next = write_node(nodes, i + 1, out);
            out.push(')');
            next
        }
        Node::Op(op) => {
            out.push('(');
            let mid = write_node(nodes, i + 1, out);
            out.push(' ');
            out.push_str(op.name());
            out.push(' ');
            let next = write_node(nodes, mid, out);
            out.push(')');
            next
        }
    }
}

/// Parses `text` against `vocab` with input dimension `dim`.
pub fn parse_text(text: &str, vocab: &OpVocabulary, dim: usize) -> Result<ExprTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        vocab,
        dim,
        nodes: Vec::new(),
    };
    p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::parse(p.pos, "unexpected trailing input"));
    }
    ExprTree::from_preorder(p.nodes, dim).map_err(|e| match e {
        Error::Validation(reason) => Error::parse(0, reason),
        other => other,
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vocab: &'a OpVocabulary,
    dim: usize,
    nodes: Vec<Node>,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, ch: u8) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(Error::parse(
                self.pos,
                format!("expected `{}`, found `{}`", ch as char, c as char),
            )),
            None => Err(Error::parse(
                self.pos,
                format!("expected `{}`, found end of input", ch as char),
            )),
        }
    }

    fn expr(&mut self) -> Result<()> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(Error::parse(self.pos, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let slot = self.nodes.len();
                // Placeholder until the operator is known.
                self.nodes.push(Node::Const(0.0));
                self.expr()?;
                let op = self.binop()?;
                self.nodes[slot] = Node::Op(op);
                self.expr()?;
                self.expect(b')')
            }
            Some(c) if c.is_ascii_digit() || c == b'.' || c == b'-' || c == b'+' => {
                let v = self.number()?;
                self.nodes.push(Node::Const(v));
                Ok(())
            }
            Some(b'_') => {
                if self.src[self.pos..].starts_with(b"_c") {
                    self.pos += 2;
                    let idx = self.integer(start)?;
                    let slot = u16::try_from(idx)
                        .map_err(|_| Error::parse(start, "parameter index too large"))?;
                    self.nodes.push(Node::Param(slot));
                    Ok(())
                } else {
                    Err(Error::parse(start, "unknown token"))
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let ident = self.ident();
                if let Some(digits) = ident.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        let j: usize = digits
                            .parse()
                            .map_err(|_| Error::parse(start, "variable index too large"))?;
                        if j == 0 || j > self.dim {
                            return Err(Error::parse(
                                start,
                                format!("variable x{j} exceeds dimension {}", self.dim),
                            ));
                        }
                        self.nodes.push(Node::Var(j as u16));
                        return Ok(());
                    }
                }
                let op = match Op::from_name(&ident) {
                    Some(op) if op.arity() == 1 => op,
                    _ => {
                        return Err(Error::parse(
                            start,
                            format!("unknown operation `{ident}`"),
                        ))
                    }
                };
                if !self.vocab.contains(op) {
                    return Err(Error::parse(
                        start,
                        format!("operation `{ident}` is not in the vocabulary"),
                    ));
                }
                self.nodes.push(Node::Op(op));
                self.expect(b'(')?;
                self.expr()?;
                self.expect(b')')
            }
            Some(c) => Err(Error::parse(
                start,
                format!("unknown token `{}`", c as char),
            )),
        }
    }

    fn binop(&mut self) -> Result<Op> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let (op, len) = if rest.starts_with(b"**") {
            (Op::Pow, 2)
        } else {
            match rest.first() {
                Some(b'+') => (Op::Add, 1),
                Some(b'-') => (Op::Sub, 1),
                Some(b'*') => (Op::Mul, 1),
                Some(b'/') => (Op::Div, 1),
                Some(&c) => {
                    return Err(Error::parse(
                        start,
                        format!("expected binary operator, found `{}`", c as char),
                    ))
                }
                None => return Err(Error::parse(start, "expected binary operator")),
            }
        };
        self.pos += len;
        if !self.vocab.contains(op) {
            return Err(Error::parse(
                start,
                format!("operation `{}` is not in the vocabulary", op.name()),
            ));
        }
        Ok(op)
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn integer(&mut self, start: usize) -> Result<usize> {
        let from = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if from == self.pos {
            return Err(Error::parse(self.pos, "expected integer index"));
        }
        std::str::from_utf8(&self.src[from..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, "index too large"))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while let Some(c) = self.peek() {
            let exp_sign = matches!(c, b'-' | b'+')
                && matches!(self.src.get(self.pos - 1), Some(b'e') | Some(b'E'));
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::parse(start, format!("malformed number `{s}`"))),
        }
    }
}
