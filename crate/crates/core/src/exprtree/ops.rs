use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Every operation the evaluator knows how to compute. A run only ever uses
/// the subset named by its [`OpVocabulary`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Tanh,
    Pow2,
    Pow3,
}

pub const CATALOG: [Op; 14] = [
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Div,
    Op::Pow,
    Op::Exp,
    Op::Log,
    Op::Sin,
    Op::Cos,
    Op::Sqrt,
    Op::Abs,
    Op::Tanh,
    Op::Pow2,
    Op::Pow3,
];

pub const N_OPS: usize = CATALOG.len();

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Pow => "**",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Sqrt => "sqrt",
            Op::Abs => "abs",
            Op::Tanh => "tanh",
            Op::Pow2 => "pow2",
            Op::Pow3 => "pow3",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        CATALOG.iter().copied().find(|op| op.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => 2,
            _ => 1,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    /// Position in [`CATALOG`]; used to index dense per-op tables.
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn apply_unary(self, a: f64) -> f64 {
        match self {
            Op::Exp => a.exp(),
            Op::Log => {
                if a > 0.0 {
                    a.ln()
                } else {
                    f64::NAN
                }
            }
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Sqrt => {
                if a >= 0.0 {
                    a.sqrt()
                } else {
                    f64::NAN
                }
            }
            Op::Abs => a.abs(),
            Op::Tanh => a.tanh(),
            Op::Pow2 => a * a,
            Op::Pow3 => a * a * a,
            _ => f64::NAN,
        }
    }

    #[inline]
    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => {
                if b == 0.0 {
                    f64::NAN
                } else {
                    a / b
                }
            }
            Op::Pow => {
                if a == 0.0 && b < 0.0 {
                    f64::NAN
                } else {
                    a.powf(b)
                }
            }
            _ => f64::NAN,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Op {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Op {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Op::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown operation `{name}`")))
    }
}

/// The set of operations a sampler run may use. Fixed for the lifetime of a
/// run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpVocabulary {
    ops: Vec<Op>,
}

impl OpVocabulary {
    pub fn new(ops: impl IntoIterator<Item = Op>) -> Result<Self, Error> {
        let mut seen = [false; N_OPS];
        let mut out = Vec::new();
        for op in ops {
            if seen[op.index()] {
                return Err(Error::Validation(format!(
                    "operation `{op}` listed twice in vocabulary"
                )));
            }
            seen[op.index()] = true;
            out.push(op);
        }
        Ok(Self { ops: out })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, Error> {
        let ops = names
            .iter()
            .map(|n| {
                Op::from_name(n.as_ref()).ok_or_else(|| {
                    Error::Validation(format!("unknown operation `{}`", n.as_ref()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ops)
    }

    pub fn empty() -> Self {
        Self { ops: Vec::new() }
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn contains(&self, op: Op) -> bool {
        self.ops.contains(&op)
    }

    pub fn binary(&self) -> impl Iterator<Item = Op> + '_ {
        self.ops.iter().copied().filter(|op| op.arity() == 2)
    }

    pub fn unary(&self) -> impl Iterator<Item = Op> + '_ {
        self.ops.iter().copied().filter(|op| op.arity() == 1)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ops.iter().map(|op| op.name()).collect()
    }
}

impl Default for OpVocabulary {
    /// Binary `+ - * / **` and unary `exp log sin cos sqrt abs`.
    fn default() -> Self {
        Self {
            ops: vec![
                Op::Add,
                Op::Sub,
                Op::Mul,
                Op::Div,
                Op::Pow,
                Op::Exp,
                Op::Log,
                Op::Sin,
                Op::Cos,
                Op::Sqrt,
                Op::Abs,
            ],
        }
    }
}

impl Serialize for OpVocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.ops.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OpVocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let ops = Vec::<Op>::deserialize(d)?;
        OpVocabulary::new(ops).map_err(serde::de::Error::custom)
    }
}
