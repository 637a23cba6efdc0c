//! Maximum-entropy prior over model structures.
//!
//! `p(m) ∝ exp(-Σ_o (α_o n_o(m) + β_o n_o(m)²))`, where `n_o(m)` counts the
//! occurrences of operation `o`. The normalization constant is never
//! computed; model complexity is reported relative to operation-free trees,
//! which sit at zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprtree::{ExprTree, Node, Op, OpVocabulary, N_OPS};

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpPrior {
    pub alpha: f64,
    pub beta: f64,
}

/// Per-operation hyperparameters for every operation of a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorConfig {
    table: [Option<OpPrior>; N_OPS],
}

/// `H_M(m)` in nats, zero for operation-free trees.
#[derive(Copy, Clone, Debug, PartialEq, PartialOrd)]
pub struct ModelComplexity(pub f64);

impl ModelComplexity {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    ops: BTreeMap<String, OpPrior>,
}

impl PriorConfig {
    /// Uniform `α = 3.0`, `β = 0.1` for every vocabulary operation.
    pub fn default_for(vocab: &OpVocabulary) -> Self {
        Self::uniform(vocab, DEFAULT_ALPHA, DEFAULT_BETA).expect("defaults are valid")
    }

    pub fn uniform(vocab: &OpVocabulary, alpha: f64, beta: f64) -> Result<Self> {
        let entries = vocab
            .ops()
            .iter()
            .map(|&op| (op, OpPrior { alpha, beta }))
            .collect::<Vec<_>>();
        Self::from_entries(vocab, entries)
    }

    pub fn from_entries(
        vocab: &OpVocabulary,
        entries: impl IntoIterator<Item = (Op, OpPrior)>,
    ) -> Result<Self> {
        let mut table = [None; N_OPS];
        for (op, p) in entries {
            if !(p.alpha.is_finite() && p.beta.is_finite()) {
                return Err(Error::Validation(format!(
                    "prior for `{op}` has a non-finite hyperparameter"
                )));
            }
            if p.alpha < 0.0 || p.beta < 0.0 {
                return Err(Error::Validation(format!(
                    "prior for `{op}` has a negative hyperparameter (alpha={}, beta={})",
                    p.alpha, p.beta
                )));
            }
            if p.alpha + p.beta <= 0.0 {
                return Err(Error::Validation(format!(
                    "prior for `{op}` needs alpha + beta > 0"
                )));
            }
            table[op.index()] = Some(p);
        }
        for op in vocab.ops() {
            if table[op.index()].is_none() {
                return Err(Error::Validation(format!(
                    "prior has no entry for vocabulary operation `{op}`"
                )));
            }
        }
        Ok(Self { table })
    }

    /// Parses the JSON prior format `{"ops": {"+": {"alpha": .., "beta": ..}, ..}}`.
    pub fn from_json_str(text: &str, vocab: &OpVocabulary) -> Result<Self> {
        let file: PriorFile = serde_json::from_str(text)?;
        let entries = file
            .ops
            .into_iter()
            .map(|(name, p)| {
                Op::from_name(&name)
                    .map(|op| (op, p))
                    .ok_or_else(|| Error::Validation(format!("unknown operation `{name}` in prior")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(vocab, entries)
    }

    pub fn load(path: &Path, vocab: &OpVocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, vocab)
    }

    pub fn to_json_string(&self) -> String {
        let ops = self
            .entries()
            .map(|(op, p)| (op.name().to_string(), p))
            .collect();
        serde_json::to_string_pretty(&PriorFile { ops }).expect("serializable")
    }

    pub fn get(&self, op: Op) -> Option<OpPrior> {
        self.table[op.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (Op, OpPrior)> + '_ {
        crate::exprtree::CATALOG
            .iter()
            .filter_map(|&op| self.table[op.index()].map(|p| (op, p)))
    }

    /// Complexity from dense operation counts. Operations without an entry
    /// are a configuration error.
    pub fn complexity_from_counts(&self, counts: &[u32; N_OPS]) -> Result<f64> {
        let mut h = 0.0;
        for (i, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p = self.table[i].ok_or_else(|| {
                Error::Validation(format!(
                    "prior has no entry for operation `{}`",
                    crate::exprtree::CATALOG[i]
                ))
            })?;
            let n = n as f64;
            h += p.alpha * n + p.beta * n * n;
        }
        Ok(h)
    }
}

/// `H_M(m) = Σ_o (α_o n_o + β_o n_o²)`.
pub fn model_complexity(tree: &ExprTree, cfg: &PriorConfig) -> Result<ModelComplexity> {
    cfg.complexity_from_counts(&tree.op_counts_dense())
        .map(ModelComplexity)
}

/// The operation-free models: the constant `_c0` and each bare variable.
pub fn trivial_models(dim: usize) -> Vec<ExprTree> {
    std::iter::once(ExprTree::constant_model())
        .chain((1..=dim).map(|j| ExprTree::leaf(Node::Var(j as u16))))
        .collect()
}
