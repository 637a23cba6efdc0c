use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exprtree::{canonical_form, subtree_hashes, to_text, ExprTree, Node, OpVocabulary};
use crate::inference::{Dataset, DescriptionLength, FitCache, FitOptions, Scorer};
use crate::prior::PriorConfig;

/// Default ceiling on the number of enumerated structures.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 100_000;

/// Every canonical structure with at most `max_nodes` nodes over `vocab`
/// and `x1..x_dim`. Each parameter leaf is its own slot. Fails when the
/// space holds more than `limit` structures.
pub fn enumerate_structures(
    vocab: &OpVocabulary,
    dim: usize,
    max_nodes: usize,
    limit: usize,
) -> Result<Vec<ExprTree>> {
    if dim == 0 || max_nodes == 0 {
        return Err(Error::Validation(
            "enumeration needs dim >= 1 and max_nodes >= 1".into(),
        ));
    }
    let unary: Vec<_> = vocab.unary().collect();
    let binary: Vec<_> = vocab.binary().collect();
    let mut levels: Vec<Vec<Vec<Node>>> = vec![Vec::new(); max_nodes + 1];
    let mut total = 0usize;
    let too_many = || {
        Error::Validation(format!(
            "model space exceeds {limit} structures; lower max_nodes or shrink the vocabulary"
        ))
    };

    for size in 1..=max_nodes {
        let mut seen = HashSet::new();
        let mut level = Vec::new();
        let mut push = |nodes: Vec<Node>, level: &mut Vec<Vec<Node>>| -> Result<()> {
            if seen.insert(subtree_hashes(&nodes)[0]) {
                total += 1;
                if total > limit {
                    return Err(too_many());
                }
                level.push(nodes);
            }
            Ok(())
        };
        if size == 1 {
            for j in 1..=dim {
                push(vec![Node::Var(j as u16)], &mut level)?;
            }
            push(vec![Node::Param(0)], &mut level)?;
        } else {
            for &op in &unary {
                for child in &levels[size - 1] {
                    let mut nodes = Vec::with_capacity(size);
                    nodes.push(Node::Op(op));
                    nodes.extend_from_slice(child);
                    push(nodes, &mut level)?;
                }
            }
            for &op in &binary {
                for left in 1..size - 1 {
                    let right = size - 1 - left;
                    for a in &levels[left] {
                        for b in &levels[right] {
                            let mut nodes = Vec::with_capacity(size);
                            nodes.push(Node::Op(op));
                            nodes.extend_from_slice(a);
                            nodes.extend_from_slice(b);
                            push(nodes, &mut level)?;
                        }
                    }
                }
            }
        }
        levels[size] = level;
    }

    Ok(levels
        .into_iter()
        .flatten()
        .map(|mut nodes| {
            let mut next = 0u16;
            for n in nodes.iter_mut() {
                if let Node::Param(c) = n {
                    *c = next;
                    next += 1;
                }
            }
            ExprTree::from_preorder(nodes, dim).expect("generated tree is valid")
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct EnumeratedModel {
    pub model: String,
    #[serde(skip)]
    pub tree: ExprTree,
    pub dl: DescriptionLength,
    pub theta: Vec<f64>,
    /// `exp(-H)` normalised over the enumerated space.
    pub posterior: f64,
}

impl EnumeratedModel {
    pub fn h(&self) -> f64 {
        self.dl.total
    }
}

/// Fits every structure in the bounded space and returns them sorted by
/// description length with normalised posteriors.
pub fn enumerate_models(
    data: &Dataset,
    vocab: &OpVocabulary,
    prior: &PriorConfig,
    fit: &FitOptions,
    max_nodes: usize,
    limit: usize,
    seed: u64,
) -> Result<Vec<EnumeratedModel>> {
    let trees = enumerate_structures(vocab, data.dim(), max_nodes, limit)?;
    let cache = FitCache::new();
    Scorer::new(data, prior, vocab, fit, &cache, seed)?;
    let mut models: Vec<EnumeratedModel> = trees
        .into_par_iter()
        .map_init(
            || Scorer::new(data, prior, vocab, fit, &cache, seed).expect("validated"),
            |scorer, tree| {
                // θ is reported against the canonical text
                let tree = canonical_form(&tree);
                let scored = scorer.score(&tree);
                EnumeratedModel {
                    model: to_text(&tree),
                    tree,
                    dl: scored.dl,
                    theta: scored.fit.theta.clone(),
                    posterior: 0.0,
                }
            },
        )
        .collect();
    models.sort_by(|a, b| a.h().total_cmp(&b.h()).then_with(|| a.model.cmp(&b.model)));
    let h_min = models.first().map_or(0.0, EnumeratedModel::h);
    let z: f64 = models.iter().map(|m| (h_min - m.h()).exp()).sum();
    for m in &mut models {
        m.posterior = (h_min - m.h()).exp() / z;
    }
    Ok(models)
}
