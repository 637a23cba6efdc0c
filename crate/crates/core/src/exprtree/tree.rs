use std::collections::BTreeMap;

use super::ops::{Op, OpVocabulary, N_OPS};
use crate::error::{Error, Result};

/// Default hard cap on tree size.
pub const DEFAULT_MAX_NODES: usize = 50;

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Node {
    Op(Op),
    /// 1-based input variable index.
    Var(u16),
    /// 0-based parameter slot. Slots may be shared between leaves.
    Param(u16),
    /// Anonymous fixed constant; never counted as a parameter.
    Const(f64),
}

impl Node {
    #[inline]
    pub fn arity(&self) -> usize {
        match self {
            Node::Op(op) => op.arity(),
            _ => 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, Node::Op(_))
    }
}

/// A closed-form model stored as a preorder node sequence.
///
/// The subtree rooted at index `i` occupies the contiguous range
/// `i..subtree_end(i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
    n_params: usize,
}

impl ExprTree {
    /// Builds a tree from preorder nodes, checking arity structure,
    /// variable bounds (`1..=dim`) and that parameter slots are exactly
    /// `0..k`.
    pub fn from_preorder(nodes: Vec<Node>, dim: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("empty expression tree".into()));
        }
        let mut need = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            if need == 0 {
                return Err(Error::Validation(format!(
                    "trailing nodes after complete tree at index {i}"
                )));
            }
            need = need - 1 + node.arity();
            match *node {
                Node::Var(j) if j == 0 || j as usize > dim => {
                    return Err(Error::Validation(format!(
                        "variable x{j} out of range for dimension {dim}"
                    )))
                }
                Node::Const(c) if !c.is_finite() => {
                    return Err(Error::Validation("non-finite literal constant".into()))
                }
                _ => {}
            }
        }
        if need != 0 {
            return Err(Error::Validation("incomplete expression tree".into()));
        }
        let mut used = Vec::<bool>::new();
        for node in &nodes {
            if let Node::Param(c) = *node {
                let c = c as usize;
                if c >= used.len() {
                    used.resize(c + 1, false);
                }
                used[c] = true;
            }
        }
        if let Some(gap) = used.iter().position(|u| !u) {
            return Err(Error::Validation(format!(
                "parameter slots must be contiguous from _c0; _c{gap} is missing"
            )));
        }
        Ok(Self {
            n_params: used.len(),
            nodes,
        })
    }

    /// Builds a tree whose parameter slots are relabelled `0..k` in order of
    /// first appearance. Slots sharing a label keep sharing it. Returns the
    /// old label of each new slot.
    pub(crate) fn from_preorder_renumbered(mut nodes: Vec<Node>) -> (Self, Vec<u16>) {
        let mut map: Vec<(u16, u16)> = Vec::new();
        let mut origin = Vec::new();
        for node in nodes.iter_mut() {
            if let Node::Param(c) = node {
                let new = match map.iter().find(|(old, _)| old == c) {
                    Some(&(_, new)) => new,
                    None => {
                        let new = map.len() as u16;
                        map.push((*c, new));
                        origin.push(*c);
                        new
                    }
                };
                *c = new;
            }
        }
        debug_assert!(Self::well_formed(&nodes));
        (
            Self {
                n_params: origin.len(),
                nodes,
            },
            origin,
        )
    }

    fn well_formed(nodes: &[Node]) -> bool {
        let mut need = 1usize;
        for node in nodes {
            if need == 0 {
                return false;
            }
            need = need - 1 + node.arity();
        }
        need == 0
    }

    pub fn leaf(node: Node) -> Self {
        assert!(node.is_leaf());
        let n_params = usize::from(matches!(node, Node::Param(_)));
        let node = match node {
            Node::Param(_) => Node::Param(0),
            other => other,
        };
        Self {
            nodes: vec![node],
            n_params,
        }
    }

    pub fn constant_model() -> Self {
        Self::leaf(Node::Param(0))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of distinct parameter slots `k`.
    pub fn param_count(&self) -> usize {
        self.n_params
    }

    /// Largest variable index used (0 when the tree uses no variable).
    pub fn max_var(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Var(j) => Some(*j as usize),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.nodes, start)
    }

    pub fn subtree(&self, start: usize) -> &[Node] {
        &self.nodes[start..self.subtree_end(start)]
    }

    /// Counts of each operation in the tree, dense over the catalog.
    pub fn op_counts_dense(&self) -> [u32; N_OPS] {
        let mut counts = [0u32; N_OPS];
        for node in &self.nodes {
            if let Node::Op(op) = node {
                counts[op.index()] += 1;
            }
        }
        counts
    }

    /// Counts of every vocabulary operation; absent operations map to 0.
    /// Operations outside the vocabulary that occur in the tree are also
    /// reported.
    pub fn count_ops(&self, vocab: &OpVocabulary) -> BTreeMap<Op, usize> {
        let mut out: BTreeMap<Op, usize> = vocab.ops().iter().map(|&op| (op, 0)).collect();
        for node in &self.nodes {
            if let Node::Op(op) = node {
                *out.entry(*op).or_insert(0) += 1;
            }
        }
        out
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn uses_only(&self, vocab: &OpVocabulary) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Op(op) => vocab.contains(*op),
            _ => true,
        })
    }

    /// Whether any parameter slot appears at more than one leaf.
    pub fn has_shared_slots(&self) -> bool {
        let leaves = self
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Param(_)))
            .count();
        leaves != self.n_params
    }

    /// Children start indices of the node at `i`.
    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let arity = self.nodes[i].arity();
        let mut next = i + 1;
        (0..arity).map(move |_| {
            let c = next;
            next = subtree_end(&self.nodes, c);
            c
        })
    }
}

pub(crate) fn subtree_end(nodes: &[Node], start: usize) -> usize {
    let mut need = 1usize;
    let mut i = start;
    while need > 0 {
        need = need - 1 + nodes[i].arity();
        i += 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_slot_gaps_and_bad_vars() {
        let t = ExprTree::from_preorder(vec![Node::Op(Op::Add), Node::Param(1), Node::Var(1)], 1);
        assert!(t.is_err());
        let t = ExprTree::from_preorder(vec![Node::Var(3)], 2);
        assert!(t.is_err());
        let t = ExprTree::from_preorder(vec![Node::Op(Op::Add), Node::Var(1)], 1);
        assert!(t.is_err());
        let t = ExprTree::from_preorder(vec![Node::Var(1), Node::Var(1)], 1);
        assert!(t.is_err());
    }

    #[test]
    fn renumbering_keeps_sharing() {
        let (t, origin) = ExprTree::from_preorder_renumbered(vec![
            Node::Op(Op::Add),
            Node::Param(7),
            Node::Op(Op::Mul),
            Node::Param(3),
            Node::Param(7),
        ]);
        assert_eq!(t.param_count(), 2);
        assert_eq!(origin, vec![7, 3]);
        assert_eq!(
            t.nodes(),
            &[
                Node::Op(Op::Add),
                Node::Param(0),
                Node::Op(Op::Mul),
                Node::Param(1),
                Node::Param(0)
            ]
        );
        assert!(t.has_shared_slots());
    }

    #[test]
    fn subtree_ranges() {
        let t = ExprTree::from_preorder(
            vec![
                Node::Op(Op::Add),
                Node::Op(Op::Mul),
                Node::Param(0),
                Node::Var(1),
                Node::Op(Op::Exp),
                Node::Var(1),
            ],
            1,
        )
        .unwrap();
        assert_eq!(t.subtree_end(0), 6);
        assert_eq!(t.subtree_end(1), 4);
        assert_eq!(t.subtree_end(4), 6);
        assert_eq!(t.children(0).collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(t.internal_count(), 3);
    }
}
