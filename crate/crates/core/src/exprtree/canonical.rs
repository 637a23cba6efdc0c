//! Canonical identity of model structures.
//!
//! Two trees are the same model when they differ only by parameter-slot
//! numbering or by the argument order of `+` and `*`. No other algebra is
//! applied: `(x1 - x1)` stays distinct from `0`.

use std::fmt;

use super::ops::Op;
use super::parse::to_text;
use super::tree::{ExprTree, Node};

/// 64-bit structural hash identifying a canonical model.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelKey(pub u64);

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[inline]
pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn combine(seed: u64, x: u64) -> u64 {
    mix(seed
        ^ x.wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(seed << 6)
            .wrapping_add(seed >> 2))
}

#[inline]
pub(crate) fn leaf_hash(node: &Node) -> u64 {
    match *node {
        Node::Var(j) => mix(0x1000 + j as u64),
        Node::Param(_) => mix(0x2000),
        Node::Const(v) => combine(mix(0x3000), v.to_bits()),
        Node::Op(_) => unreachable!("leaf_hash on operation"),
    }
}

#[inline]
pub(crate) fn unary_hash(op: Op, a: u64) -> u64 {
    combine(mix(0x4000 + op.index() as u64), a)
}

#[inline]
pub(crate) fn binary_hash(op: Op, a: u64, b: u64) -> u64 {
    let (a, b) = if op.is_commutative() && b < a { (b, a) } else { (a, b) };
    combine(combine(mix(0x5000 + op.index() as u64), a), b)
}

/// Per-node subtree hashes with parameters treated as anonymous.
pub(crate) fn subtree_hashes(nodes: &[Node]) -> Vec<u64> {
    let mut out = vec![0u64; nodes.len()];
    let mut stack: Vec<u64> = Vec::with_capacity(nodes.len());
    for i in (0..nodes.len()).rev() {
        let h = match nodes[i] {
            Node::Op(op) if op.arity() == 1 => {
                let a = stack.pop().expect("well-formed tree");
                unary_hash(op, a)
            }
            Node::Op(op) => {
                let a = stack.pop().expect("well-formed tree");
                let b = stack.pop().expect("well-formed tree");
                binary_hash(op, a, b)
            }
            ref leaf => leaf_hash(leaf),
        };
        out[i] = h;
        stack.push(h);
    }
    out
}

/// Key of the canonical model this tree belongs to.
pub fn model_key(tree: &ExprTree) -> ModelKey {
    if tree.has_shared_slots() {
        // Sharing patterns are part of identity; hash the relabelled text.
        let text = canonical_key(tree);
        let h = text
            .bytes()
            .fold(mix(0x6000), |acc, b| combine(acc, b as u64));
        ModelKey(h)
    } else {
        ModelKey(subtree_hashes(tree.nodes())[0])
    }
}

/// Text of the subtree with commutative arguments sorted and parameters
/// anonymous. Returns the text and the end index of the subtree.
fn anon_text(nodes: &[Node], i: usize) -> (String, usize) {
    match nodes[i] {
        Node::Var(j) => (format!("x{j}"), i + 1),
        Node::Param(_) => ("_c".to_string(), i + 1),
        Node::Const(v) => (format!("{v:?}"), i + 1),
        Node::Op(op) if op.arity() == 1 => {
            let (a, next) = anon_text(nodes, i + 1);
            (format!("{}({a})", op.name()), next)
        }
        Node::Op(op) => {
            let (mut a, mid) = anon_text(nodes, i + 1);
            let (mut b, next) = anon_text(nodes, mid);
            if op.is_commutative() && b < a {
                std::mem::swap(&mut a, &mut b);
            }
            (format!("({a} {} {b})", op.name()), next)
        }
    }
}

/// Writes the subtree at `i` with commutative arguments in canonical order.
/// Arguments whose anonymous texts tie are swapped when the corresponding
/// bit of `tie_mask` is set; `ties` counts tie nodes seen so far.
fn ordered(nodes: &[Node], i: usize, tie_mask: u64, ties: &mut u32, out: &mut Vec<Node>) -> usize {
    match nodes[i] {
        Node::Op(op) if op.arity() == 2 => {
            let left = i + 1;
            let right = super::tree::subtree_end(nodes, left);
            out.push(Node::Op(op));
            let swap = if op.is_commutative() {
                let a = anon_text(nodes, left).0;
                let b = anon_text(nodes, right).0;
                if a == b {
                    let bit = *ties;
                    *ties += 1;
                    bit < 64 && tie_mask & (1 << bit) != 0
                } else {
                    b < a
                }
            } else {
                false
            };
            if swap {
                let end = ordered(nodes, right, tie_mask, ties, out);
                ordered(nodes, left, tie_mask, ties, out);
                end
            } else {
                let mid = ordered(nodes, left, tie_mask, ties, out);
                ordered(nodes, mid, tie_mask, ties, out)
            }
        }
        Node::Op(op) => {
            out.push(Node::Op(op));
            ordered(nodes, i + 1, tie_mask, ties, out)
        }
        leaf => {
            out.push(leaf);
            i + 1
        }
    }
}

/// Tie nodes beyond this count are ordered greedily.
const MAX_TIE_SEARCH: u32 = 12;

/// The representative tree of this model: commutative arguments sorted and
/// parameter slots renumbered in order of appearance.
///
/// When slots are shared, argument pairs that differ only by slot labels are
/// resolved by taking the smallest relabelled text over all swap choices.
pub fn canonical_form(tree: &ExprTree) -> ExprTree {
    canonical_form_with_origin(tree).0
}

/// The canonical tree plus, for each of its slots, the slot of `tree` it
/// came from.
fn canonical_form_with_origin(tree: &ExprTree) -> (ExprTree, Vec<u16>) {
    let build = |mask: u64| {
        let mut nodes = Vec::with_capacity(tree.len());
        let mut ties = 0;
        ordered(tree.nodes(), 0, mask, &mut ties, &mut nodes);
        (ExprTree::from_preorder_renumbered(nodes), ties)
    };
    let (first, ties) = build(0);
    if !tree.has_shared_slots() || ties == 0 {
        return first;
    }
    let mut best_text = to_text(&first.0);
    let mut best = first;
    for mask in 1..(1u64 << ties.min(MAX_TIE_SEARCH)) {
        let (candidate, _) = build(mask);
        let text = to_text(&candidate.0);
        if text < best_text {
            best_text = text;
            best = candidate;
        }
    }
    best
}

/// Slot order shared by every tree with the same [`model_key`]: entry `i`
/// is the slot of `tree` that plays the role of parameter `i` of the
/// model. Parameter vectors stored in this order can be exchanged between
/// equivalent trees.
pub fn slot_order(tree: &ExprTree) -> Vec<u16> {
    fitting_form(tree).1
}

/// A representative of the model whose slot `i` is `slot_order(tree)[i]`,
/// together with that order. Equivalent trees get the same representative.
pub(crate) fn fitting_form(tree: &ExprTree) -> (ExprTree, Vec<u16>) {
    if tree.has_shared_slots() {
        return canonical_form_with_origin(tree);
    }
    // Visit commutative arguments in hash order, as the key does. Equal
    // hashes mean identical anonymous subtrees, so either order is valid.
    fn walk(nodes: &[Node], hashes: &[u64], i: usize, out: &mut Vec<Node>) -> usize {
        out.push(nodes[i]);
        match nodes[i] {
            Node::Op(op) if op.arity() == 2 => {
                let left = i + 1;
                let right = super::tree::subtree_end(nodes, left);
                if op.is_commutative() && hashes[right] < hashes[left] {
                    let end = walk(nodes, hashes, right, out);
                    walk(nodes, hashes, left, out);
                    end
                } else {
                    let mid = walk(nodes, hashes, left, out);
                    walk(nodes, hashes, mid, out)
                }
            }
            Node::Op(_) => walk(nodes, hashes, i + 1, out),
            _ => i + 1,
        }
    }
    let hashes = subtree_hashes(tree.nodes());
    let mut out = Vec::with_capacity(tree.len());
    walk(tree.nodes(), &hashes, 0, &mut out);
    ExprTree::from_preorder_renumbered(out)
}

/// Deterministic text key invariant under slot renumbering and `+`/`*`
/// argument order.
pub fn canonical_key(tree: &ExprTree) -> String {
    to_text(&canonical_form(tree))
}
