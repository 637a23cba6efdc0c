//! Proposal moves over expression trees and their exact proposal
//! probabilities.
//!
//! Three families are chosen with probability 1/3 each:
//!
//! * **NodeChange**: pick a node uniformly among all valid (node, new label)
//!   pairs; operations are relabelled within their arity, leaves among the
//!   variables and a fresh parameter.
//! * **TermAddition / TermRemoval** (probability 1/2 each): wrap the root as
//!   `(root ⊕ leaf)`, or undo such a wrap.
//! * **BlockReplacement**: replace a subtree by an elementary block (a leaf,
//!   `u(leaf)`, or `(leaf ⊕ leaf)`).
//!
//! Within a family the path is uniform over the paths whose result respects
//! the size cap. Because several paths, possibly from different families,
//! can lead to the same canonical model, `q(m → m′)` is obtained by counting
//! every path from `m` whose result hashes to `m′`.

use std::collections::HashMap;

use rand::Rng;

use crate::exprtree::{
    binary_hash, leaf_hash, mix, subtree_hashes, unary_hash, ExprTree, ModelKey, Node, Op,
    OpVocabulary, N_OPS,
};

const NONE: usize = usize::MAX;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    NodeChange,
    TermAddition,
    TermRemoval,
    BlockReplacement,
}

/// Structural summary of one tree used for proposal bookkeeping.
#[derive(Clone, Debug)]
pub struct TreeInfo {
    pub(crate) tree: ExprTree,
    end: Vec<usize>,
    parent: Vec<usize>,
    hash: Vec<u64>,
    /// Linear hash of the label multiset of each subtree.
    lsig: Vec<u64>,
    /// Label multiset of the whole tree.
    sig: Vec<i32>,
}

impl TreeInfo {
    pub fn key(&self) -> ModelKey {
        ModelKey(self.hash[0])
    }

    pub fn tree(&self) -> &ExprTree {
        &self.tree
    }

    fn len(&self) -> usize {
        self.tree.len()
    }

    fn size(&self, i: usize) -> usize {
        self.end[i] - i
    }

    /// Root hash after replacing the subtree at `v` by one hashing to `h`.
    fn rehash(&self, v: usize, mut h: u64) -> u64 {
        let nodes = self.tree.nodes();
        let mut cur = v;
        while self.parent[cur] != NONE {
            let p = self.parent[cur];
            h = match nodes[p] {
                Node::Op(op) if op.arity() == 1 => unary_hash(op, h),
                Node::Op(op) => {
                    let left = p + 1;
                    if cur == left {
                        binary_hash(op, h, self.hash[self.end[left]])
                    } else {
                        binary_hash(op, self.hash[left], h)
                    }
                }
                _ => unreachable!("leaf parent"),
            };
            cur = p;
        }
        h
    }
}

/// An elementary tree that block replacement can insert.
#[derive(Clone, Debug)]
struct Block {
    nodes: Vec<Node>,
    hash: u64,
    lsig: u64,
}

/// A generated proposal with its forward and backward probabilities.
#[derive(Clone, Debug)]
pub struct MoveProposal {
    pub kind: MoveKind,
    pub info: TreeInfo,
    pub q_forward: f64,
    pub q_backward: f64,
    /// For each parameter slot of the proposal, the slot it inherits from
    /// the current tree, if any.
    pub inherited: Vec<Option<usize>>,
}

impl MoveProposal {
    pub fn tree(&self) -> &ExprTree {
        &self.info.tree
    }

    /// `q(m′ → m) / q(m → m′)`.
    pub fn q_ratio(&self) -> f64 {
        self.q_backward / self.q_forward
    }
}

/// Path counts out of one tree, per family.
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct PathCounts {
    pub node_change: u64,
    pub term_addition: u64,
    pub term_removal: u64,
    pub block_replacement: u64,
}

impl PathCounts {
    /// Probability of a path set with these counts given the family totals.
    fn probability(&self, totals: &PathCounts) -> f64 {
        let frac = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        (frac(self.node_change, totals.node_change)
            + 0.5 * frac(self.term_addition, totals.term_addition)
            + 0.5 * frac(self.term_removal, totals.term_removal)
            + frac(self.block_replacement, totals.block_replacement))
            / 3.0
    }
}

/// The move set for one vocabulary, input dimension and size cap.
#[derive(Clone, Debug)]
pub struct MoveSpace {
    dim: usize,
    max_nodes: usize,
    unary: Vec<Op>,
    binary: Vec<Op>,
    /// Leaf labels in proposal order: `x1..xd`, then a parameter.
    leaves: Vec<Node>,
    /// Sorted by size ascending.
    blocks: Vec<Block>,
    /// `blocks_upto[s]` = number of blocks of size `<= s`.
    blocks_upto: [usize; MAX_BLOCK_SIZE + 1],
    blocks_by_sig: HashMap<u64, Vec<usize>>,
    label_weight: Vec<u64>,
}

/// Marker labels for freshly created parameter leaves; distinct from every
/// slot of a tree within the size cap.
const FRESH_BASE: u16 = u16::MAX;

/// Blocks are all trees of depth at most two (a leaf has depth zero), so
/// the largest is a binary node over two binary nodes.
const MAX_BLOCK_SIZE: usize = 7;

fn dedup(trees: Vec<Vec<Node>>) -> Vec<Vec<Node>> {
    let mut seen = std::collections::HashSet::new();
    trees
        .into_iter()
        .filter(|t| seen.insert(subtree_hashes(t)[0]))
        .collect()
}

impl MoveSpace {
    pub fn new(vocab: &OpVocabulary, dim: usize, max_nodes: usize) -> Self {
        assert!(dim >= 1, "input dimension must be at least 1");
        assert!(max_nodes >= 1);
        let unary: Vec<Op> = vocab.unary().collect();
        let binary: Vec<Op> = vocab.binary().collect();
        let leaves: Vec<Node> = (1..=dim)
            .map(|j| Node::Var(j as u16))
            .chain(std::iter::once(Node::Param(0)))
            .collect();
        let n_labels = N_OPS + dim + 2;
        let label_weight = (0..n_labels as u64)
            .map(|i| mix(0xb10c_0000 + i) | 1)
            .collect();
        let mut space = Self {
            dim,
            max_nodes,
            unary,
            binary,
            leaves,
            blocks: Vec::new(),
            blocks_upto: [0; MAX_BLOCK_SIZE + 1],
            blocks_by_sig: HashMap::new(),
            label_weight,
        };
        space.build_blocks();
        space
    }

    pub fn max_nodes(&self) -> usize {
        self.max_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Trees of depth at most one more than `inner`.
    fn grow(&self, inner: &[Vec<Node>]) -> Vec<Vec<Node>> {
        let mut out: Vec<Vec<Node>> = self.leaves.iter().map(|&l| vec![l]).collect();
        for &op in &self.unary {
            for a in inner {
                let mut t = vec![Node::Op(op)];
                t.extend_from_slice(a);
                out.push(t);
            }
        }
        for &op in &self.binary {
            for a in inner {
                for b in inner {
                    let mut t = vec![Node::Op(op)];
                    t.extend_from_slice(a);
                    t.extend_from_slice(b);
                    out.push(t);
                }
            }
        }
        out
    }

    fn build_blocks(&mut self) {
        let leaves: Vec<Vec<Node>> = self.leaves.iter().map(|&l| vec![l]).collect();
        let depth1 = dedup(self.grow(&leaves));
        let candidates = self.grow(&depth1);
        let mut seen = std::collections::HashSet::new();
        for nodes in candidates {
            let hash = subtree_hashes(&nodes)[0];
            if !seen.insert(hash) {
                continue;
            }
            let lsig = nodes.iter().fold(0u64, |acc, n| {
                acc.wrapping_add(self.label_weight[self.label(n)])
            });
            self.blocks.push(Block { nodes, hash, lsig });
        }
        self.blocks.sort_by_key(|b| b.nodes.len());
        for s in 0..=MAX_BLOCK_SIZE {
            self.blocks_upto[s] = self.blocks.iter().filter(|b| b.nodes.len() <= s).count();
        }
        for (i, b) in self.blocks.iter().enumerate() {
            self.blocks_by_sig.entry(b.lsig).or_default().push(i);
        }
    }

    #[inline]
    fn label(&self, node: &Node) -> usize {
        match *node {
            Node::Op(op) => op.index(),
            Node::Var(j) => N_OPS + j as usize - 1,
            Node::Param(_) => N_OPS + self.dim,
            Node::Const(_) => N_OPS + self.dim + 1,
        }
    }

    fn label_of_index(&self, idx: usize) -> Option<Node> {
        if idx < N_OPS {
            Some(Node::Op(crate::exprtree::CATALOG[idx]))
        } else if idx < N_OPS + self.dim {
            Some(Node::Var((idx - N_OPS + 1) as u16))
        } else if idx == N_OPS + self.dim {
            Some(Node::Param(0))
        } else {
            None
        }
    }

    pub fn analyze(&self, tree: ExprTree) -> TreeInfo {
        let nodes = tree.nodes();
        let n = nodes.len();
        let mut end = vec![0; n];
        let mut parent = vec![NONE; n];
        let mut lsig = vec![0u64; n];
        let hash = subtree_hashes(nodes);
        let mut stack: Vec<usize> = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let mut e = i + 1;
            let mut s = self.label_weight[self.label(&nodes[i])];
            for _ in 0..nodes[i].arity() {
                let c = stack.pop().expect("well-formed tree");
                parent[c] = i;
                e = end[c];
                s = s.wrapping_add(lsig[c]);
            }
            end[i] = e;
            lsig[i] = s;
            stack.push(i);
        }
        let mut sig = vec![0i32; self.label_weight.len()];
        for node in nodes {
            sig[self.label(node)] += 1;
        }
        TreeInfo {
            tree,
            end,
            parent,
            hash,
            lsig,
            sig,
        }
    }

    fn node_change_options(&self, node: &Node) -> usize {
        match node {
            Node::Op(op) if op.arity() == 1 => self.unary.len().saturating_sub(1),
            Node::Op(_) => self.binary.len().saturating_sub(1),
            Node::Const(_) => self.leaves.len(),
            _ => self.leaves.len() - 1,
        }
    }

    fn removal_positions(&self, info: &TreeInfo) -> Vec<(usize, usize)> {
        // (leaf child removed, child kept)
        let nodes = info.tree.nodes();
        let mut out = Vec::new();
        if let Node::Op(op) = nodes[0] {
            if op.arity() == 2 {
                let left = 1;
                let right = info.end[left];
                if nodes[right].is_leaf() {
                    out.push((right, left));
                }
                if op.is_commutative() && nodes[left].is_leaf() {
                    out.push((left, right));
                }
            }
        }
        out
    }

    fn block_limit(&self, info: &TreeInfo, i: usize) -> usize {
        // largest block size that keeps the tree within the cap
        let room = self.max_nodes + info.size(i);
        let limit = room.saturating_sub(info.len());
        self.blocks_upto[limit.min(MAX_BLOCK_SIZE)]
    }

    /// Number of valid paths of each family out of `info`.
    pub fn totals(&self, info: &TreeInfo) -> PathCounts {
        let nodes = info.tree.nodes();
        let node_change = nodes
            .iter()
            .map(|n| self.node_change_options(n) as u64)
            .sum();
        let term_addition = if info.len() + 2 <= self.max_nodes {
            (self.binary.len() * self.leaves.len()) as u64
        } else {
            0
        };
        let term_removal = self.removal_positions(info).len() as u64;
        let block_replacement = (0..info.len())
            .map(|i| self.block_limit(info, i) as u64)
            .sum();
        PathCounts {
            node_change,
            term_addition,
            term_removal,
            block_replacement,
        }
    }

    /// Paths of each family from `from` whose result is the model `to`.
    pub fn paths_between(&self, from: &TreeInfo, to: &TreeInfo) -> PathCounts {
        let target = to.hash[0];
        let n = from.len();
        let nodes = from.tree.nodes();
        let mut counts = PathCounts::default();

        if to.len() == n {
            // node change: label multisets differ by one relabelling
            let mut minus = None;
            let mut plus = None;
            let mut ok = true;
            for (l, (a, b)) in from.sig.iter().zip(&to.sig).enumerate() {
                match b - a {
                    0 => {}
                    -1 if minus.is_none() => minus = Some(l),
                    1 if plus.is_none() => plus = Some(l),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if let (true, Some(a), Some(b)) = (ok, minus, plus) {
                if let Some(new_label) = self.label_of_index(b) {
                    for i in 0..n {
                        if self.label(&nodes[i]) != a {
                            continue;
                        }
                        if !self.relabel_allowed(&nodes[i], &new_label) {
                            continue;
                        }
                        let h = match (nodes[i], new_label) {
                            (Node::Op(_), Node::Op(op)) if op.arity() == 1 => {
                                unary_hash(op, from.hash[i + 1])
                            }
                            (Node::Op(_), Node::Op(op)) => {
                                binary_hash(op, from.hash[i + 1], from.hash[from.end[i + 1]])
                            }
                            (_, leaf) => leaf_hash(&leaf),
                        };
                        if from.rehash(i, h) == target {
                            counts.node_change += 1;
                        }
                    }
                }
            }
        }

        if to.len() == n + 2 && n + 2 <= self.max_nodes {
            for &op in &self.binary {
                for leaf in &self.leaves {
                    if binary_hash(op, from.hash[0], leaf_hash(leaf)) == target {
                        counts.term_addition += 1;
                    }
                }
            }
        }

        if to.len() + 2 == n {
            for (_, keep) in self.removal_positions(from) {
                if from.hash[keep] == target {
                    counts.term_removal += 1;
                }
            }
        }

        if to.len() <= self.max_nodes {
            let from_sig = from.lsig[0];
            let to_sig = to.lsig[0];
            for i in 0..n {
                let size = to.len() + from.size(i);
                if size <= n || size - n > MAX_BLOCK_SIZE {
                    continue;
                }
                let need = to_sig.wrapping_sub(from_sig).wrapping_add(from.lsig[i]);
                if let Some(ids) = self.blocks_by_sig.get(&need) {
                    for &b in ids {
                        let block = &self.blocks[b];
                        if block.nodes.len() == size - n && from.rehash(i, block.hash) == target {
                            counts.block_replacement += 1;
                        }
                    }
                }
            }
        }
        counts
    }

    fn relabel_allowed(&self, old: &Node, new: &Node) -> bool {
        match (old, new) {
            (Node::Op(a), Node::Op(b)) => {
                a != b && a.arity() == b.arity() && self.has_op(*b)
            }
            (Node::Op(_), _) | (_, Node::Op(_)) => false,
            (Node::Var(a), Node::Var(b)) => a != b,
            (Node::Param(_), Node::Param(_)) => false,
            _ => true,
        }
    }

    fn has_op(&self, op: Op) -> bool {
        if op.arity() == 1 {
            self.unary.contains(&op)
        } else {
            self.binary.contains(&op)
        }
    }

    /// `q(from → to)` summed over every path of every family.
    pub fn proposal_probability(&self, from: &TreeInfo, to: &TreeInfo) -> f64 {
        self.paths_between(from, to).probability(&self.totals(from))
    }

    /// Draws a proposal from `current`. Returns `None` when the chosen
    /// family has no valid path (a null move, counted as a rejection).
    pub fn propose<R: Rng + ?Sized>(&self, current: &TreeInfo, rng: &mut R) -> Option<MoveProposal> {
        let totals = self.totals(current);
        let family = rng.random_range(0..3u32);
        let kind = match family {
            0 => MoveKind::NodeChange,
            1 => {
                if rng.random_bool(0.5) {
                    MoveKind::TermAddition
                } else {
                    MoveKind::TermRemoval
                }
            }
            _ => MoveKind::BlockReplacement,
        };
        let total = match kind {
            MoveKind::NodeChange => totals.node_change,
            MoveKind::TermAddition => totals.term_addition,
            MoveKind::TermRemoval => totals.term_removal,
            MoveKind::BlockReplacement => totals.block_replacement,
        };
        if total == 0 {
            return None;
        }
        let pick = rng.random_range(0..total) as usize;
        let nodes = self.build_path(current, kind, pick);
        Some(self.finish(current, kind, nodes, &totals))
    }

    /// Builds the proposal reached by the `pick`-th path of `kind`.
    fn build_path(&self, current: &TreeInfo, kind: MoveKind, mut pick: usize) -> Vec<Node> {
        let nodes = current.tree.nodes();
        let mut fresh = FRESH_BASE;
        let mut fresh_param = || {
            let p = Node::Param(fresh);
            fresh -= 1;
            p
        };
        match kind {
            MoveKind::NodeChange => {
                for (i, node) in nodes.iter().enumerate() {
                    let options = self.node_change_options(node);
                    if pick >= options {
                        pick -= options;
                        continue;
                    }
                    let new = match *node {
                        Node::Op(op) => {
                            let pool = if op.arity() == 1 { &self.unary } else { &self.binary };
                            Node::Op(*pool.iter().filter(|&&o| o != op).nth(pick).expect("in range"))
                        }
                        _ => {
                            let current_label = self.label(node);
                            let leaf = self
                                .leaves
                                .iter()
                                .filter(|l| self.label(l) != current_label)
                                .nth(pick)
                                .expect("in range");
                            match leaf {
                                Node::Param(_) => fresh_param(),
                                other => *other,
                            }
                        }
                    };
                    let mut out = nodes.to_vec();
                    out[i] = new;
                    return out;
                }
                unreachable!("pick within node-change total")
            }
            MoveKind::TermAddition => {
                let op = self.binary[pick / self.leaves.len()];
                let leaf = match self.leaves[pick % self.leaves.len()] {
                    Node::Param(_) => fresh_param(),
                    other => other,
                };
                let mut out = Vec::with_capacity(nodes.len() + 2);
                out.push(Node::Op(op));
                out.extend_from_slice(nodes);
                out.push(leaf);
                out
            }
            MoveKind::TermRemoval => {
                let (_, keep) = self.removal_positions(current)[pick];
                nodes[keep..current.end[keep]].to_vec()
            }
            MoveKind::BlockReplacement => {
                for i in 0..nodes.len() {
                    let options = self.block_limit(current, i);
                    if pick >= options {
                        pick -= options;
                        continue;
                    }
                    let block = &self.blocks[pick];
                    let mut out = Vec::with_capacity(nodes.len() + MAX_BLOCK_SIZE);
                    out.extend_from_slice(&nodes[..i]);
                    for b in &block.nodes {
                        out.push(match b {
                            Node::Param(_) => fresh_param(),
                            other => *other,
                        });
                    }
                    out.extend_from_slice(&nodes[current.end[i]..]);
                    return out;
                }
                unreachable!("pick within block-replacement total")
            }
        }
    }

    fn finish(
        &self,
        current: &TreeInfo,
        kind: MoveKind,
        nodes: Vec<Node>,
        totals: &PathCounts,
    ) -> MoveProposal {
        let k_old = current.tree.param_count();
        let (tree, origin) = ExprTree::from_preorder_renumbered(nodes);
        let inherited = origin
            .into_iter()
            .map(|old| ((old as usize) < k_old).then_some(old as usize))
            .collect();
        let info = self.analyze(tree);
        let q_forward = self.paths_between(current, &info).probability(totals);
        let q_backward = self.proposal_probability(&info, current);
        debug_assert!(q_forward > 0.0, "generated path must be counted");
        MoveProposal {
            kind,
            info,
            q_forward,
            q_backward,
            inherited,
        }
    }

    /// Every distinct model reachable in one move, with `q(from → model)`.
    /// Intended for tests and diagnostics on small trees.
    pub fn neighbours(&self, from: &TreeInfo) -> Vec<(TreeInfo, f64)> {
        let totals = self.totals(from);
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (kind, total) in [
            (MoveKind::NodeChange, totals.node_change),
            (MoveKind::TermAddition, totals.term_addition),
            (MoveKind::TermRemoval, totals.term_removal),
            (MoveKind::BlockReplacement, totals.block_replacement),
        ] {
            for pick in 0..total as usize {
                let nodes = self.build_path(from, kind, pick);
                let (tree, _) = ExprTree::from_preorder_renumbered(nodes);
                let info = self.analyze(tree);
                if seen.insert(info.hash[0]) {
                    let q = self.proposal_probability(from, &info);
                    out.push((info, q));
                }
            }
        }
        out
    }
}
