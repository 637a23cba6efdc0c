//! Closed-form models as expression trees: representation, evaluation, text
//! form and canonical identity.

mod canonical;
mod eval;
mod ops;
mod parse;
mod tree;

pub use canonical::{canonical_form, canonical_key, model_key, slot_order, ModelKey};
pub(crate) use canonical::{binary_hash, fitting_form, leaf_hash, mix, subtree_hashes, unary_hash};
pub use eval::{evaluate, BatchEvaluator};
pub use ops::{Op, OpVocabulary, CATALOG, N_OPS};
pub use parse::{parse_text, to_text};
pub use tree::{ExprTree, Node, DEFAULT_MAX_NODES};
