//! Mining the offline optimum: turn an optimum trace into a case table
//! and induce a decision-tree classifier from it.

mod cases;
mod tree;

pub use cases::{extract_cases, Case, CaseTable};
pub use tree::{build_tree, BuildParams, DecisionTree};
