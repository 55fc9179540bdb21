//! Gradient-boosted decision trees with logistic loss: binary, one-vs-rest
//! multi-class, independent multi-label, and grid-searched configurations.

mod boost;
mod grid;
mod multi;
mod tree;

pub use boost::{
    balanced_weights, fit_boosted_binary, logistic_loss, sigmoid, weighted_logistic_loss,
    BoostedEnsemble, GbdtConfig,
};
pub use grid::{grid_search, inner_split_indices, GbdtGrid, GridRow};
pub use multi::{fit_combined_binary, fit_multilabel, fit_one_vs_rest, MultiLabel, OneVsRest};
pub use tree::{best_split, midpoint, split_gain, Columns, SplitChoice, Tree, TreeNode, MIN_GAIN};
