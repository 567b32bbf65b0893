//! Decision-tree extraction from feedforward and convolutional networks.
//!
//! Networks are held in a layered feedforward IR ([`model`]); convolution,
//! pooling and flatten layers are lowered into it ([`lowering`]). For each
//! input, [`analysis`] computes activations and relevant connections,
//! [`derivation`] turns them into a hierarchical decision path, and
//! [`merging`] combines many paths into one prefix tree that [`export`]
//! renders as DOT or JSON.

pub mod analysis;
pub mod demo;
pub mod derivation;
pub mod error;
pub mod export;
pub mod lowering;
pub mod merging;
pub mod model;
pub mod pipeline;

pub use analysis::{forward, propagate_bounds, prune_static, relevance, ActivationTrace, Interval, IntervalBounds, RelevanceCriterion, RelevanceGraph, Scope};
pub use derivation::{bind_symbols, derive_path, edge_input_configs, symbol_for_input, ConfigSet, DecisionPath, PathEdge, SymbolTuple};
pub use error::{Error, Result};
pub use export::{to_dot, tree_from_json, tree_to_json, ExportOptions, Format, PathsDocument};
pub use merging::{intern_configs, linearize, merge_paths, tree_lookup, ConfigStore, DecisionLeaf, DecisionTree, TreeEdgeLabel, TreeNode};
pub use model::{parse_interchange, parse_model_archive, serialize_interchange, NetworkIR, NeuronId};
pub use pipeline::{Extractor, Settings};
