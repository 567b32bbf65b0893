//! End-to-end extraction: bounds, static pruning, per-input paths, merge.

use crate::analysis::{forward, propagate_bounds, prune_static, relevance, ActivationTrace, IntervalBounds, RelevanceCriterion, Scope};
use crate::derivation::{derive_path_tagged, DecisionPath};
use crate::error::Result;
use crate::export::PathsDocument;
use crate::merging::{tree_lookup, DecisionLeaf, DecisionTree};
use crate::model::NetworkIR;

/// Range assumed for inputs that carry no symbol table.
pub const DEFAULT_INPUT_RANGE: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub criterion: RelevanceCriterion,
    pub scope: Scope,
    pub epsilon: f64,
    pub input_range: (f64, f64),
}

impl Default for Settings {
    fn default() -> Self {
        Settings { criterion: RelevanceCriterion::default(), scope: Scope::default(), epsilon: 0.0, input_range: DEFAULT_INPUT_RANGE }
    }
}

/// A network prepared for path derivation. Paths carry the fingerprint of
/// the original, unpruned network.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub name: String,
    pub fingerprint: String,
    pub settings: Settings,
    pub bounds: IntervalBounds,
    pub pruned: NetworkIR,
}

impl Extractor {
    pub fn new(net: &NetworkIR, settings: Settings) -> Result<Self> {
        settings.criterion.validate()?;
        let ranges = net.input_spec.ranges(settings.input_range);
        let bounds = propagate_bounds(net, &ranges)?;
        let pruned = prune_static(net, &bounds, settings.epsilon)?;
        Ok(Extractor { name: net.name.clone(), fingerprint: net.fingerprint(), settings, bounds, pruned })
    }

    pub fn trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        forward(&self.pruned, x)
    }

    pub fn derive(&self, x: &[f64]) -> Result<DecisionPath> {
        let trace = forward(&self.pruned, x)?;
        let rel = relevance(&self.pruned, &trace, self.settings.criterion, self.settings.scope)?;
        derive_path_tagged(&self.pruned, &trace, &rel, &self.pruned.input_spec, &self.fingerprint)
    }

    pub fn derive_all(&self, inputs: &[Vec<f64>]) -> Result<PathsDocument> {
        let paths = inputs.iter().map(|x| self.derive(x)).collect::<Result<Vec<_>>>()?;
        Ok(self.document(paths))
    }

    pub fn document(&self, paths: Vec<DecisionPath>) -> PathsDocument {
        PathsDocument {
            network_name: self.name.clone(),
            network: self.fingerprint.clone(),
            theta: self.settings.criterion.threshold(),
            relevance_mode: self.settings.criterion.mode_name().to_string(),
            scope: self.settings.scope.name().to_string(),
            epsilon: self.settings.epsilon,
            paths,
        }
    }

    pub fn tree(&self, inputs: &[Vec<f64>]) -> Result<DecisionTree> {
        self.derive_all(inputs)?.merge()
    }

    pub fn lookup<'a>(&self, tree: &'a DecisionTree, x: &[f64]) -> Result<Option<&'a DecisionLeaf>> {
        tree_lookup(tree, &self.pruned, x)
    }
}
