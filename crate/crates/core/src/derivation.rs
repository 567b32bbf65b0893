//! Per-input decision paths and filler/role symbols.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::{ActivationTrace, RelevanceCriterion, RelevanceGraph, Scope};
use crate::error::{Error, Result};
use crate::model::{InputSpec, NetworkIR, NeuronId};

/// A `(filler, role)` pair: the symbol an input value maps to, and the
/// name of the input it was observed on. Ordered by role, then filler.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolTuple {
    pub filler: String,
    pub role: String,
}

impl SymbolTuple {
    pub fn new(filler: impl Into<String>, role: impl Into<String>) -> Self {
        Self { filler: filler.into(), role: role.into() }
    }
}

impl Ord for SymbolTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.role, &self.filler).cmp(&(&other.role, &other.filler))
    }
}

impl PartialOrd for SymbolTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for SymbolTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.filler, self.role)
    }
}

pub type ConfigSet = BTreeSet<SymbolTuple>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEdge {
    pub neuron: NeuronId,
    pub configs: ConfigSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subpath: Option<Vec<PathEdge>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPath {
    /// Fingerprint of the network the path was derived on.
    pub network: String,
    pub theta: f64,
    pub relevance_mode: String,
    pub scope: String,
    pub decision: usize,
    pub label: String,
    pub input: Vec<f64>,
    /// Top level: retained neurons of the last hidden layer.
    pub edges: Vec<PathEdge>,
}

impl DecisionPath {
    /// Neuron ids per layer, every nesting level flattened, in path order.
    pub fn levels(&self) -> BTreeMap<usize, Vec<NeuronId>> {
        fn walk(edges: &[PathEdge], out: &mut BTreeMap<usize, Vec<NeuronId>>) {
            for e in edges {
                out.entry(e.neuron.layer).or_default().push(e.neuron);
                if let Some(sub) = &e.subpath {
                    walk(sub, out);
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(&self.edges, &mut out);
        out
    }

    pub fn edge_count(&self) -> usize {
        self.levels().values().map(Vec::len).sum()
    }

    /// Union of every configuration set along the path.
    pub fn configs(&self) -> ConfigSet {
        self.edges.iter().flat_map(edge_input_configs).collect()
    }
}

/// The configuration set of an edge: its own for a leaf edge, otherwise the
/// union over its subpath.
pub fn edge_input_configs(edge: &PathEdge) -> ConfigSet {
    match &edge.subpath {
        None => edge.configs.clone(),
        Some(sub) => sub.iter().flat_map(edge_input_configs).collect(),
    }
}

fn format_raw(value: f64) -> String {
    format!("{value}")
}

/// The symbol matching `value` on input `input_neuron`. Inputs without a
/// symbol table use the raw value as filler.
pub fn symbol_for_input(spec: &InputSpec, input_neuron: usize, value: f64) -> Result<SymbolTuple> {
    let info = spec.inputs.get(input_neuron).ok_or(Error::DimensionMismatch {
        expected: spec.len(),
        got: input_neuron + 1,
    })?;
    if info.symbols.is_empty() {
        return Ok(SymbolTuple::new(format_raw(value), info.name.clone()));
    }
    let mut hits = info.symbols.iter().filter(|s| s.matcher.matches(value));
    match (hits.next(), hits.next()) {
        (Some(s), None) => Ok(SymbolTuple::new(s.label.clone(), info.name.clone())),
        (None, _) => Err(Error::NoSymbol { role: info.name.clone(), value }),
        (Some(_), Some(_)) => Err(Error::AmbiguousSymbol { role: info.name.clone(), value }),
    }
}

/// Tensor-product binding `sum_i f_i (x) r_i`, row-major `fillers x roles`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Binding {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn flatten(&self) -> &[f64] {
        &self.data
    }
}

pub fn bind_symbols(fillers: &[Vec<f64>], roles: &[Vec<f64>]) -> Result<Binding> {
    if fillers.len() != roles.len() {
        return Err(Error::DimensionMismatch { expected: fillers.len(), got: roles.len() });
    }
    let rows = fillers.first().map_or(0, Vec::len);
    let cols = roles.first().map_or(0, Vec::len);
    let mut data = vec![0.0; rows * cols];
    for (f, r) in fillers.iter().zip(roles) {
        if f.len() != rows {
            return Err(Error::DimensionMismatch { expected: rows, got: f.len() });
        }
        if r.len() != cols {
            return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
        }
        for (i, &fv) in f.iter().enumerate() {
            for (j, &rv) in r.iter().enumerate() {
                data[i * cols + j] += fv * rv;
            }
        }
    }
    Ok(Binding { rows, cols, data })
}

/// Build the hierarchical path for one input.
///
/// Every retained neuron of a lower hidden layer hangs below the first
/// retained neuron (flat order) of the next hidden layer that has a relevant
/// edge from it, so each appears exactly once.
pub fn derive_path(net: &NetworkIR, trace: &ActivationTrace, rel: &RelevanceGraph, spec: &InputSpec) -> Result<DecisionPath> {
    derive_path_tagged(net, trace, rel, spec, &net.fingerprint())
}

/// [`derive_path`] with a precomputed network fingerprint.
pub fn derive_path_tagged(
    net: &NetworkIR,
    trace: &ActivationTrace,
    rel: &RelevanceGraph,
    spec: &InputSpec,
    fingerprint: &str,
) -> Result<DecisionPath> {
    let hidden = net.hidden_layers();
    let Some(&top) = hidden.last() else {
        return Err(Error::NoHiddenLayers);
    };
    if rel.retained(top).next().is_none() {
        return Err(Error::EmptyPenultimate);
    }
    let input = &trace.output[0];
    if input.len() != spec.len() {
        return Err(Error::DimensionMismatch { expected: net.input_width(), got: spec.len() });
    }

    // children[level][k] = retained neurons of hidden[level - 1] under k.
    let mut children: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); hidden.len()];
    for level in 0..hidden.len() - 1 {
        let (lower, upper) = (hidden[level], hidden[level + 1]);
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        for k in rel.retained(upper) {
            let neuron = &net.layers[upper].neuron(k).expect("retained neuron exists");
            for (e, edge) in neuron.in_edges.iter().enumerate() {
                if !rel.edges[upper][k][e] {
                    continue;
                }
                let (sl, sf) = net.resolve_source(upper, edge.source);
                debug_assert_eq!(sl, lower);
                parent.entry(sf).or_insert(k);
            }
        }
        for j in rel.retained(lower) {
            let k = parent
                .get(&j)
                .ok_or_else(|| Error::InvalidNetwork(format!("retained neuron {} has no retained successor", net.id_of(lower, j))))?;
            children[level + 1].entry(*k).or_default().push(j);
        }
    }

    let first = hidden[0];
    let leaf_configs = |j: usize| -> Result<ConfigSet> {
        let neuron = net.layers[first].neuron(j).expect("retained neuron exists");
        let mut set = ConfigSet::new();
        for (e, edge) in neuron.in_edges.iter().enumerate() {
            if rel.edges[first][j][e] {
                let (_, i) = net.resolve_source(first, edge.source);
                set.insert(symbol_for_input(spec, i, input[i])?);
            }
        }
        Ok(set)
    };

    fn build(
        net: &NetworkIR,
        hidden: &[usize],
        children: &[BTreeMap<usize, Vec<usize>>],
        level: usize,
        j: usize,
        leaf_configs: &dyn Fn(usize) -> Result<ConfigSet>,
    ) -> Result<PathEdge> {
        let neuron = net.id_of(hidden[level], j);
        if level == 0 {
            return Ok(PathEdge { neuron, configs: leaf_configs(j)?, subpath: None });
        }
        match children[level].get(&j) {
            None => Ok(PathEdge { neuron, configs: ConfigSet::new(), subpath: None }),
            Some(kids) => {
                let sub = kids
                    .iter()
                    .map(|&c| build(net, hidden, children, level - 1, c, leaf_configs))
                    .collect::<Result<Vec<_>>>()?;
                let configs = sub.iter().flat_map(edge_input_configs).collect();
                Ok(PathEdge { neuron, configs, subpath: Some(sub) })
            }
        }
    }

    let top_level = hidden.len() - 1;
    let edges = rel
        .retained(top)
        .map(|j| build(net, &hidden, &children, top_level, j, &leaf_configs))
        .collect::<Result<Vec<_>>>()?;

    Ok(DecisionPath {
        network: fingerprint.to_string(),
        theta: rel.criterion.threshold(),
        relevance_mode: rel.criterion.mode_name().to_string(),
        scope: rel.scope.name().to_string(),
        decision: trace.decision,
        label: net.output_label(trace.decision),
        input: input.clone(),
        edges,
    })
}

/// Forward pass, relevance and path derivation in one step.
pub fn derive_for_input(net: &NetworkIR, x: &[f64], criterion: RelevanceCriterion, scope: Scope) -> Result<DecisionPath> {
    let trace = crate::analysis::forward(net, x)?;
    let rel = crate::analysis::relevance(net, &trace, criterion, scope)?;
    derive_path(net, &trace, &rel, &net.input_spec)
}
