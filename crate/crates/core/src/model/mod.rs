//! Network intermediate representation.
//!
//! Every network is held in feedforward form: an ordered list of layers whose
//! neurons carry sparse weighted edges into the immediately preceding layer.
//! Convolution and pooling layers arrive here already lowered (see
//! [`crate::lowering`]); flatten layers survive only as index permutations.
//!
//! Neurons are addressed by [`NeuronId`] `(layer, filter, neuron)`. Within a
//! layer the *flat index* enumerates neurons filter-major, and edge sources
//! are flat indices into the output vector of the previous layer.

mod interchange;
mod keras;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use interchange::{parse_interchange, serialize_interchange};
pub use keras::{parse_keras_archive, parse_model_archive, Tensor, WeightTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub filter: usize,
    pub neuron: usize,
}

impl NeuronId {
    pub fn new(layer: usize, filter: usize, neuron: usize) -> Self {
        Self { layer, filter, neuron }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}/F{}/N{}", self.layer, self.filter, self.neuron)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Linear => "linear",
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "linear" => ActivationKind::Linear,
            "relu" => ActivationKind::Relu,
            "sigmoid" => ActivationKind::Sigmoid,
            "tanh" => ActivationKind::Tanh,
            "softmax" => ActivationKind::Softmax,
            other => return Err(Error::UnknownActivation(other.to_string())),
        })
    }

    /// Pointwise activation. Softmax is layer-wide and handled by
    /// [`softmax_in_place`]; here it acts as the identity.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Linear | ActivationKind::Softmax => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
        }
    }
}

pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    /// Dense layers and lowered convolutions.
    DenseForm,
    MaxPoolForm,
    FlattenRemap,
    Output,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::DenseForm => "dense-form",
            LayerKind::MaxPoolForm => "maxpool-form",
            LayerKind::FlattenRemap => "flatten-remap",
            LayerKind::Output => "output",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "input" => LayerKind::Input,
            "dense-form" => LayerKind::DenseForm,
            "maxpool-form" => LayerKind::MaxPoolForm,
            "flatten-remap" => LayerKind::FlattenRemap,
            "output" => LayerKind::Output,
            other => return Err(Error::Malformed(format!("unknown layer kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputFunction {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Flat index into the previous layer's output vector.
    pub source: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(source: usize, weight: f64) -> Self {
        Self { source, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronIR {
    pub in_edges: Vec<Edge>,
    pub bias: f64,
    /// Set by static pruning: the neuron has no path to the output layer.
    pub pruned: bool,
}

impl NeuronIR {
    pub fn new(in_edges: Vec<Edge>, bias: f64) -> Self {
        Self { in_edges, bias, pruned: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterIR {
    pub bias: f64,
    pub neurons: Vec<NeuronIR>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerIR {
    pub kind: LayerKind,
    pub activation: ActivationKind,
    pub filters: Vec<FilterIR>,
    /// Only for flatten layers: output position -> flat index in the previous layer.
    pub remap: Vec<usize>,
}

impl LayerIR {
    pub fn input(width: usize) -> Self {
        LayerIR {
            kind: LayerKind::Input,
            activation: ActivationKind::Linear,
            filters: vec![FilterIR {
                bias: 0.0,
                neurons: vec![NeuronIR::new(Vec::new(), 0.0); width],
            }],
            remap: Vec::new(),
        }
    }

    /// Fully connected layer from `kernel` laid out `[in, out]` row-major.
    pub fn dense(
        inputs: usize,
        units: usize,
        kernel: &[f64],
        bias: &[f64],
        activation: ActivationKind,
    ) -> Result<Self> {
        if kernel.len() != inputs * units {
            return Err(Error::ShapeMismatch(format!(
                "dense kernel has {} values, expected {inputs}x{units}",
                kernel.len()
            )));
        }
        if !bias.is_empty() && bias.len() != units {
            return Err(Error::ShapeMismatch(format!(
                "dense bias has {} values, expected {units}",
                bias.len()
            )));
        }
        let neurons = (0..units)
            .map(|j| {
                let edges = (0..inputs).map(|i| Edge::new(i, kernel[i * units + j])).collect();
                NeuronIR::new(edges, bias.get(j).copied().unwrap_or(0.0))
            })
            .collect();
        Ok(LayerIR {
            kind: LayerKind::DenseForm,
            activation,
            filters: vec![FilterIR { bias: 0.0, neurons }],
            remap: Vec::new(),
        })
    }

    pub fn input_function(&self) -> InputFunction {
        match self.kind {
            LayerKind::MaxPoolForm => InputFunction::Max,
            _ => InputFunction::Sum,
        }
    }

    pub fn has_neurons(&self) -> bool {
        self.kind != LayerKind::FlattenRemap
    }

    /// Length of this layer's output vector.
    pub fn width(&self) -> usize {
        match self.kind {
            LayerKind::FlattenRemap => self.remap.len(),
            _ => self.filters.iter().map(|f| f.neurons.len()).sum(),
        }
    }

    pub fn neurons(&self) -> impl Iterator<Item = &NeuronIR> {
        self.filters.iter().flat_map(|f| f.neurons.iter())
    }

    pub fn neurons_mut(&mut self) -> impl Iterator<Item = &mut NeuronIR> {
        self.filters.iter_mut().flat_map(|f| f.neurons.iter_mut())
    }

    pub fn neuron(&self, flat: usize) -> Option<&NeuronIR> {
        let (f, n) = self.split_flat(flat)?;
        Some(&self.filters[f].neurons[n])
    }

    /// `(filter, neuron)` for a flat index.
    pub fn split_flat(&self, mut flat: usize) -> Option<(usize, usize)> {
        for (f, filter) in self.filters.iter().enumerate() {
            if flat < filter.neurons.len() {
                return Some((f, flat));
            }
            flat -= filter.neurons.len();
        }
        None
    }

    pub fn flat_index(&self, filter: usize, neuron: usize) -> Option<usize> {
        let fl = self.filters.get(filter)?;
        if neuron >= fl.neurons.len() {
            return None;
        }
        Some(self.filters[..filter].iter().map(|f| f.neurons.len()).sum::<usize>() + neuron)
    }

    pub fn edge_count(&self) -> usize {
        self.neurons().map(|n| n.in_edges.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matcher {
    Exact(f64),
    /// `[lo, hi)`, or `[lo, hi]` when `hi_closed`.
    Range { lo: f64, hi: f64, hi_closed: bool },
}

impl Matcher {
    pub fn matches(&self, value: f64) -> bool {
        match *self {
            Matcher::Exact(v) => value == v,
            Matcher::Range { lo, hi, hi_closed } => value >= lo && (value < hi || (hi_closed && value == hi)),
        }
    }

    fn span(&self) -> (f64, f64) {
        match *self {
            Matcher::Exact(v) => (v, v),
            Matcher::Range { lo, hi, .. } => (lo, hi),
        }
    }

    fn overlaps(&self, other: &Matcher) -> bool {
        match (*self, *other) {
            (Matcher::Exact(a), m) | (m, Matcher::Exact(a)) => m.matches(a),
            (
                Matcher::Range { lo: a_lo, hi: a_hi, hi_closed: a_c },
                Matcher::Range { lo: b_lo, hi: b_hi, hi_closed: b_c },
            ) => {
                // Both non-empty half-open (or closed) intervals.
                let a_before_b = a_hi < b_lo || (a_hi == b_lo && !a_c);
                let b_before_a = b_hi < a_lo || (b_hi == a_lo && !b_c);
                !(a_before_b || b_before_a)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDef {
    pub label: String,
    pub matcher: Matcher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputInfo {
    /// Information name; acts as the symbol role.
    pub name: String,
    /// Empty table: the raw value itself is used as filler.
    pub symbols: Vec<SymbolDef>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputSpec {
    pub inputs: Vec<InputInfo>,
}

impl InputSpec {
    pub fn unnamed(width: usize) -> Self {
        InputSpec {
            inputs: (0..width)
                .map(|i| InputInfo { name: format!("x{i}"), symbols: Vec::new() })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Per-input admissible range, `default` where no symbol table exists.
    pub fn ranges(&self, default: (f64, f64)) -> Vec<(f64, f64)> {
        self.inputs
            .iter()
            .map(|info| {
                if info.symbols.is_empty() {
                    return default;
                }
                info.symbols.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    let (a, b) = s.matcher.span();
                    (lo.min(a), hi.max(b))
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for info in &self.inputs {
            for s in &info.symbols {
                let ok = match s.matcher {
                    Matcher::Exact(v) => v.is_finite(),
                    Matcher::Range { lo, hi, .. } => lo.is_finite() && hi.is_finite() && lo < hi,
                };
                if !ok {
                    return Err(Error::InvalidNetwork(format!(
                        "symbol `{}` of input `{}` has an empty or non-finite matcher",
                        s.label, info.name
                    )));
                }
            }
            for (i, a) in info.symbols.iter().enumerate() {
                for b in &info.symbols[i + 1..] {
                    if a.matcher.overlaps(&b.matcher) {
                        return Err(Error::InvalidNetwork(format!(
                            "symbols `{}` and `{}` of input `{}` overlap",
                            a.label, b.label, info.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkIR {
    pub name: String,
    pub input_spec: InputSpec,
    pub layers: Vec<LayerIR>,
    /// Decision names for the output neurons; may be empty.
    pub output_labels: Vec<String>,
}

impl NetworkIR {
    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, LayerIR::width)
    }

    pub fn output_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, LayerIR::width)
    }

    pub fn output_label(&self, decision: usize) -> String {
        self.output_labels.get(decision).cloned().unwrap_or_else(|| format!("d{decision}"))
    }

    pub fn neuron(&self, id: NeuronId) -> Option<&NeuronIR> {
        self.layers.get(id.layer)?.filters.get(id.filter)?.neurons.get(id.neuron)
    }

    pub fn id_of(&self, layer: usize, flat: usize) -> NeuronId {
        let (filter, neuron) = self.layers[layer]
            .split_flat(flat)
            .expect("flat index out of range");
        NeuronId { layer, filter, neuron }
    }

    /// Resolve an edge source of `layer` through any flatten layers to the
    /// neuron that produced the value: `(source layer, flat index)`.
    pub fn resolve_source(&self, layer: usize, source: usize) -> (usize, usize) {
        let mut l = layer - 1;
        let mut s = source;
        while self.layers[l].kind == LayerKind::FlattenRemap {
            s = self.layers[l].remap[s];
            l -= 1;
        }
        (l, s)
    }

    /// Nearest layer below `layer` that holds neurons.
    pub fn source_layer(&self, layer: usize) -> usize {
        let mut l = layer - 1;
        while !self.layers[l].has_neurons() {
            l -= 1;
        }
        l
    }

    /// Indices of hidden layers that hold neurons, ascending.
    pub fn hidden_layers(&self) -> Vec<usize> {
        (1..self.layers.len().saturating_sub(1))
            .filter(|&l| self.layers[l].has_neurons())
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(LayerIR::edge_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidNetwork(msg));
        if self.layers.is_empty() {
            return Err(Error::NoLayers);
        }
        if self.layers[0].kind != LayerKind::Input {
            return invalid("layer 0 must be the input layer".into());
        }
        if self.layers.len() < 2 {
            return invalid("network needs an output layer".into());
        }
        let last = self.layers.len() - 1;
        if self.layers[last].kind != LayerKind::Output {
            return invalid("last layer must be the output layer".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if (layer.kind == LayerKind::Input) != (l == 0) || (layer.kind == LayerKind::Output) != (l == last) {
                return invalid(format!("layer {l}: misplaced `{}` layer", layer.kind.name()));
            }
            if layer.activation == ActivationKind::Softmax && l != last {
                return invalid(format!("layer {l}: softmax only permitted on the output layer"));
            }
            if layer.kind == LayerKind::FlattenRemap {
                if !layer.filters.is_empty() {
                    return invalid(format!("layer {l}: flatten layers hold no neurons"));
                }
                let prev = self.layers[l - 1].width();
                let mut seen = vec![false; prev];
                if layer.remap.len() != prev {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {l}: remap has {} entries, previous layer has {prev}",
                        layer.remap.len()
                    )));
                }
                for &r in &layer.remap {
                    if r >= prev || std::mem::replace(&mut seen[r], true) {
                        return invalid(format!("layer {l}: remap is not a permutation"));
                    }
                }
                continue;
            }
            if !layer.remap.is_empty() {
                return invalid(format!("layer {l}: only flatten layers carry a remap"));
            }
            if layer.width() == 0 || layer.filters.iter().any(|f| f.neurons.is_empty()) {
                return invalid(format!("layer {l}: every filter needs at least one neuron"));
            }
            let prev = if l == 0 { 0 } else { self.layers[l - 1].width() };
            for (i, n) in layer.neurons().enumerate() {
                if l == 0 && !n.in_edges.is_empty() {
                    return invalid("input neurons take no edges".into());
                }
                if !n.bias.is_finite() {
                    return invalid(format!("layer {l}: non-finite bias"));
                }
                let mut sources: Vec<usize> = n.in_edges.iter().map(|e| e.source).collect();
                sources.sort_unstable();
                if sources.windows(2).any(|w| w[0] == w[1]) {
                    return invalid(format!("layer {l} neuron {i}: duplicate edge source"));
                }
                for e in &n.in_edges {
                    if e.source >= prev {
                        return Err(Error::ShapeMismatch(format!(
                            "layer {l} neuron {i}: edge source {} beyond previous width {prev}",
                            e.source
                        )));
                    }
                    if !e.weight.is_finite() {
                        return invalid(format!("layer {l} neuron {i}: non-finite weight"));
                    }
                }
            }
        }
        if self.input_spec.len() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "input spec describes {} inputs, input layer has {}",
                self.input_spec.len(),
                self.input_width()
            )));
        }
        if !self.output_labels.is_empty() && self.output_labels.len() != self.output_width() {
            return Err(Error::ShapeMismatch(format!(
                "{} output labels for {} output neurons",
                self.output_labels.len(),
                self.output_width()
            )));
        }
        self.input_spec.validate()
    }

    /// SHA-256 over the canonical interchange bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(serialize_interchange(self));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
