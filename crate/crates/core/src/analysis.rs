//! Forward evaluation, interval bounds, static pruning and per-input relevance.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{softmax_in_place, ActivationKind, InputFunction, LayerKind, NetworkIR, NeuronIR};

/// Below this magnitude a neuron's largest contribution counts as zero.
pub const ZERO_ACTIVATION_GUARD: f64 = 1e-12;

/// Net inputs and outputs of every neuron for one input vector, per layer in
/// flat order. Flatten layers hold the permuted copy of their predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub net_input: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    /// Argmax over the output layer, lowest index on ties.
    pub decision: usize,
}

impl ActivationTrace {
    pub fn outputs(&self) -> &[f64] {
        self.output.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Net input of one neuron given its predecessor outputs. The summation
/// order (edges, then bias) is shared with [`propagate_bounds`].
fn net_input(neuron: &NeuronIR, function: InputFunction, prev: &[f64]) -> f64 {
    match function {
        InputFunction::Sum => {
            let mut acc = 0.0;
            for e in &neuron.in_edges {
                acc += prev[e.source] * e.weight;
            }
            acc + neuron.bias
        }
        InputFunction::Max => {
            let m = neuron
                .in_edges
                .iter()
                .map(|e| prev[e.source] * e.weight)
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                neuron.bias
            } else {
                m + neuron.bias
            }
        }
    }
}

fn check_input(net: &NetworkIR, x: &[f64]) -> Result<()> {
    if x.len() != net.input_width() {
        return Err(Error::DimensionMismatch { expected: net.input_width(), got: x.len() });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    Ok(())
}

pub fn forward(net: &NetworkIR, x: &[f64]) -> Result<ActivationTrace> {
    check_input(net, x)?;
    let mut net_inputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    net_inputs.push(x.to_vec());
    outputs.push(x.to_vec());
    for layer in &net.layers[1..] {
        let prev = outputs.last().expect("input layer present");
        if layer.kind == LayerKind::FlattenRemap {
            let v: Vec<f64> = layer.remap.iter().map(|&r| prev[r]).collect();
            net_inputs.push(v.clone());
            outputs.push(v);
            continue;
        }
        let function = layer.input_function();
        let mut nets = Vec::with_capacity(layer.width());
        let mut outs = Vec::with_capacity(layer.width());
        for n in layer.neurons() {
            if n.pruned {
                nets.push(0.0);
                outs.push(0.0);
                continue;
            }
            let z = net_input(n, function, prev);
            nets.push(z);
            outs.push(layer.activation.apply(z));
        }
        if layer.activation == ActivationKind::Softmax {
            outs.clone_from(&nets);
            softmax_in_place(&mut outs);
        }
        net_inputs.push(nets);
        outputs.push(outs);
    }
    let decision = argmax(outputs.last().expect("output layer present"));
    Ok(ActivationTrace { net_input: net_inputs, output: outputs, decision })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Image under a monotone non-decreasing pointwise activation.
    pub fn activate(self, kind: ActivationKind) -> Self {
        Self { lo: kind.apply(self.lo), hi: kind.apply(self.hi) }
    }

    /// `w * [lo, hi]`, oriented by the sign of `w`.
    fn scale(self, w: f64) -> Self {
        if w >= 0.0 {
            Self { lo: self.lo * w, hi: self.hi * w }
        } else {
            Self { lo: self.hi * w, hi: self.lo * w }
        }
    }

    /// Largest possible magnitude of `w * v` for `v` in this interval.
    pub fn max_contribution(self, w: f64) -> f64 {
        (w * self.lo).abs().max((w * self.hi).abs())
    }
}

/// Per-layer output activation bounds, flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBounds {
    pub layers: Vec<Vec<Interval>>,
}

impl IntervalBounds {
    pub fn get(&self, layer: usize, flat: usize) -> Interval {
        self.layers[layer][flat]
    }
}

/// Sound output bounds for every neuron by interval arithmetic.
///
/// Sums run in the same order as [`forward`]; since IEEE rounding is
/// monotone, every computed activation stays inside its interval.
pub fn propagate_bounds(net: &NetworkIR, input_ranges: &[(f64, f64)]) -> Result<IntervalBounds> {
    if input_ranges.len() != net.input_width() {
        return Err(Error::DimensionMismatch { expected: net.input_width(), got: input_ranges.len() });
    }
    let mut layers: Vec<Vec<Interval>> = Vec::with_capacity(net.layers.len());
    let mut first = Vec::with_capacity(input_ranges.len());
    for (i, &(lo, hi)) in input_ranges.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::NonFiniteInput(i));
        }
        first.push(Interval::new(lo, hi));
    }
    layers.push(first);
    for layer in &net.layers[1..] {
        let prev = layers.last().expect("input bounds present");
        if layer.kind == LayerKind::FlattenRemap {
            let v = layer.remap.iter().map(|&r| prev[r]).collect();
            layers.push(v);
            continue;
        }
        let function = layer.input_function();
        let pre: Vec<Interval> = layer
            .neurons()
            .map(|n| {
                if n.pruned {
                    return Interval::point(0.0);
                }
                match function {
                    InputFunction::Sum => {
                        let (mut lo, mut hi) = (0.0, 0.0);
                        for e in &n.in_edges {
                            let c = prev[e.source].scale(e.weight);
                            lo += c.lo;
                            hi += c.hi;
                        }
                        Interval::new(lo + n.bias, hi + n.bias)
                    }
                    InputFunction::Max => {
                        if n.in_edges.is_empty() {
                            return Interval::point(n.bias);
                        }
                        let (lo, hi) = n.in_edges.iter().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                            let c = prev[e.source].scale(e.weight);
                            (lo.max(c.lo), hi.max(c.hi))
                        });
                        Interval::new(lo + n.bias, hi + n.bias)
                    }
                }
            })
            .collect();
        let out = if layer.activation == ActivationKind::Softmax {
            softmax_bounds(&pre)
        } else {
            pre.into_iter().map(|iv| iv.activate(layer.activation)).collect()
        };
        layers.push(out);
    }
    Ok(IntervalBounds { layers })
}

/// Softmax bounds: neuron `j` is smallest when its logit sits at `lo` and all
/// others at `hi`, and vice versa. Widened slightly to absorb the different
/// evaluation route of the forward softmax, then clamped to `[0, 1]`.
fn softmax_bounds(pre: &[Interval]) -> Vec<Interval> {
    const SLACK: f64 = 1e-12;
    (0..pre.len())
        .map(|j| {
            let (mut worst, mut best) = (0.0, 0.0);
            for (k, iv) in pre.iter().enumerate() {
                if k != j {
                    worst += (iv.hi - pre[j].lo).exp();
                    best += (iv.lo - pre[j].hi).exp();
                }
            }
            let lo = 1.0 / (1.0 + worst);
            let hi = 1.0 / (1.0 + best);
            Interval::new((lo - SLACK).clamp(0.0, 1.0), (hi + SLACK).clamp(0.0, 1.0))
        })
        .collect()
}

/// Remove every zero-weight edge and every edge whose largest possible
/// contribution is below `epsilon`, then mark hidden neurons without a path to the output layer as pruned.
/// Max-pool edges are kept: their contribution is not additive.
pub fn prune_static(net: &NetworkIR, bounds: &IntervalBounds, epsilon: f64) -> Result<NetworkIR> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let mut pruned = net.clone();
    for l in 1..pruned.layers.len() {
        if !pruned.layers[l].has_neurons() || pruned.layers[l].input_function() == InputFunction::Max {
            continue;
        }
        let sources: Vec<Vec<(usize, usize)>> = pruned.layers[l]
            .neurons()
            .map(|n| n.in_edges.iter().map(|e| net.resolve_source(l, e.source)).collect())
            .collect();
        for (n, srcs) in pruned.layers[l].neurons_mut().zip(sources) {
            let mut idx = 0;
            n.in_edges.retain(|e| {
                let (sl, sf) = srcs[idx];
                idx += 1;
                e.weight != 0.0 && bounds.get(sl, sf).max_contribution(e.weight) >= epsilon
            });
        }
    }

    // Sweep output -> input marking neurons that still reach the output.
    let mut live: Vec<Vec<bool>> = pruned.layers.iter().map(|l| vec![false; l.width()]).collect();
    let out = pruned.output_index();
    live[out].iter_mut().for_each(|v| *v = true);
    live[0].iter_mut().for_each(|v| *v = true);
    for l in (1..=out).rev() {
        if !pruned.layers[l].has_neurons() {
            continue;
        }
        for (flat, n) in pruned.layers[l].neurons().enumerate() {
            if !live[l][flat] || n.pruned {
                continue;
            }
            for e in &n.in_edges {
                let (sl, sf) = pruned.resolve_source(l, e.source);
                live[sl][sf] = true;
            }
        }
    }
    for l in 1..out {
        if !pruned.layers[l].has_neurons() {
            continue;
        }
        for (flat, n) in pruned.layers[l].neurons_mut().enumerate() {
            if !live[l][flat] {
                n.pruned = true;
                n.in_edges.clear();
            }
        }
    }
    Ok(pruned)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelevanceCriterion {
    /// `|v_i w_ij| >= theta * max_k |v_k w_kj|`.
    Ratio(f64),
    /// Smallest set of edges, by descending magnitude, covering `rho` of `sum |v w|`.
    Cumulative(f64),
}

impl RelevanceCriterion {
    pub fn threshold(self) -> f64 {
        match self {
            RelevanceCriterion::Ratio(t) | RelevanceCriterion::Cumulative(t) => t,
        }
    }

    pub fn mode_name(self) -> &'static str {
        match self {
            RelevanceCriterion::Ratio(_) => "ratio",
            RelevanceCriterion::Cumulative(_) => "cumulative",
        }
    }

    pub fn from_parts(mode: &str, threshold: f64) -> Result<Self> {
        let c = match mode {
            "ratio" => RelevanceCriterion::Ratio(threshold),
            "cumulative" => RelevanceCriterion::Cumulative(threshold),
            other => return Err(Error::Malformed(format!("unknown relevance mode `{other}`"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(self) -> Result<()> {
        let t = self.threshold();
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidThreshold(t));
        }
        Ok(())
    }
}

impl Default for RelevanceCriterion {
    fn default() -> Self {
        RelevanceCriterion::Ratio(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    #[default]
    WinnerOnly,
    AllOutputs,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::WinnerOnly => "winner",
            Scope::AllOutputs => "all",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "winner" => Ok(Scope::WinnerOnly),
            "all" => Ok(Scope::AllOutputs),
            other => Err(Error::Malformed(format!("unknown scope `{other}`"))),
        }
    }
}

/// Relevant neurons and edges for one input. Indexed `[layer][flat]` and
/// `[layer][flat][edge]`; flatten layers have empty entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceGraph {
    pub criterion: RelevanceCriterion,
    pub scope: Scope,
    pub neurons: Vec<Vec<bool>>,
    pub edges: Vec<Vec<Vec<bool>>>,
    /// Whether the virtual bias edge (`v = 1`) of each neuron is relevant.
    pub bias: Vec<Vec<bool>>,
}

impl RelevanceGraph {
    pub fn is_retained(&self, layer: usize, flat: usize) -> bool {
        self.neurons[layer][flat]
    }

    pub fn retained(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.neurons[layer].iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i)
    }

    /// All relevant edges as `(layer, target flat, edge index)`.
    pub fn relevant_edges(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (l, layer) in self.edges.iter().enumerate() {
            for (j, edges) in layer.iter().enumerate() {
                for (e, &r) in edges.iter().enumerate() {
                    if r {
                        out.push((l, j, e));
                    }
                }
            }
        }
        out
    }
}

/// Locally relevant in-edges of one neuron, plus the bias flag.
fn local_relevance(neuron: &NeuronIR, function: InputFunction, prev: &[f64], criterion: RelevanceCriterion) -> (Vec<bool>, bool) {
    let contributions: Vec<f64> = neuron.in_edges.iter().map(|e| prev[e.source] * e.weight).collect();
    if function == InputFunction::Max {
        let mut flags = vec![false; contributions.len()];
        if !contributions.is_empty() {
            let mut best = 0;
            for (i, &c) in contributions.iter().enumerate() {
                if c > contributions[best] {
                    best = i;
                }
            }
            flags[best] = true;
        }
        return (flags, false);
    }
    let bias = neuron.bias.abs();
    let largest = contributions.iter().map(|c| c.abs()).fold(bias, f64::max);
    if largest < ZERO_ACTIVATION_GUARD {
        return (vec![false; contributions.len()], false);
    }
    match criterion {
        RelevanceCriterion::Ratio(theta) => {
            let cut = theta * largest;
            (contributions.iter().map(|c| c.abs() >= cut).collect(), bias >= cut)
        }
        RelevanceCriterion::Cumulative(rho) => {
            // Index `len` stands for the bias edge.
            let n = contributions.len();
            let magnitude = |i: usize| if i == n { bias } else { contributions[i].abs() };
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| magnitude(b).partial_cmp(&magnitude(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            let total: f64 = (0..=n).map(magnitude).sum();
            let mut flags = vec![false; n + 1];
            let mut covered = 0.0;
            for i in order {
                if covered >= rho * total {
                    break;
                }
                covered += magnitude(i);
                flags[i] = true;
            }
            let bias_flag = flags.pop().unwrap_or(false);
            (flags, bias_flag)
        }
    }
}

pub fn relevance(net: &NetworkIR, trace: &ActivationTrace, criterion: RelevanceCriterion, scope: Scope) -> Result<RelevanceGraph> {
    criterion.validate()?;
    let layers = net.layers.len();
    let mut neurons: Vec<Vec<bool>> = net.layers.iter().map(|l| vec![false; l.width()]).collect();
    let mut edges: Vec<Vec<Vec<bool>>> = vec![Vec::new(); layers];
    let mut bias: Vec<Vec<bool>> = vec![Vec::new(); layers];

    let out = net.output_index();
    match scope {
        Scope::WinnerOnly => neurons[out][trace.decision] = true,
        Scope::AllOutputs => neurons[out].iter_mut().for_each(|r| *r = true),
    }
    for l in (1..=out).rev() {
        let layer = &net.layers[l];
        if !layer.has_neurons() {
            continue;
        }
        let function = layer.input_function();
        let prev = &trace.output[l - 1];
        let mut layer_edges = Vec::with_capacity(layer.width());
        let mut layer_bias = Vec::with_capacity(layer.width());
        for (j, n) in layer.neurons().enumerate() {
            if !neurons[l][j] || n.pruned {
                neurons[l][j] = false;
                layer_edges.push(vec![false; n.in_edges.len()]);
                layer_bias.push(false);
                continue;
            }
            let (flags, b) = local_relevance(n, function, prev, criterion);
            for (e, &r) in n.in_edges.iter().zip(&flags) {
                if r {
                    let (sl, sf) = net.resolve_source(l, e.source);
                    neurons[sl][sf] = true;
                }
            }
            layer_edges.push(flags);
            layer_bias.push(b);
        }
        edges[l] = layer_edges;
        bias[l] = layer_bias;
    }
    Ok(RelevanceGraph { criterion, scope, neurons, edges, bias })
}
