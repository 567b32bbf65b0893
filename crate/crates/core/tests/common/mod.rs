#![allow(dead_code)]

use std::collections::BTreeSet;

use nn2dt_core::analysis::{ActivationTrace, Scope};
use nn2dt_core::derivation::{ConfigSet, DecisionPath, PathEdge, SymbolTuple};
use nn2dt_core::lowering::{lower_conv, lower_flatten, lower_maxpool, ConvSpec, Layout, Padding, ShapeND};
use nn2dt_core::model::{ActivationKind, Edge, FilterIR, InputSpec, LayerIR, LayerKind, NetworkIR, NeuronIR, NeuronId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Dense network held as plain matrices, independent of the IR.
#[derive(Debug, Clone)]
pub struct DenseSpec {
    pub inputs: usize,
    /// `(w[out][in], bias[out], activation)` per layer.
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>, ActivationKind)>,
}

fn random_weight(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 0.0,
        1 => rng.gen_range(-1.0..1.0) * 1e-10,
        _ => rng.gen_range(-1.0..1.0),
    }
}

pub fn random_dense_spec(rng: &mut ChaCha8Rng, widths: &[usize], softmax: bool) -> DenseSpec {
    let hidden_acts = [ActivationKind::Relu, ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Linear];
    let mut layers = Vec::new();
    for l in 1..widths.len() {
        let last = l == widths.len() - 1;
        let w = (0..widths[l]).map(|_| (0..widths[l - 1]).map(|_| random_weight(rng)).collect()).collect();
        let b = (0..widths[l]).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let act = if last {
            if softmax { ActivationKind::Softmax } else { ActivationKind::Linear }
        } else {
            *hidden_acts.choose(rng).unwrap()
        };
        layers.push((w, b, act));
    }
    DenseSpec { inputs: widths[0], layers }
}

/// Random widths: 2..=5 inputs, `hidden` hidden layers of 2..=6, 2..=4 outputs.
pub fn random_widths(rng: &mut ChaCha8Rng, hidden: usize) -> Vec<usize> {
    let mut w = vec![rng.gen_range(2..=5)];
    for _ in 0..hidden {
        w.push(rng.gen_range(2..=6));
    }
    w.push(rng.gen_range(2..=4));
    w
}

pub fn build_dense(spec: &DenseSpec) -> NetworkIR {
    let mut layers = vec![LayerIR::input(spec.inputs)];
    let mut prev = spec.inputs;
    for (l, (w, b, act)) in spec.layers.iter().enumerate() {
        let units = w.len();
        let mut kernel = vec![0.0; prev * units];
        for (j, row) in w.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                kernel[i * units + j] = v;
            }
        }
        let mut layer = LayerIR::dense(prev, units, &kernel, b, *act).unwrap();
        if l == spec.layers.len() - 1 {
            layer.kind = LayerKind::Output;
        }
        layers.push(layer);
        prev = units;
    }
    let net = NetworkIR { name: "random".into(), input_spec: InputSpec::unnamed(spec.inputs), layers, output_labels: vec![] };
    net.validate().unwrap();
    net
}

fn act(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Linear | ActivationKind::Softmax => x,
        ActivationKind::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        ActivationKind::Tanh => x.tanh(),
    }
}

/// Straight matrix-vector evaluation of a [`DenseSpec`].
pub fn matrix_forward(spec: &DenseSpec, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for (w, b, kind) in &spec.layers {
        let z: Vec<f64> = w.iter().zip(b).map(|(row, bj)| row.iter().zip(&v).map(|(a, c)| a * c).sum::<f64>() + bj).collect();
        v = if *kind == ActivationKind::Softmax {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|zi| (zi - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|ei| ei / s).collect()
        } else {
            z.into_iter().map(|zi| act(*kind, zi)).collect()
        };
    }
    v
}

pub fn random_input(rng: &mut ChaCha8Rng, width: usize) -> Vec<f64> {
    (0..width).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

/// All positions of `dims` in row-major order.
pub fn positions(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out.into_iter().flat_map(|p| (0..d).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    out
}

fn ravel(pos: &[usize], dims: &[usize]) -> usize {
    pos.iter().zip(dims).fold(0, |acc, (p, d)| acc * d + p)
}

/// Output length per dimension by enumerating admissible window origins.
pub fn window_counts(dims: &[usize], k: &[usize], s: &[usize], same: bool) -> Vec<usize> {
    dims.iter()
        .zip(k)
        .zip(s)
        .map(|((&n, &k), &s)| {
            if same {
                let mut count = 0;
                while count * s < n {
                    count += 1;
                }
                count
            } else {
                (0..n).step_by(s).filter(|&o| o + k <= n).count()
            }
        })
        .collect()
}

fn pad_before(n: usize, k: usize, s: usize, out: usize, same: bool) -> i64 {
    if !same {
        return 0;
    }
    let need = (out as i64 - 1) * s as i64 + k as i64 - n as i64;
    need.max(0) / 2
}

/// Direct convolution over a channels-last tensor; result channels-last.
pub fn conv_oracle(spec: &ConvSpec, dims: &[usize], x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let same = spec.padding == Padding::Same;
    let out_dims = window_counts(dims, &spec.kernel_dims, &spec.strides, same);
    let pads: Vec<i64> = (0..dims.len()).map(|d| pad_before(dims[d], spec.kernel_dims[d], spec.strides[d], out_dims[d], same)).collect();
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mut out = Vec::new();
    for o in positions(&out_dims) {
        for co in 0..cout {
            let mut acc = 0.0;
            for k in positions(&spec.kernel_dims) {
                let p: Vec<i64> = (0..dims.len()).map(|d| (o[d] * spec.strides[d] + k[d]) as i64 - pads[d]).collect();
                if p.iter().zip(dims).any(|(&pi, &n)| pi < 0 || pi >= n as i64) {
                    continue;
                }
                let p: Vec<usize> = p.into_iter().map(|v| v as usize).collect();
                let base = ravel(&p, dims) * cin;
                let koff = ravel(&k, &spec.kernel_dims);
                for ci in 0..cin {
                    acc += x[base + ci] * spec.kernel[(koff * cin + ci) * cout + co];
                }
            }
            out.push(acc + spec.bias.get(co).copied().unwrap_or(0.0));
        }
    }
    (out, out_dims)
}

/// Windowed max over a channels-last tensor; result channels-last.
pub fn pool_oracle(dims: &[usize], channels: usize, pool: &[usize], strides: &[usize], same: bool, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let out_dims = window_counts(dims, pool, strides, same);
    let pads: Vec<i64> = (0..dims.len()).map(|d| pad_before(dims[d], pool[d], strides[d], out_dims[d], same)).collect();
    let mut out = Vec::new();
    for o in positions(&out_dims) {
        for c in 0..channels {
            let mut m = f64::NEG_INFINITY;
            for k in positions(pool) {
                let p: Vec<i64> = (0..dims.len()).map(|d| (o[d] * strides[d] + k[d]) as i64 - pads[d]).collect();
                if p.iter().zip(dims).any(|(&pi, &n)| pi < 0 || pi >= n as i64) {
                    continue;
                }
                let p: Vec<usize> = p.into_iter().map(|v| v as usize).collect();
                m = m.max(x[ravel(&p, dims) * channels + c]);
            }
            out.push(m);
        }
    }
    (out, out_dims)
}

/// Network `input -> layer -> identity output`, to evaluate one lowered layer.
pub fn single_layer_net(in_len: usize, layer: LayerIR) -> NetworkIR {
    let width = layer.width();
    let identity = (0..width).map(|i| NeuronIR::new(vec![Edge::new(i, 1.0)], 0.0)).collect();
    let net = NetworkIR {
        name: "layer".into(),
        input_spec: InputSpec::unnamed(in_len),
        layers: vec![
            LayerIR::input(in_len),
            layer,
            LayerIR { kind: LayerKind::Output, activation: ActivationKind::Linear, filters: vec![FilterIR { bias: 0.0, neurons: identity }], remap: vec![] },
        ],
        output_labels: vec![],
    };
    net.validate().unwrap();
    net
}

/// Filter-major layer output to channels-last order.
pub fn to_channels_last(v: &[f64], positions: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for c in 0..channels {
        for p in 0..positions {
            out[p * channels + c] = v[c * positions + p];
        }
    }
    out
}

pub fn random_conv_spec(rng: &mut ChaCha8Rng, rank: usize) -> (ConvSpec, Vec<usize>) {
    let max_dim = if rank == 3 { 4 } else { 6 };
    let padding = if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
    let dims: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=max_dim)).collect();
    let kernel_dims: Vec<usize> = dims
        .iter()
        .map(|&n| if padding == Padding::Valid { rng.gen_range(1..=n.min(3)) } else { rng.gen_range(1..=3) })
        .collect();
    let strides = (0..rank).map(|_| rng.gen_range(1..=3)).collect();
    let in_channels = rng.gen_range(1..=3);
    let out_channels = rng.gen_range(1..=3);
    let n = kernel_dims.iter().product::<usize>() * in_channels * out_channels;
    let spec = ConvSpec {
        kernel: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        bias: (0..out_channels).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        kernel_dims,
        in_channels,
        out_channels,
        strides,
        padding,
    };
    (spec, dims)
}

/// Random conv network: conv (relu) -> max-pool -> flatten -> dense output.
pub fn random_conv_net(rng: &mut ChaCha8Rng) -> NetworkIR {
    let rank = rng.gen_range(1..=2);
    let dims: Vec<usize> = (0..rank).map(|_| rng.gen_range(3..=5)).collect();
    let cin = rng.gen_range(1..=2);
    let in_shape = ShapeND::new(dims.clone(), cin);
    let kernel_dims: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=2)).collect();
    let cout = rng.gen_range(1..=3);
    let n = kernel_dims.iter().product::<usize>() * cin * cout;
    let spec = ConvSpec {
        kernel: (0..n).map(|_| random_weight(rng)).collect(),
        bias: (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        kernel_dims,
        in_channels: cin,
        out_channels: cout,
        strides: vec![1; rank],
        padding: if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid },
    };
    let mut conv = lower_conv(&spec, &in_shape, Layout::ChannelsLast).unwrap();
    conv.layer.activation = ActivationKind::Relu;
    let pool = lower_maxpool(&vec![2; rank], &vec![1; rank], Padding::Valid, &conv.out_shape, Layout::FilterMajor).unwrap();
    let flat = lower_flatten(&pool.out_shape, Layout::FilterMajor);
    let width = pool.out_shape.len();
    let outputs = rng.gen_range(2..=3);
    let kernel: Vec<f64> = (0..width * outputs).map(|_| random_weight(rng)).collect();
    let bias: Vec<f64> = (0..outputs).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut out = LayerIR::dense(width, outputs, &kernel, &bias, ActivationKind::Softmax).unwrap();
    out.kind = LayerKind::Output;
    let net = NetworkIR {
        name: "conv".into(),
        input_spec: InputSpec::unnamed(in_shape.len()),
        layers: vec![LayerIR::input(in_shape.len()), conv.layer, pool.layer, flat, out],
        output_labels: vec![],
    };
    net.validate().unwrap();
    net
}

/// Twenty test networks: dense of depth 1..=3 and conv/pool/flatten nets.
pub fn network_zoo(seed: u64, count: usize) -> Vec<NetworkIR> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            if i % 4 == 3 {
                random_conv_net(&mut r)
            } else {
                let hidden = r.gen_range(1..=3);
                let widths = random_widths(&mut r, hidden);
                let softmax = r.gen_bool(0.5);
                build_dense(&random_dense_spec(&mut r, &widths, softmax))
            }
        })
        .collect()
}

/// Random hierarchical path over a small alphabet so prefixes repeat. The
/// decision is a function of the content, so equal label sequences never
/// disagree.
pub fn random_path(rng: &mut ChaCha8Rng, depth: usize) -> DecisionPath {
    fn edges(rng: &mut ChaCha8Rng, layer: usize) -> Vec<PathEdge> {
        let count = rng.gen_range(1..=2);
        let mut picked: Vec<usize> = (0..3).collect();
        picked.shuffle(rng);
        picked.truncate(count);
        picked.sort();
        picked
            .into_iter()
            .map(|n| {
                let neuron = NeuronId::new(layer, 0, n);
                if layer == 1 {
                    let configs = (0..rng.gen_range(0..=2))
                        .map(|_| SymbolTuple::new(["a", "b"][rng.gen_range(0..2)], ["r0", "r1"][rng.gen_range(0..2)]))
                        .collect();
                    PathEdge { neuron, configs, subpath: None }
                } else {
                    let sub = edges(rng, layer - 1);
                    let configs = sub.iter().flat_map(nn2dt_core::edge_input_configs).collect();
                    PathEdge { neuron, configs, subpath: Some(sub) }
                }
            })
            .collect()
    }
    let edges = edges(rng, depth);
    let mut p = DecisionPath {
        network: "synthetic".into(),
        theta: 0.5,
        relevance_mode: "ratio".into(),
        scope: "winner".into(),
        decision: 0,
        label: String::new(),
        input: vec![rng.gen_range(0.0..1.0)],
        edges,
    };
    let mut h = 0usize;
    for (layer, ids) in p.levels() {
        for id in ids {
            h = h.wrapping_mul(31).wrapping_add(layer * 7 + id.neuron);
        }
    }
    h = h.wrapping_add(p.configs().len());
    p.decision = h % 4;
    p.label = format!("d{}", p.decision);
    p
}

/// Flattened `(neuron, config set)` sequence, computed without a store.
pub fn flat_sequence(path: &DecisionPath) -> Vec<(NeuronId, ConfigSet)> {
    fn walk(edges: &[PathEdge], out: &mut Vec<(NeuronId, ConfigSet)>) {
        for e in edges {
            out.push((e.neuron, e.configs.clone()));
            if let Some(s) = &e.subpath {
                walk(s, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(&path.edges, &mut out);
    out
}

pub fn random_config_set(rng: &mut ChaCha8Rng) -> ConfigSet {
    let n = rng.gen_range(0..=4);
    (0..n)
        .map(|_| SymbolTuple::new(format!("f{}", rng.gen_range(0..3)), format!("r{}", rng.gen_range(0..3))))
        .collect::<BTreeSet<_>>()
}

/// 3-4-4-3 network with all inputs at 1: second-layer neuron 2 is the only
/// relevant predecessor of output 0 and itself depends on first-layer
/// neurons 0 (via input u) and 2 (via inputs u and y).
pub fn nested_example() -> NetworkIR {
    use nn2dt_core::model::{InputInfo, Matcher, SymbolDef};
    let dense = |inputs: usize, rows: &[&[f64]], activation| {
        let units = rows.len();
        let mut kernel = vec![0.0; inputs * units];
        for (j, row) in rows.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                kernel[i * units + j] = w;
            }
        }
        LayerIR::dense(inputs, units, &kernel, &[], activation).unwrap()
    };
    let first = dense(3, &[&[1.0, 0.1, 0.1], &[0.1, 1.0, 0.1], &[1.0, 0.1, 1.0], &[0.1, 0.1, 1.0]], ActivationKind::Relu);
    let second = dense(
        4,
        &[&[0.1, 0.1, 0.1, 0.1], &[0.1, 0.1, 0.1, 0.1], &[1.0, 0.01, 1.0, 0.01], &[0.1, 0.1, 0.1, 0.1]],
        ActivationKind::Relu,
    );
    let mut out = dense(
        4,
        &[&[0.01, 0.01, 1.0, 0.01], &[0.1, 0.1, 0.1, 0.1], &[0.1, 0.1, 0.1, 0.1]],
        ActivationKind::Softmax,
    );
    out.kind = LayerKind::Output;
    let input = |name: &str, label: &str| InputInfo {
        name: name.into(),
        symbols: vec![SymbolDef { label: label.into(), matcher: Matcher::Exact(1.0) }],
    };
    let net = NetworkIR {
        name: "nested".into(),
        input_spec: InputSpec { inputs: vec![input("i_u", "b_u"), input("i_x", "b_x"), input("i_y", "b_y")] },
        layers: vec![LayerIR::input(3), first, second, out],
        output_labels: vec!["d0".into(), "d1".into(), "d2".into()],
    };
    net.validate().unwrap();
    net
}

/// Relevant edges recomputed from scratch: local ratio filter, then
/// reachability from the selected outputs.
pub fn brute_force_relevant(net: &NetworkIR, trace: &ActivationTrace, theta: f64, scope: Scope) -> BTreeSet<(usize, usize, usize)> {
    let out = net.layers.len() - 1;
    let mut retained: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); net.layers.len()];
    retained[out] = match scope {
        Scope::WinnerOnly => [trace.decision].into_iter().collect(),
        Scope::AllOutputs => (0..net.output_width()).collect(),
    };
    let mut edges = BTreeSet::new();
    for l in (1..=out).rev() {
        let layer = &net.layers[l];
        if layer.kind == LayerKind::FlattenRemap {
            continue;
        }
        let prev = &trace.output[l - 1];
        for &j in &retained[l].clone() {
            let n = layer.neuron(j).unwrap();
            let c: Vec<f64> = n.in_edges.iter().map(|e| prev[e.source] * e.weight).collect();
            let chosen: Vec<usize> = if layer.kind == LayerKind::MaxPoolForm {
                let best = (0..c.len()).fold(0, |b, i| if c[i] > c[b] { i } else { b });
                if c.is_empty() { vec![] } else { vec![best] }
            } else {
                let m = c.iter().map(|v| v.abs()).chain([n.bias.abs()]).fold(0.0, f64::max);
                if m < 1e-12 {
                    vec![]
                } else {
                    (0..c.len()).filter(|&i| c[i].abs() >= theta * m).collect()
                }
            };
            for e in chosen {
                edges.insert((l, j, e));
                let (sl, sf) = net.resolve_source(l, n.in_edges[e].source);
                retained[sl].insert(sf);
            }
        }
    }
    edges
}

