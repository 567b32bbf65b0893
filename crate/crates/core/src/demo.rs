//! Built-in landscape classifier: altitude, temperature and humidity in
//! `[0, 1]` mapped to seven landscape classes by a hand-weighted network.

use crate::model::{
    ActivationKind, Edge, FilterIR, InputInfo, InputSpec, LayerIR, LayerKind, Matcher, NetworkIR, NeuronIR, SymbolDef,
};

pub const LANDSCAPE_CLASSES: [&str; 7] = ["mountain", "swamp", "forest", "steppe", "mangrove", "jungle", "savannah"];

/// Steepness of the first-layer step functions.
const K: f64 = 1000.0;

fn range(lo: f64, hi: f64, hi_closed: bool) -> Matcher {
    Matcher::Range { lo, hi, hi_closed }
}

fn sym(label: &str, matcher: Matcher) -> SymbolDef {
    SymbolDef { label: label.into(), matcher }
}

pub fn landscape_input_spec() -> InputSpec {
    InputSpec {
        inputs: vec![
            InputInfo {
                name: "altitude".into(),
                symbols: vec![sym("flat", range(0.0, 0.5, false)), sym("steep", range(0.5, 1.0, true))],
            },
            InputInfo {
                name: "temperature".into(),
                symbols: vec![sym("cool", range(0.0, 0.5, false)), sym("warm", range(0.5, 1.0, true))],
            },
            InputInfo {
                name: "humidity".into(),
                symbols: vec![
                    sym("dry", range(0.0, 0.33, false)),
                    sym("medium", range(0.33, 0.66, false)),
                    sym("wet", range(0.66, 1.0, true)),
                ],
            },
        ],
    }
}

/// 3 inputs, 8 ReLU step neurons, 7 ReLU class detectors, 7 softmax outputs.
///
/// Each step `x >= c` is the difference of two ReLUs,
/// `relu(K(x - c) + 1) - relu(K(x - c))`; the second layer combines the
/// steps for steep altitude (S), warm temperature (W), humidity at least
/// medium (M) and wet humidity (Wt).
pub fn landscape_network() -> NetworkIR {
    // (input, threshold) for S, W, M, Wt.
    let steps = [(0usize, 0.5), (1, 0.5), (2, 0.33), (2, 0.66)];
    let mut first = Vec::new();
    for &(input, c) in &steps {
        first.push(NeuronIR::new(vec![Edge::new(input, K)], -K * c + 1.0));
        first.push(NeuronIR::new(vec![Edge::new(input, K)], -K * c));
    }

    // Coefficients on (S, W, M, Wt) and a constant, one row per class.
    let rows: [([f64; 4], f64); 7] = [
        ([1.0, 0.0, 0.0, 0.0], 0.0),    // mountain
        ([-1.0, -1.0, 0.0, 1.0], 0.0),  // swamp
        ([-1.0, -1.0, 1.0, -1.0], 0.0), // forest
        ([-1.0, -1.0, -1.0, 0.0], 1.0), // steppe
        ([-1.0, 1.0, 0.0, 1.0], -1.0),  // mangrove
        ([-1.0, 1.0, 1.0, -1.0], -1.0), // jungle
        ([-1.0, 1.0, -1.0, 0.0], 0.0),  // savannah
    ];
    let second = rows
        .iter()
        .map(|(coef, constant)| {
            let mut edges = Vec::new();
            for (f, &a) in coef.iter().enumerate() {
                if a != 0.0 {
                    edges.push(Edge::new(2 * f, a));
                    edges.push(Edge::new(2 * f + 1, -a));
                }
            }
            NeuronIR::new(edges, *constant)
        })
        .collect();

    let output = (0..7).map(|i| NeuronIR::new(vec![Edge::new(i, 2.0)], 0.0)).collect();

    let layer = |kind, activation, neurons| LayerIR {
        kind,
        activation,
        filters: vec![FilterIR { bias: 0.0, neurons }],
        remap: Vec::new(),
    };
    NetworkIR {
        name: "landscape".into(),
        input_spec: landscape_input_spec(),
        layers: vec![
            LayerIR::input(3),
            layer(LayerKind::DenseForm, ActivationKind::Relu, first),
            layer(LayerKind::DenseForm, ActivationKind::Relu, second),
            layer(LayerKind::Output, ActivationKind::Softmax, output),
        ],
        output_labels: LANDSCAPE_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

/// The class a landscape input should receive, from its symbols alone.
pub fn landscape_rule(x: &[f64]) -> usize {
    let steep = x[0] >= 0.5;
    let warm = x[1] >= 0.5;
    let humidity = if x[2] >= 0.66 { 2 } else if x[2] >= 0.33 { 1 } else { 0 };
    match (steep, warm, humidity) {
        (true, _, _) => 0,
        (false, false, 2) => 1,
        (false, false, 1) => 2,
        (false, false, _) => 3,
        (false, true, 2) => 4,
        (false, true, 1) => 5,
        (false, true, _) => 6,
    }
}

/// 200 inputs: altitude and temperature in quarter steps, humidity in sevenths.
pub fn landscape_grid() -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(200);
    for a in 0..5 {
        for t in 0..5 {
            for h in 0..8 {
                out.push(vec![a as f64 / 4.0, t as f64 / 4.0, h as f64 / 7.0]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::forward;

    #[test]
    fn network_is_valid() {
        let net = landscape_network();
        net.validate().unwrap();
        assert_eq!(net.hidden_layers(), vec![1, 2]);
        assert_eq!(net.output_width(), 7);
    }

    #[test]
    fn grid_decisions_follow_the_rule() {
        let net = landscape_network();
        let grid = landscape_grid();
        assert_eq!(grid.len(), 200);
        for x in grid {
            assert_eq!(forward(&net, &x).unwrap().decision, landscape_rule(&x), "{x:?}");
        }
    }

    #[test]
    fn every_class_occurs_on_the_grid() {
        let mut seen = [false; 7];
        for x in landscape_grid() {
            seen[landscape_rule(&x)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn flat_warm_medium_first_layer_net_input() {
        // Each first-layer neuron sees one input: net = w * x + bias.
        let net = landscape_network();
        let trace = forward(&net, &[0.0, 1.0, 0.5]).unwrap();
        let first = &net.layers[1];
        for (j, n) in first.neurons().enumerate() {
            let e = n.in_edges[0];
            let x = [0.0, 1.0, 0.5][e.source];
            assert_eq!(trace.net_input[1][j], e.weight * x + n.bias);
        }
        assert_eq!(LANDSCAPE_CLASSES[trace.decision], "jungle");
    }
}
