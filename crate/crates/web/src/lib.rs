//! Browser bindings: the landscape network, its decision tree, and a
//! convolution lowering explorer. Every binding returns a JSON string.

use nn2dt_core::analysis::{forward, Scope};
use nn2dt_core::demo::{landscape_grid, landscape_network};
use nn2dt_core::export::{to_dot, tree_to_value, ExportOptions, Format};
use nn2dt_core::lowering::{lower_conv, ConvSpec, Layout, Padding, ShapeND};
use nn2dt_core::pipeline::{Extractor, Settings};
use nn2dt_core::{RelevanceCriterion, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn settings(theta: f64, scope: &str) -> Result<Settings> {
    let criterion = RelevanceCriterion::Ratio(theta);
    criterion.validate()?;
    Ok(Settings { criterion, scope: Scope::from_name(scope)?, ..Settings::default() })
}

fn dot_options(max_label_len: usize) -> ExportOptions {
    ExportOptions { format: Format::Dot, include_configs: true, max_label_len: max_label_len.max(8) }
}

pub fn landscape_summary() -> Value {
    let net = landscape_network();
    json!({
        "name": net.name,
        "inputs": net.input_spec.inputs.iter().map(|i| json!({
            "name": i.name,
            "symbols": i.symbols.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "classes": net.output_labels,
        "layers": net.layers.iter().map(|l| l.width()).collect::<Vec<_>>(),
        "edges": net.edge_count(),
    })
}

/// Classify one point and show the decision path it takes.
pub fn classify(x: [f64; 3], theta: f64, scope: &str) -> Result<Value> {
    let net = landscape_network();
    let ex = Extractor::new(&net, settings(theta, scope)?)?;
    let trace = forward(&net, &x)?;
    let path = ex.derive(&x)?;
    let tree = ex.document(vec![path.clone()]).merge()?;
    Ok(json!({
        "decision": trace.decision,
        "label": net.output_label(trace.decision),
        "outputs": trace.outputs(),
        "path": path,
        "dot": to_dot(&tree, &dot_options(60)),
    }))
}

/// Merge the paths of the whole input grid and replay the grid through the tree.
pub fn grid_tree(theta: f64, scope: &str, max_label_len: usize) -> Result<Value> {
    let net = landscape_network();
    let ex = Extractor::new(&net, settings(theta, scope)?)?;
    let grid = landscape_grid();
    let tree = ex.tree(&grid)?;
    let mut replayed = 0;
    for x in &grid {
        if let Some(leaf) = ex.lookup(&tree, x)? {
            if leaf.decision == forward(&net, x)?.decision {
                replayed += 1;
            }
        }
    }
    Ok(json!({
        "points": grid.len(),
        "replayed": replayed,
        "nodes": tree.node_count(),
        "leaves": tree.leaves().len(),
        "configs": tree.store.len(),
        "dot": to_dot(&tree, &dot_options(max_label_len)),
        "tree": tree_to_value(&tree),
    }))
}

/// Lower a single-channel 2D convolution and list each output neuron's
/// receptive field as flat input indices.
pub fn conv_lowering(input: [usize; 2], kernel: [usize; 2], strides: [usize; 2], padding: &str) -> Result<Value> {
    let spec = ConvSpec {
        kernel_dims: kernel.to_vec(),
        in_channels: 1,
        out_channels: 1,
        kernel: (1..=kernel[0] * kernel[1]).map(|k| k as f64).collect(),
        strides: strides.to_vec(),
        padding: Padding::from_name(padding)?,
        bias: Vec::new(),
    };
    let shape = ShapeND::new(input.to_vec(), 1);
    let lowered = lower_conv(&spec, &shape, Layout::ChannelsLast)?;
    let neurons: Vec<Value> = lowered
        .layer
        .neurons()
        .map(|n| {
            json!({
                "sources": n.in_edges.iter().map(|e| e.source).collect::<Vec<_>>(),
                "weights": n.in_edges.iter().map(|e| e.weight).collect::<Vec<_>>(),
            })
        })
        .collect();
    let out = &lowered.out_shape.dims;
    Ok(json!({
        "input": input,
        "output": out,
        "edges": lowered.layer.edge_count(),
        "dense_edges": input[0] * input[1] * out.iter().product::<usize>(),
        "neurons": neurons,
    }))
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = landscapeSummary)]
pub fn landscape_summary_js() -> String {
    landscape_summary().to_string()
}

#[wasm_bindgen(js_name = classify)]
pub fn classify_js(altitude: f64, temperature: f64, humidity: f64, theta: f64, scope: &str) -> std::result::Result<String, JsError> {
    to_js(classify([altitude, temperature, humidity], theta, scope))
}

#[wasm_bindgen(js_name = gridTree)]
pub fn grid_tree_js(theta: f64, scope: &str, max_label_len: usize) -> std::result::Result<String, JsError> {
    to_js(grid_tree(theta, scope, max_label_len))
}

#[wasm_bindgen(js_name = convLowering)]
#[allow(clippy::too_many_arguments)]
pub fn conv_lowering_js(
    height: usize,
    width: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride_h: usize,
    stride_w: usize,
    padding: &str,
) -> std::result::Result<String, JsError> {
    to_js(conv_lowering([height, width], [kernel_h, kernel_w], [stride_h, stride_w], padding))
}
