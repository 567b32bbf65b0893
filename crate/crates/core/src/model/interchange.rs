//! The interchange document: canonical JSON form of a [`NetworkIR`].
//!
//! Keys are emitted in sorted order and every float with 17 significant
//! digits, so structurally equal networks serialize to identical bytes.
//! Two optional neuron keys extend the documented layout: `bias` (present
//! only when it differs from the filter bias) and `pruned`.

use std::fmt::Write as _;

use serde::Deserialize;

use super::{
    ActivationKind, Edge, FilterIR, InputInfo, InputSpec, LayerIR, LayerKind, Matcher, NetworkIR,
    NeuronIR, SymbolDef,
};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct NetworkDoc {
    name: String,
    #[serde(default)]
    input_spec: Vec<InputDoc>,
    layers: Vec<LayerDoc>,
    #[serde(default)]
    output_labels: Vec<String>,
}

#[derive(Deserialize)]
pub(super) struct InputDoc {
    name: String,
    #[serde(default)]
    symbols: Vec<SymbolDoc>,
}

#[derive(Deserialize)]
struct SymbolDoc {
    label: String,
    #[serde(rename = "match")]
    matcher: MatchDoc,
}

#[derive(Deserialize)]
struct MatchDoc {
    eq: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
    #[serde(default)]
    hi_closed: bool,
}

#[derive(Deserialize)]
struct LayerDoc {
    kind: String,
    activation: String,
    #[serde(default)]
    filters: Vec<FilterDoc>,
    #[serde(default)]
    remap: Option<Vec<usize>>,
}

#[derive(Deserialize)]
struct FilterDoc {
    bias: f64,
    neurons: Vec<NeuronDoc>,
}

#[derive(Deserialize)]
struct NeuronDoc {
    #[serde(default)]
    in_edges: Vec<(usize, f64)>,
    bias: Option<f64>,
    #[serde(default)]
    pruned: bool,
}

pub fn parse_interchange(bytes: &[u8]) -> Result<NetworkIR> {
    let doc: NetworkDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    if doc.layers.is_empty() {
        return Err(Error::NoLayers);
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (l, ld) in doc.layers.into_iter().enumerate() {
        let kind = LayerKind::from_name(&ld.kind)?;
        let activation = ActivationKind::from_name(&ld.activation)?;
        let filters = ld
            .filters
            .into_iter()
            .map(|fd| FilterIR {
                bias: fd.bias,
                neurons: fd
                    .neurons
                    .into_iter()
                    .map(|nd| NeuronIR {
                        in_edges: nd.in_edges.into_iter().map(|(s, w)| Edge::new(s, w)).collect(),
                        bias: nd.bias.unwrap_or(fd.bias),
                        pruned: nd.pruned,
                    })
                    .collect(),
            })
            .collect();
        let remap = match (kind, ld.remap) {
            (LayerKind::FlattenRemap, Some(r)) => r,
            (LayerKind::FlattenRemap, None) => {
                return Err(Error::Malformed(format!("layer {l}: flatten layer without remap")))
            }
            (_, Some(_)) => {
                return Err(Error::Malformed(format!("layer {l}: remap on a non-flatten layer")))
            }
            (_, None) => Vec::new(),
        };
        layers.push(LayerIR { kind, activation, filters, remap });
    }
    let input_spec = build_input_spec(doc.input_spec, layers[0].width())?;
    let net = NetworkIR { name: doc.name, input_spec, layers, output_labels: doc.output_labels };
    net.validate()?;
    Ok(net)
}

/// Symbol tables from their document form; an empty list yields unnamed raw inputs.
pub(super) fn build_input_spec(docs: Vec<InputDoc>, width: usize) -> Result<InputSpec> {
    if docs.is_empty() {
        return Ok(InputSpec::unnamed(width));
    }
    let mut inputs = Vec::with_capacity(docs.len());
    for info in docs {
        let mut symbols = Vec::with_capacity(info.symbols.len());
        for s in info.symbols {
            let matcher = match (s.matcher.eq, s.matcher.lo, s.matcher.hi) {
                (Some(v), None, None) => Matcher::Exact(v),
                (None, Some(lo), Some(hi)) => Matcher::Range { lo, hi, hi_closed: s.matcher.hi_closed },
                _ => {
                    return Err(Error::Malformed(format!(
                        "symbol `{}`: matcher needs either `eq` or both `lo` and `hi`",
                        s.label
                    )))
                }
            };
            symbols.push(SymbolDef { label: s.label, matcher });
        }
        inputs.push(InputInfo { name: info.name, symbols });
    }
    Ok(InputSpec { inputs })
}

fn push_f64(out: &mut String, x: f64) {
    // 17 significant digits round-trip every finite double.
    let _ = write!(out, "{x:.16e}");
}

fn push_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization"));
}

pub fn serialize_interchange(net: &NetworkIR) -> Vec<u8> {
    let mut out = String::with_capacity(64 + net.edge_count() * 28);
    out.push_str("{\"input_spec\":[");
    for (i, info) in net.input_spec.inputs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"name\":");
        push_str(&mut out, &info.name);
        out.push_str(",\"symbols\":[");
        for (k, s) in info.symbols.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str("{\"label\":");
            push_str(&mut out, &s.label);
            out.push_str(",\"match\":{");
            match s.matcher {
                Matcher::Exact(v) => {
                    out.push_str("\"eq\":");
                    push_f64(&mut out, v);
                }
                Matcher::Range { lo, hi, hi_closed } => {
                    out.push_str("\"hi\":");
                    push_f64(&mut out, hi);
                    if hi_closed {
                        out.push_str(",\"hi_closed\":true");
                    }
                    out.push_str(",\"lo\":");
                    push_f64(&mut out, lo);
                }
            }
            out.push_str("}}");
        }
        out.push_str("]}");
    }
    out.push_str("],\n\"layers\":[\n");
    for (l, layer) in net.layers.iter().enumerate() {
        if l > 0 {
            out.push_str(",\n");
        }
        out.push_str("{\"activation\":");
        push_str(&mut out, layer.activation.name());
        out.push_str(",\"filters\":[");
        for (f, filter) in layer.filters.iter().enumerate() {
            if f > 0 {
                out.push(',');
            }
            out.push_str("{\"bias\":");
            push_f64(&mut out, filter.bias);
            out.push_str(",\"neurons\":[");
            for (n, neuron) in filter.neurons.iter().enumerate() {
                if n > 0 {
                    out.push(',');
                }
                out.push('{');
                if neuron.bias.to_bits() != filter.bias.to_bits() {
                    out.push_str("\"bias\":");
                    push_f64(&mut out, neuron.bias);
                    out.push(',');
                }
                out.push_str("\"in_edges\":[");
                for (e, edge) in neuron.in_edges.iter().enumerate() {
                    if e > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "[{},", edge.source);
                    push_f64(&mut out, edge.weight);
                    out.push(']');
                }
                out.push(']');
                if neuron.pruned {
                    out.push_str(",\"pruned\":true");
                }
                out.push('}');
            }
            out.push_str("]}");
        }
        out.push_str("],\"kind\":");
        push_str(&mut out, layer.kind.name());
        if layer.kind == LayerKind::FlattenRemap {
            out.push_str(",\"remap\":[");
            for (i, r) in layer.remap.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{r}");
            }
            out.push(']');
        }
        out.push('}');
    }
    out.push_str("\n],\n\"name\":");
    push_str(&mut out, &net.name);
    out.push_str(",\"output_labels\":[");
    for (i, label) in net.output_labels.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_str(&mut out, label);
    }
    out.push_str("]}\n");
    out.into_bytes()
}
