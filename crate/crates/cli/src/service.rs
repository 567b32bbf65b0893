//! Local HTTP API over one loaded network.
//!
//! Reads take the session lock briefly; a second mutation while one is in
//! flight is answered with 409.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nn2dt_core::analysis::{forward, propagate_bounds, ActivationTrace, IntervalBounds};
use nn2dt_core::derivation::DecisionPath;
use nn2dt_core::export::{tree_to_json, tree_to_value};
use nn2dt_core::merging::DecisionTree;
use nn2dt_core::model::{InputFunction, LayerKind, NetworkIR, NeuronId};
use nn2dt_core::pipeline::{Extractor, Settings};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{Failure, Params};

#[derive(Debug, Default)]
pub struct Session {
    pub input: Option<Vec<f64>>,
    pub trace: Option<ActivationTrace>,
    pub extractor: Option<Extractor>,
    pub paths: Vec<DecisionPath>,
    pub tree: Option<DecisionTree>,
}

#[derive(Debug)]
pub struct AppState {
    pub net: NetworkIR,
    pub input_range: (f64, f64),
    pub bounds: IntervalBounds,
    /// `successors[layer][flat]`: consumers of that neuron's output and the edge weight.
    successors: Vec<Vec<Vec<(NeuronId, f64)>>>,
    pub session: RwLock<Session>,
    busy: AtomicBool,
}

pub struct MutationGuard(Arc<AppState>);

impl Drop for MutationGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

impl AppState {
    pub fn new(net: NetworkIR, input_range: (f64, f64)) -> Result<Arc<Self>, Failure> {
        let bounds = propagate_bounds(&net, &net.input_spec.ranges(input_range))?;
        let mut successors: Vec<Vec<Vec<(NeuronId, f64)>>> = net.layers.iter().map(|l| vec![Vec::new(); l.width()]).collect();
        for (l, layer) in net.layers.iter().enumerate().skip(1) {
            if !layer.has_neurons() {
                continue;
            }
            for (j, n) in layer.neurons().enumerate() {
                let id = net.id_of(l, j);
                for e in &n.in_edges {
                    let (sl, sj) = net.resolve_source(l, e.source);
                    successors[sl][sj].push((id, e.weight));
                }
            }
        }
        Ok(Arc::new(AppState { net, input_range, bounds, successors, session: RwLock::new(Session::default()), busy: AtomicBool::new(false) }))
    }

    /// Claim the single mutation slot; `None` while another mutation runs.
    pub fn begin_mutation(self: &Arc<Self>) -> Option<MutationGuard> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| MutationGuard(self.clone()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/network", get(network))
        .route("/neuron/{layer}/{filter}/{neuron}", get(neuron))
        .route("/inputs", post(set_inputs))
        .route("/derive", post(derive))
        .route("/tree", get(tree))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn busy() -> Response {
    error(StatusCode::CONFLICT, "another mutation is in progress")
}

fn function_name(f: InputFunction) -> &'static str {
    match f {
        InputFunction::Sum => "sum",
        InputFunction::Max => "max",
    }
}

async fn network(State(s): State<Arc<AppState>>) -> Json<Value> {
    let net = &s.net;
    let layers: Vec<Value> = net
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut v = json!({
                "index": i,
                "kind": l.kind.name(),
                "activation": l.activation.name(),
                "input_function": function_name(l.input_function()),
                "filters": l.filters.iter().map(|f| f.neurons.len()).collect::<Vec<_>>(),
                "neurons": l.width(),
                "edges": l.edge_count(),
            });
            if l.kind == LayerKind::FlattenRemap {
                v["remap"] = json!(l.remap.len());
            }
            v
        })
        .collect();
    let inputs: Vec<Value> = net
        .input_spec
        .inputs
        .iter()
        .map(|i| json!({ "name": i.name, "symbols": i.symbols.iter().map(|d| d.label.clone()).collect::<Vec<_>>() }))
        .collect();
    let current = s.session.read().expect("session lock").input.clone();
    Json(json!({
        "name": net.name,
        "fingerprint": net.fingerprint(),
        "inputs": inputs,
        "output_labels": (0..net.output_width()).map(|d| net.output_label(d)).collect::<Vec<_>>(),
        "layers": layers,
        "current_input": current,
    }))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

async fn neuron(State(s): State<Arc<AppState>>, Path((layer, filter, idx)): Path<(usize, usize, usize)>) -> Response {
    let net = &s.net;
    let id = NeuronId::new(layer, filter, idx);
    let (Some(n), Some(flat)) = (net.neuron(id), net.layers.get(layer).and_then(|l| l.flat_index(filter, idx))) else {
        return error(StatusCode::NOT_FOUND, format!("no neuron {layer}/{filter}/{idx}"));
    };
    let session = s.session.read().expect("session lock");
    let trace = session.trace.as_ref();
    let in_edges: Vec<Value> = n
        .in_edges
        .iter()
        .map(|e| {
            let (sl, sj) = net.resolve_source(layer, e.source);
            json!({
                "source": net.id_of(sl, sj),
                "weight": e.weight,
                "activation": trace.map(|t| t.output[layer - 1][e.source]),
            })
        })
        .collect();
    let outs = &s.successors[layer][flat];
    let out_edges: Vec<Value> = outs.iter().map(|(t, w)| json!({ "target": t, "weight": w })).collect();
    let b = s.bounds.get(layer, flat);
    let l = &net.layers[layer];
    Json(json!({
        "id": id,
        "kind": l.kind.name(),
        "activation": l.activation.name(),
        "input_function": function_name(l.input_function()),
        "bias": n.bias,
        "pruned": n.pruned,
        "in_edges": in_edges,
        "out_edges": out_edges,
        "net_input": trace.map(|t| t.net_input[layer][flat]),
        "output": trace.map(|t| t.output[layer][flat]),
        "bounds": { "min": b.lo, "max": b.hi },
        "averages": {
            "in_weight": mean(n.in_edges.iter().map(|e| e.weight)),
            "in_weight_abs": mean(n.in_edges.iter().map(|e| e.weight.abs())),
            "out_weight": mean(outs.iter().map(|(_, w)| *w)),
            "in_activation": trace.and_then(|t| mean(n.in_edges.iter().map(|e| t.output[layer - 1][e.source]))),
        },
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
pub struct InputsRequest {
    pub vector: Vec<f64>,
}

async fn set_inputs(State(s): State<Arc<AppState>>, Json(req): Json<InputsRequest>) -> Response {
    let Some(_guard) = s.begin_mutation() else { return busy() };
    let trace = match forward(&s.net, &req.vector) {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let body = json!({
        "input": req.vector,
        "decision": trace.decision,
        "label": s.net.output_label(trace.decision),
        "outputs": trace.outputs(),
    });
    let mut session = s.session.write().expect("session lock");
    session.input = Some(req.vector);
    session.trace = Some(trace);
    Json(body).into_response()
}

#[derive(Debug, Deserialize)]
pub struct DeriveRequest {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_scope")]
    pub scope: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Replace the session's paths with one path per vector.
    pub inputs: Option<Vec<Vec<f64>>>,
}

fn default_theta() -> f64 {
    0.5
}

fn default_scope() -> String {
    "winner".into()
}

fn default_mode() -> String {
    "ratio".into()
}

/// Without `inputs`, the current input's path joins the session's paths
/// when the settings are unchanged, and starts a fresh set otherwise.
async fn derive(State(s): State<Arc<AppState>>, Json(req): Json<DeriveRequest>) -> Response {
    let Some(_guard) = s.begin_mutation() else { return busy() };
    let params = Params { theta: req.theta, epsilon: req.epsilon, scope: req.scope, mode: req.mode, input_range: Some(s.input_range) };
    let settings: Settings = match params.settings() {
        Ok(v) => v,
        Err(f) => return error(StatusCode::BAD_REQUEST, f.message),
    };
    let mut session = s.session.write().expect("session lock");
    let reuse = session.extractor.as_ref().is_some_and(|e| e.settings == settings);
    if !reuse {
        match Extractor::new(&s.net, settings) {
            Ok(e) => session.extractor = Some(e),
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        }
        session.paths.clear();
    }
    let ex = session.extractor.as_ref().expect("extractor");
    let (paths, path) = match &req.inputs {
        Some(batch) => match ex.derive_all(batch) {
            Ok(doc) => {
                let last = doc.paths.last().cloned();
                (doc.paths, last)
            }
            Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
        },
        None => {
            let Some(x) = session.input.as_ref() else {
                return error(StatusCode::BAD_REQUEST, "no current input; POST /inputs first");
            };
            match ex.derive(x) {
                Ok(p) => {
                    let mut all = if reuse { session.paths.clone() } else { Vec::new() };
                    all.push(p.clone());
                    (all, Some(p))
                }
                Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
            }
        }
    };
    let tree = match ex.document(paths.clone()).merge() {
        Ok(t) => t,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let body = json!({ "path": path, "paths": paths.len(), "tree": tree_to_value(&tree) });
    session.paths = paths;
    session.tree = Some(tree);
    Json(body).into_response()
}

/// Same bytes as `nn2dt merge` writes for the same paths.
async fn tree(State(s): State<Arc<AppState>>) -> Response {
    match &s.session.read().expect("session lock").tree {
        Some(t) => ([(header::CONTENT_TYPE, "application/json")], tree_to_json(t)).into_response(),
        None => error(StatusCode::NOT_FOUND, "no tree derived yet"),
    }
}
