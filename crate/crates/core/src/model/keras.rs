//! Keras-style `model_config` ingestion.
//!
//! Dense kernels arrive as `[in, out]`, convolution kernels as
//! `[spatial..., in_channels, out_channels]`; both row-major, exactly as the
//! framework stores them. Convolution, pooling and flatten layers are lowered
//! on the fly while the running tensor shape is tracked.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::interchange::{build_input_spec, InputDoc};
use super::{ActivationKind, LayerIR, LayerKind, NetworkIR};
use crate::error::{Error, Result};
use crate::lowering::{lower_conv, lower_flatten, lower_maxpool, ConvSpec, Layout, Padding, ShapeND};

/// Dense row-major array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Build from arbitrarily nested JSON number arrays.
    pub fn from_json(value: &Value) -> Result<Self> {
        fn walk(v: &Value, depth: usize, shape: &mut Vec<usize>, data: &mut Vec<f64>) -> Result<()> {
            match v {
                Value::Number(n) => {
                    if depth != shape.len() {
                        return Err(Error::Malformed("ragged weight array".into()));
                    }
                    data.push(n.as_f64().ok_or_else(|| Error::Malformed("bad number".into()))?);
                    Ok(())
                }
                Value::Array(items) => {
                    if depth == shape.len() {
                        if !data.is_empty() {
                            return Err(Error::Malformed("ragged weight array".into()));
                        }
                        shape.push(items.len());
                    } else if shape[depth] != items.len() {
                        return Err(Error::Malformed("ragged weight array".into()));
                    }
                    items.iter().try_for_each(|item| walk(item, depth + 1, shape, data))
                }
                _ => Err(Error::Malformed("weight arrays may only hold numbers".into())),
            }
        }
        let mut shape = Vec::new();
        let mut data = Vec::new();
        walk(value, 0, &mut shape, &mut data)?;
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Malformed("ragged weight array".into()));
        }
        Ok(Tensor { shape, data })
    }
}

/// Weight groups keyed `layer_name/kernel` and `layer_name/bias`.
pub type WeightTable = BTreeMap<String, Tensor>;

/// The running tensor between layers.
enum Flow {
    Flat(usize),
    Shaped(ShapeND, Layout),
}

impl Flow {
    fn width(&self) -> usize {
        match self {
            Flow::Flat(n) => *n,
            Flow::Shaped(s, _) => s.len(),
        }
    }
}

fn usize_field(cfg: &Value, key: &str) -> Option<usize> {
    cfg.get(key).and_then(Value::as_u64).map(|v| v as usize)
}

/// `kernel_size`-style fields: an int or a list of ints.
fn dims_field(cfg: &Value, key: &str, rank: usize) -> Result<Option<Vec<usize>>> {
    match cfg.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => {
            let v = n.as_u64().ok_or_else(|| Error::Malformed(format!("`{key}` must be a positive integer")))?;
            Ok(Some(vec![v as usize; rank]))
        }
        Some(Value::Array(items)) => {
            let dims = items
                .iter()
                .map(|i| i.as_u64().map(|v| v as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Malformed(format!("`{key}` must hold integers")))?;
            if dims.len() != rank {
                return Err(Error::ShapeMismatch(format!("`{key}` has {} entries, rank is {rank}", dims.len())));
            }
            Ok(Some(dims))
        }
        Some(_) => Err(Error::Malformed(format!("`{key}` has an unexpected type"))),
    }
}

fn activation_field(cfg: &Value) -> Result<ActivationKind> {
    match cfg.get("activation") {
        None | Some(Value::Null) => Ok(ActivationKind::Linear),
        Some(Value::String(s)) => ActivationKind::from_name(s),
        Some(other) => Err(Error::UnknownActivation(other.to_string())),
    }
}

fn padding_field(cfg: &Value) -> Result<Padding> {
    Padding::from_name(cfg.get("padding").and_then(Value::as_str).unwrap_or("valid"))
}

fn batch_shape(cfg: &Value) -> Option<Vec<usize>> {
    let shape = cfg.get("batch_input_shape").or_else(|| cfg.get("batch_shape"))?.as_array()?;
    shape[1..].iter().map(|d| d.as_u64().map(|v| v as usize)).collect()
}

fn flow_from_shape(shape: &[usize]) -> Result<Flow> {
    match shape.len() {
        0 => Err(Error::ShapeMismatch("input shape is empty".into())),
        1 => Ok(Flow::Flat(shape[0])),
        n if n <= 4 => {
            let (dims, channels) = shape.split_at(n - 1);
            Ok(Flow::Shaped(ShapeND::new(dims.to_vec(), channels[0]), Layout::ChannelsLast))
        }
        n => Err(Error::ShapeMismatch(format!("input rank {n} unsupported"))),
    }
}

fn weights<'a>(table: &'a WeightTable, name: &str, part: &str) -> Result<&'a Tensor> {
    let key = format!("{name}/{part}");
    table.get(&key).ok_or(Error::MissingWeights(key))
}

fn optional_bias(table: &WeightTable, name: &str, cfg: &Value, units: usize) -> Result<Vec<f64>> {
    if !cfg.get("use_bias").and_then(Value::as_bool).unwrap_or(true) {
        return Ok(Vec::new());
    }
    let bias = weights(table, name, "bias")?;
    if bias.shape != [units] {
        return Err(Error::ShapeMismatch(format!("{name}/bias has shape {:?}, expected [{units}]", bias.shape)));
    }
    Ok(bias.data.clone())
}

fn layer_entries(config: &Value) -> Result<&Vec<Value>> {
    let inner = config.get("config").unwrap_or(config);
    inner
        .as_array()
        .or_else(|| inner.get("layers").and_then(Value::as_array))
        .ok_or_else(|| Error::Malformed("model_config lists no layers".into()))
}

/// Build a network from a `model_config` JSON string and its weight table.
pub fn parse_model_archive(model_config: &str, table: &WeightTable) -> Result<NetworkIR> {
    let config: Value = serde_json::from_str(model_config).map_err(|e| Error::Malformed(e.to_string()))?;
    let entries = layer_entries(&config)?;
    if entries.is_empty() {
        return Err(Error::NoLayers);
    }
    let name = config
        .get("config")
        .and_then(|c| c.get("name"))
        .and_then(Value::as_str)
        .unwrap_or("model")
        .to_string();

    let mut layers: Vec<LayerIR> = Vec::new();
    let mut flow: Option<Flow> = None;
    for entry in entries {
        let class = entry
            .get("class_name")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Malformed("layer without class_name".into()))?;
        let cfg = entry.get("config").cloned().unwrap_or(Value::Null);
        let lname = cfg.get("name").and_then(Value::as_str).unwrap_or(class).to_string();

        if flow.is_none() {
            let shape = batch_shape(&cfg).ok_or_else(|| {
                Error::Malformed(format!("first layer `{lname}` does not declare an input shape"))
            })?;
            let f = flow_from_shape(&shape)?;
            layers.push(LayerIR::input(f.width()));
            flow = Some(f);
            if class == "InputLayer" {
                continue;
            }
        } else if class == "InputLayer" {
            return Err(Error::Malformed("InputLayer after the first layer".into()));
        }
        let current = flow.take().expect("flow initialised");

        let (layer, next) = match class {
            "Dense" => {
                let Flow::Flat(inputs) = current else {
                    return Err(Error::ShapeMismatch(format!("Dense layer `{lname}` needs a flat input")));
                };
                let units = usize_field(&cfg, "units")
                    .ok_or_else(|| Error::Malformed(format!("Dense layer `{lname}` lacks units")))?;
                let kernel = weights(table, &lname, "kernel")?;
                if kernel.shape != [inputs, units] {
                    return Err(Error::ShapeMismatch(format!(
                        "{lname}/kernel has shape {:?}, expected [{inputs}, {units}]",
                        kernel.shape
                    )));
                }
                let bias = optional_bias(table, &lname, &cfg, units)?;
                (LayerIR::dense(inputs, units, &kernel.data, &bias, activation_field(&cfg)?)?, Flow::Flat(units))
            }
            "Conv1D" | "Conv2D" | "Conv3D" => {
                let rank = (class.as_bytes()[4] - b'0') as usize;
                let Flow::Shaped(in_shape, layout) = current else {
                    return Err(Error::ShapeMismatch(format!("{class} layer `{lname}` needs a shaped input")));
                };
                if in_shape.rank() != rank {
                    return Err(Error::ShapeMismatch(format!(
                        "{class} layer `{lname}` applied to rank-{} input",
                        in_shape.rank()
                    )));
                }
                if let Some(fmt) = cfg.get("data_format").and_then(Value::as_str) {
                    if fmt != "channels_last" {
                        return Err(Error::UnsupportedLayer(format!("{class} with data_format {fmt}")));
                    }
                }
                if let Some(d) = dims_field(&cfg, "dilation_rate", rank)? {
                    if d.iter().any(|&x| x != 1) {
                        return Err(Error::UnsupportedLayer(format!("dilated {class}")));
                    }
                }
                let filters = usize_field(&cfg, "filters")
                    .ok_or_else(|| Error::Malformed(format!("{class} layer `{lname}` lacks filters")))?;
                let kernel_dims = dims_field(&cfg, "kernel_size", rank)?
                    .ok_or_else(|| Error::Malformed(format!("{class} layer `{lname}` lacks kernel_size")))?;
                let strides = dims_field(&cfg, "strides", rank)?.unwrap_or_else(|| vec![1; rank]);
                let kernel = weights(table, &lname, "kernel")?;
                let mut expected = kernel_dims.clone();
                expected.extend([in_shape.channels, filters]);
                if kernel.shape != expected {
                    return Err(Error::ShapeMismatch(format!(
                        "{lname}/kernel has shape {:?}, expected {expected:?}",
                        kernel.shape
                    )));
                }
                let spec = ConvSpec {
                    kernel_dims,
                    in_channels: in_shape.channels,
                    out_channels: filters,
                    kernel: kernel.data.clone(),
                    strides,
                    padding: padding_field(&cfg)?,
                    bias: optional_bias(table, &lname, &cfg, filters)?,
                };
                let mut lowered = lower_conv(&spec, &in_shape, layout)?;
                lowered.layer.activation = activation_field(&cfg)?;
                (lowered.layer, Flow::Shaped(lowered.out_shape, Layout::FilterMajor))
            }
            "MaxPooling1D" | "MaxPooling2D" | "MaxPooling3D" => {
                let rank = (class.as_bytes()[10] - b'0') as usize;
                let Flow::Shaped(in_shape, layout) = current else {
                    return Err(Error::ShapeMismatch(format!("{class} layer `{lname}` needs a shaped input")));
                };
                let pool = dims_field(&cfg, "pool_size", rank)?.unwrap_or_else(|| vec![2; rank]);
                let strides = dims_field(&cfg, "strides", rank)?.unwrap_or_else(|| pool.clone());
                let lowered = lower_maxpool(&pool, &strides, padding_field(&cfg)?, &in_shape, layout)?;
                (lowered.layer, Flow::Shaped(lowered.out_shape, Layout::FilterMajor))
            }
            "Flatten" => match current {
                Flow::Shaped(shape, layout) => {
                    let n = shape.len();
                    (lower_flatten(&shape, layout), Flow::Flat(n))
                }
                Flow::Flat(n) => (lower_flatten(&ShapeND::new(vec![n], 1), Layout::ChannelsLast), Flow::Flat(n)),
            },
            other => return Err(Error::UnsupportedLayer(other.to_string())),
        };
        layers.push(layer);
        flow = Some(next);
    }

    let last = layers.last_mut().expect("at least the input layer");
    match last.kind {
        LayerKind::Input => return Err(Error::InvalidNetwork("model has no layers after its input".into())),
        LayerKind::FlattenRemap => return Err(Error::InvalidNetwork("model ends in a flatten layer".into())),
        _ => last.kind = LayerKind::Output,
    }
    let width = layers[0].width();
    let net = NetworkIR {
        name,
        input_spec: build_input_spec(Vec::new(), width)?,
        layers,
        output_labels: Vec::new(),
    };
    net.validate()?;
    Ok(net)
}

#[derive(Deserialize)]
struct ArchiveDoc {
    model_config: Value,
    #[serde(default)]
    weights: BTreeMap<String, Value>,
    #[serde(default)]
    input_spec: Vec<InputDoc>,
    #[serde(default)]
    output_labels: Vec<String>,
    name: Option<String>,
}

/// Read a single-file archive: `{model_config, weights, input_spec?, output_labels?, name?}`.
/// `model_config` may be the JSON string as stored by the framework or an inline object.
pub fn parse_keras_archive(bytes: &[u8]) -> Result<NetworkIR> {
    let doc: ArchiveDoc = serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    let config = match doc.model_config {
        Value::String(s) => s,
        other => other.to_string(),
    };
    let table = doc
        .weights
        .iter()
        .map(|(k, v)| Ok((k.clone(), Tensor::from_json(v)?)))
        .collect::<Result<WeightTable>>()?;
    let mut net = parse_model_archive(&config, &table)?;
    if let Some(name) = doc.name {
        net.name = name;
    }
    net.input_spec = build_input_spec(doc.input_spec, net.input_width())?;
    net.output_labels = doc.output_labels;
    net.validate()?;
    Ok(net)
}
