//! Batch pipeline and local HTTP service for decision-tree extraction.

pub mod service;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nn2dt_core::analysis::{forward, RelevanceCriterion, Scope};
use nn2dt_core::export::{export_tree, tree_from_json, ExportOptions, Format, PathsDocument};
use nn2dt_core::merging::DecisionTree;
use nn2dt_core::model::{parse_interchange, parse_keras_archive, serialize_interchange, NetworkIR};
use nn2dt_core::pipeline::{Extractor, Settings};
use nn2dt_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
    }

    fn parse(message: impl Into<String>) -> Self {
        Failure { code: EXIT_PARSE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. }
            | Error::NonFiniteInput(_)
            | Error::NoSymbol { .. }
            | Error::AmbiguousSymbol { .. }
            | Error::NoHiddenLayers
            | Error::EmptyPenultimate
            | Error::NetworkMismatch
            | Error::ConflictingLeaf(..)
            | Error::NoPaths
            | Error::UnknownNeuron(_) => EXIT_INPUT,
            _ => EXIT_PARSE,
        };
        Failure { code, message: e.to_string() }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "nn2dt", version, about = "Derive decision trees from feedforward and convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a model archive (or interchange document) to canonical interchange form.
    Import {
        archive: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Derive one decision path per input vector.
    Derive {
        network: PathBuf,
        inputs: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        params: Params,
    },
    /// Merge one or more paths files into a decision tree.
    Merge {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Render a tree file as DOT or JSON.
    Export {
        tree: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
        #[arg(long, default_value_t = 80)]
        max_label_len: usize,
        #[arg(long)]
        no_configs: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print decision and output activations for each input vector.
    Predict {
        network: PathBuf,
        inputs: PathBuf,
    },
    /// Serve the inspection API for one network.
    Serve {
        network: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, value_parser = parse_range)]
        input_range: Option<(f64, f64)>,
    },
    /// Write the built-in landscape network, optionally with its input grid.
    Demo {
        out: PathBuf,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Params {
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon: f64,
    #[arg(long, default_value = "winner")]
    pub scope: String,
    #[arg(long, default_value = "ratio")]
    pub mode: String,
    /// Range for inputs without a symbol table, as `lo,hi`.
    #[arg(long, value_parser = parse_range)]
    pub input_range: Option<(f64, f64)>,
}

impl Params {
    pub fn settings(&self) -> Outcome<Settings> {
        let criterion = RelevanceCriterion::from_parts(&self.mode, self.theta)?;
        let scope = Scope::from_name(&self.scope)?;
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidEpsilon(self.epsilon).into());
        }
        Ok(Settings {
            criterion,
            scope,
            epsilon: self.epsilon,
            input_range: self.input_range.unwrap_or(nn2dt_core::pipeline::DEFAULT_INPUT_RANGE),
        })
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err("range needs finite lo <= hi".into());
    }
    Ok((lo, hi))
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_text(path: &Path) -> Outcome<String> {
    String::from_utf8(read(path)?).map_err(|_| Failure::parse(format!("{}: not UTF-8", path.display())))
}

fn emit(out: Option<&Path>, text: &[u8]) -> Outcome<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::io(p, e)),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text).map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

/// Interchange document or model archive, told apart by a `model_config` key.
pub fn load_network(bytes: &[u8]) -> Outcome<NetworkIR> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Failure::parse(format!("malformed document: {e}")))?;
    let net = if value.get("model_config").is_some() { parse_keras_archive(bytes)? } else { parse_interchange(bytes)? };
    Ok(net)
}

/// One comma-separated vector per line; blank lines and `#` comments skipped.
pub fn parse_inputs(text: &str) -> Outcome<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Failure::parse(format!("inputs line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn format_inputs(inputs: &[Vec<f64>]) -> String {
    inputs.iter().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",") + "\n").collect()
}

pub fn cmd_import(archive: &Path) -> Outcome<Vec<u8>> {
    Ok(serialize_interchange(&load_network(&read(archive)?)?))
}

pub fn cmd_derive(network: &Path, inputs: &Path, params: &Params) -> Outcome<PathsDocument> {
    let settings = params.settings()?;
    let net = load_network(&read(network)?)?;
    let inputs = parse_inputs(&read_text(inputs)?)?;
    for x in &inputs {
        if x.len() != net.input_width() {
            return Err(Error::DimensionMismatch { expected: net.input_width(), got: x.len() }.into());
        }
    }
    let ex = Extractor::new(&net, settings)?;
    Ok(ex.derive_all(&inputs)?)
}

pub fn cmd_merge(paths: &[PathBuf]) -> Outcome<DecisionTree> {
    let mut docs = Vec::new();
    for p in paths {
        docs.push(PathsDocument::from_json(&read_text(p)?)?);
    }
    let first = docs.first().ok_or(Error::NoPaths)?;
    let mut tree = DecisionTree::new(first.meta());
    for d in &docs {
        if d.meta() != first.meta() {
            return Err(Failure { code: EXIT_INPUT, message: "paths files come from different networks or settings".into() });
        }
        for p in &d.paths {
            tree.insert(p)?;
        }
    }
    tree.canonicalize();
    Ok(tree)
}

pub fn cmd_export(tree: &Path, opts: &ExportOptions) -> Outcome<String> {
    let tree = tree_from_json(&read_text(tree)?)?;
    Ok(export_tree(&tree, opts)?)
}

pub fn cmd_predict(network: &Path, inputs: &Path) -> Outcome<String> {
    let net = load_network(&read(network)?)?;
    let mut out = String::new();
    for x in parse_inputs(&read_text(inputs)?)? {
        let trace = forward(&net, &x)?;
        let line = serde_json::json!({
            "decision": trace.decision,
            "label": net.output_label(trace.decision),
            "outputs": trace.outputs(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Import { archive, out } => emit(out.as_deref(), &cmd_import(&archive)?),
        Command::Derive { network, inputs, out, params } => {
            emit(out.as_deref(), cmd_derive(&network, &inputs, &params)?.to_json().as_bytes())
        }
        Command::Merge { paths, out } => {
            emit(out.as_deref(), nn2dt_core::export::tree_to_json(&cmd_merge(&paths)?).as_bytes())
        }
        Command::Export { tree, format, max_label_len, no_configs, out } => {
            let opts = ExportOptions { format: Format::from_name(&format)?, include_configs: !no_configs, max_label_len };
            emit(out.as_deref(), cmd_export(&tree, &opts)?.as_bytes())
        }
        Command::Predict { network, inputs } => emit(None, cmd_predict(&network, &inputs)?.as_bytes()),
        Command::Serve { network, port, bind, input_range } => {
            let net = load_network(&read(&network)?)?;
            let state = service::AppState::new(net, input_range.unwrap_or(nn2dt_core::pipeline::DEFAULT_INPUT_RANGE))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::io(Path::new("<runtime>"), e))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .map_err(|e| Failure::io(Path::new(&format!("{bind}:{port}")), e))?;
                eprintln!("listening on http://{}", listener.local_addr().map_err(|e| Failure::io(Path::new("<socket>"), e))?);
                axum::serve(listener, service::router(state)).await.map_err(|e| Failure::io(Path::new("<server>"), e))
            })
        }
        Command::Demo { out, grid } => {
            emit(Some(&out), &serialize_interchange(&nn2dt_core::demo::landscape_network()))?;
            if let Some(g) = grid {
                emit(Some(&g), format_inputs(&nn2dt_core::demo::landscape_grid()).as_bytes())?;
            }
            Ok(())
        }
    }
}
