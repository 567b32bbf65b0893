//! DOT and JSON renderings of decision trees and paths.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::derivation::{DecisionPath, SymbolTuple};
use crate::error::{Error, Result};
use crate::merging::{ConfigId, ConfigStore, DecisionLeaf, DecisionTree, TreeEdgeLabel, TreeMeta, TreeNode};
use crate::model::NeuronId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Dot,
    Json,
}

impl Format {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "dot" => Ok(Format::Dot),
            "json" => Ok(Format::Json),
            other => Err(Error::Malformed(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    pub format: Format,
    pub include_configs: bool,
    pub max_label_len: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions { format: Format::Json, include_configs: true, max_label_len: 80 }
    }
}

impl ExportOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_label_len < 8 {
            return Err(Error::Malformed(format!("max_label_len must be at least 8, got {}", self.max_label_len)));
        }
        Ok(())
    }
}

pub fn export_tree(tree: &DecisionTree, opts: &ExportOptions) -> Result<String> {
    opts.validate()?;
    Ok(match opts.format {
        Format::Dot => to_dot(tree, opts),
        Format::Json => tree_to_json(tree),
    })
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        return s.to_string();
    }
    let mut out: String = s.chars().take(max - 3).collect();
    out.push_str("...");
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out
}

fn config_text(store: &ConfigStore, id: ConfigId) -> String {
    let items: Vec<String> = store.get(id).map(|s| s.iter().map(ToString::to_string).collect()).unwrap_or_default();
    format!("{{{}}}", items.join(", "))
}

/// Graphviz digraph. Node ids are preorder positions; one rank per depth.
pub fn to_dot(tree: &DecisionTree, opts: &ExportOptions) -> String {
    struct Ctx<'a> {
        tree: &'a DecisionTree,
        opts: &'a ExportOptions,
        body: String,
        next: usize,
        ranks: Vec<Vec<String>>,
    }

    fn leaf_label(leaf: &DecisionLeaf) -> String {
        format!("{} ({})", leaf.label, leaf.support)
    }

    fn node(ctx: &mut Ctx, n: &TreeNode, depth: usize) -> String {
        let id = format!("n{}", ctx.next);
        ctx.next += 1;
        if ctx.ranks.len() <= depth {
            ctx.ranks.push(Vec::new());
        }
        ctx.ranks[depth].push(id.clone());
        let max = ctx.opts.max_label_len;
        match (n.test(), &n.leaf) {
            (None, Some(leaf)) => {
                let _ = writeln!(ctx.body, "  {id} [shape=box, label=\"{}\"];", escape(&truncate(&leaf_label(leaf), max)));
            }
            (None, None) => {
                let _ = writeln!(ctx.body, "  {id} [label=\"empty\"];");
            }
            (Some(test), leaf) => {
                let _ = writeln!(ctx.body, "  {id} [label=\"{}\"];", escape(&truncate(&test.to_string(), max)));
                if let Some(leaf) = leaf {
                    let end = format!("{id}_end");
                    let _ = writeln!(ctx.body, "  {end} [shape=box, label=\"{}\"];", escape(&truncate(&leaf_label(leaf), max)));
                    let _ = writeln!(ctx.body, "  {id} -> {end} [style=dashed];");
                    if ctx.ranks.len() <= depth + 1 {
                        ctx.ranks.push(Vec::new());
                    }
                    ctx.ranks[depth + 1].push(end);
                }
            }
        }
        for (label, child) in &n.children {
            let child_id = node(ctx, child, depth + 1);
            let mut text = label.neuron.to_string();
            if ctx.opts.include_configs {
                text.push(' ');
                text.push_str(&config_text(&ctx.tree.store, label.config_set));
            }
            let _ = writeln!(ctx.body, "  {id} -> {child_id} [label=\"{}\"];", escape(&truncate(&text, max)));
        }
        id
    }

    let mut ctx = Ctx { tree, opts, body: String::new(), next: 0, ranks: Vec::new() };
    node(&mut ctx, &tree.root, 0);
    let mut out = String::from("digraph decision_tree {\n  rankdir=TB;\n");
    out.push_str(&ctx.body);
    for rank in &ctx.ranks {
        let _ = writeln!(out, "  {{ rank=same; {}; }}", rank.join("; "));
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    network_name: String,
    network: String,
    theta: f64,
    relevance_mode: String,
    scope: String,
    config_sets: BTreeMap<ConfigId, Vec<SymbolTuple>>,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    test: Option<NeuronId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<DecisionLeaf>,
    children: Vec<ChildDoc>,
}

#[derive(Serialize, Deserialize)]
struct ChildDoc {
    label: TreeEdgeLabel,
    #[serde(flatten)]
    target: TargetDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TargetDoc {
    Node(NodeDoc),
    Leaf(DecisionLeaf),
}

fn node_doc(n: &TreeNode) -> NodeDoc {
    NodeDoc {
        test: n.test(),
        leaf: n.leaf.clone(),
        children: n
            .children
            .iter()
            .map(|(label, c)| {
                let target = if c.children.is_empty() && c.leaf.is_some() {
                    TargetDoc::Leaf(c.leaf.clone().expect("checked"))
                } else {
                    TargetDoc::Node(node_doc(c))
                };
                ChildDoc { label: *label, target }
            })
            .collect(),
    }
}

fn node_from_doc(doc: NodeDoc, store: &mut ConfigStore) -> Result<TreeNode> {
    let mut children = Vec::with_capacity(doc.children.len());
    for c in doc.children {
        if store.get(c.label.config_set).is_none() {
            return Err(Error::Malformed(format!("unknown config set {}", c.label.config_set)));
        }
        let node = match c.target {
            TargetDoc::Node(n) => node_from_doc(n, store)?,
            TargetDoc::Leaf(l) => TreeNode { children: Vec::new(), leaf: Some(l) },
        };
        children.push((c.label, node));
    }
    let node = TreeNode { children, leaf: doc.leaf };
    if let (Some(t), Some(actual)) = (doc.test, node.test()) {
        if t != actual {
            return Err(Error::Malformed(format!("node test {t} does not match its first child {actual}")));
        }
    }
    Ok(node)
}

fn tree_doc(tree: &DecisionTree) -> TreeDoc {
    TreeDoc {
        network_name: tree.meta.network_name.clone(),
        network: tree.meta.network.clone(),
        theta: tree.meta.theta,
        relevance_mode: tree.meta.relevance_mode.clone(),
        scope: tree.meta.scope.clone(),
        config_sets: tree.store.iter().map(|(id, s)| (id, s.iter().cloned().collect())).collect(),
        root: node_doc(&tree.root),
    }
}

/// Canonical JSON document of a tree, newline terminated.
pub fn tree_to_json(tree: &DecisionTree) -> String {
    let mut s = serde_json::to_string_pretty(&tree_doc(tree)).expect("tree serialization");
    s.push('\n');
    s
}

pub fn tree_to_value(tree: &DecisionTree) -> serde_json::Value {
    serde_json::to_value(tree_doc(tree)).expect("tree serialization")
}

fn from_str_deep<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de).map_err(|e| Error::Malformed(e.to_string()))?;
    de.end().map_err(|e| Error::Malformed(e.to_string()))?;
    Ok(value)
}

pub fn tree_from_json(text: &str) -> Result<DecisionTree> {
    let doc: TreeDoc = from_str_deep(text)?;
    let mut store = ConfigStore::from_entries(
        doc.config_sets.into_iter().map(|(id, v)| (id, v.into_iter().collect())).collect(),
    )?;
    let root = node_from_doc(doc.root, &mut store)?;
    let mut tree = DecisionTree {
        meta: TreeMeta {
            network_name: doc.network_name,
            network: doc.network,
            theta: doc.theta,
            relevance_mode: doc.relevance_mode,
            scope: doc.scope,
        },
        store,
        root,
    };
    tree.canonicalize();
    Ok(tree)
}

pub fn path_to_json(path: &DecisionPath) -> String {
    let mut s = serde_json::to_string_pretty(path).expect("path serialization");
    s.push('\n');
    s
}

pub fn path_from_json(text: &str) -> Result<DecisionPath> {
    from_str_deep(text)
}

/// A batch of paths with the parameters they were derived under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsDocument {
    pub network_name: String,
    pub network: String,
    pub theta: f64,
    pub relevance_mode: String,
    pub scope: String,
    pub epsilon: f64,
    pub paths: Vec<DecisionPath>,
}

impl PathsDocument {
    pub fn meta(&self) -> TreeMeta {
        TreeMeta {
            network_name: self.network_name.clone(),
            network: self.network.clone(),
            theta: self.theta,
            relevance_mode: self.relevance_mode.clone(),
            scope: self.scope.clone(),
        }
    }

    /// Merge every path; an empty batch yields an empty tree.
    pub fn merge(&self) -> Result<DecisionTree> {
        let mut tree = DecisionTree::new(self.meta());
        for p in &self.paths {
            tree.insert(p)?;
        }
        tree.canonicalize();
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("paths serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_str_deep(text)
    }
}
