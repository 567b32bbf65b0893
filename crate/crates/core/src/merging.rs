//! Prefix-tree merge of decision paths with interned configuration sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::derivation::{derive_path_tagged, ConfigSet, DecisionPath, PathEdge};
use crate::error::{Error, Result};
use crate::model::{NetworkIR, NeuronId};
use crate::analysis::{forward, relevance, RelevanceCriterion, Scope};

pub type ConfigId = u32;

/// Interning table: equal sets share one id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigStore {
    sets: Vec<ConfigSet>,
    refcounts: Vec<usize>,
    index: BTreeMap<ConfigSet, ConfigId>,
}

impl ConfigStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, set: &ConfigSet) -> ConfigId {
        let id = match self.index.get(set) {
            Some(&id) => id,
            None => {
                let id = self.sets.len() as ConfigId;
                self.sets.push(set.clone());
                self.refcounts.push(0);
                self.index.insert(set.clone(), id);
                id
            }
        };
        self.refcounts[id as usize] += 1;
        id
    }

    pub fn lookup(&self, set: &ConfigSet) -> Option<ConfigId> {
        self.index.get(set).copied()
    }

    pub fn get(&self, id: ConfigId) -> Option<&ConfigSet> {
        self.sets.get(id as usize)
    }

    pub fn refcount(&self, id: ConfigId) -> usize {
        self.refcounts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConfigId, &ConfigSet)> {
        self.sets.iter().enumerate().map(|(i, s)| (i as ConfigId, s))
    }

    /// Rebuild from `(id, set)` pairs with zero reference counts.
    pub fn from_entries(entries: Vec<(ConfigId, ConfigSet)>) -> Result<Self> {
        let mut store = ConfigStore::new();
        for (expect, (id, set)) in entries.into_iter().enumerate() {
            if id as usize != expect {
                return Err(Error::Malformed(format!("config set ids must be 0..n, found {id}")));
            }
            if store.index.insert(set.clone(), id).is_some() {
                return Err(Error::Malformed(format!("config set {id} duplicates an earlier set")));
            }
            store.sets.push(set);
            store.refcounts.push(0);
        }
        Ok(store)
    }
}

pub fn intern_configs(store: &mut ConfigStore, set: &ConfigSet) -> ConfigId {
    store.intern(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TreeEdgeLabel {
    pub neuron: NeuronId,
    pub config_set: ConfigId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLeaf {
    pub decision: usize,
    pub label: String,
    pub support: usize,
}

/// Trie node. A node may both end a path (`leaf`) and continue others.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeNode {
    pub children: Vec<(TreeEdgeLabel, TreeNode)>,
    pub leaf: Option<DecisionLeaf>,
}

impl TreeNode {
    /// The neuron examined at this node.
    pub fn test(&self) -> Option<NeuronId> {
        self.children.first().map(|(l, _)| l.neuron)
    }

    pub fn child(&self, label: &TreeEdgeLabel) -> Option<&TreeNode> {
        self.children.iter().find(|(l, _)| l == label).map(|(_, n)| n)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|(_, c)| c.node_count()).sum::<usize>()
    }

    pub fn leaves(&self) -> Vec<&DecisionLeaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a DecisionLeaf>) {
        if let Some(l) = &self.leaf {
            out.push(l);
        }
        for (_, c) in &self.children {
            c.collect_leaves(out);
        }
    }

    fn sort(&mut self) {
        self.children.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, c) in &mut self.children {
            c.sort();
        }
    }

    fn relabel(&mut self, map: &BTreeMap<ConfigId, ConfigId>, counts: &mut BTreeMap<ConfigId, usize>) {
        for (label, c) in &mut self.children {
            label.config_set = map[&label.config_set];
            *counts.entry(label.config_set).or_default() += 1;
            c.relabel(map, counts);
        }
    }

    fn used_ids(&self, out: &mut std::collections::BTreeSet<ConfigId>) {
        for (label, c) in &self.children {
            out.insert(label.config_set);
            c.used_ids(out);
        }
    }
}

/// Provenance shared by every path of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMeta {
    pub network_name: String,
    pub network: String,
    pub theta: f64,
    pub relevance_mode: String,
    pub scope: String,
}

impl TreeMeta {
    pub fn of_path(path: &DecisionPath, network_name: &str) -> Self {
        TreeMeta {
            network_name: network_name.to_string(),
            network: path.network.clone(),
            theta: path.theta,
            relevance_mode: path.relevance_mode.clone(),
            scope: path.scope.clone(),
        }
    }

    fn accepts(&self, path: &DecisionPath) -> bool {
        self.network == path.network
            && self.theta.to_bits() == path.theta.to_bits()
            && self.relevance_mode == path.relevance_mode
            && self.scope == path.scope
    }

    pub fn criterion(&self) -> Result<RelevanceCriterion> {
        RelevanceCriterion::from_parts(&self.relevance_mode, self.theta)
    }

    pub fn scope(&self) -> Result<Scope> {
        Scope::from_name(&self.scope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub meta: TreeMeta,
    pub store: ConfigStore,
    pub root: TreeNode,
}

/// Depth-first label sequence: each edge, then its subpath.
pub fn linearize(path: &DecisionPath, store: &mut ConfigStore) -> Vec<TreeEdgeLabel> {
    let mut out = Vec::new();
    walk(&path.edges, &mut |e| out.push(TreeEdgeLabel { neuron: e.neuron, config_set: store.intern(&e.configs) }));
    out
}

/// [`linearize`] against a fixed store; `None` if a set was never interned.
pub fn linearize_existing(path: &DecisionPath, store: &ConfigStore) -> Option<Vec<TreeEdgeLabel>> {
    let mut out = Vec::new();
    let mut missing = false;
    walk(&path.edges, &mut |e| match store.lookup(&e.configs) {
        Some(id) => out.push(TreeEdgeLabel { neuron: e.neuron, config_set: id }),
        None => missing = true,
    });
    (!missing).then_some(out)
}

fn walk(edges: &[PathEdge], f: &mut dyn FnMut(&PathEdge)) {
    for e in edges {
        f(e);
        if let Some(sub) = &e.subpath {
            walk(sub, f);
        }
    }
}

impl DecisionTree {
    pub fn new(meta: TreeMeta) -> Self {
        DecisionTree { meta, store: ConfigStore::new(), root: TreeNode::default() }
    }

    pub fn insert(&mut self, path: &DecisionPath) -> Result<()> {
        if !self.meta.accepts(path) {
            return Err(Error::NetworkMismatch);
        }
        let labels = linearize(path, &mut self.store);
        let mut node = &mut self.root;
        for label in labels {
            let pos = match node.children.iter().position(|(l, _)| *l == label) {
                Some(p) => p,
                None => {
                    node.children.push((label, TreeNode::default()));
                    node.children.len() - 1
                }
            };
            node = &mut node.children[pos].1;
        }
        match &mut node.leaf {
            Some(leaf) if leaf.decision != path.decision => {
                return Err(Error::ConflictingLeaf(leaf.decision, path.decision));
            }
            Some(leaf) => leaf.support += 1,
            None => node.leaf = Some(DecisionLeaf { decision: path.decision, label: path.label.clone(), support: 1 }),
        }
        Ok(())
    }

    /// Renumber config sets by content, sort children by label and recount
    /// references, so the result does not depend on insertion order.
    pub fn canonicalize(&mut self) {
        let mut used = std::collections::BTreeSet::new();
        self.root.used_ids(&mut used);
        let mut sets: Vec<(ConfigSet, ConfigId)> =
            used.iter().map(|&id| (self.store.get(id).expect("live config id").clone(), id)).collect();
        sets.sort();
        let map: BTreeMap<ConfigId, ConfigId> =
            sets.iter().enumerate().map(|(new, (_, old))| (*old, new as ConfigId)).collect();
        let mut counts = BTreeMap::new();
        self.root.relabel(&map, &mut counts);
        let mut store = ConfigStore::from_entries(
            sets.into_iter().enumerate().map(|(i, (s, _))| (i as ConfigId, s)).collect(),
        )
        .expect("distinct sets");
        for (id, c) in counts {
            store.refcounts[id as usize] = c;
        }
        self.store = store;
        self.root.sort();
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn leaves(&self) -> Vec<&DecisionLeaf> {
        self.root.leaves()
    }

    pub fn is_empty(&self) -> bool {
        self.root.children.is_empty() && self.root.leaf.is_none()
    }

    /// Walk a label sequence; the leaf at its end, if any.
    pub fn find(&self, labels: &[TreeEdgeLabel]) -> Option<&DecisionLeaf> {
        let mut node = &self.root;
        for l in labels {
            node = node.child(l)?;
        }
        node.leaf.as_ref()
    }

    /// Node state: union of the config sets on the edges leading to it.
    pub fn state(&self, labels: &[TreeEdgeLabel]) -> ConfigSet {
        labels.iter().filter_map(|l| self.store.get(l.config_set)).flatten().cloned().collect()
    }
}

pub fn merge_paths(paths: &[DecisionPath]) -> Result<DecisionTree> {
    merge_paths_named(paths, "")
}

pub fn merge_paths_named(paths: &[DecisionPath], network_name: &str) -> Result<DecisionTree> {
    let first = paths.first().ok_or(Error::NoPaths)?;
    let mut tree = DecisionTree::new(TreeMeta::of_path(first, network_name));
    for p in paths {
        tree.insert(p)?;
    }
    tree.canonicalize();
    Ok(tree)
}

/// Re-derive the path of `x` on `net` with the tree's parameters and walk
/// the tree with it. `None` when any label is missing from the tree.
pub fn tree_lookup<'a>(tree: &'a DecisionTree, net: &NetworkIR, x: &[f64]) -> Result<Option<&'a DecisionLeaf>> {
    if tree.is_empty() {
        return Ok(None);
    }
    let criterion = tree.meta.criterion()?;
    let scope = tree.meta.scope()?;
    let trace = forward(net, x)?;
    let rel = relevance(net, &trace, criterion, scope)?;
    let path = match derive_path_tagged(net, &trace, &rel, &net.input_spec, &tree.meta.network) {
        Ok(p) => p,
        Err(Error::EmptyPenultimate) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(linearize_existing(&path, &tree.store).and_then(|labels| tree.find(&labels)))
}
