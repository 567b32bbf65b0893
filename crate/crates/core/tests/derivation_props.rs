mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use nn2dt_core::analysis::{forward, relevance, RelevanceCriterion, Scope};
use nn2dt_core::derivation::{derive_path, edge_input_configs, ConfigSet, DecisionPath, PathEdge, SymbolTuple};
use nn2dt_core::model::NeuronId;
use nn2dt_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn names(set: &ConfigSet) -> Vec<&str> {
    set.iter().map(|t| t.filler.as_str()).collect()
}

#[test]
fn nested_example_subpath() {
    let net = nested_example();
    let trace = forward(&net, &[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(trace.decision, 0);
    let rel = relevance(&net, &trace, RelevanceCriterion::Ratio(0.5), Scope::WinnerOnly).unwrap();
    let path = derive_path(&net, &trace, &rel, &net.input_spec).unwrap();
    assert_eq!(path.edges.len(), 1);
    let top = &path.edges[0];
    assert_eq!(top.neuron, NeuronId::new(2, 0, 2));
    let sub = top.subpath.as_ref().unwrap();
    assert_eq!(sub.iter().map(|e| e.neuron.neuron).collect::<Vec<_>>(), vec![0, 2]);
    assert_eq!(names(&sub[0].configs), vec!["b_u"]);
    assert_eq!(names(&sub[1].configs), vec!["b_u", "b_y"]);
    assert_eq!(names(&edge_input_configs(top)), vec!["b_u", "b_y"]);
    assert_eq!(sub[1].configs.iter().map(|t| t.role.as_str()).collect::<Vec<_>>(), vec!["i_u", "i_y"]);
}

#[test]
fn single_hidden_layer_has_no_subpaths() {
    let mut r = rng(301);
    for _ in 0..20 {
        let widths = random_widths(&mut r, 1);
        let net = build_dense(&random_dense_spec(&mut r, &widths, true));
        let x = random_input(&mut r, widths[0]);
        let trace = forward(&net, &x).unwrap();
        let rel = relevance(&net, &trace, RelevanceCriterion::Ratio(0.5), Scope::WinnerOnly).unwrap();
        match derive_path(&net, &trace, &rel, &net.input_spec) {
            Ok(p) => {
                assert!(p.edges.iter().all(|e| e.subpath.is_none()));
                assert_eq!(p.levels().len(), 1);
            }
            Err(Error::EmptyPenultimate) => assert_eq!(rel.retained(1).count(), 0),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn no_hidden_layers_is_an_error() {
    let mut r = rng(302);
    let net = build_dense(&random_dense_spec(&mut r, &[3, 2], true));
    let trace = forward(&net, &[0.1, 0.2, 0.3]).unwrap();
    let rel = relevance(&net, &trace, RelevanceCriterion::Ratio(0.5), Scope::WinnerOnly).unwrap();
    assert!(matches!(derive_path(&net, &trace, &rel, &net.input_spec), Err(Error::NoHiddenLayers)));
}

/// Hidden neurons linked to the winning output through edges with nonzero `v * w`.
fn nonzero_reachable(net: &nn2dt_core::NetworkIR, trace: &nn2dt_core::ActivationTrace) -> BTreeSet<(usize, usize)> {
    let out = net.layers.len() - 1;
    let mut frontier: BTreeSet<(usize, usize)> = [(out, trace.decision)].into_iter().collect();
    let mut seen = BTreeSet::new();
    while let Some((l, j)) = frontier.pop_first() {
        if l == 0 || !seen.insert((l, j)) {
            continue;
        }
        let n = net.layers[l].neuron(j).unwrap();
        for e in &n.in_edges {
            if trace.output[l - 1][e.source] * e.weight != 0.0 {
                frontier.insert(net.resolve_source(l, e.source));
            }
        }
    }
    seen.into_iter().filter(|&(l, _)| l != out).collect()
}

fn check_structure(path: &DecisionPath, rel: &nn2dt_core::RelevanceGraph, net: &nn2dt_core::NetworkIR) {
    let levels = path.levels();
    for l in net.hidden_layers() {
        let mut got: Vec<usize> = levels.get(&l).map(|v| v.iter().map(|id| net.layers[l].flat_index(id.filter, id.neuron).unwrap()).collect()).unwrap_or_default();
        got.sort();
        let want: Vec<usize> = rel.retained(l).collect();
        assert_eq!(got, want, "layer {l}");
    }
    fn union_law(edges: &[PathEdge]) {
        for e in edges {
            if let Some(sub) = &e.subpath {
                let u: ConfigSet = sub.iter().flat_map(edge_input_configs).collect();
                assert_eq!(e.configs, u);
                union_law(sub);
            }
        }
    }
    union_law(&path.edges);
    let top = *net.hidden_layers().last().unwrap();
    assert!(path.edges.windows(2).all(|w| w[0].neuron < w[1].neuron));
    assert!(path.edges.iter().all(|e| e.neuron.layer == top));
}

#[test]
fn theta_zero_paths_cover_nonzero_chains() {
    let mut r = rng(303);
    for _ in 0..40 {
        let widths = random_widths(&mut r, 2);
        let net = build_dense(&random_dense_spec(&mut r, &widths, true));
        let x = random_input(&mut r, widths[0]);
        let trace = forward(&net, &x).unwrap();
        let rel = relevance(&net, &trace, RelevanceCriterion::Ratio(0.0), Scope::WinnerOnly).unwrap();
        let path = match derive_path(&net, &trace, &rel, &net.input_spec) {
            Ok(p) => p,
            Err(Error::EmptyPenultimate) => {
                assert!(nonzero_reachable(&net, &trace).is_empty());
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        check_structure(&path, &rel, &net);
        let present: BTreeSet<(usize, usize)> = path
            .levels()
            .into_iter()
            .flat_map(|(l, ids)| ids.into_iter().map(move |id| (l, id.neuron)))
            .collect();
        for n in nonzero_reachable(&net, &trace) {
            assert!(present.contains(&n), "{n:?} missing");
        }
        assert_eq!(path.decision, forward(&net, &path.input).unwrap().decision);
    }
}

#[test]
fn paths_are_deterministic_and_complete() {
    let mut r = rng(304);
    for net in network_zoo(305, 20) {
        for theta in [0.25, 0.5, 0.75] {
            let x = random_input(&mut r, net.input_width());
            let trace = forward(&net, &x).unwrap();
            let rel = relevance(&net, &trace, RelevanceCriterion::Ratio(theta), Scope::AllOutputs).unwrap();
            let a = derive_path(&net, &trace, &rel, &net.input_spec);
            let b = derive_path(&net, &trace, &rel, &net.input_spec);
            assert_eq!(a.is_ok(), b.is_ok());
            if let (Ok(a), Ok(b)) = (a, b) {
                assert_eq!(a, b);
                check_structure(&a, &rel, &net);
            }
        }
    }
}

fn random_hierarchy(r: &mut rand_chacha::ChaCha8Rng, depth: usize) -> Vec<PathEdge> {
    (0..r.gen_range(1..=3))
        .map(|n| {
            if depth == 0 || r.gen_bool(0.3) {
                let configs = (0..r.gen_range(0..=3)).map(|_| SymbolTuple::new(format!("f{}", r.gen_range(0..5)), "r")).collect();
                PathEdge { neuron: NeuronId::new(depth + 1, 0, n), configs, subpath: None }
            } else {
                let sub = random_hierarchy(r, depth - 1);
                PathEdge { neuron: NeuronId::new(depth + 1, 0, n), configs: ConfigSet::new(), subpath: Some(sub) }
            }
        })
        .collect()
}

fn leaf_walk(e: &PathEdge, out: &mut ConfigSet) {
    match &e.subpath {
        None => out.extend(e.configs.iter().cloned()),
        Some(sub) => sub.iter().for_each(|c| leaf_walk(c, out)),
    }
}

proptest! {
    #[test]
    fn configs_equal_leaf_descendants(seed in any::<u64>()) {
        let mut r = rng(seed);
        for e in random_hierarchy(&mut r, 3) {
            let mut want = ConfigSet::new();
            leaf_walk(&e, &mut want);
            prop_assert_eq!(edge_input_configs(&e), want);
        }
    }

    #[test]
    fn levels_count_every_edge_once(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_path(&mut r, 3);
        let total: usize = p.levels().values().map(Vec::len).sum();
        prop_assert_eq!(total, flat_sequence(&p).len());
        let by_layer: BTreeMap<usize, usize> = p.levels().into_iter().map(|(l, v)| (l, v.len())).collect();
        prop_assert!(by_layer.keys().all(|&l| (1..=3).contains(&l)));
    }
}
