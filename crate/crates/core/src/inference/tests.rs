use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exact;
use crate::features::{assemble, FeatureCache};
use crate::model::Model;
use crate::synth::random_instance;
use crate::taxonomy::{random_tree, Taxonomy, ROOT};

fn scorer_parts(n: usize, seed: u64) -> (crate::Dataset, Model, FeatureCache) {
    let (data, _, model) = random_instance(n, 3, 0.7, seed).unwrap();
    let cache = FeatureCache::build(&data, &model).unwrap();
    (data, model, cache)
}

#[test]
fn zero_weights_score_zero() {
    let (_, mut model, cache) = scorer_parts(4, 1);
    model.weights = crate::LayerWeights::zeros(3, model.dim());
    let s = Scorer::new(&cache, &model.weights, vec![1.0; 5]).unwrap();
    assert_eq!(s.edge_score(2, 1, 2, &[3]), 0.0);
    assert_eq!(s.edge_score(1, ROOT, 4, &[]), 0.0);
}

#[test]
fn edge_score_matches_raw_assembly() {
    for seed in 0..5 {
        let (data, model, cache) = scorer_parts(5, seed);
        let s = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(5)).unwrap();
        let t = random_tree(5, &mut ChaCha8Rng::seed_from_u64(seed));
        for (p, c) in t.edges() {
            let sibs: Vec<usize> = t.children(p).iter().copied().filter(|&x| x != c).collect();
            let f = assemble(&data, &model, p, c, &sibs).unwrap();
            let expect = f.dot(model.weights.for_depth(t.depth(c)));
            assert!((s.edge_score_in(&t, p, c) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn edge_score_is_linear_in_weights() {
    let (_, mut model, cache) = scorer_parts(4, 2);
    let before = Scorer::new(&cache, &model.weights, vec![1.0; 5]).unwrap().edge_score(2, 1, 2, &[3]);
    let active = cache.edge_active(1, 2, &[3]);
    model.weights.layers[1][active[0]] += 0.25;
    let after = Scorer::new(&cache, &model.weights, vec![1.0; 5]).unwrap().edge_score(2, 1, 2, &[3]);
    assert!((after - before - 0.25).abs() < 1e-12);
}

#[test]
fn conditional_matches_joint_ratios() {
    for seed in 0..20 {
        let n = 3 + (seed as usize % 4);
        let (_, model, cache) = scorer_parts(n, seed);
        let s = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(n)).unwrap();
        let t = random_tree(n, &mut ChaCha8Rng::seed_from_u64(100 + seed));
        for node in 1..=n {
            let logs = parent_log_weights(&s, &t, node).unwrap();
            let (m0, l0) = logs[0];
            let j0 = s.log_joint(&t.with_structure_op(node, m0).unwrap());
            for &(m, l) in &logs {
                let j = s.log_joint(&t.with_structure_op(node, m).unwrap());
                assert!(((l - l0) - (j - j0)).abs() < 1e-9, "seed {seed} node {node} cand {m}");
            }
        }
    }
}

#[test]
fn candidates_exclude_self_and_descendants() {
    let (_, model, cache) = scorer_parts(5, 3);
    let s = Scorer::new(&cache, &model.weights, vec![1.0; 6]).unwrap();
    // 0 -> 1 -> 2 -> 3, 1 -> 4, 0 -> 5
    let t = Taxonomy::from_parents(&[0, 1, 2, 1, 0]).unwrap();
    let dist = parent_distribution(&s, &t, 1).unwrap();
    let cands: Vec<usize> = dist.iter().map(|&(m, _)| m).collect();
    assert_eq!(cands, vec![0, 5]);
    let total: f64 = dist.iter().map(|&(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(parent_distribution(&s, &t, 0).is_err());
}

#[test]
fn hand_evaluated_conditional() {
    // Only the bias and the PC-V1 missing slot carry weight, so every edge
    // score is either the bias weight (root edges) or the missing-slot weight
    // when the child or parent has no images.
    let items = vec![
        crate::LabelItem::new(1, "a"),
        crate::LabelItem::new(2, "b"),
        crate::LabelItem::new(3, "c"),
        crate::LabelItem::new(4, "d"),
    ];
    let data = crate::Dataset::new(items, 2, 2).unwrap();
    let mut model = Model::blank(2);
    let bias = model.layout.bias;
    let miss = model.layout.offset(crate::Block::ParentChildVisual);
    model.weights.layers[0][bias] = 0.7;
    model.weights.layers[0][miss] = -0.1;
    model.weights.layers[1][miss] = 0.4;
    model.weights.layers[1][bias] = 5.0;
    let cache = FeatureCache::build(&data, &model).unwrap();
    let alpha = vec![1.5, 2.0, 0.5, 1.0, 3.0];
    let s = Scorer::new(&cache, &model.weights, alpha.clone()).unwrap();
    // 0 -> {1, 4}, 1 -> 2, 4 -> 3; resample node 3
    let t = Taxonomy::from_parents(&[0, 1, 4, 0]).unwrap();
    // Attaching 3 under m adds one edge. Root edges fire the bias and every
    // missing slot (layer 1); other edges fire the missing slots of layer 2
    // (clamped for node 2 at depth 2). q excludes node 3 itself.
    let w_root = 0.7 - 0.1;
    let w_d2 = 0.4;
    let unnorm = [
        (0usize, (2.0 + 1.5) * f64::exp(w_root)),
        (1, (1.0 + 2.0) * f64::exp(w_d2)),
        (2, (0.0 + 0.5) * f64::exp(w_d2)),
        (4, (0.0 + 3.0) * f64::exp(w_d2)),
    ];
    let z: f64 = unnorm.iter().map(|(_, v)| v).sum();
    let dist = parent_distribution(&s, &t, 3).unwrap();
    assert_eq!(dist.len(), 4);
    for ((m, p), (em, ev)) in dist.iter().zip(unnorm) {
        assert_eq!(*m, em);
        assert!((p - ev / z).abs() < 1e-12, "candidate {m}: {p} vs {}", ev / z);
    }
}

#[test]
fn symmetric_candidates_split_evenly() {
    let items = (1..=3).map(|i| crate::LabelItem::new(i, "x")).collect();
    let data = crate::Dataset::new(items, 1, 1).unwrap();
    let model = Model::blank(1);
    let cache = FeatureCache::build(&data, &model).unwrap();
    // root and node 1 equally attractive for node 3 when alpha makes up for
    // root's extra child: q_0 = 1 (node 1) , q_1 = 1 (node 2)
    let s = Scorer::new(&cache, &model.weights, vec![1.0; 4]).unwrap();
    let base = Taxonomy::from_parents(&[0, 1, 0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let mut to_root = 0usize;
    for _ in 0..draws {
        let mut t = base.clone();
        if sample_parent(&s, &mut t, 3, &mut rng).unwrap() == ROOT {
            to_root += 1;
        }
    }
    // candidates: 0 (q=1), 1 (q=1), 2 (q=0) -> weights 2, 2, 1
    let p = 0.4;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    assert!((to_root as f64 - draws as f64 * p).abs() < 3.0 * sd, "{to_root}");
}

#[test]
fn single_node_marginal() {
    let (_, model, cache) = scorer_parts(1, 0);
    let s = Scorer::new(&cache, &model.weights, vec![1.0, 1.0]).unwrap();
    let cfg = SamplerConfig {
        burn_in: 3,
        samples: 10,
        ..SamplerConfig::default()
    };
    let m = run_chain(&s, &cfg, None).unwrap();
    assert_eq!(m.prob(1, 0), 1.0);
    let t = mst_decode(&m.to_matrix()).unwrap();
    assert_eq!(t.parents(), &[0]);
}

#[test]
fn rows_sum_to_one_and_runs_repeat() {
    let (_, model, cache) = scorer_parts(5, 4);
    let s = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(5)).unwrap();
    let cfg = SamplerConfig {
        burn_in: 10,
        samples: 200,
        seed: 9,
        init: InitMode::RandomTree,
    };
    let a = run_chain(&s, &cfg, None).unwrap();
    let b = run_chain(&s, &cfg, None).unwrap();
    assert_eq!(a, b);
    for c in 1..=5 {
        let row = a.row(c);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(row[c], 0.0);
    }
}

#[test]
fn frozen_nodes_keep_their_parent() {
    let (_, model, cache) = scorer_parts(5, 6);
    let s = Scorer::new(&cache, &model.weights, vec![1.0; 6]).unwrap();
    let init = Taxonomy::from_parents(&[0, 1, 1, 0, 0]).unwrap();
    let mask = vec![false, false, false, true, true, true];
    let cfg = SamplerConfig {
        burn_in: 5,
        samples: 100,
        seed: 1,
        init: InitMode::Given(init),
    };
    let m = run_chain(&s, &cfg, Some(&mask)).unwrap();
    assert_eq!(m.prob(1, 0), 1.0);
    assert_eq!(m.prob(2, 1), 1.0);
}

#[test]
fn short_chain_tracks_enumeration() {
    let (_, model, cache) = scorer_parts(3, 8);
    let s = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(3)).unwrap();
    let exact = exact::marginals(&s).unwrap();
    let cfg = SamplerConfig {
        burn_in: 100,
        samples: 20_000,
        seed: 2,
        init: InitMode::Star,
    };
    let m = run_chain(&s, &cfg, None).unwrap();
    for c in 1..=3 {
        let tv: f64 = m.row(c).iter().zip(&exact[c - 1]).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.03, "row {c}: tv {tv}");
    }
}

#[test]
fn weight_free_joint_depends_only_on_counts() {
    let (_, mut model, cache) = scorer_parts(4, 3);
    model.weights = crate::LayerWeights::zeros(3, model.dim());
    let s = Scorer::new(&cache, &model.weights, vec![1.0; 5]).unwrap();
    // same multiset of child counts -> same joint
    let a = Taxonomy::from_parents(&[0, 1, 1, 0]).unwrap();
    let b = Taxonomy::from_parents(&[2, 0, 2, 0]).unwrap();
    assert!((s.log_joint(&a) - s.log_joint(&b)).abs() < 1e-12);
}

#[test]
fn merged_tables_average_counts() {
    let a = Taxonomy::from_parents(&[0, 1]).unwrap();
    let b = Taxonomy::from_parents(&[0, 0]).unwrap();
    let mut x = MarginalTable::point_mass(&a);
    let y = MarginalTable::point_mass(&b);
    x.merge(&y).unwrap();
    assert_eq!(x.prob(2, 1), 0.5);
    assert_eq!(x.prob(2, 0), 0.5);
    assert!(x.merge(&MarginalTable::new(3)).is_err());
}
