//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxind_core::synth::{generate, SynthConfig};
use taxind_core::training::{prepare, LabeledTree, TrainConfig};
use taxind_core::{Dataset, Model, Taxonomy};

/// A generated tree with `nodes` categories and a model prepared on it
/// (projections, bins, prior), with a fixed weight pattern so edge scores
/// differ.
pub fn prepared(nodes: usize, seed: u64) -> (Dataset, Taxonomy, Model) {
    let cfg = SynthConfig {
        nodes,
        height: 4.min(nodes),
        ..SynthConfig::default()
    };
    let tree = generate(&cfg, 1, seed).expect("synthetic tree").remove(0);
    let labeled = LabeledTree::new(tree.dataset.clone(), tree.gold.clone()).expect("labeled tree");
    let (mut model, _) = prepare(&[labeled], &TrainConfig::default()).expect("prepare");
    for (l, w) in model.weights.layers.iter_mut().enumerate() {
        for (i, v) in w.iter_mut().enumerate() {
            *v = (((i * 7 + l * 3) % 11) as f64 - 5.0) * 0.05;
        }
    }
    (tree.dataset, tree.gold, model)
}

/// Dense `(n + 1) x (n + 1)` weight matrix with entries uniform in `[0, 1)`.
pub fn dense_weights(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=n).map(|_| (0..=n).map(|_| rng.random()).collect()).collect()
}
