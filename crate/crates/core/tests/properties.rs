use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taxind_core::eval::{ancestor_pairs, bfs_subtree};
use taxind_core::features::{assemble, Block, FeatureCache};
use taxind_core::inference::{mst_decode, parent_distribution, Scorer};
use taxind_core::synth::{generate, random_instance, Shape, SynthConfig};
use taxind_core::taxonomy::random_tree;
use taxind_core::{ancestor_f1, Dataset, LabelItem, ROOT};

fn tree(n: usize, seed: u64) -> taxind_core::Taxonomy {
    random_tree(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembled_blocks_are_one_hot(n in 2usize..6, seed in 0u64..500, pick in any::<u64>()) {
        let (data, _, model) = random_instance(n, 3, 1.0, seed).unwrap();
        let t = tree(n, pick);
        let mut rng = ChaCha8Rng::seed_from_u64(pick);
        let c = rng.random_range(1..=n);
        let p = t.parent(c);
        let sibs: Vec<usize> = t.children(p).iter().copied().filter(|&s| s != c).collect();
        let f = assemble(&data, &model, p, c, &sibs).unwrap();
        prop_assert_eq!(f.dim(), model.dim());
        for b in Block::BINNED {
            let total: f64 = f.0[model.layout.range(b)].iter().sum();
            prop_assert_eq!(total, 1.0, "{}", b);
        }
        let surf = &f.0[model.layout.range(Block::Surface)];
        if p == ROOT {
            prop_assert!(surf.iter().all(|&v| v == 0.0));
        } else {
            for sub in [4..12, 12..22, 22..32] {
                prop_assert_eq!(surf[sub].iter().sum::<f64>(), 1.0);
            }
        }
        // the bias slot marks pseudo-root edges
        prop_assert_eq!(f.0[model.layout.bias] == 1.0, p == ROOT);
    }

    #[test]
    fn candidates_are_exactly_the_non_descendants(n in 1usize..7, seed in 0u64..300, shape in any::<u64>()) {
        let (data, _, model) = random_instance(n, 3, 1.0, seed).unwrap();
        let cache = FeatureCache::build(&data, &model).unwrap();
        let scorer = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(n)).unwrap();
        let t = tree(n, shape);
        for node in 1..=n {
            let below: BTreeSet<usize> = t.descendants(node).into_iter().collect();
            let want: Vec<usize> = (0..=n).filter(|&m| m != node && !below.contains(&m)).collect();
            let dist = parent_distribution(&scorer, &t, node).unwrap();
            let got: Vec<usize> = dist.iter().map(|&(m, _)| m).collect();
            prop_assert_eq!(got, want);
            let total: f64 = dist.iter().map(|&(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decoded_marginals_give_a_tree(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let marg: Vec<Vec<f64>> = (1..=n)
            .map(|c| {
                let mut row: Vec<f64> = (0..=n)
                    .map(|p| if p == c || rng.random::<f64>() < 0.4 { 0.0 } else { rng.random() })
                    .collect();
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|v| *v /= s);
                }
                row
            })
            .collect();
        let t = mst_decode(&marg).unwrap();
        prop_assert_eq!(t.len(), n);
        prop_assert!(t.validate().is_ok());
    }

    #[test]
    fn ancestor_f1_is_symmetric_and_bounded(n in 1usize..15, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (tree(n, a), tree(n, b));
        let xy = ancestor_f1(&x, &y).unwrap();
        let yx = ancestor_f1(&y, &x).unwrap();
        prop_assert_eq!(xy.precision, yx.recall);
        prop_assert_eq!(xy.recall, yx.precision);
        prop_assert_eq!(xy.f1, yx.f1);
        prop_assert!((0.0..=1.0).contains(&xy.f1));
        prop_assert_eq!(xy.f1 == 1.0, ancestor_pairs(&x) == ancestor_pairs(&y));
        prop_assert_eq!(ancestor_f1(&x, &x).unwrap().f1, 1.0);
    }

    #[test]
    fn bfs_subtrees_are_valid_and_short(n in 1usize..30, seed in any::<u64>(), h in 1usize..5) {
        let t = tree(n, seed);
        let items = (1..=n).map(|i| LabelItem::new(i, format!("c{i}"))).collect();
        let data = Dataset::new(items, 1, 1).unwrap();
        let root = 1 + (seed as usize % n);
        let (sub_data, sub, ids) = bfs_subtree(&data, &t, root, h).unwrap();
        prop_assert!(sub.validate().is_ok());
        prop_assert!(sub.height() <= h);
        prop_assert_eq!(sub_data.len(), sub.len());
        prop_assert_eq!(ids[1], root);
        for c in 1..=sub.len() {
            prop_assert_eq!(&sub_data.item(c).name, &data.item(ids[c]).name);
            if sub.parent(c) != ROOT {
                prop_assert_eq!(t.parent(ids[c]), ids[sub.parent(c)]);
            }
        }
    }

    #[test]
    fn generated_corpora_validate(seed in any::<u64>(), nodes in 1usize..25, height in 1usize..5, layered in any::<bool>()) {
        prop_assume!(nodes >= height);
        let cfg = SynthConfig {
            nodes,
            height,
            image_dim: 3,
            word_dim: 2,
            images_per_node: 2,
            shape: if layered { Shape::Layered } else { Shape::Random },
            ..SynthConfig::default()
        };
        for t in generate(&cfg, 2, seed).unwrap() {
            prop_assert!(t.gold.validate().is_ok());
            prop_assert_eq!(t.gold.height(), height);
            // rebuilding runs every dataset check again
            let again = Dataset::new(t.dataset.items().to_vec(), 3, 2);
            prop_assert!(again.is_ok());
        }
    }
}
