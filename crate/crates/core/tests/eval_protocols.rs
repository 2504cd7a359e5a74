use taxind_core::eval::{run_completion, CompletionConfig, PipelineConfig, Task};
use taxind_core::synth::{generate, Shape, SynthConfig};
use taxind_core::training::TrainConfig;
use taxind_core::{Error, SamplerConfig};

fn completion_cfg(test_fraction: f64, split_seed: u64) -> CompletionConfig {
    CompletionConfig {
        pipeline: PipelineConfig {
            train: TrainConfig {
                em_iterations: 100,
                ..TrainConfig::default()
            },
            sampler: SamplerConfig {
                burn_in: 100,
                samples: 400,
                seed: 1,
                ..SamplerConfig::default()
            },
        },
        test_fraction,
        split_seed,
    }
}

#[test]
fn nothing_held_out_returns_gold() {
    let t = &generate(&SynthConfig::default(), 1, 2).unwrap()[0];
    let out = run_completion(&t.dataset, &t.gold, &completion_cfg(0.0, 0)).unwrap();
    assert_eq!(out.predicted, t.gold);
    assert_eq!(out.report.f1, 1.0);
    assert_eq!(out.report.task, Some(Task::Completion));
    assert!(out.test_nodes.is_empty());
}

#[test]
fn degenerate_splits_are_rejected() {
    let cfg = SynthConfig {
        nodes: 10,
        ..SynthConfig::default()
    };
    let t = &generate(&cfg, 1, 2).unwrap()[0];
    // 0.04 * 10 rounds to no test node at all
    assert!(matches!(
        run_completion(&t.dataset, &t.gold, &completion_cfg(0.04, 0)),
        Err(Error::DegenerateSplit)
    ));
    assert!(run_completion(&t.dataset, &t.gold, &completion_cfg(1.0, 0)).is_err());
    let other = &generate(&SynthConfig { nodes: 11, ..cfg }, 1, 2).unwrap()[0];
    assert!(matches!(
        run_completion(&other.dataset, &t.gold, &completion_cfg(0.3, 0)),
        Err(Error::NodeSetMismatch { .. })
    ));
}

#[test]
fn separable_names_complete_nearly_perfectly() {
    // Two levels, every child name extends its parent's, both embeddings
    // nearly noise-free: the name suffix identifies the parent uniquely.
    // Orphans hang from the pseudo-root in the training view, which teaches
    // the model that top-level attachment is plausible for any name, so an
    // occasional split still loses a node.
    let cfg = SynthConfig {
        nodes: 30,
        height: 2,
        shape: Shape::Layered,
        ..SynthConfig::default().with_noise(0.05)
    };
    let t = &generate(&cfg, 1, 40).unwrap()[0];
    let mut cc = completion_cfg(0.3, 0);
    cc.pipeline.train.em_iterations = 300;
    // raw gradient steps: sharper weights that memorize the name pattern
    cc.pipeline.train.per_node_gradient = false;
    let mut f1 = Vec::new();
    for split in 0..8 {
        cc.split_seed = split;
        let out = run_completion(&t.dataset, &t.gold, &cc).unwrap();
        assert_eq!(out.test_nodes.len(), 9);
        // edges between retained categories never change
        for c in 1..=t.gold.len() {
            let p = t.gold.parent(c);
            if p != 0 && !out.test_nodes.contains(&c) && !out.test_nodes.contains(&p) {
                assert_eq!(out.predicted.parent(c), p);
            }
        }
        f1.push(out.report.f1);
    }
    let perfect = f1.iter().filter(|&&v| v == 1.0).count();
    let mean = f1.iter().sum::<f64>() / f1.len() as f64;
    assert!(perfect >= 5 && mean >= 0.95, "{f1:?}");
}

#[test]
fn completion_is_reproducible() {
    let t = &generate(&SynthConfig { nodes: 20, ..SynthConfig::default() }, 1, 5).unwrap()[0];
    let cfg = completion_cfg(0.3, 9);
    let a = run_completion(&t.dataset, &t.gold, &cfg).unwrap();
    let b = run_completion(&t.dataset, &t.gold, &cfg).unwrap();
    assert_eq!(a.predicted, b.predicted);
    assert_eq!(a.report, b.report);
    assert_eq!(a.test_nodes, b.test_nodes);
}
