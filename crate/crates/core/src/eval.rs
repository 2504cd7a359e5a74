//! Ancestor-F1, BFS subtree extraction, and the completion and construction
//! protocols.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureCache;
use crate::inference::{mst_decode, mst_decode_constrained, run_chain, InitMode, MarginalTable, SamplerConfig, Scorer};
use crate::model::Model;
use crate::taxonomy::{Taxonomy, ROOT};
use crate::training::{train, LabeledTree, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Completion,
    Construction,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Completion => "completion",
            Task::Construction => "construction",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Option<Task>,
    pub height: Option<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub intersection: usize,
}

impl EvalReport {
    fn from_sets(pred: &BTreeSet<(usize, usize)>, gold: &BTreeSet<(usize, usize)>) -> Self {
        let inter = pred.intersection(gold).count();
        let (precision, recall, f1) = if pred.is_empty() && gold.is_empty() {
            // 0/0: only identical (flat) structures count as a match
            (1.0, 1.0, 1.0)
        } else {
            let p = if pred.is_empty() { 0.0 } else { inter as f64 / pred.len() as f64 };
            let r = if gold.is_empty() { 0.0 } else { inter as f64 / gold.len() as f64 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (p, r, f)
        };
        EvalReport {
            task: None,
            height: None,
            precision,
            recall,
            f1,
            predicted: pred.len(),
            gold: gold.len(),
            intersection: inter,
        }
    }

    pub fn with_task(mut self, task: Task, height: usize) -> Self {
        self.task = Some(task);
        self.height = Some(height);
        self
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(task) = self.task {
            write!(f, "{task} ")?;
        }
        if let Some(h) = self.height {
            write!(f, "h={h} ")?;
        }
        write!(
            f,
            "P={:.4} R={:.4} F1={:.4} (predicted {}, gold {}, shared {})",
            self.precision, self.recall, self.f1, self.predicted, self.gold, self.intersection
        )
    }
}

/// Every `(descendant, ancestor)` pair with the ancestor a real category.
pub fn ancestor_pairs(t: &Taxonomy) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for n in 1..=t.len() {
        let mut a = t.parent(n);
        while a != ROOT {
            out.insert((n, a));
            a = t.parent(a);
        }
    }
    out
}

pub fn ancestor_f1(pred: &Taxonomy, gold: &Taxonomy) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::NodeSetMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    Ok(EvalReport::from_sets(&ancestor_pairs(pred), &ancestor_pairs(gold)))
}

/// Ancestor-F1 over the pairs that involve at least one flagged category
/// (`focus` indexed by id).
pub fn ancestor_f1_focused(pred: &Taxonomy, gold: &Taxonomy, focus: &[bool]) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::NodeSetMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    if focus.len() != gold.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: gold.len() + 1,
            found: focus.len(),
        });
    }
    let keep = |s: BTreeSet<(usize, usize)>| -> BTreeSet<(usize, usize)> {
        s.into_iter().filter(|&(d, a)| focus[d] || focus[a]).collect()
    };
    Ok(EvalReport::from_sets(
        &keep(ancestor_pairs(pred)),
        &keep(ancestor_pairs(gold)),
    ))
}

/// Categories within `h` levels of `root` (the root being level 1),
/// renumbered in BFS order, with `root` hanging from the pseudo-root.
/// Returns the sub-dataset, the sub-tree, and the original id of each new id
/// (entry 0 is the pseudo-root).
pub fn bfs_subtree(data: &Dataset, t: &Taxonomy, root: usize, h: usize) -> Result<(Dataset, Taxonomy, Vec<usize>)> {
    if root == ROOT || root > t.len() {
        return Err(Error::InvalidNode(root));
    }
    if h == 0 {
        return Err(Error::Config("subtree height must be >= 1".into()));
    }
    if data.len() != t.len() {
        return Err(Error::NodeSetMismatch {
            left: data.len(),
            right: t.len(),
        });
    }
    let mut order = Vec::new();
    let mut queue = VecDeque::from([(root, 1usize)]);
    while let Some((n, level)) = queue.pop_front() {
        order.push(n);
        if level < h {
            queue.extend(t.children(n).iter().map(|&c| (c, level + 1)));
        }
    }
    let mut new_id = vec![usize::MAX; t.len() + 1];
    for (i, &n) in order.iter().enumerate() {
        new_id[n] = i + 1;
    }
    let parents: Vec<usize> = order
        .iter()
        .map(|&n| if n == root { ROOT } else { new_id[t.parent(n)] })
        .collect();
    let sub = Taxonomy::from_parents(&parents)?;
    let sub_data = data.subset(&order)?;
    let mut ids = vec![ROOT];
    ids.extend(order);
    Ok((sub_data, sub, ids))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Test-time chain.
    pub sampler: SamplerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

/// Builds a tree over `data` from scratch: Gibbs from the star, then the
/// maximum spanning arborescence of the marginals.
pub fn construct_tree(model: &Model, data: &Dataset, sampler: &SamplerConfig) -> Result<(Taxonomy, MarginalTable)> {
    model.validate()?;
    let cache = FeatureCache::build(data, model)?;
    let scorer = Scorer::new(&cache, &model.weights, model.alpha.unknown_depths(data.len()))?;
    let marginals = run_chain(&scorer, sampler, None)?;
    let tree = mst_decode(&marginals.to_matrix())?;
    Ok((tree, marginals))
}

#[derive(Debug, Clone)]
pub struct ConstructionOutcome {
    pub report: EvalReport,
    pub predicted: Taxonomy,
    pub model: Model,
}

/// Trains on `train_trees`, builds a tree over `test` and scores it.
pub fn run_construction(
    train_trees: &[LabeledTree],
    test: &Dataset,
    test_gold: &Taxonomy,
    cfg: &PipelineConfig,
) -> Result<ConstructionOutcome> {
    let out = train(train_trees, &cfg.train)?;
    let (predicted, _) = construct_tree(&out.model, test, &cfg.sampler)?;
    let report = ancestor_f1(&predicted, test_gold)?.with_task(Task::Construction, test_gold.height());
    Ok(ConstructionOutcome {
        report,
        predicted,
        model: out.model,
    })
}

/// Each tree in turn is held out and built by a model trained on the rest.
pub fn leave_one_out(trees: &[LabeledTree], cfg: &PipelineConfig) -> Result<Vec<ConstructionOutcome>> {
    if trees.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least two trees".into()));
    }
    (0..trees.len())
        .map(|held| {
            let train_set: Vec<LabeledTree> = trees
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != held)
                .map(|(_, t)| t.clone())
                .collect();
            run_construction(&train_set, &trees[held].dataset, &trees[held].gold, cfg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionConfig {
    pub pipeline: PipelineConfig,
    pub test_fraction: f64,
    pub split_seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            pipeline: PipelineConfig::default(),
            test_fraction: 0.3,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionOutcome {
    pub report: EvalReport,
    pub predicted: Taxonomy,
    /// Held-out ids, ascending.
    pub test_nodes: Vec<usize>,
}

/// Nearest ancestor of `n` (excluding `n`) that is kept, or the pseudo-root.
fn nearest_kept(t: &Taxonomy, n: usize, kept: &[bool]) -> usize {
    let mut a = t.parent(n);
    while a != ROOT && !kept[a] {
        a = t.parent(a);
    }
    a
}

/// Holds out a random share of the categories, trains on the remaining
/// hierarchy, and re-inserts the held-out ones jointly with the retained
/// edges frozen.
pub fn run_completion(data: &Dataset, gold: &Taxonomy, cfg: &CompletionConfig) -> Result<CompletionOutcome> {
    let n = gold.len();
    if data.len() != n {
        return Err(Error::NodeSetMismatch {
            left: data.len(),
            right: n,
        });
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(Error::Config("test fraction must lie in [0, 1)".into()));
    }
    let count = (cfg.test_fraction * n as f64).round() as usize;
    if cfg.test_fraction == 0.0 {
        // nothing to re-insert: the gold tree is returned as is
        let report = ancestor_f1(gold, gold)?.with_task(Task::Completion, gold.height());
        return Ok(CompletionOutcome {
            report,
            predicted: gold.clone(),
            test_nodes: Vec::new(),
        });
    }
    if count == 0 || count >= n {
        return Err(Error::DegenerateSplit);
    }
    let mut ids: Vec<usize> = (1..=n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.split_seed));
    let mut test_nodes = ids[..count].to_vec();
    test_nodes.sort_unstable();
    let mut is_test = vec![false; n + 1];
    for &t in &test_nodes {
        is_test[t] = true;
    }
    let kept: Vec<bool> = (0..=n).map(|i| i != ROOT && !is_test[i]).collect();

    // training view over the retained categories
    let retained: Vec<usize> = (1..=n).filter(|&i| kept[i]).collect();
    let mut new_id = vec![ROOT; n + 1];
    for (k, &r) in retained.iter().enumerate() {
        new_id[r] = k + 1;
    }
    let train_parents: Vec<usize> = retained.iter().map(|&r| new_id[nearest_kept(gold, r, &kept)]).collect();
    let train_tree = Taxonomy::from_parents(&train_parents)?;
    let train_set = [LabeledTree::new(data.subset(&retained)?, train_tree)?];
    let model = train(&train_set, &cfg.pipeline.train)?.model;

    // Retained edges are frozen. A retained category whose parent was held
    // out only hangs from its nearest kept ancestor for training; its real
    // parent is unknown, so it is resampled along with the held-out ones,
    // which start under the pseudo-root.
    let mut fixed = vec![None; n + 1];
    let mut movable = is_test.clone();
    let mut init = vec![ROOT; n];
    for &r in &retained {
        let p = nearest_kept(gold, r, &kept);
        init[r - 1] = p;
        if is_test[gold.parent(r)] {
            movable[r] = true;
        } else {
            fixed[r] = Some(p);
        }
    }
    let init = Taxonomy::from_parents(&init)?;
    let cache = FeatureCache::build(data, &model)?;
    // retained categories keep the prior of their depth in the training
    // view; held-out ones get the pooled value
    let train_depths = train_set[0].gold.depths();
    let mut alpha = model.alpha.unknown_depths(n);
    for &r in &retained {
        alpha[r] = model.alpha.with_depths(&[0, train_depths[new_id[r]]])[1];
    }
    let scorer = Scorer::new(&cache, &model.weights, alpha)?;
    let sampler = SamplerConfig {
        init: InitMode::Given(init),
        ..cfg.pipeline.sampler.clone()
    };
    let marginals = run_chain(&scorer, &sampler, Some(&movable))?;
    let predicted = mst_decode_constrained(&marginals.to_matrix(), &fixed)?;
    let report = ancestor_f1_focused(&predicted, gold, &is_test)?.with_task(Task::Completion, gold.height());
    Ok(CompletionOutcome {
        report,
        predicted,
        test_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(parents: &[usize]) -> Taxonomy {
        Taxonomy::from_parents(parents).unwrap()
    }

    #[test]
    fn pair_sets() {
        let chain = tree(&[0, 1, 2]);
        assert_eq!(ancestor_pairs(&chain), BTreeSet::from([(2, 1), (3, 1), (3, 2)]));
        assert!(ancestor_pairs(&Taxonomy::star(3)).is_empty());
        assert_eq!(ancestor_pairs(&tree(&[0, 1, 1])), BTreeSet::from([(2, 1), (3, 1)]));
    }

    #[test]
    fn hand_fixture() {
        let r = ancestor_f1(&tree(&[0, 1, 1]), &tree(&[0, 1, 2])).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        assert_eq!((r.predicted, r.gold, r.intersection), (2, 3, 2));
    }

    #[test]
    fn identity_and_disjoint() {
        let g = tree(&[0, 1, 2, 1]);
        assert_eq!(ancestor_f1(&g, &g).unwrap().f1, 1.0);
        let a = tree(&[0, 1, 0, 0]);
        let b = tree(&[0, 0, 0, 3]);
        assert_eq!(ancestor_f1(&a, &b).unwrap().f1, 0.0);
    }

    #[test]
    fn flat_trees() {
        let s = Taxonomy::star(3);
        assert_eq!(ancestor_f1(&s, &s).unwrap().f1, 1.0);
        let r = ancestor_f1(&s, &tree(&[0, 1, 0])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn swapping_swaps_precision_and_recall() {
        let a = tree(&[0, 1, 1, 3, 0]);
        let b = tree(&[0, 1, 2, 2, 4]);
        let ab = ancestor_f1(&a, &b).unwrap();
        let ba = ancestor_f1(&b, &a).unwrap();
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn node_set_mismatch() {
        assert!(matches!(
            ancestor_f1(&Taxonomy::star(2), &Taxonomy::star(3)),
            Err(Error::NodeSetMismatch { .. })
        ));
    }

    fn balanced_binary() -> (Dataset, Taxonomy) {
        // 1 -> {2, 3}, 2 -> {4, 5}, 3 -> {6, 7}
        let t = tree(&[0, 1, 1, 2, 2, 3, 3]);
        let items = (1..=7)
            .map(|i| crate::dataset::LabelItem::new(i, format!("c{i}")))
            .collect();
        (Dataset::new(items, 2, 2).unwrap(), t)
    }

    #[test]
    fn bfs_heights() {
        let (d, t) = balanced_binary();
        let (sd, st, ids) = bfs_subtree(&d, &t, 1, 1).unwrap();
        assert_eq!((sd.len(), st.len()), (1, 1));
        assert_eq!(ids, vec![0, 1]);
        let (_, st, ids) = bfs_subtree(&d, &t, 1, 2).unwrap();
        assert_eq!(st.len(), 3);
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(st.parents(), &[0, 1, 1]);
        let (_, st, _) = bfs_subtree(&d, &t, 1, 9).unwrap();
        assert_eq!(st, t);
        let (sd, st, ids) = bfs_subtree(&d, &t, 3, 2).unwrap();
        assert_eq!(ids, vec![0, 3, 6, 7]);
        assert_eq!(st.parents(), &[0, 1, 1]);
        assert_eq!(sd.item(2).name, "c6");
        assert!(bfs_subtree(&d, &t, 8, 2).is_err());
    }
}
