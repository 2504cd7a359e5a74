//! Fitting a model to gold hierarchies: projections, bin edges and the
//! Dirichlet prior are estimated directly; layer weights by stochastic EM
//! whose E-step is a persistent Gibbs chain per training tree.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::embed_stats::{ImageStats, TopK};
use crate::error::{Error, Result};
use crate::features::{
    learn_projection, BinSet, BinSpec, Block, BlockMask, FeatureCache, PairValues, ProjectionMatrix, DEFAULT_LAMBDA,
};
use crate::inference::{Chain, InitMode, SamplerConfig, Scorer};
use crate::model::{AlphaPrior, Model, DEFAULT_LAYERS};
use crate::taxonomy::{Taxonomy, ROOT};

/// A dataset together with its gold hierarchy.
#[derive(Debug, Clone)]
pub struct LabeledTree {
    pub dataset: Dataset,
    pub gold: Taxonomy,
}

impl LabeledTree {
    pub fn new(dataset: Dataset, gold: Taxonomy) -> Result<Self> {
        if dataset.len() != gold.len() {
            return Err(Error::NodeSetMismatch {
                left: dataset.len(),
                right: gold.len(),
            });
        }
        Ok(LabeledTree { dataset, gold })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layers: usize,
    pub em_iterations: usize,
    pub eta0: f64,
    /// The learning rate drops tenfold every this many iterations.
    pub decay_every: usize,
    /// E-step chain: `burn_in` sweeps before the first iteration, then
    /// `samples` sweeps averaged per iteration. Its seed is ignored in favour
    /// of `seed`.
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Stop once the gold score has not improved for this many iterations.
    pub patience: Option<usize>,
    pub lambda: f64,
    pub top_k: TopK,
    pub blocks: BlockMask,
    /// Divide the summed gradient by the number of training categories
    /// before the ascent step.
    pub per_node_gradient: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: DEFAULT_LAYERS,
            em_iterations: 300,
            eta0: 0.1,
            decay_every: 100,
            sampler: SamplerConfig {
                burn_in: 20,
                samples: 4,
                seed: 0,
                init: InitMode::Star,
            },
            seed: 0,
            patience: Some(50),
            lambda: DEFAULT_LAMBDA,
            top_k: TopK::All,
            blocks: BlockMask::all(),
            per_node_gradient: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("at least one layer is required".into()));
        }
        if self.em_iterations == 0 {
            return Err(Error::Config("at least one EM iteration is required".into()));
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(Error::Config("initial learning rate must be > 0".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay interval must be >= 1".into()));
        }
        if self.sampler.samples == 0 {
            return Err(Error::Config("E-step needs at least one sample sweep".into()));
        }
        Ok(())
    }

    /// `η₀ · 10^(-⌊iter / decay_every⌋)`.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        // divide rather than multiply by 10^-k: 0.1 / 10 is exactly 0.01
        let drops = (iteration / self.decay_every) as i32;
        self.eta0 / 10f64.powi(drops)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub eta: f64,
    /// Gold-tree score (edge scores plus Dirichlet terms) before the update.
    pub surrogate: f64,
    /// Euclidean norm of the raw gradient, per layer.
    pub grad_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub log: TrainingLog,
}

/// Per-layer sums of the active features over the edges of `t`, each edge
/// credited to the layer of its child's depth in `t`.
pub fn feature_sums(cache: &FeatureCache, t: &Taxonomy, layers: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; cache.dim()]; layers];
    add_feature_sums(cache, t, &mut out);
    out
}

fn add_feature_sums(cache: &FeatureCache, t: &Taxonomy, out: &mut [Vec<f64>]) {
    let depths = t.depths();
    let layers = out.len();
    let mut sibs = Vec::new();
    for (p, c) in t.edges() {
        let l = depths[c].clamp(1, layers) - 1;
        let row = &mut out[l];
        for &i in cache.fixed_active(p, c) {
            row[i as usize] += 1.0;
        }
        if p != ROOT {
            sibs.clear();
            sibs.extend(t.children(p).iter().copied().filter(|&s| s != c));
            for i in cache.sibling_active(c, sibs.iter().copied()) {
                row[i] += 1.0;
            }
        }
    }
}

pub fn gold_feature_sums(model: &Model, data: &Dataset, gold: &Taxonomy) -> Result<Vec<Vec<f64>>> {
    check_sizes(data, gold)?;
    let cache = FeatureCache::build(data, model)?;
    Ok(feature_sums(&cache, gold, model.weights.num_layers()))
}

/// Monte-Carlo estimate of the expected per-layer feature sums under the
/// model, from one chain: `burn_in` sweeps, then `samples` averaged sweeps.
pub fn expected_feature_sums(
    model: &Model,
    data: &Dataset,
    alpha: &[f64],
    sampler: &SamplerConfig,
) -> Result<Vec<Vec<f64>>> {
    let cache = FeatureCache::build(data, model)?;
    let scorer = Scorer::new(&cache, &model.weights, alpha.to_vec())?;
    let mut chain = Chain::new(data.len(), &sampler.init, sampler.seed)?;
    expected_from_chain(&scorer, &mut chain, sampler.burn_in, sampler.samples)
}

fn expected_from_chain(scorer: &Scorer<'_>, chain: &mut Chain, burn_in: usize, samples: usize) -> Result<Vec<Vec<f64>>> {
    if samples == 0 {
        return Err(Error::Config("need at least one sample sweep".into()));
    }
    for _ in 0..burn_in {
        chain.sweep(scorer)?;
    }
    let layers = scorer.weights().num_layers();
    // integer counts first, one division at the end
    let mut out = vec![vec![0.0; scorer.cache().dim()]; layers];
    for _ in 0..samples {
        chain.sweep(scorer)?;
        add_feature_sums(scorer.cache(), chain.tree(), &mut out);
    }
    let denom = samples as f64;
    out.iter_mut().flatten().for_each(|v| *v /= denom);
    Ok(out)
}

/// `δw_l = gold_l − E[f]_l`, the gradient of `log p(gold)` with respect to
/// the layer weights (expectation by sampling).
pub fn gradient(model: &Model, data: &Dataset, gold: &Taxonomy, sampler: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    check_sizes(data, gold)?;
    let alpha = model.alpha.with_depths(&gold.depths());
    let gold_sums = gold_feature_sums(model, data, gold)?;
    let expected = expected_feature_sums(model, data, &alpha, sampler)?;
    Ok(subtract(&gold_sums, &expected))
}

fn subtract(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

fn check_sizes(data: &Dataset, gold: &Taxonomy) -> Result<()> {
    if data.len() != gold.len() {
        return Err(Error::NodeSetMismatch {
            left: data.len(),
            right: gold.len(),
        });
    }
    Ok(())
}

/// Add-one smoothed mean fan-out: of the pseudo-root, and of categories at
/// each gold depth.
pub fn estimate_alpha(trees: &[&Taxonomy]) -> Result<AlphaPrior> {
    if trees.is_empty() {
        return Err(Error::Empty("training trees"));
    }
    let root_mean = trees.iter().map(|t| t.child_count(ROOT) as f64).sum::<f64>() / trees.len() as f64;
    let max_depth = trees.iter().map(|t| t.height()).max().unwrap_or(0);
    let mut totals = vec![(0.0, 0usize); max_depth];
    let (mut all_sum, mut all_count) = (0.0, 0usize);
    for t in trees {
        let depths = t.depths();
        for n in 1..=t.len() {
            let q = t.child_count(n) as f64;
            totals[depths[n] - 1].0 += q;
            totals[depths[n] - 1].1 += 1;
            all_sum += q;
            all_count += 1;
        }
    }
    let by_depth = totals
        .into_iter()
        .map(|(s, c)| if c == 0 { 1.0 } else { 1.0 + s / c as f64 })
        .collect();
    let pooled = if all_count == 0 {
        1.0
    } else {
        1.0 + all_sum / all_count as f64
    };
    Ok(AlphaPrior {
        root: 1.0 + root_mean,
        by_depth,
        pooled,
    })
}

/// Projections fitted on the gold parent-child pairs: child mean image to
/// parent word, and child word to parent word. `None` when no pair has both
/// modalities.
pub fn fit_projections(
    trees: &[LabeledTree],
    lambda: f64,
) -> Result<(Option<ProjectionMatrix>, Option<ProjectionMatrix>)> {
    let mut image_word: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut word_word: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for tree in trees {
        let stats = ImageStats::new(&tree.dataset);
        for (p, c) in tree.gold.edges().filter(|&(p, _)| p != ROOT) {
            let Some(pw) = &tree.dataset.item(p).word_vec else {
                continue;
            };
            if let Some(cg) = stats.summary(c) {
                image_word.push((cg.mean.clone(), pw.clone()));
            }
            if let Some(cw) = &tree.dataset.item(c).word_vec {
                word_word.push((cw.clone(), pw.clone()));
            }
        }
    }
    let fit = |pairs: &[(Vec<f64>, Vec<f64>)]| -> Result<Option<ProjectionMatrix>> {
        if pairs.is_empty() {
            Ok(None)
        } else {
            // the objective trace is a fitting diagnostic, not part of the model
            learn_projection(pairs, lambda).map(|mut p| {
                p.history.clear();
                Some(p)
            })
        }
    };
    Ok((fit(&image_word)?, fit(&word_word)?))
}

/// Quantile edges per block from training values: every defined pairwise
/// value plus, for the sibling blocks, the aggregates seen on gold edges.
pub fn fit_bins(values: &[(&PairValues, &Taxonomy)]) -> Result<BinSet> {
    let mut samples: [Vec<f64>; 5] = Default::default();
    for (pv, gold) in values {
        for (slot, block) in Block::BINNED.into_iter().enumerate() {
            samples[slot].extend(pv.pair_samples(block));
        }
        for (p, c) in gold.edges().filter(|&(p, _)| p != ROOT) {
            let sibs: Vec<usize> = gold.children(p).iter().copied().filter(|&s| s != c).collect();
            let ev = pv.edge_values(p, c, &sibs);
            samples[0].extend(ev.sibling_visual);
            samples[3].extend(ev.sibling_text);
        }
    }
    let [sv, pcv, iw, st, pct] = samples;
    Ok(BinSet {
        sibling_visual: BinSpec::build_lenient(&sv)?,
        parent_child_visual: BinSpec::build_lenient(&pcv)?,
        image_to_word: BinSpec::build_lenient(&iw)?,
        sibling_text: BinSpec::build_lenient(&st)?,
        parent_child_text: BinSpec::build_lenient(&pct)?,
    })
}

/// Everything but the layer weights, plus one feature cache per tree.
pub fn prepare(trees: &[LabeledTree], cfg: &TrainConfig) -> Result<(Model, Vec<FeatureCache>)> {
    if trees.is_empty() {
        return Err(Error::Empty("training trees"));
    }
    cfg.validate()?;
    let (image_dim, word_dim) = (trees[0].dataset.image_dim(), trees[0].dataset.word_dim());
    for t in trees {
        check_sizes(&t.dataset, &t.gold)?;
        if t.dataset.image_dim() != image_dim || t.dataset.word_dim() != word_dim {
            return Err(Error::DimensionMismatch {
                expected: image_dim,
                found: t.dataset.image_dim(),
            });
        }
    }
    let mut model = Model::blank(cfg.layers);
    model.top_k = cfg.top_k;
    model.blocks = cfg.blocks;
    model.input_dims = Some((image_dim, word_dim));
    let (iw, ww) = fit_projections(trees, cfg.lambda)?;
    model.proj_image_word = iw;
    model.proj_word_word = ww;
    let values = trees
        .iter()
        .map(|t| {
            let stats = ImageStats::new(&t.dataset);
            PairValues::compute(
                &t.dataset,
                &stats,
                model.proj_image_word.as_ref(),
                model.proj_word_word.as_ref(),
                model.top_k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&PairValues, &Taxonomy)> = values.iter().zip(trees.iter().map(|t| &t.gold)).collect();
    model.bins = fit_bins(&pairs)?;
    let golds: Vec<&Taxonomy> = trees.iter().map(|t| &t.gold).collect();
    model.alpha = estimate_alpha(&golds)?;
    let caches = values.into_iter().map(|v| FeatureCache::new(v, &model)).collect();
    Ok((model, caches))
}

/// Stochastic EM on the layer weights of `model`, starting from its current
/// weights.
pub fn em_train(
    mut model: Model,
    caches: &[FeatureCache],
    golds: &[&Taxonomy],
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if caches.is_empty() || caches.len() != golds.len() {
        return Err(Error::Empty("training trees"));
    }
    let layers = model.weights.num_layers();
    let alphas: Vec<Vec<f64>> = golds.iter().map(|g| model.alpha.with_depths(&g.depths())).collect();
    let gold_sums: Vec<Vec<Vec<f64>>> = caches.iter().zip(golds).map(|(c, g)| feature_sums(c, g, layers)).collect();
    let mut chains = golds
        .iter()
        .enumerate()
        .map(|(i, g)| Chain::new(g.len(), &cfg.sampler.init, cfg.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let total_nodes: usize = golds.iter().map(|g| g.len()).sum::<usize>().max(1);

    let mut log = TrainingLog::default();
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    for iteration in 0..cfg.em_iterations {
        let burn = if iteration == 0 { cfg.sampler.burn_in } else { 0 };
        let weights = &model.weights;
        let per_tree = chains
            .par_iter_mut()
            .zip(caches.par_iter())
            .zip(alphas.par_iter())
            .zip(golds.par_iter())
            .map(|(((chain, cache), alpha), gold)| -> Result<(Vec<Vec<f64>>, f64)> {
                let scorer = Scorer::new(cache, weights, alpha.clone())?;
                let expected = expected_from_chain(&scorer, chain, burn, cfg.sampler.samples)?;
                Ok((expected, scorer.log_joint(gold)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut grad = vec![vec![0.0; model.dim()]; layers];
        let mut surrogate = 0.0;
        for ((expected, score), gold) in per_tree.iter().zip(&gold_sums) {
            surrogate += score;
            for l in 0..layers {
                for (g, (a, b)) in grad[l].iter_mut().zip(gold[l].iter().zip(&expected[l])) {
                    *g += a - b;
                }
            }
        }
        let eta = cfg.learning_rate(iteration);
        log.rows.push(LogRow {
            iteration,
            eta,
            surrogate,
            grad_norms: grad.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).collect(),
        });

        let scale = if cfg.per_node_gradient {
            eta / total_nodes as f64
        } else {
            eta
        };
        for (w, g) in model.weights.layers.iter_mut().zip(&grad) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi += scale * gi;
            }
        }

        if !best.is_finite() || surrogate > best + 1e-9 * best.abs().max(1.0) {
            best = surrogate;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.patience.is_some_and(|p| since_best >= p) {
            log.stopped_early = true;
            break;
        }
    }
    model.validate()?;
    Ok(TrainOutput { model, log })
}

/// Full pipeline: projections, bins and prior from the gold trees, then EM.
pub fn train(trees: &[LabeledTree], cfg: &TrainConfig) -> Result<TrainOutput> {
    let (model, caches) = prepare(trees, cfg)?;
    let golds: Vec<&Taxonomy> = trees.iter().map(|t| &t.gold).collect();
    em_train(model, &caches, &golds, cfg)
}
