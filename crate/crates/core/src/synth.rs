//! Synthetic corpora with a known gold hierarchy.
//!
//! Every category has a latent word vector and a latent image prototype that
//! drift from its parent's, or, with a per-depth probability, are drawn afresh
//! so that the modality says nothing about the parent. Observed word vectors
//! and image vectors are noisy draws around the latents. Drift, reset and
//! noise levels may all vary by depth. Names
//! follow a concatenative scheme: a child's name is a short random prefix
//! glued onto its parent's name, so "ends with" holds along gold edges.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelItem};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::training::{prepare, LabeledTree, TrainConfig};
use crate::taxonomy::{Taxonomy, ROOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Shape {
    /// One top category; the rest attach to uniformly chosen categories
    /// above the last level. At height 1 every category is top-level.
    #[default]
    Random,
    /// About the same number of categories on every level, the first level
    /// hanging straight from the pseudo-root.
    Layered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub nodes: usize,
    pub height: usize,
    pub image_dim: usize,
    pub word_dim: usize,
    /// Observation noise for images, per depth (last entry reused deeper).
    pub visual_noise: Vec<f64>,
    /// Observation noise for word vectors, per depth.
    pub text_noise: Vec<f64>,
    /// Standard deviation of the latent image-prototype drift from parent to
    /// child, per child depth.
    pub visual_drift: Vec<f64>,
    /// Same for the latent word vector.
    pub text_drift: Vec<f64>,
    /// Probability, per child depth, that a child's image prototype is drawn
    /// afresh instead of drifting from its parent's. Such a child carries no
    /// visual cue about its parent.
    pub visual_reset: Vec<f64>,
    /// Same for the latent word vector.
    pub text_reset: Vec<f64>,
    pub images_per_node: usize,
    /// Probability that a child's name extends its parent's name.
    pub morph_prob: f64,
    /// Fraction of a parent's images drawn around its children's prototypes.
    pub parent_mix: f64,
    pub shape: Shape,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 50,
            height: 3,
            image_dim: 16,
            word_dim: 16,
            visual_noise: vec![0.3],
            text_noise: vec![0.3],
            visual_drift: vec![1.0],
            text_drift: vec![1.0],
            visual_reset: vec![0.0],
            text_reset: vec![0.0],
            images_per_node: 10,
            morph_prob: 1.0,
            parent_mix: 0.0,
            shape: Shape::Random,
        }
    }
}

impl SynthConfig {
    pub fn with_noise(mut self, noise: f64) -> Self {
        self.visual_noise = vec![noise];
        self.text_noise = vec![noise];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.nodes < self.height {
            return Err(Error::Config(format!(
                "need nodes >= height >= 1 (nodes {}, height {})",
                self.nodes, self.height
            )));
        }
        if self.image_dim == 0 || self.word_dim == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        let nonneg = |v: &[f64]| !v.is_empty() && v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if ![&self.visual_noise, &self.text_noise, &self.visual_drift, &self.text_drift]
            .iter()
            .all(|v| nonneg(v))
        {
            return Err(Error::Config("noise and drift levels must be non-empty, finite and >= 0".into()));
        }
        let prob = |p: &f64| (0.0..=1.0).contains(p);
        if !prob(&self.morph_prob)
            || !prob(&self.parent_mix)
            || self.visual_reset.is_empty()
            || self.text_reset.is_empty()
            || !self.visual_reset.iter().chain(&self.text_reset).all(prob)
        {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn at_depth(levels: &[f64], depth: usize) -> f64 {
        levels[(depth.max(1) - 1).min(levels.len() - 1)]
    }
}

/// One generated hierarchy with its latent variables.
#[derive(Debug, Clone)]
pub struct SynthTree {
    pub dataset: Dataset,
    pub gold: Taxonomy,
    /// Latent image prototype per id (entry 0 unused, empty).
    pub prototypes: Vec<Vec<f64>>,
    pub latent_words: Vec<Vec<f64>>,
}

/// `count` independent trees from one seeded stream.
pub fn generate(cfg: &SynthConfig, count: usize, seed: u64) -> Result<Vec<SynthTree>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_one(cfg, &mut rng)).collect()
}

pub fn generate_one<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthTree> {
    cfg.validate()?;
    let n = cfg.nodes;
    let (shape_parents, shape_depths) = match cfg.shape {
        Shape::Random => random_shape(n, cfg.height, rng),
        Shape::Layered => layered_shape(n, cfg.height, rng),
    };
    // Random relabelling so ids carry no structural hint; parents are
    // generated before their children by walking the unlabelled order.
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let mut label = vec![0usize; n + 1];
    for (k, &id) in perm.iter().enumerate() {
        label[k + 1] = id;
    }
    let mut parents = vec![0usize; n];
    for k in 1..=n {
        let p = shape_parents[k];
        parents[label[k] - 1] = if p == ROOT { ROOT } else { label[p] };
    }
    let gold = Taxonomy::from_parents(&parents)?;

    let std = |s: f64| Normal::new(0.0, s).expect("finite non-negative std");
    let unit = std(1.0);
    let mut prototypes = vec![Vec::new(); n + 1];
    let mut latent_words = vec![Vec::new(); n + 1];
    let mut names = vec![String::new(); n + 1];
    for k in 1..=n {
        let id = label[k];
        let p = gold.parent(id);
        let fresh = |dim: usize, rng: &mut R| -> Vec<f64> { (0..dim).map(|_| 2.0 * unit.sample(rng)).collect() };
        if p == ROOT {
            prototypes[id] = fresh(cfg.image_dim, rng);
            latent_words[id] = fresh(cfg.word_dim, rng);
            names[id] = random_word(rng, 5, 8);
        } else {
            let depth = gold.depth(id);
            let vd = std(SynthConfig::at_depth(&cfg.visual_drift, depth));
            let td = std(SynthConfig::at_depth(&cfg.text_drift, depth));
            prototypes[id] = if rng.random::<f64>() < SynthConfig::at_depth(&cfg.visual_reset, depth) {
                fresh(cfg.image_dim, rng)
            } else {
                prototypes[p].iter().map(|&x| x + vd.sample(rng)).collect()
            };
            latent_words[id] = if rng.random::<f64>() < SynthConfig::at_depth(&cfg.text_reset, depth) {
                fresh(cfg.word_dim, rng)
            } else {
                latent_words[p].iter().map(|&x| x + td.sample(rng)).collect()
            };
            names[id] = if rng.random::<f64>() < cfg.morph_prob {
                format!("{}{}", random_word(rng, 4, 6), names[p])
            } else {
                random_word(rng, 5, 8)
            };
        }
        debug_assert_eq!(shape_depths[k], gold.depth(id));
    }

    let mut items = Vec::with_capacity(n);
    for id in 1..=n {
        let depth = gold.depth(id);
        let vn = std(SynthConfig::at_depth(&cfg.visual_noise, depth));
        let tn = std(SynthConfig::at_depth(&cfg.text_noise, depth));
        let kids = gold.children(id);
        let mut images = Vec::with_capacity(cfg.images_per_node);
        for _ in 0..cfg.images_per_node {
            let centre = if !kids.is_empty() && rng.random::<f64>() < cfg.parent_mix {
                &prototypes[kids[rng.random_range(0..kids.len())]]
            } else {
                &prototypes[id]
            };
            images.push(centre.iter().map(|&x| x + vn.sample(rng)).collect());
        }
        let word = latent_words[id].iter().map(|&x| x + tn.sample(rng)).collect();
        items.push(LabelItem::new(id, names[id].clone()).with_word(word).with_images(images));
    }
    let dataset = Dataset::new(items, cfg.image_dim, cfg.word_dim)?;
    Ok(SynthTree {
        dataset,
        gold,
        prototypes,
        latent_words,
    })
}

/// A small random problem for checking inference: a generated tree over `n`
/// categories with some modalities dropped, a model whose projections, bins
/// and prior are fitted on that tree, and weights drawn from
/// `N(0, weight_scale²)`.
pub fn random_instance(n: usize, layers: usize, weight_scale: f64, seed: u64) -> Result<(Dataset, Taxonomy, Model)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SynthConfig {
        nodes: n,
        height: n.min(3),
        image_dim: 3,
        word_dim: 3,
        visual_noise: vec![0.5],
        text_noise: vec![0.5],
        images_per_node: 3,
        morph_prob: 0.5,
        ..SynthConfig::default()
    };
    let tree = generate_one(&cfg, &mut rng)?;
    let items = tree
        .dataset
        .items()
        .iter()
        .map(|it| {
            let mut it = it.clone();
            if rng.random::<f64>() < 0.2 {
                it.word_vec = None;
            }
            if rng.random::<f64>() < 0.2 {
                it.image_vecs.clear();
            }
            it
        })
        .collect();
    let dataset = Dataset::new(items, cfg.image_dim, cfg.word_dim)?;
    let train_cfg = TrainConfig {
        layers,
        ..TrainConfig::default()
    };
    let labeled = [LabeledTree::new(dataset.clone(), tree.gold.clone())?];
    let (mut model, _) = prepare(&labeled, &train_cfg)?;
    let normal = Normal::new(0.0, weight_scale).map_err(|e| Error::Config(e.to_string()))?;
    for w in &mut model.weights.layers {
        for v in w.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok((dataset, tree.gold, model))
}

// Parents in generation order (index 0 unused); every parent precedes its
// children. Returns (parents, depths).
fn random_shape<R: Rng + ?Sized>(n: usize, height: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut parents = vec![0usize; n + 1];
    let mut depths = vec![0usize; n + 1];
    // spine reaching the requested height
    for k in 1..=height {
        parents[k] = k - 1;
        depths[k] = k;
    }
    for k in height + 1..=n {
        let open: Vec<usize> = (1..k).filter(|&j| depths[j] < height).collect();
        // a flat hierarchy has no category to hang the rest from
        let p = if open.is_empty() { ROOT } else { open[rng.random_range(0..open.len())] };
        parents[k] = p;
        depths[k] = depths[p] + 1;
    }
    (parents, depths)
}

fn layered_shape<R: Rng + ?Sized>(n: usize, height: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut parents = vec![0usize; n + 1];
    let mut depths = vec![0usize; n + 1];
    let mut level_of = Vec::with_capacity(n);
    for level in 1..=height {
        let count = n / height + usize::from(level <= n % height);
        level_of.extend(std::iter::repeat_n(level, count));
    }
    let mut prev: Vec<usize> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut level = 1;
    for (k, &l) in (1..=n).zip(&level_of) {
        if l != level {
            prev = std::mem::take(&mut current);
            level = l;
        }
        let p = if l == 1 { ROOT } else { prev[rng.random_range(0..prev.len())] };
        parents[k] = p;
        depths[k] = l;
        current.push(k);
    }
    (parents, depths)
}

fn random_word<R: Rng + ?Sized>(rng: &mut R, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}
