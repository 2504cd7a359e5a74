use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scorer;
use crate::error::{Error, Result};
use crate::taxonomy::{random_tree, Taxonomy, ROOT};

#[derive(Debug, Clone, Default, PartialEq)]
pub enum InitMode {
    /// Every category under the pseudo-root.
    #[default]
    Star,
    /// Uniformly random parent-vector tree drawn from the chain's RNG.
    RandomTree,
    Given(Taxonomy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub init: InitMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            burn_in: 1000,
            samples: 5000,
            seed: 0,
            init: InitMode::Star,
        }
    }
}

/// Posterior over `n`'s parent given the rest of `t`, as `(candidate, prob)`
/// pairs in ascending candidate order. Moving `n` carries its whole subtree,
/// so the depth change of every descendant edge is accounted for.
pub fn parent_distribution(scorer: &Scorer<'_>, t: &Taxonomy, n: usize) -> Result<Vec<(usize, f64)>> {
    let logs = parent_log_weights(scorer, t, n)?;
    let max = logs.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<(usize, f64)> = logs.iter().map(|&(m, l)| (m, (l - max).exp())).collect();
    let z: f64 = out.iter().map(|&(_, p)| p).sum();
    for e in &mut out {
        e.1 /= z;
    }
    Ok(out)
}

/// Unnormalised log conditional for every admissible parent of `n`.
pub fn parent_log_weights(scorer: &Scorer<'_>, t: &Taxonomy, n: usize) -> Result<Vec<(usize, f64)>> {
    if n == ROOT || n > t.len() {
        return Err(Error::InvalidNode(n));
    }
    if t.len() != scorer.len() {
        return Err(Error::DimensionMismatch {
            expected: scorer.len(),
            found: t.len(),
        });
    }
    let depths = t.depths();
    let in_subtree = t.subtree_mask(n);
    let weights = scorer.weights();
    let alpha = scorer.alpha();

    // Edges strictly inside n's subtree, with their depth relative to n.
    let mut inner: Vec<(usize, Vec<usize>)> = Vec::new();
    for c in t.descendants(n) {
        let p = t.parent(c);
        let sibs: Vec<usize> = t.children(p).iter().copied().filter(|&s| s != c).collect();
        inner.push((depths[c] - depths[n], scorer.cache().edge_active(p, c, &sibs)));
    }
    let num_layers = weights.num_layers();
    let mut sub_by_layer: Vec<Option<f64>> = vec![None; num_layers];
    let mut subtree_score = |child_depth: usize| -> f64 {
        let li = weights.layer_index(child_depth);
        // below the last layer the depth is determined by the layer; at or
        // past it every descendant is clamped too
        if let Some(v) = sub_by_layer[li] {
            return v;
        }
        let s = inner
            .iter()
            .map(|(rel, act)| {
                let w = weights.for_depth(child_depth + rel);
                act.iter().map(|&i| w[i]).sum::<f64>()
            })
            .sum();
        sub_by_layer[li] = Some(s);
        s
    };

    let old = t.parent(n);
    let mut members: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(t.len() + 1 - in_subtree.iter().filter(|&&b| b).count());
    for m in 0..=t.len() {
        if in_subtree[m] {
            continue;
        }
        members.clear();
        members.extend(t.children(m).iter().copied().filter(|&c| c != n));
        let child_depth = if m == ROOT { 1 } else { depths[m] + 1 };
        let layer = weights.layer_index(child_depth);
        let q = members.len() as f64;
        let lw = (q + alpha[m]).ln() + scorer.join_delta(layer, m, &members, n) + subtree_score(child_depth);
        out.push((m, lw));
    }
    debug_assert!(out.iter().any(|&(m, _)| m == old));
    Ok(out)
}

/// Draws a new parent for `n` from its conditional and applies it.
pub fn sample_parent<R: Rng + ?Sized>(scorer: &Scorer<'_>, t: &mut Taxonomy, n: usize, rng: &mut R) -> Result<usize> {
    let logs = parent_log_weights(scorer, t, n)?;
    let max = logs.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("conditional log weights"));
    }
    let probs: Vec<f64> = logs.iter().map(|&(_, l)| (l - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * z;
    let mut acc = 0.0;
    let mut chosen = logs[logs.len() - 1].0;
    for (&(m, _), p) in logs.iter().zip(&probs) {
        acc += p;
        if u < acc {
            chosen = m;
            break;
        }
    }
    t.reattach(n, chosen);
    debug_assert!(t.validate().is_ok());
    Ok(chosen)
}

/// Edge-frequency table. Row `child - 1`, column `parent`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    n: usize,
    counts: Vec<u64>,
    samples: u64,
}

impl MarginalTable {
    pub fn new(n: usize) -> Self {
        MarginalTable {
            n,
            counts: vec![0; n * (n + 1)],
            samples: 0,
        }
    }

    /// Table with every edge of `t` at probability one.
    pub fn point_mass(t: &Taxonomy) -> Self {
        let mut m = MarginalTable::new(t.len());
        m.record(t);
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn record(&mut self, t: &Taxonomy) {
        for c in 1..=self.n {
            self.counts[(c - 1) * (self.n + 1) + t.parent(c)] += 1;
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &MarginalTable) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    /// Estimated `P(parent(child) = parent)`.
    pub fn prob(&self, child: usize, parent: usize) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.counts[(child - 1) * (self.n + 1) + parent] as f64 / self.samples as f64
    }

    /// Row for `child`, indexed by parent id `0..=n`.
    pub fn row(&self, child: usize) -> Vec<f64> {
        (0..=self.n).map(|p| self.prob(child, p)).collect()
    }

    /// Dense `n x (n + 1)` matrix.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (1..=self.n).map(|c| self.row(c)).collect()
    }
}

/// One Gibbs chain over a fixed dataset. Only the `movable` categories are
/// resampled; the rest keep the parent they started with.
#[derive(Debug, Clone)]
pub struct Chain {
    tree: Taxonomy,
    movable: Vec<usize>,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn new(n: usize, init: &InitMode, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = match init {
            InitMode::Star => Taxonomy::star(n),
            InitMode::RandomTree => random_tree(n, &mut rng),
            InitMode::Given(t) => {
                if t.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: t.len(),
                    });
                }
                t.clone()
            }
        };
        Ok(Chain {
            tree,
            movable: (1..=n).collect(),
            rng,
        })
    }

    /// Restricts resampling to the categories flagged in `mask` (indexed by
    /// id, entry 0 ignored).
    pub fn with_movable(mut self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.tree.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.tree.len() + 1,
                found: mask.len(),
            });
        }
        self.movable = (1..mask.len()).filter(|&i| mask[i]).collect();
        Ok(self)
    }

    pub fn tree(&self) -> &Taxonomy {
        &self.tree
    }

    pub fn into_tree(self) -> Taxonomy {
        self.tree
    }

    /// One systematic scan over the movable categories in ascending id order.
    pub fn sweep(&mut self, scorer: &Scorer<'_>) -> Result<()> {
        for i in 0..self.movable.len() {
            let n = self.movable[i];
            sample_parent(scorer, &mut self.tree, n, &mut self.rng)?;
        }
        Ok(())
    }
}

/// Burn-in followed by `samples` recorded sweeps.
pub fn run_chain(scorer: &Scorer<'_>, config: &SamplerConfig, movable: Option<&[bool]>) -> Result<MarginalTable> {
    let mut chain = Chain::new(scorer.len(), &config.init, config.seed)?;
    if let Some(mask) = movable {
        chain = chain.with_movable(mask)?;
    }
    for _ in 0..config.burn_in {
        chain.sweep(scorer)?;
    }
    let mut table = MarginalTable::new(scorer.len());
    for _ in 0..config.samples {
        chain.sweep(scorer)?;
        table.record(chain.tree());
    }
    Ok(table)
}
