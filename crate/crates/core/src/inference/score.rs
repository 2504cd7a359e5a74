use libm::lgamma as ln_gamma;

use crate::embed_stats::log_mean_exp;
use crate::error::{Error, Result};
use crate::features::FeatureCache;
use crate::model::LayerWeights;
use crate::taxonomy::{Taxonomy, ROOT};

/// Log-linear edge scores and the collapsed joint over one dataset.
///
/// The sibling-independent part of every edge score is tabulated per layer
/// up front; the two sibling blocks are resolved per call.
pub struct Scorer<'a> {
    cache: &'a FeatureCache,
    weights: &'a LayerWeights,
    alpha: Vec<f64>,
    // per layer: (n + 1) x n
    fixed: Vec<Vec<f64>>,
}

impl<'a> Scorer<'a> {
    pub fn new(cache: &'a FeatureCache, weights: &'a LayerWeights, alpha: Vec<f64>) -> Result<Self> {
        let n = cache.len();
        if alpha.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: alpha.len(),
            });
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("alpha entries must be finite and > 0".into()));
        }
        for w in &weights.layers {
            if w.len() != cache.dim() {
                return Err(Error::DimensionMismatch {
                    expected: cache.dim(),
                    found: w.len(),
                });
            }
        }
        let fixed = weights
            .layers
            .iter()
            .map(|w| {
                let mut row = Vec::with_capacity((n + 1) * n);
                for p in 0..=n {
                    for c in 1..=n {
                        row.push(cache.fixed_active(p, c).iter().map(|&i| w[i as usize]).sum());
                    }
                }
                row
            })
            .collect();
        Ok(Scorer {
            cache,
            weights,
            alpha,
            fixed,
        })
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn cache(&self) -> &FeatureCache {
        self.cache
    }

    pub fn weights(&self) -> &LayerWeights {
        self.weights
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    fn fixed_score(&self, layer: usize, parent: usize, child: usize) -> f64 {
        self.fixed[layer][parent * self.cache.len() + (child - 1)]
    }

    /// `w_{d}ᵀ f(parent, child, sibs)` with `d` the child's depth.
    pub fn edge_score(&self, child_depth: usize, parent: usize, child: usize, sibs: &[usize]) -> f64 {
        let w = self.weights.for_depth(child_depth);
        self.cache.edge_active(parent, child, sibs).iter().map(|&i| w[i]).sum()
    }

    /// Score of `child` hanging from `parent` in `t`, siblings and depth
    /// taken from `t`.
    pub fn edge_score_in(&self, t: &Taxonomy, parent: usize, child: usize) -> f64 {
        let sibs: Vec<usize> = t.children(parent).iter().copied().filter(|&c| c != child).collect();
        self.edge_score(t.depth(parent) + 1, parent, child, &sibs)
    }

    /// `Σ_m ln Γ(q_m + α_m) + Σ_edges ln g_w`, up to a structure-independent
    /// constant.
    pub fn log_joint(&self, t: &Taxonomy) -> f64 {
        let depths = t.depths();
        let mut total = 0.0;
        for m in 0..=t.len() {
            total += ln_gamma(t.child_count(m) as f64 + self.alpha[m]);
        }
        for (p, c) in t.edges() {
            let sibs: Vec<usize> = t.children(p).iter().copied().filter(|&s| s != c).collect();
            total += self.edge_score(depths[c], p, c, &sibs);
        }
        total
    }

    /// Sum of edge scores only (no Dirichlet term).
    pub fn edge_total(&self, t: &Taxonomy) -> f64 {
        let depths = t.depths();
        t.edges()
            .map(|(p, c)| {
                let sibs: Vec<usize> = t.children(p).iter().copied().filter(|&s| s != c).collect();
                self.edge_score(depths[c], p, c, &sibs)
            })
            .sum()
    }

    /// Change in the summed edge scores of `parent`'s children when `newcomer`
    /// joins the existing group `members` (the newcomer's own edge included).
    pub(crate) fn join_delta(&self, layer: usize, parent: usize, members: &[usize], newcomer: usize) -> f64 {
        let own_fixed = self.fixed_score(layer, parent, newcomer);
        if parent == ROOT {
            return own_fixed;
        }
        let w = &self.weights.layers[layer];
        let values = self.cache.values();
        let mut delta = own_fixed
            + w[self.cache.sibling_visual_slot(values.sibling_visual(newcomer, members.iter().copied()))]
            + w[self.cache.sibling_text_slot(values.sibling_text(newcomer, members.iter().copied()))];
        if members.is_empty() {
            return delta;
        }
        let mut buf: Vec<f64> = Vec::with_capacity(members.len());
        for &i in members {
            let others = members.iter().copied().filter(|&j| j != i);
            // visual sibling aggregate before/after the newcomer joins
            if values.has_images(i) {
                buf.clear();
                buf.extend(others.clone().filter_map(|j| values.vissim(i, j)));
                let before = log_mean_exp(&buf);
                if let Some(v) = values.vissim(i, newcomer) {
                    buf.push(v);
                }
                let after = log_mean_exp(&buf);
                delta += w[self.cache.sibling_visual_slot(after)] - w[self.cache.sibling_visual_slot(before)];
            }
            if values.has_word(i) {
                let (mut sum, mut cnt) = (0.0, 0usize);
                for j in others {
                    if let Some(c) = values.cosine(i, j) {
                        sum += c;
                        cnt += 1;
                    }
                }
                let before = (cnt > 0).then(|| sum / cnt as f64);
                if let Some(c) = values.cosine(i, newcomer) {
                    sum += c;
                    cnt += 1;
                }
                let after = (cnt > 0).then(|| sum / cnt as f64);
                delta += w[self.cache.sibling_text_slot(after)] - w[self.cache.sibling_text_slot(before)];
            }
        }
        delta
    }
}
