//! Brute-force computations over every tree on a handful of categories.
//! Exponential in `N`; meant for checking the sampler and the gradient.

use crate::embed_stats::log_add_exp;
use crate::error::{Error, Result};
use crate::inference::Scorer;
use crate::taxonomy::Taxonomy;

/// Largest `N` the enumerators accept.
pub const MAX_EXACT_NODES: usize = 8;

/// Every rooted tree over `1..=n` (there are `(n + 1)^(n - 1)`), in
/// lexicographic order of their parent vectors.
pub fn enumerate_trees(n: usize) -> Result<Vec<Taxonomy>> {
    if n > MAX_EXACT_NODES {
        return Err(Error::Config(format!("exact enumeration is limited to {MAX_EXACT_NODES} nodes")));
    }
    let mut out = Vec::new();
    let mut parents = vec![0usize; n];
    loop {
        if let Ok(t) = Taxonomy::from_parents(&parents) {
            out.push(t);
        }
        // odometer over {0..n}^n
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            parents[i] += 1;
            if parents[i] <= n {
                break;
            }
            parents[i] = 0;
        }
    }
}

/// Normalised posterior over every tree.
pub fn distribution(scorer: &Scorer<'_>) -> Result<Vec<(Taxonomy, f64)>> {
    let trees = enumerate_trees(scorer.len())?;
    let logs: Vec<f64> = trees.iter().map(|t| scorer.log_joint(t)).collect();
    let z = log_partition_of(&logs);
    Ok(trees.into_iter().zip(logs).map(|(t, l)| (t, (l - z).exp())).collect())
}

fn log_partition_of(logs: &[f64]) -> f64 {
    logs.iter().copied().fold(f64::NEG_INFINITY, log_add_exp)
}

/// `log Σ_T exp(log_joint(T))`.
pub fn log_partition(scorer: &Scorer<'_>) -> Result<f64> {
    let trees = enumerate_trees(scorer.len())?;
    let logs: Vec<f64> = trees.iter().map(|t| scorer.log_joint(t)).collect();
    Ok(log_partition_of(&logs))
}

/// Exact `P(parent(child) = parent)`, as `marginals[child - 1][parent]`.
pub fn marginals(scorer: &Scorer<'_>) -> Result<Vec<Vec<f64>>> {
    let n = scorer.len();
    let mut out = vec![vec![0.0; n + 1]; n];
    for (t, p) in distribution(scorer)? {
        for c in 1..=n {
            out[c - 1][t.parent(c)] += p;
        }
    }
    Ok(out)
}

/// `log p(gold)` under the normalised model.
pub fn log_likelihood(scorer: &Scorer<'_>, gold: &Taxonomy) -> Result<f64> {
    Ok(scorer.log_joint(gold) - log_partition(scorer)?)
}

/// Exact expectation of the per-layer feature sums.
pub fn expected_feature_sums(scorer: &Scorer<'_>) -> Result<Vec<Vec<f64>>> {
    let layers = scorer.weights().num_layers();
    let dim = scorer.cache().dim();
    let mut out = vec![vec![0.0; dim]; layers];
    for (t, p) in distribution(scorer)? {
        let sums = crate::training::feature_sums(scorer.cache(), &t, layers);
        for (o, s) in out.iter_mut().zip(&sums) {
            for (a, b) in o.iter_mut().zip(s) {
                *a += p * b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cayley_counts() {
        // rooted forests on n labelled nodes = (n + 1)^(n - 1)
        for (n, count) in [(1, 1), (2, 3), (3, 16), (4, 125), (5, 1296)] {
            assert_eq!(enumerate_trees(n).unwrap().len(), count, "n = {n}");
        }
        assert_eq!(enumerate_trees(0).unwrap().len(), 1);
    }

    #[test]
    fn too_large() {
        assert!(enumerate_trees(MAX_EXACT_NODES + 1).is_err());
    }
}
