use crate::error::{Error, Result};
use crate::taxonomy::{Taxonomy, ROOT};

/// Added to every marginal before taking logs so unseen edges stay usable.
pub const MARGINAL_EPSILON: f64 = 1e-12;

/// Maximum-weight spanning arborescence rooted at `root` over a dense
/// weight matrix (`w[u][v]` is the weight of `u -> v`). Returns the parent of
/// every vertex; the root's entry is itself. Ties go to the smaller parent id.
pub fn chu_liu_edmonds(w: &[Vec<f64>], root: usize) -> Vec<usize> {
    let n = w.len();
    assert!(root < n, "root out of range");
    assert!(w.iter().all(|row| row.len() == n), "weight matrix must be square");
    if n == 1 {
        return vec![root];
    }

    let mut best = vec![root; n];
    for v in (0..n).filter(|&v| v != root) {
        let mut b = usize::MAX;
        for u in (0..n).filter(|&u| u != v) {
            if b == usize::MAX || w[u][v] > w[b][v] {
                b = u;
            }
        }
        best[v] = b;
    }

    let Some(cycle) = find_cycle(&best, root) else {
        return best;
    };
    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let others: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let c = others.len();
    let m = c + 1;
    let mut w2 = vec![vec![f64::NEG_INFINITY; m]; m];
    let mut enter = vec![usize::MAX; m];
    let mut leave = vec![usize::MAX; m];
    for (i, &u) in others.iter().enumerate() {
        for (j, &v) in others.iter().enumerate() {
            if i != j {
                w2[i][j] = w[u][v];
            }
        }
        for &v in &cycle {
            let s = w[u][v] - w[best[v]][v];
            if enter[i] == usize::MAX || s > w2[i][c] {
                w2[i][c] = s;
                enter[i] = v;
            }
            if leave[i] == usize::MAX || w[v][u] > w2[c][i] {
                w2[c][i] = w[v][u];
                leave[i] = v;
            }
        }
    }
    let new_root = others.iter().position(|&v| v == root).expect("root is never on a cycle");
    let sub = chu_liu_edmonds(&w2, new_root);

    let mut parent = vec![usize::MAX; n];
    parent[root] = root;
    for (j, &v) in others.iter().enumerate() {
        if j == new_root {
            continue;
        }
        parent[v] = if sub[j] == c { leave[j] } else { others[sub[j]] };
    }
    for &v in &cycle {
        parent[v] = best[v];
    }
    let i = sub[c];
    parent[enter[i]] = others[i];
    parent
}

// Some cycle of the best-incoming graph, members in ascending order.
fn find_cycle(best: &[usize], root: usize) -> Option<Vec<usize>> {
    let n = best.len();
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; n];
    state[root] = 2;
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = best[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&x| x == v).expect("on path");
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            return Some(cycle);
        }
        for x in path {
            state[x] = 2;
        }
    }
    None
}

fn log_weights(marginals: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = marginals.len();
    let mut w = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for (ci, row) in marginals.iter().enumerate() {
        if row.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: row.len(),
            });
        }
        let child = ci + 1;
        for (p, &prob) in row.iter().enumerate() {
            if !prob.is_finite() || prob < 0.0 {
                return Err(Error::NonFinite("marginal probability"));
            }
            if p != child {
                w[p][child] = (prob + MARGINAL_EPSILON).ln();
            }
        }
    }
    Ok(w)
}

/// Most probable tree under the product of edge marginals
/// (`marginals[child - 1][parent]`).
pub fn mst_decode(marginals: &[Vec<f64>]) -> Result<Taxonomy> {
    let w = log_weights(marginals)?;
    let parents = chu_liu_edmonds(&w, ROOT);
    Taxonomy::from_parents(&parents[1..])
}

/// Like [`mst_decode`], but every category with `fixed[i] = Some(p)` keeps
/// parent `p`. `fixed` is indexed by id; entry 0 is ignored.
pub fn mst_decode_constrained(marginals: &[Vec<f64>], fixed: &[Option<usize>]) -> Result<Taxonomy> {
    let n = marginals.len();
    if fixed.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            found: fixed.len(),
        });
    }
    let mut w = log_weights(marginals)?;
    for (child, f) in fixed.iter().enumerate().skip(1) {
        if let Some(p) = *f {
            if p > n || p == child {
                return Err(Error::InvalidNode(p));
            }
            for (u, row) in w.iter_mut().enumerate() {
                if u != child {
                    row[child] = if u == p { 0.0 } else { f64::NEG_INFINITY };
                }
            }
        }
    }
    let parents = chu_liu_edmonds(&w, ROOT);
    let t = Taxonomy::from_parents(&parents[1..])?;
    debug_assert!(fixed
        .iter()
        .enumerate()
        .skip(1)
        .all(|(c, f)| f.is_none_or(|p| t.parent(c) == p)));
    Ok(t)
}

/// Sum of `w[parent][child]` over the tree's edges.
pub fn arborescence_weight(w: &[Vec<f64>], parents: &[usize], root: usize) -> f64 {
    parents
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != root)
        .map(|(v, &p)| w[p][v])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // every parent vector over 1..n-1, keeping only arborescences
    fn brute_force(w: &[Vec<f64>]) -> f64 {
        let n = w.len();
        let mut best = f64::NEG_INFINITY;
        let mut parents = vec![0usize; n];
        fn rec(v: usize, n: usize, parents: &mut Vec<usize>, w: &[Vec<f64>], best: &mut f64) {
            if v == n {
                if Taxonomy::from_parents(&parents[1..]).is_ok() {
                    *best = best.max(arborescence_weight(w, parents, 0));
                }
                return;
            }
            for p in 0..n {
                if p != v {
                    parents[v] = p;
                    rec(v + 1, n, parents, w, best);
                }
            }
        }
        rec(1, n, &mut parents, w, &mut best);
        best
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..60 {
            let n = 2 + trial % 5;
            let w: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let parents = chu_liu_edmonds(&w, 0);
            assert!(Taxonomy::from_parents(&parents[1..]).is_ok());
            let got = arborescence_weight(&w, &parents, 0);
            assert!((got - brute_force(&w)).abs() < 1e-9, "trial {trial}");
        }
    }

    #[test]
    fn forced_cycle_is_broken() {
        // 1 and 2 prefer each other
        let ninf = f64::NEG_INFINITY;
        let w = vec![
            vec![ninf, 1.0, 0.5],
            vec![ninf, ninf, 10.0],
            vec![ninf, 9.0, ninf],
        ];
        let p = chu_liu_edmonds(&w, 0);
        assert_eq!(p, vec![0, 0, 1]);
    }

    #[test]
    fn ties_prefer_smaller_parent() {
        let marg = vec![vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]];
        let t = mst_decode(&marg).unwrap();
        assert_eq!(t.parents(), &[0, 0]);
    }

    #[test]
    fn decode_point_mass() {
        let marg = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let t = mst_decode(&marg).unwrap();
        assert_eq!(t.parents(), &[0, 1, 2]);
    }

    #[test]
    fn constrained_keeps_fixed_edges() {
        let marg = vec![
            vec![0.1, 0.0, 0.9, 0.0],
            vec![0.9, 0.1, 0.0, 0.0],
            vec![0.2, 0.8, 0.0, 0.0],
        ];
        let fixed = vec![None, Some(0), None, None];
        let t = mst_decode_constrained(&marg, &fixed).unwrap();
        assert_eq!(t.parent(1), 0);
        assert_eq!(t.parent(3), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(mst_decode(&[vec![1.0]]).is_err());
        assert!(mst_decode(&[vec![f64::NAN, 0.0]]).is_err());
        assert_eq!(mst_decode(&[]).unwrap().len(), 0);
    }
}
