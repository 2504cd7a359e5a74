//! Rooted trees over `N` categories plus the pseudo-root.
//!
//! Nodes are numbered `1..=N`; node `0` is the pseudo-root that every
//! top-level category hangs from. A tree is stored as a parent index per
//! node together with child lists kept in sync on every edit.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Index of the pseudo-root.
pub const ROOT: usize = 0;

#[derive(Debug, Clone)]
pub struct Taxonomy {
    // parent[0] is a sentinel and always 0.
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.parent == other.parent
    }
}

impl Eq for Taxonomy {}

impl Taxonomy {
    /// Every category attached directly to the pseudo-root.
    pub fn star(n: usize) -> Self {
        let parent = vec![ROOT; n + 1];
        let mut children = vec![Vec::new(); n + 1];
        children[ROOT] = (1..=n).collect();
        Taxonomy { parent, children }
    }

    /// Builds a tree from `parents[i]` = parent of node `i + 1`.
    pub fn from_parents(parents: &[usize]) -> Result<Self> {
        let n = parents.len();
        let mut parent = Vec::with_capacity(n + 1);
        parent.push(ROOT);
        parent.extend_from_slice(parents);
        for (child, &p) in parent.iter().enumerate().skip(1) {
            if p > n {
                return Err(Error::OutOfRange { id: p, max: n });
            }
            if p == child {
                return Err(Error::Cycle(child));
            }
        }
        let mut children = vec![Vec::new(); n + 1];
        for (child, &p) in parent.iter().enumerate().skip(1) {
            children[p].push(child);
        }
        let t = Taxonomy { parent, children };
        t.validate()?;
        Ok(t)
    }

    /// Builds a tree from `(parent, child)` pairs; unlisted nodes attach to
    /// the pseudo-root.
    pub fn from_edges(edges: &[(usize, usize)], n: usize) -> Result<Self> {
        let mut parents = vec![ROOT; n];
        let mut seen = vec![false; n + 1];
        for &(p, c) in edges {
            if c == ROOT || c > n {
                return Err(Error::OutOfRange { id: c, max: n });
            }
            if p > n {
                return Err(Error::OutOfRange { id: p, max: n });
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::DuplicateChild(c));
            }
            parents[c - 1] = p;
        }
        Self::from_parents(&parents)
    }

    /// Number of categories, excluding the pseudo-root.
    pub fn len(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parent(&self, n: usize) -> usize {
        self.parent[n]
    }

    /// Parent of each category `1..=N`, in order.
    pub fn parents(&self) -> &[usize] {
        &self.parent[1..]
    }

    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    pub fn child_count(&self, n: usize) -> usize {
        self.children[n].len()
    }

    /// `(parent, child)` for every category, by ascending child id.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.len()).map(move |c| (self.parent[c], c))
    }

    pub fn depth(&self, n: usize) -> usize {
        let mut d = 0;
        let mut cur = n;
        while cur != ROOT {
            cur = self.parent[cur];
            d += 1;
        }
        d
    }

    /// Depth of every node, indexed by node id (the pseudo-root has depth 0).
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.parent.len()];
        for n in self.bfs_order() {
            for &c in &self.children[n] {
                depth[c] = depth[n] + 1;
            }
        }
        depth
    }

    /// Maximum depth over all categories.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Nodes in breadth-first order starting at the pseudo-root.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.parent.len());
        let mut queue = VecDeque::from([ROOT]);
        while let Some(n) = queue.pop_front() {
            order.push(n);
            queue.extend(self.children[n].iter().copied());
        }
        order
    }

    /// All nodes strictly below `n`, sorted ascending.
    pub fn descendants(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[n].clone();
        while let Some(c) = stack.pop() {
            out.push(c);
            stack.extend(self.children[c].iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Marks `n` and everything below it.
    pub fn subtree_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; self.parent.len()];
        let mut stack = vec![n];
        while let Some(c) = stack.pop() {
            mask[c] = true;
            stack.extend(self.children[c].iter().copied());
        }
        mask
    }

    /// True when `m` lies in the subtree strictly below `n`.
    pub fn is_descendant(&self, m: usize, n: usize) -> bool {
        let mut cur = m;
        while cur != ROOT {
            cur = self.parent[cur];
            if cur == n {
                return true;
            }
        }
        false
    }

    /// Detaches `n` from its parent and appends it under `m`.
    pub fn structure_op(&mut self, n: usize, m: usize) -> Result<()> {
        let size = self.len();
        if n == ROOT || n > size {
            return Err(Error::InvalidNode(n));
        }
        if m > size {
            return Err(Error::OutOfRange { id: m, max: size });
        }
        if m == n || self.is_descendant(m, n) {
            return Err(Error::DescendantTarget { node: n, target: m });
        }
        self.reattach(n, m);
        Ok(())
    }

    /// Copying variant of [`Taxonomy::structure_op`].
    pub fn with_structure_op(&self, n: usize, m: usize) -> Result<Self> {
        let mut t = self.clone();
        t.structure_op(n, m)?;
        Ok(t)
    }

    /// Moves `n` under `m` without checking the tree constraint.
    pub(crate) fn reattach(&mut self, n: usize, m: usize) {
        let old = self.parent[n];
        if old == m {
            return;
        }
        let siblings = &mut self.children[old];
        if let Some(pos) = siblings.iter().position(|&c| c == n) {
            siblings.remove(pos);
        }
        self.children[m].push(n);
        self.parent[n] = m;
    }

    /// Checks that every category reaches the pseudo-root.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.parent[ROOT] != ROOT {
            return Err(Error::InvalidNode(ROOT));
        }
        let mut state = vec![0u8; n + 1]; // 0 unvisited, 1 on path, 2 done
        state[ROOT] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                let p = self.parent[cur];
                if p > n {
                    return Err(Error::OutOfRange { id: p, max: n });
                }
                cur = p;
            }
            if state[cur] == 1 {
                return Err(Error::Cycle(cur));
            }
            for v in path {
                state[v] = 2;
            }
        }
        let listed: usize = self.children.iter().map(Vec::len).sum();
        if listed != n {
            return Err(Error::InvalidDataset(format!(
                "child lists hold {listed} entries for {n} nodes"
            )));
        }
        for (p, kids) in self.children.iter().enumerate() {
            if kids.iter().any(|&c| self.parent[c] != p || c == ROOT) {
                return Err(Error::InvalidDataset(format!(
                    "child list of {p} out of sync"
                )));
            }
        }
        Ok(())
    }
}

/// Uniformly random parent vectors filtered to trees would be slow; this
/// attaches nodes in a random order to a random earlier node instead.
pub fn random_tree<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Taxonomy {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut parents = vec![ROOT; n];
    for (i, &node) in order.iter().enumerate() {
        let pick = rng.random_range(0..=i);
        parents[node - 1] = if pick == 0 { ROOT } else { order[pick - 1] };
    }
    Taxonomy::from_parents(&parents).expect("insertion order yields a tree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> Taxonomy {
        let edges: Vec<_> = (1..=n).map(|c| (c - 1, c)).collect();
        Taxonomy::from_edges(&edges, n).unwrap()
    }

    #[test]
    fn chain_from_edges() {
        let t = Taxonomy::from_edges(&[(0, 1), (1, 2)], 2).unwrap();
        assert_eq!(t.parents(), &[0, 1]);
        assert_eq!(t.depth(2), 2);
    }

    #[test]
    fn two_cycle_rejected() {
        assert!(matches!(
            Taxonomy::from_edges(&[(1, 2), (2, 1)], 2),
            Err(Error::Cycle(_))
        ));
    }

    #[test]
    fn duplicate_and_range_errors() {
        assert!(matches!(
            Taxonomy::from_edges(&[(0, 1), (0, 1)], 2),
            Err(Error::DuplicateChild(1))
        ));
        assert!(matches!(
            Taxonomy::from_edges(&[(0, 3)], 2),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            Taxonomy::from_edges(&[(5, 1)], 2),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn empty_edges_give_star() {
        let t = Taxonomy::from_edges(&[], 3).unwrap();
        assert_eq!(t.child_count(ROOT), 3);
        assert_eq!(t, Taxonomy::star(3));
    }

    #[test]
    fn detach_to_root() {
        let mut t = chain(2);
        t.structure_op(2, 0).unwrap();
        assert_eq!(t.parent(2), 0);
        assert_eq!(t.child_count(1), 0);
        t.validate().unwrap();
    }

    #[test]
    fn forbidden_move_into_descendant() {
        let mut t = chain(2);
        assert!(matches!(
            t.structure_op(1, 2),
            Err(Error::DescendantTarget { .. })
        ));
        assert!(t.structure_op(1, 1).is_err());
    }

    #[test]
    fn star_move_under_sibling() {
        let mut t = Taxonomy::star(3);
        t.structure_op(3, 1).unwrap();
        assert_eq!(t.children(0), &[1, 2]);
        assert_eq!(t.children(1), &[3]);
        assert_eq!(t.depth(3), 2);
        assert_eq!(t.depths(), vec![0, 1, 1, 2]);
        t.validate().unwrap();
    }

    #[test]
    fn descendants_cases() {
        let t = chain(3);
        assert_eq!(t.descendants(1), vec![2, 3]);
        assert!(t.descendants(3).is_empty());
        assert_eq!(Taxonomy::star(4).descendants(0), vec![1, 2, 3, 4]);
    }

    /// Moves every node to its target parent in BFS order of the target.
    fn repair_towards(t: &mut Taxonomy, target: &Taxonomy) {
        for n in target.bfs_order().into_iter().skip(1) {
            let p = target.parent(n);
            if t.parent(n) != p {
                // p already hangs from its final ancestors, none of which is n.
                t.structure_op(n, p).unwrap();
                t.validate().unwrap();
            }
        }
    }

    proptest! {
        #[test]
        fn random_ops_preserve_tree(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = random_tree(n, &mut rng);
            for _ in 0..200 {
                let node = rng.random_range(1..=n);
                let target = rng.random_range(0..=n);
                let forbidden = target == node || t.is_descendant(target, node);
                let res = t.structure_op(node, target);
                prop_assert_eq!(res.is_err(), forbidden);
                t.validate().unwrap();
                prop_assert_eq!(t.depth(node), t.depth(t.parent(node)) + 1);
            }
        }

        #[test]
        fn any_tree_reachable(seed in any::<u64>(), n in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut from = random_tree(n, &mut rng);
            let to = random_tree(n, &mut rng);
            repair_towards(&mut from, &to);
            prop_assert_eq!(from, to);
        }
    }
}
