use rayon::prelude::*;

use super::{cosine, surface_active, Block, EdgeValues, FeatureLayout, FeatureVector};
use crate::dataset::Dataset;
use crate::embed_stats::{log_mean_exp, top_k_refit, vissim, ImageStats, TopK};
use crate::error::Result;
use crate::features::ProjectionMatrix;
use crate::model::Model;
use crate::taxonomy::ROOT;

/// Every pairwise similarity the features need, computed once per dataset.
/// Missing values are stored as NaN.
#[derive(Debug, Clone)]
pub struct PairValues {
    n: usize,
    has_images: Vec<bool>,
    has_word: Vec<bool>,
    // n x n, symmetric, (i - 1) * n + (j - 1)
    vissim: Vec<f64>,
    cosine: Vec<f64>,
    // (n + 1) x n, parent * n + (child - 1)
    parent_child_visual: Vec<f64>,
    image_to_word: Vec<f64>,
    parent_child_text: Vec<f64>,
    surface: Vec<Vec<u8>>,
}

impl PairValues {
    pub fn compute(
        data: &Dataset,
        stats: &ImageStats,
        proj_image_word: Option<&ProjectionMatrix>,
        proj_word_word: Option<&ProjectionMatrix>,
        top_k: TopK,
    ) -> Result<Self> {
        let n = data.len();
        let has_images: Vec<bool> = (1..=n).map(|i| stats.summary(i).is_some()).collect();
        let has_word: Vec<bool> = data.items().iter().map(|it| it.word_vec.is_some()).collect();

        let rows: Vec<(Vec<f64>, Vec<f64>)> = (1..=n)
            .into_par_iter()
            .map(|i| {
                let mut vs = vec![f64::NAN; n];
                let mut cs = vec![f64::NAN; n];
                for j in 1..=n {
                    if let (Some(a), Some(b)) = (stats.summary(i), stats.summary(j)) {
                        vs[j - 1] = vissim(a, b).expect("dimensions validated");
                    }
                    if let (Some(a), Some(b)) = (&data.item(i).word_vec, &data.item(j).word_vec) {
                        cs[j - 1] = cosine(a, b);
                    }
                }
                (vs, cs)
            })
            .collect();
        let mut vis = Vec::with_capacity(n * n);
        let mut cos = Vec::with_capacity(n * n);
        for (v, c) in rows {
            vis.extend(v);
            cos.extend(c);
        }

        type Row = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<u8>>);
        let parent_rows: Vec<Result<Row>> = (0..=n)
            .into_par_iter()
            .map(|p| {
                let mut pcv = vec![f64::NAN; n];
                let mut iw = vec![f64::NAN; n];
                let mut pct = vec![f64::NAN; n];
                let mut surf = vec![Vec::new(); n];
                if p == ROOT {
                    return Ok((pcv, iw, pct, surf));
                }
                let p_item = data.item(p);
                for c in 1..=n {
                    if c == p {
                        continue;
                    }
                    let c_item = data.item(c);
                    if let Some(cg) = stats.summary(c) {
                        if p_item.has_images() {
                            let refit = match (top_k, stats.summary(p)) {
                                (TopK::K(k), Some(pg)) if k >= pg.count => pg.clone(),
                                (TopK::All, Some(pg)) => pg.clone(),
                                _ => top_k_refit(&p_item.image_vecs, cg, top_k, &stats.fitter)?,
                            };
                            pcv[c - 1] = vissim(cg, &refit)?;
                        }
                        if let (Some(phi), Some(pw)) = (proj_image_word, &p_item.word_vec) {
                            iw[c - 1] = phi.neg_distance(&cg.mean, pw);
                        }
                    }
                    if let (Some(phi), Some(cw), Some(pw)) = (proj_word_word, &c_item.word_vec, &p_item.word_vec) {
                        pct[c - 1] = phi.neg_distance(cw, pw);
                    }
                    surf[c - 1] = surface_active(&c_item.name, Some(&p_item.name))
                        .into_iter()
                        .map(|i| i as u8)
                        .collect();
                }
                Ok((pcv, iw, pct, surf))
            })
            .collect();

        let mut parent_child_visual = Vec::with_capacity((n + 1) * n);
        let mut image_to_word = Vec::with_capacity((n + 1) * n);
        let mut parent_child_text = Vec::with_capacity((n + 1) * n);
        let mut surface = Vec::with_capacity((n + 1) * n);
        for row in parent_rows {
            let (a, b, c, d) = row?;
            parent_child_visual.extend(a);
            image_to_word.extend(b);
            parent_child_text.extend(c);
            surface.extend(d);
        }
        Ok(PairValues {
            n,
            has_images,
            has_word,
            vissim: vis,
            cosine: cos,
            parent_child_visual,
            image_to_word,
            parent_child_text,
            surface,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_images(&self, i: usize) -> bool {
        self.has_images[i - 1]
    }

    pub fn has_word(&self, i: usize) -> bool {
        self.has_word[i - 1]
    }

    fn sym(&self, table: &[f64], i: usize, j: usize) -> Option<f64> {
        let v = table[(i - 1) * self.n + (j - 1)];
        (!v.is_nan()).then_some(v)
    }

    fn pair(&self, table: &[f64], parent: usize, child: usize) -> Option<f64> {
        let v = table[parent * self.n + (child - 1)];
        (!v.is_nan()).then_some(v)
    }

    pub fn vissim(&self, i: usize, j: usize) -> Option<f64> {
        self.sym(&self.vissim, i, j)
    }

    pub fn cosine(&self, i: usize, j: usize) -> Option<f64> {
        self.sym(&self.cosine, i, j)
    }

    /// Log-mean visual similarity of `child` to the siblings that have images.
    pub fn sibling_visual<I: IntoIterator<Item = usize>>(&self, child: usize, sibs: I) -> Option<f64> {
        if !self.has_images(child) {
            return None;
        }
        let vals: Vec<f64> = sibs.into_iter().filter_map(|s| self.vissim(child, s)).collect();
        log_mean_exp(&vals)
    }

    /// Mean word-vector cosine of `child` to the siblings that have one.
    pub fn sibling_text<I: IntoIterator<Item = usize>>(&self, child: usize, sibs: I) -> Option<f64> {
        if !self.has_word(child) {
            return None;
        }
        let (sum, count) = sibs
            .into_iter()
            .filter_map(|s| self.cosine(child, s))
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    pub fn edge_values(&self, parent: usize, child: usize, sibs: &[usize]) -> EdgeValues {
        if parent == ROOT {
            return EdgeValues::default();
        }
        EdgeValues {
            sibling_visual: self.sibling_visual(child, sibs.iter().copied()),
            parent_child_visual: self.pair(&self.parent_child_visual, parent, child),
            image_to_word: self.pair(&self.image_to_word, parent, child),
            sibling_text: self.sibling_text(child, sibs.iter().copied()),
            parent_child_text: self.pair(&self.parent_child_text, parent, child),
        }
    }

    /// Every defined value of a parent-child block over ordered pairs of
    /// distinct categories.
    pub fn pair_samples(&self, block: Block) -> Vec<f64> {
        let table = match block {
            Block::ParentChildVisual => &self.parent_child_visual,
            Block::ImageToWord => &self.image_to_word,
            Block::ParentChildText => &self.parent_child_text,
            Block::SiblingVisual => &self.vissim,
            Block::SiblingText => &self.cosine,
            Block::Surface => return Vec::new(),
        };
        let mut out = Vec::new();
        match block {
            Block::SiblingVisual | Block::SiblingText => {
                for i in 1..=self.n {
                    for j in i + 1..=self.n {
                        if let Some(v) = self.sym(table, i, j) {
                            out.push(v);
                        }
                    }
                }
            }
            _ => {
                for p in 1..=self.n {
                    for c in 1..=self.n {
                        if p != c {
                            if let Some(v) = self.pair(table, p, c) {
                                out.push(v);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Binned, model-specific view of [`PairValues`]: active feature indices of
/// every parent-child pair, with the sibling blocks resolved on demand.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    values: PairValues,
    layout: FeatureLayout,
    sibling_visual: Option<super::BinSpec>,
    sibling_text: Option<super::BinSpec>,
    // (n + 1) x n, parent * n + (child - 1); excludes the two sibling blocks
    // for real parents
    fixed: Vec<Vec<u32>>,
}

impl FeatureCache {
    pub fn build(data: &Dataset, model: &Model) -> Result<Self> {
        model.check_dataset(data)?;
        let stats = ImageStats::new(data);
        let values = PairValues::compute(
            data,
            &stats,
            model.proj_image_word.as_ref(),
            model.proj_word_word.as_ref(),
            model.top_k,
        )?;
        Ok(Self::new(values, model))
    }

    pub fn new(values: PairValues, model: &Model) -> Self {
        let n = values.n;
        let layout = model.layout.clone();
        let mask = model.blocks;
        let surf_on = mask.enabled(Block::Surface);
        let surf_off = layout.offset(Block::Surface);
        let mut fixed = Vec::with_capacity((n + 1) * n);
        for p in 0..=n {
            for c in 1..=n {
                let mut act: Vec<u32> = Vec::with_capacity(12);
                if p == ROOT {
                    for b in Block::BINNED {
                        act.push(layout.offset(b) as u32);
                    }
                    act.push(layout.bias as u32);
                } else if p != c {
                    let ev = values.edge_values(p, c, &[]);
                    for b in [Block::ParentChildVisual, Block::ImageToWord, Block::ParentChildText] {
                        let v = if mask.enabled(b) { ev.get(b) } else { None };
                        act.push((layout.offset(b) + model.bins.get(b).slot(v)) as u32);
                    }
                    if surf_on {
                        act.extend(values.surface[p * n + (c - 1)].iter().map(|&i| (surf_off + i as usize) as u32));
                    }
                }
                fixed.push(act);
            }
        }
        let sibling_visual = mask
            .enabled(Block::SiblingVisual)
            .then(|| model.bins.sibling_visual.clone());
        let sibling_text = mask.enabled(Block::SiblingText).then(|| model.bins.sibling_text.clone());
        FeatureCache {
            values,
            layout,
            sibling_visual,
            sibling_text,
            fixed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.n == 0
    }

    pub fn values(&self) -> &PairValues {
        &self.values
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Indices that do not depend on the sibling set.
    pub fn fixed_active(&self, parent: usize, child: usize) -> &[u32] {
        &self.fixed[parent * self.values.n + (child - 1)]
    }

    /// Global indices of the two sibling-block slots for `child` among `sibs`.
    /// Only meaningful for real (non-root) parents.
    pub fn sibling_active<I>(&self, child: usize, sibs: I) -> [usize; 2]
    where
        I: IntoIterator<Item = usize> + Clone,
    {
        let sv = match &self.sibling_visual {
            Some(spec) => spec.slot(self.values.sibling_visual(child, sibs.clone())),
            None => 0,
        };
        let st = match &self.sibling_text {
            Some(spec) => spec.slot(self.values.sibling_text(child, sibs)),
            None => 0,
        };
        [
            self.layout.offset(Block::SiblingVisual) + sv,
            self.layout.offset(Block::SiblingText) + st,
        ]
    }

    /// Slot for the sibling visual block given an already aggregated value.
    pub(crate) fn sibling_visual_slot(&self, value: Option<f64>) -> usize {
        self.layout.offset(Block::SiblingVisual)
            + self.sibling_visual.as_ref().map_or(0, |spec| spec.slot(value))
    }

    pub(crate) fn sibling_text_slot(&self, value: Option<f64>) -> usize {
        self.layout.offset(Block::SiblingText) + self.sibling_text.as_ref().map_or(0, |spec| spec.slot(value))
    }

    /// All active indices of `f(parent, child, sibs)`, sorted.
    pub fn edge_active(&self, parent: usize, child: usize, sibs: &[usize]) -> Vec<usize> {
        let mut act: Vec<usize> = self.fixed_active(parent, child).iter().map(|&i| i as usize).collect();
        if parent != ROOT {
            act.extend(self.sibling_active(child, sibs.iter().copied()));
        }
        act.sort_unstable();
        act
    }

    pub fn edge_features(&self, parent: usize, child: usize, sibs: &[usize]) -> FeatureVector {
        FeatureVector::from_active(self.dim(), &self.edge_active(parent, child, sibs))
    }
}
