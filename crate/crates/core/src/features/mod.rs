//! The feature vector scored by the local consistency function: five binned
//! similarity blocks, one block of lexical indicators, and a bias slot that
//! fires for attachments to the pseudo-root.

mod bins;
mod cache;
mod projection;
mod surface;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bins::{one_hot, BinSpec, BLOCK_WIDTH, NUM_BINS};
pub use cache::{FeatureCache, PairValues};
pub use projection::{
    learn_projection, learn_projection_with, projection_objective, IstaConfig, ProjectionMatrix, DEFAULT_LAMBDA,
};
pub use surface::{surface_active, surface_features, SURFACE_WIDTH};

use crate::dataset::Dataset;
use crate::embed_stats::{log_mean_exp, top_k_refit, vissim, ImageStats};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::taxonomy::ROOT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    #[serde(rename = "S-V1")]
    SiblingVisual,
    #[serde(rename = "PC-V1")]
    ParentChildVisual,
    #[serde(rename = "PC-V2")]
    ImageToWord,
    #[serde(rename = "S-T1")]
    SiblingText,
    #[serde(rename = "PC-T1")]
    ParentChildText,
    #[serde(rename = "SURF")]
    Surface,
}

impl Block {
    pub const ALL: [Block; 6] = [
        Block::SiblingVisual,
        Block::ParentChildVisual,
        Block::ImageToWord,
        Block::SiblingText,
        Block::ParentChildText,
        Block::Surface,
    ];

    pub const BINNED: [Block; 5] = [
        Block::SiblingVisual,
        Block::ParentChildVisual,
        Block::ImageToWord,
        Block::SiblingText,
        Block::ParentChildText,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::SiblingVisual => "S-V1",
            Block::ParentChildVisual => "PC-V1",
            Block::ImageToWord => "PC-V2",
            Block::SiblingText => "S-T1",
            Block::ParentChildText => "PC-T1",
            Block::Surface => "SURF",
        }
    }

    pub fn is_visual(self) -> bool {
        matches!(self, Block::SiblingVisual | Block::ParentChildVisual | Block::ImageToWord)
    }

    pub fn width(self) -> usize {
        match self {
            Block::Surface => SURFACE_WIDTH,
            _ => BLOCK_WIDTH,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Block::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown feature block `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDescriptor {
    pub block: Block,
    pub offset: usize,
    pub width: usize,
}

/// Offsets of each block inside the concatenated feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub blocks: Vec<BlockDescriptor>,
    pub bias: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        let mut offset = 0;
        let blocks = Block::ALL
            .into_iter()
            .map(|block| {
                let d = BlockDescriptor {
                    block,
                    offset,
                    width: block.width(),
                };
                offset += d.width;
                d
            })
            .collect();
        FeatureLayout { blocks, bias: offset }
    }
}

impl FeatureLayout {
    /// Total width `D`, including the bias slot.
    pub fn dim(&self) -> usize {
        self.bias + 1
    }

    pub fn descriptor(&self, block: Block) -> &BlockDescriptor {
        &self.blocks[block.index()]
    }

    pub fn offset(&self, block: Block) -> usize {
        self.descriptor(block).offset
    }

    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        let d = self.descriptor(block);
        d.offset..d.offset + d.width
    }

    pub fn validate(&self) -> Result<()> {
        let mut expect = 0;
        for (d, block) in self.blocks.iter().zip(Block::ALL) {
            if d.block != block || d.offset != expect || d.width != block.width() {
                return Err(Error::Config(format!("malformed layout at block {}", d.block)));
            }
            expect += d.width;
        }
        if self.blocks.len() != Block::ALL.len() || self.bias != expect {
            return Err(Error::Config("malformed feature layout".into()));
        }
        Ok(())
    }
}

/// Which blocks contribute. A disabled binned block always reports its
/// missing slot; a disabled surface block stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMask {
    enabled: [bool; 6],
}

impl Default for BlockMask {
    fn default() -> Self {
        BlockMask { enabled: [true; 6] }
    }
}

impl BlockMask {
    pub fn all() -> Self {
        Self::default()
    }

    /// Surface and word-embedding blocks only.
    pub fn language_only() -> Self {
        let mut m = Self::all();
        for b in Block::ALL.into_iter().filter(|b| b.is_visual()) {
            m.set(b, false);
        }
        m
    }

    pub fn with(mut self, block: Block, on: bool) -> Self {
        self.set(block, on);
        self
    }

    pub fn set(&mut self, block: Block, on: bool) {
        self.enabled[block.index()] = on;
    }

    pub fn enabled(&self, block: Block) -> bool {
        self.enabled[block.index()]
    }
}

/// Bin edges for the five scalar blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSet {
    pub sibling_visual: BinSpec,
    pub parent_child_visual: BinSpec,
    pub image_to_word: BinSpec,
    pub sibling_text: BinSpec,
    pub parent_child_text: BinSpec,
}

impl BinSet {
    pub fn get(&self, block: Block) -> &BinSpec {
        match block {
            Block::SiblingVisual => &self.sibling_visual,
            Block::ParentChildVisual => &self.parent_child_visual,
            Block::ImageToWord => &self.image_to_word,
            Block::SiblingText => &self.sibling_text,
            Block::ParentChildText => &self.parent_child_text,
            Block::Surface => panic!("surface block is not binned"),
        }
    }

    /// Same edges for every block; mostly for tests.
    pub fn uniform(spec: BinSpec) -> Self {
        BinSet {
            sibling_visual: spec.clone(),
            parent_child_visual: spec.clone(),
            image_to_word: spec.clone(),
            sibling_text: spec.clone(),
            parent_child_text: spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Block::BINNED.into_iter().try_for_each(|b| self.get(b).validate())
    }
}

/// Dense feature vector of width `D`. All entries are 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn from_active(dim: usize, active: &[usize]) -> Self {
        let mut v = vec![0.0; dim];
        for &i in active {
            v[i] = 1.0;
        }
        FeatureVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn active(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn block<'a>(&'a self, layout: &FeatureLayout, block: Block) -> &'a [f64] {
        &self.0[layout.range(block)]
    }
}

/// Raw (unbinned) similarity values for one edge; `None` marks a missing
/// input.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeValues {
    pub sibling_visual: Option<f64>,
    pub parent_child_visual: Option<f64>,
    pub image_to_word: Option<f64>,
    pub sibling_text: Option<f64>,
    pub parent_child_text: Option<f64>,
}

impl EdgeValues {
    pub fn get(&self, block: Block) -> Option<f64> {
        match block {
            Block::SiblingVisual => self.sibling_visual,
            Block::ParentChildVisual => self.parent_child_visual,
            Block::ImageToWord => self.image_to_word,
            Block::SiblingText => self.sibling_text,
            Block::ParentChildText => self.parent_child_text,
            Block::Surface => None,
        }
    }
}

/// Builds `f(parent, child, sibs)` straight from the raw embeddings,
/// without any precomputed pairwise tables.
pub fn assemble(data: &Dataset, model: &Model, parent: usize, child: usize, sibs: &[usize]) -> Result<FeatureVector> {
    let stats = ImageStats::new(data);
    assemble_with(data, &stats, model, parent, child, sibs)
}

pub fn assemble_with(
    data: &Dataset,
    stats: &ImageStats,
    model: &Model,
    parent: usize,
    child: usize,
    sibs: &[usize],
) -> Result<FeatureVector> {
    let n = data.len();
    if child == ROOT || child > n {
        return Err(Error::InvalidNode(child));
    }
    if parent > n || parent == child {
        return Err(Error::InvalidNode(parent));
    }
    if let Some(&bad) = sibs.iter().find(|&&s| s == ROOT || s > n || s == child) {
        return Err(Error::InvalidNode(bad));
    }
    let values = raw_edge_values(data, stats, model, parent, child, sibs)?;
    let layout = &model.layout;
    let mut active = Vec::with_capacity(16);
    for block in Block::BINNED {
        let value = if model.blocks.enabled(block) { values.get(block) } else { None };
        active.push(layout.offset(block) + model.bins.get(block).slot(value));
    }
    if parent == ROOT {
        active.push(layout.bias);
    } else if model.blocks.enabled(Block::Surface) {
        let off = layout.offset(Block::Surface);
        let parent_name = data.item(parent).name.as_str();
        active.extend(surface_active(&data.item(child).name, Some(parent_name)).into_iter().map(|i| off + i));
    }
    Ok(FeatureVector::from_active(layout.dim(), &active))
}

/// Unbinned similarity values for one edge, from raw embeddings.
pub fn raw_edge_values(
    data: &Dataset,
    stats: &ImageStats,
    model: &Model,
    parent: usize,
    child: usize,
    sibs: &[usize],
) -> Result<EdgeValues> {
    if parent == ROOT {
        return Ok(EdgeValues::default());
    }
    let c_item = data.item(child);
    let p_item = data.item(parent);
    let c_gauss = stats.summary(child);
    let mut out = EdgeValues::default();

    if let Some(cg) = c_gauss {
        let sims = sibs
            .iter()
            .filter_map(|&s| stats.summary(s))
            .map(|sg| vissim(cg, sg))
            .collect::<Result<Vec<_>>>()?;
        out.sibling_visual = log_mean_exp(&sims);
        if p_item.has_images() {
            let refit = top_k_refit(&p_item.image_vecs, cg, model.top_k, &stats.fitter)?;
            out.parent_child_visual = Some(vissim(cg, &refit)?);
        }
        if let (Some(phi), Some(pw)) = (&model.proj_image_word, &p_item.word_vec) {
            out.image_to_word = Some(phi.neg_distance(&cg.mean, pw));
        }
    }
    if let Some(cw) = &c_item.word_vec {
        let cos: Vec<f64> = sibs
            .iter()
            .filter_map(|&s| data.item(s).word_vec.as_ref())
            .map(|sw| cosine(cw, sw))
            .collect();
        if !cos.is_empty() {
            out.sibling_text = Some(cos.iter().sum::<f64>() / cos.len() as f64);
        }
        if let (Some(phi), Some(pw)) = (&model.proj_word_word, &p_item.word_vec) {
            out.parent_child_text = Some(phi.neg_distance(cw, pw));
        }
    }
    Ok(out)
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
