use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embed_stats::TopK;
use crate::error::{Error, Result};
use crate::features::{BinSet, BinSpec, BlockMask, FeatureLayout, ProjectionMatrix};

pub const MODEL_FORMAT_VERSION: &str = "1.0";
pub const DEFAULT_LAYERS: usize = 6;

/// One weight vector per taxonomy layer. Depths past the last layer reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub layers: Vec<Vec<f64>>,
}

impl LayerWeights {
    pub fn zeros(layers: usize, dim: usize) -> Self {
        LayerWeights {
            layers: vec![vec![0.0; dim]; layers],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer index (0-based) used for a child at `depth >= 1`.
    pub fn layer_index(&self, depth: usize) -> usize {
        depth.clamp(1, self.layers.len()) - 1
    }

    pub fn for_depth(&self, depth: usize) -> &[f64] {
        &self.layers[self.layer_index(depth)]
    }
}

/// Dirichlet concentration for each candidate parent, bucketed by depth since
/// test categories never coincide with training ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPrior {
    /// Pseudo-root.
    pub root: f64,
    /// `by_depth[d - 1]` for categories at depth `d`.
    pub by_depth: Vec<f64>,
    /// Any category when its depth is unknown.
    pub pooled: f64,
}

impl Default for AlphaPrior {
    fn default() -> Self {
        AlphaPrior {
            root: 1.0,
            by_depth: Vec::new(),
            pooled: 1.0,
        }
    }
}

impl AlphaPrior {
    pub fn uniform(value: f64) -> Self {
        AlphaPrior {
            root: value,
            by_depth: Vec::new(),
            pooled: value,
        }
    }

    /// `α` for `n` categories whose depth is unknown.
    pub fn unknown_depths(&self, n: usize) -> Vec<f64> {
        let mut a = vec![self.pooled; n + 1];
        a[0] = self.root;
        a
    }

    /// `α` using known depths (`depths[0]` is the pseudo-root).
    pub fn with_depths(&self, depths: &[usize]) -> Vec<f64> {
        depths
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if i == 0 {
                    self.root
                } else {
                    self.by_depth.get(d.wrapping_sub(1)).copied().unwrap_or(1.0)
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.root) && ok(self.pooled) && self.by_depth.iter().all(|&v| ok(v)) {
            Ok(())
        } else {
            Err(Error::Config("every alpha entry must be finite and > 0".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: String,
    pub layout: FeatureLayout,
    pub weights: LayerWeights,
    pub bins: BinSet,
    /// Child mean image -> parent word vector.
    pub proj_image_word: Option<ProjectionMatrix>,
    /// Child word vector -> parent word vector.
    pub proj_word_word: Option<ProjectionMatrix>,
    pub top_k: TopK,
    pub alpha: AlphaPrior,
    pub blocks: BlockMask,
    /// `(image_dim, word_dim)` of the training data; `None` accepts any.
    #[serde(default)]
    pub input_dims: Option<(usize, usize)>,
}

impl Model {
    /// Zero weights, placeholder bins, no projections.
    pub fn blank(layers: usize) -> Self {
        let layout = FeatureLayout::default();
        let dim = layout.dim();
        Model {
            version: MODEL_FORMAT_VERSION.to_string(),
            layout,
            weights: LayerWeights::zeros(layers.max(1), dim),
            bins: BinSet::uniform(BinSpec::build_lenient(&[]).expect("default edges")),
            proj_image_word: None,
            proj_word_word: None,
            top_k: TopK::All,
            alpha: AlphaPrior::default(),
            blocks: BlockMask::all(),
            input_dims: None,
        }
    }

    /// Fails when `data` has different vector sizes than the model was fitted on.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        let (idim, wdim) = (data.image_dim(), data.word_dim());
        let mut expected = Vec::new();
        if let Some((i, w)) = self.input_dims {
            expected.extend([(i, idim), (w, wdim)]);
        }
        if let Some(p) = &self.proj_image_word {
            expected.extend([(p.in_dim(), idim), (p.out_dim(), wdim)]);
        }
        if let Some(p) = &self.proj_word_word {
            expected.extend([(p.in_dim(), wdim), (p.out_dim(), wdim)]);
        }
        match expected.into_iter().find(|(e, f)| e != f) {
            Some((expected, found)) => Err(Error::DimensionMismatch { expected, found }),
            None => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn max_depth(&self) -> usize {
        self.weights.num_layers()
    }

    pub fn validate(&self) -> Result<()> {
        let major = self.version.split('.').next().unwrap_or("");
        if major != MODEL_FORMAT_VERSION.split('.').next().unwrap_or("") {
            return Err(Error::UnsupportedVersion(self.version.clone()));
        }
        self.layout.validate()?;
        self.bins.validate()?;
        self.alpha.validate()?;
        if self.weights.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for w in &self.weights.layers {
            if w.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: w.len(),
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("weights"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelItem;

    fn data(idim: usize, wdim: usize) -> Dataset {
        Dataset::new(vec![LabelItem::new(1, "a").with_word(vec![0.0; wdim])], idim, wdim).unwrap()
    }

    #[test]
    fn dataset_sizes_are_checked() {
        let mut m = Model::blank(2);
        assert!(m.check_dataset(&data(3, 4)).is_ok());
        m.proj_word_word = Some(ProjectionMatrix::zeros(4, 4));
        assert!(m.check_dataset(&data(3, 4)).is_ok());
        assert!(m.check_dataset(&data(3, 5)).is_err());
        m.input_dims = Some((2, 4));
        assert!(matches!(
            m.check_dataset(&data(3, 4)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(m.check_dataset(&data(2, 4)).is_ok());
    }
}
