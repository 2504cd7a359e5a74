//! How much each feature block matters at each layer of a trained model.

use crate::features::Block;
use crate::model::Model;

/// Per block, one value per layer: the mean absolute weight of the block at
/// that layer, with the layer vector scaled to unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Relevance {
    pub curves: Vec<(Block, Vec<f64>)>,
}

impl Relevance {
    pub fn curve(&self, block: Block) -> Option<&[f64]> {
        self.curves.iter().find(|(b, _)| *b == block).map(|(_, c)| c.as_slice())
    }
}

pub fn layer_relevance(model: &Model) -> Relevance {
    let curves = Block::ALL
        .into_iter()
        .map(|block| {
            let range = model.layout.range(block);
            let raw: Vec<f64> = model
                .weights
                .layers
                .iter()
                .map(|w| w[range.clone()].iter().map(|v| v.abs()).sum::<f64>() / range.len() as f64)
                .collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let curve = if norm > 0.0 {
                raw.iter().map(|v| v / norm).collect()
            } else {
                vec![0.0; raw.len()]
            };
            (block, curve)
        })
        .collect();
    Relevance { curves }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_block_stays_zero() {
        let r = layer_relevance(&Model::blank(6));
        for (_, c) in &r.curves {
            assert_eq!(c, &vec![0.0; 6]);
        }
    }

    #[test]
    fn single_layer_gets_unit_relevance() {
        let mut m = Model::blank(6);
        let off = m.layout.offset(Block::SiblingText);
        m.weights.layers[3][off + 4] = -2.5;
        let r = layer_relevance(&m);
        assert_eq!(r.curve(Block::SiblingText).unwrap(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(r.curve(Block::SiblingVisual).unwrap(), &[0.0; 6]);
    }

    #[test]
    fn linear_growth_is_monotone() {
        let mut m = Model::blank(6);
        let range = m.layout.range(Block::SiblingVisual);
        for (l, w) in m.weights.layers.iter_mut().enumerate() {
            for i in range.clone() {
                w[i] = (l + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        let c = layer_relevance(&m).curve(Block::SiblingVisual).unwrap().to_vec();
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        let norm: f64 = c.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
