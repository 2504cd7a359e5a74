//! Multimodal probabilistic taxonomy induction.
//!
//! Categories carry a name, an optional word embedding and a bag of image
//! embeddings. A log-linear model scores parent-child attachments given the
//! siblings, a collapsed Gibbs sampler explores trees under that model, and
//! the sampled edge marginals are decoded into a single tree with a maximum
//! spanning arborescence.

pub mod dataset;
pub mod embed_stats;
pub mod error;
pub mod eval;
pub mod exact;
pub mod features;
pub mod inference;
pub mod io;
pub mod model;
pub mod report;
pub mod synth;
pub mod taxonomy;
pub mod training;

pub use dataset::{Dataset, LabelItem};
pub use embed_stats::TopK;
pub use error::{Error, Result};
pub use eval::{ancestor_f1, EvalReport};
pub use features::{Block, BlockMask};
pub use inference::{MarginalTable, SamplerConfig};
pub use model::{AlphaPrior, LayerWeights, Model};
pub use taxonomy::{Taxonomy, ROOT};
pub use training::{LabeledTree, TrainConfig};
