//! Posterior inference over taxonomies: edge scoring, the collapsed Gibbs
//! sampler, and maximum-spanning-tree decoding of its marginals.

mod mst;
mod sampler;
mod score;

pub use mst::{arborescence_weight, chu_liu_edmonds, mst_decode, mst_decode_constrained, MARGINAL_EPSILON};
pub use sampler::{
    parent_distribution, parent_log_weights, run_chain, sample_parent, Chain, InitMode, MarginalTable, SamplerConfig,
};
pub use score::Scorer;

#[cfg(test)]
mod tests;
