use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of value bins per scalar-similarity block.
pub const NUM_BINS: usize = 19;
/// Value bins plus the leading missing-indicator slot.
pub const BLOCK_WIDTH: usize = NUM_BINS + 1;
const NUM_EDGES: usize = NUM_BINS - 1;
const TIE_STEP: f64 = 1e-9;

/// Quantile bin edges for one scalar feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub edges: Vec<f64>,
}

impl BinSpec {
    /// Edges at the interior quantiles `k/19`, `k = 1..=18` (linear
    /// interpolation between order statistics). Every edge is nudged up by
    /// `1e-9 * k` so repeated quantiles still yield strictly increasing edges.
    pub fn build(values: &[f64]) -> Result<Self> {
        if values.len() < NUM_BINS {
            return Err(Error::TooFewValues {
                need: NUM_BINS,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bin values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let last = (sorted.len() - 1) as f64;
        let mut edges = Vec::with_capacity(NUM_EDGES);
        for k in 1..=NUM_EDGES {
            let h = last * k as f64 / NUM_BINS as f64;
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let q = if lo + 1 < sorted.len() {
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            } else {
                sorted[lo]
            };
            let mut e = q + TIE_STEP * k as f64;
            if let Some(&prev) = edges.last() {
                if e <= prev {
                    e = next_up(prev);
                }
            }
            edges.push(e);
        }
        Ok(BinSpec { edges })
    }

    /// Like [`BinSpec::build`] but tolerates short samples: fewer than 19
    /// values are cycled up to 19, and an empty sample gets unit-spaced edges.
    pub fn build_lenient(values: &[f64]) -> Result<Self> {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        match finite.len() {
            0 => Ok(BinSpec {
                edges: (1..=NUM_EDGES).map(|k| k as f64).collect(),
            }),
            n if n < NUM_BINS => {
                let padded: Vec<f64> = finite.iter().copied().cycle().take(NUM_BINS).collect();
                Self::build(&padded)
            }
            _ => Self::build(&finite),
        }
    }

    /// Number of edges `<= value`, in `0..=18`.
    pub fn bin(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e <= value)
    }

    /// Slot within the 20-wide block: 0 for a missing value, else `1 + bin`.
    pub fn slot(&self, value: Option<f64>) -> usize {
        match value {
            Some(v) => 1 + self.bin(v),
            None => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() != NUM_EDGES {
            return Err(Error::Config(format!(
                "bin spec has {} edges, expected {NUM_EDGES}",
                self.edges.len()
            )));
        }
        if self.edges.iter().any(|e| !e.is_finite()) || self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bin edges must be finite and strictly increasing".into()));
        }
        Ok(())
    }
}

/// Dense 20-slot indicator for `value` under `spec`.
pub fn one_hot(spec: &BinSpec, value: Option<f64>) -> [f64; BLOCK_WIDTH] {
    let mut out = [0.0; BLOCK_WIDTH];
    out[spec.slot(value)] = 1.0;
    out
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}
