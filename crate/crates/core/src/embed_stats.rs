//! Diagonal Gaussian summaries of image-embedding sets and the visual
//! similarity kernels built on them. Everything here stays in log space:
//! raw densities underflow long before typical embedding widths.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
/// Categories with fewer images get only a mean; their variance is the
/// dataset-wide fallback.
pub const DEFAULT_MIN_IMAGES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fitting policy shared by every category of one dataset.
#[derive(Debug, Clone)]
pub struct GaussianFitter {
    pub floor: f64,
    pub min_count: usize,
    pub fallback: Vec<f64>,
}

impl GaussianFitter {
    pub fn new(fallback: Vec<f64>) -> Self {
        GaussianFitter {
            floor: DEFAULT_VARIANCE_FLOOR,
            min_count: DEFAULT_MIN_IMAGES,
            fallback,
        }
    }

    /// Fallback variance = per-dimension population variance of every image
    /// vector in the dataset.
    pub fn for_dataset(data: &Dataset) -> Self {
        let all: Vec<&[f64]> = data
            .items()
            .iter()
            .flat_map(|it| it.image_vecs.iter().map(Vec::as_slice))
            .collect();
        let fallback = if all.is_empty() {
            vec![1.0; data.image_dim()]
        } else {
            let (_, var) = mean_var(&all);
            var
        };
        Self::new(fallback)
    }

    pub fn fit<V: AsRef<[f64]>>(&self, vecs: &[V]) -> Result<GaussianSummary> {
        let first = vecs.first().ok_or(Error::Empty("image vectors"))?;
        let dim = first.as_ref().len();
        let views: Vec<&[f64]> = vecs.iter().map(AsRef::as_ref).collect();
        for v in &views {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        if self.fallback.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.fallback.len(),
            });
        }
        let (mean, var) = mean_var(&views);
        let var = if views.len() < self.min_count {
            self.fallback.clone()
        } else {
            var
        };
        let var = var.into_iter().map(|s| s.max(self.floor)).collect();
        Ok(GaussianSummary {
            mean,
            var,
            count: views.len(),
        })
    }
}

/// Fitter plus one Gaussian per category that has images.
#[derive(Debug, Clone)]
pub struct ImageStats {
    pub fitter: GaussianFitter,
    summaries: Vec<Option<GaussianSummary>>,
}

impl ImageStats {
    pub fn new(data: &Dataset) -> Self {
        Self::with_fitter(data, GaussianFitter::for_dataset(data))
    }

    pub fn with_fitter(data: &Dataset, fitter: GaussianFitter) -> Self {
        let summaries = data
            .items()
            .iter()
            .map(|it| {
                if it.image_vecs.is_empty() {
                    None
                } else {
                    Some(fitter.fit(&it.image_vecs).expect("dataset dimensions are validated"))
                }
            })
            .collect();
        ImageStats { fitter, summaries }
    }

    /// Gaussian of category `n` (1-based), if it has images.
    pub fn summary(&self, n: usize) -> Option<&GaussianSummary> {
        self.summaries[n - 1].as_ref()
    }
}

fn mean_var(vecs: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let dim = vecs[0].len();
    let n = vecs.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vecs {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in vecs {
        for ((s, x), m) in var.iter_mut().zip(v.iter()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

/// `log N(v; mean, diag(var))`.
pub fn log_density(g: &GaussianSummary, v: &[f64]) -> Result<f64> {
    if v.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: v.len(),
        });
    }
    Ok(log_density_unchecked(g, v))
}

pub(crate) fn log_density_unchecked(g: &GaussianSummary, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, m), s) in v.iter().zip(&g.mean).zip(&g.var) {
        let d = x - m;
        acc += (2.0 * PI * s).ln() + d * d / s;
    }
    -0.5 * acc
}

/// `log[(N(ȳ; x) + N(x̄; y)) / 2]`: the mean density of each category's
/// mean image under the other's Gaussian.
pub fn vissim(x: &GaussianSummary, y: &GaussianSummary) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let a = log_density_unchecked(x, &y.mean);
    let b = log_density_unchecked(y, &x.mean);
    Ok(log_add_exp(a, b) - LN_2)
}

/// Log of the mean similarity between `n` and each sibling. `None` when
/// there are no siblings.
pub fn sibling_vissim(n: &GaussianSummary, sibs: &[&GaussianSummary]) -> Result<Option<f64>> {
    let sims = sibs
        .iter()
        .map(|s| vissim(n, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_mean_exp(&sims))
}

/// How many parent images feed the parent-child visual similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TopK {
    All,
    K(usize),
}

impl Default for TopK {
    fn default() -> Self {
        TopK::All
    }
}

impl fmt::Display for TopK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopK::All => f.write_str("all"),
            TopK::K(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for TopK {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" | "inf" => Ok(TopK::All),
            other => match other.parse::<usize>() {
                Ok(0) | Err(_) => Err(Error::Config(format!("invalid K `{s}` (positive integer or `all`)"))),
                Ok(k) => Ok(TopK::K(k)),
            },
        }
    }
}

impl From<TopK> for String {
    fn from(k: TopK) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for TopK {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Refits the parent's Gaussian on the `k` parent images most probable
/// under the child's Gaussian.
pub fn top_k_refit<V: AsRef<[f64]>>(
    parent_vecs: &[V],
    child: &GaussianSummary,
    k: TopK,
    fitter: &GaussianFitter,
) -> Result<GaussianSummary> {
    let keep = match k {
        TopK::K(k) if k < parent_vecs.len() => k,
        _ => return fitter.fit(parent_vecs),
    };
    let mut ranked = parent_vecs
        .iter()
        .enumerate()
        .map(|(i, v)| log_density(child, v.as_ref()).map(|ld| (i, ld)))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked[..keep].iter().map(|&(i, _)| i).collect();
    chosen.sort_unstable();
    let picked: Vec<&[f64]> = chosen.iter().map(|&i| parent_vecs[i].as_ref()).collect();
    fitter.fit(&picked)
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `log(mean(exp(values)))`, or `None` for an empty slice.
pub fn log_mean_exp(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Some(m + s.ln() - (values.len() as f64).ln())
}
