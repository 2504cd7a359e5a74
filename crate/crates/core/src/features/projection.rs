//! L1-regularized linear maps from a child embedding to its parent's word
//! embedding, fitted by iterative soft-thresholding.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct IstaConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IstaConfig {
    fn default() -> Self {
        IstaConfig {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    /// Shape `(out_dim, in_dim)`.
    pub matrix: Array2<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the zero matrix.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        ProjectionMatrix {
            matrix: Array2::zeros((out_dim, in_dim)),
            lambda: 0.0,
            objective: 0.0,
            iterations: 0,
            history: Vec::new(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `-||Φx - y||₂`, larger meaning closer.
    pub fn neg_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = self.apply(x);
        -p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.matrix.iter().map(|v| v.abs()).sum()
    }
}

/// Minimizes `(1/N) Σ ||Φ c_i - p_i||² + λ ||Φ||₁` over `(c_i, p_i)` pairs,
/// starting from `Φ = 0`.
pub fn learn_projection<C, P>(pairs: &[(C, P)], lambda: f64) -> Result<ProjectionMatrix>
where
    C: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    learn_projection_with(pairs, lambda, IstaConfig::default())
}

pub fn learn_projection_with<C, P>(pairs: &[(C, P)], lambda: f64, cfg: IstaConfig) -> Result<ProjectionMatrix>
where
    C: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    let (first_in, first_out) = pairs.first().ok_or(Error::Empty("projection pairs"))?;
    let in_dim = first_in.as_ref().len();
    let out_dim = first_out.as_ref().len();
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = pairs.len();
    let mut x = Array2::zeros((n, in_dim));
    let mut y = Array2::zeros((n, out_dim));
    for (i, (c, p)) in pairs.iter().enumerate() {
        let (c, p) = (c.as_ref(), p.as_ref());
        if c.len() != in_dim {
            return Err(Error::DimensionMismatch { expected: in_dim, found: c.len() });
        }
        if p.len() != out_dim {
            return Err(Error::DimensionMismatch { expected: out_dim, found: p.len() });
        }
        if c.iter().chain(p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection pairs"));
        }
        x.row_mut(i).assign(&Array1::from(c.to_vec()));
        y.row_mut(i).assign(&Array1::from(p.to_vec()));
    }

    let nf = n as f64;
    let gram = x.t().dot(&x) / nf;
    let cross = y.t().dot(&x) / nf;
    let objective = |phi: &Array2<f64>| -> f64 {
        let resid = x.dot(&phi.t()) - &y;
        resid.iter().map(|r| r * r).sum::<f64>() / nf + lambda * phi.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut phi = Array2::<f64>::zeros((out_dim, in_dim));
    let mut obj = objective(&phi);
    let mut history = vec![obj];
    let mut lipschitz = 2.0 * top_eigenvalue(&gram) * 1.01;
    if lipschitz <= 0.0 {
        return Ok(ProjectionMatrix {
            matrix: phi,
            lambda,
            objective: obj,
            iterations: 0,
            history,
        });
    }

    let mut iterations = 0;
    'outer: while iterations < cfg.max_iter {
        iterations += 1;
        let grad = (phi.dot(&gram) - &cross) * 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let step = 1.0 / lipschitz;
            let mut cand = &phi - &(&grad * step);
            let thresh = step * lambda;
            cand.mapv_inplace(|v| soft_threshold(v, thresh));
            let cand_obj = objective(&cand);
            if cand_obj <= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            lipschitz *= 2.0;
        }
        // no descent even with a tiny step: converged to rounding noise
        let Some((next, next_obj)) = accepted else {
            break 'outer;
        };
        let prev = obj;
        phi = next;
        obj = next_obj;
        history.push(obj);
        if prev - obj <= cfg.tol * prev.abs().max(f64::EPSILON) {
            break;
        }
    }

    Ok(ProjectionMatrix {
        matrix: phi,
        lambda,
        objective: obj,
        iterations,
        history,
    })
}

/// Objective of an arbitrary `Φ` on the given pairs.
pub fn projection_objective<C, P>(phi: &Array2<f64>, pairs: &[(C, P)], lambda: f64) -> f64
where
    C: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    let n = pairs.len() as f64;
    let sq: f64 = pairs
        .iter()
        .map(|(c, p)| {
            let c = Array1::from(c.as_ref().to_vec());
            let proj = phi.dot(&c);
            proj.iter().zip(p.as_ref()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum();
    sq / n + lambda * phi.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn top_eigenvalue(sym: &Array2<f64>) -> f64 {
    let dim = sym.nrows();
    if dim == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(dim, 1.0 / (dim as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..500 {
        let w = sym.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            // ones happened to be in the null space; fall back to the trace
            return sym.diag().sum();
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - est).abs() <= 1e-12 * next.abs() {
            est = next;
            break;
        }
        est = next;
    }
    // the Rayleigh quotient never exceeds the top eigenvalue; backtracking
    // in the solver absorbs any shortfall
    est.max(sym.diag().iter().copied().fold(0.0, f64::max))
}
