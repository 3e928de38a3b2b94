//! One-class SVM on a precomputed kernel, solved by pairwise coordinate
//! ascent (SMO) on the dual
//! `min 1/2 a'Ka  s.t.  0 <= a_i <= 1/(nu N), sum a_i = 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OneClassSvm {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `sum_j a_j K(i, j)` for every training point.
    gradient: Vec<f64>,
}

impl OneClassSvm {
    /// Fits on an `N x N` kernel. Starts from uniform weights, so the result is deterministic.
    pub fn fit(kernel: &DMatrix<f64>, nu: f64) -> Result<Self> {
        let n = kernel.nrows();
        if n == 0 || kernel.ncols() != n {
            return Err(Error::Dimension("kernel must be square and non-empty".into()));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidParam(format!("nu = {nu} not in (0, 1]")));
        }
        let c = 1.0 / (nu * n as f64);
        let mut alpha = vec![1.0 / n as f64; n];
        let mut grad: Vec<f64> = (0..n).map(|i| kernel.row(i).sum() / n as f64).collect();

        for _ in 0..MAX_ITERS {
            // i: may increase, smallest gradient; j: may decrease, largest gradient
            let mut i_best = None;
            let mut j_best = None;
            for k in 0..n {
                if alpha[k] < c - 1e-15 && i_best.is_none_or(|i: usize| grad[k] < grad[i]) {
                    i_best = Some(k);
                }
                if alpha[k] > 1e-15 && j_best.is_none_or(|j: usize| grad[k] > grad[j]) {
                    j_best = Some(k);
                }
            }
            let (Some(i), Some(j)) = (i_best, j_best) else { break };
            if grad[j] - grad[i] < KKT_TOL {
                break;
            }
            let curvature = (kernel[(i, i)] + kernel[(j, j)] - 2.0 * kernel[(i, j)]).max(1e-12);
            let step = ((grad[j] - grad[i]) / curvature).min(c - alpha[i]).min(alpha[j]);
            if step <= 0.0 {
                break;
            }
            alpha[i] += step;
            alpha[j] -= step;
            for (k, g) in grad.iter_mut().enumerate() {
                *g += step * (kernel[(k, i)] - kernel[(k, j)]);
            }
        }

        let free: Vec<f64> = (0..n)
            .filter(|&k| alpha[k] > 1e-12 && alpha[k] < c - 1e-12)
            .map(|k| grad[k])
            .collect();
        let rho = if free.is_empty() {
            let at_bound = (0..n).filter(|&k| alpha[k] >= c - 1e-12).map(|k| grad[k]).fold(f64::NEG_INFINITY, f64::max);
            let at_zero = (0..n).filter(|&k| alpha[k] <= 1e-12).map(|k| grad[k]).fold(f64::INFINITY, f64::min);
            match (at_bound.is_finite(), at_zero.is_finite()) {
                (true, true) => 0.5 * (at_bound + at_zero),
                (true, false) => at_bound,
                (false, true) => at_zero,
                (false, false) => 0.0,
            }
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };
        Ok(OneClassSvm {
            alpha,
            rho,
            gradient: grad,
        })
    }

    /// Decision values `sum_j a_j K(i, j) - rho` of the training points;
    /// negative values fall outside the estimated support.
    pub fn decision_values(&self) -> Vec<f64> {
        self.gradient.iter().map(|g| g - self.rho).collect()
    }
}
