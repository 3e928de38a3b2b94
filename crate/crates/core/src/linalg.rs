//! Blockwise least squares via tall-and-skinny QR.
//!
//! Each row panel `[design | response]` is reduced to its triangular factor
//! independently; factors are then stacked and re-factored pairwise in a fixed
//! binary tree until one triangle remains. Only `R` is ever formed, so the
//! orthogonal factors are never stored.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default ridge used when a least-squares design is rank deficient.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Relative threshold on the diagonal of `R` below which a design is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// One row block of a multi-response least-squares problem `design * B ~ response`.
#[derive(Debug, Clone)]
pub struct Panel {
    pub design: DMatrix<f64>,
    pub response: DMatrix<f64>,
}

impl Panel {
    pub fn new(design: DMatrix<f64>, response: DMatrix<f64>) -> Self {
        Panel { design, response }
    }

    fn augmented(&self) -> DMatrix<f64> {
        let (rows, p) = self.design.shape();
        let q = self.response.ncols();
        let mut aug = DMatrix::zeros(rows, p + q);
        aug.view_mut((0, 0), (rows, p)).copy_from(&self.design);
        aug.view_mut((0, p), (rows, q)).copy_from(&self.response);
        aug
    }
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// `p x q` coefficient matrix `B`.
    pub coefficients: DMatrix<f64>,
    /// Set when the design was rank deficient and the ridge fallback was used.
    pub ridge_applied: bool,
}

/// Upper-triangular factor of a Householder QR of `a`, truncated to
/// `min(rows, cols)` rows. Signs of rows are not normalized.
pub fn householder_r(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut v = vec![0.0; m];
    for j in 0..k {
        let norm = (j..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[(j, j)] > 0.0 { -norm } else { norm };
        v[j] = a[(j, j)] - alpha;
        for i in (j + 1)..m {
            v[i] = a[(i, j)];
        }
        let vnorm2: f64 = (j..m).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in j..n {
            let s: f64 = (j..m).map(|i| v[i] * a[(i, c)]).sum();
            let f = 2.0 * s / vnorm2;
            for i in j..m {
                a[(i, c)] -= f * v[i];
            }
        }
        for i in (j + 1)..m {
            a[(i, j)] = 0.0;
        }
    }
    a.rows(0, k).into_owned()
}

/// Stacks two triangular factors and re-factors them.
pub fn merge_r(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let n = top.ncols();
    let mut stacked = DMatrix::zeros(top.nrows() + bottom.nrows(), n);
    stacked.rows_mut(0, top.nrows()).copy_from(top);
    stacked.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    householder_r(stacked)
}

/// Pairwise reduction in a fixed tree so results do not depend on thread scheduling.
fn reduce_tree(mut level: Vec<DMatrix<f64>>) -> Option<DMatrix<f64>> {
    while level.len() > 1 {
        level = level
            .par_chunks(2)
            .map(|pair| match pair {
                [a, b] => merge_r(a, b),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    level.pop()
}

/// Solves `min_B sum_i ||response_i - design_i B||^2` over all panels.
///
/// If the stacked design is rank deficient (or has fewer rows than columns),
/// the problem is re-solved with an added `ridge * ||B||^2` penalty and the
/// solution is flagged; with `ridge == 0` that case is an error.
pub fn tsqr_solve(panels: &[Panel], ridge: f64) -> Result<LstsqSolution> {
    let first = panels
        .first()
        .ok_or_else(|| Error::Dimension("no panels to solve".into()))?;
    let p = first.design.ncols();
    let q = first.response.ncols();
    for (i, panel) in panels.iter().enumerate() {
        if panel.design.ncols() != p || panel.response.ncols() != q {
            return Err(Error::Dimension(format!("panel {i} column count differs")));
        }
        if panel.design.nrows() != panel.response.nrows() {
            return Err(Error::Dimension(format!("panel {i} design/response row counts differ")));
        }
    }
    let factors: Vec<DMatrix<f64>> = panels
        .par_iter()
        .filter(|panel| panel.design.nrows() > 0)
        .map(|panel| householder_r(panel.augmented()))
        .collect();
    let r = reduce_tree(factors).unwrap_or_else(|| DMatrix::zeros(0, p + q));
    solve_from_r(&r, p, q, ridge)
}

fn solve_from_r(r: &DMatrix<f64>, p: usize, q: usize, ridge: f64) -> Result<LstsqSolution> {
    // pad to a full p-row triangle if there were fewer rows than unknowns
    let mut r_full = DMatrix::zeros(p.max(r.nrows()), p + q);
    r_full.rows_mut(0, r.nrows()).copy_from(r);
    let r11 = r_full.view((0, 0), (p, p)).into_owned();
    let r12 = r_full.view((0, p), (p, q)).into_owned();

    let max_diag = (0..p).map(|i| r11[(i, i)].abs()).fold(0.0, f64::max);
    let deficient = max_diag == 0.0 || (0..p).any(|i| r11[(i, i)].abs() <= RANK_TOL * max_diag);
    if !deficient {
        let coefficients = r11
            .solve_upper_triangular(&r12)
            .ok_or(Error::RankDeficient)?;
        return Ok(LstsqSolution {
            coefficients,
            ridge_applied: false,
        });
    }
    if !(ridge > 0.0) {
        return Err(Error::RankDeficient);
    }
    let mut penalty = DMatrix::zeros(p, p + q);
    for i in 0..p {
        penalty[(i, i)] = ridge.sqrt();
    }
    let r2 = merge_r(&r_full, &penalty);
    let coefficients = r2
        .view((0, 0), (p, p))
        .into_owned()
        .solve_upper_triangular(&r2.view((0, p), (p, q)).into_owned())
        .ok_or(Error::RankDeficient)?;
    Ok(LstsqSolution {
        coefficients,
        ridge_applied: true,
    })
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
