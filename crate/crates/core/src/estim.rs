//! Mean and covariance estimators, residuals, and the kernel trace functionals
//! that feed the Welch–Satterthwaite approximation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{CovSurface, Grid, GroupData};

/// Plug-in traces of a covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSet {
    /// `∫ γ(t,t) dt`
    pub tr_gamma: f64,
    /// `∬ γ²(s,t) ds dt`
    pub tr_gamma2: f64,
    /// `tr(γ^⊗4)`, the trace of the fourth operator power.
    pub tr_gamma4: f64,
}

impl TraceSet {
    pub fn of(s: &CovSurface) -> Self {
        TraceSet {
            tr_gamma: trace_gamma(s),
            tr_gamma2: trace_gamma_sq(s),
            tr_gamma4: trace_gamma_quad(s),
        }
    }
}

/// Unbiased (under Gaussianity) estimates of `tr²(γ)` and `tr(γ^⊗2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReducedTraces {
    pub tr2_gamma_hat: f64,
    pub tr_gamma2_hat: f64,
}

/// Column-wise average of the curves.
pub fn group_mean(g: &GroupData) -> DVector<f64> {
    let curves = g.curves();
    let n = curves.nrows() as f64;
    DVector::from_iterator(curves.ncols(), curves.column_iter().map(|c| c.sum() / n))
}

/// Curves minus the group mean (the estimated subject-effect functions).
pub fn residuals(g: &GroupData) -> DMatrix<f64> {
    let mean = group_mean(g);
    let mut r = g.curves().clone();
    for (mut col, m) in r.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    r
}

/// Unbiased sample covariance `(n_i − 1)^{-1} Σ_j r_j r_jᵀ` on `grid`.
pub fn group_cov(g: &GroupData, grid: &Grid) -> Result<CovSurface> {
    let n = g.size();
    if n < 2 {
        return Err(Error::InsufficientSample {
            group: g.label().to_string(),
            size: n,
        });
    }
    if g.curves().ncols() != grid.len() {
        return Err(Error::invalid(format!(
            "group `{}` has {} columns but the grid has {} points",
            g.label(),
            g.curves().ncols(),
            grid.len()
        )));
    }
    Ok(cov_from_residuals(&residuals(g), (n - 1) as f64, grid))
}

/// `RᵀR / divisor`, symmetrized against rounding in the product.
pub(crate) fn cov_from_residuals(r: &DMatrix<f64>, divisor: f64, grid: &Grid) -> CovSurface {
    let mut s = r.tr_mul(r);
    symmetrize(&mut s);
    s /= divisor;
    CovSurface::from_symmetric(grid.clone(), s)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let j = m.nrows();
    for c in 0..j {
        for r in 0..c {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// Pooled covariance `Σ (n_i − 1) γ̂_i / (n − k)`.
pub fn pooled_cov(covs: &[CovSurface], sizes: &[usize]) -> Result<CovSurface> {
    if covs.len() != sizes.len() {
        return Err(Error::invalid(format!(
            "{} covariance surfaces but {} sample sizes",
            covs.len(),
            sizes.len()
        )));
    }
    if covs.len() < 2 {
        return Err(Error::invalid("pooling needs at least 2 groups"));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
        return Err(Error::invalid(format!("sample size {n} is below 2")));
    }
    let grid = covs[0].grid();
    if covs.iter().any(|c| c.grid() != grid) {
        return Err(Error::invalid("covariance surfaces live on different grids"));
    }
    let dof: usize = sizes.iter().map(|n| n - 1).sum();
    let mut acc: DMatrix<f64> = DMatrix::zeros(grid.len(), grid.len());
    for (c, &n) in covs.iter().zip(sizes) {
        acc += c.values() * ((n - 1) as f64 / dof as f64);
    }
    Ok(CovSurface::from_symmetric(grid.clone(), acc))
}

/// `tr(γ) = ∫ γ(t,t) dt`.
pub fn trace_gamma(s: &CovSurface) -> f64 {
    let v = s.values();
    s.grid()
        .weights()
        .iter()
        .enumerate()
        .map(|(j, w)| w * v[(j, j)])
        .sum()
}

/// `tr(γ^⊗2) = ∬ γ²(s,t) ds dt`.
pub fn trace_gamma_sq(s: &CovSurface) -> f64 {
    let sq = s.values().map(|v| v * v);
    s.grid().integrate2(&sq)
}

/// `tr(γ^⊗4)`: trace of the fourth power of the discretized operator
/// `M = S·diag(w)`, evaluated as `‖K²‖²_F` with `K = diag(√w) S diag(√w)`.
pub fn trace_gamma_quad(s: &CovSurface) -> f64 {
    let k = s.weighted_kernel();
    let k2 = &k * &k;
    k2.iter().map(|v| v * v).sum()
}

/// Finite-sample corrected estimates of `tr²(γ)` and `tr(γ^⊗2)` from the
/// plug-in values on the pooled covariance with `n − k` degrees of freedom.
pub fn bias_reduced_traces(tr_g: f64, tr_g2: f64, n: usize, k: usize) -> Result<BiasReducedTraces> {
    let dof = n as i64 - k as i64;
    if dof < 2 {
        return Err(Error::DegenerateDof { dof, required: 2 });
    }
    let m = dof as f64;
    let denom = (m - 1.0) * (m + 2.0);
    let tr2_gamma_hat = m * (m + 1.0) / denom * (tr_g * tr_g - 2.0 * tr_g2 / (m + 1.0));
    let tr_gamma2_hat = m * m / denom * (tr_g2 - tr_g * tr_g / m);
    Ok(BiasReducedTraces {
        tr2_gamma_hat,
        tr_gamma2_hat,
    })
}
