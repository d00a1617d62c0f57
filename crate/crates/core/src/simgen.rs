//! Synthetic functional samples.
//!
//! Group `i` (1-based) draws `y_ij(t) = η_i(t) + Σ_r √λ_r z_ijr ψ_ir(t)` on a
//! uniform grid over `[0, 1]`. Two layouts are supported:
//!
//! * `shift_basis`: `λ_r = a ρ^{r−1}`, Fourier basis with the second function
//!   lifted by `(i − 1) ω` in group `i`, cubic means `c_i = c_1 + (i − 1) δ u`.
//! * `last_eigen`: zero means, `λ_r = ρ^{r−1}`, no basis shift, and the last
//!   standard deviation of group `i` raised to `√λ_q + (i − 1) ω`.
//!
//! Innovations come from one ChaCha8 stream per (group, subject), so a dataset
//! depends only on `(cfg, seed)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::grid::{CovSurface, Dataset, GroupData, Grid};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    #[default]
    Gaussian,
    /// Student t with 4 degrees of freedom, scaled to unit variance.
    T4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ShiftBasis,
    LastEigen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sizes: Vec<usize>,
    #[serde(alias = "J")]
    pub j: usize,
    pub q: usize,
    pub a_var: f64,
    pub rho: f64,
    pub omega: f64,
    pub delta_mean: f64,
    pub u: [f64; 4],
    pub c1: [f64; 4],
    pub dist: Dist,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        let s30 = 30f64.sqrt();
        SimConfig {
            sizes: vec![20, 25, 22, 18, 16],
            j: 180,
            q: 11,
            a_var: 1.5,
            rho: 0.1,
            omega: 0.0,
            delta_mean: 0.1,
            u: [1.0 / s30, 2.0 / s30, 3.0 / s30, 4.0 / s30],
            c1: [1.0, 2.3, 3.4, 1.5],
            dist: Dist::Gaussian,
            scheme: Scheme::ShiftBasis,
        }
    }
}

impl SimConfig {
    /// The high-frequency layout with its customary `q = 25`.
    pub fn last_eigen(sizes: Vec<usize>, rho: f64, omega: f64) -> Self {
        SimConfig {
            sizes,
            q: 25,
            rho,
            omega,
            scheme: Scheme::LastEigen,
            ..SimConfig::default()
        }
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::invalid("need at least two groups"));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(Error::invalid(format!("group size {n} is below 2")));
        }
        if self.q.is_multiple_of(2) || self.q < 3 {
            return Err(Error::invalid(format!("q must be odd and at least 3, got {}", self.q)));
        }
        if self.j < 2 {
            return Err(Error::invalid("J must be at least 2"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.a_var > 0.0) {
            return Err(Error::invalid("a_var must be positive"));
        }
        let finite = [self.omega, self.delta_mean]
            .iter()
            .chain(&self.u)
            .chain(&self.c1)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite configuration value"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.j, 0.0, 1.0)
    }

    /// Variance components of group `i` (1-based).
    pub fn eigenvalues(&self, i: usize) -> Vec<f64> {
        match self.scheme {
            Scheme::ShiftBasis => (0..self.q).map(|r| self.a_var * self.rho.powi(r as i32)).collect(),
            Scheme::LastEigen => {
                let mut lam: Vec<f64> = (0..self.q).map(|r| self.rho.powi(r as i32)).collect();
                let last = lam[self.q - 1].sqrt() + (i - 1) as f64 * self.omega;
                lam[self.q - 1] = last * last;
                lam
            }
        }
    }

    /// Basis `Ψ_i` of group `i` (1-based) on `grid`.
    pub fn basis(&self, i: usize, grid: &Grid) -> Result<DMatrix<f64>> {
        let phi = fourier_basis(self.q, grid)?;
        Ok(match self.scheme {
            Scheme::ShiftBasis => group_basis(&phi, i, self.omega),
            Scheme::LastEigen => phi,
        })
    }

    /// Mean curve of group `i` (1-based).
    pub fn mean(&self, i: usize, grid: &Grid) -> DVector<f64> {
        match self.scheme {
            Scheme::ShiftBasis => {
                let step = (i - 1) as f64 * self.delta_mean;
                let c: [f64; 4] = std::array::from_fn(|m| self.c1[m] + step * self.u[m]);
                mean_function(&c, grid)
            }
            Scheme::LastEigen => DVector::zeros(grid.len()),
        }
    }
}

/// Rows `1, √2 sin(2πrt), √2 cos(2πrt), …` for `r = 1..(q−1)/2`.
pub fn fourier_basis(q: usize, grid: &Grid) -> Result<DMatrix<f64>> {
    if q.is_multiple_of(2) {
        return Err(Error::invalid(format!("q must be odd, got {q}")));
    }
    let pts = grid.points();
    Ok(DMatrix::from_fn(q, pts.len(), |row, col| {
        let t = pts[col];
        if row == 0 {
            return 1.0;
        }
        let r = ((row + 1) / 2) as f64;
        let arg = 2.0 * PI * r * t;
        if row % 2 == 1 {
            SQRT_2 * arg.sin()
        } else {
            SQRT_2 * arg.cos()
        }
    }))
}

/// `phi` with its second row shifted by `(i − 1) ω`.
pub fn group_basis(phi: &DMatrix<f64>, i: usize, omega: f64) -> DMatrix<f64> {
    let mut psi = phi.clone();
    let shift = i.saturating_sub(1) as f64 * omega;
    if shift != 0.0 && psi.nrows() > 1 {
        psi.row_mut(1).add_scalar_mut(shift);
    }
    psi
}

pub fn mean_function(c: &[f64; 4], grid: &Grid) -> DVector<f64> {
    DVector::from_iterator(
        grid.len(),
        grid.points().iter().map(|&t| c[0] + t * (c[1] + t * (c[2] + t * c[3]))),
    )
}

/// Mean-zero, unit-variance innovations.
pub fn draw_innovations<R: Rng + ?Sized>(dist: Dist, count: usize, rng: &mut R) -> Vec<f64> {
    match dist {
        Dist::Gaussian => (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        Dist::T4 => {
            let chi = ChiSquared::<f64>::new(4.0).expect("valid df");
            (0..count)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    let v: f64 = chi.sample(rng);
                    z / (v / 4.0).sqrt() / SQRT_2
                })
                .collect()
        }
    }
}

pub fn generate_dataset(cfg: &SimConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut groups = Vec::with_capacity(cfg.k());
    for (gi, &n) in cfg.sizes.iter().enumerate() {
        let i = gi + 1;
        let sd: Vec<f64> = cfg.eigenvalues(i).iter().map(|l| l.sqrt()).collect();
        let psi = cfg.basis(i, &grid)?;
        let mean = cfg.mean(i, &grid);
        let mut scores = DMatrix::zeros(n, cfg.q);
        for subj in 0..n {
            let mut rng = seed::stream(seed, &[gi as u64, subj as u64]);
            let z = draw_innovations(cfg.dist, cfg.q, &mut rng);
            for (r, zr) in z.into_iter().enumerate() {
                scores[(subj, r)] = sd[r] * zr;
            }
        }
        let mut curves = scores * psi;
        for mut row in curves.row_iter_mut() {
            row += mean.transpose();
        }
        groups.push(GroupData::new(format!("g{i}"), curves)?);
    }
    Dataset::new(grid, groups)
}

/// Population covariance of group `i` (1-based) on the configured grid.
pub fn analytic_group_cov(cfg: &SimConfig, i: usize) -> Result<CovSurface> {
    cfg.validate()?;
    if i == 0 || i > cfg.k() {
        return Err(Error::invalid(format!("group index {i} outside 1..={}", cfg.k())));
    }
    let grid = cfg.grid()?;
    let psi = cfg.basis(i, &grid)?;
    let lam = DVector::from_vec(cfg.eigenvalues(i));
    let scaled = DMatrix::from_diagonal(&lam) * &psi;
    let mut cov = psi.tr_mul(&scaled);
    crate::estim::symmetrize(&mut cov);
    CovSurface::new(grid, cov)
}
