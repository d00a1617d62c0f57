//! Grid and dataset model.
//!
//! A [`Grid`] carries design points together with quadrature weights; every
//! integral in the crate is a weighted sum over these weights, so single,
//! double and quadruple integrals all use the same rule.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Common design points `t_1 < … < t_J` with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// `J` equally spaced points on `[a, b]` with trapezoid weights
    /// `Δ/2, Δ, …, Δ, Δ/2`, `Δ = (b − a)/(J − 1)`.
    pub fn uniform(j: usize, a: f64, b: f64) -> Result<Self> {
        if j < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {j}")));
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("grid interval [{a}, {b}] is empty or not finite")));
        }
        let span = b - a;
        let delta = span / (j - 1) as f64;
        let mut points: Vec<f64> = (0..j).map(|i| a + span * i as f64 / (j - 1) as f64).collect();
        points[j - 1] = b;
        let mut weights = vec![delta; j];
        weights[0] = 0.5 * delta;
        weights[j - 1] = 0.5 * delta;
        Ok(Grid { points, weights })
    }

    /// Trapezoid weights on arbitrary strictly increasing points.
    pub fn trapezoid(points: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        let j = points.len();
        let mut weights = vec![0.0; j];
        weights[0] = 0.5 * (points[1] - points[0]);
        weights[j - 1] = 0.5 * (points[j - 1] - points[j - 2]);
        for i in 1..j - 1 {
            weights[i] = 0.5 * (points[i + 1] - points[i - 1]);
        }
        Ok(Grid { points, weights })
    }

    /// Caller-supplied quadrature weights.
    pub fn with_weights(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_points(&points)?;
        if weights.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("quadrature weight {w} is not positive")));
        }
        Ok(Grid { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `[a, b]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.points[0], self.points[self.points.len() - 1])
    }

    /// `∫ f(t) dt ≈ Σ_j w_j f(t_j)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// `∬ f(s,t) ds dt ≈ Σ_{j,l} w_j w_l F_jl`.
    pub fn integrate2(&self, values: &DMatrix<f64>) -> f64 {
        debug_assert_eq!(values.shape(), (self.len(), self.len()));
        let w = &self.weights;
        values
            .column_iter()
            .zip(w)
            .map(|(col, wl)| wl * col.iter().zip(w).map(|(f, wj)| f * wj).sum::<f64>())
            .sum()
    }

    /// `Σ_j w_j f(t_j) g(t_j)`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }
}

fn check_points(points: &[f64]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "grid needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid points must be finite"));
    }
    if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "grid points must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// One functional sample: an `n_i × J` matrix, one curve per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    label: String,
    curves: DMatrix<f64>,
}

impl GroupData {
    pub fn new(label: impl Into<String>, curves: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        if curves.nrows() < 2 {
            return Err(Error::InsufficientSample {
                group: label,
                size: curves.nrows(),
            });
        }
        if curves.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("group `{label}` contains non-finite values")));
        }
        Ok(GroupData { label, curves })
    }

    /// Build from row vectors; all rows must have the same length.
    pub fn from_rows(label: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let label = label.into();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::invalid(format!("group `{label}` has ragged rows")));
        }
        let curves = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        GroupData::new(label, curves)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn size(&self) -> usize {
        self.curves.nrows()
    }

    /// Multiply every curve by `c`.
    pub fn scaled(&self, c: f64) -> GroupData {
        GroupData {
            label: self.label.clone(),
            curves: &self.curves * c,
        }
    }
}

/// `k ≥ 2` groups sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: Grid,
    groups: Vec<GroupData>,
}

impl Dataset {
    pub fn new(grid: Grid, groups: Vec<GroupData>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        for g in &groups {
            if g.curves.ncols() != grid.len() {
                return Err(Error::invalid(format!(
                    "group `{}` has {} columns but the grid has {} points",
                    g.label,
                    g.curves.ncols(),
                    grid.len()
                )));
            }
        }
        Ok(Dataset { grid, groups })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(GroupData::size).collect()
    }

    /// Total sample size `n = Σ n_i`.
    pub fn total_size(&self) -> usize {
        self.groups.iter().map(GroupData::size).sum()
    }

    pub fn scaled(&self, c: f64) -> Dataset {
        Dataset {
            grid: self.grid.clone(),
            groups: self.groups.iter().map(|g| g.scaled(c)).collect(),
        }
    }

    pub fn into_parts(self) -> (Grid, Vec<GroupData>) {
        (self.grid, self.groups)
    }
}

/// A symmetric `J × J` discretization of a covariance function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSurface {
    grid: Grid,
    values: DMatrix<f64>,
}

impl CovSurface {
    /// Rejects non-square or asymmetric input
    /// (`|G_jl − G_lj| > 1e−12 · (1 + max|G|)`).
    pub fn new(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        let j = grid.len();
        if values.shape() != (j, j) {
            return Err(Error::invalid(format!(
                "surface is {}x{} but the grid has {j} points",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("surface contains non-finite values"));
        }
        let tol = 1e-12 * (1.0 + values.amax());
        for c in 0..j {
            for r in 0..c {
                if (values[(r, c)] - values[(c, r)]).abs() > tol {
                    return Err(Error::invalid(format!(
                        "surface is not symmetric at ({r}, {c})"
                    )));
                }
            }
        }
        Ok(CovSurface { grid, values })
    }

    /// Trusted constructor for surfaces symmetric by construction.
    pub(crate) fn from_symmetric(grid: Grid, values: DMatrix<f64>) -> Self {
        debug_assert_eq!(values.shape(), (grid.len(), grid.len()));
        CovSurface { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        let j = grid.len();
        CovSurface {
            grid,
            values: DMatrix::zeros(j, j),
        }
    }

    /// Evaluate a kernel `f(s, t)` on the grid; the result is symmetrized.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let t = grid.points().to_vec();
        let raw = DMatrix::from_fn(t.len(), t.len(), |i, j| f(t[i], t[j]));
        let sym = (&raw + raw.transpose()) * 0.5;
        CovSurface::new(grid, sym)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// `K = diag(√w) · G · diag(√w)`: the symmetric matrix whose spectrum is
    /// that of the discretized integral operator with this kernel.
    pub fn weighted_kernel(&self) -> DMatrix<f64> {
        let sw: Vec<f64> = self.grid.weights().iter().map(|w| w.sqrt()).collect();
        let mut k = self.values.clone();
        for c in 0..k.ncols() {
            for r in 0..k.nrows() {
                k[(r, c)] *= sw[r] * sw[c];
            }
        }
        k
    }
}
