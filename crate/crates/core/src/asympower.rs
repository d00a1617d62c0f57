//! Limit law of `T_n` under local alternatives `γ_i = γ + (n_i − 1)^{-1/2} d_i`
//! and the resulting asymptotic power of the Welch–Satterthwaite test.
//!
//! The limit is `T_1 = Σ_r λ_r A_r + Σ_{r>m} δ²_r` with independent
//! `A_r ~ χ²_{k−1}(δ²_r / λ_r)`, where `λ_r` are the positive eigenvalues of
//! the Gaussian kernel `ϖ` and `δ²_r` the contrast-projected alternative
//! mass on its eigenfunctions.
//!
//! If `γ` has eigenpairs `(μ_i, e_i)` then `ϖ` has eigenvalue `2 μ_i μ_j`
//! (`i ≤ j`) with eigenfunction `e_i ⊗ e_i` or `(e_i ⊗ e_j + e_j ⊗ e_i)/√2`;
//! antisymmetric surfaces lie in its kernel. [`OmegaEigen`] stores the index
//! pairs and builds a surface only on request, since there are `m(m+1)/2` of
//! them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::ecftest::{check_alpha, chi2_quantile};
use crate::error::{Error, Result};
use crate::grid::{CovSurface, Grid};
use crate::seed;

const DRAW_BLOCK: usize = 4096;

/// Eigenpairs of the integral operator with kernel `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEigen {
    /// Descending, all positive.
    pub values: Vec<f64>,
    /// `J × m`; column `i` is `e_i` on the grid, `Σ_j w_j e_i(t_j) e_l(t_j) = δ_il`.
    pub functions: DMatrix<f64>,
}

/// Eigenvalues below `rel_tol · λ_1` are dropped.
pub fn gamma_eigen(s: &CovSurface, rel_tol: f64) -> Result<GammaEigen> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::invalid(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let grid = s.grid();
    let j = grid.len();
    let eig = SymmetricEigen::new(s.weighted_kernel());
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Ok(GammaEigen { values: Vec::new(), functions: DMatrix::zeros(j, 0) });
    }
    let keep: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > rel_tol * top).collect();
    let inv_sw: Vec<f64> = grid.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut functions = DMatrix::zeros(j, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = v.iamax();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..j {
            functions[(r, c)] = sign * v[r] * inv_sw[r];
        }
    }
    Ok(GammaEigen { values: keep.iter().map(|&i| eig.eigenvalues[i]).collect(), functions })
}

/// One eigenpair of `ϖ`, indexed by the generating pair `i ≤ j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaComponent {
    pub value: f64,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaEigen {
    /// Descending by value.
    pub components: Vec<OmegaComponent>,
    basis: DMatrix<f64>,
}

impl OmegaEigen {
    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.value).collect()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `φ_r(s, t)` on the grid.
    pub fn function(&self, r: usize) -> DMatrix<f64> {
        let OmegaComponent { i, j, .. } = self.components[r];
        let ei = self.basis.column(i);
        let ej = self.basis.column(j);
        if i == j {
            ei * ei.transpose()
        } else {
            (ei * ej.transpose() + ej * ei.transpose()) * FRAC_1_SQRT_2
        }
    }
}

pub fn omega_eigen_gaussian(gamma: &GammaEigen) -> OmegaEigen {
    let m = gamma.values.len();
    let mut components = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in i..m {
            components.push(OmegaComponent { value: 2.0 * gamma.values[i] * gamma.values[j], i, j });
        }
    }
    components.sort_by(|a, b| b.value.total_cmp(&a.value).then((a.i, a.j).cmp(&(b.i, b.j))));
    OmegaEigen { components, basis: gamma.functions.clone() }
}

fn check_tau(tau: &[f64]) -> Result<()> {
    if tau.len() < 2 {
        return Err(Error::invalid("need at least two group fractions"));
    }
    if tau.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::invalid("group fractions must lie in (0, 1)"));
    }
    let sum: f64 = tau.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("group fractions sum to {sum}, not 1")));
    }
    Ok(())
}

/// `W = I − b bᵀ` with `b = (√τ_i)`, and an orthogonal `U` whose last column
/// is `b` (a Householder reflection sending `e_k` to `b`).
pub fn contrast_matrix(tau: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_tau(tau)?;
    let k = tau.len();
    let b = DVector::from_iterator(k, tau.iter().map(|t| t.sqrt()));
    let w = DMatrix::identity(k, k) - &b * b.transpose();
    let mut v = -b.clone();
    v[k - 1] += 1.0;
    let u = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    Ok((w, u))
}

/// Local-alternative configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpec {
    pub gamma: CovSurface,
    pub d_surfaces: Vec<CovSurface>,
    pub tau: Vec<f64>,
    pub alpha: f64,
    pub mc_draws: usize,
    pub eigen_rel_tol: f64,
}

impl PowerSpec {
    pub fn k(&self) -> usize {
        self.tau.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(&self.tau)?;
        check_alpha(self.alpha)?;
        if self.d_surfaces.len() != self.tau.len() {
            return Err(Error::invalid(format!(
                "{} alternative surfaces for {} groups",
                self.d_surfaces.len(),
                self.tau.len()
            )));
        }
        if self.d_surfaces.iter().any(|d| d.grid() != self.gamma.grid()) {
            return Err(Error::invalid("alternative surfaces live on a different grid"));
        }
        if self.mc_draws < 1000 {
            return Err(Error::invalid(format!("mc_draws must be at least 1000, got {}", self.mc_draws)));
        }
        if !(self.eigen_rel_tol > 0.0 && self.eigen_rel_tol < 1.0) {
            return Err(Error::invalid("eigen_rel_tol must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaProjections {
    /// Aligned with the `ϖ` components.
    pub per_component: Vec<f64>,
    /// Mass of the contrasts outside the retained eigenfunctions.
    pub residual: f64,
}

/// `δ²_r = ‖∬ d̃(s,t) φ_r(s,t) ds dt‖²` with `d̃ = [I_{k−1}, 0] Uᵀ d`.
pub fn delta_projections(
    d_surfaces: &[CovSurface],
    u: &DMatrix<f64>,
    omega: &OmegaEigen,
    grid: &Grid,
) -> DeltaProjections {
    let k = d_surfaces.len();
    let j = grid.len();
    let w = grid.weights();
    let basis = &omega.basis;
    // diag(w) E
    let mut we = basis.clone();
    for (r, wr) in w.iter().enumerate() {
        we.row_mut(r).scale_mut(*wr);
    }
    let mut per_component = vec![0.0; omega.len()];
    let mut total = 0.0;
    for c in 0..k.saturating_sub(1) {
        let mut dc = DMatrix::zeros(j, j);
        for (i, d) in d_surfaces.iter().enumerate() {
            dc += d.values() * u[(i, c)];
        }
        total += grid.integrate2(&dc.map(|v| v * v));
        let p = we.tr_mul(&dc) * &we;
        for (slot, comp) in per_component.iter_mut().zip(&omega.components) {
            let proj = if comp.i == comp.j {
                p[(comp.i, comp.i)]
            } else {
                (p[(comp.i, comp.j)] + p[(comp.j, comp.i)]) * FRAC_1_SQRT_2
            };
            *slot += proj * proj;
        }
    }
    let explained: f64 = per_component.iter().sum();
    DeltaProjections { per_component, residual: (total - explained).max(0.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub omega_eigenvalues: Vec<f64>,
    pub delta_sq: Vec<f64>,
    pub delta_sq_residual: f64,
    pub beta: f64,
    pub kappa: f64,
    pub d: f64,
    pub critical_value: f64,
    pub power: f64,
    pub mc_se: f64,
    pub mc_draws: usize,
}

/// `χ²_{df}(ncp)` as `(Z + √ncp)² + χ²_{df−1}`.
#[derive(Debug, Clone, Copy)]
pub struct NoncentralChi2 {
    shift: f64,
    rest: Option<Gamma<f64>>,
}

impl NoncentralChi2 {
    pub fn new(df: usize, ncp: f64) -> Result<Self> {
        if df < 1 || !(ncp >= 0.0) || !ncp.is_finite() {
            return Err(Error::invalid(format!("bad noncentral chi-square ({df}, {ncp})")));
        }
        let rest = (df > 1).then(|| Gamma::new((df - 1) as f64 / 2.0, 2.0).expect("positive shape"));
        Ok(NoncentralChi2 { shift: ncp.sqrt(), rest })
    }
}

impl Distribution<f64> for NoncentralChi2 {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let head = (z + self.shift) * (z + self.shift);
        head + self.rest.as_ref().map_or(0.0, |g| g.sample(rng))
    }
}

/// Draws of `T_1`; block `b` of 4096 uses stream `(seed, [b])`.
pub fn sample_limit(
    lambdas: &[f64],
    delta_sq: &[f64],
    residual: f64,
    k: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let laws: Vec<NoncentralChi2> = lambdas
        .iter()
        .zip(delta_sq)
        .map(|(&l, &d)| NoncentralChi2::new(k - 1, d / l))
        .collect::<Result<_>>()?;
    let blocks = draws.div_ceil(DRAW_BLOCK);
    Ok((0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = seed::stream(seed, &[b as u64]);
            let len = DRAW_BLOCK.min(draws - b * DRAW_BLOCK);
            let laws = &laws;
            (0..len)
                .map(move |_| {
                    residual
                        + lambdas.iter().zip(laws).map(|(l, a)| l * a.sample(&mut rng)).sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect())
}

pub fn asymptotic_power(spec: &PowerSpec, seed: u64) -> Result<PowerReport> {
    spec.validate()?;
    let gamma = gamma_eigen(&spec.gamma, spec.eigen_rel_tol)?;
    if gamma.values.is_empty() {
        return Err(Error::DegenerateData("covariance has no positive eigenvalue".into()));
    }
    let omega = omega_eigen_gaussian(&gamma);
    let lambdas = omega.values();
    let (_, u) = contrast_matrix(&spec.tau)?;
    let delta = delta_projections(&spec.d_surfaces, &u, &omega, spec.gamma.grid());

    let tr: f64 = lambdas.iter().sum();
    let tr2: f64 = lambdas.iter().map(|l| l * l).sum();
    let beta = tr2 / tr;
    let kappa = tr * tr / tr2;
    let d = (spec.k() - 1) as f64 * kappa;
    let critical_value = beta * chi2_quantile(1.0 - spec.alpha, d)?;

    let draws = sample_limit(&lambdas, &delta.per_component, delta.residual, spec.k(), spec.mc_draws, seed)?;
    let hits = draws.iter().filter(|&&t| t > critical_value).count();
    let power = hits as f64 / spec.mc_draws as f64;
    Ok(PowerReport {
        omega_eigenvalues: lambdas,
        delta_sq: delta.per_component,
        delta_sq_residual: delta.residual,
        beta,
        kappa,
        d,
        critical_value,
        power,
        mc_se: (power * (1.0 - power) / spec.mc_draws as f64).sqrt(),
        mc_draws: spec.mc_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Kernel with operator eigenvalues `vals` and weighted-orthonormal
    /// eigenfunctions built from an orthonormal frame of `R^J`.
    fn kernel_with(grid: &Grid, vals: &[f64], seed: u64) -> (CovSurface, DMatrix<f64>) {
        let j = grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(j, vals.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = raw.qr().q();
        let inv_sw: Vec<f64> = grid.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
        let e = DMatrix::from_fn(j, vals.len(), |r, c| q[(r, c)] * inv_sw[r]);
        let s = &e * DMatrix::from_diagonal(&DVector::from_column_slice(vals)) * e.transpose();
        let s = (&s + s.transpose()) * 0.5;
        (CovSurface::new(grid.clone(), s).unwrap(), e)
    }

    fn spec_with(gamma: CovSurface, d: Vec<CovSurface>, tau: Vec<f64>, draws: usize) -> PowerSpec {
        PowerSpec { gamma, d_surfaces: d, tau, alpha: 0.05, mc_draws: draws, eigen_rel_tol: 1e-12 }
    }

    #[test]
    fn constant_kernel() {
        let g = Grid::uniform(9, 0.0, 1.0).unwrap();
        let e = gamma_eigen(&CovSurface::from_fn(g.clone(), |_, _| 1.0).unwrap(), 1e-12).unwrap();
        assert_eq!(e.values.len(), 1);
        assert_relative_eq!(e.values[0], 1.0, max_relative = 1e-12);
        for r in 0..9 {
            assert_relative_eq!(e.functions[(r, 0)], 1.0, max_relative = 1e-12);
        }
        let z = gamma_eigen(&CovSurface::zeros(g), 1e-12).unwrap();
        assert!(z.values.is_empty());
    }

    #[test]
    fn recovers_constructed_spectrum() {
        let g = Grid::uniform(15, 0.0, 2.0).unwrap();
        let (s, _) = kernel_with(&g, &[2.0, 1.0], 3);
        let e = gamma_eigen(&s, 1e-12).unwrap();
        assert_eq!(e.values.len(), 2);
        assert_relative_eq!(e.values[0], 2.0, max_relative = 1e-8);
        assert_relative_eq!(e.values[1], 1.0, max_relative = 1e-8);
        for a in 0..2 {
            for b in 0..2 {
                let ip = g.inner(e.functions.column(a).as_slice(), e.functions.column(b).as_slice());
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        assert!(gamma_eigen(&s, 0.0).is_err());
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let g = Grid::uniform(3, 0.0, 1.0).unwrap();
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(CovSurface::new(g, m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn omega_closed_form() {
        let gamma = GammaEigen { values: vec![2.0, 1.0], functions: DMatrix::identity(2, 2) };
        let om = omega_eigen_gaussian(&gamma);
        assert_eq!(om.values(), vec![8.0, 4.0, 2.0]);
        assert_eq!(om.values().iter().sum::<f64>(), 9.0 + 5.0);
        let one = omega_eigen_gaussian(&GammaEigen { values: vec![1.5], functions: DMatrix::identity(1, 1) });
        assert_eq!(one.values(), vec![4.5]);
    }

    #[test]
    fn omega_functions_orthonormal() {
        let g = Grid::uniform(12, 0.0, 1.0).unwrap();
        let (s, _) = kernel_with(&g, &[3.0, 2.0, 0.5], 8);
        let om = omega_eigen_gaussian(&gamma_eigen(&s, 1e-12).unwrap());
        assert_eq!(om.len(), 6);
        for a in 0..6 {
            for b in 0..6 {
                let ip = g.integrate2(&om.function(a).component_mul(&om.function(b)));
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10, "({a},{b}) {ip}");
            }
        }
    }

    #[test]
    fn contrast_properties() {
        let (w, u) = contrast_matrix(&[0.5, 0.5]).unwrap();
        assert_relative_eq!(w, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]), epsilon = 1e-15);
        for tau in [vec![0.2, 0.3, 0.5], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], vec![0.1, 0.2, 0.3, 0.15, 0.25]] {
            let k = tau.len();
            let (w, u) = contrast_matrix(&tau).unwrap();
            let b = DVector::from_iterator(k, tau.iter().map(|t| t.sqrt()));
            assert!((&w * &w - &w).amax() < 1e-12);
            assert!((&w * &b).amax() < 1e-12);
            assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-12);
            assert!((u.column(k - 1) - &b).amax() < 1e-12);
            assert_relative_eq!(w.trace(), (k - 1) as f64, epsilon = 1e-12);
            // the first k − 1 columns of U span the range of W
            let head = u.columns(0, k - 1);
            assert!((&head * head.transpose() - &w).amax() < 1e-12);
        }
        assert!(contrast_matrix(&[0.5, 0.6]).is_err());
        assert!(contrast_matrix(&[1.0]).is_err());
        let _ = u;
    }

    fn top_function_setup() -> (Grid, CovSurface, OmegaEigen) {
        let g = Grid::uniform(10, 0.0, 1.0).unwrap();
        let (s, _) = kernel_with(&g, &[2.0, 1.0, 0.3], 5);
        let om = omega_eigen_gaussian(&gamma_eigen(&s, 1e-12).unwrap());
        (g, s, om)
    }

    #[test]
    fn projections_of_aligned_alternative() {
        let (g, _, om) = top_function_setup();
        let phi1 = om.function(0);
        let c = [1.0, -2.0, 0.5];
        let tau = [0.3, 0.3, 0.4];
        let d: Vec<CovSurface> = c.iter().map(|ci| CovSurface::new(g.clone(), &phi1 * *ci).unwrap()).collect();
        let (w, u) = contrast_matrix(&tau).unwrap();
        let delta = delta_projections(&d, &u, &om, &g);
        let cv = DVector::from_column_slice(&c);
        let expect = (cv.transpose() * &w * &cv)[(0, 0)];
        assert_relative_eq!(delta.per_component[0], expect, max_relative = 1e-10);
        assert!(delta.per_component[1..].iter().all(|&v| v.abs() < 1e-10));
        assert!(delta.residual < 1e-10);

        let zero: Vec<CovSurface> = (0..3).map(|_| CovSurface::zeros(g.clone())).collect();
        let dz = delta_projections(&zero, &u, &om, &g);
        assert!(dz.per_component.iter().all(|&v| v == 0.0) && dz.residual == 0.0);
    }

    #[test]
    fn common_alternative_is_annihilated() {
        let (g, _, om) = top_function_setup();
        let common = CovSurface::from_fn(g.clone(), |s, t| (s * t).cos() + s + t).unwrap();
        let tau = [0.25, 0.35, 0.4];
        let (_, u) = contrast_matrix(&tau).unwrap();
        // equal local deviations γ_i − γ ∝ (n_i − 1)^{-1/2} d_i show up as d_i ∝ √τ_i
        let d: Vec<CovSurface> = tau
            .iter()
            .map(|t| CovSurface::new(g.clone(), common.values() * t.sqrt()).unwrap())
            .collect();
        let delta = delta_projections(&d, &u, &om, &g);
        assert!(delta.per_component.iter().all(|&v| v < 1e-20));
        assert!(delta.residual < 1e-12);
    }

    #[test]
    fn relabeling_symmetry() {
        let (g, _, om) = top_function_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d: Vec<CovSurface> = (0..3)
            .map(|_| {
                let m = DMatrix::from_fn(10, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
                CovSurface::new(g.clone(), (&m + m.transpose()) * 0.5).unwrap()
            })
            .collect();
        let tau = [0.2, 0.5, 0.3];
        let base = delta_projections(&d, &contrast_matrix(&tau).unwrap().1, &om, &g);
        let perm = [2, 0, 1];
        let d2: Vec<CovSurface> = perm.iter().map(|&p| d[p].clone()).collect();
        let tau2: Vec<f64> = perm.iter().map(|&p| tau[p]).collect();
        let other = delta_projections(&d2, &contrast_matrix(&tau2).unwrap().1, &om, &g);
        for (a, b) in base.per_component.iter().zip(&other.per_component) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
        assert_relative_eq!(base.residual, other.residual, max_relative = 1e-8, epsilon = 1e-10);
    }

    #[test]
    fn noncentral_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (df, ncp) in [(1usize, 0.0), (2, 3.5), (4, 10.0)] {
            let law = NoncentralChi2::new(df, ncp).unwrap();
            let n = 100_000;
            let x: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            let var_true = 2.0 * (df as f64 + 2.0 * ncp);
            let target = df as f64 + ncp;
            assert!((mean - target).abs() < 3.0 * (var_true / n as f64).sqrt(), "{df} {ncp} {mean}");
        }
    }

    #[test]
    fn rank_one_null_power_is_alpha() {
        let g = Grid::uniform(8, 0.0, 1.0).unwrap();
        let (s, _) = kernel_with(&g, &[1.3], 1);
        let d = vec![CovSurface::zeros(g.clone()), CovSurface::zeros(g.clone())];
        let draws = 100_000;
        let rep = asymptotic_power(&spec_with(s, d, vec![0.4, 0.6], draws), 7).unwrap();
        assert_eq!(rep.omega_eigenvalues.len(), 1);
        assert_relative_eq!(rep.kappa, 1.0, max_relative = 1e-12);
        let se = (0.05 * 0.95 / draws as f64).sqrt();
        assert!((rep.power - 0.05).abs() <= 2.0 * se, "{}", rep.power);
    }

    #[test]
    fn power_grows_with_signal() {
        let g = Grid::uniform(10, 0.0, 1.0).unwrap();
        let (s, e) = kernel_with(&g, &[1.0, 0.5, 0.2], 4);
        let e0 = e.column(0);
        let dir = &e0 * e0.transpose();
        let make = |scale: f64| {
            vec![
                CovSurface::new(g.clone(), &dir * (2.0 * scale)).unwrap(),
                CovSurface::new(g.clone(), &dir * (-1.0 * scale)).unwrap(),
                CovSurface::zeros(g.clone()),
            ]
        };
        let mut last = 0.0;
        for scale in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let rep = asymptotic_power(&spec_with(s.clone(), make(scale), vec![0.3, 0.3, 0.4], 20_000), 5).unwrap();
            assert!(rep.power >= last - 2.0 * rep.mc_se, "{scale}: {} < {last}", rep.power);
            last = rep.power;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn large_signal_is_nearly_normal() {
        let g = Grid::uniform(10, 0.0, 1.0).unwrap();
        let (s, e) = kernel_with(&g, &[0.5, 0.3, 0.15], 6);
        let e0 = e.column(0);
        let dir = &e0 * e0.transpose();
        // δ²_1 = cᵀWc = 2c² = 400 with τ = (1/2, 1/2)
        let c = 10.0 * std::f64::consts::SQRT_2;
        let d = vec![
            CovSurface::new(g.clone(), &dir * c).unwrap(),
            CovSurface::new(g.clone(), &dir * -c).unwrap(),
        ];
        let gamma = gamma_eigen(&s, 1e-12).unwrap();
        let om = omega_eigen_gaussian(&gamma);
        let (_, u) = contrast_matrix(&[0.5, 0.5]).unwrap();
        let delta = delta_projections(&d, &u, &om, &g);
        assert_relative_eq!(delta.per_component.iter().cloned().fold(0.0, f64::max), 400.0, max_relative = 1e-9);
        let x = sample_limit(&om.values(), &delta.per_component, delta.residual, 2, 100_000, 3).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let skew = m3 / m2.powf(1.5);
        assert!(skew.abs() <= 0.2, "{skew}");
    }

    #[test]
    fn degenerate_and_invalid_specs() {
        let g = Grid::uniform(5, 0.0, 1.0).unwrap();
        let z = || CovSurface::zeros(g.clone());
        let err = asymptotic_power(&spec_with(z(), vec![z(), z()], vec![0.5, 0.5], 1000), 0).unwrap_err();
        assert!(err.is_degenerate());
        let one = CovSurface::from_fn(g.clone(), |_, _| 1.0).unwrap();
        assert!(asymptotic_power(&spec_with(one.clone(), vec![z(), z()], vec![0.5, 0.5], 999), 0).is_err());
        assert!(asymptotic_power(&spec_with(one.clone(), vec![z()], vec![0.5, 0.5], 1000), 0).is_err());
        assert!(asymptotic_power(&spec_with(one, vec![z(), z()], vec![0.5, 0.4], 1000), 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = Grid::uniform(6, 0.0, 1.0).unwrap();
        let (s, _) = kernel_with(&g, &[1.0, 0.4], 2);
        let spec = spec_with(s, vec![CovSurface::zeros(g.clone()), CovSurface::zeros(g.clone())], vec![0.5, 0.5], 9000);
        let a = asymptotic_power(&spec, 1).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let b = pool.install(|| asymptotic_power(&spec, 1).unwrap());
        assert_eq!(a, b);
    }
}
