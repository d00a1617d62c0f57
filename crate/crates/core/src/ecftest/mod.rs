//! The L²-norm statistic `T_n` and its three calibrations.
//!
//! * Welch–Satterthwaite: `T_n ≈ β χ²_d` with `β = tr(ϖ^⊗2)/tr(ϖ)`,
//!   `κ = tr²(ϖ)/tr(ϖ^⊗2)`, `d = (k − 1)κ`, where the traces of the Gaussian
//!   kernel `ϖ` come from the pooled covariance either as plug-in values
//!   ([`WsMethod::Naive`]) or bias-reduced ([`WsMethod::BiasReduced`]).
//! * Random permutation of the pooled residual curves ([`permutation`]).
//!
//! [`Analysis`] computes the per-dataset quantities once so the three
//! calibrations can share them.

pub mod chi2;
pub mod permutation;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estim::{self, TraceSet};
use crate::grid::{CovSurface, Dataset, Grid};

pub use chi2::{chi2_cdf, chi2_quantile, chi2_sf};
pub use permutation::{PermutationEngine, PermutationOptions, PermutationRule};

/// Which trace estimates feed the Welch–Satterthwaite parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsMethod {
    Naive,
    BiasReduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Naive,
    BiasReduced,
    Permutation,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::Naive => "naive",
            TestMethod::BiasReduced => "bias_reduced",
            TestMethod::Permutation => "permutation",
        }
    }
}

impl From<WsMethod> for TestMethod {
    fn from(m: WsMethod) -> Self {
        match m {
            WsMethod::Naive => TestMethod::Naive,
            WsMethod::BiasReduced => TestMethod::BiasReduced,
        }
    }
}

/// Parameters of the `β χ²_d` approximation and the traces they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WsParams {
    pub beta: f64,
    pub kappa: f64,
    pub d: f64,
    pub tr_omega: f64,
    pub tr_omega2: f64,
    pub method: WsMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub method: TestMethod,
    pub ws: Option<WsParams>,
    /// `β χ²_d(α)` for the WS methods, the permutation order statistic otherwise.
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub permutations: Option<usize>,
    pub seed: Option<u64>,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("significance level {alpha} must lie in (0, 1)")))
    }
}

/// `SSB_n(s,t) = Σ_i (n_i − 1)[γ̂_i(s,t) − γ̂(s,t)]²`.
pub fn ssb_surface(covs: &[CovSurface], pooled: &CovSurface, sizes: &[usize]) -> Result<DMatrix<f64>> {
    if covs.len() != sizes.len() || covs.len() < 2 {
        return Err(Error::invalid(format!(
            "need matching lists of at least 2 surfaces and sizes, got {} and {}",
            covs.len(),
            sizes.len()
        )));
    }
    if covs.iter().any(|c| c.grid() != pooled.grid()) {
        return Err(Error::invalid("covariance surfaces live on different grids"));
    }
    let j = pooled.grid().len();
    let mut ssb = DMatrix::zeros(j, j);
    for (c, &n) in covs.iter().zip(sizes) {
        let weight = n.saturating_sub(1) as f64;
        ssb.zip_zip_apply(c.values(), pooled.values(), |acc, g, p| {
            let diff = g - p;
            *acc += weight * diff * diff;
        });
    }
    Ok(ssb)
}

/// `T_n = ∬ SSB_n(s,t) ds dt`.
pub fn tn_statistic(ds: &Dataset) -> Result<f64> {
    let covs = group_covs(ds)?;
    let sizes = ds.sizes();
    let pooled = estim::pooled_cov(&covs, &sizes)?;
    Ok(ds.grid().integrate2(&ssb_surface(&covs, &pooled, &sizes)?))
}

fn group_covs(ds: &Dataset) -> Result<Vec<CovSurface>> {
    ds.groups()
        .iter()
        .map(|g| estim::group_cov(g, ds.grid()))
        .collect()
}

/// Plug-in traces of `ϖ̂`: `(tr²γ̂ + tr γ̂^⊗2, 2 tr²γ̂^⊗2 + 2 tr γ̂^⊗4)`.
pub fn omega_traces_naive(pooled: &CovSurface) -> (f64, f64) {
    omega_traces_naive_from(&TraceSet::of(pooled))
}

fn omega_traces_naive_from(t: &TraceSet) -> (f64, f64) {
    (
        t.tr_gamma * t.tr_gamma + t.tr_gamma2,
        2.0 * t.tr_gamma2 * t.tr_gamma2 + 2.0 * t.tr_gamma4,
    )
}

/// Bias-reduced traces of `ϖ`. The fourth-power trace stays plug-in.
pub fn omega_traces_bias_reduced(pooled: &CovSurface, n: usize, k: usize) -> Result<(f64, f64)> {
    omega_traces_bias_reduced_from(&TraceSet::of(pooled), n, k)
}

fn omega_traces_bias_reduced_from(t: &TraceSet, n: usize, k: usize) -> Result<(f64, f64)> {
    let br = estim::bias_reduced_traces(t.tr_gamma, t.tr_gamma2, n, k)?;
    Ok((
        br.tr2_gamma_hat + br.tr_gamma2_hat,
        2.0 * br.tr_gamma2_hat * br.tr_gamma2_hat + 2.0 * t.tr_gamma4,
    ))
}

/// Moment-matched `β`, `κ` and `d = (k − 1)κ`.
pub fn ws_params(tr_omega: f64, tr_omega2: f64, k: usize, method: WsMethod) -> Result<WsParams> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 groups, got {k}")));
    }
    if !(tr_omega > 0.0 && tr_omega2 > 0.0 && tr_omega.is_finite() && tr_omega2.is_finite()) {
        return Err(Error::DegenerateData(format!(
            "nonpositive kernel traces tr(omega) = {tr_omega}, tr(omega^2) = {tr_omega2}"
        )));
    }
    let beta = tr_omega2 / tr_omega;
    let kappa = tr_omega * tr_omega / tr_omega2;
    Ok(WsParams {
        beta,
        kappa,
        d: (k - 1) as f64 * kappa,
        tr_omega,
        tr_omega2,
        method,
    })
}

/// Per-dataset quantities shared by every calibration of `T_n`.
#[derive(Debug, Clone)]
pub struct Analysis {
    grid: Grid,
    sizes: Vec<usize>,
    covs: Vec<CovSurface>,
    pooled: CovSurface,
    residuals: Vec<DMatrix<f64>>,
    statistic: f64,
    traces: TraceSet,
}

impl Analysis {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let grid = ds.grid().clone();
        let sizes = ds.sizes();
        let residuals: Vec<DMatrix<f64>> = ds.groups().iter().map(estim::residuals).collect();
        let covs: Vec<CovSurface> = residuals
            .iter()
            .zip(&sizes)
            .map(|(r, &n)| estim::cov_from_residuals(r, (n - 1) as f64, &grid))
            .collect();
        let pooled = estim::pooled_cov(&covs, &sizes)?;
        let statistic = grid.integrate2(&ssb_surface(&covs, &pooled, &sizes)?);
        let traces = TraceSet::of(&pooled);
        Ok(Analysis {
            grid,
            sizes,
            covs,
            pooled,
            residuals,
            statistic,
            traces,
        })
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn group_covs(&self) -> &[CovSurface] {
        &self.covs
    }

    pub fn pooled(&self) -> &CovSurface {
        &self.pooled
    }

    pub fn residuals(&self) -> &[DMatrix<f64>] {
        &self.residuals
    }

    pub fn pooled_traces(&self) -> &TraceSet {
        &self.traces
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_size(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn ws_params(&self, method: WsMethod) -> Result<WsParams> {
        let (tr_omega, tr_omega2) = match method {
            WsMethod::Naive => omega_traces_naive_from(&self.traces),
            WsMethod::BiasReduced => {
                omega_traces_bias_reduced_from(&self.traces, self.total_size(), self.k())?
            }
        };
        ws_params(tr_omega, tr_omega2, self.k(), method)
    }

    /// `p = P(χ²_d > T_n/β)`, reject when `p ≤ α`.
    pub fn ws_test(&self, method: WsMethod, alpha: f64) -> Result<TestReport> {
        check_alpha(alpha)?;
        let ws = self.ws_params(method)?;
        let p_value = chi2_sf(self.statistic / ws.beta, ws.d)?;
        let critical_value = ws.beta * chi2_quantile(1.0 - alpha, ws.d)?;
        Ok(TestReport {
            statistic: self.statistic,
            method: method.into(),
            ws: Some(ws),
            critical_value,
            p_value,
            alpha,
            reject: p_value <= alpha,
            permutations: None,
            seed: None,
        })
    }

    pub fn permutation_engine(&self) -> PermutationEngine {
        PermutationEngine::new(&self.residuals, &self.grid)
    }

    pub fn permutation_test(&self, opts: &PermutationOptions) -> Result<TestReport> {
        self.permutation_engine().test(self.statistic, opts)
    }
}

/// Welch–Satterthwaite test at level `alpha`.
pub fn ws_test(ds: &Dataset, method: WsMethod, alpha: f64) -> Result<TestReport> {
    Analysis::new(ds)?.ws_test(method, alpha)
}

/// Random-permutation test with `b` permutations and the quantile rejection
/// rule.
pub fn permutation_test(ds: &Dataset, b: usize, alpha: f64, seed: u64) -> Result<TestReport> {
    Analysis::new(ds)?.permutation_test(&PermutationOptions {
        permutations: b,
        alpha,
        seed,
        rule: PermutationRule::Quantile,
    })
}
