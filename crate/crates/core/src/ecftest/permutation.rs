//! Random-permutation calibration of `T_n`.
//!
//! The pooled residual curves `v̂_1 … v̂_n` are shuffled and split back into
//! groups of the original sizes; each permuted group covariance is
//! `γ̂*_i = (n_i − 1)^{-1} Σ_j v̂*_ij(s) v̂*_ij(t)`, deliberately without
//! re-centering, and the pooled `γ̂*` therefore never changes. Expanding
//! `Σ (n_i − 1)‖γ̂*_i − γ̂*‖²` then gives
//!
//! ```text
//! T*_n = Σ_i S_i / (n_i − 1) − S / (n − k),   S_i = Σ_{a,b ∈ group i} ⟨v̂_a, v̂_b⟩²
//! ```
//!
//! with `⟨·,·⟩` the quadrature inner product and `S` the same sum over all
//! pairs. The engine precomputes the squared Gram matrix once, after which a
//! permutation costs `Σ n_i²` lookups instead of `n J²` flops.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, TestMethod, TestReport};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed;

/// How the permutation test turns `{T*_b}` into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationRule {
    /// Reject when `T_n` exceeds the `⌈(1 − α)B⌉`-th order statistic.
    #[default]
    Quantile,
    /// Reject when `(1 + #{T*_b ≥ T_n}) / (B + 1) ≤ α`.
    PValue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions {
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rule: PermutationRule,
}

#[derive(Debug, Clone)]
pub struct PermutationEngine {
    n: usize,
    sizes: Vec<usize>,
    /// Row-major `n × n`, entry `(a, b)` is `⟨v̂_a, v̂_b⟩²`.
    sq_gram: Vec<f64>,
    pooled_term: f64,
}

impl PermutationEngine {
    /// `residuals[i]` is the `n_i × J` residual matrix of group `i`.
    pub fn new(residuals: &[DMatrix<f64>], grid: &Grid) -> Self {
        let sizes: Vec<usize> = residuals.iter().map(|r| r.nrows()).collect();
        let n: usize = sizes.iter().sum();
        let j = grid.len();
        let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();

        // Stack the weighted residuals as columns: J × n.
        let mut stacked = DMatrix::zeros(j, n);
        let mut col = 0;
        for r in residuals {
            for row in r.row_iter() {
                for (t, v) in row.iter().enumerate() {
                    stacked[(t, col)] = v * sw[t];
                }
                col += 1;
            }
        }
        let gram = stacked.tr_mul(&stacked);
        let mut sq_gram = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let g = 0.5 * (gram[(a, b)] + gram[(b, a)]);
                sq_gram[a * n + b] = g * g;
                sq_gram[b * n + a] = g * g;
            }
        }
        let dof: usize = sizes.iter().map(|s| s - 1).sum();
        let pooled_term = sq_gram.iter().sum::<f64>() / dof as f64;
        PermutationEngine {
            n,
            sizes,
            sq_gram,
            pooled_term,
        }
    }

    pub fn total_size(&self) -> usize {
        self.n
    }

    /// `T*_n` for the regrouping that puts pooled residual `order[m]` in slot
    /// `m`; slots are filled group by group in the original sizes. The
    /// identity order reproduces `T_n`.
    pub fn statistic_for_order(&self, order: &[usize]) -> f64 {
        assert_eq!(order.len(), self.n, "order must be a permutation of 0..n");
        let mut total = 0.0;
        let mut offset = 0;
        for &size in &self.sizes {
            let idx = &order[offset..offset + size];
            let mut within = 0.0;
            for (p, &a) in idx.iter().enumerate() {
                let row = &self.sq_gram[a * self.n..(a + 1) * self.n];
                within += 0.5 * row[a];
                for &b in &idx[p + 1..] {
                    within += row[b];
                }
            }
            total += 2.0 * within / (size - 1) as f64;
            offset += size;
        }
        // Exact value is nonnegative; clamp rounding.
        (total - self.pooled_term).max(0.0)
    }

    /// `B` permuted statistics. Permutation `b` shuffles with its own stream
    /// `seed::stream(seed, [b])`, so results do not depend on scheduling.
    pub fn sample(&self, permutations: usize, seed: u64) -> Vec<f64> {
        (0..permutations)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(self.n),
                |order, b| {
                    order.clear();
                    order.extend(0..self.n);
                    order.shuffle(&mut seed::stream(seed, &[b as u64]));
                    self.statistic_for_order(order)
                },
            )
            .collect()
    }

    pub fn test(&self, statistic: f64, opts: &PermutationOptions) -> Result<TestReport> {
        check_alpha(opts.alpha)?;
        if opts.permutations < 1 {
            return Err(Error::invalid("need at least one permutation"));
        }
        let mut draws = self.sample(opts.permutations, opts.seed);
        let exceed = draws.iter().filter(|&&t| t >= statistic).count();
        let p_value = (1 + exceed) as f64 / (opts.permutations + 1) as f64;

        draws.sort_by(f64::total_cmp);
        let b = opts.permutations;
        let rank = (((1.0 - opts.alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
        let critical_value = draws[rank - 1];
        let reject = match opts.rule {
            PermutationRule::Quantile => statistic > critical_value,
            PermutationRule::PValue => p_value <= opts.alpha,
        };
        Ok(TestReport {
            statistic,
            method: TestMethod::Permutation,
            ws: None,
            critical_value,
            p_value,
            alpha: opts.alpha,
            reject,
            permutations: Some(b),
            seed: Some(opts.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecftest::{ssb_surface, Analysis};
    use crate::estim;
    use crate::grid::{CovSurface, Dataset, GroupData};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(seed: u64, sizes: &[usize], j: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(j, 0.0, 1.0).unwrap();
        let groups = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let m = DMatrix::from_fn(n, j, |_, c| {
                    rng.sample::<f64, _>(StandardNormal) * (1.0 + c as f64 * 0.05) + i as f64
                });
                GroupData::new(format!("g{i}"), m).unwrap()
            })
            .collect();
        Dataset::new(grid, groups).unwrap()
    }

    /// The permuted statistic computed surface by surface, straight from the
    /// definition (no re-centering of the permuted groups).
    fn direct_permuted_statistic(a: &Analysis, order: &[usize]) -> f64 {
        let pooled_rows: Vec<Vec<f64>> = a
            .residuals()
            .iter()
            .flat_map(|r| r.row_iter().map(|row| row.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
            .collect();
        let grid = a.grid();
        let j = grid.len();
        let mut covs = Vec::new();
        let mut offset = 0;
        for &size in a.sizes() {
            let mut s = DMatrix::zeros(j, j);
            for &m in &order[offset..offset + size] {
                let v = &pooled_rows[m];
                for x in 0..j {
                    for y in 0..j {
                        s[(x, y)] += v[x] * v[y];
                    }
                }
            }
            covs.push(CovSurface::new(grid.clone(), s / (size - 1) as f64).unwrap());
            offset += size;
        }
        let pooled = estim::pooled_cov(&covs, a.sizes()).unwrap();
        grid.integrate2(&ssb_surface(&covs, &pooled, a.sizes()).unwrap())
    }

    #[test]
    fn identity_order_reproduces_statistic() {
        for seed in 0..5 {
            let a = Analysis::new(&random_dataset(seed, &[6, 9, 7], 11)).unwrap();
            let engine = a.permutation_engine();
            let id: Vec<usize> = (0..engine.total_size()).collect();
            assert_relative_eq!(engine.statistic_for_order(&id), a.statistic(), max_relative = 1e-12);
        }
    }

    #[test]
    fn fast_path_matches_direct_definition() {
        let a = Analysis::new(&random_dataset(17, &[5, 8, 6], 9)).unwrap();
        let engine = a.permutation_engine();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut order: Vec<usize> = (0..engine.total_size()).collect();
            order.shuffle(&mut rng);
            assert_relative_eq!(
                engine.statistic_for_order(&order),
                direct_permuted_statistic(&a, &order),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = Analysis::new(&random_dataset(2, &[10, 12], 7)).unwrap();
        let opts = PermutationOptions {
            permutations: 300,
            alpha: 0.05,
            seed: 42,
            rule: PermutationRule::Quantile,
        };
        let r1 = a.permutation_test(&opts).unwrap();
        let r2 = a.permutation_test(&opts).unwrap();
        assert_eq!(r1, r2);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let r3 = pool.install(|| a.permutation_test(&opts).unwrap());
        assert_eq!(r1, r3);
        let other = a.permutation_test(&PermutationOptions { seed: 43, ..opts }).unwrap();
        assert_ne!(r1.critical_value, other.critical_value);
    }

    #[test]
    fn p_value_and_decision_rules() {
        let a = Analysis::new(&random_dataset(9, &[10, 12, 8], 6)).unwrap();
        let b = 199;
        let opts = PermutationOptions {
            permutations: b,
            alpha: 0.05,
            seed: 3,
            rule: PermutationRule::Quantile,
        };
        let r = a.permutation_test(&opts).unwrap();
        let draws = a.permutation_engine().sample(b, 3);
        let exceed = draws.iter().filter(|&&t| t >= a.statistic()).count();
        assert_eq!(r.p_value, (1 + exceed) as f64 / 200.0);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        // ⌈0.95 · 199⌉ = 190
        assert_eq!(r.critical_value, sorted[189]);
        assert_eq!(r.reject, a.statistic() > sorted[189]);
        assert_eq!(r.permutations, Some(b));
        assert_eq!(r.seed, Some(3));

        let rp = a.permutation_test(&PermutationOptions { rule: PermutationRule::PValue, ..opts }).unwrap();
        assert_eq!(rp.reject, rp.p_value <= 0.05);
    }

    #[test]
    fn scale_invariant_p_value() {
        let ds = random_dataset(12, &[9, 11], 8);
        let opts = PermutationOptions {
            permutations: 250,
            alpha: 0.05,
            seed: 8,
            rule: PermutationRule::Quantile,
        };
        let a = Analysis::new(&ds).unwrap().permutation_test(&opts).unwrap();
        let b = Analysis::new(&ds.scaled(7.0)).unwrap().permutation_test(&opts).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.reject, b.reject);
    }

    #[test]
    fn rejects_zero_permutations() {
        let a = Analysis::new(&random_dataset(1, &[4, 4], 3)).unwrap();
        let opts = PermutationOptions {
            permutations: 0,
            alpha: 0.05,
            seed: 0,
            rule: PermutationRule::Quantile,
        };
        assert!(matches!(a.permutation_test(&opts), Err(Error::InvalidArgument(_))));
    }
}
