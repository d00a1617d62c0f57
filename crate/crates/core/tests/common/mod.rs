#![allow(dead_code)]

use ecfkit::{CovSurface, Dataset, GroupData, Grid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues descending.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals
}

/// The Gaussian kernel `γ(s1,s2)γ(t1,t2) + γ(s1,t2)γ(s2,t1)` as a `J² × J²`
/// matrix, scaled by `√(w w')` on both sides so its spectrum is the operator's.
pub fn dense_omega(s: &CovSurface) -> DMatrix<f64> {
    let g = s.values();
    let w = s.grid().weights();
    let j = w.len();
    DMatrix::from_fn(j * j, j * j, |row, col| {
        let (s1, t1) = (row / j, row % j);
        let (s2, t2) = (col / j, col % j);
        let kern = g[(s1, s2)] * g[(t1, t2)] + g[(s1, t2)] * g[(s2, t1)];
        kern * (w[s1] * w[t1] * w[s2] * w[t2]).sqrt()
    })
}

pub fn random_psd(grid: &Grid, rank: usize, rng: &mut ChaCha8Rng) -> CovSurface {
    let j = grid.len();
    let a = DMatrix::from_fn(j, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = &a * a.transpose();
    CovSurface::new(grid.clone(), (&s + s.transpose()) * 0.5).unwrap()
}

pub fn random_symmetric(grid: &Grid, rng: &mut ChaCha8Rng) -> CovSurface {
    let j = grid.len();
    let a = DMatrix::from_fn(j, j, |_, _| rng.sample::<f64, _>(StandardNormal));
    CovSurface::new(grid.clone(), (&a + a.transpose()) * 0.5).unwrap()
}

/// Groups with heterogeneous scales and means on a uniform grid.
pub fn random_dataset(seed: u64, sizes: &[usize], j: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::uniform(j, 0.0, 1.0).unwrap();
    let groups = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let scale = 0.5 + rng.random::<f64>();
            let m = DMatrix::from_fn(n, j, |_, c| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale * (1.0 + 0.1 * c as f64) + i as f64
            });
            GroupData::new(format!("g{i}"), m).unwrap()
        })
        .collect();
    Dataset::new(grid, groups).unwrap()
}
