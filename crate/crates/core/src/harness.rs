//! Monte Carlo rejection-rate tables.
//!
//! Replication `r` of the cell at `ω` uses dataset seed
//! `derive_seed(master_seed, [ω.to_bits(), r])`; its permutation stream is
//! derived from that seed. A cell is therefore reproducible on its own, and
//! `run_cell(spec, ω)` equals the matching row of `run_table(spec)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::ecftest::{Analysis, PermutationOptions, PermutationRule, TestMethod, TestReport, WsMethod};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::simgen::{generate_dataset, SimConfig};

const PERMUTATION_TAG: u64 = 0x7065_726d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub omega_values: Vec<f64>,
    pub tests: Vec<TestMethod>,
    pub alpha: f64,
    pub reps: usize,
    pub permutations: usize,
    pub permutation_rule: PermutationRule,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: SimConfig::default(),
            omega_values: vec![0.0],
            tests: vec![TestMethod::Naive, TestMethod::BiasReduced, TestMethod::Permutation],
            alpha: 0.05,
            reps: 2000,
            permutations: 500,
            permutation_rule: PermutationRule::Quantile,
            master_seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        crate::ecftest::check_alpha(self.alpha)?;
        if self.reps < 1 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.tests.is_empty() {
            return Err(Error::invalid("no tests selected"));
        }
        if self.tests.contains(&TestMethod::Permutation) && self.permutations < 1 {
            return Err(Error::invalid("permutation test needs at least one permutation"));
        }
        if self.omega_values.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite omega"));
        }
        Ok(())
    }

    fn config_at(&self, omega: f64) -> SimConfig {
        SimConfig { omega, ..self.base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRate {
    pub test: TestMethod,
    pub rejections: usize,
    pub rate_pct: f64,
    pub se_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub omega: f64,
    pub reps: usize,
    pub rates: Vec<TestRate>,
}

impl CellResult {
    pub fn rate(&self, test: TestMethod) -> Option<&TestRate> {
        self.rates.iter().find(|r| r.test == test)
    }
}

/// Reports of every selected test on replication `rep` of the cell at `omega`.
pub fn replicate(spec: &ExperimentSpec, omega: f64, rep: usize) -> Result<Vec<TestReport>> {
    let rep_seed = derive_seed(spec.master_seed, &[omega.to_bits(), rep as u64]);
    let ds = generate_dataset(&spec.config_at(omega), rep_seed)?;
    let analysis = Analysis::new(&ds)?;
    spec.tests
        .iter()
        .map(|&test| match test {
            TestMethod::Naive => analysis.ws_test(WsMethod::Naive, spec.alpha),
            TestMethod::BiasReduced => analysis.ws_test(WsMethod::BiasReduced, spec.alpha),
            TestMethod::Permutation => analysis.permutation_test(&PermutationOptions {
                permutations: spec.permutations,
                alpha: spec.alpha,
                seed: derive_seed(rep_seed, &[PERMUTATION_TAG]),
                rule: spec.permutation_rule,
            }),
        })
        .collect()
}

pub fn run_cell(spec: &ExperimentSpec, omega: f64) -> Result<CellResult> {
    spec.validate()?;
    let decisions: Vec<Vec<bool>> = (0..spec.reps)
        .into_par_iter()
        .map(|rep| Ok(replicate(spec, omega, rep)?.iter().map(|r| r.reject).collect()))
        .collect::<Result<_>>()?;
    let reps = spec.reps as f64;
    let rates = spec
        .tests
        .iter()
        .enumerate()
        .map(|(t, &test)| {
            let rejections = decisions.iter().filter(|d| d[t]).count();
            let p = rejections as f64 / reps;
            TestRate {
                test,
                rejections,
                rate_pct: 100.0 * p,
                se_pct: 100.0 * (p * (1.0 - p) / reps).sqrt(),
            }
        })
        .collect();
    Ok(CellResult { omega, reps: spec.reps, rates })
}

pub fn run_table(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    spec.omega_values.iter().map(|&w| run_cell(spec, w)).collect()
}

/// Long-format CSV: `omega,test,rate_pct,se_pct,reps`.
pub fn write_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "test", "rate_pct", "se_pct", "reps"])?;
    for cell in cells {
        for r in &cell.rates {
            w.write_record([
                cell.omega.to_string(),
                r.test.as_str().to_string(),
                r.rate_pct.to_string(),
                r.se_pct.to_string(),
                cell.reps.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, cells)?;
    Ok(())
}
