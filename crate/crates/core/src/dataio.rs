//! CSV datasets and JSON test reports.
//!
//! Dataset layout (UTF-8, comma separated):
//!
//! ```text
//! group,0,0.5,1
//! control,1.2,0.7,0.3
//! control,1.1,0.9,0.2
//! treated,0.4,0.8,1.9
//! …
//! ```
//!
//! The header holds the grid points; each later row is one curve. Groups are
//! ordered by first appearance. Row and column numbers in errors are 1-based
//! and count the header as row 1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::ecftest::{TestMethod, TestReport, WsMethod, WsParams};
use crate::error::{Error, Result};
use crate::grid::{Dataset, GroupData, Grid};

fn parse_err(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { row, column, message: message.into() }
}

pub fn read_dataset(path: impl AsRef<Path>, domain: Option<(f64, f64)>) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset_from(BufReader::new(file), domain)
}

/// With `domain = Some((a, b))` the header labels are ignored and the grid is
/// uniform over `[a, b]`.
pub fn read_dataset_from<R: Read>(input: R, domain: Option<(f64, f64)>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(1, 1, "empty file")),
    };
    let j = header.len().saturating_sub(1);
    if j < 2 {
        return Err(parse_err(1, header.len(), "need a group column and at least two grid columns"));
    }
    let grid = match domain {
        Some((a, b)) => Grid::uniform(j, a, b)?,
        None => {
            let mut points = Vec::with_capacity(j);
            for (c, cell) in header.iter().enumerate().skip(1) {
                let t: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(1, c + 1, format!("grid label {cell:?} is not a number")))?;
                if !t.is_finite() {
                    return Err(parse_err(1, c + 1, "grid label is not finite"));
                }
                if points.last().is_some_and(|&p| t <= p) {
                    return Err(parse_err(1, c + 1, "grid labels must be strictly increasing"));
                }
                points.push(t);
            }
            Grid::trapezoid(points)?
        }
    };

    // (label, first row, values)
    let mut groups: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (idx, rec) in records.enumerate() {
        let row = idx + 2;
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != j + 1 {
            return Err(parse_err(row, rec.len().min(j + 1), format!("expected {} fields, found {}", j + 1, rec.len())));
        }
        let label = &rec[0];
        if label.is_empty() {
            return Err(parse_err(row, 1, "missing group label"));
        }
        let slot = match groups.iter().position(|g| g.0 == label) {
            Some(p) => p,
            None => {
                groups.push((label.to_string(), row, Vec::new()));
                groups.len() - 1
            }
        };
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, c + 1, format!("value {cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, c + 1, "value is not finite"));
            }
            groups[slot].2.push(v);
        }
    }

    if groups.len() < 2 {
        return Err(parse_err(1, 1, format!("need at least two groups, found {}", groups.len())));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (label, first_row, values) in groups {
        let n = values.len() / j;
        if n < 2 {
            return Err(parse_err(first_row, 1, format!("group {label:?} has {n} curve(s), need at least 2")));
        }
        out.push(GroupData::new(label, DMatrix::from_row_slice(n, j, &values))?);
    }
    Dataset::new(grid, out)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset_to(ds, BufWriter::new(file))
}

/// Numbers use the shortest representation that parses back to the same bits.
pub fn write_dataset_to<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group".to_string()];
    header.extend(ds.grid().points().iter().map(|t| t.to_string()));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for g in ds.groups() {
        for curve in g.curves().row_iter() {
            record.clear();
            record.push(g.label().to_string());
            record.extend(curve.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Flat JSON form of a [`TestReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub statistic: f64,
    pub method: TestMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tr_omega2: Option<f64>,
    pub critical_value: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl From<&TestReport> for ReportRecord {
    fn from(r: &TestReport) -> Self {
        ReportRecord {
            statistic: r.statistic,
            method: r.method,
            beta: r.ws.map(|w| w.beta),
            kappa: r.ws.map(|w| w.kappa),
            d: r.ws.map(|w| w.d),
            tr_omega: r.ws.map(|w| w.tr_omega),
            tr_omega2: r.ws.map(|w| w.tr_omega2),
            critical_value: r.critical_value,
            p_value: r.p_value,
            alpha: r.alpha,
            reject: r.reject,
            permutations: r.permutations,
            seed: r.seed,
        }
    }
}

impl TryFrom<ReportRecord> for TestReport {
    type Error = Error;

    fn try_from(r: ReportRecord) -> Result<Self> {
        let ws_method = match r.method {
            TestMethod::Naive => Some(WsMethod::Naive),
            TestMethod::BiasReduced => Some(WsMethod::BiasReduced),
            TestMethod::Permutation => None,
        };
        let ws = match (ws_method, r.beta, r.kappa, r.d, r.tr_omega, r.tr_omega2) {
            (Some(method), Some(beta), Some(kappa), Some(d), Some(tr_omega), Some(tr_omega2)) => {
                Some(WsParams { beta, kappa, d, tr_omega, tr_omega2, method })
            }
            (None, None, None, None, None, None) => None,
            _ => return Err(Error::invalid("report fields do not match its method")),
        };
        Ok(TestReport {
            statistic: r.statistic,
            method: r.method,
            ws,
            critical_value: r.critical_value,
            p_value: r.p_value,
            alpha: r.alpha,
            reject: r.reject,
            permutations: r.permutations,
            seed: r.seed,
        })
    }
}

pub fn report_to_json(report: &TestReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ReportRecord::from(report))?)
}

pub fn report_from_json(text: &str) -> Result<TestReport> {
    serde_json::from_str::<ReportRecord>(text)?.try_into()
}

pub fn write_report(report: &TestReport, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(report_to_json(report)?.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<TestReport> {
    report_from_json(&std::fs::read_to_string(path)?)
}
