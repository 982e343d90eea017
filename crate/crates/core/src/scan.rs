//! Detuning scans and their CSV form.
//!
//! CSV layout: header `detuning_hz,ion0_p,ion0_err,ion1_p,ion1_err,...`,
//! one row per grid point, LF line endings, values in SI with Rust's
//! shortest round-trip float formatting. Scans carrying analysis
//! corrections append `ion<i>_p_raw` columns with the uncorrected values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScanError {
    #[error("scan CSV: {0}")]
    Csv(String),
    #[error("invalid grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub kind: String,
    pub ions: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub detunings: Vec<f64>,
    /// Signal probability, indexed `[point][ion]`.
    pub p: Vec<Vec<f64>>,
    /// Binomial standard error, same layout as `p`.
    pub err: Vec<Vec<f64>>,
    pub raw_p: Option<Vec<Vec<f64>>>,
    pub corrections: Vec<Correction>,
}

impl ScanResult {
    pub fn n_ions(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// `(x, y, err)` triples of one ion's column.
    pub fn column(&self, ion: usize) -> Option<Vec<(f64, f64, f64)>> {
        (ion < self.n_ions()).then(|| {
            self.detunings
                .iter()
                .enumerate()
                .map(|(i, x)| (*x, self.p[i][ion], self.err[i][ion]))
                .collect()
        })
    }

    pub fn to_csv(&self) -> String {
        let n = self.n_ions();
        let mut out = String::from("detuning_hz");
        for i in 0..n {
            write!(out, ",ion{i}_p,ion{i}_err").expect("string write");
        }
        if self.raw_p.is_some() {
            for i in 0..n {
                write!(out, ",ion{i}_p_raw").expect("string write");
            }
        }
        out.push('\n');
        for (k, x) in self.detunings.iter().enumerate() {
            write!(out, "{x}").expect("string write");
            for i in 0..n {
                write!(out, ",{},{}", self.p[k][i], self.err[k][i]).expect("string write");
            }
            if let Some(raw) = &self.raw_p {
                for v in &raw[k] {
                    write!(out, ",{v}").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ScanError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| ScanError::Csv("empty file".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.first() != Some(&"detuning_hz") {
            return Err(ScanError::Csv("first column must be detuning_hz".into()));
        }
        let col = |name: String| header.iter().position(|h| *h == name);
        let mut p_cols = Vec::new();
        while let (Some(p), Some(e)) = (col(format!("ion{}_p", p_cols.len())), col(format!("ion{}_err", p_cols.len()))) {
            p_cols.push((p, e));
        }
        if p_cols.is_empty() {
            return Err(ScanError::Csv("no ion<i>_p/ion<i>_err column pairs".into()));
        }
        let raw_cols: Option<Vec<usize>> =
            (0..p_cols.len()).map(|i| col(format!("ion{i}_p_raw"))).collect();
        let mut scan = ScanResult {
            detunings: Vec::new(),
            p: Vec::new(),
            err: Vec::new(),
            raw_p: raw_cols.as_ref().map(|_| Vec::new()),
            corrections: Vec::new(),
        };
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(ScanError::Csv(format!("row {} has {} cells, header has {}", row + 2, cells.len(), header.len())));
            }
            let num = |i: usize| {
                cells[i]
                    .parse::<f64>()
                    .map_err(|_| ScanError::Csv(format!("row {}: `{}` is not a number", row + 2, cells[i])))
            };
            scan.detunings.push(num(0)?);
            scan.p.push(p_cols.iter().map(|(p, _)| num(*p)).collect::<Result<_, _>>()?);
            scan.err.push(p_cols.iter().map(|(_, e)| num(*e)).collect::<Result<_, _>>()?);
            if let (Some(raw), Some(cols)) = (scan.raw_p.as_mut(), raw_cols.as_ref()) {
                raw.push(cols.iter().map(|c| num(*c)).collect::<Result<_, _>>()?);
            }
        }
        Ok(scan)
    }
}

/// `points` evenly spaced values from `from` to `to` inclusive.
pub fn linear_grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>, ScanError> {
    match points {
        0 => Err(ScanError::Grid("need at least one point".into())),
        1 => Ok(vec![from]),
        _ if !(to > from) => Err(ScanError::Grid("grid must be strictly increasing".into())),
        _ => {
            let step = (to - from) / (points - 1) as f64;
            Ok((0..points).map(|i| if i == points - 1 { to } else { from + step * i as f64 }).collect())
        }
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<(), ScanError> {
    if grid.is_empty() {
        return Err(ScanError::Grid("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(ScanError::Grid("grid values must be finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ScanError::Grid("grid must be strictly increasing".into()));
    }
    Ok(())
}
