//! Loading and validating the outcome / treatment / covariate columns.
//!
//! CSV files carry a header row. A cell that is empty or a lone `.` is
//! missing; rows with a missing value in any selected column are dropped
//! (listwise deletion) and counted in the [`ValidationReport`]. The treatment
//! must literally be coded 0/1, nothing is recoded.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{HetdiagError, Result};

/// Validated estimation sample.
///
/// Invariants: `d` is 0/1, `y`, `d` and `x` share `n >= k + 2` rows, no value
/// is missing or non-finite, and both treatment groups are non-empty.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<f64>,
    x: DMatrix<f64>,
    outcome: String,
    treatment: String,
    covariates: Vec<String>,
    n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_raw: usize,
    pub n_kept: usize,
    pub n_dropped: usize,
    /// Missing-cell count for every selected column, in selection order.
    pub missing: Vec<(String, usize)>,
    /// Distinct treatment values among the kept rows, ascending.
    pub treatment_levels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset with default column names (`y`, `d`, `x1`..`xK`).
    pub fn new(y: Vec<f64>, d: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let covariates = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(y, d, x, "y".into(), "d".into(), covariates)
    }

    pub fn with_names(
        y: Vec<f64>,
        d: Vec<f64>,
        x: DMatrix<f64>,
        outcome: String,
        treatment: String,
        covariates: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if d.len() != n || x.nrows() != n {
            return Err(HetdiagError::Dimension(format!(
                "y has {n} rows, d has {}, X has {}",
                d.len(),
                x.nrows()
            )));
        }
        if covariates.len() != x.ncols() {
            return Err(HetdiagError::Dimension(format!(
                "{} covariate names for {} columns",
                covariates.len(),
                x.ncols()
            )));
        }
        if x.ncols() == 0 {
            return Err(HetdiagError::Schema(
                "at least one covariate is required".into(),
            ));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(HetdiagError::Schema(
                "non-finite value in outcome or covariates".into(),
            ));
        }
        if d.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(HetdiagError::TreatmentNotBinary {
                column: treatment,
                levels: levels(&d),
            });
        }
        check_groups(&d)?;
        if n < x.ncols() + 2 {
            return Err(HetdiagError::Schema(format!(
                "{n} rows is too few for {} covariates (need at least {})",
                x.ncols(),
                x.ncols() + 2
            )));
        }
        Ok(Self {
            y,
            d,
            x,
            outcome,
            treatment,
            covariates,
            n_dropped: 0,
        })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates (excluding intercept and treatment).
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.d.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn n_dropped(&self) -> usize {
        self.n_dropped
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariates
    }

    /// New dataset made of the given rows (repetition allowed), in order.
    /// Fails like [`Dataset::with_names`] if the selection is degenerate.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let y = rows.iter().map(|&i| self.y[i]).collect::<Vec<_>>();
        let d = rows.iter().map(|&i| self.d[i]).collect::<Vec<_>>();
        let x = DMatrix::from_fn(rows.len(), self.k(), |r, c| self.x[(rows[r], c)]);
        check_groups(&d)?;
        if rows.len() < self.k() + 2 {
            return Err(HetdiagError::Schema(format!(
                "{} rows selected",
                rows.len()
            )));
        }
        Ok(Self {
            y,
            d,
            x,
            outcome: self.outcome.clone(),
            treatment: self.treatment.clone(),
            covariates: self.covariates.clone(),
            n_dropped: 0,
        })
    }

    /// Same data with the listed covariate columns removed.
    pub fn drop_covariates(&self, columns: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.k()).filter(|j| !columns.contains(j)).collect();
        let x = self.x.select_columns(&keep);
        let names = keep.iter().map(|&j| self.covariates[j].clone()).collect();
        let mut out = Self::with_names(
            self.y.clone(),
            self.d.clone(),
            x,
            self.outcome.clone(),
            self.treatment.clone(),
            names,
        )?;
        out.n_dropped = self.n_dropped;
        Ok(out)
    }

    /// Same data with `y` replaced (used by tests and transformations).
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        let mut out = Self::with_names(
            y,
            self.d.clone(),
            self.x.clone(),
            self.outcome.clone(),
            self.treatment.clone(),
            self.covariates.clone(),
        )?;
        out.n_dropped = self.n_dropped;
        Ok(out)
    }
}

fn check_groups(d: &[f64]) -> Result<()> {
    let treated = d.iter().filter(|&&v| v == 1.0).count();
    let untreated = d.len() - treated;
    if treated == 0 || untreated == 0 {
        return Err(HetdiagError::DegenerateGroup { treated, untreated });
    }
    Ok(())
}

fn levels(values: &[f64]) -> Vec<f64> {
    let set: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    let mut out: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    out.sort_by(f64::total_cmp);
    out
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "."
}

/// Expands covariate selectors against a header row. A selector is either a
/// column name or an inclusive positional range `first:last`.
pub fn resolve_covariates(headers: &[String], selectors: &[String]) -> Result<Vec<String>> {
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HetdiagError::Schema(format!("no column named `{name}`")))
    };
    let mut out = Vec::new();
    for sel in selectors {
        let sel = sel.trim();
        if sel.is_empty() {
            continue;
        }
        match sel.split_once(':') {
            Some((a, b)) => {
                let (i, j) = (position(a.trim())?, position(b.trim())?);
                if i > j {
                    return Err(HetdiagError::Schema(format!(
                        "range `{sel}` runs backwards in the header order"
                    )));
                }
                out.extend(headers[i..=j].iter().cloned());
            }
            None => {
                position(sel)?;
                out.push(sel.to_string());
            }
        }
    }
    if out.is_empty() {
        return Err(HetdiagError::Schema("covariate list is empty".into()));
    }
    Ok(out)
}

/// Header row of a CSV file.
pub fn read_headers(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

pub fn load_csv(
    path: impl AsRef<Path>,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
) -> Result<(Dataset, ValidationReport)> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, outcome, treatment, covariates)
}

pub fn load_csv_reader<R: Read>(
    reader: R,
    outcome: &str,
    treatment: &str,
    covariates: &[String],
) -> Result<(Dataset, ValidationReport)> {
    if covariates.is_empty() {
        return Err(HetdiagError::Schema("covariate list is empty".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut selected: Vec<&str> = vec![outcome, treatment];
    selected.extend(covariates.iter().map(String::as_str));
    let idx = selected
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| HetdiagError::Schema(format!("no column named `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut missing = vec![0usize; selected.len()];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut n_raw = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        n_raw += 1;
        let mut row = Vec::with_capacity(idx.len());
        let mut complete = true;
        for (slot, &col) in idx.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            if is_missing(cell) {
                missing[slot] += 1;
                complete = false;
                continue;
            }
            let value: f64 = cell.trim().parse().map_err(|_| {
                HetdiagError::Schema(format!(
                    "non-numeric value `{cell}` in column `{}` (data row {})",
                    selected[slot],
                    line + 1
                ))
            })?;
            row.push(value);
        }
        if complete {
            rows.push(row);
        }
    }

    let n = rows.len();
    let k = covariates.len();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let d: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j + 2]);

    let report = ValidationReport {
        n_raw,
        n_kept: n,
        n_dropped: n_raw - n,
        missing: selected
            .iter()
            .map(|s| s.to_string())
            .zip(missing)
            .collect(),
        treatment_levels: levels(&d),
    };

    if report
        .treatment_levels
        .iter()
        .any(|&v| v != 0.0 && v != 1.0)
    {
        return Err(HetdiagError::TreatmentNotBinary {
            column: treatment.to_string(),
            levels: report.treatment_levels,
        });
    }
    let mut dataset = Dataset::with_names(
        y,
        d,
        x,
        outcome.to_string(),
        treatment.to_string(),
        covariates.to_vec(),
    )?;
    dataset.n_dropped = report.n_dropped;
    Ok((dataset, report))
}
