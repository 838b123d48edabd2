//! CSV ingestion and serialization for trial and external-control files.
//!
//! Files are numeric-only CSV with a header row, comma delimiter, and `.`
//! decimals. Floats are written with 17 significant digits so a
//! simulate → load round trip reproduces datasets bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use borrowlab_core::data::{ExternalPool, Sample, TrialDataset};

use crate::error::CliError;

/// A parsed rectangular numeric file.
#[derive(Debug, Clone)]
pub struct TabularFile {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TabularFile {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Read a numeric CSV, rejecting ragged rows, missing cells, and
/// non-numeric values with row/column coordinates.
pub fn read_tabular(path: &Path) -> Result<TabularFile, CliError> {
    let locus = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new("io", format!("cannot open: {e}"), &locus))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::new("io", format!("cannot read header: {e}"), &locus))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(CliError::new("schema", "empty header", &locus));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::new("io", format!("row {}: {e}", i + 1), &locus))?;
        if record.len() != header.len() {
            return Err(CliError::new(
                "schema",
                format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    record.len(),
                    header.len()
                ),
                &locus,
            ));
        }
        let mut row = Vec::with_capacity(header.len());
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(CliError::new(
                    "missing-cell",
                    format!("missing cell at row {} column {}", i + 1, header[j]),
                    &locus,
                ));
            }
            let value: f64 = cell.parse().map_err(|_| {
                CliError::new(
                    "non-numeric",
                    format!(
                        "non-numeric cell '{cell}' at row {} column {}",
                        i + 1,
                        header[j]
                    ),
                    &locus,
                )
            })?;
            if !value.is_finite() {
                return Err(CliError::new(
                    "non-finite",
                    format!("non-finite value at row {} column {}", i + 1, header[j]),
                    &locus,
                ));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::new("empty", "no rows", &locus));
    }
    Ok(TabularFile { header, rows })
}

fn covariate_columns(table: &TabularFile, skip: &[usize]) -> (Vec<usize>, Vec<String>) {
    let cols: Vec<usize> = (0..table.header.len())
        .filter(|j| !skip.contains(j))
        .collect();
    let names = cols.iter().map(|&j| table.header[j].clone()).collect();
    (cols, names)
}

/// Load a trial CSV: `treat_col` must be binary, `outcome_col` is the
/// outcome, and every remaining column becomes a covariate in header order.
pub fn load_trial_csv(
    path: &Path,
    outcome_col: &str,
    treat_col: &str,
) -> Result<(TrialDataset<f64>, Vec<String>), CliError> {
    let locus = path.display().to_string();
    let table = read_tabular(path)?;
    let y_idx = table
        .column(outcome_col)
        .ok_or_else(|| CliError::new("schema", format!("missing column {outcome_col}"), &locus))?;
    let a_idx = table
        .column(treat_col)
        .ok_or_else(|| CliError::new("schema", format!("missing column {treat_col}"), &locus))?;
    if y_idx == a_idx {
        return Err(CliError::new(
            "schema",
            "outcome and treat columns coincide",
            &locus,
        ));
    }
    let (x_cols, names) = covariate_columns(&table, &[y_idx, a_idx]);
    let mut samples = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let a = match row[a_idx] {
            0.0 => false,
            1.0 => true,
            v => {
                return Err(CliError::new(
                    "non-binary-treat",
                    format!("non-binary treat value {v} at row {}", i + 1),
                    &locus,
                ))
            }
        };
        let x = x_cols.iter().map(|&j| row[j]).collect();
        samples.push(Sample::trial(x, a, row[y_idx]));
    }
    let trial = TrialDataset::new(samples)
        .map_err(|e| CliError::new("validation", e.to_string(), &locus))?;
    log::info!(
        "loaded trial {}: {} rows, {} treated, {} controls, d = {}",
        locus,
        trial.len(),
        trial.n_treated(),
        trial.n_control(),
        trial.d()
    );
    Ok((trial, names))
}

/// Load an external-control CSV. A treat column is optional; when present
/// it must be identically zero.
pub fn load_pool_csv(
    path: &Path,
    outcome_col: &str,
    treat_col: Option<&str>,
) -> Result<(ExternalPool<f64>, Vec<String>), CliError> {
    let locus = path.display().to_string();
    let table = read_tabular(path)?;
    let y_idx = table
        .column(outcome_col)
        .ok_or_else(|| CliError::new("schema", format!("missing column {outcome_col}"), &locus))?;
    let mut skip = vec![y_idx];
    let a_idx = treat_col.and_then(|name| table.column(name));
    if let Some(j) = a_idx {
        skip.push(j);
        for (i, row) in table.rows.iter().enumerate() {
            if row[j] != 0.0 {
                return Err(CliError::new(
                    "treated-external",
                    format!(
                        "treated external sample (treat = {}) at row {}",
                        row[j],
                        i + 1
                    ),
                    &locus,
                ));
            }
        }
    }
    let (x_cols, names) = covariate_columns(&table, &skip);
    let samples: Vec<Sample<f64>> = table
        .rows
        .iter()
        .map(|row| Sample::external(x_cols.iter().map(|&j| row[j]).collect(), row[y_idx]))
        .collect();
    let pool = ExternalPool::new(samples)
        .map_err(|e| CliError::new("validation", e.to_string(), &locus))?;
    log::info!(
        "loaded pool {}: {} rows, d = {}",
        locus,
        pool.len(),
        pool.d()
    );
    Ok((pool, names))
}

/// Covariate schemas of a paired trial and pool must agree exactly.
pub fn check_schema(trial_cov: &[String], pool_cov: &[String]) -> Result<(), CliError> {
    if trial_cov != pool_cov {
        return Err(CliError::new(
            "schema-mismatch",
            format!("covariate schema mismatch: trial {trial_cov:?} vs pool {pool_cov:?}"),
            "paired files",
        ));
    }
    Ok(())
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a trial dataset; columns are `treat,x1..xd,y` unless names are given.
pub fn write_trial_csv(
    path: &Path,
    trial: &TrialDataset<f64>,
    covariate_names: Option<&[String]>,
) -> Result<(), CliError> {
    let locus = path.display().to_string();
    let d = trial.d();
    let names: Vec<String> = match covariate_names {
        Some(n) => n.to_vec(),
        None => (1..=d).map(|j| format!("x{j}")).collect(),
    };
    let mut out = String::new();
    out.push_str("treat,");
    out.push_str(&names.join(","));
    out.push_str(",y\n");
    for s in trial.samples() {
        let _ = write!(out, "{}", if s.a { 1 } else { 0 });
        for v in &s.x {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let _ = writeln!(out, ",{}", fmt_float(s.y));
    }
    std::fs::write(path, out).map_err(|e| CliError::new("io", e.to_string(), &locus))
}

/// Write an external pool; columns are `x1..xd,y` (no treat column).
pub fn write_pool_csv(
    path: &Path,
    pool: &ExternalPool<f64>,
    covariate_names: Option<&[String]>,
) -> Result<(), CliError> {
    let locus = path.display().to_string();
    let d = pool.d();
    let names: Vec<String> = match covariate_names {
        Some(n) => n.to_vec(),
        None => (1..=d).map(|j| format!("x{j}")).collect(),
    };
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push_str(",y\n");
    for s in pool.samples() {
        let mut first = true;
        for v in &s.x {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt_float(*v));
            first = false;
        }
        let _ = writeln!(out, ",{}", fmt_float(s.y));
    }
    std::fs::write(path, out).map_err(|e| CliError::new("io", e.to_string(), &locus))
}

/// Center/scale transformation fit on trial statistics, with a fixed
/// outcome rescaling for dollar-scale data.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub outcome_scale: f64,
}

impl Standardizer {
    /// Fit per-covariate mean and standard deviation on the trial sample.
    /// Constant columns get unit scale.
    pub fn fit(trial: &TrialDataset<f64>, outcome_scale: f64) -> Self {
        let d = trial.d();
        let n = trial.len() as f64;
        let mut centers = vec![0.0; d];
        for s in trial.samples() {
            for (c, v) in centers.iter_mut().zip(&s.x) {
                *c += v;
            }
        }
        for c in &mut centers {
            *c /= n;
        }
        let mut scales = vec![0.0; d];
        for s in trial.samples() {
            for j in 0..d {
                scales[j] += (s.x[j] - centers[j]).powi(2);
            }
        }
        for sc in &mut scales {
            *sc = (*sc / (n - 1.0).max(1.0)).sqrt();
            if *sc < 1e-12 {
                *sc = 1.0;
            }
        }
        Self {
            centers,
            scales,
            outcome_scale,
        }
    }

    fn map_sample(&self, s: &Sample<f64>) -> Sample<f64> {
        let x =
            s.x.iter()
                .zip(self.centers.iter().zip(&self.scales))
                .map(|(v, (c, sc))| (v - c) / sc)
                .collect();
        Sample {
            x,
            a: s.a,
            y: s.y / self.outcome_scale,
            r: s.r,
        }
    }

    pub fn apply_trial(&self, trial: &TrialDataset<f64>) -> TrialDataset<f64> {
        TrialDataset::new(trial.samples().iter().map(|s| self.map_sample(s)).collect())
            .expect("standardization preserves validity")
    }

    pub fn apply_pool(&self, pool: &ExternalPool<f64>) -> ExternalPool<f64> {
        ExternalPool::new(pool.samples().iter().map(|s| self.map_sample(s)).collect())
            .expect("standardization preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_centers_trial_covariates() {
        let samples = vec![
            Sample::trial(vec![10.0, 0.0], true, 20_000.0),
            Sample::trial(vec![20.0, 0.0], true, 10_000.0),
            Sample::trial(vec![30.0, 0.0], false, 5_000.0),
            Sample::trial(vec![40.0, 0.0], false, 0.0),
        ];
        let trial = TrialDataset::new(samples).unwrap();
        let st = Standardizer::fit(&trial, 1e4);
        let out = st.apply_trial(&trial);
        let mean: f64 = out.samples().iter().map(|s| s.x[0]).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // Constant column keeps unit scale rather than dividing by zero.
        assert_eq!(st.scales[1], 1.0);
        assert_eq!(out.samples()[0].y, 2.0);
    }
}
