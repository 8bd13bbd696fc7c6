//! File formats: long data and prediction CSVs, covariance JSON.

use std::fs;
use std::path::Path;

use latentgraph::covest::{Divisor, PredictionSet};
use latentgraph::dispersion::{LongDataset, Observation};
use latentgraph::elliptical::{matrix_from_rows, matrix_to_rows};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn parse_num(field: &str, row: usize, col: &str) -> CliResult<f64> {
    field
        .parse::<f64>()
        .map_err(|_| CliError::usage(format!("row {row}, column '{col}': '{field}' is not a number")))
}

fn parse_index(field: &str, row: usize, col: &str) -> CliResult<usize> {
    match field.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => Err(CliError::usage(format!(
            "row {row}, column '{col}': '{field}' is not a 1-based index"
        ))),
    }
}

pub fn headers(path: &Path) -> CliResult<Vec<String>> {
    Ok(reader(path)?.headers()?.iter().map(str::to_string).collect())
}

/// Reads `margin,cluster,y,x1,...,xp`; files without covariates get an intercept.
pub fn read_long(path: &Path) -> CliResult<LongDataset> {
    let mut rdr = reader(path)?;
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if head.len() < 3 || head[0] != "margin" || head[1] != "cluster" || head[2] != "y" {
        return Err(CliError::usage(format!(
            "{}: expected header margin,cluster,y,x1,...",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let mut x: Vec<f64> = (3..rec.len())
            .map(|c| parse_num(&rec[c], line, &head[c]))
            .collect::<CliResult<_>>()?;
        if x.is_empty() {
            x.push(1.0);
        }
        rows.push(Observation {
            margin: parse_index(&rec[0], line, "margin")?,
            cluster: parse_index(&rec[1], line, "cluster")?,
            y: parse_num(&rec[2], line, "y")?,
            x,
        });
    }
    Ok(LongDataset::from_rows(rows)?)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_long(path: &Path, data: &LongDataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let p = data.covariate_width();
    let mut head = vec!["margin".to_string(), "cluster".into(), "y".into()];
    head.extend((1..=p).map(|i| format!("x{i}")));
    w.write_record(&head)?;
    for r in &data.rows {
        let mut rec = vec![(r.margin + 1).to_string(), (r.cluster + 1).to_string(), fmt(r.y)];
        rec.extend(r.x.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per cluster: `cluster,<prefix>1,...`.
pub fn write_cluster_matrix(path: &Path, prefixes: &[(&str, &DMatrix<f64>)]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["cluster".to_string()];
    for (prefix, m) in prefixes {
        head.extend((1..=m.ncols()).map(|j| format!("{prefix}{j}")));
    }
    w.write_record(&head)?;
    let q = prefixes.first().map_or(0, |(_, m)| m.nrows());
    for c in 0..q {
        let mut rec = vec![(c + 1).to_string()];
        for (_, m) in prefixes {
            rec.extend(m.row(c).iter().map(|&v| fmt(v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(path: &Path, preds: &PredictionSet) -> CliResult<()> {
    write_cluster_matrix(path, &[("b", &preds.bhat), ("v", &preds.cond_var)])
}

fn read_numeric(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(c, f)| parse_num(f, i + 2, &head[c]))
                .collect::<CliResult<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no data rows", path.display())));
    }
    Ok((head, rows))
}

fn columns_with_prefix(head: &[String], prefix: &str) -> Vec<usize> {
    head.iter()
        .enumerate()
        .filter(|(_, h)| {
            h.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        })
        .map(|(i, _)| i)
        .collect()
}

fn select(rows: &[Vec<f64>], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| rows[r][cols[c]])
}

/// Predictions CSV `cluster,b1,...,bd,v1,...,vd`.
pub fn read_predictions(path: &Path) -> CliResult<PredictionSet> {
    let (head, rows) = read_numeric(path)?;
    let b = columns_with_prefix(&head, "b");
    let v = columns_with_prefix(&head, "v");
    if head.first().map(String::as_str) != Some("cluster") || b.is_empty() || b.len() != v.len() {
        return Err(CliError::usage(format!(
            "{}: expected header cluster,b1,...,bd,v1,...,vd",
            path.display()
        )));
    }
    Ok(PredictionSet::new(select(&rows, &b), select(&rows, &v))?)
}

/// A `q × d` data matrix: the `b` columns of a predictions or truth file, or
/// every column of a plain numeric CSV.
pub fn read_data_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let (head, rows) = read_numeric(path)?;
    let b = columns_with_prefix(&head, "b");
    let cols: Vec<usize> = if head.first().map(String::as_str) == Some("cluster") && !b.is_empty() {
        b
    } else {
        (0..head.len()).collect()
    };
    Ok(select(&rows, &cols))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceJson {
    pub dim: usize,
    pub q: usize,
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub divisor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
}

impl CovarianceJson {
    pub fn new(m: &DMatrix<f64>, q: usize, divisor: Divisor) -> Self {
        Self {
            dim: m.nrows(),
            q,
            labels: (1..=m.nrows()).map(|j| format!("b{j}")).collect(),
            matrix: matrix_to_rows(m),
            divisor: match divisor {
                Divisor::QMinus1 => "q-1".into(),
                Divisor::Q => "q".into(),
            },
            method: None,
            loglik: None,
        }
    }

    pub fn matrix(&self) -> CliResult<DMatrix<f64>> {
        let m = matrix_from_rows(&self.matrix)?;
        if m.nrows() != self.dim {
            return Err(CliError::usage(format!(
                "covariance 'dim' is {} but the matrix is {}x{}",
                self.dim,
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }
}

/// Reads a single column of values in [0, 1]: the `pvalue` column when
/// present, otherwise the only column. `filters` keep rows whose named
/// columns equal the given text.
pub fn read_pvalues(path: &Path, filters: &[(String, String)]) -> CliResult<Vec<f64>> {
    let mut rdr = reader(path)?;
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = match head.iter().position(|h| h == "pvalue") {
        Some(c) => c,
        None if head.len() == 1 => 0,
        None => {
            return Err(CliError::usage(format!(
                "{}: need a 'pvalue' column or a single column",
                path.display()
            )))
        }
    };
    let filter_cols: Vec<(usize, &str)> = filters
        .iter()
        .map(|(k, v)| {
            head.iter()
                .position(|h| h == k)
                .map(|c| (c, v.as_str()))
                .ok_or_else(|| CliError::usage(format!("no column '{k}' to filter on")))
        })
        .collect::<CliResult<_>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if filter_cols.iter().all(|&(c, v)| &rec[c] == v) {
            out.push(parse_num(&rec[col], i + 2, &head[col])?);
        }
    }
    Ok(out)
}
