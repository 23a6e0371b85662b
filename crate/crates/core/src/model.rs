//! Regression instances, supports, projections and the prediction loss.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cutoff under which singular values are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Coefficients with magnitude at or below this are outside the support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// A fixed-design regression instance `Y = X beta0 + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_norms: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::Domain("design has no columns".into()));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite entry in design or response".into()));
        }
        let column_norms = x.column_iter().map(|c| c.norm()).collect();
        Ok(Dataset { x, y, column_norms })
    }

    /// Builds a dataset from row-major observations.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Dimension(format!(
                "row {i} has {} columns, expected {p}",
                r.len()
            )));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Dataset::new(x, DVector::from_vec(y))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// Same design, different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "response has {} entries, expected {}",
                y.len(),
                self.n()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite response entry".into()));
        }
        Ok(Dataset {
            x: self.x.clone(),
            y,
            column_norms: self.column_norms.clone(),
        })
    }

    /// Rows selected by `rows`, in that order.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset::new(x, y)
    }

    /// Rescales every nonzero column to unit Euclidean norm. Returns the new
    /// dataset and the original norms, so that coefficients fitted on the
    /// normalized design map back through `beta_j / norm_j`.
    pub fn normalize_columns(&self) -> (Dataset, Vec<f64>) {
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let s = self.column_norms[j];
            if s > 0.0 {
                col /= s;
            }
        }
        let column_norms = self
            .column_norms
            .iter()
            .map(|&s| if s > 0.0 { 1.0 } else { 0.0 })
            .collect();
        (
            Dataset {
                x,
                y: self.y.clone(),
                column_norms,
            },
            self.column_norms.clone(),
        )
    }

    /// Reads a numeric CSV. The response is either one of its columns
    /// (`response_col`, an index or a header name) or a separate single
    /// column file.
    pub fn from_csv_path(
        path: &Path,
        has_header: bool,
        response_col: Option<&str>,
        response_path: Option<&Path>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let table = read_table(file, has_header)?;
        let separate = match response_path {
            Some(rp) => {
                let t = read_table(std::fs::File::open(rp)?, has_header)?;
                if t.rows.iter().any(|r| r.len() != 1) {
                    return Err(Error::Csv("response file must have a single column".into()));
                }
                Some(t.rows.into_iter().map(|r| r[0]).collect::<Vec<_>>())
            }
            None => None,
        };
        dataset_from_table(table, response_col, separate)
    }
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table<R: Read>(reader: R, has_header: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::Csv(format!("record {}: cannot parse {field:?} as a number", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(Table { header, rows })
}

fn dataset_from_table(
    table: Table,
    response_col: Option<&str>,
    separate: Option<Vec<f64>>,
) -> Result<Dataset> {
    match (response_col, separate) {
        (Some(_), Some(_)) => Err(Error::Config(
            "give either a response column or a response file, not both".into(),
        )),
        (None, None) => Err(Error::Config(
            "no response: pass a response column or a response file".into(),
        )),
        (None, Some(y)) => Dataset::from_rows(&table.rows, y),
        (Some(col), None) => {
            let width = table.rows[0].len();
            let idx = match col.parse::<usize>() {
                Ok(i) => i,
                Err(_) => table
                    .header
                    .as_ref()
                    .and_then(|h| h.iter().position(|name| name == col))
                    .ok_or_else(|| Error::Config(format!("unknown response column {col:?}")))?,
            };
            if idx >= width {
                return Err(Error::Dimension(format!(
                    "response column {idx} out of range for {width} columns"
                )));
            }
            let mut y = Vec::with_capacity(table.rows.len());
            let mut rows = Vec::with_capacity(table.rows.len());
            for r in table.rows {
                if r.len() != width {
                    return Err(Error::Dimension(format!(
                        "ragged csv: expected {width} columns, found {}",
                        r.len()
                    )));
                }
                y.push(r[idx]);
                rows.push(
                    r.into_iter()
                        .enumerate()
                        .filter(|&(j, _)| j != idx)
                        .map(|(_, v)| v)
                        .collect(),
                );
            }
            Dataset::from_rows(&rows, y)
        }
    }
}

/// Sorted set of column indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Support(indices)
    }

    pub fn empty() -> Self {
        Support(Vec::new())
    }

    /// Nonzero pattern of `beta`.
    pub fn of(beta: &[f64]) -> Self {
        Support(
            beta.iter()
                .enumerate()
                .filter(|(_, b)| b.abs() > SUPPORT_TOL)
                .map(|(j, _)| j)
                .collect(),
        )
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn intersection_len(&self, other: &Support) -> usize {
        self.0.iter().filter(|&&j| other.contains(j)).count()
    }
}

/// Orthogonal projector onto the range of a matrix, stored as an orthonormal
/// basis of that range.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: DMatrix<f64>,
}

impl Projector {
    /// Projector onto `{0}` in `R^n`.
    pub fn zero(n: usize) -> Self {
        Projector {
            basis: DMatrix::zeros(n, 0),
        }
    }

    /// Projector onto `range(m)`, rank-revealing through the SVD.
    pub fn onto_range(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if m.ncols() == 0 {
            return Projector::zero(n);
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if smax == 0.0 {
            return Projector::zero(n);
        }
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > RANK_TOL * smax)
            .map(|(i, _)| i)
            .collect();
        Projector {
            basis: u.select_columns(keep.iter()),
        }
    }

    /// Projector onto the span of the listed columns of `x`.
    pub fn onto_columns(x: &DMatrix<f64>, cols: &[usize]) -> Self {
        if cols.is_empty() {
            return Projector::zero(x.nrows());
        }
        Projector::onto_range(&x.select_columns(cols.iter()))
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return DVector::zeros(v.len());
        }
        let coords = self.basis.tr_mul(v);
        &self.basis * coords
    }

    /// `v - Pi v`.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.apply(v)
    }

    /// The dense `n x n` projection matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// `Pi_{range(X_J)} v`; the empty column set projects onto `{0}`.
pub fn project_onto(x: &DMatrix<f64>, cols: &[usize], v: &DVector<f64>) -> DVector<f64> {
    Projector::onto_columns(x, cols).apply(v)
}

/// `||X (beta_hat - beta0)||^2`.
pub fn prediction_loss(x: &DMatrix<f64>, beta_hat: &[f64], beta0: &[f64]) -> Result<f64> {
    if beta_hat.len() != x.ncols() || beta0.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "coefficient lengths {} and {} against {} columns",
            beta_hat.len(),
            beta0.len(),
            x.ncols()
        )));
    }
    let diff = DVector::from_iterator(
        beta_hat.len(),
        beta_hat.iter().zip(beta0).map(|(a, b)| a - b),
    );
    Ok((x * diff).norm_squared())
}

/// `X beta` for a coefficient slice.
pub fn fitted(x: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    x * DVector::from_column_slice(beta)
}
