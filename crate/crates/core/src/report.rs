//! Selection output shared by LinSelect and the baseline selectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Support;

/// Additive pieces of a selection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub fit: f64,
    pub approximation: f64,
    pub penalty: f64,
}

impl Components {
    pub fn total(&self) -> f64 {
        self.fit + self.approximation + self.penalty
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    /// Position of the candidate in its family (path index, dimension, ...).
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Support size of the candidate estimator (or model dimension).
    pub dim: usize,
    /// Model space attaining the criterion, when the criterion uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Support>,
    pub crit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Components>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: String,
    pub rows: Vec<CandidateRow>,
    /// `index` of the winning row.
    pub chosen: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_space: Option<Support>,
    /// Variance estimate implied by the selection, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl SelectionReport {
    /// Picks the row with the smallest criterion. Exact ties go to the
    /// smaller `dim`, then to the earlier row; on a decreasing tuning grid the
    /// earlier row is the larger `lambda`.
    pub fn from_rows(method: &str, rows: Vec<CandidateRow>) -> Result<Self> {
        let best = argmin_row(&rows).ok_or_else(|| Error::Unavailable(format!("{method}: no eligible candidate")))?;
        let row = &rows[best];
        Ok(SelectionReport {
            method: method.to_string(),
            chosen: row.index,
            chosen_lambda: row.lambda,
            chosen_space: row.space.clone(),
            sigma2: None,
            flags: Vec::new(),
            rows,
        })
    }

    pub fn chosen_row(&self) -> &CandidateRow {
        self.rows.iter().find(|r| r.index == self.chosen).expect("chosen row is present")
    }
}

pub(crate) fn argmin_row(rows: &[CandidateRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &rows[b];
                if r.crit < cur.crit || (r.crit == cur.crit && r.dim < cur.dim) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}
