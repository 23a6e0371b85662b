//! Fitting procedures. All Lasso-type criteria use the un-halved convention
//! `||Y - X beta||^2 + lambda * penalty(beta)`, so stationarity reads
//! `2 X_j'(Y - X beta) = lambda * sign(beta_j)` and orthonormal designs
//! soft-threshold `X'Y` at `lambda / 2`.

mod group;
mod lasso;
mod refit;
mod scaled;
mod threshold;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Support};

pub use group::{group_kkt_violation, group_lasso_fit, group_lasso_objective, GroupLassoSolver};
pub use lasso::{
    default_grid, lasso_fit, lasso_kkt_violation, lasso_objective, lasso_path, null_threshold, LassoOptions,
    LassoSolver, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO,
};
pub use refit::{gauss_lasso_refit, refit_path};
pub use scaled::{penalized_loglik_fit, penalized_loglik_objective, sqrt_lasso_fit, sqrt_lasso_objective, ScaledOptions};
pub use threshold::{scad_penalty, scalar_threshold, threshold_vector, ThresholdKind, DEFAULT_SCAD_A};

/// A fitted coefficient vector with the tuning value that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub support: Support,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    pub rss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl FitResult {
    /// Wraps `beta`, computing support and residual sum of squares against `data`.
    pub fn from_beta(data: &Dataset, beta: Vec<f64>, lambda: Option<f64>) -> Self {
        let support = Support::of(&beta);
        let rss = residual_ss(data, &beta, &support);
        FitResult { beta, support, lambda, lambdas: None, rss, sigma_hat: None, flags: Vec::new() }
    }

    pub fn zero(data: &Dataset, lambda: Option<f64>) -> Self {
        FitResult::from_beta(data, vec![0.0; data.p()], lambda)
    }
}

pub(crate) fn residual_ss(data: &Dataset, beta: &[f64], support: &Support) -> f64 {
    let mut r = data.y().clone();
    for &j in support.indices() {
        r.axpy(-beta[j], &data.x().column(j), 1.0);
    }
    r.norm_squared()
}

/// A family of fits indexed by a strictly decreasing tuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorPath {
    pub grid: Vec<f64>,
    pub fits: Vec<FitResult>,
}

impl EstimatorPath {
    pub fn new(grid: Vec<f64>, fits: Vec<FitResult>) -> Result<Self> {
        if grid.len() != fits.len() {
            return Err(Error::Dimension(format!("{} grid values for {} fits", grid.len(), fits.len())));
        }
        if grid.is_empty() {
            return Err(Error::Domain("empty estimator path".into()));
        }
        check_decreasing(&grid)?;
        Ok(EstimatorPath { grid, fits })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub(crate) fn check_decreasing(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Domain("tuning values must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("tuning grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// A partition of the columns into nonempty blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
}

impl GroupStructure {
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        let mut groups = groups;
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::Domain("empty group".into()));
            }
            g.sort_unstable();
            for &j in g.iter() {
                if j >= p {
                    return Err(Error::Domain(format!("group column {j} out of range for p={p}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::Domain(format!("column {j} appears in two groups")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Domain(format!("column {j} belongs to no group")));
        }
        Ok(GroupStructure { groups })
    }

    /// Groups from one label per column; groups are ordered by label.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let groups = distinct
            .iter()
            .map(|l| labels.iter().enumerate().filter(|(_, x)| *x == l).map(|(j, _)| j).collect())
            .collect();
        GroupStructure::new(groups, labels.len())
    }

    /// Consecutive blocks of `size` columns (the last block may be shorter).
    pub fn contiguous(p: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("group size must be positive".into()));
        }
        let groups = (0..p).step_by(size).map(|s| (s..(s + size).min(p)).collect()).collect();
        GroupStructure::new(groups, p)
    }

    pub fn singletons(p: usize) -> Self {
        GroupStructure { groups: (0..p).map(|j| vec![j]).collect() }
    }

    /// Number of groups `M`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn p(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn block(&self, k: usize) -> &[usize] {
        &self.groups[k]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Indices of groups holding a nonzero coefficient.
    pub fn active_groups(&self, beta: &[f64]) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.groups[k].iter().any(|&j| beta[j].abs() > crate::model::SUPPORT_TOL))
            .collect()
    }

    /// Union of the columns of the given groups, sorted.
    pub fn columns_of(&self, ks: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = ks.iter().flat_map(|&k| self.groups[k].iter().copied()).collect();
        cols.sort_unstable();
        cols
    }
}

pub(crate) fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_structure_validation() {
        assert!(GroupStructure::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(GroupStructure::new(vec![vec![0, 1]], 3).is_err());
        assert!(GroupStructure::new(vec![vec![0], vec![]], 1).is_err());
        let g = GroupStructure::from_labels(&[2, 0, 2, 1]).unwrap();
        assert_eq!(g.blocks(), &[vec![1], vec![3], vec![0, 2]]);
        let c = GroupStructure::contiguous(7, 3).unwrap();
        assert_eq!(c.blocks(), &[vec![0, 1, 2], vec![3, 4, 5], vec![6]]);
    }

    #[test]
    fn path_requires_decreasing_grid() {
        let data = Dataset::from_rows(&[vec![1.0], vec![0.0]], vec![1.0, 0.0]).unwrap();
        let f = FitResult::zero(&data, Some(1.0));
        assert!(EstimatorPath::new(vec![1.0, 1.0], vec![f.clone(), f.clone()]).is_err());
        assert!(EstimatorPath::new(vec![2.0, 1.0], vec![f.clone(), f]).is_ok());
    }
}
