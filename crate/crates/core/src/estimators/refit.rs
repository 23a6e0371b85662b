//! Least squares restricted to a support (Gauss-Lasso refit).

use nalgebra::{DMatrix, DVector};

use super::{EstimatorPath, FitResult};
use crate::error::Result;
use crate::model::{Dataset, Support, RANK_TOL};

/// Least squares on the columns in `support`; rank-deficient column sets get
/// the minimum-norm solution and a `rank_deficient` flag.
pub fn gauss_lasso_refit(data: &Dataset, support: &Support) -> Result<FitResult> {
    let cols = support.indices();
    let mut beta = vec![0.0; data.p()];
    let mut flags = Vec::new();
    if !cols.is_empty() {
        let xs = DMatrix::from_fn(data.n(), cols.len(), |i, a| data.x()[(i, cols[a])]);
        let svd = xs.svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = RANK_TOL * smax;
        let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
        if rank < cols.len() {
            flags.push("rank_deficient".to_string());
        }
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let mut coef = DVector::zeros(cols.len());
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s > cutoff {
                let proj = u.column(k).dot(data.y()) / s;
                coef.axpy(proj, &v_t.row(k).transpose(), 1.0);
            }
        }
        for (a, &j) in cols.iter().enumerate() {
            beta[j] = coef[a];
        }
    }
    let mut fit = FitResult::from_beta(data, beta, None);
    // The refit keeps the selected support even where a coefficient is tiny.
    fit.support = support.clone();
    fit.flags = flags;
    Ok(fit)
}

/// Refits every point of a path on its own support, keeping the grid.
/// Consecutive points sharing a support share one least-squares solve.
pub fn refit_path(data: &Dataset, path: &EstimatorPath) -> Result<EstimatorPath> {
    let mut fits: Vec<FitResult> = Vec::with_capacity(path.len());
    for (f, &l) in path.fits.iter().zip(&path.grid) {
        let mut r = match fits.last() {
            Some(prev) if prev.support == f.support => prev.clone(),
            _ => gauss_lasso_refit(data, &f.support)?,
        };
        r.lambda = Some(l);
        fits.push(r);
    }
    EstimatorPath::new(path.grid.clone(), fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_full_supports() {
        let d = Dataset::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]], vec![1.0, -1.0]).unwrap();
        let empty = gauss_lasso_refit(&d, &Support::empty()).unwrap();
        assert_eq!(empty.beta, vec![0.0, 0.0]);
        assert!((empty.rss - 2.0).abs() < 1e-15);
        let full = gauss_lasso_refit(&d, &Support::new(vec![0, 1])).unwrap();
        assert!(full.rss < 1e-20);
        assert!(full.flags.is_empty());
    }

    #[test]
    fn duplicated_columns_flagged() {
        let d = Dataset::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 0.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let fit = gauss_lasso_refit(&d, &Support::new(vec![0, 1])).unwrap();
        assert_eq!(fit.flags, vec!["rank_deficient"]);
        assert!((fit.beta[0] - 0.5).abs() < 1e-12 && (fit.beta[1] - 0.5).abs() < 1e-12);
        assert!((fit.rss - 9.0).abs() < 1e-12);
    }
}
