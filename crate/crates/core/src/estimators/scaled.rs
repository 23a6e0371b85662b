//! Variance-adaptive Lasso variants: the square-root (scaled) Lasso and the
//! l1-penalized Gaussian log-likelihood.

use nalgebra::{DMatrix, DVector};

use super::{residual_ss, FitResult, LassoSolver};
use crate::error::{Error, Result};
use crate::model::{Dataset, Support};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledOptions {
    pub max_iter: usize,
    /// Movement tolerance, relative to the initial scale `||Y|| / sqrt(n)`.
    pub tol: f64,
}

impl Default for ScaledOptions {
    fn default() -> Self {
        ScaledOptions { max_iter: 500, tol: 1e-9 }
    }
}

fn max_move(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The answer for `Y = 0`: zero coefficients and zero scale, flagged.
fn degenerate_zero(data: &Dataset, lambda: f64) -> FitResult {
    let mut fit = FitResult::zero(data, Some(lambda));
    fit.sigma_hat = Some(0.0);
    fit.flags.push("degenerate".into());
    fit
}

/// Square-root Lasso by alternating a Lasso step at penalty `2 sigma lambda`
/// with the update `sigma = ||Y - X beta|| / sqrt(n)`, starting from
/// `sigma = ||Y|| / sqrt(n)`.
pub fn sqrt_lasso_fit(data: &Dataset, lambda: f64) -> Result<FitResult> {
    sqrt_lasso_fit_with(data, lambda, ScaledOptions::default())
}

pub fn sqrt_lasso_fit_with(data: &Dataset, lambda: f64, opts: ScaledOptions) -> Result<FitResult> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!("square-root Lasso needs lambda > 0, got {lambda}")));
    }
    let n = data.n() as f64;
    let scale = data.y().norm() / n.sqrt();
    if scale == 0.0 {
        return Ok(degenerate_zero(data, lambda));
    }
    let floor = 1e-10 * scale;
    let tol = opts.tol * scale;
    let solver = LassoSolver::new(data);
    let mut sigma = scale;
    let mut beta = vec![0.0; data.p()];
    for iter in 1..=opts.max_iter {
        let next = solver.solve_scaled(1.0, 2.0 * sigma * lambda, Some(&beta))?;
        let rss = residual_ss(data, &next, &Support::of(&next));
        let next_sigma = (rss / n).sqrt();
        if next_sigma < floor {
            return Err(Error::Degenerate { sigma: next_sigma });
        }
        let moved = max_move(&beta, &next).max((next_sigma - sigma).abs());
        beta = next;
        sigma = next_sigma;
        if moved < tol {
            let mut fit = FitResult::from_beta(data, beta, Some(lambda));
            fit.sigma_hat = Some(sigma);
            return Ok(fit);
        }
        if iter == opts.max_iter {
            return Err(Error::NonConvergence { what: "scaled Lasso alternation", iterations: iter, violation: moved });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `||Y - X beta|| + (lambda / sqrt(n)) |beta|_1`.
pub fn sqrt_lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    r.norm() + lambda / (y.len() as f64).sqrt() * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// l1-penalized log-likelihood over `(beta, sigma)`, solved in the convex
/// parametrization `phi = beta / sigma`, `rho = 1 / sigma`:
/// `-n ln rho + ||rho Y - X phi||^2 / 2 + lambda |phi|_1`.
pub fn penalized_loglik_fit(data: &Dataset, lambda: f64) -> Result<FitResult> {
    penalized_loglik_fit_with(data, lambda, ScaledOptions::default())
}

pub fn penalized_loglik_fit_with(data: &Dataset, lambda: f64, opts: ScaledOptions) -> Result<FitResult> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::Domain(format!("penalized likelihood needs lambda > 0, got {lambda}")));
    }
    let n = data.n() as f64;
    let yy = data.y().norm_squared();
    if yy == 0.0 {
        return Ok(degenerate_zero(data, lambda));
    }
    let scale = (yy / n).sqrt();
    let solver = LassoSolver::new(data);
    let xty = solver.xty().clone();
    let rho_of = |phi: &[f64]| {
        let b: f64 = phi.iter().zip(xty.iter()).map(|(f, c)| f * c).sum();
        (b + (b * b + 4.0 * n * yy).sqrt()) / (2.0 * yy)
    };
    let mut rho = 1.0 / scale;
    let mut phi = vec![0.0; data.p()];
    for iter in 1..=opts.max_iter {
        // With rho fixed the phi-step is a Lasso on (X, rho Y) at penalty 2 lambda.
        let next_phi = solver.solve_scaled(rho, 2.0 * lambda, Some(&phi))?;
        let next_rho = rho_of(&next_phi);
        let sigma = 1.0 / next_rho;
        if sigma < 1e-10 * scale {
            return Err(Error::Degenerate { sigma });
        }
        // Compare moves on the (beta, sigma) scale so the tolerance is scale-free.
        let moved = next_phi
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a / next_rho - b / rho).abs())
            .fold((sigma - 1.0 / rho).abs(), f64::max);
        phi = next_phi;
        rho = next_rho;
        if moved < opts.tol * scale {
            let beta = phi.iter().map(|f| f / rho).collect();
            let mut fit = FitResult::from_beta(data, beta, Some(lambda));
            fit.sigma_hat = Some(1.0 / rho);
            return Ok(fit);
        }
        if iter == opts.max_iter {
            return Err(Error::NonConvergence { what: "penalized likelihood alternation", iterations: iter, violation: moved });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `n ln sigma + ||Y - X beta||^2 / (2 sigma^2) + lambda |beta|_1 / sigma`.
pub fn penalized_loglik_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], sigma: f64, lambda: f64) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    let n = y.len() as f64;
    n * sigma.ln() + r.norm_squared() / (2.0 * sigma * sigma) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>() / sigma
}
