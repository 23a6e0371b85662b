//! Coordinate descent on the Gram matrix with active-set sweeps.

use nalgebra::{DMatrix, DVector};

use super::{check_decreasing, gram, EstimatorPath, FitResult};
use crate::error::{Error, Result};
use crate::model::{Dataset, RANK_TOL};

pub const DEFAULT_GRID_LEN: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;
const POLISH_TOL: f64 = 1e-6;
const COARSE_SWEEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// Stop once no coordinate moves by more than this (relative to `max(1, |beta|_inf)`).
    pub coef_tol: f64,
    /// Required stationarity residual (relative to `max(1, |X'Y|_inf / 1000)`).
    pub kkt_tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { max_sweeps: 100_000, coef_tol: 1e-10, kkt_tol: 1e-9 }
    }
}

/// Smallest `lambda` for which the zero vector is optimal: `2 |X'Y|_inf`.
pub fn null_threshold(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    2.0 * x.tr_mul(y).amax()
}

/// `len` log-spaced values from `lambda_max` down to `ratio * lambda_max`.
pub fn default_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if lambda_max <= 0.0 || len == 0 {
        return vec![0.0];
    }
    if len == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso solver bound to one design; the Gram matrix is computed once and
/// shared by every fit.
#[derive(Debug, Clone)]
pub struct LassoSolver<'a> {
    data: &'a Dataset,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    opts: LassoOptions,
}

impl<'a> LassoSolver<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        LassoSolver {
            data,
            gram: gram(data.x()),
            xty: data.x().tr_mul(data.y()),
            opts: LassoOptions::default(),
        }
    }

    pub fn with_options(mut self, opts: LassoOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    pub fn null_threshold(&self) -> f64 {
        2.0 * self.xty.amax()
    }

    pub fn fit(&self, lambda: f64, warm: Option<&[f64]>) -> Result<FitResult> {
        let beta = self.solve(&self.xty, lambda, warm)?;
        Ok(FitResult::from_beta(self.data, beta, Some(lambda)))
    }

    /// Coefficients of the Lasso with response `scale * Y`.
    pub(crate) fn solve_scaled(&self, scale: f64, lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        self.solve(&(&self.xty * scale), lambda, warm)
    }

    /// Warm-started fits along `grid`, or along the default grid when absent.
    pub fn path(&self, grid: Option<&[f64]>) -> Result<EstimatorPath> {
        let grid = match grid {
            Some(g) => {
                check_decreasing(g)?;
                if g.is_empty() {
                    return Err(Error::Domain("empty tuning grid".into()));
                }
                g.to_vec()
            }
            None => default_grid(self.null_threshold(), DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO),
        };
        let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
        for &lambda in &grid {
            let warm = fits.last().map(|f| f.beta.as_slice());
            fits.push(self.fit(lambda, warm)?);
        }
        EstimatorPath::new(grid, fits)
    }

    fn solve(&self, c: &DVector<f64>, lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Domain(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let p = self.gram.ncols();
        let mut beta = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            Some(w) => {
                return Err(Error::Dimension(format!("warm start has {} entries, expected {p}", w.len())));
            }
            None => vec![0.0; p],
        };
        if 2.0 * c.amax() <= lambda {
            return Ok(vec![0.0; p]);
        }
        let g = &self.gram;
        let half = lambda / 2.0;
        let kkt_tol = self.opts.kkt_tol * (c.amax() * 1e-3).max(1.0);
        let mut q = g * DVector::from_column_slice(&beta);

        let update = |j: usize, beta: &mut [f64], q: &mut DVector<f64>| -> f64 {
            let a = g[(j, j)];
            let new = if a > 0.0 { soft(c[j] - q[j] + a * beta[j], half) / a } else { 0.0 };
            let d = new - beta[j];
            if d != 0.0 {
                q.axpy(d, &g.column(j), 1.0);
                beta[j] = new;
            }
            d.abs()
        };

        let mut sweeps = 0usize;
        let mut violation = f64::INFINITY;
        while sweeps < self.opts.max_sweeps {
            let scale = beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
            let ctol = self.opts.coef_tol * scale;
            let mut moved = 0.0f64;
            for j in 0..p {
                moved = moved.max(update(j, &mut beta, &mut q));
            }
            sweeps += 1;
            if moved <= ctol {
                q = g * DVector::from_column_slice(&beta);
                violation = kkt_residual(c, &q, &beta, lambda);
                if violation <= kkt_tol {
                    return Ok(beta);
                }
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            // A short coarse pass, then an exact active-set search; coordinate
            // descent crawls when the active Gram block is ill-conditioned.
            let mut inner = 0;
            while sweeps < self.opts.max_sweeps && inner < COARSE_SWEEPS {
                let mut moved = 0.0f64;
                for &j in &active {
                    moved = moved.max(update(j, &mut beta, &mut q));
                }
                sweeps += 1;
                inner += 1;
                if moved <= POLISH_TOL * scale {
                    break;
                }
            }
            if let Some(b) = self.feature_sign(c, lambda, &beta, kkt_tol) {
                return Ok(b);
            }
            inner = 0;
            while sweeps < self.opts.max_sweeps && inner < 10 * COARSE_SWEEPS {
                let mut moved = 0.0f64;
                for &j in &active {
                    moved = moved.max(update(j, &mut beta, &mut q));
                }
                sweeps += 1;
                inner += 1;
                if moved <= ctol {
                    break;
                }
            }
        }
        Err(Error::NonConvergence { what: "lasso coordinate descent", iterations: sweeps, violation })
    }

    /// Feature-sign search started at `start`: on the current signed active
    /// set, move towards the nearest stationary point of the smooth problem,
    /// stopping at the first sign change (that coordinate leaves), and admit
    /// the worst inactive violator once the active equations hold. Least-norm
    /// corrections keep singular active blocks usable.
    fn feature_sign(&self, c: &DVector<f64>, lambda: f64, start: &[f64], kkt_tol: f64) -> Option<Vec<f64>> {
        let g = &self.gram;
        let p = start.len();
        let half = lambda / 2.0;
        let mut beta = start.to_vec();
        let mut sign: Vec<f64> = beta.iter().map(|b| if *b == 0.0 { 0.0 } else { b.signum() }).collect();
        for _ in 0..4 * p + 20 {
            let active: Vec<usize> = (0..p).filter(|&j| sign[j] != 0.0).collect();
            let q = g * DVector::from_column_slice(&beta);
            if !active.is_empty() {
                let k = active.len();
                let gaa = DMatrix::from_fn(k, k, |a, b| g[(active[a], active[b])]);
                let defect = DVector::from_fn(k, |a, _| {
                    let j = active[a];
                    c[j] - half * sign[j] - q[j]
                });
                let svd = gaa.svd(true, true);
                let eps = RANK_TOL * svd.singular_values.max();
                let (imin, smin) = svd.singular_values.argmin();
                if smin <= eps {
                    // Redundant active columns: slide along a null direction
                    // of X_A (fit unchanged, l1 norm not increasing) until a
                    // coordinate reaches zero.
                    let v = svd.v_t.as_ref()?.row(imin).transpose();
                    let slope: f64 = active.iter().enumerate().map(|(a, &j)| sign[j] * v[a]).sum();
                    let dir = if slope > 0.0 { -v } else { v };
                    let mut best: Option<(f64, usize)> = None;
                    for (a, &j) in active.iter().enumerate() {
                        if dir[a] * sign[j] < 0.0 {
                            let t = -beta[j] / dir[a];
                            if best.is_none_or(|(bt, _)| t < bt) {
                                best = Some((t, j));
                            }
                        }
                    }
                    let (t, hit) = best?;
                    for (a, &j) in active.iter().enumerate() {
                        beta[j] += t * dir[a];
                    }
                    beta[hit] = 0.0;
                    sign[hit] = 0.0;
                    continue;
                }
                let step = svd.solve(&defect, eps).ok()?;
                // First sign change along beta + t * step, t in (0, 1].
                let mut t_hit = 1.0;
                let mut hit = None;
                for (a, &j) in active.iter().enumerate() {
                    let next = beta[j] + step[a];
                    if next * sign[j] <= 0.0 && step[a] != 0.0 {
                        let t = -beta[j] / step[a];
                        if t < t_hit {
                            t_hit = t;
                            hit = Some(j);
                        }
                    }
                }
                for (a, &j) in active.iter().enumerate() {
                    beta[j] += t_hit * step[a];
                }
                if let Some(j) = hit {
                    beta[j] = 0.0;
                    sign[j] = 0.0;
                    continue;
                }
            }
            let q = g * DVector::from_column_slice(&beta);
            let worst = (0..p)
                .filter(|&j| sign[j] == 0.0)
                .map(|j| (j, c[j] - q[j]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
            match worst {
                Some((j, grad)) if 2.0 * grad.abs() - lambda > kkt_tol => sign[j] = grad.signum(),
                _ => return (kkt_residual(c, &q, &beta, lambda) <= kkt_tol).then_some(beta),
            }
        }
        None
    }
}

fn kkt_residual(c: &DVector<f64>, q: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(j, &b)| {
            let g2 = 2.0 * (c[j] - q[j]);
            if b != 0.0 {
                (g2 - lambda * b.signum()).abs()
            } else {
                (g2.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso fit at one tuning value.
pub fn lasso_fit(data: &Dataset, lambda: f64, warm: Option<&[f64]>) -> Result<FitResult> {
    LassoSolver::new(data).fit(lambda, warm)
}

/// Lasso path, warm-started along a strictly decreasing grid.
pub fn lasso_path(data: &Dataset, grid: Option<&[f64]>) -> Result<EstimatorPath> {
    LassoSolver::new(data).path(grid)
}

/// Largest stationarity violation of `beta` for the Lasso criterion,
/// evaluated directly from the residual.
pub fn lasso_kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    let xtr = x.tr_mul(&r);
    let zero = DVector::zeros(beta.len());
    kkt_residual(&xtr, &zero, beta, lambda)
}

/// `||Y - X beta||^2 + lambda |beta|_1`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    r.norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}
