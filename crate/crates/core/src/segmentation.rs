//! Changepoint segmentation of a signal observed with identity design.
//!
//! A breakpoint `b` means a new segment starts at (0-based) position `b`, so
//! breakpoints lie in `1..n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{default_grid, EstimatorPath, FitResult, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO};
use crate::linselect::{linselect_select, Collection, ModelSpace};
use crate::model::{Dataset, Support};
use crate::penalty::seg_pen_solve;
use crate::selectors::slope_heuristic_select;

/// Multiplier of the segmentation penalty in the variance-free criterion.
pub const SEG_PENALTY_MULTIPLIER: f64 = 1.1;

/// Best partitions for every number of breakpoints `q = 0..=q_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFamily {
    pub n: usize,
    pub breakpoints: Vec<Vec<usize>>,
    pub rss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub method: String,
    pub q: usize,
    pub breakpoints: Vec<usize>,
    pub fitted: Vec<f64>,
    pub rss_by_q: Vec<f64>,
    /// Criterion value per candidate (per `q`, or per grid point for TV).
    pub criterion: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn check_signal(y: &[f64]) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::Domain(format!("segmentation needs n >= 2, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in signal".into()));
    }
    Ok(())
}

/// Piecewise-constant fit equal to the segment means.
pub fn segment_means(y: &[f64], breakpoints: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    let mut start = 0;
    for &end in breakpoints.iter().chain(std::iter::once(&y.len())) {
        let m = y[start..end].iter().sum::<f64>() / (end - start) as f64;
        out[start..end].iter_mut().for_each(|v| *v = m);
        start = end;
    }
    out
}

/// Residual sum of squares of the segment-mean fit.
pub fn partition_rss(y: &[f64], breakpoints: &[usize]) -> f64 {
    segment_means(y, breakpoints).iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum()
}

/// Exact least-squares partitions by dynamic programming over suffixes,
/// `O(q_max n^2)`. Among equal-cost partitions the lexicographically smallest
/// breakpoint set is returned.
pub fn dp_best_partitions(y: &[f64], q_max: usize) -> Result<PartitionFamily> {
    check_signal(y)?;
    let n = y.len();
    if q_max > n - 1 {
        return Err(Error::Domain(format!("q_max={q_max} exceeds n-1={}", n - 1)));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, v) in y.iter().enumerate() {
        let c = v - mean;
        s1[i + 1] = s1[i] + c;
        s2[i + 1] = s2[i] + c * c;
    }
    let cost = |i: usize, j: usize| {
        let d = s1[j] - s1[i];
        (s2[j] - s2[i] - d * d / (j - i) as f64).max(0.0)
    };
    // best[q][i]: cost of splitting y[i..] into q + 1 segments.
    let mut best = vec![vec![f64::INFINITY; n + 1]; q_max + 1];
    let mut choice = vec![vec![usize::MAX; n + 1]; q_max + 1];
    for i in 0..n {
        best[0][i] = cost(i, n);
    }
    for q in 1..=q_max {
        for i in 0..n - q {
            let (mut bv, mut bj) = (f64::INFINITY, usize::MAX);
            for j in i + 1..=n - q {
                let v = cost(i, j) + best[q - 1][j];
                if v < bv {
                    bv = v;
                    bj = j;
                }
            }
            best[q][i] = bv;
            choice[q][i] = bj;
        }
    }
    let mut breakpoints = Vec::with_capacity(q_max + 1);
    let mut rss = Vec::with_capacity(q_max + 1);
    for q in 0..=q_max {
        let mut bps = Vec::with_capacity(q);
        let mut i = 0;
        for level in (1..=q).rev() {
            i = choice[level][i];
            bps.push(i);
        }
        rss.push(partition_rss(y, &bps));
        breakpoints.push(bps);
    }
    Ok(PartitionFamily { n, breakpoints, rss })
}

fn finish(method: &str, y: &[f64], fam: PartitionFamily, criterion: Vec<f64>, q: usize) -> Segmentation {
    let breakpoints = fam.breakpoints[q].clone();
    Segmentation {
        method: method.to_string(),
        q,
        fitted: segment_means(y, &breakpoints),
        breakpoints,
        rss_by_q: fam.rss,
        criterion,
        sigma2: None,
        flags: Vec::new(),
    }
}

/// Default largest number of breakpoints for the variance-free criterion.
pub fn default_bgh_qmax(n: usize) -> usize {
    n.saturating_sub(1) / 4
}

/// Variance-free selection `rss_q (1 + 1.1 pen(q))` with `pen(q)` solving the
/// chi-square moment equation for `(q + 2, n - q - 2)` degrees of freedom.
pub fn segment_select_bgh(y: &[f64], q_max: Option<usize>) -> Result<Segmentation> {
    check_signal(y)?;
    let n = y.len();
    let q_max = q_max.unwrap_or_else(|| default_bgh_qmax(n));
    if q_max as f64 > (n as f64 - 1.0) / 4.0 {
        return Err(Error::Domain(format!("q_max={q_max} exceeds (n-1)/4 for n={n}")));
    }
    let fam = dp_best_partitions(y, q_max)?;
    let crit = (0..=q_max)
        .map(|q| Ok(fam.rss[q] * (1.0 + SEG_PENALTY_MULTIPLIER * seg_pen_solve(n, q)?)))
        .collect::<Result<Vec<f64>>>()?;
    let zero = fam.rss.iter().position(|r| *r == 0.0);
    let q = zero.unwrap_or_else(|| argmin_first(&crit));
    let mut seg = finish("bgh", y, fam, crit, q);
    if zero.is_some() {
        seg.flags.push("zero_rss".into());
    }
    Ok(seg)
}

fn argmin_first(v: &[f64]) -> usize {
    let mut b = 0;
    for i in 1..v.len() {
        if v[i] < v[b] {
            b = i;
        }
    }
    b
}

/// `(q + 1)(2 ln(n / (q + 1)) + 5)`, the known-variance penalty shape.
pub fn lebarbier_shape(n: usize, q: usize) -> f64 {
    let q1 = (q + 1) as f64;
    q1 * (2.0 * (n as f64 / q1).ln() + 5.0)
}

/// Known-variance selection `rss_q + (q + 1)(2 ln(n/(q+1)) + 5) sigma2`;
/// ties go to the larger `q`.
pub fn segment_select_lebarbier(y: &[f64], q_max: Option<usize>, sigma2: f64) -> Result<Segmentation> {
    check_signal(y)?;
    if !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(Error::Domain(format!("variance must be finite and nonnegative, got {sigma2}")));
    }
    let n = y.len();
    let q_max = q_max.unwrap_or(n - 1);
    let fam = dp_best_partitions(y, q_max)?;
    let crit: Vec<f64> = (0..=q_max).map(|q| fam.rss[q] + lebarbier_shape(n, q) * sigma2).collect();
    let mut q = 0;
    for i in 1..crit.len() {
        if crit[i] <= crit[q] {
            q = i;
        }
    }
    let mut seg = finish("lebarbier", y, fam, crit, q);
    seg.sigma2 = Some(sigma2);
    Ok(seg)
}

/// Difference-based variance estimate `sum_i (Y_{2i} - Y_{2i-1})^2 / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma2: f64,
    /// Set when `n` was odd and the last observation was ignored.
    pub dropped_last: bool,
}

pub fn variance_plugin(y: &[f64]) -> Result<VarianceEstimate> {
    if y.len() < 2 {
        return Err(Error::Domain(format!("variance estimate needs n >= 2, got {}", y.len())));
    }
    let m = y.len() / 2;
    let s: f64 = (0..m).map(|i| (y[2 * i + 1] - y[2 * i]).powi(2)).sum();
    Ok(VarianceEstimate { sigma2: s / (2 * m) as f64, dropped_last: y.len() % 2 == 1 })
}

/// Slope-heuristic calibration of the Lebarbier shape over `q = 0..=q_max`
/// (default `n / 2`).
pub fn segment_select_slope(y: &[f64], q_max: Option<usize>) -> Result<Segmentation> {
    check_signal(y)?;
    let n = y.len();
    let q_max = q_max.unwrap_or((n / 2).min(n - 1));
    let fam = dp_best_partitions(y, q_max)?;
    let dims: Vec<usize> = (0..=q_max).collect();
    let shape: Vec<f64> = dims.iter().map(|&q| lebarbier_shape(n, q)).collect();
    // Exact minima are nonincreasing in q; clear rounding-level reversals.
    let mut monotone = fam.rss.clone();
    for i in 1..monotone.len() {
        monotone[i] = monotone[i].min(monotone[i - 1]);
    }
    let report = slope_heuristic_select(&dims, &monotone, &shape)?;
    let crit = report.rows.iter().map(|r| r.crit).collect();
    let mut seg = finish("slope", y, fam, crit, report.chosen);
    seg.sigma2 = report.sigma2;
    seg.flags = report.flags;
    Ok(seg)
}

/// Smallest `lambda` at which the total-variation fit is constant:
/// `2 max_k |sum_{t <= k} (y_t - mean)|`.
pub fn tv_lambda_max(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for v in &y[..y.len() - 1] {
        acc += v - mean;
        best = best.max(acc.abs());
    }
    2.0 * best
}

/// Exact minimizer of `0.5 ||y - x||^2 + mu sum |x_{k+1} - x_k|` by Condat's
/// direct taut-string algorithm.
fn condat(y: &[f64], mu: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (mu, -mu);
    let (mut vmin, mut vmax) = (y[0] - mu, y[0] + mu);
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                while k0 <= kminus {
                    out[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = mu;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    out[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = -mu;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return out;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -mu {
            while k0 <= kminus {
                out[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k0];
            vmax = vmin + 2.0 * mu;
            umin = mu;
            umax = -mu;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > mu {
            while k0 <= kplus {
                out[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = y[k0];
            vmin = vmax - 2.0 * mu;
            umin = mu;
            umax = -mu;
            continue;
        }
        k += 1;
        if umin >= mu {
            kminus = k;
            vmin += (umin - mu) / (k - k0 + 1) as f64;
            umin = mu;
        }
        if umax <= -mu {
            kplus = k;
            vmax += (umax + mu) / (k - k0 + 1) as f64;
            umax = -mu;
        }
    }
}

/// Stationarity violation of `beta` for `||y - beta||^2 + lambda TV(beta)`,
/// through the running sums `u_k = 2 sum_{t <= k} (y_t - beta_t)`: they must
/// vanish at `k = n - 1`, stay within `[-lambda, lambda]`, and equal
/// `-lambda sign(beta_{k+1} - beta_k)` across jumps.
pub fn tv_kkt_violation(y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let mut u = 0.0;
    let mut worst = 0.0f64;
    for k in 0..n {
        u += 2.0 * (y[k] - beta[k]);
        if k == n - 1 {
            worst = worst.max(u.abs());
        } else {
            let d = beta[k + 1] - beta[k];
            let v = if d != 0.0 { (u + lambda * d.signum()).abs() } else { (u.abs() - lambda).max(0.0) };
            worst = worst.max(v);
        }
    }
    worst
}

/// `||y - beta||^2 + lambda sum |beta_{k+1} - beta_k|`.
pub fn tv_objective(y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(beta).map(|(a, b)| (a - b).powi(2)).sum();
    fit + lambda * beta.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
}

/// Total-variation (1-D fused Lasso) fit at `lambda`, certificate-checked.
pub fn tv_fit(y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_signal(y)?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(y.to_vec());
    }
    if lambda >= tv_lambda_max(y) {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(vec![m; y.len()]);
    }
    let beta = condat(y, lambda / 2.0);
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let violation = tv_kkt_violation(y, &beta, lambda);
    if violation > 1e-8 * scale {
        return Err(Error::NonConvergence { what: "total-variation solver", iterations: 1, violation });
    }
    Ok(beta)
}

/// Design whose coefficients are a signal's first value and its successive
/// differences: column 0 is all ones, column `j >= 1` is `1{i >= j}`.
pub fn step_design(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == 0 || i >= j { 1.0 } else { 0.0 })
}

/// Difference coordinates of a signal: `theta_0 = beta_0`, `theta_j = beta_j - beta_{j-1}`.
pub fn to_differences(beta: &[f64]) -> Vec<f64> {
    let mut theta = Vec::with_capacity(beta.len());
    theta.push(beta[0]);
    theta.extend(beta.windows(2).map(|w| w[1] - w[0]));
    theta
}

/// Total-variation fits along a decreasing grid (default: 100 log-spaced
/// values from the constant-fit threshold down to 1e-3 of it). Each fit is
/// stored in difference coordinates, so its support holds the intercept and
/// the breakpoints.
pub fn tv_path(y: &[f64], grid: Option<&[f64]>) -> Result<EstimatorPath> {
    check_signal(y)?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => default_grid(tv_lambda_max(y), DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO),
    };
    let fits = grid
        .iter()
        .map(|&l| {
            let beta = tv_fit(y, l)?;
            let rss = y.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum();
            let theta = to_differences(&beta);
            Ok(FitResult {
                support: Support::of(&theta),
                beta: theta,
                lambda: Some(l),
                lambdas: None,
                rss,
                sigma_hat: None,
                flags: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EstimatorPath::new(grid, fits)
}

/// Breakpoints carried by a fit in difference coordinates.
pub fn breakpoints_of(theta_support: &Support) -> Vec<usize> {
    theta_support.indices().iter().copied().filter(|&j| j > 0).collect()
}

/// Tunes the total-variation path with LinSelect on the step design. Every
/// candidate space contains the intercept column; the returned fit is the
/// segment-mean refit on the selected breakpoints.
pub fn segment_select_tv_linselect(y: &[f64], grid: Option<&[f64]>) -> Result<Segmentation> {
    check_signal(y)?;
    let n = y.len();
    if n < 3 {
        return Err(Error::Domain("LinSelect on the step design needs n >= 3".into()));
    }
    let data = Dataset::new(step_design(n), DVector::from_column_slice(y))?;
    let path = tv_path(y, grid)?;
    let bound = n as f64 / (3.0 * (n as f64).ln());
    let mut seen = std::collections::HashSet::new();
    let mut spaces = Vec::new();
    for fit in &path.fits {
        let mut cols = fit.support.indices().to_vec();
        cols.push(0);
        let s = Support::new(cols);
        if s.len() as f64 > bound || !seen.insert(s.clone()) {
            continue;
        }
        if let Some(space) = ModelSpace::coordinate(&data, s)? {
            spaces.push(space);
        }
    }
    let flags = if spaces.is_empty() { vec!["empty_collection".to_string()] } else { Vec::new() };
    let collection = Collection { spaces, flags };
    let report = linselect_select(&path, &collection, &data)?;
    let chosen = &path.fits[report.chosen];
    let breakpoints = breakpoints_of(&chosen.support);
    Ok(Segmentation {
        method: "tv+linselect".into(),
        q: breakpoints.len(),
        fitted: segment_means(y, &breakpoints),
        breakpoints,
        rss_by_q: Vec::new(),
        criterion: report.rows.iter().map(|r| r.crit).collect(),
        sigma2: report.sigma2,
        flags: report.flags,
    })
}
