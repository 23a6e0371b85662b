//! Independent oracles shared by the integration tests. Nothing here calls the
//! algorithm it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use sparsetune_core::{Dataset, Support};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random Gaussian instance with a few planted coefficients.
pub fn planted(seed: u64, n: usize, p: usize, k: usize, amp: f64) -> Dataset {
    let mut r = rng(seed);
    let x = gaussian_matrix(&mut r, n, p);
    let mut beta = DVector::zeros(p);
    for j in 0..k.min(p) {
        beta[j] = if j % 2 == 0 { amp } else { -amp };
    }
    let y = &x * beta + gaussian_vector(&mut r, n);
    Dataset::new(x, y).unwrap()
}

pub fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    planted(seed, n, p, p.min(3), 1.0)
}

/// Modified Gram-Schmidt basis of the listed columns (rank-revealing with a
/// relative tolerance).
pub fn gram_schmidt(x: &DMatrix<f64>, cols: &[usize]) -> Vec<DVector<f64>> {
    let scale = cols.iter().map(|&j| x.column(j).norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for &j in cols {
        let mut v: DVector<f64> = x.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-9 * scale.max(1e-300) {
            basis.push(v / norm);
        }
    }
    basis
}

/// `Pi v` from an explicit orthonormal basis.
pub fn project(x: &DMatrix<f64>, cols: &[usize], v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for q in gram_schmidt(x, cols) {
        out += &q * q.dot(v);
    }
    out
}

pub fn projector_matrix(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    let mut m = DMatrix::zeros(n, n);
    for q in gram_schmidt(x, cols) {
        m += &q * q.transpose();
    }
    m
}

pub fn xbeta(x: &DMatrix<f64>, beta: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out[i] += x[(i, j)] * beta[j];
        }
    }
    out
}

pub fn l1(b: &[f64]) -> f64 {
    b.iter().map(|v| v.abs()).sum()
}

pub fn lasso_obj(x: &DMatrix<f64>, y: &DVector<f64>, b: &[f64], lambda: f64) -> f64 {
    (y - xbeta(x, b)).norm_squared() + lambda * l1(b)
}

fn spectral_norm_sq(x: &DMatrix<f64>) -> f64 {
    let g = x.transpose() * x;
    g.symmetric_eigenvalues().max()
}

/// Accelerated proximal gradient (FISTA with restarts) for
/// `||Y - X b||^2 + lambda |b|_1`; returns the best objective seen.
pub fn lasso_prox_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, iters: usize) -> f64 {
    let p = x.ncols();
    let step = 1.0 / (2.0 * spectral_norm_sq(x));
    let mut b = DVector::<f64>::zeros(p);
    let mut z = b.clone();
    let mut t = 1.0f64;
    let mut best = lasso_obj(x, y, b.as_slice(), lambda);
    for _ in 0..iters {
        let grad = x.transpose() * (x * &z - y) * 2.0;
        let w = &z - grad * step;
        let next = w.map(|v| soft(v, lambda * step));
        let obj = lasso_obj(x, y, next.as_slice(), lambda);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj > best {
            // Restart momentum.
            z = b.clone();
            t = 1.0;
            continue;
        }
        z = &next + (&next - &b) * ((t - 1.0) / t_next);
        b = next;
        t = t_next;
        best = obj;
    }
    best
}

pub fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

pub fn group_obj(x: &DMatrix<f64>, y: &DVector<f64>, b: &[f64], groups: &[Vec<usize>], lambdas: &[f64]) -> f64 {
    let pen: f64 = groups
        .iter()
        .zip(lambdas)
        .map(|(g, l)| l * g.iter().map(|&j| b[j] * b[j]).sum::<f64>().sqrt())
        .sum();
    (y - xbeta(x, b)).norm_squared() + pen
}

/// Accelerated proximal gradient with block soft thresholding.
pub fn group_prox_oracle(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[Vec<usize>], lambdas: &[f64], iters: usize) -> f64 {
    let p = x.ncols();
    let step = 1.0 / (2.0 * spectral_norm_sq(x));
    let prox = |w: &DVector<f64>| {
        let mut out = w.clone();
        for (g, l) in groups.iter().zip(lambdas) {
            let norm = g.iter().map(|&j| w[j] * w[j]).sum::<f64>().sqrt();
            let f = if norm > 0.0 { (1.0 - l * step / norm).max(0.0) } else { 0.0 };
            for &j in g {
                out[j] = w[j] * f;
            }
        }
        out
    };
    let mut b = DVector::<f64>::zeros(p);
    let mut z = b.clone();
    let mut t = 1.0f64;
    let mut best = group_obj(x, y, b.as_slice(), groups, lambdas);
    for _ in 0..iters {
        let grad = x.transpose() * (x * &z - y) * 2.0;
        let next = prox(&(&z - grad * step));
        let obj = group_obj(x, y, next.as_slice(), groups, lambdas);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj > best {
            z = b.clone();
            t = 1.0;
            continue;
        }
        z = &next + (&next - &b) * ((t - 1.0) / t_next);
        b = next;
        t = t_next;
        best = obj;
    }
    best
}

/// Coordinate descent on `||Y - X b|| + mu |b|_1` with the exact
/// one-dimensional minimizer. Returns `(beta, ||r|| / sqrt(n))`.
pub fn sqrt_lasso_direct(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> (Vec<f64>, f64) {
    let (n, p) = (x.nrows(), x.ncols());
    let mu = lambda / (n as f64).sqrt();
    let mut b = vec![0.0; p];
    let mut r = y.clone();
    for _ in 0..200_000 {
        let mut moved = 0.0f64;
        for j in 0..p {
            let xj = x.column(j);
            let a = xj.norm_squared();
            // Partial residual without coordinate j.
            let rj = &r + xj * b[j];
            let b0 = xj.dot(&rj) / a;
            let c = (rj.norm_squared() - a * b0 * b0).max(0.0);
            let new = if (a * b0).abs() <= mu * (a * b0 * b0 + c).sqrt() {
                0.0
            } else if c == 0.0 {
                b0
            } else {
                b0 - b0.signum() * mu * (c / (a * (a - mu * mu))).sqrt()
            };
            moved = moved.max((new - b[j]).abs());
            r = rj - xj * new;
            b[j] = new;
        }
        if moved < 1e-15 {
            break;
        }
    }
    let sigma = r.norm() / (n as f64).sqrt();
    (b, sigma)
}

/// Dual projected gradient for `||y - b||^2 + lambda sum |b_{i+1} - b_i|`;
/// returns the primal objective.
pub fn tv_dual_oracle(y: &[f64], lambda: f64, iters: usize) -> f64 {
    let n = y.len();
    let half = lambda / 2.0;
    let mut z = vec![0.0; n.saturating_sub(1)];
    let primal = |z: &[f64]| {
        // b = y - D'z with (Dz')_i = z_{i-1} - z_i.
        (0..n)
            .map(|i| {
                let left = if i > 0 { z[i - 1] } else { 0.0 };
                let right = if i + 1 < n { z[i] } else { 0.0 };
                y[i] - (left - right)
            })
            .collect::<Vec<f64>>()
    };
    let obj = |b: &[f64]| {
        let fit: f64 = y.iter().zip(b).map(|(a, c)| (a - c).powi(2)).sum();
        fit + lambda * b.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
    };
    let mut best = obj(y).min(obj(&vec![y.iter().sum::<f64>() / n as f64; n]));
    for _ in 0..iters {
        let b = primal(&z);
        // Gradient of 0.5 |D'z - y|^2 in z is -D b, (D b)_i = b_{i+1} - b_i.
        for i in 0..z.len() {
            z[i] = (z[i] + 0.25 * (b[i + 1] - b[i])).clamp(-half, half);
        }
        best = best.min(obj(&primal(&z)));
    }
    best
}

/// Exact `ln C(n, k)` through big-integer arithmetic.
pub fn exact_log_binomial(n: u64, k: u64) -> f64 {
    let mut c = BigUint::from(1u32);
    for i in 0..k {
        c *= BigUint::from(n - i);
        c /= BigUint::from(i + 1);
    }
    match c.to_f64() {
        Some(v) if v.is_finite() => v.ln(),
        _ => {
            let bits = c.bits();
            let shift = bits.saturating_sub(60);
            let top = (&c >> shift).to_f64().unwrap();
            top.ln() + shift as f64 * std::f64::consts::LN_2
        }
    }
}

/// Monte-Carlo estimate of `E[(U - c V)_+]` with `U ~ chi2(du)`,
/// `V ~ chi2(dv)`: `(mean, standard error)`.
pub fn mc_positive_part(du: f64, dv: f64, c: f64, draws: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let cu = ChiSquared::new(du).unwrap();
    let cv = ChiSquared::new(dv).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let v = (cu.sample(&mut r) - c * cv.sample(&mut r)).max(0.0);
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    let var = (s2 / draws as f64 - m * m).max(0.0);
    (m, (var / draws as f64).sqrt())
}

/// Monte-Carlo estimate of `E[(U - cV)_+]` that draws only `V` and integrates
/// `U` out through chi-square survival functions:
/// `E[(U - t)_+] = du P(chi2(du+2) > t) - t P(chi2(du) > t)`.
/// Much lower variance than `mc_positive_part` when the target is a tail event.
pub fn mc_positive_part_conditional(du: f64, dv: f64, c: f64, draws: usize, seed: u64) -> (f64, f64) {
    use statrs::distribution::{ChiSquared as Chi, ContinuousCDF};
    let mut r = rng(seed);
    let cv = ChiSquared::new(dv).unwrap();
    let hi = Chi::new(du + 2.0).unwrap();
    let lo = Chi::new(du).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let t = c * cv.sample(&mut r);
        let v = (du * hi.sf(t) - t * lo.sf(t)).max(0.0);
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    let var = (s2 / draws as f64 - m * m).max(0.0);
    (m, (var / draws as f64).sqrt())
}

/// Exhaustive best partitions: for each `q`, the smallest rss over all
/// breakpoint sets and the lexicographically smallest minimizer.
pub fn brute_force_partitions(y: &[f64], q_max: usize) -> Vec<(f64, Vec<usize>)> {
    let n = y.len();
    let rss_of = |bps: &[usize]| {
        let mut edges = vec![0];
        edges.extend_from_slice(bps);
        edges.push(n);
        edges
            .windows(2)
            .map(|w| {
                let seg = &y[w[0]..w[1]];
                let m = seg.iter().sum::<f64>() / seg.len() as f64;
                seg.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
    };
    let mut out = Vec::new();
    for q in 0..=q_max {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut cur: Vec<usize> = (1..=q).collect();
        loop {
            if q < n {
                let r = rss_of(&cur);
                if best.as_ref().is_none_or(|(b, _)| r < *b - 1e-12 * b.abs().max(1.0)) {
                    best = Some((r, cur.clone()));
                }
            }
            // Next q-subset of {1..n-1} in lexicographic order.
            let mut i = q;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if cur[i] < n - 1 - (q - 1 - i) {
                    cur[i] += 1;
                    for j in i + 1..q {
                        cur[j] = cur[j - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
        out.push(best.expect("q < n"));
    }
    out
}

/// Bitmask enumeration of nonempty column subsets with `|J| <= max_size`,
/// in increasing size then lexicographic order.
pub fn subsets_by_size(p: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..(1 << p))
        .map(|m| (0..p).filter(|j| m & (1 << j) != 0).collect::<Vec<usize>>())
        .filter(|s| s.len() <= max_size)
        .collect();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all
}

pub fn rss_onto(x: &DMatrix<f64>, cols: &[usize], y: &DVector<f64>) -> f64 {
    (y - project(x, cols, y)).norm_squared()
}

/// LinSelect run on the projection estimators of every BGH candidate space:
/// nonempty `J` with `|J| <= (n-1)/4` that pass the space admissibility
/// filter. Returns the selected space.
pub fn linselect_on_bgh_collection(data: &Dataset) -> Support {
    use sparsetune_core::estimators::{gauss_lasso_refit, EstimatorPath};
    use sparsetune_core::linselect::{linselect_select, Collection, ModelSpace};
    let (n, p) = (data.n(), data.p());
    let max = (n - 1) / 4;
    let mut spaces = Vec::new();
    let mut fits = Vec::new();
    for cols in subsets_by_size(p, max) {
        if let Some(space) = ModelSpace::coordinate(data, Support::new(cols.clone())).unwrap() {
            fits.push(gauss_lasso_refit(data, &Support::new(cols)).unwrap());
            spaces.push(space);
        }
    }
    let m = fits.len();
    let grid: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
    let path = EstimatorPath::new(grid, fits).unwrap();
    let report = linselect_select(&path, &Collection { spaces, flags: Vec::new() }, data).unwrap();
    report.chosen_space.expect("LinSelect reports its space")
}
