//! Penalties defined as roots of `E[(U - c V)_+] = target` for independent
//! chi-square variables `U` and `V`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use super::special::{fisher_survival_unchecked, log_binomial};
use crate::error::{Error, Result};

/// Multiplier applied to `pen_delta` in the LinSelect criterion.
pub const LINSELECT_MULTIPLIER: f64 = 1.1;

const EQUATION_TOL: f64 = 1e-10;
const LOWER_FLOOR: f64 = 1e-12;

/// `E[(U - c V)_+]` with `U ~ chi2(du)`, `V ~ chi2(dv)`, written through two
/// Fisher survival probabilities (size-biasing each chi-square by two degrees).
pub fn expected_positive_part(du: f64, dv: f64, c: f64) -> Result<f64> {
    if !(du > 0.0 && dv > 0.0) || !c.is_finite() || c < 0.0 {
        return Err(Error::Domain(format!("E[(U - cV)+] at du={du}, dv={dv}, c={c}")));
    }
    Ok(positive_part_unchecked(du, dv, c))
}

fn positive_part_unchecked(du: f64, dv: f64, c: f64) -> f64 {
    let upper = du * fisher_survival_unchecked(du + 2.0, dv, c * dv / (du + 2.0));
    let lower = c * dv * fisher_survival_unchecked(du, dv + 2.0, c * (dv + 2.0) / du);
    upper - lower
}

/// Left-hand side of the `pen_delta` equation as a function of `x`
/// (the penalty itself, before division by `n - D`).
pub fn pen_delta_equation(n: usize, d: usize, x: f64) -> f64 {
    let big_n = (n - d) as f64;
    positive_part_unchecked(d as f64 + 1.0, big_n - 1.0, x / big_n)
}

fn check_args(n: usize, d: usize, delta: f64) -> Result<()> {
    if d < 1 || (d as f64) > n as f64 / 2.0 - 1.0 {
        return Err(Error::Domain(format!("penalty dimension must satisfy 1 <= D <= n/2 - 1 (n={n}, D={d})")));
    }
    if !delta.is_finite() || delta < 0.0 || delta > 2.0 * n as f64 / 3.0 {
        return Err(Error::Domain(format!("complexity weight must lie in [0, 2n/3] (n={n}, delta={delta})")));
    }
    Ok(())
}

/// Bisection for a decreasing `g` crossing `target` inside `[lo, hi]`,
/// expanding `hi` by doubling until the sign changes.
fn solve_decreasing(g: impl Fn(f64) -> f64, target: f64, lo: f64, hi: f64) -> Result<f64> {
    let mut lo = lo.max(LOWER_FLOOR);
    if g(lo) <= target {
        lo = LOWER_FLOOR;
    }
    if g(lo) <= target {
        return Err(Error::Bracket { lo, hi });
    }
    let mut hi = hi.max(2.0 * lo);
    let mut expansions = 0;
    while g(hi) > target {
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Bracket { lo, hi });
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let violation = (g(x) - target).abs();
    if violation > EQUATION_TOL {
        return Err(Error::NonConvergence { what: "penalty equation", iterations: 500, violation });
    }
    Ok(x)
}

/// Solves `E[(U - x/(n-D) V)_+] = exp(-delta)` with `U ~ chi2(D+1)` and
/// `V ~ chi2(n-D-1)`.
pub fn pen_delta_solve(n: usize, d: usize, delta: f64) -> Result<f64> {
    check_args(n, d, delta)?;
    let target = (-delta).exp();
    let lo = 2.0 * delta + d as f64 - 20.0;
    let hi = 20.0 * (d as f64).max(delta).max(1.0) + 50.0;
    solve_decreasing(|x| pen_delta_equation(n, d, x), target, lo, hi)
}

type CacheKey = (usize, usize, u64);

fn cache() -> &'static RwLock<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Memoized [`pen_delta_solve`]. The solver is deterministic, so concurrent
/// writers always store the same value for a key.
pub fn pen_delta_cached(n: usize, d: usize, delta: f64) -> Result<f64> {
    let key = (n, d, delta.to_bits());
    if let Some(v) = cache().read().ok().and_then(|m| m.get(&key).copied()) {
        return Ok(v);
    }
    let v = pen_delta_solve(n, d, delta)?;
    if let Ok(mut m) = cache().write() {
        m.insert(key, v);
    }
    Ok(v)
}

/// `pen(S) = 1.1 * pen_delta(S)`.
pub fn linselect_penalty(n: usize, d: usize, delta: f64) -> Result<f64> {
    Ok(LINSELECT_MULTIPLIER * pen_delta_cached(n, d, delta)?)
}

/// Solved LinSelect penalty for one `(n, D, delta)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub pen_delta: f64,
    pub pen: f64,
}

impl PenaltySpec {
    pub fn solve(n: usize, d: usize, delta: f64) -> Result<Self> {
        let pen_delta = pen_delta_cached(n, d, delta)?;
        Ok(PenaltySpec { n, d, delta, pen_delta, pen: LINSELECT_MULTIPLIER * pen_delta })
    }
}

/// Solves `E[(U - x V)_+] = 1 / ((q+1) C(n-1, q))` with `U ~ chi2(q+2)` and
/// `V ~ chi2(n-q-2)`.
pub fn seg_pen_solve(n: usize, q: usize) -> Result<f64> {
    if n < 3 || (q as f64) > (n as f64 - 1.0) / 4.0 || q + 3 > n {
        return Err(Error::Domain(format!("segmentation penalty needs 0 <= q <= (n-1)/4 (n={n}, q={q})")));
    }
    let log_weight = ((q + 1) as f64).ln() + log_binomial(n as u64 - 1, q as u64)?;
    let target = (-log_weight).exp();
    let du = q as f64 + 2.0;
    let dv = (n - q - 2) as f64;
    let hi = (20.0 * du.max(log_weight).max(1.0) + 50.0) / dv;
    solve_decreasing(|c| positive_part_unchecked(du, dv, c), target, LOWER_FLOOR, hi)
}

/// Solved segmentation penalty for `q` breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegPenaltySpec {
    pub n: usize,
    pub q: usize,
    pub k: f64,
    pub pen_q: f64,
}

impl SegPenaltySpec {
    pub fn solve(n: usize, q: usize, k: f64) -> Result<Self> {
        Ok(SegPenaltySpec { n, q, k, pen_q: seg_pen_solve(n, q)? })
    }
}
