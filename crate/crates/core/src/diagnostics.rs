//! Design diagnostics: sparse eigenvalues, compatibility constants and the
//! sparsity regime rule.
//!
//! Everything except [`compute_kstar`] enumerates supports, so sizes are
//! capped ([`DEFAULT_ENUMERATION_CAP`]) unless the caller raises the cap.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::GroupStructure;
use crate::subsets::{self, Combinations};

pub const DEFAULT_ENUMERATION_CAP: usize = 3;

const MAX_SUBSETS: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseEigenvalues {
    pub k: usize,
    pub phi_minus: f64,
    pub phi_plus: f64,
}

/// Extremal values of `||X b||^2 / ||b||^2` over `b` with at most `k`
/// nonzero entries, with `k` capped at [`DEFAULT_ENUMERATION_CAP`].
pub fn sparse_eigenvalues(x: &DMatrix<f64>, k: usize) -> Result<SparseEigenvalues> {
    sparse_eigenvalues_capped(x, k, DEFAULT_ENUMERATION_CAP)
}

pub fn sparse_eigenvalues_capped(x: &DMatrix<f64>, k: usize, cap: usize) -> Result<SparseEigenvalues> {
    if k == 0 {
        return Err(Error::Domain("sparse eigenvalues need k >= 1".into()));
    }
    if k > cap {
        return Err(Error::UnsupportedSize {
            what: "sparse eigenvalue order",
            size: k,
            cap,
        });
    }
    let p = x.ncols();
    // Interlacing: supports of size exactly min(k, p) attain both extremes.
    let size = k.min(p);
    check_enumerable(p, size)?;
    let gram = x.tr_mul(x);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for cols in Combinations::new(p, size) {
        let sub = gram.select_rows(cols.iter()).select_columns(cols.iter());
        let eig = SymmetricEigen::new(sub).eigenvalues;
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    Ok(SparseEigenvalues {
        k,
        phi_minus: lo,
        phi_plus: hi,
    })
}

fn check_enumerable(n: usize, k: usize) -> Result<()> {
    if subsets::count(n, k) > MAX_SUBSETS {
        return Err(Error::UnsupportedSize {
            what: "support enumeration",
            size: n,
            cap: k,
        });
    }
    Ok(())
}

/// Largest eigenvalue of `X_J^T X_J`.
pub fn restricted_max_eigenvalue(x: &DMatrix<f64>, cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    let sub = x.select_columns(cols.iter());
    SymmetricEigen::new(sub.tr_mul(&sub)).eigenvalues.max()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatibilityEstimate {
    pub value: f64,
    pub converged: bool,
}

/// Compatibility constant
/// `min { |T|^{1/2} ||X u|| / ||u_T||_1 : ||u_{T^c}||_1 <= xi ||u_T||_1 }`.
///
/// The ratio is scale free, so the search runs on the slice `||u_T||_1 = 1`.
/// Fixing the sign pattern of `u_T` turns that slice into a simplex and the
/// problem into a convex quadratic program, solved by accelerated projected
/// gradient for each pattern. The returned value is attained by a feasible
/// point and is therefore an upper bound on the true minimum; `converged`
/// reports whether every pattern met the stationarity tolerance.
pub fn compatibility_constant(x: &DMatrix<f64>, xi: f64, t: &[usize]) -> Result<CompatibilityEstimate> {
    compatibility_constant_capped(x, xi, t, DEFAULT_ENUMERATION_CAP)
}

pub fn compatibility_constant_capped(
    x: &DMatrix<f64>,
    xi: f64,
    t: &[usize],
    cap: usize,
) -> Result<CompatibilityEstimate> {
    let p = x.ncols();
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("cone parameter must be positive, got {xi}")));
    }
    let mut t = t.to_vec();
    t.sort_unstable();
    t.dedup();
    if t.is_empty() || t.iter().any(|&j| j >= p) {
        return Err(Error::Domain("T must be a nonempty set of valid columns".into()));
    }
    if t.len() > cap {
        return Err(Error::UnsupportedSize {
            what: "compatibility set T",
            size: t.len(),
            cap,
        });
    }
    let rest: Vec<usize> = (0..p).filter(|j| !t.contains(j)).collect();
    let gram = x.tr_mul(x);
    let lipschitz = 2.0 * SymmetricEigen::new(gram.clone()).eigenvalues.max().max(1e-300);

    let mut best = f64::INFINITY;
    let mut all_converged = true;
    // u and -u give the same ratio, so the first sign can be fixed.
    for pattern in 0..(1usize << (t.len() - 1)) {
        let signs: Vec<f64> = (0..t.len())
            .map(|i| if i > 0 && pattern >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let (val, ok) = cone_qp(&gram, lipschitz, &t, &signs, &rest, xi);
        all_converged &= ok;
        best = best.min(val);
    }
    Ok(CompatibilityEstimate {
        value: ((t.len() as f64) * best.max(0.0)).sqrt(),
        converged: all_converged,
    })
}

fn cone_qp(
    gram: &DMatrix<f64>,
    lipschitz: f64,
    t: &[usize],
    signs: &[f64],
    rest: &[usize],
    xi: f64,
) -> (f64, bool) {
    let p = gram.nrows();
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(p);
        let w: Vec<f64> = t.iter().zip(signs).map(|(&j, s)| s * v[j]).collect();
        for ((&j, s), wj) in t.iter().zip(signs).zip(project_simplex(&w, 1.0)) {
            out[j] = s * wj;
        }
        let r: Vec<f64> = rest.iter().map(|&j| v[j]).collect();
        for (&j, rj) in rest.iter().zip(project_l1_ball(&r, xi)) {
            out[j] = rj;
        }
        out
    };
    let objective = |u: &DVector<f64>| u.dot(&(gram * u));

    let mut start = DVector::zeros(p);
    for (&j, s) in t.iter().zip(signs) {
        start[j] = s / t.len() as f64;
    }
    let step = 1.0 / lipschitz;
    let mut u = start.clone();
    let mut z = start;
    let mut momentum = 1.0f64;
    let mut converged = false;
    for _ in 0..50_000 {
        let grad = 2.0 * (gram * &z);
        let u_next = project(&(&z - step * grad));
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        z = &u_next + ((momentum - 1.0) / m_next) * (&u_next - &u);
        let moved = (&u_next - &u).amax();
        u = u_next;
        momentum = m_next;
        if moved < 1e-12 {
            // Gradient-mapping check at the current iterate.
            let g = 2.0 * (gram * &u);
            let mapped = project(&(&u - step * g));
            if (&mapped - &u).amax() < 1e-10 {
                converged = true;
                break;
            }
        }
    }
    (objective(&u), converged)
}

/// Euclidean projection onto `{w >= 0, sum w = radius}`.
pub(crate) fn project_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let candidate = (cum - radius) / (i as f64 + 1.0);
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto the l1 ball of the given radius.
pub(crate) fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    project_simplex(&abs, radius)
        .into_iter()
        .zip(v)
        .map(|(a, &x)| a * x.signum())
        .collect()
}

/// Group compatibility constant with equal group weights,
/// `min_{1 <= |K| <= s} min ||X u|| / ||u_(K)||` over the group cone
/// `sum_{k not in K} ||u^{G_k}|| <= xi sum_{k in K} ||u^{G_k}||`.
///
/// Heuristic multi-restart projected descent; the value is attained by a
/// feasible point, hence an upper bound.
pub fn group_compatibility_constant(
    x: &DMatrix<f64>,
    groups: &GroupStructure,
    xi: f64,
    s: usize,
    seed: u64,
) -> Result<CompatibilityEstimate> {
    let m = groups.len();
    if s == 0 || s > m {
        return Err(Error::Domain(format!("group sparsity {s} outside 1..={m}")));
    }
    if s > DEFAULT_ENUMERATION_CAP {
        return Err(Error::UnsupportedSize {
            what: "group compatibility order",
            size: s,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let gram = x.tr_mul(x);
    let lipschitz = 2.0 * SymmetricEigen::new(gram.clone()).eigenvalues.max().max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for size in 1..=s {
        for kset in Combinations::new(m, size) {
            for _ in 0..8 {
                let mut u = DVector::from_fn(x.ncols(), |_, _| rng.random::<f64>() - 0.5);
                for _ in 0..2_000 {
                    u = group_cone_feasible(&u, groups, &kset, xi);
                    let g = 2.0 * (&gram * &u);
                    u -= g / lipschitz;
                }
                u = group_cone_feasible(&u, groups, &kset, xi);
                best = best.min(u.dot(&(&gram * &u)));
            }
        }
    }
    Ok(CompatibilityEstimate {
        value: best.max(0.0).sqrt(),
        converged: false,
    })
}

fn group_cone_feasible(u: &DVector<f64>, groups: &GroupStructure, kset: &[usize], xi: f64) -> DVector<f64> {
    let mut out = u.clone();
    let in_norm: f64 = kset
        .iter()
        .map(|&k| groups.block(k).iter().map(|&j| u[j] * u[j]).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if in_norm == 0.0 {
        for &j in groups.block(kset[0]) {
            out[j] = 1.0;
        }
        return group_cone_feasible(&out, groups, kset, xi);
    }
    out /= in_norm;
    let radius = xi
        * kset
            .iter()
            .map(|&k| groups.block(k).iter().map(|&j| out[j] * out[j]).sum::<f64>().sqrt())
            .sum::<f64>();
    let outside: Vec<usize> = (0..groups.len()).filter(|k| !kset.contains(k)).collect();
    let norms: Vec<f64> = outside
        .iter()
        .map(|&k| groups.block(k).iter().map(|&j| out[j] * out[j]).sum::<f64>().sqrt())
        .collect();
    let shrunk = project_l1_ball(&norms, radius);
    for ((&k, &old), new) in outside.iter().zip(&norms).zip(shrunk) {
        let scale = if old > 0.0 { new / old } else { 0.0 };
        for &j in groups.block(k) {
            out[j] *= scale;
        }
    }
    out
}

/// Restricted largest eigenvalue `max phi_(K)` over group unions with
/// `1 <= |K| <= (n - 2) / max(2T, 3 log M)`, `T` the largest group size.
pub fn group_phi_star(x: &DMatrix<f64>, groups: &GroupStructure) -> Result<f64> {
    let n = x.nrows() as f64;
    let m = groups.len();
    let t = groups.blocks().iter().map(Vec::len).max().unwrap_or(1) as f64;
    let denom = (2.0 * t).max(3.0 * (m as f64).ln());
    let bound = (((n - 2.0) / denom).floor() as usize).clamp(1, m);
    check_enumerable(m, bound)?;
    let mut best: f64 = 0.0;
    for kset in Combinations::new(m, bound) {
        let cols: Vec<usize> = kset.iter().flat_map(|&k| groups.block(k).iter().copied()).collect();
        best = best.max(restricted_max_eigenvalue(x, &cols));
    }
    Ok(best)
}

/// Largest `k` in `[1, floor(p/e)]` with `2 k log(p/k) <= n`, or 0.
///
/// `2 k log(p/k)` increases on that range, so the scan stops at the first
/// failure.
pub fn compute_kstar(n: usize, p: usize) -> usize {
    let upper = (p as f64 / std::f64::consts::E).floor() as usize;
    let mut kstar = 0;
    for k in 1..=upper {
        let kf = k as f64;
        if 2.0 * kf * (p as f64 / kf).ln() <= n as f64 {
            kstar = k;
        } else {
            break;
        }
    }
    kstar
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `2 k log(p/k) < n`: adaptation to unknown variance is possible.
    HighDimensional,
    /// `2 k log(p/k) >= n`.
    UltraHighDimensional,
}

pub fn classify_regime(n: usize, p: usize, k: usize) -> Regime {
    let kf = k.max(1) as f64;
    if 2.0 * kf * (p as f64 / kf).ln() >= n as f64 {
        Regime::UltraHighDimensional
    } else {
        Regime::HighDimensional
    }
}

/// JSON record bundling the diagnostics of one design.
#[derive(Debug, Clone, Serialize)]
pub struct DesignDiagnostics {
    pub n: usize,
    pub p: usize,
    pub sparse_eigenvalues: Vec<SparseEigenvalues>,
    pub compatibility: Option<CompatibilityEstimate>,
    pub kstar: usize,
}

impl DesignDiagnostics {
    /// Sparse eigenvalues for `k = 1..=k_max` plus optionally `kappa[xi, T]`.
    pub fn compute(x: &DMatrix<f64>, k_max: usize, cone: Option<(f64, &[usize])>) -> Result<Self> {
        let sparse_eigenvalues = (1..=k_max)
            .map(|k| sparse_eigenvalues(x, k))
            .collect::<Result<Vec<_>>>()?;
        let compatibility = cone
            .map(|(xi, t)| compatibility_constant(x, xi, t))
            .transpose()?;
        Ok(DesignDiagnostics {
            n: x.nrows(),
            p: x.ncols(),
            sparse_eigenvalues,
            compatibility,
            kstar: compute_kstar(x.nrows(), x.ncols().max(2)),
        })
    }
}
