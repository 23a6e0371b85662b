//! Block coordinate descent for `||Y - X beta||^2 + sum_k lambda_k ||beta_{G_k}||`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{gram, FitResult, GroupStructure, LassoOptions};
use crate::error::{Error, Result};
use crate::model::Dataset;

struct BlockEigen {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

pub struct GroupLassoSolver<'a> {
    data: &'a Dataset,
    groups: &'a GroupStructure,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    eig: Vec<BlockEigen>,
    opts: LassoOptions,
}

/// Solves `min_s` of the secular equation `sum_i w_i^2 / (2 L_i s + lam)^2 = 1`
/// for `s = ||b||`. The left side is convex and decreasing in `s`, so Newton
/// iterates started at zero increase monotonically to the root.
fn block_radius(w: &[f64], eig: &[f64], lam: f64) -> f64 {
    let h = |s: f64| -> (f64, f64) {
        let mut v = -1.0;
        let mut dv = 0.0;
        for (wi, li) in w.iter().zip(eig) {
            let den = 2.0 * li * s + lam;
            v += wi * wi / (den * den);
            dv -= 4.0 * li * wi * wi / (den * den * den);
        }
        (v, dv)
    };
    let mut s = 0.0;
    for _ in 0..200 {
        let (v, dv) = h(s);
        if v <= 0.0 || dv >= 0.0 {
            break;
        }
        let next = s - v / dv;
        if next - s <= 1e-15 * next {
            s = next;
            break;
        }
        s = next;
    }
    s
}

impl<'a> GroupLassoSolver<'a> {
    pub fn new(data: &'a Dataset, groups: &'a GroupStructure) -> Result<Self> {
        if groups.p() != data.p() {
            return Err(Error::Dimension(format!("groups cover {} columns, design has {}", groups.p(), data.p())));
        }
        let g = gram(data.x());
        let eig = groups
            .blocks()
            .iter()
            .map(|cols| {
                let sub = DMatrix::from_fn(cols.len(), cols.len(), |a, b| g[(cols[a], cols[b])]);
                let e = SymmetricEigen::new(sub);
                BlockEigen { values: e.eigenvalues.iter().map(|v| v.max(0.0)).collect(), vectors: e.eigenvectors }
            })
            .collect();
        Ok(GroupLassoSolver { data, groups, xty: data.x().tr_mul(data.y()), gram: g, eig, opts: LassoOptions::default() })
    }

    pub fn with_options(mut self, opts: LassoOptions) -> Self {
        self.opts = opts;
        self
    }

    fn update_block(&self, k: usize, lam: f64, beta: &mut [f64], q: &mut DVector<f64>) -> f64 {
        let cols = self.groups.block(k);
        let g = &self.gram;
        let z = DVector::from_iterator(
            cols.len(),
            cols.iter().map(|&i| 2.0 * (self.xty[i] - q[i] + cols.iter().map(|&l| g[(i, l)] * beta[l]).sum::<f64>())),
        );
        let e = &self.eig[k];
        let scale = e.values.iter().fold(0.0f64, |m, v| m.max(*v));
        let new = if z.norm() <= lam {
            DVector::zeros(cols.len())
        } else {
            let w = e.vectors.tr_mul(&z);
            let coeffs: Vec<f64> = if lam == 0.0 {
                w.iter().zip(&e.values).map(|(wi, li)| if *li > 1e-12 * scale { wi / (2.0 * li) } else { 0.0 }).collect()
            } else {
                let s = block_radius(w.as_slice(), &e.values, lam);
                w.iter().zip(&e.values).map(|(wi, li)| wi / (2.0 * li + lam / s)).collect()
            };
            &e.vectors * DVector::from_vec(coeffs)
        };
        let mut moved = 0.0f64;
        for (a, &j) in cols.iter().enumerate() {
            let d = new[a] - beta[j];
            if d != 0.0 {
                q.axpy(d, &g.column(j), 1.0);
                beta[j] = new[a];
                moved = moved.max(d.abs());
            }
        }
        moved
    }

    pub fn fit(&self, lambdas: &[f64], warm: Option<&[f64]>) -> Result<FitResult> {
        let m = self.groups.len();
        if lambdas.len() != m {
            return Err(Error::Dimension(format!("{} penalty levels for {m} groups", lambdas.len())));
        }
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Domain("group penalty levels must be finite and nonnegative".into()));
        }
        let p = self.data.p();
        let mut beta = match warm {
            Some(w) if w.len() == p => w.to_vec(),
            Some(w) => return Err(Error::Dimension(format!("warm start has {} entries, expected {p}", w.len()))),
            None => vec![0.0; p],
        };
        let kkt_tol = self.opts.kkt_tol * (self.xty.amax() * 1e-3).max(1.0);
        let mut q = &self.gram * DVector::from_column_slice(&beta);
        let mut sweeps = 0usize;
        let mut violation = f64::INFINITY;
        while sweeps < self.opts.max_sweeps {
            let ctol = self.opts.coef_tol * beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
            let mut moved = 0.0f64;
            for (k, &lam) in lambdas.iter().enumerate() {
                moved = moved.max(self.update_block(k, lam, &mut beta, &mut q));
            }
            sweeps += 1;
            if moved <= ctol {
                q = &self.gram * DVector::from_column_slice(&beta);
                violation = block_residual(self.groups, &self.xty, &q, &beta, lambdas);
                if violation <= kkt_tol {
                    let mut fit = FitResult::from_beta(self.data, beta, None);
                    fit.lambdas = Some(lambdas.to_vec());
                    return Ok(fit);
                }
            }
            let active = self.groups.active_groups(&beta);
            while sweeps < self.opts.max_sweeps {
                let mut moved = 0.0f64;
                for &k in &active {
                    moved = moved.max(self.update_block(k, lambdas[k], &mut beta, &mut q));
                }
                sweeps += 1;
                if moved <= ctol {
                    break;
                }
            }
        }
        Err(Error::NonConvergence { what: "group Lasso block descent", iterations: sweeps, violation })
    }
}

fn block_residual(groups: &GroupStructure, c: &DVector<f64>, q: &DVector<f64>, beta: &[f64], lambdas: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (k, cols) in groups.blocks().iter().enumerate() {
        let g: Vec<f64> = cols.iter().map(|&j| 2.0 * (c[j] - q[j])).collect();
        let bnorm = cols.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt();
        let v = if bnorm > 0.0 {
            cols.iter()
                .zip(&g)
                .map(|(&j, gj)| (gj - lambdas[k] * beta[j] / bnorm).powi(2))
                .sum::<f64>()
                .sqrt()
        } else {
            (g.iter().map(|v| v * v).sum::<f64>().sqrt() - lambdas[k]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Group Lasso fit with one penalty level per group.
pub fn group_lasso_fit(data: &Dataset, groups: &GroupStructure, lambdas: &[f64]) -> Result<FitResult> {
    GroupLassoSolver::new(data, groups)?.fit(lambdas, None)
}

/// Largest block-stationarity violation, evaluated from the residual.
pub fn group_kkt_violation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    groups: &GroupStructure,
    beta: &[f64],
    lambdas: &[f64],
) -> f64 {
    let xtr = x.tr_mul(&(y - x * DVector::from_column_slice(beta)));
    block_residual(groups, &xtr, &DVector::zeros(beta.len()), beta, lambdas)
}

/// `||Y - X beta||^2 + sum_k lambda_k ||beta_{G_k}||`.
pub fn group_lasso_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    groups: &GroupStructure,
    beta: &[f64],
    lambdas: &[f64],
) -> f64 {
    let r = y - x * DVector::from_column_slice(beta);
    let pen: f64 = groups
        .blocks()
        .iter()
        .zip(lambdas)
        .map(|(cols, l)| l * cols.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt())
        .sum();
    r.norm_squared() + pen
}
