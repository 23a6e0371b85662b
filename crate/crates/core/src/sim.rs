//! Seeded regression instances, the simulation experiments, and their metrics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    refit_path, sqrt_lasso_fit, threshold_vector, EstimatorPath, LassoSolver, ThresholdKind,
};
use crate::linselect::{build_collection_coordinate, linselect_select};
use crate::model::{prediction_loss, Dataset, Support};
use crate::report::{CandidateRow, SelectionReport};
use crate::selectors::{modified_bic_components, vfold_cv_select};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum DesignFamily {
    Identity,
    IidGaussian,
    /// Rows with AR(1) correlation `rho^|i-j|` between columns.
    Toeplitz { rho: f64 },
}

fn default_magnitudes() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    10
}

/// Simulation settings. Nonzero coefficients have magnitude
/// `m sigma sqrt(2 ln p) / ||X_j||` with `m` cycling through `magnitudes`
/// across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub design: DesignFamily,
    pub k: usize,
    #[serde(default = "default_magnitudes")]
    pub magnitudes: Vec<f64>,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
    /// Rescale design columns to unit norm.
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > self.p {
            return Err(Error::Config(format!("sparsity k={} exceeds p={}", self.k, self.p)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.n < 2 || self.p < 2 {
            return Err(Error::Config("need n >= 2 and p >= 2".into()));
        }
        if self.magnitudes.is_empty() {
            return Err(Error::Config("magnitude grid is empty".into()));
        }
        if let DesignFamily::Identity = self.design {
            if self.n != self.p {
                return Err(Error::Config("identity design needs n = p".into()));
            }
        }
        if let DesignFamily::Toeplitz { rho } = self.design {
            if !(rho.abs() < 1.0) {
                return Err(Error::Config(format!("Toeplitz correlation must lie in (-1, 1), got {rho}")));
            }
        }
        Ok(())
    }
}

/// The coefficient vector behind a simulated response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub beta0: Vec<f64>,
    pub support0: Support,
}

fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

/// Derived seed for selector randomness within a replication.
fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws replication `rep`: design, then support and signs, then noise, all
/// from the `(seed, rep)` stream.
pub fn generate_instance(cfg: &SimConfig, rep: usize) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.p);
    let mut rng = rep_rng(cfg.seed, rep);
    let mut x = match cfg.design {
        DesignFamily::Identity => DMatrix::identity(n, p),
        DesignFamily::IidGaussian => DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal)),
        DesignFamily::Toeplitz { rho } => {
            let mut m = DMatrix::zeros(n, p);
            let c = (1.0 - rho * rho).sqrt();
            for i in 0..n {
                let mut prev: f64 = rng.sample(StandardNormal);
                m[(i, 0)] = prev;
                for j in 1..p {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + c * z;
                    m[(i, j)] = prev;
                }
            }
            m
        }
    };
    if cfg.normalize && cfg.design != DesignFamily::Identity {
        for mut col in x.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }
    let support0 = Support::new(sample(&mut rng, p, cfg.k).into_vec());
    let m = cfg.magnitudes[rep % cfg.magnitudes.len()];
    let level = m * cfg.sigma * (2.0 * (p as f64).ln()).sqrt();
    let mut beta0 = vec![0.0; p];
    for &j in support0.indices() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let norm = x.column(j).norm();
        beta0[j] = sign * level / norm;
    }
    let noise = DVector::from_fn(n, |_, _| cfg.sigma * rng.sample::<f64, _>(StandardNormal));
    let y = &x * DVector::from_column_slice(&beta0) + noise;
    Ok((Dataset::new(x, y)?, SimTruth { beta0, support0 }))
}

/// Grid point of smallest true prediction loss (first on ties).
pub fn oracle_lambda(path: &EstimatorPath, truth: &SimTruth, x: &DMatrix<f64>) -> Result<(usize, f64, f64)> {
    let mut best = (0, path.grid[0], f64::INFINITY);
    for (i, fit) in path.fits.iter().enumerate() {
        let loss = prediction_loss(x, &fit.beta, &truth.beta0)?;
        if loss < best.2 {
            best = (i, path.grid[i], loss);
        }
    }
    Ok(best)
}

/// False discovery proportion and true discovery proportion.
pub fn fdr_power(selected: &Support, truth: &Support) -> (f64, f64) {
    let hits = selected.intersection_len(truth) as f64;
    let fdr = (selected.len() as f64 - hits) / selected.len().max(1) as f64;
    let power = hits / truth.len().max(1) as f64;
    (fdr, power)
}

pub const QUANTILE_LEVELS: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// Linear-interpolation quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        if count == 0 {
            return Summary { count, mean: f64::NAN, sd: f64::NAN, quantiles: vec![f64::NAN; QUANTILE_LEVELS.len()] };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = QUANTILE_LEVELS
            .iter()
            .map(|&q| {
                let pos = q * (count - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
            })
            .collect();
        Summary { count, mean, sd, quantiles }
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }
}

/// Per-replication values of one metric, ordered by replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub reps: Vec<usize>,
    pub values: Vec<f64>,
    pub summary: Summary,
}

impl Samples {
    fn new(reps: Vec<usize>, values: Vec<f64>) -> Self {
        let summary = Summary::of(&values);
        Samples { reps, values, summary }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    /// Metric name to samples, in a fixed order.
    pub metrics: Vec<(String, Samples)>,
}

impl MethodMetrics {
    pub fn metric(&self, name: &str) -> Option<&Samples> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config: SimConfig,
    pub methods: Vec<MethodMetrics>,
    pub failures: Vec<RepFailure>,
}

impl MetricsReport {
    pub fn method(&self, name: &str) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Long-format raw samples: `method,metric,rep,value`.
    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "metric", "rep", "value"])?;
        for m in &self.methods {
            for (name, s) in &m.metrics {
                for (rep, v) in s.reps.iter().zip(&s.values) {
                    w.write_record([m.method.as_str(), name.as_str(), &rep.to_string(), &format!("{v:e}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// One replication's metric values: `(method, metric, value)`.
type RepValues = Vec<(&'static str, &'static str, f64)>;

fn assemble(experiment: &str, cfg: &SimConfig, outcomes: Vec<(usize, Result<RepValues>)>) -> MetricsReport {
    let mut order: Vec<(&'static str, &'static str)> = Vec::new();
    let mut failures = Vec::new();
    let mut ok: Vec<(usize, RepValues)> = Vec::new();
    for (rep, out) in outcomes {
        match out {
            Ok(vals) => {
                for (m, k, _) in &vals {
                    if !order.contains(&(*m, *k)) {
                        order.push((*m, *k));
                    }
                }
                ok.push((rep, vals));
            }
            Err(e) => failures.push(RepFailure { rep, code: e.code().into(), message: e.to_string() }),
        }
    }
    let mut methods: Vec<MethodMetrics> = Vec::new();
    for (m, k) in order {
        let mut reps = Vec::new();
        let mut values = Vec::new();
        for (rep, vals) in &ok {
            if let Some((_, _, v)) = vals.iter().find(|(a, b, _)| *a == m && *b == k) {
                reps.push(*rep);
                values.push(*v);
            }
        }
        let samples = Samples::new(reps, values);
        match methods.iter_mut().find(|x| x.method == m) {
            Some(mm) => mm.metrics.push((k.to_string(), samples)),
            None => methods.push(MethodMetrics { method: m.to_string(), metrics: vec![(k.to_string(), samples)] }),
        }
    }
    MetricsReport { schema_version: SCHEMA_VERSION, experiment: experiment.into(), config: cfg.clone(), methods, failures }
}

fn run_reps(cfg: &SimConfig, f: impl Fn(usize) -> Result<RepValues> + Sync) -> Vec<(usize, Result<RepValues>)> {
    (0..cfg.reps).into_par_iter().map(|rep| (rep, f(rep))).collect()
}

fn lasso_factory(d: &Dataset, g: &[f64]) -> Result<EstimatorPath> {
    LassoSolver::new(d).path(Some(g))
}

/// Tuning value of the square-root Lasso in the experiments: `2 sqrt(2 ln p)`.
pub fn sqrt_lasso_lambda(p: usize) -> f64 {
    2.0 * (2.0 * (p as f64).ln()).sqrt()
}

/// Lasso tuned by V-fold CV and by LinSelect, and the square-root Lasso, each
/// scored by its prediction loss over the oracle loss. The oracle ranges over
/// the grid and the square-root Lasso's own effective penalty, so every ratio
/// is at least one.
pub fn run_experiment1(cfg: &SimConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let outcomes = run_reps(cfg, |rep| {
        let (data, truth) = generate_instance(cfg, rep)?;
        let path = LassoSolver::new(&data).path(None)?;
        let loss = |b: &[f64]| prediction_loss(data.x(), b, &truth.beta0);
        let cv = vfold_cv_select(lasso_factory, &data, &path, cfg.cv_folds, rep_seed(cfg.seed, rep))?;
        let coll = build_collection_coordinate(&path, &data)?;
        let ls = linselect_select(&path, &coll, &data)?;
        let sr = sqrt_lasso_fit(&data, sqrt_lasso_lambda(cfg.p))?;
        let (_, _, grid_oracle) = oracle_lambda(&path, &truth, data.x())?;
        let sr_loss = loss(&sr.beta)?;
        let oracle = grid_oracle.min(sr_loss);
        if oracle <= 0.0 {
            return Err(Error::Domain("oracle prediction loss is zero".into()));
        }
        Ok(vec![
            ("lasso-cv", "risk_ratio", loss(&path.fits[cv.chosen].beta)? / oracle),
            ("lasso-linselect", "risk_ratio", loss(&path.fits[ls.chosen].beta)? / oracle),
            ("sqrt-lasso", "risk_ratio", sr_loss / oracle),
        ])
    });
    Ok(assemble("1", cfg, outcomes))
}

/// Support recovery of the Gauss-Lasso tuned by V-fold CV and by LinSelect,
/// and of the square-root Lasso.
pub fn run_experiment2(cfg: &SimConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let outcomes = run_reps(cfg, |rep| {
        let (data, truth) = generate_instance(cfg, rep)?;
        let path = LassoSolver::new(&data).path(None)?;
        let refit = refit_path(&data, &path)?;
        // Cross-validation scores the Lasso path and the chosen support is
        // then refitted, as with the usual packaged CV routines.
        let cv = vfold_cv_select(lasso_factory, &data, &path, cfg.cv_folds, rep_seed(cfg.seed, rep))?;
        let coll = build_collection_coordinate(&refit, &data)?;
        let ls = linselect_select(&refit, &coll, &data)?;
        let sr = sqrt_lasso_fit(&data, sqrt_lasso_lambda(cfg.p))?;
        let mut out = Vec::new();
        for (name, s) in [
            ("gauss-lasso-cv", &refit.fits[cv.chosen].support),
            ("gauss-lasso-linselect", &refit.fits[ls.chosen].support),
            ("sqrt-lasso", &sr.support),
        ] {
            let (fdr, power) = fdr_power(s, &truth.support0);
            out.push((name, "fdr", fdr));
            out.push((name, "power", power));
        }
        Ok(out)
    });
    Ok(assemble("2", cfg, outcomes))
}

/// Modified BIC over the knots of a thresholding path on `y`, where knot `k`
/// keeps the `k` largest observations in absolute value (`k <= n/2`).
/// Returns `(support size, ||beta||^2)` of the selected fit.
fn bic_on_threshold_path(kind: ThresholdKind, y: &[f64]) -> Result<(usize, f64)> {
    let n = y.len();
    let mut abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| b.total_cmp(a));
    let kmax = n / 2;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for k in 0..=kmax {
        let lambda = match kind {
            ThresholdKind::Hard if k == 0 => 2.0 * abs[0],
            ThresholdKind::Hard => abs[k - 1],
            _ => 2.0 * abs[k],
        };
        let beta = threshold_vector(kind, y, lambda, None)?;
        let dim = beta.iter().filter(|b| **b != 0.0).count();
        let rss: f64 = y.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum();
        let norm2: f64 = beta.iter().map(|b| b * b).sum();
        if dim as f64 <= n as f64 / 2.0 && rss > 0.0 {
            let c = modified_bic_components(n, rss, dim);
            rows.push(CandidateRow { index: k, lambda: Some(lambda), dim, space: None, crit: c.total(), components: Some(c) });
        }
        fits.push((dim, norm2));
    }
    let report = SelectionReport::from_rows("modified-bic", rows)?;
    Ok(fits[report.chosen])
}

/// Identity design with `beta0 = 0`: soft thresholding (the Lasso), SCAD
/// (`a = 3`) and hard thresholding, each tuned by the modified BIC.
pub fn run_bic_demo(cfg: &SimConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    if cfg.design != DesignFamily::Identity || cfg.k != 0 {
        return Err(Error::Config("the BIC demonstration uses the identity design with k = 0".into()));
    }
    let outcomes = run_reps(cfg, |rep| {
        let (data, _) = generate_instance(cfg, rep)?;
        let y: Vec<f64> = data.y().iter().copied().collect();
        let mut out = Vec::new();
        for (name, kind) in [("lasso-bic", ThresholdKind::Soft), ("scad-bic", ThresholdKind::Scad), ("hard-bic", ThresholdKind::Hard)] {
            let (dim, risk) = bic_on_threshold_path(kind, &y)?;
            out.push((name, "support_size", dim as f64));
            out.push((name, "risk", risk));
        }
        Ok(out)
    });
    Ok(assemble("bic-demo", cfg, outcomes))
}

/// Runs `f` inside a thread pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Default configuration of each experiment.
pub fn default_config(experiment: &str, seed: u64) -> Result<SimConfig> {
    let base = SimConfig {
        n: 100,
        p: 100,
        design: DesignFamily::IidGaussian,
        k: 5,
        magnitudes: default_magnitudes(),
        sigma: 1.0,
        reps: 100,
        seed,
        normalize: true,
        cv_folds: 10,
    };
    match experiment {
        "1" | "2" => Ok(base),
        "bic-demo" => Ok(SimConfig { n: 2000, p: 2000, design: DesignFamily::Identity, k: 0, reps: 50, ..base }),
        other => Err(Error::Config(format!("unknown experiment `{other}`"))),
    }
}
