use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sparsetune_core::estimators::{
    default_grid, gauss_lasso_refit, group_lasso_fit, lasso_fit, null_threshold, refit_path, sqrt_lasso_fit,
    LassoSolver,
};
use sparsetune_core::linselect::{build_collection_coordinate, build_collection_full, linselect_select};
use sparsetune_core::penalty::{pen_delta_solve, PenaltyKind};
use sparsetune_core::report::SelectionReport;
use sparsetune_core::segmentation::{
    segment_select_bgh, segment_select_lebarbier, segment_select_slope, segment_select_tv_linselect, variance_plugin,
};
use sparsetune_core::selectors::{
    bgh_select_exhaustive, bm_select_exhaustive, holdout_select, lb_aggregate_exhaustive, modified_bic_select,
    plugin_penalty_select, slope_heuristic_select, vfold_cv_select,
};
use sparsetune_core::sim::{self, SimConfig, SCHEMA_VERSION};
use sparsetune_core::{Dataset, EstimatorPath, Error, FitResult, GroupStructure, Support};

use crate::{
    BicRule, Collection, Command, DataArgs, Estimator, Experiment, Failure, GridArgs, OracleMethod, OutArgs, SegMethod,
    SlopeShape,
};

type Res<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    schema_version: u32,
    command: &'a str,
    config: C,
    result: R,
}

fn emit<C: Serialize, R: Serialize>(command: &str, config: C, result: R, out: &OutArgs) -> Res<()> {
    let env = Envelope { schema_version: SCHEMA_VERSION, command, config, result };
    write_json(&env, out.out.as_deref())
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Res<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Dataset used for fitting plus the column scales to undo afterwards.
struct Loaded {
    data: Dataset,
    scales: Option<Vec<f64>>,
}

fn load(args: &DataArgs) -> Res<Loaded> {
    if args.response_col.is_none() && args.response_file.is_none() {
        return Err(Failure::usage("pass --response-col or --response-file"));
    }
    let raw = Dataset::from_csv_path(&args.data, args.header, args.response_col.as_deref(), args.response_file.as_deref())?;
    if args.normalize {
        let (data, norms) = raw.normalize_columns();
        Ok(Loaded { data, scales: Some(norms) })
    } else {
        Ok(Loaded { data: raw, scales: None })
    }
}

impl Loaded {
    /// Coefficients of the normalized problem expressed in original units.
    fn to_original(&self, mut fit: FitResult) -> FitResult {
        if let Some(s) = &self.scales {
            for (b, n) in fit.beta.iter_mut().zip(s) {
                if *n > 0.0 {
                    *b /= n;
                }
            }
        }
        fit
    }

    fn path_to_original(&self, path: EstimatorPath) -> EstimatorPath {
        EstimatorPath { grid: path.grid, fits: path.fits.into_iter().map(|f| self.to_original(f)).collect() }
    }

    /// A path read from disk is in original units; bring it to the fitting scale.
    fn path_from_original(&self, mut path: EstimatorPath) -> EstimatorPath {
        if let Some(s) = &self.scales {
            for f in &mut path.fits {
                for (b, n) in f.beta.iter_mut().zip(s) {
                    *b *= n;
                }
            }
        }
        path
    }
}

fn read_path(file: &Path, p: usize) -> Res<EstimatorPath> {
    let text = std::fs::read_to_string(file).map_err(Error::from)?;
    let mut value: Value = serde_json::from_str(&text).map_err(Error::from)?;
    // Accept both a bare path and the artifact written by `fit-lasso`.
    if let Some(inner) = value.get_mut("result") {
        value = inner.take();
    }
    let path: EstimatorPath = serde_json::from_value(value).map_err(Error::from)?;
    let path = EstimatorPath::new(path.grid, path.fits)?;
    if let Some(f) = path.fits.iter().find(|f| f.beta.len() != p) {
        return Err(Error::Dimension(format!("path coefficients have length {}, data has p = {p}", f.beta.len())).into());
    }
    Ok(path)
}

fn grid_for(data: &Dataset, g: &GridArgs) -> Res<Vec<f64>> {
    if g.grid_len == 0 || !(g.grid_ratio > 0.0 && g.grid_ratio < 1.0) {
        return Err(Failure::usage("--grid-len must be positive and --grid-ratio in (0, 1)"));
    }
    let lmax = null_threshold(data.x(), data.y());
    if lmax <= 0.0 {
        return Err(Error::Domain("X^T Y is zero; the Lasso path is trivial".into()).into());
    }
    Ok(default_grid(lmax, g.grid_len, g.grid_ratio))
}

fn estimator_path(data: &Dataset, grid: &[f64], est: Estimator) -> sparsetune_core::Result<EstimatorPath> {
    let path = LassoSolver::new(data).path(Some(grid))?;
    match est {
        Estimator::Lasso => Ok(path),
        Estimator::GaussLasso => refit_path(data, &path),
    }
}

/// The path to select from: read from `file` or computed on the data.
fn resolve_path(l: &Loaded, file: Option<&Path>, est: Estimator, g: &GridArgs) -> Res<EstimatorPath> {
    match file {
        Some(f) => Ok(l.path_from_original(read_path(f, l.data.p())?)),
        None => Ok(estimator_path(&l.data, &grid_for(&l.data, g)?, est)?),
    }
}

#[derive(Serialize)]
struct Selected {
    report: SelectionReport,
    fit: FitResult,
}

fn selected(l: &Loaded, path: &EstimatorPath, report: SelectionReport) -> Res<Selected> {
    let pos = path
        .fits
        .iter()
        .zip(&path.grid)
        .position(|(_, &g)| Some(g) == report.chosen_lambda)
        .unwrap_or(report.chosen);
    let fit = path.fits.get(pos).cloned().ok_or_else(|| Error::Dimension("selected index outside the path".into()))?;
    Ok(Selected { fit: l.to_original(fit), report })
}

/// Best fit of each support size along `path`, with rss made nonincreasing.
fn slope_on_path(path: &EstimatorPath, p: usize, shape: SlopeShape) -> Res<SelectionReport> {
    let mut best: std::collections::BTreeMap<usize, usize> = Default::default();
    for (i, f) in path.fits.iter().enumerate() {
        let d = f.support.len();
        let e = best.entry(d).or_insert(i);
        if f.rss < path.fits[*e].rss {
            *e = i;
        }
    }
    let idx: Vec<usize> = best.values().copied().collect();
    let dims: Vec<usize> = best.keys().copied().collect();
    let mut rss: Vec<f64> = idx.iter().map(|&i| path.fits[i].rss).collect();
    for k in 1..rss.len() {
        rss[k] = rss[k].min(rss[k - 1]);
    }
    let shape: Vec<f64> = dims
        .iter()
        .map(|&d| match shape {
            SlopeShape::Dim => d as f64,
            SlopeShape::Bm if d == 0 => 0.0,
            SlopeShape::Bm => 4.0 * d as f64 * (4.0 + (p as f64 / d as f64).ln()),
        })
        .collect();
    let mut report = slope_heuristic_select(&dims, &rss, &shape)?;
    for row in &mut report.rows {
        row.index = idx[row.index];
        row.lambda = Some(path.grid[row.index]);
    }
    report.chosen = idx[report.chosen];
    report.chosen_lambda = Some(path.grid[report.chosen]);
    Ok(report)
}

fn read_signal(file: &Path, header: bool) -> Res<Vec<f64>> {
    let table = sparsetune_core::model::read_table(std::fs::File::open(file).map_err(Error::from)?, header)?;
    if table.rows.iter().any(|r| r.len() != 1) {
        return Err(Error::Csv("segmentation input must have a single column".into()).into());
    }
    Ok(table.rows.into_iter().map(|r| r[0]).collect())
}

/// Default configuration of `experiment`, overlaid with the fields of the
/// optional JSON file, with `seed` taken from the command line.
fn sim_config(experiment: Experiment, file: Option<&Path>, seed: u64) -> Res<SimConfig> {
    let name = experiment_name(experiment);
    let mut value = serde_json::to_value(sim::default_config(name, seed)?).map_err(Error::from)?;
    if let Some(f) = file {
        let text = std::fs::read_to_string(f).map_err(Error::from)?;
        let overlay: Value = serde_json::from_str(&text).map_err(Error::from)?;
        let Value::Object(fields) = overlay else {
            return Err(Error::Config("simulation config must be a JSON object".into()).into());
        };
        for (k, v) in fields {
            value[k] = v;
        }
    }
    value["seed"] = json!(seed);
    let cfg: SimConfig = serde_json::from_value(value).map_err(|e| Error::Config(format!("simulation config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::One => "1",
        Experiment::Two => "2",
        Experiment::BicDemo => "bic-demo",
    }
}

pub fn dispatch(cmd: Command) -> Res<()> {
    match cmd {
        Command::FitLasso { data, lambda, grid, out } => {
            let l = load(&data)?;
            let config = json!({ "data": data, "lambda": lambda, "grid": grid });
            match lambda {
                Some(lam) => {
                    let fit = l.to_original(lasso_fit(&l.data, lam, None)?);
                    emit("fit-lasso", config, fit, &out)
                }
                None => {
                    let g = grid_for(&l.data, &grid)?;
                    let path = l.path_to_original(LassoSolver::new(&l.data).path(Some(&g))?);
                    emit("fit-lasso", config, path, &out)
                }
            }
        }
        Command::FitSqrtLasso { data, lambda, out } => {
            let l = load(&data)?;
            let lam = lambda.unwrap_or_else(|| sim::sqrt_lasso_lambda(l.data.p()));
            let fit = l.to_original(sqrt_lasso_fit(&l.data, lam)?);
            emit("fit-sqrt-lasso", json!({ "data": data, "lambda": lam }), fit, &out)
        }
        Command::FitGroupLasso { data, groups, group_size, lambda, lambdas, out } => {
            let l = load(&data)?;
            let p = l.data.p();
            let gs = match (&groups, group_size) {
                (Some(labels), _) => {
                    if labels.len() != p {
                        return Err(Error::Dimension(format!("{} group labels for p = {p}", labels.len())).into());
                    }
                    GroupStructure::from_labels(labels)?
                }
                (None, Some(size)) => GroupStructure::contiguous(p, size)?,
                (None, None) => return Err(Failure::usage("pass --groups or --group-size")),
            };
            let lams = match (&lambdas, lambda) {
                (Some(v), _) => v.clone(),
                (None, Some(v)) => vec![v; gs.len()],
                (None, None) => return Err(Failure::usage("pass --lambda or --lambdas")),
            };
            let fit = l.to_original(group_lasso_fit(&l.data, &gs, &lams)?);
            let config = json!({ "data": data, "groups": gs.blocks(), "lambdas": lams });
            emit("fit-group-lasso", config, fit, &out)
        }
        Command::RefitGauss { data, support, path, out } => {
            let l = load(&data)?;
            match (support, path) {
                (Some(cols), _) => {
                    if let Some(&j) = cols.iter().find(|&&j| j >= l.data.p()) {
                        return Err(Error::Dimension(format!("column {j} outside p = {}", l.data.p())).into());
                    }
                    let s = Support::new(cols);
                    let fit = l.to_original(gauss_lasso_refit(&l.data, &s)?);
                    emit("refit-gauss", json!({ "data": data, "support": s }), fit, &out)
                }
                (None, Some(file)) => {
                    let input = l.path_from_original(read_path(&file, l.data.p())?);
                    let refit = l.path_to_original(refit_path(&l.data, &input)?);
                    emit("refit-gauss", json!({ "data": data, "path": file }), refit, &out)
                }
                (None, None) => Err(Failure::usage("pass --support or --path")),
            }
        }
        Command::SelectLinselect { data, path, collection, grid, out } => {
            let l = load(&data)?;
            let est_path = resolve_path(&l, path.as_deref(), Estimator::Lasso, &grid)?;
            let coll = match collection {
                Collection::Coordinate => build_collection_coordinate(&est_path, &l.data)?,
                Collection::Full => build_collection_full(&l.data)?,
            };
            let report = linselect_select(&est_path, &coll, &l.data)?;
            let config = json!({ "data": data, "path": path, "collection": collection, "grid": grid });
            emit("select-linselect", config, selected(&l, &est_path, report)?, &out)
        }
        Command::SelectCv { data, path, estimator, folds, holdout, seed, grid, out } => {
            let l = load(&data)?;
            let est_path = resolve_path(&l, path.as_deref(), estimator, &grid)?;
            let factory = |d: &Dataset, g: &[f64]| estimator_path(d, g, estimator);
            let report = match holdout {
                Some(ratio) => holdout_select(factory, &l.data, &est_path, ratio, seed)?,
                None => vfold_cv_select(factory, &l.data, &est_path, folds, seed)?,
            };
            let config = json!({
                "data": data, "path": path, "estimator": estimator, "folds": folds,
                "holdout": holdout, "seed": seed, "grid": grid,
            });
            emit("select-cv", config, selected(&l, &est_path, report)?, &out)
        }
        Command::SelectBic { data, path, estimator, rule, grid, out } => {
            let l = load(&data)?;
            let est_path = resolve_path(&l, path.as_deref(), estimator, &grid)?;
            let report = match rule {
                BicRule::ModifiedBic => modified_bic_select(&est_path, &l.data)?,
                BicRule::PluginAic => plugin_penalty_select(&est_path, &l.data, PenaltyKind::Aic)?,
                BicRule::PluginBic => plugin_penalty_select(&est_path, &l.data, PenaltyKind::Bic)?,
                BicRule::PluginBm => plugin_penalty_select(&est_path, &l.data, PenaltyKind::BirgeMassart)?,
            };
            let config = json!({ "data": data, "path": path, "estimator": estimator, "rule": rule, "grid": grid });
            emit("select-bic", config, selected(&l, &est_path, report)?, &out)
        }
        Command::SelectSlope { data, path, estimator, shape, grid, out } => {
            let l = load(&data)?;
            let est_path = resolve_path(&l, path.as_deref(), estimator, &grid)?;
            let report = slope_on_path(&est_path, l.data.p(), shape)?;
            let config = json!({ "data": data, "path": path, "estimator": estimator, "shape": shape, "grid": grid });
            emit("select-slope", config, selected(&l, &est_path, report)?, &out)
        }
        Command::BenchOracle { data, method, sigma2, out } => {
            let l = load(&data)?;
            let need = || sigma2.ok_or_else(|| Failure::usage("--sigma2 is required for this method"));
            let config = json!({ "data": data, "method": method, "sigma2": sigma2 });
            match method {
                OracleMethod::Bm => emit("bench-oracle", config, bm_select_exhaustive(&l.data, need()?)?, &out),
                OracleMethod::Lb => emit("bench-oracle", config, lb_aggregate_exhaustive(&l.data, need()?)?, &out),
                OracleMethod::Bgh => emit("bench-oracle", config, bgh_select_exhaustive(&l.data)?, &out),
            }
        }
        Command::Segment { input, header, method, q_max, sigma2, out } => {
            let y = read_signal(&input, header)?;
            let mut s2 = sigma2;
            let seg = match method {
                SegMethod::Bgh => segment_select_bgh(&y, q_max)?,
                SegMethod::Slope => segment_select_slope(&y, q_max)?,
                SegMethod::TvLinselect => segment_select_tv_linselect(&y, None)?,
                SegMethod::Lebarbier => {
                    let (v, flag) = match sigma2 {
                        Some(v) => (v, None),
                        None => (variance_plugin(&y)?.sigma2, Some("plugin_variance")),
                    };
                    s2 = Some(v);
                    let mut seg = segment_select_lebarbier(&y, q_max, v)?;
                    seg.flags.extend(flag.map(String::from));
                    seg
                }
            };
            let config = json!({ "input": input, "header": header, "method": method, "q_max": q_max, "sigma2": s2 });
            emit("segment", config, seg, &out)
        }
        Command::Simulate { experiment, config, seed, out, csv } => {
            let cfg = sim_config(experiment, config.as_deref(), seed)?;
            let report = match experiment {
                Experiment::One => sim::run_experiment1(&cfg)?,
                Experiment::Two => sim::run_experiment2(&cfg)?,
                Experiment::BicDemo => sim::run_bic_demo(&cfg)?,
            };
            write_json(&report, Some(&out))?;
            if let Some(path) = csv {
                let file = std::fs::File::create(path).map_err(Error::from)?;
                report.write_raw_csv(std::io::BufWriter::new(file))?;
            }
            Ok(())
        }
        Command::Pen { n, d, delta } => {
            if d.is_empty() || delta.is_empty() {
                return Err(Failure::usage("pass at least one --d and one --delta"));
            }
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let io = |e: csv::Error| Failure::from(Error::from(e));
            w.write_record(["n", "D", "delta", "pen_delta"]).map_err(io)?;
            for &dd in &d {
                for &dl in &delta {
                    let v = pen_delta_solve(n, dd, dl)?;
                    w.write_record([n.to_string(), dd.to_string(), dl.to_string(), v.to_string()]).map_err(io)?;
                }
            }
            w.flush().map_err(Error::from)?;
            Ok(())
        }
        Command::Kstar { n, p } => {
            println!("{}", sparsetune_core::diagnostics::compute_kstar(n, p));
            Ok(())
        }
    }
}
