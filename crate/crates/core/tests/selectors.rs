mod common;

use nalgebra::{DMatrix, DVector};
use sparsetune_core::estimators::{lasso_path, threshold_vector, EstimatorPath, FitResult, ThresholdKind};
use sparsetune_core::penalty::{classical_penalty, PenaltyArgs, PenaltyKind};
use sparsetune_core::selectors::*;
use sparsetune_core::Dataset;

fn lasso_factory(d: &Dataset, g: &[f64]) -> sparsetune_core::Result<EstimatorPath> {
    lasso_path(d, Some(g))
}

#[test]
fn two_fold_on_duplicated_halves_is_twice_holdout() {
    let half = common::random_dataset(1, 15, 4);
    let x = DMatrix::from_fn(30, 4, |i, j| half.x()[(i % 15, j)]);
    let y = DVector::from_fn(30, |i, _| half.y()[i % 15]);
    let d = Dataset::new(x, y).unwrap();
    let grid = lasso_path(&d, None).unwrap().grid;
    let folds: Vec<usize> = (0..30).map(|i| i / 15).collect();
    let cv = cv_scores_with_folds(&lasso_factory, &d, &grid, &folds).unwrap();
    let ho = holdout_scores_with_split(&lasso_factory, &d, &grid, &(0..15).collect::<Vec<_>>()).unwrap();
    for (a, b) in cv.iter().zip(&ho) {
        assert!((a - 2.0 * b).abs() < 1e-9 * a.abs().max(1.0));
    }
}

#[test]
fn cv_scores_ignore_fold_labels() {
    let d = common::planted(2, 30, 6, 2, 2.0);
    let grid = lasso_path(&d, None).unwrap().grid;
    let folds = cv_folds(30, 5, 9).unwrap();
    let relabeled: Vec<usize> = folds.iter().map(|f| (f + 3) % 5).collect();
    let a = cv_scores_with_folds(&lasso_factory, &d, &grid, &folds).unwrap();
    let b = cv_scores_with_folds(&lasso_factory, &d, &grid, &relabeled).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-9 * u.abs().max(1.0));
    }
    assert!(cv_folds(5, 6, 0).is_err());
}

fn planted_truth(seed: u64) -> (Dataset, DVector<f64>) {
    let mut r = common::rng(seed);
    let x = common::gaussian_matrix(&mut r, 40, 10);
    let mut b = DVector::zeros(10);
    b[0] = 1.5;
    b[1] = -1.5;
    let y = &x * &b + common::gaussian_vector(&mut r, 40);
    (Dataset::new(x, y).unwrap(), b)
}

fn loss(d: &Dataset, fit: &FitResult, b0: &DVector<f64>) -> f64 {
    (d.x() * (DVector::from_column_slice(&fit.beta) - b0)).norm_squared()
}

#[test]
fn cv_and_holdout_track_the_grid_oracle() {
    let (mut cv_ok, mut ho_ok) = (0, 0);
    for seed in 0..100 {
        let (d, b0) = planted_truth(1000 + seed);
        let path = lasso_path(&d, None).unwrap();
        let oracle = path.fits.iter().map(|f| loss(&d, f, &b0)).fold(f64::INFINITY, f64::min);
        let cv = vfold_cv_select(lasso_factory, &d, &path, 10, seed).unwrap();
        if loss(&d, &path.fits[cv.chosen], &b0) <= 2.0 * oracle {
            cv_ok += 1;
        }
        let ho = holdout_select(lasso_factory, &d, &path, 0.5, seed).unwrap();
        if loss(&d, &path.fits[ho.chosen], &b0) <= 2.0 * oracle {
            ho_ok += 1;
        }
    }
    assert!(cv_ok >= 80, "cv {cv_ok}/100");
    assert!(ho_ok >= 50, "holdout {ho_ok}/100");
}

#[test]
fn cv_is_deterministic() {
    let (d, _) = planted_truth(5);
    let path = lasso_path(&d, None).unwrap();
    let a = vfold_cv_select(lasso_factory, &d, &path, 10, 3).unwrap();
    let b = vfold_cv_select(lasso_factory, &d, &path, 10, 3).unwrap();
    assert_eq!(a, b);
    let a = holdout_select(lasso_factory, &d, &path, 0.5, 3).unwrap();
    let b = holdout_select(lasso_factory, &d, &path, 0.5, 3).unwrap();
    assert_eq!(a, b);
}

fn manual_fit(d: &Dataset, nz: usize, rss: f64) -> FitResult {
    let mut beta = vec![0.0; d.p()];
    for b in beta.iter_mut().take(nz) {
        *b = 1.0;
    }
    let mut f = FitResult::from_beta(d, beta, None);
    f.rss = rss;
    f
}

#[test]
fn modified_bic_rules() {
    let d = common::random_dataset(6, 10, 8);
    let path = EstimatorPath::new(vec![2.0, 1.0], vec![manual_fit(&d, 3, 4.0), manual_fit(&d, 2, 4.0)]).unwrap();
    assert_eq!(modified_bic_select(&path, &d).unwrap().chosen, 1);
    let path = EstimatorPath::new(vec![2.0, 1.0], vec![manual_fit(&d, 1, 9.0), manual_fit(&d, 6, 1e-6)]).unwrap();
    let r = modified_bic_select(&path, &d).unwrap();
    assert_eq!(r.chosen, 0);
    assert!(r.rows.iter().all(|row| row.dim <= 5));
    let c = modified_bic_components(10, 2.5, 3);
    assert!((c.total() - (10.0 * 0.25f64.ln() + 3.0 * 10f64.ln())).abs() < 1e-12);
}

#[test]
fn hard_threshold_bic_overfits_pure_noise() {
    let n = 200;
    let mut total = 0usize;
    for seed in 0..50 {
        let y = common::gaussian_vector(&mut common::rng(500 + seed), n);
        let d = Dataset::new(DMatrix::identity(n, n), y.clone()).unwrap();
        let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut grid = vec![2.0 * mags[0]];
        grid.extend(mags[..n / 2].iter().copied());
        let fits = grid
            .iter()
            .map(|&l| FitResult::from_beta(&d, threshold_vector(ThresholdKind::Hard, y.as_slice(), l, None).unwrap(), Some(l)))
            .collect();
        let path = EstimatorPath::new(grid, fits).unwrap();
        let r = modified_bic_select(&path, &d).unwrap();
        total += r.chosen_row().dim;
    }
    assert!(total as f64 / 50.0 > 5.0, "mean support {}", total as f64 / 50.0);
}

#[test]
fn plugin_variance() {
    let mut r = common::rng(7);
    let x = common::gaussian_matrix(&mut r, 20, 4);
    let y = &x * DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0]);
    let d = Dataset::new(x, y).unwrap();
    let path = lasso_path(&d, None).unwrap();
    let rep = plugin_penalty_select(&path, &d, PenaltyKind::BirgeMassart).unwrap();
    assert!(rep.sigma2.unwrap() < 1e-20);
    assert!(rep.flags.iter().any(|f| f == "zero_variance_estimate"));

    let est: Vec<f64> = (0..200).map(|s| full_model_variance(&common::random_dataset(3000 + s, 50, 10)).unwrap()).collect();
    let mean = est.iter().sum::<f64>() / 200.0;
    let sd = (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * sd / 200f64.sqrt(), "{mean} (sd {sd})");

    let d = common::planted(8, 50, 10, 2, 2.0);
    let path = lasso_path(&d, None).unwrap();
    let rep = plugin_penalty_select(&path, &d, PenaltyKind::BirgeMassart).unwrap();
    let s2 = rep.sigma2.unwrap();
    for row in &rep.rows {
        let args = PenaltyArgs { dim: Some(row.dim), p: Some(10), sigma2: Some(s2), ..Default::default() };
        let want = classical_penalty(PenaltyKind::BirgeMassart, &args).unwrap();
        assert!((row.components.unwrap().penalty - want).abs() < 1e-12 * want.max(1.0));
    }
    assert!(plugin_penalty_select(&path, &common::random_dataset(9, 8, 10), PenaltyKind::Aic).is_err());
}

/// rss with slope `a` per unit of shape up to dimension 5, then a flat tail of
/// slope `b` per unit.
fn elbow(a: f64, b: f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let dims: Vec<usize> = (0..=20).collect();
    let shape: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
    let rss: Vec<f64> = dims
        .iter()
        .map(|&d| {
            let d = d as f64;
            1000.0 - a * d.min(5.0) - b * (d - 5.0).max(0.0)
        })
        .collect();
    (dims, rss, shape)
}

#[test]
fn slope_heuristic_examples() {
    let (dims, rss, shape) = elbow(100.0, 1.0);
    let scan = slope_scan(&dims, &rss, &shape).unwrap();
    assert!(scan.jump_found);
    // The jump from dimension 20 to 5 happens where kappa crosses the tail slope.
    let i = scan.kappas.iter().position(|&k| k == scan.kappa_hat).unwrap();
    assert!(scan.kappas[i - 1] <= 1.0 && 1.0 <= scan.kappa_hat, "{}", scan.kappa_hat);
    let rep = slope_heuristic_select(&dims, &rss, &shape).unwrap();
    assert_eq!(rep.chosen_row().dim, 5);

    let doubled: Vec<f64> = shape.iter().map(|s| 2.0 * s).collect();
    let k2 = slope_scan(&dims, &rss, &doubled).unwrap().kappa_hat;
    let step = (scan.kappas[1] / scan.kappas[0]).ln();
    assert!(((2.0 * k2 / scan.kappa_hat).ln()).abs() <= step + 1e-12);

    let flat = vec![5.0; dims.len()];
    let rep = slope_heuristic_select(&dims, &flat, &shape).unwrap();
    assert!(rep.flags.iter().any(|f| f == "no_dimension_jump"));
    assert_eq!(rep.chosen_row().dim, 0);
}

/// Independent enumeration of the known-variance benchmark.
fn bm_oracle(d: &Dataset, s2: f64) -> Vec<usize> {
    let (n, p) = (d.n(), d.p());
    let kstar = (1..=p).filter(|&k| 2.0 * k as f64 * (1.0 + (p as f64 / k as f64).ln()) <= n as f64).max().unwrap_or(0);
    let mut best = (f64::INFINITY, vec![]);
    for cols in common::subsets_by_size(p, kstar) {
        let k = cols.len() as f64;
        let c = common::rss_onto(d.x(), &cols, d.y()) + 4.0 * k * (4.0 + (p as f64 / k).ln()) * s2;
        if c < best.0 {
            best = (c, cols);
        }
    }
    if kstar < p {
        let all: Vec<usize> = (0..p).collect();
        let c = common::rss_onto(d.x(), &all, d.y()) + 2.0 * n as f64 * s2;
        if c < best.0 {
            best = (c, all);
        }
    }
    best.1
}

#[test]
fn birge_massart_exhaustive() {
    let d = common::random_dataset(10, 30, 6).with_response(DVector::zeros(30)).unwrap();
    let r = bm_select_exhaustive(&d, 1.0).unwrap();
    assert_eq!(r.chosen_space.unwrap().indices(), &[0]);

    let mut rng = common::rng(11);
    let x = common::gaussian_matrix(&mut rng, 30, 6);
    let mut y = x.column(3) * 5.0;
    y += common::gaussian_vector(&mut rng, 30) * 0.01;
    let d = Dataset::new(x, y).unwrap();
    assert_eq!(bm_select_exhaustive(&d, 1e-4).unwrap().chosen_space.unwrap().indices(), &[3]);

    for seed in 0..20 {
        let d = common::planted(1200 + seed, 30, 8, 2, 1.0);
        let r = bm_select_exhaustive(&d, 1.0).unwrap();
        assert_eq!(r.chosen_space.unwrap().indices(), &bm_oracle(&d, 1.0)[..], "seed {seed}");
    }
    assert!(bm_select_exhaustive(&common::random_dataset(12, 30, 13), 1.0).is_err());
}

#[test]
fn lb_aggregate_examples() {
    let d = common::planted(13, 30, 6, 2, 1.0);
    let agg = lb_aggregate_exhaustive(&d, 1.0).unwrap();
    assert!((agg.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let big = 1e6 * d.y().norm_squared();
    let agg = lb_aggregate_exhaustive(&d, big).unwrap();
    // As sigma2 grows the rss term vanishes and exp(-dim/2) remains.
    let tilted: Vec<f64> = agg.spaces.iter().zip(&agg.priors).map(|(s, p)| p * (-(s.len() as f64) / 2.0).exp()).collect();
    let tot: f64 = tilted.iter().sum();
    let tv: f64 = agg.weights.iter().zip(&tilted).map(|(w, t)| (w - t / tot).abs()).sum::<f64>() / 2.0;
    assert!(tv < 1e-3, "tv {tv}");

    let tiny = common::random_dataset(14, 3, 2);
    let agg = lb_aggregate_exhaustive(&tiny, 1.0).unwrap();
    assert_eq!(agg.weights.len(), 1);
    let proj = common::project(tiny.x(), &[0, 1], tiny.y());
    for (a, b) in agg.fitted.iter().zip(proj.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

/// Independent enumeration of the variance-free benchmark.
fn bgh_oracle(d: &Dataset) -> Vec<usize> {
    let (n, p) = (d.n(), d.p());
    let mut best = (f64::INFINITY, vec![]);
    for cols in common::subsets_by_size(p, (n - 1) / 4) {
        let k = cols.len();
        if k as f64 > n as f64 / 2.0 - 1.0 {
            continue;
        }
        let delta = common::exact_log_binomial(p as u64, k as u64) + (k as f64).ln();
        if delta > 2.0 * n as f64 / 3.0 {
            continue;
        }
        let pen = sparsetune_core::penalty::linselect_penalty(n, k, delta).unwrap();
        let c = common::rss_onto(d.x(), &cols, d.y()) * (1.0 + pen / (n - k) as f64);
        if c < best.0 {
            best = (c, cols);
        }
    }
    best.1
}

#[test]
fn bgh_exhaustive() {
    for seed in 0..20 {
        let d = common::planted(1400 + seed, 30, 8, 2, 1.0);
        let r = bgh_select_exhaustive(&d).unwrap();
        let chosen = r.chosen_space.clone().unwrap();
        assert_eq!(chosen.indices(), &bgh_oracle(&d)[..], "seed {seed}");
        let scaled = bgh_select_exhaustive(&d.with_response(d.y() * 5.0).unwrap()).unwrap();
        assert_eq!(scaled.chosen_space, Some(chosen.clone()));
        let s2 = common::rss_onto(d.x(), chosen.indices(), d.y()) / (30 - chosen.len()) as f64;
        assert!((r.sigma2.unwrap() - s2).abs() < 1e-10);
    }
}
