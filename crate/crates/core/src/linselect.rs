//! The LinSelect criterion
//! `||Y - Pi_S X b||^2 + ||X b - Pi_S X b||^2 / 2 + pen(S) sigma2_S`
//! minimized over candidate estimators `b` and approximation spaces `S`.

use std::collections::HashSet;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorPath, FitResult, GroupStructure};
use crate::model::{fitted, Dataset, Projector, Support};
use crate::penalty::{delta_coordinate, delta_group, linselect_penalty};
use crate::report::{CandidateRow, Components, SelectionReport};
use crate::subsets::Combinations;

/// Largest `p` for which the full collection may be enumerated.
pub const FULL_COLLECTION_MAX_P: usize = 12;

/// A candidate approximation space `S = range(X_J)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpace {
    pub columns: Support,
    /// Group indices when the space comes from a group structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<usize>>,
    pub dim: usize,
    pub delta: f64,
    pub pen: f64,
    pub sigma2_s: f64,
    #[serde(skip)]
    projector: Option<Projector>,
}

fn admissible(n: usize, dim: usize, delta: f64) -> bool {
    dim >= 1 && dim as f64 <= n as f64 / 2.0 - 1.0 && delta <= 2.0 * n as f64 / 3.0
}

impl ModelSpace {
    /// Builds the space spanned by `columns`, with complexity `delta_of(dim)`;
    /// returns `None` when the space fails the admissibility conditions
    /// `1 <= dim <= n/2 - 1` and `delta <= 2n/3`.
    pub fn build(
        data: &Dataset,
        columns: Support,
        groups: Option<Vec<usize>>,
        delta_of: impl Fn(usize) -> Result<f64>,
    ) -> Result<Option<Self>> {
        let n = data.n();
        let proj = Projector::onto_columns(data.x(), columns.indices());
        let dim = proj.rank();
        if dim == 0 {
            return Ok(None);
        }
        let delta = delta_of(dim)?;
        if !admissible(n, dim, delta) {
            return Ok(None);
        }
        let pen = linselect_penalty(n, dim, delta)?;
        let sigma2_s = proj.residual(data.y()).norm_squared() / (n - dim) as f64;
        Ok(Some(ModelSpace { columns, groups, dim, delta, pen, sigma2_s, projector: Some(proj) }))
    }

    /// Coordinate-sparse space with `delta = ln C(p, dim) + ln dim`.
    pub fn coordinate(data: &Dataset, columns: Support) -> Result<Option<Self>> {
        let p = data.p();
        ModelSpace::build(data, columns, None, |d| delta_coordinate(p, d))
    }

    /// Fallback space `{0}`: zero projector, `sigma2 = ||Y||^2 / n`, penalty of
    /// a one-dimensional space with weight `ln p`.
    pub fn null(data: &Dataset) -> Result<Self> {
        let n = data.n();
        let delta = (data.p() as f64).ln();
        Ok(ModelSpace {
            columns: Support::empty(),
            groups: None,
            dim: 0,
            delta,
            pen: linselect_penalty(n, 1, delta)?,
            sigma2_s: data.y().norm_squared() / n as f64,
            projector: Some(Projector::zero(n)),
        })
    }

    fn projector(&self, data: &Dataset) -> Projector {
        match &self.projector {
            Some(p) => p.clone(),
            None => Projector::onto_columns(data.x(), self.columns.indices()),
        }
    }
}

/// Candidate spaces plus any flags raised while building them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Collection {
    pub spaces: Vec<ModelSpace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl Collection {
    fn finish(spaces: Vec<ModelSpace>) -> Self {
        let flags = if spaces.is_empty() { vec!["empty_collection".to_string()] } else { Vec::new() };
        Collection { spaces, flags }
    }
}

/// One space per distinct nonempty path support with `|J| <= n / (3 ln p)`.
pub fn build_collection_coordinate(path: &EstimatorPath, data: &Dataset) -> Result<Collection> {
    let p = data.p();
    if p < 2 {
        return Err(Error::Domain("coordinate collection needs p >= 2".into()));
    }
    let bound = data.n() as f64 / (3.0 * (p as f64).ln());
    let mut seen = HashSet::new();
    let mut spaces = Vec::new();
    for fit in &path.fits {
        let s = &fit.support;
        if s.is_empty() || s.len() as f64 > bound || !seen.insert(s.clone()) {
            continue;
        }
        if let Some(space) = ModelSpace::coordinate(data, s.clone())? {
            spaces.push(space);
        }
    }
    Ok(Collection::finish(spaces))
}

/// Group analogue: `1 <= |K| <= n / (3 ln M)` and `sum_{k in K} |G_k| <= n/2 - 1`.
pub fn build_collection_group(path: &EstimatorPath, groups: &GroupStructure, data: &Dataset) -> Result<Collection> {
    let n = data.n() as f64;
    let m = groups.len();
    let bound = if m > 1 { n / (3.0 * (m as f64).ln()) } else { f64::INFINITY };
    let mut seen = HashSet::new();
    let mut spaces = Vec::new();
    for fit in &path.fits {
        let ks = groups.active_groups(&fit.beta);
        if ks.is_empty() || ks.len() as f64 > bound || !seen.insert(ks.clone()) {
            continue;
        }
        let cols = groups.columns_of(&ks);
        if cols.len() as f64 > n / 2.0 - 1.0 {
            continue;
        }
        let kcard = ks.len();
        let space = ModelSpace::build(data, Support::new(cols), Some(ks), |_| delta_group(m, kcard))?;
        if let Some(space) = space {
            spaces.push(space);
        }
    }
    Ok(Collection::finish(spaces))
}

/// Every admissible coordinate space with `|J| <= n / (3 ln p)`; only for
/// `p <= 12`.
pub fn build_collection_full(data: &Dataset) -> Result<Collection> {
    let p = data.p();
    if p > FULL_COLLECTION_MAX_P {
        return Err(Error::UnsupportedSize { what: "full LinSelect collection", size: p, cap: FULL_COLLECTION_MAX_P });
    }
    if p < 2 {
        return Err(Error::Domain("coordinate collection needs p >= 2".into()));
    }
    let bound = (data.n() as f64 / (3.0 * (p as f64).ln())).floor() as usize;
    let mut spaces = Vec::new();
    for k in 1..=bound.min(p) {
        for cols in Combinations::new(p, k) {
            if let Some(space) = ModelSpace::coordinate(data, Support::new(cols))? {
                spaces.push(space);
            }
        }
    }
    Ok(Collection::finish(spaces))
}

/// The three terms of the criterion for one fit and one space.
pub fn linselect_criterion(fit: &FitResult, space: &ModelSpace, data: &Dataset) -> Result<Components> {
    if fit.beta.len() != data.p() {
        return Err(Error::Dimension(format!("fit has {} coefficients, design {}", fit.beta.len(), data.p())));
    }
    let xb = fitted(data.x(), &fit.beta);
    Ok(criterion_terms(&xb, &space.projector(data), space, data.y()))
}

fn criterion_terms(xb: &DVector<f64>, proj: &Projector, space: &ModelSpace, y: &DVector<f64>) -> Components {
    let pxb = proj.apply(xb);
    Components {
        fit: (y - &pxb).norm_squared(),
        approximation: 0.5 * (xb - &pxb).norm_squared(),
        penalty: space.pen * space.sigma2_s,
    }
}

/// For every path point, minimizes the criterion over the collection; then
/// picks the path point with the smallest value (ties: sparser, then larger
/// `lambda`). An empty collection falls back to the null space and is flagged.
pub fn linselect_select(path: &EstimatorPath, collection: &Collection, data: &Dataset) -> Result<SelectionReport> {
    if path.is_empty() {
        return Err(Error::Domain("empty estimator path".into()));
    }
    let mut flags = collection.flags.clone();
    let fallback;
    let spaces: &[ModelSpace] = if collection.spaces.is_empty() {
        fallback = [ModelSpace::null(data)?];
        if !flags.iter().any(|f| f == "empty_collection") {
            flags.push("empty_collection".into());
        }
        flags.push("null_space_fallback".into());
        &fallback
    } else {
        &collection.spaces
    };
    let projectors: Vec<Projector> = spaces.iter().map(|s| s.projector(data)).collect();
    // The search expands both squared norms in the space's orthonormal basis
    // Q: with a = Q'Xb, fit = |Y|^2 - 2 (Q'Y).a + |a|^2 and
    // approximation = (|Xb|^2 - |a|^2) / 2. The winner is then re-evaluated
    // directly.
    let y = data.y();
    let yy = y.norm_squared();
    let qty: Vec<DVector<f64>> = projectors.iter().map(|p| p.basis().tr_mul(y)).collect();
    let rows: Vec<CandidateRow> = path
        .fits
        .par_iter()
        .enumerate()
        .map(|(i, fit)| {
            let xb = fitted(data.x(), &fit.beta);
            let xbxb = xb.norm_squared();
            let mut best: Option<(usize, f64)> = None;
            for (s, (space, proj)) in spaces.iter().zip(&projectors).enumerate() {
                let a = proj.basis().tr_mul(&xb);
                let aa = a.norm_squared();
                let t = (yy - 2.0 * qty[s].dot(&a) + aa) + 0.5 * (xbxb - aa) + space.pen * space.sigma2_s;
                let better = match best {
                    None => true,
                    Some((b, bt)) => t < bt || (t == bt && space.dim < spaces[b].dim),
                };
                if better {
                    best = Some((s, t));
                }
            }
            let (s, _) = best.expect("at least one space");
            let c = criterion_terms(&xb, &projectors[s], &spaces[s], y);
            CandidateRow {
                index: i,
                lambda: Some(path.grid[i]),
                dim: fit.support.len(),
                space: Some(spaces[s].columns.clone()),
                crit: c.total(),
                components: Some(c),
            }
        })
        .collect();
    let mut report = SelectionReport::from_rows("linselect", rows)?;
    let space = report.chosen_space.clone().unwrap_or_default();
    report.sigma2 = spaces.iter().find(|s| s.columns == space).map(|s| s.sigma2_s);
    report.flags = flags;
    Ok(report)
}
