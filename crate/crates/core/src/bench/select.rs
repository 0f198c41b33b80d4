use nalgebra::DMatrix;
use rand::seq::SliceRandom as _;

use super::model::fit_model;
use super::Estimator;
use crate::cost::{Cost, FeasibleSet};
use crate::dist::{delta_bound, DivergenceKind, EmpiricalDist, EpsilonRule};
use crate::dro::{erm_objective, solve_outer, AmbiguitySpec, ObjectiveKind, SolverConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Below this many training points the hold-out split is skipped.
const MIN_CV_SAMPLES: usize = 10;

/// Everything a hold-out evaluation of one DRO method needs.
#[derive(Debug, Clone, Copy)]
pub struct CvProblem<'a> {
    pub cost: &'a Cost,
    pub set: &'a FeasibleSet,
    pub estimator: Estimator,
    pub kind: DivergenceKind,
    pub xi: &'a EmpiricalDist,
    /// Covariates aligned with `xi`, one row per sample.
    pub covariates: Option<&'a DMatrix<f64>>,
    pub r: f64,
    pub monte_carlo_ratio: usize,
    pub solver: &'a SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsSelection {
    pub eps: f64,
    /// Validation cost per grid value, in grid order; empty when no split ran.
    pub scores: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Hold-out choice of the radius: fit and solve on a `split_fraction` share
/// of the data for each grid value and keep the one with the lowest mean cost
/// on the rest. Ties go to the smallest radius.
pub fn select_epsilon(
    grid: &[f64],
    problem: &CvProblem<'_>,
    split_fraction: f64,
    seed: u64,
) -> Result<EpsSelection> {
    if grid.is_empty() {
        return Err(Error::invalid("epsilon grid is empty"));
    }
    if let Some(e) = grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("epsilon grid entry {e} is not a finite radius >= 0")));
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    let smallest = grid.iter().copied().fold(f64::INFINITY, f64::min);
    if grid.len() == 1 {
        return Ok(EpsSelection { eps: grid[0], scores: Vec::new(), diagnostic: None });
    }
    let n = problem.xi.len();
    if n < MIN_CV_SAMPLES {
        return Ok(EpsSelection {
            eps: smallest,
            scores: Vec::new(),
            diagnostic: Some(format!(
                "only {n} training samples (< {MIN_CV_SAMPLES}); using the smallest radius {smallest}"
            )),
        });
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(rng::mix(&[seed, rng::label("cv-split")])));
    let n_fit = ((split_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (fit_idx, val_idx) = idx.split_at(n_fit);
    let fit_xi = problem.xi.subset(fit_idx)?;
    let val_xi = problem.xi.subset(val_idx)?;
    let fit_ys = problem.covariates.map(|ys| ys.select_rows(fit_idx));
    let val_ys = problem.covariates.map(|ys| ys.select_rows(val_idx));

    let (model, _) = fit_model(problem.estimator, &fit_xi, fit_ys.as_ref(), problem.r)?;
    let m = problem.monte_carlo_ratio * n_fit;
    let center_seed = rng::mix(&[seed, rng::label("cv-center")]);

    let mut scores = Vec::with_capacity(grid.len());
    for &eps in grid {
        let kind = ObjectiveKind::Dro(AmbiguitySpec::new(problem.kind, eps)?);
        let score = if model.is_conditional() {
            let ys = val_ys.as_ref().expect("conditional model implies covariates");
            let mut total = 0.0;
            for j in 0..val_xi.len() {
                let y = ys.row(j).transpose();
                let q = model.center(m, rng::mix(&[center_seed, j as u64]), Some(&y))?;
                let sol = solve_outer(problem.cost, problem.set, &kind, &q, problem.solver, None)?;
                total += problem.cost.eval_at(&sol.x, &val_xi.atom(j))?;
            }
            total / val_xi.len() as f64
        } else {
            let q = model.center(m, center_seed, None)?;
            let sol = solve_outer(problem.cost, problem.set, &kind, &q, problem.solver, None)?;
            erm_objective(&sol.x, problem.cost, &val_xi)?
        };
        scores.push(score);
    }

    let mut best = 0;
    for k in 1..grid.len() {
        let tol = 1e-12 * (1.0 + scores[best].abs());
        let better = scores[k] < scores[best] - tol;
        let tie_smaller = (scores[k] - scores[best]).abs() <= tol && grid[k] < grid[best];
        if better || tie_smaller {
            best = k;
        }
    }
    Ok(EpsSelection { eps: grid[best], scores, diagnostic: None })
}

/// `C · Δ(δ, Θ)` with the rule's own confidence level and multiplier.
pub fn theoretical_epsilon(rule: &EpsilonRule, n: usize) -> Result<f64> {
    rule.validate()?;
    Ok(rule.multiplier * delta_bound(rule, n, rule.delta)?)
}
