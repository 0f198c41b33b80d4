use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use super::instance::{
    apply_eta_shift, gen_beta_market, gen_contextual_instance, gen_quadratic_instance,
    ContextualInstance, ContextualSpec, ShiftSpec, Truth,
};
use super::model::{fit_model, FittedModel};
use super::oracle::{oracle_solution, true_objective, Evaluation, OracleSolution, Sampler};
use super::select::{select_epsilon, theoretical_epsilon, CvProblem};
use super::{EpsSource, ExperimentSpec, Method, MethodKind, Scenario};
use crate::cost::{Cost, DownsideRiskCost, FeasibleSet, SimplexFloorSet};
use crate::dist::{DivergenceKind, EmpiricalDist};
use crate::dro::{solve_outer, AmbiguitySpec, ObjectiveKind};
use crate::error::{Error, Result};
use crate::rng;

/// Absolute slack added to every bound in [`check_bound_coverage`].
pub const BOUND_SLACK: f64 = 1e-3;

/// One (method, n, seed) trial. Failed trials carry NaN numbers and the
/// error text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scenario: Scenario,
    pub method: String,
    pub n: usize,
    pub seed: usize,
    /// Radius used; 0 for empirical risk minimization.
    pub eps: f64,
    /// True objective `Z(x̂)`.
    pub objective: f64,
    /// `Z(x̂) − Z(x*)`.
    pub gen_error: f64,
    pub wallclock_ms: f64,
    pub error: Option<String>,
}

/// Per-context evaluation data of the contextual scenario.
struct ContextEval {
    y: DVector<f64>,
    eval: Evaluation,
    oracle_value: f64,
}

enum Env {
    Plain {
        train: Truth,
        eval: Evaluation,
        oracle: OracleSolution,
        /// `Z(x*)` under `eval`.
        oracle_value: f64,
    },
    Contextual { instance: ContextualInstance, contexts: Vec<ContextEval> },
}

/// Immutable data shared by every trial of an experiment.
struct Prepared {
    cost: Cost,
    set: FeasibleSet,
    env: Env,
}

fn scenario_seed(spec: &ExperimentSpec, what: &str) -> u64 {
    rng::mix(&[spec.master_seed, rng::label(spec.scenario.as_str()), rng::label(what)])
}

fn portfolio(spec: &ExperimentSpec) -> Result<(Cost, FeasibleSet)> {
    Ok((
        DownsideRiskCost::new(spec.mu, spec.gamma)?.into(),
        SimplexFloorSet::new(spec.tau, spec.dim)?.into(),
    ))
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let oracle_seed = scenario_seed(spec, "oracle");
    let eval_seed = scenario_seed(spec, "eval");
    let plain = |cost: Cost, set: FeasibleSet, train: Truth, test: Truth| -> Result<Prepared> {
        let oracle = oracle_solution(
            &cost,
            &set,
            Sampler::Truth(&test),
            spec.n_oracle,
            spec.oracle_restarts,
            oracle_seed,
            &spec.solver,
        )?;
        let eval = match (&cost, &test) {
            (Cost::QuadraticLinear(q), Truth::GaussianPlusExp { .. }) => {
                Evaluation::Quadratic { anchor: q.anchor.clone() }
            }
            _ => Evaluation::Samples(test.sample(spec.n_eval, eval_seed)?),
        };
        let oracle_value = true_objective(&oracle.x, &cost, &eval)?;
        Ok(Prepared { cost, set, env: Env::Plain { train, eval, oracle, oracle_value } })
    };
    let instance_seed = scenario_seed(spec, "instance");
    match spec.scenario {
        Scenario::BetaPortfolio => {
            let (cost, set) = portfolio(spec)?;
            let truth = Truth::Dist(gen_beta_market(spec.dim, spec.r, instance_seed)?.into());
            plain(cost, set, truth.clone(), truth)
        }
        Scenario::Shifted => {
            let (cost, set) = portfolio(spec)?;
            let base = gen_beta_market(spec.dim, spec.r, instance_seed)?;
            let c = spec.shift_c.unwrap_or_else(|| {
                rng::stream(scenario_seed(spec, "shift")).random_range(-1.0..=1.0)
            });
            let shift = ShiftSpec { c, perturb_noise: Some(spec.shift_noise) };
            shift.validate()?;
            let shifted = apply_eta_shift(&base, &shift)?;
            let test = Truth::Perturbed { base: shifted.into(), half_width: spec.shift_noise };
            plain(cost, set, Truth::Dist(base.into()), test)
        }
        Scenario::QuadraticBall => {
            let q = gen_quadratic_instance(spec.dim, spec.lam, spec.radius)?;
            plain(q.cost.into(), q.set.into(), q.truth.clone(), q.truth)
        }
        Scenario::Contextual => {
            let (cost, set) = portfolio(spec)?;
            let sd2 = spec.noise_sd * spec.noise_sd;
            let cspec = ContextualSpec {
                d_xi: spec.dim,
                d_y: spec.d_y,
                snr: spec.snr,
                mis: spec.mis,
                noise_cov: DMatrix::from_diagonal_element(spec.dim, spec.dim, sd2),
            };
            let mut instance = gen_contextual_instance(&cspec, instance_seed)?;
            if let Some(pool) = &spec.covariate_pool {
                instance = instance.with_covariate_pool(pool.clone())?;
            }
            let ys = instance.sample_covariates(spec.n_test_contexts, scenario_seed(spec, "contexts"));
            let mut contexts = Vec::with_capacity(ys.nrows());
            for k in 0..ys.nrows() {
                let y = ys.row(k).transpose();
                let sampler = Sampler::Context { instance: &instance, y: &y };
                let oracle = oracle_solution(
                    &cost,
                    &set,
                    sampler,
                    spec.n_oracle,
                    spec.oracle_restarts,
                    rng::mix(&[oracle_seed, k as u64]),
                    &spec.solver,
                )?;
                let eval = Evaluation::Samples(sampler.draw(spec.n_eval, rng::mix(&[eval_seed, k as u64]))?);
                let oracle_value = true_objective(&oracle.x, &cost, &eval)?;
                contexts.push(ContextEval { y, eval, oracle_value });
            }
            Ok(Prepared { cost, set, env: Env::Contextual { instance, contexts } })
        }
    }
}

/// Training sample shared by every method of one (n, seed) cell.
struct TrainData {
    xi: EmpiricalDist,
    covariates: Option<DMatrix<f64>>,
}

fn draw_training(prep: &Prepared, spec: &ExperimentSpec, n: usize, seed_idx: usize) -> Result<TrainData> {
    let seed = rng::mix(&[
        spec.master_seed,
        rng::label(spec.scenario.as_str()),
        n as u64,
        seed_idx as u64,
        rng::label("data"),
    ]);
    match &prep.env {
        Env::Plain { train, .. } => Ok(TrainData { xi: train.sample(n, seed)?, covariates: None }),
        Env::Contextual { instance, .. } => {
            let (ys, xi) = instance.sample_joint(n, seed)?;
            Ok(TrainData { xi, covariates: Some(ys) })
        }
    }
}

/// Radius, true objective and excess risk of one method on one sample.
fn run_one(
    prep: &Prepared,
    spec: &ExperimentSpec,
    method: &Method,
    data: &TrainData,
    n: usize,
    seed_idx: usize,
) -> Result<(f64, f64, f64)> {
    let base = [
        spec.master_seed,
        rng::label(spec.scenario.as_str()),
        rng::label(method.estimator.as_str()),
        n as u64,
        seed_idx as u64,
    ];
    let tagged = |tag: &str| {
        let mut parts = base.to_vec();
        parts.push(rng::label(tag));
        rng::mix(&parts)
    };
    let (eps, kind) = match method.kind {
        MethodKind::Erm => (0.0, ObjectiveKind::Erm),
        MethodKind::Dro { kind, eps } => {
            let eps = match eps {
                EpsSource::Fixed(e) => e,
                EpsSource::Theory => theoretical_epsilon(&spec.epsilon_rule, n)?,
                EpsSource::CrossValidated => {
                    let problem = CvProblem {
                        cost: &prep.cost,
                        set: &prep.set,
                        estimator: method.estimator,
                        kind,
                        xi: &data.xi,
                        covariates: data.covariates.as_ref(),
                        r: spec.r,
                        monte_carlo_ratio: spec.monte_carlo_ratio,
                        solver: &spec.solver,
                    };
                    let mut parts = base.to_vec();
                    parts.extend([rng::label(kind.as_str()), rng::label("cv")]);
                    select_epsilon(&spec.eps_grid, &problem, spec.split_fraction, rng::mix(&parts))?.eps
                }
            };
            (eps, ObjectiveKind::Dro(AmbiguitySpec::new(kind, eps)?))
        }
    };
    let (model, _) = fit_model(method.estimator, &data.xi, data.covariates.as_ref(), spec.r)?;
    let m = spec.monte_carlo_ratio * n;
    let mc_seed = tagged("mc");
    let solve = |q: &EmpiricalDist| solve_outer(&prep.cost, &prep.set, &kind, q, &spec.solver, None);
    match &prep.env {
        Env::Plain { eval, oracle_value, .. } => {
            let sol = solve(&model.center(m, mc_seed, None)?)?;
            let z = true_objective(&sol.x, &prep.cost, eval)?;
            Ok((eps, z, z - oracle_value))
        }
        Env::Contextual { contexts, .. } => {
            let shared = match model {
                FittedModel::Conditional(_) => None,
                _ => Some(solve(&model.center(m, mc_seed, None)?)?.x),
            };
            let (mut z_sum, mut e_sum) = (0.0, 0.0);
            for (k, ctx) in contexts.iter().enumerate() {
                let x = match &shared {
                    Some(x) => x.clone(),
                    None => solve(&model.center(m, rng::mix(&[mc_seed, k as u64]), Some(&ctx.y))?)?.x,
                };
                let z = true_objective(&x, &prep.cost, &ctx.eval)?;
                z_sum += z;
                e_sum += z - ctx.oracle_value;
            }
            let k = contexts.len() as f64;
            Ok((eps, z_sum / k, e_sum / k))
        }
    }
}

/// Result of fitting and solving one method on a given data set.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSolve {
    pub eps: f64,
    pub x: DVector<f64>,
    /// Objective of `x` on the discretized center.
    pub objective: f64,
    pub status: crate::dro::Status,
    pub iterations: usize,
}

/// Fits `method` to `xi` and solves it with the portfolio cost and set of
/// `spec`. Conditional estimators are not supported here.
pub fn fit_and_solve(spec: &ExperimentSpec, method: &Method, xi: &EmpiricalDist) -> Result<DataSolve> {
    if method.estimator == super::Estimator::ContextP {
        return Err(Error::Unsupported("single solves need an unconditional estimator".into()));
    }
    spec.solver.validate()?;
    let (cost, set) = portfolio(spec)?;
    Error::check_dim(spec.dim, xi.dim())?;
    let n = xi.len();
    let seed = |tag: &str| rng::mix(&[spec.master_seed, rng::label(method.estimator.as_str()), rng::label(tag)]);
    let (eps, kind) = match method.kind {
        MethodKind::Erm => (0.0, ObjectiveKind::Erm),
        MethodKind::Dro { kind, eps } => {
            let eps = match eps {
                EpsSource::Fixed(e) => e,
                EpsSource::Theory => theoretical_epsilon(&spec.epsilon_rule, n)?,
                EpsSource::CrossValidated => {
                    let problem = CvProblem {
                        cost: &cost,
                        set: &set,
                        estimator: method.estimator,
                        kind,
                        xi,
                        covariates: None,
                        r: spec.r,
                        monte_carlo_ratio: spec.monte_carlo_ratio,
                        solver: &spec.solver,
                    };
                    select_epsilon(&spec.eps_grid, &problem, spec.split_fraction, seed("cv"))?.eps
                }
            };
            (eps, ObjectiveKind::Dro(AmbiguitySpec::new(kind, eps)?))
        }
    };
    let (model, _) = fit_model(method.estimator, xi, None, spec.r)?;
    let q = model.center(spec.monte_carlo_ratio * n, seed("mc"), None)?;
    let sol = solve_outer(&cost, &set, &kind, &q, &spec.solver, None)?;
    Ok(DataSolve { eps, x: sol.x, objective: sol.objective, status: sol.status, iterations: sol.iterations })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

/// Runs every (method, n, seed) trial of `spec`. The records come back
/// ordered by method, then n, then seed, whatever the worker count.
pub fn run_trials(spec: &ExperimentSpec) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let prep = prepare(spec)?;
    let cells: Vec<(usize, usize)> = (0..spec.n_grid.len())
        .flat_map(|i| (0..spec.seeds).map(move |s| (i, s)))
        .collect();
    let per_cell: Vec<Vec<TrialResult>> = pool(spec.workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(ni, s)| {
                let n = spec.n_grid[ni];
                let data = draw_training(&prep, spec, n, s);
                spec.methods
                    .iter()
                    .map(|method| {
                        let start = Instant::now();
                        let out = match &data {
                            Ok(d) => run_one(&prep, spec, method, d, n, s),
                            Err(e) => Err(Error::invalid(format!("training sample: {e}"))),
                        };
                        let wallclock_ms = if spec.record_wallclock {
                            start.elapsed().as_secs_f64() * 1e3
                        } else {
                            0.0
                        };
                        let (eps, objective, gen_error, error) = match out {
                            Ok((e, z, g)) => (e, z, g, None),
                            Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
                        };
                        TrialResult {
                            scenario: spec.scenario,
                            method: method.to_string(),
                            n,
                            seed: s,
                            eps,
                            objective,
                            gen_error,
                            wallclock_ms,
                            error,
                        }
                    })
                    .collect()
            })
            .collect()
    });
    // Cells are in (n, seed) order; regroup by method.
    let mut out = Vec::with_capacity(cells.len() * spec.methods.len());
    for mi in 0..spec.methods.len() {
        out.extend(per_cell.iter().map(|cell| cell[mi].clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: String,
    pub n: usize,
    pub seed: usize,
    pub eps: f64,
    pub gen_error: f64,
    pub bound: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Share of rows with `gen_error ≤ bound + BOUND_SLACK`; failed trials
    /// count as violations.
    pub coverage: f64,
    pub rows: Vec<CoverageRow>,
}

/// Bound on the excess risk of the DRO solution in terms of quantities at
/// the oracle solution `x*`:
/// W1 balls give `2 · Lip(x*) · ε`; χ² balls give
/// `2 √(ε Var h(x*; ξ)) + 2 ε^{3/4} ‖h(x*; ·)‖_∞`.
fn excess_risk_bound(
    prep: &Prepared,
    spec: &ExperimentSpec,
    kind: DivergenceKind,
    eps: f64,
) -> Result<f64> {
    let Env::Plain { eval, oracle, .. } = &prep.env else {
        return Err(Error::Unsupported("bound coverage needs a non-contextual scenario".into()));
    };
    match kind {
        DivergenceKind::W1 => Ok(2.0 * prep.cost.lipschitz_norm(&oracle.x)? * eps),
        DivergenceKind::Chi2 => {
            let Evaluation::Samples(s) = eval else {
                return Err(Error::Unsupported("χ² bound needs a sampled evaluation".into()));
            };
            let h = prep.cost.eval(&oracle.x, s.atoms())?;
            let mean = h.mean();
            let var = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h.len() as f64;
            let sup = match (&prep.cost, spec.scenario) {
                (Cost::DownsideRisk(c), Scenario::BetaPortfolio) => {
                    (c.mu + spec.r * oracle.x.lp_norm(1)).max(0.0).powf(c.gamma)
                }
                _ => h.max(),
            };
            Ok(2.0 * (eps * var).sqrt() + 2.0 * eps.powf(0.75) * sup)
        }
        other => Err(Error::Unsupported(format!("no excess-risk bound for {other} balls"))),
    }
}

/// Runs `spec` and checks each DRO record against its excess-risk bound.
/// Every method must be a W1 or χ² DRO method.
pub fn check_bound_coverage(spec: &ExperimentSpec) -> Result<CoverageReport> {
    spec.validate()?;
    let mut kinds = Vec::with_capacity(spec.methods.len());
    for m in &spec.methods {
        match m.kind {
            MethodKind::Dro { kind: k @ (DivergenceKind::W1 | DivergenceKind::Chi2), .. } => kinds.push(k),
            _ => {
                return Err(Error::invalid(format!(
                    "bound coverage needs W1 or chi2 DRO methods, got {m}"
                )))
            }
        }
    }
    let prep = prepare(spec)?;
    let records = run_trials(spec)?;
    let per_method = spec.n_grid.len() * spec.seeds;
    let mut rows = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        let kind = kinds[i / per_method];
        let (bound, covered) = if r.error.is_some() {
            (f64::NAN, false)
        } else {
            let b = excess_risk_bound(&prep, spec, kind, r.eps)?;
            (b, r.gen_error <= b + BOUND_SLACK)
        };
        rows.push(CoverageRow {
            method: r.method,
            n: r.n,
            seed: r.seed,
            eps: r.eps,
            gen_error: r.gen_error,
            bound,
            covered,
        });
    }
    let hit = rows.iter().filter(|r| r.covered).count();
    let coverage = if rows.is_empty() { 0.0 } else { hit as f64 / rows.len() as f64 };
    Ok(CoverageReport { coverage, rows })
}

/// Smallest multiplier among `candidates` (tried in ascending order) whose
/// coverage on `pilot` reaches `target`. Falls back to the largest candidate
/// when none does; the returned report tells which case occurred.
pub fn calibrate_multiplier(
    pilot: &ExperimentSpec,
    candidates: &[f64],
    target: f64,
) -> Result<(f64, CoverageReport)> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut last = None;
    for c in sorted {
        let mut spec = pilot.clone();
        spec.epsilon_rule.multiplier = c;
        let report = check_bound_coverage(&spec)?;
        if report.coverage >= target {
            return Ok((c, report));
        }
        last = Some((c, report));
    }
    last.ok_or_else(|| Error::invalid("no candidate multipliers"))
}
