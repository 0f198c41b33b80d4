use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::instance::{ContextualInstance, Truth};
use crate::cost::{Cost, FeasibleSet};
use crate::dist::EmpiricalDist;
use crate::dro::{erm_objective, solve_outer, ObjectiveKind, SolverConfig};
use crate::error::Result;
use crate::rng;

/// Where fresh draws of the data-generating distribution come from.
#[derive(Debug, Clone, Copy)]
pub enum Sampler<'a> {
    Truth(&'a Truth),
    Context { instance: &'a ContextualInstance, y: &'a DVector<f64> },
}

impl Sampler<'_> {
    pub fn draw(&self, m: usize, seed: u64) -> Result<EmpiricalDist> {
        match self {
            Sampler::Truth(t) => t.sample(m, seed),
            Sampler::Context { instance, y } => instance.sample_at(y, m, seed),
        }
    }

    /// True when the draws have mean zero by construction.
    fn centered(&self) -> bool {
        matches!(self, Sampler::Truth(Truth::GaussianPlusExp { .. }))
    }
}

/// How the true objective `Z(x)` is computed.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// `½‖x − v‖²`, exact for the quadratic cost under centered noise.
    Quadratic { anchor: DVector<f64> },
    /// Average cost over a fixed evaluation sample.
    Samples(EmpiricalDist),
}

pub fn true_objective(x: &DVector<f64>, cost: &Cost, eval: &Evaluation) -> Result<f64> {
    match eval {
        Evaluation::Quadratic { anchor } => {
            crate::error::Error::check_dim(anchor.len(), x.len())?;
            Ok(0.5 * (x - anchor).norm_squared())
        }
        Evaluation::Samples(s) => erm_objective(x, cost, s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    /// Objective of `x` on the oracle sample, or the exact value.
    pub objective: f64,
}

/// Approximate minimizer of the true objective: empirical risk minimization on
/// `n_oracle` fresh draws from `restarts` starting points, keeping the best.
/// The quadratic cost under centered noise has the exact answer `x* = v`.
pub fn oracle_solution(
    cost: &Cost,
    set: &FeasibleSet,
    sampler: Sampler<'_>,
    n_oracle: usize,
    restarts: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<OracleSolution> {
    if let (Cost::QuadraticLinear(q), true) = (cost, sampler.centered()) {
        let x = set.project(&q.anchor)?;
        let objective = 0.5 * (&x - &q.anchor).norm_squared();
        return Ok(OracleSolution { x, objective });
    }
    let atoms = sampler.draw(n_oracle, rng::mix(&[seed, rng::label("oracle-sample")]))?;
    let mut g = rng::stream(rng::mix(&[seed, rng::label("oracle-starts")]));
    let scale = set.diameter() / 4.0;
    let mut best: Option<OracleSolution> = None;
    for k in 0..restarts.max(1) {
        let start = if k == 0 {
            set.center()
        } else {
            let jitter = DVector::from_fn(set.dim(), |_, _| {
                let z: f64 = g.sample(StandardNormal);
                z * scale
            });
            set.project(&(set.center() + jitter))?
        };
        let sol = solve_outer(cost, set, &ObjectiveKind::Erm, &atoms, cfg, Some(&start))?;
        if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
            best = Some(OracleSolution { x: sol.x, objective: sol.objective });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `Z(x̂) − Z(x*)` with both values computed under the same evaluation.
pub fn estimate_gen_error(
    x: &DVector<f64>,
    cost: &Cost,
    eval: &Evaluation,
    oracle: &OracleSolution,
) -> Result<f64> {
    Ok(true_objective(x, cost, eval)? - true_objective(&oracle.x, cost, eval)?)
}
