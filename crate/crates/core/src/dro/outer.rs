use nalgebra::DVector;

use super::{dro_objective, erm_objective, AmbiguitySpec};
use crate::cost::{Cost, FeasibleSet};
use crate::dist::{DivergenceKind, EmpiricalDist};
use crate::error::{Error, Result};

/// Iterations over which the best objective must improve before the step
/// scale is halved.
pub const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    Erm,
    Dro(AmbiguitySpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Initial step scale `c` in `c/√k`; defaults to `diameter/√max_iter`.
    pub step_c: Option<f64>,
    pub tol: f64,
    /// Carried for reproducibility records; the iteration is deterministic.
    pub seed: u64,
    /// Return the average of the second half of the iterates instead of the
    /// best one.
    pub averaging: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 2000, step_c: None, tol: 1e-7, seed: 0, averaging: false }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if let Some(c) = self.step_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("step_c must be > 0, got {c}")));
            }
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Objective at each visited iterate.
    pub trace: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
}

/// Objective value and one subgradient at `x`.
fn oracle(
    x: &DVector<f64>,
    cost: &Cost,
    kind: &ObjectiveKind,
    q: &EmpiricalDist,
) -> Result<(f64, DVector<f64>)> {
    match kind {
        ObjectiveKind::Erm => Ok((
            erm_objective(x, cost, q)?,
            cost.weighted_subgradient(x, q.atoms(), q.weights())?,
        )),
        ObjectiveKind::Dro(amb) if amb.kind == DivergenceKind::W1 => {
            let r = dro_objective(x, cost, q, amb)?;
            let g = cost.weighted_subgradient(x, q.atoms(), q.weights())?
                + cost.lipschitz_subgradient(x)? * amb.epsilon;
            Ok((r.value, g))
        }
        ObjectiveKind::Dro(amb) => {
            // Danskin: the subgradient at the worst-case weights.
            let r = dro_objective(x, cost, q, amb)?;
            let p = r.weights.as_deref().unwrap_or(q.weights());
            Ok((r.value, cost.weighted_subgradient(x, q.atoms(), p)?))
        }
    }
}

/// Objective value at `x` for the given kind.
pub(crate) fn objective_value(
    x: &DVector<f64>,
    cost: &Cost,
    kind: &ObjectiveKind,
    q: &EmpiricalDist,
) -> Result<f64> {
    match kind {
        ObjectiveKind::Erm => erm_objective(x, cost, q),
        ObjectiveKind::Dro(amb) => Ok(dro_objective(x, cost, q, amb)?.value),
    }
}

/// Projected subgradient descent with normalized steps `c/√k · g/‖g‖`.
///
/// When the best objective improves by less than `tol·(1 + |best|)` over
/// [`STALL_WINDOW`] iterations the scale `c` is halved and the iteration
/// restarts from the best point; it stops as converged once the step falls
/// below `1e-9` of the set diameter.
pub fn solve_outer(
    cost: &Cost,
    set: &FeasibleSet,
    kind: &ObjectiveKind,
    q: &EmpiricalDist,
    cfg: &SolverConfig,
    x0: Option<&DVector<f64>>,
) -> Result<Solution> {
    cfg.validate()?;
    Error::check_dim(set.dim(), q.dim())?;
    let mut x = match x0 {
        Some(x0) => set.project(x0)?,
        None => set.center(),
    };
    let diam = set.diameter();
    let mut c = cfg.step_c.unwrap_or(diam / (cfg.max_iter as f64).sqrt());
    let c_min = 1e-9 * diam.max(f64::MIN_POSITIVE);

    let mut trace = Vec::with_capacity(cfg.max_iter);
    let mut best_x = x.clone();
    let mut best_f = f64::INFINITY;
    let mut window_best = f64::INFINITY;
    let mut window_start = 0usize;
    let mut local_k = 0usize;
    let tail_start = cfg.max_iter / 2;
    let mut tail_sum = DVector::zeros(x.len());
    let mut tail_count = 0usize;
    let mut status = Status::MaxIter;

    for k in 0..cfg.max_iter {
        let (f, g) = oracle(&x, cost, kind, q)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!(
                "non-finite objective {f} at iteration {} (x = {:?})",
                k + 1,
                x.as_slice()
            )));
        }
        trace.push(f);
        if f < best_f {
            best_f = f;
            best_x.copy_from(&x);
        }
        if k >= tail_start {
            tail_sum += &x;
            tail_count += 1;
        }
        let gn = g.norm();
        if gn == 0.0 || diam == 0.0 {
            status = Status::Converged;
            break;
        }
        if k + 1 - window_start >= STALL_WINDOW {
            if window_best - best_f < cfg.tol * (1.0 + best_f.abs()) {
                c *= 0.5;
                if c < c_min {
                    status = Status::Converged;
                    break;
                }
                x.copy_from(&best_x);
                local_k = 0;
            }
            window_start = k + 1;
            window_best = best_f;
            if local_k == 0 {
                continue;
            }
        }
        local_k += 1;
        let step = c / (local_k as f64).sqrt() / gn;
        x = set.project(&(&x - g * step))?;
    }

    let x = if cfg.averaging && tail_count > 0 {
        set.project(&(tail_sum / tail_count as f64))?
    } else {
        best_x
    };
    let objective = if cfg.averaging { objective_value(&x, cost, kind, q)? } else { best_f };
    Ok(Solution { iterations: trace.len(), x, objective, trace, status })
}
