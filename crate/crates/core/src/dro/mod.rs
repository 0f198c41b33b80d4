//! Inner worst-case problems over finite supports, empirical-risk baselines
//! and the outer projected-subgradient solver.

mod inner;
mod outer;

pub use inner::{chi2_worst_case, kl_worst_case, w1_worst_case_lipschitz, Multipliers, WorstCaseResult};
pub use outer::{solve_outer, ObjectiveKind, Solution, SolverConfig, Status, STALL_WINDOW};

use nalgebra::DVector;

use crate::cost::Cost;
use crate::dist::{DivergenceKind, EmpiricalDist};
use crate::error::{Error, Result};

/// Ambiguity ball `{P : d(P, Q̂) ≤ epsilon}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguitySpec {
    pub kind: DivergenceKind,
    pub epsilon: f64,
}

impl AmbiguitySpec {
    pub fn new(kind: DivergenceKind, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("radius must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { kind, epsilon })
    }

    fn check_solvable(&self) -> Result<()> {
        match self.kind {
            DivergenceKind::Chi2 | DivergenceKind::Kl | DivergenceKind::W1 => Ok(()),
            k => Err(Error::Unsupported(format!("no worst-case solver for {k} balls"))),
        }
    }
}

/// `Σ w_i h(x; ξ_i)`.
pub fn erm_objective(x: &DVector<f64>, cost: &Cost, q: &EmpiricalDist) -> Result<f64> {
    let vals = cost.eval(x, q.atoms())?;
    Ok(vals.iter().zip(q.weights()).map(|(v, w)| v * w).sum())
}

/// Worst-case expected cost over the ambiguity ball around `q`.
pub fn dro_objective(
    x: &DVector<f64>,
    cost: &Cost,
    q: &EmpiricalDist,
    amb: &AmbiguitySpec,
) -> Result<WorstCaseResult> {
    amb.check_solvable()?;
    match amb.kind {
        DivergenceKind::W1 => {
            let lip = cost.lipschitz_norm(x)?;
            w1_worst_case_lipschitz(erm_objective(x, cost, q)?, lip, amb.epsilon)
        }
        DivergenceKind::Chi2 => {
            let vals = cost.eval(x, q.atoms())?;
            chi2_worst_case(vals.as_slice(), q.weights(), amb.epsilon)
        }
        _ => {
            let vals = cost.eval(x, q.atoms())?;
            kl_worst_case(vals.as_slice(), q.weights(), amb.epsilon)
        }
    }
}
