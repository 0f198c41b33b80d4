//! Synthetic benchmark harness: instance generators, oracle solutions,
//! radius selection, and the parallel trial runner.

mod instance;
mod model;
mod oracle;
mod run;
mod select;

pub use instance::{
    apply_eta_shift, gen_beta_market, gen_contextual_instance, gen_quadratic_instance,
    ContextualInstance, ContextualSpec, QuadraticInstance, ShiftSpec, Snr, Truth, COVARIATE_SD,
};
pub use model::{fit_model, FittedModel};
pub use oracle::{estimate_gen_error, oracle_solution, true_objective, Evaluation, OracleSolution, Sampler};
pub use run::{
    calibrate_multiplier, check_bound_coverage, fit_and_solve, run_trials, CoverageReport, CoverageRow,
    DataSolve, TrialResult, BOUND_SLACK,
};
pub use select::{select_epsilon, theoretical_epsilon, CvProblem, EpsSelection};

use std::fmt;
use std::str::FromStr;

use crate::dist::{DivergenceKind, EpsilonRule};
use crate::dro::SolverConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    BetaPortfolio,
    QuadraticBall,
    Shifted,
    Contextual,
}

impl Scenario {
    pub const ALL: [Scenario; 4] =
        [Scenario::BetaPortfolio, Scenario::QuadraticBall, Scenario::Shifted, Scenario::Contextual];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::BetaPortfolio => "beta-portfolio",
            Scenario::QuadraticBall => "quadratic-ball",
            Scenario::Shifted => "shifted",
            Scenario::Contextual => "contextual",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

/// How the ambiguity center is built from training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// The training sample itself.
    Empirical,
    /// Moment-matched scaled Beta product.
    Beta,
    /// Gaussian with sample mean and covariance.
    Normal,
    /// Least-squares linear-Gaussian model of the response given covariates.
    ContextP,
    /// Gaussian fitted to responses, ignoring covariates.
    NoncontextP,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Empirical,
        Estimator::Beta,
        Estimator::Normal,
        Estimator::ContextP,
        Estimator::NoncontextP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Empirical => "empirical",
            Estimator::Beta => "beta",
            Estimator::Normal => "normal",
            Estimator::ContextP => "context-p",
            Estimator::NoncontextP => "noncontext-p",
        }
    }

    pub fn is_parametric(self) -> bool {
        self != Estimator::Empirical
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown estimator '{s}'")))
    }
}

/// Source of the ambiguity radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSource {
    Fixed(f64),
    CrossValidated,
    Theory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodKind {
    Erm,
    Dro { kind: DivergenceKind, eps: EpsSource },
}

/// An estimator paired with an objective, written `beta-erm`,
/// `normal-dro-chi2@0.5`, `beta-dro-kl@cv` or `normal-dro-w1@theory`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub estimator: Estimator,
    pub kind: MethodKind,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let est = self.estimator.as_str();
        match self.kind {
            MethodKind::Erm => write!(f, "{est}-erm"),
            MethodKind::Dro { kind, eps } => {
                write!(f, "{est}-dro-{kind}@")?;
                match eps {
                    EpsSource::Fixed(e) => write!(f, "{e}"),
                    EpsSource::CrossValidated => f.write_str("cv"),
                    EpsSource::Theory => f.write_str("theory"),
                }
            }
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(est) = s.strip_suffix("-erm") {
            return Ok(Method { estimator: est.parse()?, kind: MethodKind::Erm });
        }
        let bad = || Error::invalid(format!("malformed method id '{s}'"));
        let (est, rest) = s.split_once("-dro-").ok_or_else(bad)?;
        let (kind, eps) = rest.split_once('@').ok_or_else(bad)?;
        let kind: DivergenceKind = kind.parse()?;
        if !matches!(kind, DivergenceKind::Chi2 | DivergenceKind::Kl | DivergenceKind::W1) {
            return Err(Error::invalid(format!("no solver for '{kind}' balls in '{s}'")));
        }
        let eps = match eps {
            "cv" => EpsSource::CrossValidated,
            "theory" => EpsSource::Theory,
            v => {
                let e: f64 = v.parse().map_err(|_| bad())?;
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(bad());
                }
                EpsSource::Fixed(e)
            }
        };
        Ok(Method { estimator: est.parse()?, kind: MethodKind::Dro { kind, eps } })
    }
}

/// Full description of a benchmark run. The results are a pure function of
/// this value; `workers` only changes how fast they arrive.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    /// Monte Carlo atoms per training sample for parametric centers.
    pub monte_carlo_ratio: usize,
    /// Candidate radii for cross-validation.
    pub eps_grid: Vec<f64>,
    pub epsilon_rule: EpsilonRule,
    /// Share of the training sample used for fitting during cross-validation.
    pub split_fraction: f64,
    pub n_eval: usize,
    pub n_oracle: usize,
    pub oracle_restarts: usize,
    pub solver: SolverConfig,
    pub dim: usize,
    pub gamma: f64,
    pub tau: f64,
    pub mu: f64,
    /// Half-width of the Beta support.
    pub r: f64,
    /// Ball radius of the quadratic scenario.
    pub radius: f64,
    /// Exponential rate of the quadratic scenario.
    pub lam: f64,
    /// Fixed shift parameter; drawn from `U[−1, 1]` when absent.
    pub shift_c: Option<f64>,
    pub shift_noise: f64,
    pub d_y: usize,
    pub snr: Snr,
    pub mis: bool,
    pub noise_sd: f64,
    pub n_test_contexts: usize,
    /// Observed covariates, one row per period with `d_y` columns, resampled
    /// in place of the synthetic covariate law.
    pub covariate_pool: Option<nalgebra::DMatrix<f64>>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub record_wallclock: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::BetaPortfolio,
            methods: vec![
                "empirical-erm".parse().expect("valid id"),
                "beta-erm".parse().expect("valid id"),
                "beta-dro-chi2@cv".parse().expect("valid id"),
            ],
            n_grid: vec![25, 50, 100, 200],
            seeds: 50,
            master_seed: 20240601,
            monte_carlo_ratio: 50,
            eps_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            epsilon_rule: EpsilonRule {
                comp_theta: 10.0,
                alpha: 0.5,
                e_apx: 0.0,
                delta: 0.1,
                multiplier: 1.0,
            },
            split_fraction: 0.8,
            n_eval: 200_000,
            n_oracle: 500_000,
            oracle_restarts: 5,
            solver: SolverConfig::default(),
            dim: 10,
            gamma: 2.0,
            tau: 2.0,
            mu: 1.0,
            r: 1.0,
            radius: 10.0,
            lam: 0.2,
            shift_c: None,
            shift_noise: 2.0,
            d_y: 3,
            snr: Snr::High,
            mis: true,
            noise_sd: 0.1,
            n_test_contexts: 5,
            covariate_pool: None,
            workers: 0,
            record_wallclock: false,
        }
    }
}

impl ExperimentSpec {
    /// Every violated constraint, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.methods.is_empty() {
            v.push("methods must list at least one method".into());
        }
        if self.n_grid.is_empty() {
            v.push("n_grid must list at least one sample size".into());
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            v.push("every sample size in n_grid must be >= 2".into());
        }
        if self.seeds == 0 {
            v.push("seeds must be >= 1".into());
        }
        if self.monte_carlo_ratio == 0 {
            v.push("monte_carlo_ratio must be >= 1".into());
        }
        let needs_cv = self
            .methods
            .iter()
            .any(|m| matches!(m.kind, MethodKind::Dro { eps: EpsSource::CrossValidated, .. }));
        if needs_cv && self.eps_grid.is_empty() {
            v.push("eps_grid must be nonempty when a method uses @cv".into());
        }
        if self.eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            v.push("eps_grid entries must be finite and >= 0".into());
        }
        if let Err(e) = self.epsilon_rule.validate() {
            v.push(format!("epsilon rule: {e}"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            v.push("split_fraction must lie in (0, 1)".into());
        }
        if self.n_eval == 0 {
            v.push("n_eval must be >= 1".into());
        }
        if self.n_oracle == 0 {
            v.push("n_oracle must be >= 1".into());
        }
        if self.oracle_restarts == 0 {
            v.push("oracle_restarts must be >= 1".into());
        }
        if let Err(e) = self.solver.validate() {
            v.push(format!("solver: {e}"));
        }
        if self.dim == 0 {
            v.push("dim must be >= 1".into());
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            v.push("gamma must be >= 1".into());
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            v.push("tau must be >= 0".into());
        }
        if !self.mu.is_finite() {
            v.push("mu must be finite".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            v.push("r must be > 0".into());
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            v.push("radius must be > 0".into());
        }
        if !(self.lam > 0.0 && self.lam.is_finite()) {
            v.push("lam must be > 0".into());
        }
        if let Some(c) = self.shift_c {
            if !(-1.0..=1.0).contains(&c) {
                v.push("shift_c must lie in [-1, 1]".into());
            }
        }
        if !(self.shift_noise >= 0.0 && self.shift_noise.is_finite()) {
            v.push("shift_noise must be >= 0".into());
        }
        if self.d_y == 0 {
            v.push("d_y must be >= 1".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            v.push("noise_sd must be >= 0".into());
        }
        if self.n_test_contexts == 0 {
            v.push("n_test_contexts must be >= 1".into());
        }
        if let Some(pool) = &self.covariate_pool {
            if pool.ncols() != self.d_y || pool.nrows() == 0 {
                v.push(format!(
                    "covariate pool must have d_y = {} columns and at least one row, got {}x{}",
                    self.d_y,
                    pool.nrows(),
                    pool.ncols()
                ));
            }
        }
        for m in &self.methods {
            let conditional = m.estimator == Estimator::ContextP;
            if conditional && self.scenario != Scenario::Contextual {
                v.push(format!("method {m} needs the contextual scenario"));
            }
            if let MethodKind::Dro { kind: DivergenceKind::W1, .. } = m.kind {
                if self.scenario != Scenario::QuadraticBall && self.gamma != 1.0 {
                    v.push(format!("method {m} needs gamma = 1 (W1 balls need a Lipschitz cost)"));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}
