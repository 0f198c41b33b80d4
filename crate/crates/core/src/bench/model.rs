use nalgebra::{DMatrix, DVector};

use super::Estimator;
use crate::dist::{
    fit_beta_moment, fit_contextual_ols, fit_gaussian_full, sample, Distribution, EmpiricalDist,
    FitWarning, LinearGaussianConditional,
};
use crate::error::{Error, Result};

/// A fitted ambiguity center before Monte Carlo discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Empirical(EmpiricalDist),
    Param(Distribution),
    Conditional(LinearGaussianConditional),
}

/// Fits `est` to the responses `xi` (and `covariates`, one row per sample,
/// for the conditional estimator).
pub fn fit_model(
    est: Estimator,
    xi: &EmpiricalDist,
    covariates: Option<&DMatrix<f64>>,
    r: f64,
) -> Result<(FittedModel, Vec<FitWarning>)> {
    Ok(match est {
        Estimator::Empirical => (FittedModel::Empirical(xi.clone()), Vec::new()),
        Estimator::Beta => {
            let fit = fit_beta_moment(xi, r)?;
            (FittedModel::Param(fit.model.into()), fit.warnings)
        }
        Estimator::Normal | Estimator::NoncontextP => {
            (FittedModel::Param(fit_gaussian_full(xi)?.into()), Vec::new())
        }
        Estimator::ContextP => {
            let ys = covariates
                .ok_or_else(|| Error::invalid("the conditional estimator needs covariates"))?;
            let fit = fit_contextual_ols(ys, xi.atoms())?;
            (FittedModel::Conditional(fit.model), fit.warnings)
        }
    })
}

impl FittedModel {
    pub fn is_conditional(&self) -> bool {
        matches!(self, FittedModel::Conditional(_))
    }

    /// Discretized center with `m` atoms. The empirical model ignores `m` and
    /// returns the training sample.
    pub fn center(&self, m: usize, seed: u64, context: Option<&DVector<f64>>) -> Result<EmpiricalDist> {
        match self {
            FittedModel::Empirical(e) => Ok(e.clone()),
            FittedModel::Param(d) => sample(d, m, seed, None),
            FittedModel::Conditional(c) => {
                let y = context.ok_or_else(|| Error::invalid("conditional center needs a context"))?;
                sample(&Distribution::Gaussian(c.at(y)?), m, seed, None)
            }
        }
    }
}
