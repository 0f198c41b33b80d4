use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution as _, Exp, StandardNormal, Uniform};

use crate::cost::{L2BallSet, QuadraticLinearCost};
use crate::dist::{sample, Distribution, EmpiricalDist, ScaledBetaProductSpec, ETA_MAX, ETA_MIN};
use crate::error::{Error, Result};
use crate::rng;

/// Standard deviations of the synthetic covariates, one per factor. Factors
/// beyond the third reuse the last entry.
pub const COVARIATE_SD: [f64; 3] = [0.2, 0.15, 0.1];

/// Draws `η_i ~ U[1.5, 3]` per coordinate.
pub fn gen_beta_market(dim: usize, r: f64, seed: u64) -> Result<ScaledBetaProductSpec> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let mut g = rng::stream(seed);
    let u = Uniform::new_inclusive(ETA_MIN, ETA_MAX).expect("valid range");
    ScaledBetaProductSpec::new((0..dim).map(|_| u.sample(&mut g)).collect(), r)
}

/// Test-time shift of a Beta market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSpec {
    /// Shift parameter in `[−1, 1]`.
    pub c: f64,
    /// Half-width of additive uniform noise on every test coordinate.
    pub perturb_noise: Option<f64>,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.c) {
            return Err(Error::invalid(format!("shift parameter must lie in [-1, 1], got {}", self.c)));
        }
        if let Some(w) = self.perturb_noise {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("noise half-width must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// `η₂ = η₁ + C·min(3 − η₁, η₁ − 1.5)` per coordinate.
pub fn apply_eta_shift(spec: &ScaledBetaProductSpec, shift: &ShiftSpec) -> Result<ScaledBetaProductSpec> {
    shift.validate()?;
    let eta = spec
        .eta()
        .iter()
        .map(|&e| (e + shift.c * (ETA_MAX - e).min(e - ETA_MIN)).clamp(ETA_MIN, ETA_MAX))
        .collect();
    ScaledBetaProductSpec::new(eta, spec.r())
}

/// Data-generating distributions used by the benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Dist(Distribution),
    /// `base` plus independent `U(−w, w)` noise on every coordinate.
    Perturbed { base: Distribution, half_width: f64 },
    /// `N(0, I)` plus independent `Exp(λ) − 1/λ` on every coordinate.
    GaussianPlusExp { dim: usize, lam: f64 },
}

impl Truth {
    pub fn dim(&self) -> usize {
        match self {
            Truth::Dist(d) | Truth::Perturbed { base: d, .. } => d.dim(),
            Truth::GaussianPlusExp { dim, .. } => *dim,
        }
    }

    pub fn sample(&self, m: usize, seed: u64) -> Result<EmpiricalDist> {
        match self {
            Truth::Dist(d) => sample(d, m, seed, None),
            Truth::Perturbed { base, half_width } => {
                let clean = sample(base, m, seed, None)?;
                let mut atoms = clean.atoms().clone();
                if *half_width > 0.0 {
                    let mut g = rng::stream(rng::mix(&[seed, rng::label("perturb")]));
                    let u = Uniform::new_inclusive(-half_width, *half_width).expect("valid range");
                    atoms.iter_mut().for_each(|a| *a += u.sample(&mut g));
                }
                EmpiricalDist::uniform(atoms)
            }
            Truth::GaussianPlusExp { dim, lam } => {
                if m == 0 {
                    return Err(Error::invalid("sample size must be positive"));
                }
                let mut g = rng::stream(seed);
                let exp = Exp::new(*lam).map_err(|e| Error::invalid(e.to_string()))?;
                let atoms = DMatrix::from_fn(m, *dim, |_, _| {
                    let z: f64 = g.sample(StandardNormal);
                    z + exp.sample(&mut g) - 1.0 / lam
                });
                EmpiricalDist::uniform(atoms)
            }
        }
    }
}

/// The quadratic benchmark: truth, cost with anchor `B/(2√D)·1`, and ball.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInstance {
    pub truth: Truth,
    pub cost: QuadraticLinearCost,
    pub set: L2BallSet,
}

impl QuadraticInstance {
    /// `Z(x) = ½‖x − v‖²`, exact because the perturbation has mean zero.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x - &self.cost.anchor).norm_squared()
    }
}

pub fn gen_quadratic_instance(dim: usize, lam: f64, radius: f64) -> Result<QuadraticInstance> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::invalid(format!("exponential rate must be > 0, got {lam}")));
    }
    let set = L2BallSet::new(radius, dim)?;
    let anchor = DVector::from_element(dim, radius / (2.0 * (dim as f64).sqrt()));
    Ok(QuadraticInstance {
        truth: Truth::GaussianPlusExp { dim, lam },
        cost: QuadraticLinearCost::new(anchor),
        set,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Snr {
    High,
    Low,
}

impl Snr {
    pub fn coef_bound(self) -> f64 {
        match self {
            Snr::High => 0.5,
            Snr::Low => 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualSpec {
    pub d_xi: usize,
    pub d_y: usize,
    pub snr: Snr,
    /// Adds `2 sin(‖y‖₂)` to every response coordinate.
    pub mis: bool,
    pub noise_cov: DMatrix<f64>,
}

/// Contextual ground truth `ξ | y = B y + mis·2 sin(‖y‖₂)·1 + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualInstance {
    pub coef: DMatrix<f64>,
    pub mis: bool,
    noise: crate::dist::GaussianSpec,
    covariate_sd: DVector<f64>,
    /// Observed covariates to resample from instead of the Gaussian surrogate.
    pool: Option<DMatrix<f64>>,
}

impl ContextualInstance {
    pub fn response_dim(&self) -> usize {
        self.coef.nrows()
    }

    pub fn covariate_dim(&self) -> usize {
        self.coef.ncols()
    }

    pub fn conditional_mean(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut m = &self.coef * y;
        if self.mis {
            m.add_scalar_mut(2.0 * y.norm().sin());
        }
        m
    }

    /// `m` responses at the fixed covariate `y`.
    pub fn sample_at(&self, y: &DVector<f64>, m: usize, seed: u64) -> Result<EmpiricalDist> {
        crate::error::Error::check_dim(self.covariate_dim(), y.len())?;
        let spec = self.noise.with_mean(self.conditional_mean(y));
        sample(&Distribution::Gaussian(spec), m, seed, None)
    }

    /// Draws covariates by resampling rows of `pool` from now on.
    pub fn with_covariate_pool(mut self, pool: DMatrix<f64>) -> Result<Self> {
        Error::check_dim(self.covariate_dim(), pool.ncols())?;
        if pool.nrows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if pool.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariate pool contains non-finite values"));
        }
        self.pool = Some(pool);
        Ok(self)
    }

    /// `n` covariates, one per row.
    pub fn sample_covariates(&self, n: usize, seed: u64) -> DMatrix<f64> {
        let mut g = rng::stream(seed);
        if let Some(pool) = &self.pool {
            let idx: Vec<usize> = (0..n).map(|_| g.random_range(0..pool.nrows())).collect();
            return pool.select_rows(&idx);
        }
        DMatrix::from_fn(n, self.covariate_dim(), |_, j| {
            let z: f64 = g.sample(StandardNormal);
            z * self.covariate_sd[j]
        })
    }

    /// `n` joint draws `(y_i, ξ_i)`.
    pub fn sample_joint(&self, n: usize, seed: u64) -> Result<(DMatrix<f64>, EmpiricalDist)> {
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let ys = self.sample_covariates(n, rng::mix(&[seed, rng::label("covariates")]));
        let noise = sample(
            &Distribution::Gaussian(self.noise.clone()),
            n,
            rng::mix(&[seed, rng::label("noise")]),
            None,
        )?;
        let mut xi = noise.atoms().clone();
        for i in 0..n {
            let y = ys.row(i).transpose();
            let mean = self.conditional_mean(&y);
            for (k, v) in mean.iter().enumerate() {
                xi[(i, k)] += v;
            }
        }
        Ok((ys, EmpiricalDist::uniform(xi)?))
    }
}

pub fn gen_contextual_instance(spec: &ContextualSpec, seed: u64) -> Result<ContextualInstance> {
    if spec.d_xi == 0 || spec.d_y == 0 {
        return Err(Error::invalid("contextual dimensions must be >= 1"));
    }
    Error::check_dim(spec.d_xi, spec.noise_cov.nrows())?;
    let noise = crate::dist::GaussianSpec::new(DVector::zeros(spec.d_xi), spec.noise_cov.clone())?;
    let mut g = rng::stream(seed);
    let b = spec.snr.coef_bound();
    let u = Uniform::new(-b, b).expect("valid range");
    let coef = DMatrix::from_fn(spec.d_xi, spec.d_y, |_, _| u.sample(&mut g));
    let covariate_sd =
        DVector::from_fn(spec.d_y, |j, _| COVARIATE_SD[j.min(COVARIATE_SD.len() - 1)]);
    Ok(ContextualInstance { coef, mis: spec.mis, noise, covariate_sd, pool: None })
}
