use nalgebra::DVector;

use crate::error::{Error, Result};

/// `{x : Σ x_i = 1, x_i ≥ −τ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexFloorSet {
    pub tau: f64,
    pub dim: usize,
}

impl SimplexFloorSet {
    pub fn new(tau: f64, dim: usize) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be finite and >= 0, got {tau}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        Ok(Self { tau, dim })
    }
}

/// `{x : ‖x‖₂ ≤ B}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2BallSet {
    pub radius: f64,
    pub dim: usize,
}

impl L2BallSet {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be finite and > 0, got {radius}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        Ok(Self { radius, dim })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet {
    SimplexFloor(SimplexFloorSet),
    L2Ball(L2BallSet),
}

impl From<SimplexFloorSet> for FeasibleSet {
    fn from(s: SimplexFloorSet) -> Self {
        FeasibleSet::SimplexFloor(s)
    }
}

impl From<L2BallSet> for FeasibleSet {
    fn from(s: L2BallSet) -> Self {
        FeasibleSet::L2Ball(s)
    }
}

/// Sort-based projection of `y` onto `{z ≥ 0, Σ z = total}`.
fn project_scaled_simplex(y: &mut [f64], total: f64) {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - total) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

impl FeasibleSet {
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::SimplexFloor(s) => s.dim,
            FeasibleSet::L2Ball(b) => b.dim,
        }
    }

    /// Euclidean projection.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        Ok(match self {
            FeasibleSet::SimplexFloor(s) => {
                let mut y: Vec<f64> = x.iter().map(|v| v + s.tau).collect();
                project_scaled_simplex(&mut y, 1.0 + s.dim as f64 * s.tau);
                DVector::from_iterator(s.dim, y.into_iter().map(|v| v - s.tau))
            }
            FeasibleSet::L2Ball(b) => {
                let n = x.norm();
                if n <= b.radius {
                    x.clone()
                } else {
                    x * (b.radius / n)
                }
            }
        })
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            FeasibleSet::SimplexFloor(s) => {
                (x.sum() - 1.0).abs() <= tol && x.iter().all(|&v| v >= -s.tau - tol)
            }
            FeasibleSet::L2Ball(b) => x.norm() <= b.radius + tol,
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::SimplexFloor(s) => {
                if s.dim == 1 {
                    0.0
                } else {
                    std::f64::consts::SQRT_2 * (1.0 + s.dim as f64 * s.tau)
                }
            }
            FeasibleSet::L2Ball(b) => 2.0 * b.radius,
        }
    }

    /// A canonical interior point, used as the default starting iterate.
    pub fn center(&self) -> DVector<f64> {
        match self {
            FeasibleSet::SimplexFloor(s) => DVector::from_element(s.dim, 1.0 / s.dim as f64),
            FeasibleSet::L2Ball(b) => DVector::zeros(b.dim),
        }
    }
}
