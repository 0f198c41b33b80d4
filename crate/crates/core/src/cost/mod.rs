//! Cost functions `h(x; ξ)` and feasible decision sets.

mod set;

pub use set::{FeasibleSet, L2BallSet, SimplexFloorSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Downside risk `h(x; ξ) = (μ − ξᵀx)_+^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownsideRiskCost {
    pub mu: f64,
    pub gamma: f64,
}

impl DownsideRiskCost {
    pub fn new(mu: f64, gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
        }
        if !mu.is_finite() {
            return Err(Error::invalid("target return must be finite"));
        }
        Ok(Self { mu, gamma })
    }

    #[inline]
    fn value(&self, ret: f64) -> f64 {
        let s = self.mu - ret;
        if s <= 0.0 {
            0.0
        } else if self.gamma == 1.0 {
            s
        } else if self.gamma == 2.0 {
            s * s
        } else {
            s.powf(self.gamma)
        }
    }

    /// `dh/d(ξᵀx)`; zero at the kink and in the flat region.
    #[inline]
    fn slope(&self, ret: f64) -> f64 {
        let s = self.mu - ret;
        if s <= 0.0 {
            0.0
        } else if self.gamma == 1.0 {
            -1.0
        } else if self.gamma == 2.0 {
            -2.0 * s
        } else {
            -self.gamma * s.powf(self.gamma - 1.0)
        }
    }
}

/// Quadratic cost with a linear perturbation,
/// `h(x; ξ) = ½‖x − v‖² + ξᵀ(x − v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLinearCost {
    pub anchor: DVector<f64>,
}

impl QuadraticLinearCost {
    pub fn new(anchor: DVector<f64>) -> Self {
        Self { anchor }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cost {
    DownsideRisk(DownsideRiskCost),
    QuadraticLinear(QuadraticLinearCost),
}

impl From<DownsideRiskCost> for Cost {
    fn from(c: DownsideRiskCost) -> Self {
        Cost::DownsideRisk(c)
    }
}

impl From<QuadraticLinearCost> for Cost {
    fn from(c: QuadraticLinearCost) -> Self {
        Cost::QuadraticLinear(c)
    }
}

impl Cost {
    /// Dimension the cost is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Cost::DownsideRisk(_) => None,
            Cost::QuadraticLinear(q) => Some(q.anchor.len()),
        }
    }

    fn check(&self, x: &DVector<f64>, d: usize) -> Result<()> {
        Error::check_dim(x.len(), d)?;
        if let Some(k) = self.dim() {
            Error::check_dim(k, d)?;
        }
        Ok(())
    }

    /// `h(x; ξ_i)` for every row of `atoms`.
    pub fn eval(&self, x: &DVector<f64>, atoms: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check(x, atoms.ncols())?;
        Ok(match self {
            Cost::DownsideRisk(c) => (atoms * x).map(|r| c.value(r)),
            Cost::QuadraticLinear(q) => {
                let d = x - &q.anchor;
                let base = 0.5 * d.norm_squared();
                (atoms * &d).map(|s| base + s)
            }
        })
    }

    pub fn eval_at(&self, x: &DVector<f64>, atom: &DVector<f64>) -> Result<f64> {
        self.check(x, atom.len())?;
        Ok(match self {
            Cost::DownsideRisk(c) => c.value(atom.dot(x)),
            Cost::QuadraticLinear(q) => {
                let d = x - &q.anchor;
                0.5 * d.norm_squared() + atom.dot(&d)
            }
        })
    }

    /// An element of `∂_x h(x; ξ)` at a single atom.
    pub fn subgradient_at_atom(&self, x: &DVector<f64>, atom: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x, atom.len())?;
        Ok(match self {
            Cost::DownsideRisk(c) => atom * c.slope(atom.dot(x)),
            Cost::QuadraticLinear(q) => x - &q.anchor + atom,
        })
    }

    /// `Σ_i w_i g_i` with `g_i` the atom subgradients, computed in one pass.
    pub fn weighted_subgradient(
        &self,
        x: &DVector<f64>,
        atoms: &DMatrix<f64>,
        weights: &[f64],
    ) -> Result<DVector<f64>> {
        self.check(x, atoms.ncols())?;
        Error::check_dim(atoms.nrows(), weights.len())?;
        let w = DVector::from_column_slice(weights);
        Ok(match self {
            Cost::DownsideRisk(c) => {
                let coef = (atoms * x).zip_map(&w, |r, wi| wi * c.slope(r));
                atoms.tr_mul(&coef)
            }
            Cost::QuadraticLinear(q) => (x - &q.anchor) * w.sum() + atoms.tr_mul(&w),
        })
    }

    /// ℓ2-Lipschitz constant of `ξ ↦ h(x; ξ)`. Only defined where it is
    /// global: downside risk with `γ = 1` and the quadratic-linear cost.
    pub fn lipschitz_norm(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Cost::DownsideRisk(c) if c.gamma == 1.0 => Ok(x.norm()),
            Cost::DownsideRisk(c) => Err(Error::Unsupported(format!(
                "downside risk with gamma = {} is not globally Lipschitz in the random vector",
                c.gamma
            ))),
            Cost::QuadraticLinear(q) => {
                Error::check_dim(q.anchor.len(), x.len())?;
                Ok((x - &q.anchor).norm())
            }
        }
    }

    /// A subgradient of `x ↦ lipschitz_norm(x)`; zero at the nondifferentiable point.
    pub fn lipschitz_subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let dir = match self {
            Cost::DownsideRisk(c) if c.gamma == 1.0 => x.clone(),
            Cost::DownsideRisk(_) => {
                self.lipschitz_norm(x)?;
                unreachable!()
            }
            Cost::QuadraticLinear(q) => x - &q.anchor,
        };
        let n = dir.norm();
        Ok(if n > 0.0 { dir / n } else { dir })
    }
}

/// Closed-form bound `(D τ r + μ)^γ` on `sup_x ‖h(x; ·)‖_∞` over the
/// floored simplex with support `[−r, r]^D`. This is an upper bound, not the
/// exact supremum.
pub fn sup_bound(cost: &DownsideRiskCost, set: &SimplexFloorSet, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("support radius must be positive, got {r}")));
    }
    Ok((set.dim as f64 * set.tau * r + cost.mu).powf(cost.gamma))
}

/// VC bound `C(D + γ, γ)` for polynomials of degree `γ` in `D` variables,
/// saturating at `u128::MAX`.
pub fn comp_hypothesis_bound(dim: u64, degree: u64) -> u128 {
    let k = degree.min(dim) as u128;
    let n = dim as u128 + degree as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) / i stays integral at every step.
        let num = n - k + i;
        let g = gcd(acc, i);
        let (a, den) = (acc / g, i / g);
        match a.checked_mul(num / den) {
            Some(v) if num % den == 0 => acc = v,
            _ => match a.checked_mul(num) {
                Some(v) => acc = v / den,
                None => return u128::MAX,
            },
        }
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dr(mu: f64, gamma: f64) -> Cost {
        DownsideRiskCost::new(mu, gamma).unwrap().into()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn downside_values() {
        let x = v(&[1.0, 0.0]);
        let atoms = DMatrix::from_row_slice(2, 2, &[3.0, 9.0, 0.0, 5.0]);
        assert_eq!(dr(1.0, 2.0).eval(&x, &atoms).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(dr(1.0, 4.0).eval(&x, &atoms).unwrap()[1], 1.0);
        assert_eq!(dr(2.0, 2.0).eval(&x, &atoms).unwrap()[1], 4.0);
        assert!(DownsideRiskCost::new(1.0, 0.5).is_err());
    }

    #[test]
    fn quadratic_zero_at_anchor() {
        let c: Cost = QuadraticLinearCost::new(v(&[1.0, -2.0])).into();
        let atoms = DMatrix::from_row_slice(2, 2, &[3.0, 9.0, -4.0, 5.0]);
        let vals = c.eval(&v(&[1.0, -2.0]), &atoms).unwrap();
        assert_eq!(vals.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn subgradient_examples() {
        let g = dr(1.0, 2.0).subgradient_at_atom(&v(&[1.0, 1.0]), &v(&[2.0, 2.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
        let g = dr(1.0, 1.0).subgradient_at_atom(&v(&[0.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, 0.0]);
        let q: Cost = QuadraticLinearCost::new(v(&[0.3, 0.4])).into();
        let g = q.subgradient_at_atom(&v(&[0.3, 0.4]), &v(&[2.0, 2.0])).unwrap();
        assert_eq!(g.as_slice(), &[2.0, 2.0]);
        // Exactly at the kink the zero element is used.
        let g = dr(1.0, 2.0).subgradient_at_atom(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn weighted_subgradient_matches_sum() {
        let c = dr(0.5, 2.0);
        let x = v(&[0.2, 0.8]);
        let atoms = DMatrix::from_row_slice(3, 2, &[0.1, -0.3, 0.9, 0.4, -0.5, 0.2]);
        let w = [0.2, 0.5, 0.3];
        let fast = c.weighted_subgradient(&x, &atoms, &w).unwrap();
        let mut slow = DVector::zeros(2);
        for i in 0..3 {
            slow += c.subgradient_at_atom(&x, &atoms.row(i).transpose()).unwrap() * w[i];
        }
        assert!((fast - slow).amax() < 1e-15);
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(dr(1.0, 1.0).lipschitz_norm(&v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(dr(1.0, 1.0).lipschitz_norm(&v(&[2.0, 0.0])).unwrap(), 2.0);
        let q: Cost = QuadraticLinearCost::new(v(&[0.5, 0.5])).into();
        assert_eq!(q.lipschitz_norm(&v(&[0.5, 0.5])).unwrap(), 0.0);
        assert!(matches!(
            dr(1.0, 2.0).lipschitz_norm(&v(&[1.0, 0.0])),
            Err(Error::Unsupported(_))
        ));
        assert!(dr(1.0, 2.0).lipschitz_subgradient(&v(&[1.0])).is_err());
    }

    #[test]
    fn sup_bound_examples() {
        let c = DownsideRiskCost::new(1.0, 2.0).unwrap();
        let s = SimplexFloorSet::new(2.0, 2).unwrap();
        assert_eq!(sup_bound(&c, &s, 1.0).unwrap(), 25.0);
        let c1 = DownsideRiskCost::new(1.0, 1.0).unwrap();
        let s0 = SimplexFloorSet::new(0.0, 5).unwrap();
        assert_eq!(sup_bound(&c1, &s0, 1.0).unwrap(), 1.0);
        let b1 = sup_bound(&c1, &s, 1.0).unwrap();
        assert_eq!(sup_bound(&c, &s, 1.0).unwrap(), b1 * b1);
        assert!(sup_bound(&c, &s, 0.0).is_err());
    }

    #[test]
    fn binomial_counts() {
        assert_eq!(comp_hypothesis_bound(1, 1), 2);
        assert_eq!(comp_hypothesis_bound(2, 2), 6);
        assert_eq!(comp_hypothesis_bound(10, 0), 1);
        assert_eq!(comp_hypothesis_bound(10, 4), 1001);
        assert_eq!(comp_hypothesis_bound(30, 30), 118_264_581_564_861_424);
        assert_eq!(comp_hypothesis_bound(60, 30), 673_132_974_506_580_171_230_064);
        assert_eq!(comp_hypothesis_bound(1_000_000, 1_000), u128::MAX);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn costs() -> impl Strategy<Value = Cost> {
            prop_oneof![
                (-1.0..2.0f64, prop_oneof![Just(1.0), Just(2.0), Just(4.0), 1.0..5.0f64])
                    .prop_map(|(mu, g)| dr(mu, g)),
                prop::collection::vec(-2.0..2.0f64, 3)
                    .prop_map(|a| QuadraticLinearCost::new(DVector::from_vec(a)).into()),
            ]
        }

        fn vec3() -> impl Strategy<Value = DVector<f64>> {
            prop::collection::vec(-1.5..1.5f64, 3).prop_map(DVector::from_vec)
        }

        proptest! {
            #[test]
            fn subgradient_inequality(c in costs(), x in vec3(), d in vec3(), xi in vec3()) {
                let h0 = c.eval_at(&x, &xi).unwrap();
                let g = c.subgradient_at_atom(&x, &xi).unwrap();
                for t in [1e-4, -1e-4] {
                    let h1 = c.eval_at(&(&x + &d * t), &xi).unwrap();
                    prop_assert!(h1 >= h0 + t * g.dot(&d) - 1e-8);
                }
            }

            #[test]
            fn finite_differences(c in costs(), x in vec3(), xi in vec3()) {
                if let Cost::DownsideRisk(dc) = &c {
                    prop_assume!((dc.mu - xi.dot(&x)).abs() > 1e-3);
                }
                let g = c.subgradient_at_atom(&x, &xi).unwrap();
                let h = 1e-6;
                for k in 0..3 {
                    let mut e = DVector::zeros(3);
                    e[k] = h;
                    let fd = (c.eval_at(&(&x + &e), &xi).unwrap() - c.eval_at(&(&x - &e), &xi).unwrap()) / (2.0 * h);
                    prop_assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "k={} fd={} g={}", k, fd, g[k]);
                }
            }
        }
    }
}
