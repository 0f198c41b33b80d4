use crate::dist::validate_simplex;
use crate::error::{Error, Result};

/// Lagrange multipliers of the inner problem. For χ² the maximizer is
/// `p_i = q_i (1 + (v_i − eta)/lambda)_+`; for KL it is the Gibbs tilt
/// `p_i ∝ q_i exp(v_i/lambda)` and `eta` is `lambda · log Σ q_i exp(v_i/lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    pub lambda: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseResult {
    pub value: f64,
    /// Worst-case probability vector over the atoms. `None` on the W1 path.
    pub weights: Option<Vec<f64>>,
    pub dual: Option<Multipliers>,
    pub closed_form_used: bool,
}

impl WorstCaseResult {
    fn at_base(value: f64, base: &[f64]) -> Self {
        Self { value, weights: Some(base.to_vec()), dual: None, closed_form_used: true }
    }
}

fn check_inputs(values: &[f64], base: &[f64], eps: f64) -> Result<()> {
    Error::check_dim(base.len(), values.len())?;
    validate_simplex(base)?;
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cost value {v} is not finite")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("radius must be finite and >= 0, got {eps}")));
    }
    Ok(())
}

/// Mean and variance of `values` under `base`.
fn moments(values: &[f64], base: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(base).map(|(v, q)| v * q).sum();
    let var: f64 = values.iter().zip(base).map(|(v, q)| q * (v - mean) * (v - mean)).sum();
    (mean, var.max(0.0))
}

/// Weights of `base` restricted to the atoms attaining the largest value,
/// renormalized, and the mass of that set.
fn top_set(values: &[f64], base: &[f64]) -> (f64, f64, Vec<f64>) {
    let vmax = values
        .iter()
        .zip(base)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mass: f64 = values.iter().zip(base).filter(|(&v, _)| v == vmax).map(|(_, q)| q).sum();
    let w = values
        .iter()
        .zip(base)
        .map(|(&v, &q)| if v == vmax { q / mass } else { 0.0 })
        .collect();
    (vmax, mass, w)
}

/// Exact maximizer of `Σ p_i v_i` over `{p in the simplex : χ²(p, q) ≤ eps}`
/// with `χ²(p, q) = ½ Σ (p_i − q_i)² / q_i`.
pub fn chi2_worst_case(values: &[f64], base: &[f64], eps: f64) -> Result<WorstCaseResult> {
    check_inputs(values, base, eps)?;
    let (mean, var) = moments(values, base);
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if eps == 0.0 || var <= 1e-28 * scale * scale {
        return Ok(WorstCaseResult::at_base(mean, base));
    }

    // Unconstrained-nonnegativity solution: p_i = q_i (1 + (v_i − mean)/λ).
    let lambda = (var / (2.0 * eps)).sqrt();
    let vmin = values
        .iter()
        .zip(base)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    if vmin >= mean - lambda {
        let weights: Vec<f64> = values
            .iter()
            .zip(base)
            .map(|(&v, &q)| (q * (1.0 + (v - mean) / lambda)).max(0.0))
            .collect();
        return Ok(WorstCaseResult {
            value: mean + (2.0 * eps * var).sqrt(),
            weights: Some(weights),
            dual: Some(Multipliers { lambda, eta: mean }),
            closed_form_used: true,
        });
    }

    let (vmax, top_mass, top_weights) = top_set(values, base);
    if eps >= 0.5 * (1.0 - top_mass) / top_mass {
        return Ok(WorstCaseResult {
            value: vmax,
            weights: Some(top_weights),
            dual: None,
            closed_form_used: false,
        });
    }

    // Active set: zero the k lowest-valued atoms, solve on the rest, stop at
    // the first k satisfying both primal and dual feasibility.
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| base[i] > 0.0).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = order.len();
    // Suffix sums over the sorted order for O(1) free-set moments.
    let mut s0 = vec![0.0; n + 1];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for j in (0..n).rev() {
        let (v, q) = (values[order[j]] - mean, base[order[j]]);
        s0[j] = s0[j + 1] + q;
        s1[j] = s1[j + 1] + q * v;
        s2[j] = s2[j + 1] + q * v * v;
    }
    let slack = 1e-12 * scale;
    for k in 1..n {
        let qf = s0[k];
        let cm = s1[k] / qf;
        let mf = cm + mean;
        let varf = (s2[k] / qf - cm * cm).max(0.0);
        let denom = 2.0 * eps - (1.0 - qf) / qf;
        if denom <= 0.0 || varf <= 0.0 {
            break;
        }
        let lam = (qf * varf / denom).sqrt();
        let eta = mf - lam * (1.0 - qf) / qf;
        let cut = eta - lam;
        let primal = values[order[k]] >= cut - slack;
        let dual = values[order[k - 1]] <= cut + slack;
        if primal && dual {
            let mut weights = vec![0.0; values.len()];
            for &i in &order[k..] {
                weights[i] = (base[i] * (1.0 + (values[i] - eta) / lam)).max(0.0);
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let value = weights.iter().zip(values).map(|(w, v)| w * v).sum();
            return Ok(WorstCaseResult {
                value,
                weights: Some(weights),
                dual: Some(Multipliers { lambda: lam, eta }),
                closed_form_used: false,
            });
        }
    }
    Err(Error::Solver("chi-square active set found no KKT point".into()))
}

/// Gibbs tilt of `base` at temperature `lambda` restricted to positive-mass
/// atoms. Returns the weights, `KL(p‖q)` and `log Σ q exp((v − vmax)/λ)`.
fn tilt(values: &[f64], base: &[f64], vmax: f64, lambda: f64) -> (Vec<f64>, f64, f64) {
    let mut w: Vec<f64> = values
        .iter()
        .zip(base)
        .map(|(&v, &q)| if q > 0.0 { q * ((v - vmax) / lambda).exp() } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    let log_z = z.ln();
    let mean_u: f64 = w.iter().zip(values).map(|(p, &v)| p * (v - vmax) / lambda).sum();
    ((w), (mean_u - log_z).max(0.0), log_z)
}

/// Maximizer of `Σ p_i v_i` over `{p : KL(p‖q) ≤ eps}` via the scalar dual
/// `min_λ λ eps + λ log Σ q_i exp(v_i/λ)`.
pub fn kl_worst_case(values: &[f64], base: &[f64], eps: f64) -> Result<WorstCaseResult> {
    check_inputs(values, base, eps)?;
    let (mean, _) = moments(values, base);
    if eps == 0.0 {
        return Ok(WorstCaseResult::at_base(mean, base));
    }
    let (vmax, top_mass, top_weights) = top_set(values, base);
    let vmin = values
        .iter()
        .zip(base)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min);
    let range = vmax - vmin;
    if range == 0.0 {
        return Ok(WorstCaseResult::at_base(mean, base));
    }
    if eps >= -top_mass.ln() {
        return Ok(WorstCaseResult {
            value: vmax,
            weights: Some(top_weights),
            dual: None,
            closed_form_used: true,
        });
    }

    // KL of the tilt decreases in λ; find KL(p_λ) = eps by bisection in log λ.
    let kl_at = |l: f64| tilt(values, base, vmax, l).1;
    let mut lo = 1e-8 * range;
    let mut hi = 1e4 * range;
    while kl_at(lo) < eps && lo > f64::MIN_POSITIVE * 1e10 {
        lo *= 1e-4;
    }
    while kl_at(hi) > eps && hi < f64::MAX / 1e10 {
        hi *= 1e4;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_at(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let (weights, _, log_z) = tilt(values, base, vmax, hi);
    let value = weights.iter().zip(values).map(|(p, v)| p * v).sum();
    Ok(WorstCaseResult {
        value,
        weights: Some(weights),
        dual: Some(Multipliers { lambda: hi, eta: vmax + hi * log_z }),
        closed_form_used: false,
    })
}

/// `sup` over a W1 ball for an `lip`-Lipschitz convex integrand: the mean plus
/// `eps · lip`. No maximizing weights exist over the atoms.
pub fn w1_worst_case_lipschitz(mean_value: f64, lip: f64, eps: f64) -> Result<WorstCaseResult> {
    if !mean_value.is_finite() {
        return Err(Error::invalid("mean value must be finite"));
    }
    if !(lip >= 0.0 && lip.is_finite()) {
        return Err(Error::invalid(format!("Lipschitz constant must be finite and >= 0, got {lip}")));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("radius must be finite and >= 0, got {eps}")));
    }
    Ok(WorstCaseResult {
        value: mean_value + eps * lip,
        weights: None,
        dual: Some(Multipliers { lambda: lip, eta: mean_value }),
        closed_form_used: true,
    })
}
