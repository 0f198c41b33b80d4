//! Brute-force oracles shared by the integration suites.
#![allow(dead_code)]

/// Largest `Σ p_i v_i` over grid points of the simplex inside the ball
/// `½ Σ (p_i − q_i)²/q_i ≤ eps`.
///
/// Two grids of step `h` are scanned: the lattice `{q + h·k : Σ k = 0}`
/// through the center, which is never empty, and the standard grid through
/// the vertices. The first `m − 2` offsets are enumerated; along the
/// remaining line the objective is linear, so the best grid point sits at an
/// end of the feasible integer range.
pub fn chi2_lattice_oracle(values: &[f64], base: &[f64], eps: f64, h: f64) -> f64 {
    let m = values.len();
    assert!(m >= 2 && base.len() == m && base.iter().all(|&q| q > 0.0));
    let mut best = f64::NEG_INFINITY;
    let mut vertex = vec![0.0; m];
    vertex[m - 1] = 1.0;
    for anchor in [base.to_vec(), vertex] {
        let g = Grid { values, base, anchor: &anchor, eps, h };
        let mut k = vec![0i64; m];
        g.prefix(0, &mut k, &mut best);
    }
    best
}

struct Grid<'a> {
    values: &'a [f64],
    base: &'a [f64],
    anchor: &'a [f64],
    eps: f64,
    h: f64,
}

fn feasible(p: &[f64], base: &[f64], eps: f64) -> bool {
    p.iter().all(|&x| x >= 0.0)
        && 0.5 * p.iter().zip(base).map(|(a, b)| (a - b) * (a - b) / b).sum::<f64>() <= eps
}

impl Grid<'_> {
    fn point(&self, k: &[i64]) -> Vec<f64> {
        self.anchor.iter().zip(k).map(|(a, &ki)| a + self.h * ki as f64).collect()
    }

    /// χ² contribution of coordinate `i` at offset `ki`.
    fn term(&self, i: usize, ki: i64) -> f64 {
        let d = self.anchor[i] + self.h * ki as f64 - self.base[i];
        0.5 * d * d / self.base[i]
    }

    fn prefix(&self, i: usize, k: &mut Vec<i64>, best: &mut f64) {
        let m = self.values.len();
        if i + 2 == m {
            self.line(k, best);
            return;
        }
        let chi: f64 = (0..i).map(|j| self.term(j, k[j])).sum();
        let used: f64 = (0..i).map(|j| self.anchor[j] + self.h * k[j] as f64).sum();
        let a = self.anchor[i];
        let lo = (-a / self.h).ceil() as i64;
        let hi = ((1.0 - a) / self.h).floor() as i64;
        for ki in lo..=hi {
            let c = chi + self.term(i, ki);
            if c > self.eps || used + a + self.h * ki as f64 > 1.0 + 1e-12 {
                continue;
            }
            k[i] = ki;
            self.prefix(i + 1, k, best);
        }
        k[i] = 0;
    }

    fn line(&self, k: &mut [i64], best: &mut f64) {
        let m = self.values.len();
        let (a, b) = (m - 2, m - 1);
        let h = self.h;
        let s: i64 = k[..a].iter().sum();
        let chi: f64 = (0..a).map(|j| self.term(j, k[j])).sum();
        // k_a = t, k_b = −s − t; p_a − q_a = da + h t, p_b − q_b = db − h t.
        let da = self.anchor[a] - self.base[a];
        let db = self.anchor[b] - self.base[b] - h * s as f64;
        let (qa, qb) = (self.base[a], self.base[b]);
        let c2 = 0.5 * h * h * (1.0 / qa + 1.0 / qb);
        let c1 = h * (da / qa - db / qb);
        let c0 = chi + 0.5 * (da * da / qa + db * db / qb) - self.eps;
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return;
        }
        let r = disc.sqrt();
        let pa0 = self.anchor[a];
        let pb0 = self.anchor[b] - h * s as f64;
        let lo = ((-c1 - r) / (2.0 * c2)).max(-pa0 / h);
        let hi = ((-c1 + r) / (2.0 * c2)).min(pb0 / h);
        if lo > hi + 1.0 {
            return;
        }
        let tie = self.values[a] == self.values[b];
        let prefer_hi = self.values[a] > self.values[b];
        for (j, end) in [lo.ceil() as i64, hi.floor() as i64].into_iter().enumerate() {
            if !tie && (j == 1) != prefer_hi {
                continue;
            }
            // Step inward past rounding at the boundary.
            let step = if j == 0 { 1 } else { -1 };
            let mut t = end - 2 * step;
            for _ in 0..5 {
                k[a] = t;
                k[b] = -s - t;
                let p = self.point(k);
                if feasible(&p, self.base, self.eps) {
                    let v: f64 = p.iter().zip(self.values).map(|(x, y)| x * y).sum();
                    *best = best.max(v);
                }
                t += step;
            }
        }
        k[a] = 0;
        k[b] = 0;
    }
}

/// Worst case over KL balls on two atoms: all mass moves towards the larger
/// value, with `KL((1 − p, p) ‖ (q_lo, q_hi)) = eps` solved by bisection in `p`.
pub fn kl_two_atom_oracle(values: [f64; 2], base: [f64; 2], eps: f64) -> f64 {
    let (lo_i, hi_i) = if values[0] <= values[1] { (0, 1) } else { (1, 0) };
    let (v_lo, v_hi) = (values[lo_i], values[hi_i]);
    let (q_lo, q_hi) = (base[lo_i], base[hi_i]);
    if v_lo == v_hi {
        return v_lo;
    }
    if eps >= -q_hi.ln() {
        return v_hi;
    }
    let kl = |p: f64| {
        let a = if p > 0.0 { p * (p / q_hi).ln() } else { 0.0 };
        let b = if p < 1.0 { (1.0 - p) * ((1.0 - p) / q_lo).ln() } else { 0.0 };
        a + b
    };
    let (mut lo, mut hi) = (q_hi, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kl(mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v_lo + lo * (v_hi - v_lo)
}
