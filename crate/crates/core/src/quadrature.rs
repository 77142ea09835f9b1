//! Closed-form moments of the power kernel `r^(-p)` against piecewise-linear data.
//!
//! On a uniform grid every cell `[k h, (k+1) h]` at offset `k` from the evaluation
//! point sees the same kernel moments, so the weights are computed once per
//! `(h, p, n)` and shared by all rows.

/// `∫_a^b r^q dr` for `0 <= a < b <= ∞`. Divergent integrals return `+∞`.
pub fn pow_integral(a: f64, b: f64, q: f64) -> f64 {
    let e = q + 1.0;
    if b.is_infinite() {
        if e >= 0.0 {
            return f64::INFINITY;
        }
        return -a.powf(e) / e;
    }
    if a == 0.0 {
        if e <= 0.0 {
            return f64::INFINITY;
        }
        return b.powf(e) / e;
    }
    let log_ratio = (b / a).ln();
    if e.abs() < 1e-14 {
        return log_ratio;
    }
    a.powf(e) * (e * log_ratio).exp_m1() / e
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const GL_ORDER: usize = 16;
// Cells closer than this (in units of h) use the exact antiderivatives.
const EXACT_CELLS: usize = 4;

/// Moments for a linear interpolant: `m0[k] = ∫ r^-p`, `m1[k] = ∫ τ r^-p` over cell `k`,
/// where `τ = r/h - k` runs from 0 to 1 across the cell.
#[derive(Debug, Clone)]
pub struct LinearCellWeights {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
}

/// Moments for a product of two linear interpolants over cell `k`:
/// `w00 = ∫ (1-τ)² r^-p`, `w01 = ∫ τ(1-τ) r^-p`, `w11 = ∫ τ² r^-p`.
/// Entries of the near cell (`k = 0`) that diverge are `+∞`.
#[derive(Debug, Clone)]
pub struct ProductCellWeights {
    pub exponent: f64,
    pub spacing: f64,
    pub w00: Vec<f64>,
    pub w01: Vec<f64>,
    pub w11: Vec<f64>,
}

pub(crate) fn unit_moments(k: usize, p: f64, degree: usize) -> [f64; 3] {
    // ∫_0^1 τ^j (k + τ)^-p dτ for j = 0..=degree
    let kf = k as f64;
    let mut out = [0.0; 3];
    if k >= EXACT_CELLS {
        let (nodes, weights) = gauss_legendre_unit(GL_ORDER);
        for (t, w) in nodes.iter().zip(&weights) {
            let kern = (kf + t).powf(-p);
            let mut tj = 1.0;
            for o in out.iter_mut().take(degree + 1) {
                *o += w * tj * kern;
                tj *= t;
            }
        }
        return out;
    }
    // ρ-monomials μ_j = ∫_k^{k+1} ρ^{j-p} dρ, then shift τ = ρ - k.
    let mu: Vec<f64> = (0..=degree).map(|j| pow_integral(kf, kf + 1.0, j as f64 - p)).collect();
    out[0] = mu[0];
    if degree >= 1 {
        out[1] = if k == 0 { mu[1] } else { mu[1] - kf * mu[0] };
    }
    if degree >= 2 {
        out[2] = if k == 0 {
            mu[2]
        } else {
            mu[2] - 2.0 * kf * mu[1] + kf * kf * mu[0]
        };
    }
    out
}

impl LinearCellWeights {
    /// Weights for cells `k = 0..cells`; the `k = 0` entries are `+∞` (singular cell).
    pub fn new(spacing: f64, p: f64, cells: usize) -> Self {
        let scale = spacing.powf(1.0 - p);
        let mut m0 = vec![f64::INFINITY; cells];
        let mut m1 = vec![f64::INFINITY; cells];
        for k in 1..cells {
            let mo = unit_moments(k, p, 1);
            m0[k] = scale * mo[0];
            m1[k] = scale * mo[1];
        }
        LinearCellWeights { m0, m1 }
    }
}

/// Moments for a quadratic interpolant over the cell pair `[k h, (k+2) h]`: the kernel
/// integrated against the three Lagrange basis functions through offsets `k, k+1, k+2`.
#[derive(Debug, Clone)]
pub struct QuadraticPairWeights {
    pub w: Vec<[f64; 3]>,
}

impl QuadraticPairWeights {
    /// Weights for pairs starting at `k = 1..cells` (entry 0 is unused).
    pub fn new(spacing: f64, p: f64, cells: usize) -> Self {
        let scale = spacing.powf(1.0 - p);
        let mut w = vec![[f64::INFINITY; 3]; cells];
        for (k, wk) in w.iter_mut().enumerate().skip(1) {
            let a = unit_moments(k, p, 2);
            let b = unit_moments(k + 1, p, 2);
            // T_j = ∫_0^2 τ^j (k + τ)^-p dτ
            let t0 = a[0] + b[0];
            let t1 = a[1] + b[1] + b[0];
            let t2 = a[2] + b[2] + 2.0 * b[1] + b[0];
            *wk = [
                scale * (t2 - 3.0 * t1 + 2.0 * t0) / 2.0,
                scale * (2.0 * t1 - t2),
                scale * (t2 - t1) / 2.0,
            ];
        }
        QuadraticPairWeights { w }
    }
}

impl ProductCellWeights {
    pub fn new(spacing: f64, p: f64, cells: usize) -> Self {
        let scale = spacing.powf(1.0 - p);
        let mut w00 = vec![0.0; cells];
        let mut w01 = vec![0.0; cells];
        let mut w11 = vec![0.0; cells];
        for k in 0..cells {
            let mo = unit_moments(k, p, 2);
            if k == 0 {
                // τ = ρ on the near cell; (1-τ)² and τ(1-τ) only converge for small p.
                w11[0] = scale * pow_integral(0.0, 1.0, 2.0 - p);
                let t1 = pow_integral(0.0, 1.0, 1.0 - p);
                w01[0] = if t1.is_finite() {
                    scale * (t1 - pow_integral(0.0, 1.0, 2.0 - p))
                } else {
                    f64::INFINITY
                };
                w00[0] = if p < 1.0 {
                    scale * (mo[0] - 2.0 * mo[1] + mo[2])
                } else {
                    f64::INFINITY
                };
                continue;
            }
            w00[k] = scale * (mo[0] - 2.0 * mo[1] + mo[2]);
            w01[k] = scale * (mo[1] - mo[2]);
            w11[k] = scale * mo[2];
        }
        ProductCellWeights {
            exponent: p,
            spacing,
            w00,
            w01,
            w11,
        }
    }

    /// `∫_R^∞ r^-p dr`.
    pub fn tail(&self, distance: f64) -> f64 {
        pow_integral(distance, f64::INFINITY, -self.exponent)
    }

    /// Integral over cells `0..a.len()-1` of the product of the two linear interpolants
    /// through `a[k]` and `b[k]` (node `k` at distance `k h`), against `r^-p`.
    /// Terms whose coefficient is exactly zero are skipped, so a divergent near-cell
    /// weight only contributes when the data do not vanish at the evaluation point.
    pub fn side_sum(&self, a: impl Fn(usize) -> f64, b: impl Fn(usize) -> f64, nodes: usize) -> f64 {
        if nodes < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        let (mut a0, mut b0) = (a(0), b(0));
        for k in 0..nodes - 1 {
            let (a1, b1) = (a(k + 1), b(k + 1));
            let c00 = a0 * b0;
            let c01 = a0 * b1 + a1 * b0;
            let c11 = a1 * b1;
            if c00 != 0.0 {
                acc += c00 * self.w00[k];
            }
            if c01 != 0.0 {
                acc += c01 * self.w01[k];
            }
            if c11 != 0.0 {
                acc += c11 * self.w11[k];
            }
            a0 = a1;
            b0 = b1;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pow_integral_matches_antiderivative() {
        assert_relative_eq!(pow_integral(1.0, 2.0, -2.0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(pow_integral(1.0, 3.0, -1.0), 3f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(pow_integral(1.0, 3.0, -1.0 + 1e-9), 3f64.ln(), max_relative = 1e-8);
        assert_relative_eq!(pow_integral(2.0, f64::INFINITY, -1.5), 2f64.powf(-0.5) / 0.5);
        assert_eq!(pow_integral(0.0, 1.0, -1.0), f64::INFINITY);
        assert_relative_eq!(pow_integral(0.0, 2.0, 0.5), 2f64.powf(1.5) / 1.5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let sum_w: f64 = w.iter().sum();
        assert_relative_eq!(sum_w, 2.0, epsilon = 1e-14);
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(i14, 2.0 / 15.0, epsilon = 1e-14);
        let (x, w) = gauss_legendre_unit(5);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(3)).sum();
        assert_relative_eq!(i, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn cell_weights_agree_across_the_exact_and_gauss_branches() {
        // brute-force midpoint rule on a fine subdivision
        let p = 1.7;
        let h = 0.1;
        let pw = ProductCellWeights::new(h, p, 12);
        let lw = LinearCellWeights::new(h, p, 12);
        for k in 1..12 {
            let n = 20000;
            let (mut s00, mut s01, mut s11, mut s1) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..n {
                let tau = (j as f64 + 0.5) / n as f64;
                let r = (k as f64 + tau) * h;
                let kern = r.powf(-p) * h / n as f64;
                s00 += (1.0 - tau).powi(2) * kern;
                s01 += tau * (1.0 - tau) * kern;
                s11 += tau * tau * kern;
                s1 += tau * kern;
            }
            assert_relative_eq!(pw.w00[k], s00, max_relative = 1e-7);
            assert_relative_eq!(pw.w01[k], s01, max_relative = 1e-7);
            assert_relative_eq!(pw.w11[k], s11, max_relative = 1e-7);
            assert_relative_eq!(lw.m1[k], s1, max_relative = 1e-7);
            assert_relative_eq!(pw.w00[k] + 2.0 * pw.w01[k] + pw.w11[k], lw.m0[k], max_relative = 1e-12);
        }
    }

    #[test]
    fn near_cell_divergence_is_flagged() {
        let pw = ProductCellWeights::new(0.1, 1.5, 4);
        assert!(pw.w00[0].is_infinite());
        assert!(pw.w01[0].is_finite());
        assert!(pw.w11[0].is_finite());
        let pw = ProductCellWeights::new(0.1, 2.2, 4);
        assert!(pw.w01[0].is_infinite());
    }
}
