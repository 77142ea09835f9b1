//! Higher-order linearization in the data amplitude `ε`.
//!
//! The solution `u(x; ε)` of the problem with data `ε f` is expanded as
//! `u = Σ_k c_k ε^k`, `c_k = u^{(k)} / k!`. Substituting into the nonlinear terms and
//! collecting powers of `ε` gives at order `k` the linear problem `A c_k = -S_k` on Ω with
//! zero exterior data, where `S_k` only involves `c_1 … c_{k-1}`. The order-`k` source is
//! assembled by truncated power-series arithmetic, so no order needs to be derived by hand.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::solvers::{factorial, CoefficientSet, Model, PicardOptions};

/// Truncated power series with one coefficient vector per power: `series[p]` multiplies
/// `ε^p`, `p = 0 ..= order`. All vectors share a length (pointwise series).
pub type Series = Vec<Vec<f64>>;

/// Pointwise product of two truncated series.
pub fn series_mul(a: &Series, b: &Series, order: usize) -> Series {
    let len = a.first().or(b.first()).map_or(0, Vec::len);
    let mut out = vec![vec![0.0; len]; order + 1];
    for (p, ap) in a.iter().enumerate().take(order + 1) {
        if ap.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (q, bq) in b.iter().enumerate().take(order + 1 - p) {
            for ((o, x), y) in out[p + q].iter_mut().zip(ap).zip(bq) {
                *o += x * y;
            }
        }
    }
    out
}

/// `a^p` truncated at `order`, `p ≥ 1`.
pub fn series_pow(a: &Series, p: u32, order: usize) -> Series {
    assert!(p >= 1);
    let mut acc = truncate(a, order);
    for _ in 1..p {
        acc = series_mul(&acc, a, order);
    }
    acc
}

fn truncate(a: &Series, order: usize) -> Series {
    let len = a.first().map_or(0, Vec::len);
    (0..=order)
        .map(|p| a.get(p).cloned().unwrap_or_else(|| vec![0.0; len]))
        .collect()
}

/// Order-`k` coefficient of `b h(u) + ψ(u) + a(u)` on Ω for `u = Σ_{j<k} c_j ε^j`.
///
/// `taylor[j - 1] = c_j` (full-grid fields) for `j = 1 .. k-1`; extra entries are ignored.
pub fn jet_source(model: &Model, coeffs: &CoefficientSet, taylor: &[Field], k: usize) -> Result<Vec<f64>> {
    model.check_coeffs(coeffs)?;
    if k < 2 || taylor.len() < k - 1 {
        return Err(Error::Order(format!(
            "order {k} source needs coefficients 1..{}",
            k.saturating_sub(1)
        )));
    }
    let grid = model.grid();
    let forms = model.forms();
    let n = grid.omega_len();
    let omega = grid.omega();
    let c = &taylor[..k - 1];
    let mut out = vec![0.0; n];

    // b h(u, u): h is bilinear, so [h]_k = Σ_{i+j=k} h(c_i, c_j).
    if coeffs.b().iter().any(|&v| v != 0.0) {
        let mut hk = vec![0.0; n];
        for i in 1..k {
            let j = k - i;
            if i > j {
                break;
            }
            let h = forms.h_bilinear(grid, &c[i - 1], &c[j - 1]);
            let w = if i == j { 1.0 } else { 2.0 };
            for (a, v) in hk.iter_mut().zip(h) {
                *a += w * v;
            }
        }
        for ((o, b), h) in out.iter_mut().zip(coeffs.b()).zip(hk) {
            *o += b * h;
        }
    }

    // Pointwise series of u on Ω, powers 0..k.
    let mut u_series: Series = vec![vec![0.0; n]];
    u_series.extend(c.iter().map(|f| f.values[omega.clone()].to_vec()));
    u_series.push(vec![0.0; n]);

    // ψ = u^m I(u), with I linear: [ψ]_k = Σ_{l+j=k} [u^m]_l I(c_j).
    let m = coeffs.m();
    if !coeffs.drift().is_zero() && k > m as usize {
        let um = series_pow(&u_series, m, k);
        for j in 1..=k - m as usize {
            let l = k - j;
            if um[l].iter().all(|&v| v == 0.0) {
                continue;
            }
            let ij = forms.drift_integral(grid, coeffs.drift(), &c[j - 1]);
            for ((o, p), i) in out.iter_mut().zip(&um[l]).zip(ij) {
                *o += p * i;
            }
        }
    }

    // a(u) = Σ_p a_p u^p / p!.
    let mut power = series_pow(&u_series, m, k);
    for p in m as usize + 1..=k.min(coeffs.k_max()) {
        power = series_mul(&power, &u_series, k);
        let ap = coeffs.a(p).expect("order within k_max");
        let scale = 1.0 / factorial(p);
        for ((o, a), z) in out.iter_mut().zip(ap).zip(&power[k]) {
            *o += scale * a * z;
        }
    }
    Ok(out)
}

/// The `ε`-derivatives `u^{(1)} … u^{(K)}` of the solution for data `ε f`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetField {
    f: Field,
    derivatives: Vec<Field>,
}

impl JetField {
    pub fn new(f: Field, derivatives: Vec<Field>) -> Self {
        JetField { f, derivatives }
    }

    pub fn order(&self) -> usize {
        self.derivatives.len()
    }

    pub fn data(&self) -> &Field {
        &self.f
    }

    /// `u^{(k)}`, `1 ≤ k ≤ order`.
    pub fn derivative(&self, k: usize) -> &Field {
        &self.derivatives[k - 1]
    }

    pub fn derivatives(&self) -> &[Field] {
        &self.derivatives
    }

    /// Taylor coefficients `c_k = u^{(k)} / k!`, `k = 1 ..= order`.
    pub fn taylor(&self) -> Vec<Field> {
        self.derivatives
            .iter()
            .enumerate()
            .map(|(j, u)| u.scaled(1.0 / factorial(j + 1)))
            .collect()
    }

    /// CSV with columns `x, u1, …, uK`.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let mut out = String::from("x");
        for k in 1..=self.order() {
            out.push_str(&format!(",u{k}"));
        }
        out.push('\n');
        for i in 0..grid.n_points() {
            out.push_str(&format!("{:.16e}", grid.point(i)));
            for u in &self.derivatives {
                out.push_str(&format!(",{:.16e}", u.values[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Order-by-order solution of the linearized hierarchy up to order `order`.
pub fn solve_hierarchy(model: &Model, f: &Field, coeffs: &CoefficientSet, order: usize) -> Result<JetField> {
    if order == 0 || order > coeffs.k_max() {
        return Err(Error::Order(format!(
            "hierarchy order {order} must lie in 1..={}",
            coeffs.k_max()
        )));
    }
    let mut taylor = vec![model.solve_exterior(f)?];
    for k in 2..=order {
        let src = jet_source(model, coeffs, &taylor, k)?;
        let rhs: Vec<f64> = src.into_iter().map(|v| -v).collect();
        taylor.push(model.solve_source(&rhs)?);
    }
    let derivatives = taylor
        .iter()
        .enumerate()
        .map(|(j, c)| c.scaled(factorial(j + 1)))
        .collect();
    Ok(JetField::new(f.clone(), derivatives))
}

/// Weights of the narrowest central stencil `Σ_j w_j g(j·δ) ≈ δ^k g^{(k)}(0)` with second-order
/// accuracy, nodes `j = -p ..= p`, `p = ⌊(k+1)/2⌋`.
pub fn central_weights(k: usize) -> Vec<f64> {
    let p = k.div_ceil(2);
    let nodes: Vec<f64> = (-(p as i64)..=p as i64).map(|j| j as f64).collect();
    let size = nodes.len();
    // Match moments 0..size-1: Σ w_j j^r = r! δ_{rk}.
    let v = DMatrix::from_fn(size, size, |r, c| nodes[c].powi(r as i32));
    let mut rhs = DVector::zeros(size);
    rhs[k] = factorial(k);
    let w = v.lu().solve(&rhs).expect("Vandermonde on distinct nodes");
    w.iter().copied().collect()
}

/// Estimates `u^{(k)}`, `k = 1 ..= order`, by central divided differences of the nonlinear
/// solver over data `j·eps0·f`, `|j| ≤ order`.
pub fn divided_difference_jets(
    model: &Model,
    f: &Field,
    coeffs: &CoefficientSet,
    order: usize,
    eps0: f64,
    opts: &PicardOptions,
) -> Result<JetField> {
    if order == 0 {
        return Err(Error::Order("divided differences need order >= 1".into()));
    }
    if !(eps0 > 0.0) {
        return Err(Error::Config(format!("eps0 = {eps0} must be positive")));
    }
    let half = order.div_ceil(2);
    let datas: Vec<Field> = (-(half as i64)..=half as i64)
        .map(|j| f.scaled(j as f64 * eps0))
        .collect();
    let sols: Vec<Field> = datas
        .par_iter()
        .map(|d| model.solve_nonlinear(d, coeffs, opts).map(|(u, _)| u))
        .collect::<Result<_>>()?;
    let n = f.len();
    let derivatives = (1..=order)
        .map(|k| {
            let w = central_weights(k);
            let p = w.len() / 2;
            let scale = eps0.powi(k as i32);
            let mut out = vec![0.0; n];
            for (c, wj) in w.iter().enumerate() {
                if *wj == 0.0 {
                    continue;
                }
                let u = &sols[half + c - p];
                for (o, v) in out.iter_mut().zip(&u.values) {
                    *o += wj * v / scale;
                }
            }
            Field::new(out)
        })
        .collect();
    Ok(JetField::new(f.clone(), derivatives))
}
