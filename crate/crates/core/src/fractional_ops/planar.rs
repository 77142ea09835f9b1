//! Pointwise evaluation of the fractional gradient and the drift term in two dimensions.
//!
//! Only used for pointwise checks (for instance the gauge symmetry of the drift term,
//! which is invisible on the line). Ω is the unit disk.

use crate::error::{Error, Result};
use crate::fractional_ops::kernel_constant;
use crate::quadrature::gauss_legendre_unit;

pub type Point = [f64; 2];

/// `∇^t u(x, y) = sqrt(c_{2,t}/2) (y - x) / |x - y|^{t + 2} (u(x) - u(y))`.
pub fn frac_gradient(u: impl Fn(Point) -> f64, x: Point, y: Point, t: f64) -> Result<Point> {
    let c = kernel_constant(2, t)?.value;
    let diff = [y[0] - x[0], y[1] - x[1]];
    let r = diff[0].hypot(diff[1]);
    if r == 0.0 {
        return Err(Error::SingularPoint(x[0]));
    }
    let scale = (c / 2.0).sqrt() * r.powf(-t - 2.0) * (u(x) - u(y));
    Ok([scale * diff[0], scale * diff[1]])
}

/// Quadrature resolution for [`psi`].
#[derive(Debug, Clone, Copy)]
pub struct PolarRule {
    pub radial: usize,
    pub angular: usize,
}

impl Default for PolarRule {
    fn default() -> Self {
        PolarRule {
            radial: 48,
            angular: 96,
        }
    }
}

/// `ψ(x; d, u) = u(x)^m ∫ d(x, y)·∇^t u(x, y) dy` for `x` in the unit disk, with `d`
/// supported in the unit disk in `y`.
///
/// Polar coordinates around `x`: with `y = x + ρ e`, the integrand is
/// `sqrt(c/2) (d·e) ρ^{-t} (u(x) - u(y))`, and `ρ = σ^{1/(1-t)}` removes the
/// remaining endpoint singularity.
pub fn psi(
    u: impl Fn(Point) -> f64,
    d: impl Fn(Point, Point) -> Point,
    x: Point,
    m: u32,
    t: f64,
    rule: PolarRule,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::Exponent(m));
    }
    let c = kernel_constant(2, t)?.value;
    let reach = 1.0 + x[0].hypot(x[1]);
    let (nodes, weights) = gauss_legendre_unit(rule.radial);
    let ux = u(x);
    let q = 1.0 / (1.0 - t);
    let dtheta = 2.0 * std::f64::consts::PI / rule.angular as f64;
    let mut acc = 0.0;
    for k in 0..rule.angular {
        let theta = (k as f64 + 0.5) * dtheta;
        let e = [theta.cos(), theta.sin()];
        for (sig, w) in nodes.iter().zip(&weights) {
            // ρ = reach σ^q,  dρ = reach q σ^{q-1} dσ
            let rho = reach * sig.powf(q);
            let jac = reach * q * sig.powf(q - 1.0);
            let y = [x[0] + rho * e[0], x[1] + rho * e[1]];
            let dv = d(x, y);
            let proj = dv[0] * (y[0] - x[0]) + dv[1] * (y[1] - x[1]);
            // (d·e) ρ^{-t} with d·e = proj / ρ
            acc += w * jac * proj * rho.powf(-t - 1.0) * (ux - u(y));
        }
    }
    Ok(ux.powi(m as i32) * (c / 2.0).sqrt() * acc * dtheta)
}
