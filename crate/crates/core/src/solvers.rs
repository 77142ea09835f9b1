//! Linear solution operator, exterior-data solver and the Picard iteration for the
//! nonlinear problem.
//!
//! Everything is discretized on the Ω rows of the fractional Laplacian. The Ω × Ω block
//! is factored once per [`Model`] and shared by every solve.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_ops::{DriftCoefficient, DriftDot, FracLaplacian, NonlocalForms};
use crate::grid::{sup_norm, Field, Grid};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_K_MAX: usize = 6;

/// Iterate norm beyond which the Picard sequence is declared divergent.
const BLOWUP: f64 = 1e8;

/// `k!` as a float.
pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// The hidden coefficients `(b, d, a)` and the exponent `m`.
///
/// `a` is held through its Taylor coefficients `a_k = ∂_z^k a(·, 0)` for
/// `k = m+1 ..= k_max`; lower ones vanish by assumption. The drift enters only through
/// `D(x, y) = d(x, y)·(x - y)`, which is what is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    m: u32,
    b: Vec<f64>,
    drift: DriftDot,
    a_taylor: Vec<Vec<f64>>,
}

impl CoefficientSet {
    /// All coefficients zero, with Taylor slots up to `k_max`.
    pub fn zeros(grid: &Grid, m: u32, k_max: usize) -> Result<Self> {
        check_exponent(m, k_max)?;
        let n = grid.omega_len();
        Ok(CoefficientSet {
            m,
            b: vec![0.0; n],
            drift: DriftDot::zeros(grid),
            a_taylor: vec![vec![0.0; n]; k_max - m as usize],
        })
    }

    pub fn new(grid: &Grid, m: u32, b: Vec<f64>, drift: DriftDot, a_taylor: Vec<Vec<f64>>) -> Result<Self> {
        check_exponent(m, m as usize + a_taylor.len())?;
        let n = grid.omega_len();
        check_len("b", n, b.len())?;
        check_len("drift rows", n, drift.rows())?;
        check_len("drift columns", grid.omega_closure().len(), drift.cols())?;
        for a in &a_taylor {
            check_len("Taylor coefficient", n, a.len())?;
        }
        let all = b.iter().chain(a_taylor.iter().flatten());
        if !all.clone().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("coefficients"));
        }
        Ok(CoefficientSet { m, b, drift, a_taylor })
    }

    /// Samples `b(x)`, `d(x, y)` and the Taylor coefficients `a_k(x)` given as `(k, a_k)`.
    pub fn from_fns(
        grid: &Grid,
        m: u32,
        k_max: usize,
        b: impl Fn(f64) -> f64,
        d: &DriftCoefficient,
        a: &[(usize, &dyn Fn(f64) -> f64)],
    ) -> Result<Self> {
        let mut set = CoefficientSet::zeros(grid, m, k_max)?;
        set.b = sample_omega(grid, b);
        set.drift = d.dot(grid);
        for (k, f) in a {
            set.set_a(*k, sample_omega(grid, f))?;
        }
        Ok(set)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k_max(&self) -> usize {
        self.m as usize + self.a_taylor.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn drift(&self) -> &DriftDot {
        &self.drift
    }

    /// `a_k` on Ω, or `None` when `k ≤ m` or `k > k_max`.
    pub fn a(&self, k: usize) -> Option<&[f64]> {
        let lo = self.m as usize + 1;
        if k < lo {
            return None;
        }
        self.a_taylor.get(k - lo).map(Vec::as_slice)
    }

    pub fn set_b(&mut self, b: Vec<f64>) -> Result<()> {
        check_len("b", self.b.len(), b.len())?;
        self.b = b;
        Ok(())
    }

    pub fn set_drift(&mut self, drift: DriftDot) -> Result<()> {
        check_len("drift rows", self.drift.rows(), drift.rows())?;
        check_len("drift columns", self.drift.cols(), drift.cols())?;
        self.drift = drift;
        Ok(())
    }

    pub fn set_a(&mut self, k: usize, values: Vec<f64>) -> Result<()> {
        let lo = self.m as usize + 1;
        if k < lo || k > self.k_max() {
            return Err(Error::Order(format!(
                "Taylor order {k} outside {lo}..={} (a_k vanishes for k <= m)",
                self.k_max()
            )));
        }
        check_len("Taylor coefficient", self.b.len(), values.len())?;
        self.a_taylor[k - lo] = values;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(|&v| v == 0.0) && self.drift.is_zero() && self.a_taylor.iter().flatten().all(|&v| v == 0.0)
    }

    /// Truncated series `a(x_r, z) = Σ a_k(x_r) z^k / k!` at Ω position `r`.
    pub fn eval_a(&self, r: usize, z: f64) -> f64 {
        let lo = self.m as usize + 1;
        self.a_taylor
            .iter()
            .enumerate()
            .map(|(j, a)| a[r] * z.powi((lo + j) as i32) / factorial(lo + j))
            .sum()
    }
}

fn sample_omega(grid: &Grid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.omega().map(|i| f(grid.point(i))).collect()
}

fn check_exponent(m: u32, k_max: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::Exponent(m));
    }
    if k_max <= m as usize {
        return Err(Error::Order(format!("k_max = {k_max} must exceed m = {m}")));
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// Outcome of a Picard solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖φ_{k+1} - φ_k‖_∞` per iteration.
    pub residual_history: Vec<f64>,
    pub final_sup_norm: f64,
    pub converged: bool,
    /// Geometric mean of the last few increment ratios, when there are enough of them.
    pub contraction_ratio: Option<f64>,
}

impl SolveReport {
    /// Successive increment ratios `‖φ_{k+1}-φ_k‖ / ‖φ_k-φ_{k-1}‖`.
    pub fn ratios(&self) -> Vec<f64> {
        self.residual_history
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn contraction_estimate(history: &[f64]) -> Option<f64> {
    // Skip the first ratio and anything at round-off level.
    let floor = history.first().copied().unwrap_or(0.0) * 1e-12;
    let ratios: Vec<f64> = history
        .windows(2)
        .skip(1)
        .filter(|w| w[1] > floor && w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let tail = &ratios[ratios.len().saturating_sub(4)..];
    Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
}

/// Tolerance, iteration cap and starting perturbation for [`Model::solve_nonlinear`].
#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `φ₀`; must vanish on the exterior. Defaults to zero.
    pub initial: Option<Field>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            initial: None,
        }
    }
}

impl PicardOptions {
    pub fn with_tol(tol: f64) -> Self {
        PicardOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Grid, operators and factorization shared by all solves at fixed `(s, t)`.
#[derive(Debug)]
pub struct Model {
    grid: Grid,
    s: f64,
    t: f64,
    op: FracLaplacian,
    lu: LU<f64, Dyn, Dyn>,
    forms: NonlocalForms,
}

impl Model {
    pub fn new(grid: Grid, s: f64, t: f64) -> Result<Self> {
        check_orders(s, t)?;
        let op = FracLaplacian::assemble(&grid, s)?;
        Model::with_operator(grid, op, t)
    }

    /// Uses an already assembled (for instance cached) operator.
    pub fn with_operator(grid: Grid, op: FracLaplacian, t: f64) -> Result<Self> {
        let s = op.order();
        check_orders(s, t)?;
        if op.matrix().nrows() != grid.n_points() {
            return Err(Error::Dimension {
                what: "operator",
                expected: grid.n_points(),
                got: op.matrix().nrows(),
            });
        }
        let lu = op.omega_block().lu();
        if !lu.is_invertible() {
            return Err(Error::Internal("singular domain block".into()));
        }
        let forms = NonlocalForms::new(&grid, t)?;
        Ok(Model {
            grid,
            s,
            t,
            op,
            lu,
            forms,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn operator(&self) -> &FracLaplacian {
        &self.op
    }

    pub fn forms(&self) -> &NonlocalForms {
        &self.forms
    }

    /// `𝓛_s^{-1} g`: solves `A v = g` on Ω with `v = 0` on the exterior.
    pub fn solve_source(&self, g: &[f64]) -> Result<Field> {
        check_len("source", self.grid.omega_len(), g.len())?;
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("source"));
        }
        let v = self
            .lu
            .solve(&DVector::from_column_slice(g))
            .ok_or_else(|| Error::Internal("singular domain block".into()))?;
        self.grid.extend_omega(v.as_slice())
    }

    /// Solves the source problem for every column of `g` (`|Ω| × k`).
    pub fn solve_source_matrix(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(g)
            .ok_or_else(|| Error::Internal("singular domain block".into()))
    }

    /// `(-Δ)^s`-harmonic extension of exterior data: `u₀ = f` outside Ω, `A u₀ = 0` on Ω.
    pub fn solve_exterior(&self, f: &Field) -> Result<Field> {
        self.check_exterior(f)?;
        let rhs: Vec<f64> = self.op.apply_omega(f).into_iter().map(|v| -v).collect();
        let v = self.solve_source(&rhs)?;
        Ok(f.axpy(1.0, &v))
    }

    /// Checks that `f` is a finite full-grid field vanishing on the Ω points.
    pub fn check_exterior(&self, f: &Field) -> Result<()> {
        self.grid.check_field(f, "exterior data")?;
        let worst = self.grid.omega().map(|i| f.values[i].abs()).fold(0.0, f64::max);
        if worst > 0.0 {
            return Err(Error::ExteriorSupport(worst));
        }
        Ok(())
    }

    /// `b h(·; u) + ψ(·; d, u) + a(·, u)` on Ω.
    pub fn nonlinear_terms(&self, u: &Field, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        let omega = self.grid.omega();
        let mut out: Vec<f64> = omega
            .clone()
            .enumerate()
            .map(|(r, i)| coeffs.eval_a(r, u.values[i]))
            .collect();
        if coeffs.b.iter().any(|&b| b != 0.0) {
            let h = self.forms.h_quadratic(&self.grid, u);
            for ((o, b), h) in out.iter_mut().zip(&coeffs.b).zip(h) {
                *o += b * h;
            }
        }
        if !coeffs.drift.is_zero() {
            let psi = self.forms.psi_drift(&self.grid, &coeffs.drift, u, coeffs.m)?;
            for (o, p) in out.iter_mut().zip(psi) {
                *o += p;
            }
        }
        Ok(out)
    }

    /// `G(φ) = -b h(u₀+φ) - ψ(u₀+φ) - a(u₀+φ)` on Ω.
    pub fn apply_g(&self, phi: &Field, u0: &Field, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
        let u = u0.axpy(1.0, phi);
        Ok(self.nonlinear_terms(&u, coeffs)?.into_iter().map(|v| -v).collect())
    }

    /// `A u + b h(u) + ψ(u) + a(u)` on Ω.
    pub fn residual(&self, u: &Field, coeffs: &CoefficientSet) -> Result<Vec<f64>> {
        let au = self.op.apply_omega(u);
        Ok(self
            .nonlinear_terms(u, coeffs)?
            .into_iter()
            .zip(au)
            .map(|(n, a)| n + a)
            .collect())
    }

    /// Picard iteration `φ_{k+1} = 𝓛_s^{-1} G(φ_k)` for `u = u₀ + φ`.
    pub fn solve_nonlinear(
        &self,
        f: &Field,
        coeffs: &CoefficientSet,
        opts: &PicardOptions,
    ) -> Result<(Field, SolveReport)> {
        let u0 = self.solve_exterior(f)?;
        let mut phi = match &opts.initial {
            Some(p) => {
                self.check_exterior_zero(p)?;
                p.clone()
            }
            None => self.grid.zeros(),
        };
        let mut history = Vec::new();
        for iter in 1..=opts.max_iter {
            let next = self
                .solve_source(&self.apply_g(&phi, &u0, coeffs)?)
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::Divergence {
                        iteration: iter,
                        history: history.clone(),
                    },
                    other => other,
                })?;
            let step = sup_norm(
                &next
                    .values
                    .iter()
                    .zip(&phi.values)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            history.push(step);
            if !step.is_finite() || !next.is_finite() || next.sup_norm() > BLOWUP {
                return Err(Error::Divergence {
                    iteration: iter,
                    history,
                });
            }
            phi = next;
            if step < opts.tol {
                let u = u0.axpy(1.0, &phi);
                let report = SolveReport {
                    iterations: iter,
                    contraction_ratio: contraction_estimate(&history),
                    residual_history: history,
                    final_sup_norm: u.sup_norm(),
                    converged: true,
                };
                return Ok((u, report));
            }
        }
        Err(Error::NonConvergence {
            iterations: opts.max_iter,
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }

    /// Solves for each of `datas` concurrently.
    pub fn solve_many(&self, datas: &[Field], coeffs: &CoefficientSet, opts: &PicardOptions) -> Result<Vec<Field>> {
        datas
            .par_iter()
            .map(|f| self.solve_nonlinear(f, coeffs, opts).map(|(u, _)| u))
            .collect()
    }

    /// Largest dyadic `‖f‖_∞ = 2^k` (`k ≤ 4`) for which Picard from `shape` rescaled to that
    /// norm converges within `iterations` steps.
    pub fn calibrate_eps_max(&self, shape: &Field, coeffs: &CoefficientSet, iterations: usize) -> Result<f64> {
        let norm = shape.sup_norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateProbe("zero calibration profile".into()));
        }
        let opts = PicardOptions {
            max_iter: iterations,
            ..Default::default()
        };
        let mut best = None;
        for k in (-20..=4).rev() {
            let eps = 2f64.powi(k);
            if self.solve_nonlinear(&shape.scaled(eps / norm), coeffs, &opts).is_ok() {
                best = Some(eps);
                break;
            }
        }
        best.ok_or_else(|| Error::NonConvergence {
            iterations,
            last: f64::NAN,
            history: Vec::new(),
        })
    }

    fn check_exterior_zero(&self, phi: &Field) -> Result<()> {
        self.grid.check_field(phi, "initial guess")?;
        let worst = self
            .grid
            .exterior_indices()
            .into_iter()
            .map(|i| phi.values[i].abs())
            .fold(0.0, f64::max);
        if worst > 0.0 {
            return Err(Error::Config(format!(
                "initial guess must vanish outside the domain (max {worst:e})"
            )));
        }
        Ok(())
    }

    pub(crate) fn check_coeffs(&self, coeffs: &CoefficientSet) -> Result<()> {
        check_len("b", self.grid.omega_len(), coeffs.b.len())?;
        check_len("drift rows", self.grid.omega_len(), coeffs.drift.rows())
    }
}

fn check_orders(s: f64, t: f64) -> Result<()> {
    if !(t > 0.0 && t < s && s < 1.0) {
        return Err(Error::Order(format!(
            "orders must satisfy 0 < t < s < 1, got s = {s}, t = {t}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_ops::getoor_value;
    use crate::grid::Region;

    fn model(n: usize) -> Model {
        let grid = Grid::build(4.0, n, (1.5, 2.5), (-2.5, -1.5)).unwrap();
        Model::new(grid, 0.75, 0.25).unwrap()
    }

    fn bump(grid: &Grid, amp: f64) -> Field {
        grid.sample_on(Region::W1, |x| amp * ((x - 1.5) * (2.5 - x)).max(0.0).powi(2) * 16.0)
    }

    fn reference(grid: &Grid) -> CoefficientSet {
        let d = DriftCoefficient::from_fn(|x, y| 0.5 * (1.0 - x * x) * (1.0 + 0.5 * y));
        let a3 = |x: f64| 1.0 + x;
        let a4 = |x: f64| (std::f64::consts::FRAC_PI_2 * x).cos();
        CoefficientSet::from_fns(grid, 2, 6, |x| 1.0 + x * x / 2.0, &d, &[(3, &a3), (4, &a4)]).unwrap()
    }

    #[test]
    fn zero_source_and_zero_data() {
        let m = model(257);
        let v = m.solve_source(&vec![0.0; m.grid().omega_len()]).unwrap();
        assert_eq!(v.sup_norm(), 0.0);
        let u0 = m.solve_exterior(&m.grid().zeros()).unwrap();
        assert_eq!(u0.sup_norm(), 0.0);
        let coeffs = reference(m.grid());
        let (u, rep) = m
            .solve_nonlinear(&m.grid().zeros(), &coeffs, &PicardOptions::default())
            .unwrap();
        assert_eq!(u.sup_norm(), 0.0);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn constant_source_inverts_getoor() {
        let grid = Grid::build(4.0, 1025, (1.5, 2.5), (-2.5, -1.5)).unwrap();
        let m = Model::new(grid, 0.5, 0.25).unwrap();
        let v = m.solve_source(&vec![1.0; m.grid().omega_len()]).unwrap();
        let c = getoor_value(1, 0.5);
        let exact: Vec<f64> = m
            .grid()
            .omega()
            .map(|i| (1.0 - m.grid().point(i).powi(2)).sqrt() / c)
            .collect();
        let err: Vec<f64> = m.grid().omega().zip(&exact).map(|(i, e)| v.values[i] - e).collect();
        let rel = m.grid().l2_omega(&err) / m.grid().l2_omega(&exact);
        assert!(rel < 2e-2, "{rel}");
    }

    #[test]
    fn exterior_solution_is_harmonic_and_positive() {
        let m = model(257);
        let f = bump(m.grid(), 1.0);
        let u0 = m.solve_exterior(&f).unwrap();
        let au = m.operator().apply_omega(&u0);
        assert!(sup_norm(&au) < 1e-10);
        assert!(m.grid().omega().all(|i| u0.values[i] > 0.0));
        let bad = m.grid().sample(|x| x);
        assert!(matches!(m.solve_exterior(&bad), Err(Error::ExteriorSupport(_))));
    }

    #[test]
    fn zero_coefficients_return_harmonic_extension() {
        let m = model(257);
        let f = bump(m.grid(), 0.3);
        let coeffs = CoefficientSet::zeros(m.grid(), 2, 6).unwrap();
        let (u, rep) = m.solve_nonlinear(&f, &coeffs, &PicardOptions::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(u, m.solve_exterior(&f).unwrap());
        let g = m.apply_g(&m.grid().zeros(), &u, &coeffs).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn picard_solution_satisfies_equation() {
        let m = model(257);
        let coeffs = reference(m.grid());
        let f = bump(m.grid(), 0.5);
        let (u, rep) = m.solve_nonlinear(&f, &coeffs, &PicardOptions::default()).unwrap();
        assert!(rep.converged);
        let r = m.residual(&u, &coeffs).unwrap();
        assert!(sup_norm(&r) < 10.0 * DEFAULT_TOL, "{}", sup_norm(&r));
        assert!(rep.contraction_ratio.unwrap() < 0.9);
    }

    #[test]
    fn taylor_series_evaluation() {
        let m = model(129);
        let a3 = |_: f64| 6.0;
        let set = CoefficientSet::from_fns(m.grid(), 2, 4, |_| 0.0, &DriftCoefficient::Zero, &[(3, &a3)]).unwrap();
        assert!((set.eval_a(0, 0.5) - 0.125).abs() < 1e-15);
        assert!(set.a(2).is_none() && set.a(5).is_none());
        let mut set = set;
        assert!(set.set_a(2, vec![0.0; m.grid().omega_len()]).is_err());
        assert!(CoefficientSet::zeros(m.grid(), 1, 4).is_err());
    }

    #[test]
    fn orders_are_validated() {
        let grid = Grid::build(4.0, 129, (1.5, 2.5), (-2.5, -1.5)).unwrap();
        assert!(matches!(Model::new(grid.clone(), 0.5, 0.5), Err(Error::Order(_))));
        assert!(Model::new(grid, 0.5, 0.6).is_err());
    }
}
