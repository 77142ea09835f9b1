//! Recovery of `b`, the Taylor coefficients of `a` and the drift projection
//! `D(x, y) = d(x, y)·(x - y)` from linearized data.
//!
//! Oracle mode works directly with the `ε`-derivatives `u^{(k)}` of the solution on Ω and
//! checks the algebra of the recovery. Exterior mode starts from exterior measurements only
//! and inverts an explicitly assembled linear map with Tikhonov regularization.

use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dn_map::DnMeasurement;
use crate::error::{Error, Result};
use crate::fractional_ops::DriftDot;
use crate::grid::{Field, Grid, Region};
use crate::linearization::{jet_source, JetField};
use crate::runge::build_phi_x0;
use crate::solvers::{factorial, CoefficientSet, Model};

/// Relative threshold below which a denominator counts as vanishing.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_BASIS_DEGREE: usize = 4;

/// Relative singular-value cutoff in the per-point least squares.
const LSQ_RCOND: f64 = 1e-13;

/// Values on Ω with a trust flag per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedField {
    pub values: Vec<f64>,
    pub trusted: Vec<bool>,
}

impl MaskedField {
    pub fn trusted_count(&self) -> usize {
        self.trusted.iter().filter(|&&t| t).count()
    }

    /// Relative discrete `L²` error against `truth` on the trusted points.
    pub fn relative_error(&self, truth: &[f64]) -> f64 {
        relative_l2(&self.values, truth, &self.trusted)
    }

    /// Values with untrusted points set to zero.
    pub fn masked_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.trusted)
            .map(|(&v, &t)| if t { v } else { 0.0 })
            .collect()
    }
}

/// `‖rec - truth‖ / ‖truth‖` over the masked points; the absolute error when `truth`
/// vanishes there.
pub fn relative_l2(rec: &[f64], truth: &[f64], mask: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((r, t), &m) in rec.iter().zip(truth).zip(mask) {
        if m {
            num += (r - t) * (r - t);
            den += t * t;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn omega_values(grid: &Grid, u: &Field) -> Vec<f64> {
    grid.restrict(u, Region::Omega)
}

/// `b = -(A u^{(2)}) / (2 h(u^{(1)}))` where `h(u^{(1)}) ≥ θ ‖u^{(1)}‖²_∞`.
pub fn recover_b(model: &Model, jet: &JetField, threshold: f64) -> Result<MaskedField> {
    if jet.order() < 2 {
        return Err(Error::Order("recovering b needs a jet of order 2".into()));
    }
    let grid = model.grid();
    let u1 = jet.derivative(1);
    let h = model.forms().h_quadratic(grid, u1);
    let floor = threshold * u1.sup_norm().powi(2);
    let au2 = model.operator().apply_omega(jet.derivative(2));
    let trusted: Vec<bool> = h.iter().map(|&v| v > floor && v > 0.0).collect();
    if !trusted.iter().any(|&t| t) {
        return Err(Error::DegenerateProbe(
            "h(u1) vanishes on the whole domain; the exterior data must not be constant".into(),
        ));
    }
    let values = au2
        .iter()
        .zip(&h)
        .zip(&trusted)
        .map(|((a, h), &t)| if t { -a / (2.0 * h) } else { 0.0 })
        .collect();
    Ok(MaskedField { values, trusted })
}

/// Third-order residual with the drift term left out:
/// `-(A u^{(3)} + 6 b h(u^{(1)}, u^{(2)}))` on Ω.
fn order3_rhs(model: &Model, jet: &JetField, b: &[f64]) -> Vec<f64> {
    let grid = model.grid();
    let au3 = model.operator().apply_omega(jet.derivative(3));
    let h12 = model.forms().h_bilinear(grid, jet.derivative(1), jet.derivative(2));
    au3.iter()
        .zip(&h12)
        .zip(b)
        .map(|((a, h), b)| -(a + 6.0 * b * h))
        .collect()
}

/// `a₃ ≈ -(A u^{(3)} + 6 b h(u^{(1)}, u^{(2)})) / (u^{(1)})³` for a probe whose `u^{(1)}` is
/// close to a constant on Ω, so that the drift integral is negligible.
pub fn recover_a3_near_constant(model: &Model, jet: &JetField, b: &[f64], threshold: f64) -> Result<MaskedField> {
    if jet.order() < 3 {
        return Err(Error::Order("recovering a3 needs a jet of order 3".into()));
    }
    let u1 = omega_values(model.grid(), jet.derivative(1));
    let rhs = order3_rhs(model, jet, b);
    let floor = threshold * crate::grid::sup_norm(&u1).powi(3);
    let trusted: Vec<bool> = u1.iter().map(|u| u.powi(3).abs() > floor).collect();
    if trusted.iter().filter(|&&t| t).count() * 2 < u1.len() {
        return Err(Error::ProbeQuality("u1 vanishes on most of the domain".into()));
    }
    let values = rhs
        .iter()
        .zip(&u1)
        .zip(&trusted)
        .map(|((r, u), &t)| if t { r / u.powi(3) } else { 0.0 })
        .collect();
    Ok(MaskedField { values, trusted })
}

/// Legendre polynomial `P_j(y)` by the three-term recurrence.
pub fn legendre(j: usize, y: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, y);
    if j == 0 {
        return p0;
    }
    for k in 1..j {
        let p2 = ((2 * k + 1) as f64 * y * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// How `D(x, y) = d(x, y)·(x - y)` is expanded in `y` at every fixed `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftBasis {
    /// `D = Σ_j c_j(x) P_j(y)`.
    Projection,
    /// `D = (x - y) Σ_j c_j(x) P_j(y)`, which builds in `D(x, x) = 0`.
    Drift,
}

impl DriftBasis {
    fn weight(self, x: f64, y: f64) -> f64 {
        match self {
            DriftBasis::Projection => 1.0,
            DriftBasis::Drift => x - y,
        }
    }
}

/// Whether the `x`-dependence of the expansion coefficients is left free at every point or
/// expanded in Legendre polynomials as well (a tensor basis on Ω × Ω, one global fit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftFit {
    PerPoint,
    Tensor,
}

/// Settings of the drift recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftOptions {
    pub basis: DriftBasis,
    pub fit: DriftFit,
    pub degree: usize,
    pub threshold: f64,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            basis: DriftBasis::Projection,
            fit: DriftFit::Tensor,
            degree: DEFAULT_BASIS_DEGREE,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl DriftOptions {
    fn unknowns(&self) -> usize {
        match self.fit {
            DriftFit::PerPoint => self.degree + 1,
            DriftFit::Tensor => (self.degree + 1).pow(2),
        }
    }
}

/// Recovered `D(x, y)` on Ω × Ω through its `y`-expansion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRecovery {
    pub basis: DriftBasis,
    /// `|Ω| × (degree + 1)` coefficients.
    pub coefficients: DMatrix<f64>,
    pub trusted: Vec<bool>,
}

impl DriftRecovery {
    pub fn degree(&self) -> usize {
        self.coefficients.ncols() - 1
    }

    /// `D(x_i, y_j)` for Ω points; rows of untrusted `x` are zero.
    pub fn omega_table(&self, grid: &Grid) -> DMatrix<f64> {
        let omega = grid.omega();
        let n = omega.len();
        let basis = basis_table(grid, self.degree());
        DMatrix::from_fn(n, n, |r, c| {
            if !self.trusted[r] {
                return 0.0;
            }
            let w = self
                .basis
                .weight(grid.point(omega.start + r), grid.point(omega.start + c));
            w * (0..=self.degree())
                .map(|j| self.coefficients[(r, j)] * basis[j][c])
                .sum::<f64>()
        })
    }

    pub fn to_drift(&self, grid: &Grid) -> Result<DriftDot> {
        DriftDot::from_omega_table(grid, &self.omega_table(grid))
    }
}

fn basis_table(grid: &Grid, degree: usize) -> Vec<Vec<f64>> {
    (0..=degree)
        .map(|j| grid.omega().map(|i| legendre(j, grid.point(i))).collect())
        .collect()
}

/// Relative `L²` error of a recovered projection against the truth on Ω × Ω, over the
/// off-diagonal pairs of the subgrid with the given stride and trusted rows only.
pub fn drift_error(grid: &Grid, rec: &DriftRecovery, truth: &DriftDot, stride: usize) -> f64 {
    let table = rec.omega_table(grid);
    let t = truth.omega_table();
    let n = grid.omega_len();
    let stride = stride.max(1);
    let (mut num, mut den) = (0.0, 0.0);
    for r in (0..n).step_by(stride) {
        if !rec.trusted[r] {
            continue;
        }
        for c in (0..n).step_by(stride) {
            if r == c {
                continue;
            }
            num += (table[(r, c)] - t[(r, c)]).powi(2);
            den += t[(r, c)].powi(2);
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Per-probe data of the third-order identity: `u1` on Ω, the drift integrals of `u1` against
/// each basis profile, and the right-hand side without the drift term.
struct Order3Probe {
    u1: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

fn order3_probes(
    model: &Model,
    jets: &[JetField],
    b: &[f64],
    basis: DriftBasis,
    degree: usize,
) -> Result<Vec<Order3Probe>> {
    let grid = model.grid();
    let elements: Vec<DriftDot> = (0..=degree)
        .map(|j| DriftDot::from_fn(grid, |x, y| basis.weight(x, y) * legendre(j, y)))
        .collect();
    jets.par_iter()
        .map(|jet| {
            if jet.order() < 3 {
                return Err(Error::Order("drift recovery needs jets of order 3".into()));
            }
            let u1 = jet.derivative(1);
            Ok(Order3Probe {
                u1: omega_values(grid, u1),
                profiles: elements
                    .iter()
                    .map(|e| model.forms().drift_integral(grid, e, u1))
                    .collect(),
                rhs: order3_rhs(model, jet, b),
            })
        })
        .collect()
}

/// Least squares via a truncated SVD after scaling every column to unit norm; returns
/// `None` when the design matrix is zero.
fn lstsq(mut a: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let scales: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    for (j, &s) in scales.iter().enumerate() {
        if s > 0.0 {
            a.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let svd = SVD::new(a, true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    let mut x = svd.solve(&rhs, LSQ_RCOND * smax).ok()?;
    for (j, &s) in scales.iter().enumerate() {
        if s > 0.0 {
            x[j] /= s;
        }
    }
    Some(x)
}

/// With `a₃` known, fits the expansion of `D` in
/// `6 (u^{(1)})² ∫ D(x, y) (u^{(1)}(x) - u^{(1)}(y)) K dy = -(A u^{(3)} + 6 b h + a₃ (u^{(1)})³)`
/// by least squares across the probes.
pub fn recover_drift(
    model: &Model,
    jets: &[JetField],
    b: &[f64],
    a3: &MaskedField,
    opts: &DriftOptions,
) -> Result<DriftRecovery> {
    let known = |r: usize| a3.trusted[r].then_some(a3.values[r]);
    fit_order3(model, jets, b, opts, &known, opts.degree + 1).map(|(drift, _)| drift)
}

/// Fits `a₃(x)` and the expansion of `D` together from the same third-order identity.
pub fn recover_a3_and_drift_joint(
    model: &Model,
    jets: &[JetField],
    b: &[f64],
    opts: &DriftOptions,
) -> Result<(MaskedField, DriftRecovery)> {
    let (drift, a3) = fit_order3(model, jets, b, opts, &|_| None, opts.degree + 2)?;
    Ok((a3, drift))
}

fn fit_order3(
    model: &Model,
    jets: &[JetField],
    b: &[f64],
    opts: &DriftOptions,
    known_a3: &(dyn Fn(usize) -> Option<f64> + Sync),
    needed: usize,
) -> Result<(DriftRecovery, MaskedField)> {
    if jets.len() < needed {
        return Err(Error::Underdetermined {
            probes: jets.len(),
            unknowns: needed,
        });
    }
    let probes = order3_probes(model, jets, b, opts.basis, opts.degree)?;
    match opts.fit {
        DriftFit::PerPoint => fit_pointwise(model, &probes, opts.basis, opts.degree, opts.threshold, known_a3),
        DriftFit::Tensor => fit_tensor(model, &probes, opts, known_a3),
    }
}

/// Global fit of `D = Σ_{ij} C_ij P_i(x) w(x,y) P_j(y)`. A free `a₃(x)` is eliminated at
/// every point by projecting out the `(u^{(1)})³` direction and recovered afterwards.
fn fit_tensor(
    model: &Model,
    probes: &[Order3Probe],
    opts: &DriftOptions,
    known_a3: &(dyn Fn(usize) -> Option<f64> + Sync),
) -> Result<(DriftRecovery, MaskedField)> {
    let grid = model.grid();
    let n = grid.omega_len();
    let deg = opts.degree;
    let k = opts.unknowns();
    let xs: Vec<f64> = grid.omega().map(|i| grid.point(i)).collect();
    let scale = probes.iter().map(|p| crate::grid::sup_norm(&p.u1)).fold(0.0, f64::max);
    let floor = opts.threshold * scale.powi(2);
    // Per point: the usable probe rows of the design and right-hand side.
    let blocks: Vec<Option<(DMatrix<f64>, DVector<f64>, DVector<f64>)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let usable: Vec<&Order3Probe> = probes.iter().filter(|p| p.u1[r].powi(2) > floor).collect();
            let a3 = known_a3(r);
            if usable.len() < 1 + usize::from(a3.is_none()) {
                return None;
            }
            let px: Vec<f64> = (0..=deg).map(|i| legendre(i, xs[r])).collect();
            let mut g = DMatrix::zeros(usable.len(), k);
            let mut rhs = DVector::zeros(usable.len());
            let mut cube = DVector::zeros(usable.len());
            for (q, p) in usable.iter().enumerate() {
                let u = p.u1[r];
                let w = 6.0 * u * u;
                for i in 0..=deg {
                    for j in 0..=deg {
                        g[(q, i * (deg + 1) + j)] = w * px[i] * p.profiles[j][r];
                    }
                }
                cube[q] = u.powi(3);
                rhs[q] = p.rhs[r] - a3.map_or(0.0, |v| v * cube[q]);
            }
            if a3.is_none() {
                // Remove the component along the cubic column.
                let c2 = cube.norm_squared();
                let proj_g = &cube * (cube.transpose() * &g) / c2;
                let proj_r = &cube * (cube.dot(&rhs) / c2);
                return Some((g - proj_g, rhs - proj_r, cube));
            }
            Some((g, rhs, cube))
        })
        .collect();
    let trusted: Vec<bool> = blocks.iter().map(Option::is_some).collect();
    if trusted.iter().filter(|&&t| t).count() * 2 < n {
        return Err(Error::ProbeQuality(
            "too few probes with nonvanishing u1 on most of the domain".into(),
        ));
    }
    let rows: usize = blocks.iter().flatten().map(|(g, _, _)| g.nrows()).sum();
    let mut big = DMatrix::zeros(rows, k);
    let mut rhs = DVector::zeros(rows);
    let mut at = 0;
    for (g, r, _) in blocks.iter().flatten() {
        big.view_mut((at, 0), (g.nrows(), k)).copy_from(g);
        rhs.rows_mut(at, g.nrows()).copy_from(r);
        at += g.nrows();
    }
    let c = lstsq(big, rhs).ok_or_else(|| Error::ProbeQuality("drift design matrix vanishes".into()))?;
    let mut coefficients = DMatrix::zeros(n, deg + 1);
    let mut cubic = vec![0.0; n];
    for r in 0..n {
        for j in 0..=deg {
            coefficients[(r, j)] = (0..=deg).map(|i| c[i * (deg + 1) + j] * legendre(i, xs[r])).sum();
        }
    }
    // a₃ from the unprojected residual of every trusted point.
    for (r, block) in blocks.iter().enumerate() {
        let Some((_, _, cube)) = block else { continue };
        cubic[r] = match known_a3(r) {
            Some(v) => v,
            None => {
                let p = &probes;
                let mut num = 0.0;
                let mut q = 0;
                for pr in p.iter() {
                    if pr.u1[r].powi(2) <= floor {
                        continue;
                    }
                    let u = pr.u1[r];
                    let drift: f64 =
                        (0..=deg).map(|j| coefficients[(r, j)] * pr.profiles[j][r]).sum::<f64>() * 6.0 * u * u;
                    num += cube[q] * (pr.rhs[r] - drift);
                    q += 1;
                }
                num / cube.norm_squared()
            }
        };
    }
    Ok((
        DriftRecovery {
            basis: opts.basis,
            coefficients,
            trusted: trusted.clone(),
        },
        MaskedField { values: cubic, trusted },
    ))
}

/// Per-point least squares. When `known_a3(r)` is `None` the cubic coefficient is an
/// additional unknown.
fn fit_pointwise(
    model: &Model,
    probes: &[Order3Probe],
    basis: DriftBasis,
    degree: usize,
    threshold: f64,
    known_a3: &(dyn Fn(usize) -> Option<f64> + Sync),
) -> Result<(DriftRecovery, MaskedField)> {
    let n = model.grid().omega_len();
    let scale = probes.iter().map(|p| crate::grid::sup_norm(&p.u1)).fold(0.0, f64::max);
    let floor = threshold * scale.powi(2);
    let rows: Vec<Option<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let a3 = known_a3(r);
            let usable: Vec<&Order3Probe> = probes.iter().filter(|p| p.u1[r].powi(2) > floor).collect();
            let unknowns = degree + 1 + usize::from(a3.is_none());
            if usable.len() < unknowns {
                return None;
            }
            let mut a = DMatrix::zeros(usable.len(), unknowns);
            let mut rhs = DVector::zeros(usable.len());
            for (k, p) in usable.iter().enumerate() {
                let u = p.u1[r];
                let w = 6.0 * u * u;
                for j in 0..=degree {
                    a[(k, j)] = w * p.profiles[j][r];
                }
                match a3 {
                    Some(v) => rhs[k] = p.rhs[r] - v * u.powi(3),
                    None => {
                        a[(k, degree + 1)] = u.powi(3);
                        rhs[k] = p.rhs[r];
                    }
                }
            }
            let sol = lstsq(a, rhs)?;
            let cubic = a3.unwrap_or_else(|| sol[degree + 1]);
            Some((sol.iter().take(degree + 1).copied().collect(), cubic))
        })
        .collect();
    let trusted: Vec<bool> = rows.iter().map(Option::is_some).collect();
    if trusted.iter().filter(|&&t| t).count() * 2 < n {
        return Err(Error::ProbeQuality(
            "too few probes with nonvanishing u1 on most of the domain".into(),
        ));
    }
    let mut coefficients = DMatrix::zeros(n, degree + 1);
    let mut cubic = vec![0.0; n];
    for (r, row) in rows.into_iter().enumerate() {
        if let Some((c, a3)) = row {
            for (j, v) in c.into_iter().enumerate() {
                coefficients[(r, j)] = v;
            }
            cubic[r] = a3;
        }
    }
    Ok((
        DriftRecovery {
            basis,
            coefficients,
            trusted: trusted.clone(),
        },
        MaskedField { values: cubic, trusted },
    ))
}

/// `a_N = -(A u^{(N)} + N! S_N^{known}) / (u^{(1)})^N`, where `S_N^{known}` is the order-`N`
/// source rebuilt from `known` with `a_N` set to zero. The probe must keep `u^{(1)} > 0` on Ω.
pub fn recover_a_higher(
    model: &Model,
    jet: &JetField,
    known: &CoefficientSet,
    order: usize,
    threshold: f64,
) -> Result<MaskedField> {
    if order <= known.m() as usize + 1 || order > known.k_max() {
        return Err(Error::Order(format!(
            "higher-order recovery needs {} < N <= {}, got {order}",
            known.m() + 1,
            known.k_max()
        )));
    }
    if jet.order() < order {
        return Err(Error::Order(format!("jet of order {} < {order}", jet.order())));
    }
    let grid = model.grid();
    let u1 = omega_values(grid, jet.derivative(1));
    let min = u1.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::MaxPrinciple(min));
    }
    let mut lower = known.clone();
    lower.set_a(order, vec![0.0; grid.omega_len()])?;
    let src = jet_source(model, &lower, &jet.taylor(), order)?;
    let aun = model.operator().apply_omega(jet.derivative(order));
    let nf = factorial(order);
    let floor = threshold * crate::grid::sup_norm(&u1).powi(order as i32);
    let trusted: Vec<bool> = u1.iter().map(|u| u.powi(order as i32) > floor).collect();
    let values = aun
        .iter()
        .zip(&src)
        .zip(&u1)
        .zip(&trusted)
        .map(|(((a, s), u), &t)| if t { -(a + nf * s) / u.powi(order as i32) } else { 0.0 })
        .collect();
    Ok(MaskedField { values, trusted })
}

/// Checks the sign argument at Ω position `r0`: with `φ` built from the sign of
/// `diff(x₀, ·)`, the integral `∫ diff(x₀, y) (φ(x₀) - φ(y)) |x₀ - y|^{-t-3/2} dy` is positive
/// exactly when the partition `A₊ ∪ A₋` is nonempty. Returns the integral and whether the
/// partition is nonempty.
pub fn sign_argument(model: &Model, diff: &DMatrix<f64>, r0: usize) -> Result<(f64, bool)> {
    let grid = model.grid();
    let omega = grid.omega();
    let x0 = grid.point(omega.start + r0);
    let row = |y: f64| {
        let c = ((y - grid.point(omega.start)) / grid.spacing()).round() as usize;
        diff[(r0, c)]
    };
    let phi = build_phi_x0(grid, x0, |_, y| row(y))?;
    let mut field = grid.sample(|_| 1.0);
    field.values[omega.clone()].copy_from_slice(&phi.values);
    let mut profile = grid.zeros();
    for (c, i) in omega.clone().enumerate() {
        profile.values[i] = diff[(r0, c)];
    }
    let integral = model.forms().drift_profile_integral(grid, &profile.values, &field)[r0];
    let scale = -(model.forms().c_t() / 2.0).sqrt();
    Ok((integral / scale, phi.partition.iter().any(|&p| p != 0)))
}

/// Data from one exterior probe: the measurements for `±eps·f`.
#[derive(Debug, Clone)]
pub struct ExteriorProbe {
    pub f: Field,
    pub eps: f64,
    pub plus: DnMeasurement,
    pub minus: DnMeasurement,
}

impl ExteriorProbe {
    /// `(Λ(εf) + Λ(-εf)) / ε²` on W₂, the second derivative in the amplitude.
    pub fn second_derivative_w2(&self, grid: &Grid) -> Vec<f64> {
        let e2 = self.eps * self.eps;
        self.plus
            .restrict_w2(grid)
            .iter()
            .zip(self.minus.restrict_w2(grid))
            .map(|(p, m)| (p + m) / e2)
            .collect()
    }
}

/// `b ↦ -2 A_{W₂,Ω} 𝓛_s^{-1} (b h(u^{(1)}))` for exterior data `f`.
pub fn b_to_w2_operator(model: &Model, f: &Field) -> Result<DMatrix<f64>> {
    let grid = model.grid();
    let u1 = model.solve_exterior(f)?;
    let h = model.forms().h_quadratic(grid, &u1);
    let n = grid.omega_len();
    let diag = DMatrix::from_fn(n, n, |r, c| if r == c { h[r] } else { 0.0 });
    let sol = model.solve_source_matrix(&diag)?;
    let (w2, omega) = (grid.w2(), grid.omega());
    let a = model
        .operator()
        .matrix()
        .view((w2.start, omega.start), (w2.len(), omega.len()))
        .into_owned();
    Ok(-2.0 * a * sol)
}

/// One point of the L-curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LCurvePoint {
    pub alpha: f64,
    pub residual: f64,
    pub solution_norm: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorInversion {
    pub b: Vec<f64>,
    pub alpha: f64,
    pub residual: f64,
    /// Of the regularized system at the selected weight.
    pub condition_number: f64,
    pub lcurve: Vec<LCurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorOptions {
    /// Regularization weights relative to the squared largest singular value.
    pub alphas: Vec<f64>,
    /// Largest admissible `ε ‖f‖_∞` of a probe.
    pub max_amplitude: f64,
}

impl Default for ExteriorOptions {
    fn default() -> Self {
        ExteriorOptions {
            alphas: log_space(1e-8, 1e-2, 13),
            max_amplitude: 1.0,
        }
    }
}

/// Tikhonov solution of `min ‖M b - data‖² + α‖L b‖²` with `L` the first difference and
/// `α` at the corner of the L-curve over the configured weights.
pub fn exterior_data_inversion(
    model: &Model,
    probes: &[ExteriorProbe],
    opts: &ExteriorOptions,
) -> Result<ExteriorInversion> {
    if probes.is_empty() {
        return Err(Error::Underdetermined {
            probes: 0,
            unknowns: model.grid().omega_len(),
        });
    }
    let grid = model.grid();
    for p in probes {
        if !(p.eps > 0.0 && p.eps * p.f.sup_norm() <= opts.max_amplitude) {
            return Err(Error::Config(format!(
                "probe amplitude {:e} is outside the small-data regime",
                p.eps * p.f.sup_norm()
            )));
        }
    }
    let blocks: Vec<(DMatrix<f64>, Vec<f64>)> = probes
        .par_iter()
        .map(|p| Ok((b_to_w2_operator(model, &p.f)?, p.second_derivative_w2(grid))))
        .collect::<Result<_>>()?;
    let rows: usize = blocks.iter().map(|(m, _)| m.nrows()).sum();
    let n = grid.omega_len();
    let mut m = DMatrix::zeros(rows, n);
    let mut data = DVector::zeros(rows);
    let mut at = 0;
    for (blk, d) in &blocks {
        m.view_mut((at, 0), (blk.nrows(), n)).copy_from(blk);
        for (k, v) in d.iter().enumerate() {
            data[at + k] = *v;
        }
        at += blk.nrows();
    }
    // First differences per unit length.
    let h = grid.spacing();
    let l = DMatrix::from_fn(n - 1, n, |r, c| {
        if c == r + 1 {
            1.0 / h
        } else if c == r {
            -1.0 / h
        } else {
            0.0
        }
    });
    tikhonov_lcurve(&m, &l, &data, &opts.alphas)
}

/// General-form Tikhonov `min ‖M c - data‖² + α ‖L c‖²` with L-curve selection. The
/// weights are relative to `‖M‖₂² / ‖L‖₂²`. The corner is the point of largest
/// counter-clockwise curvature of `(log ρ, log ‖L c‖)`; without one the data show no
/// noise floor and the smallest weight wins.
pub fn tikhonov_lcurve(
    m: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    data: &DVector<f64>,
    alphas: &[f64],
) -> Result<ExteriorInversion> {
    if alphas.is_empty() {
        return Err(Error::Regularization(f64::NAN));
    }
    if let Some(&a) = alphas.iter().find(|&&a| !(a > 0.0)) {
        return Err(Error::Regularization(a));
    }
    if penalty.ncols() != m.ncols() {
        return Err(Error::Dimension {
            what: "penalty operator",
            expected: m.ncols(),
            got: penalty.ncols(),
        });
    }
    let mut alphas = alphas.to_vec();
    alphas.sort_by(|a, b| a.total_cmp(b));
    let sig = m.singular_values();
    let smax = sig.max();
    let lmax = penalty.singular_values().max();
    if !(smax > 0.0 && lmax > 0.0) {
        return Err(Error::Conditioning { alpha: alphas[0] });
    }
    let (rows, k) = (m.nrows(), m.ncols());
    // Solution and condition number of the stacked system `[M; √α L]`.
    let solve = |alpha: f64| -> Result<(DVector<f64>, f64)> {
        let w = (alpha * smax * smax / (lmax * lmax)).sqrt();
        let mut stacked = DMatrix::zeros(rows + penalty.nrows(), k);
        stacked.view_mut((0, 0), (rows, k)).copy_from(m);
        stacked
            .view_mut((rows, 0), (penalty.nrows(), k))
            .copy_from(&(penalty * w));
        let mut rhs = DVector::zeros(rows + penalty.nrows());
        rhs.rows_mut(0, rows).copy_from(data);
        let svd = stacked.svd(true, true);
        let cond = svd.singular_values.max() / svd.singular_values.min();
        let c = svd
            .solve(&rhs, f64::EPSILON * smax)
            .map_err(|_| Error::Conditioning { alpha })?;
        if c.iter().all(|v| v.is_finite()) {
            Ok((c, cond))
        } else {
            Err(Error::Conditioning { alpha })
        }
    };
    let solved: Vec<(DVector<f64>, f64)> = alphas.par_iter().map(|&a| solve(a)).collect::<Result<_>>()?;
    let solutions: Vec<&DVector<f64>> = solved.iter().map(|(c, _)| c).collect();
    let mut lcurve: Vec<LCurvePoint> = alphas
        .iter()
        .zip(&solutions)
        .map(|(&alpha, &c)| LCurvePoint {
            alpha,
            residual: (m * c - data).norm(),
            solution_norm: (penalty * c).norm(),
            curvature: 0.0,
        })
        .collect();
    let pts: Vec<(f64, f64)> = lcurve
        .iter()
        .map(|p| {
            (
                p.residual.max(f64::MIN_POSITIVE).log10(),
                p.solution_norm.max(f64::MIN_POSITIVE).log10(),
            )
        })
        .collect();
    for i in 1..pts.len().saturating_sub(1) {
        lcurve[i].curvature = menger_curvature(pts[i - 1], pts[i], pts[i + 1]);
    }
    let best = lcurve
        .iter()
        .enumerate()
        .filter(|(_, p)| p.curvature > 0.0)
        .max_by(|a, b| a.1.curvature.total_cmp(&b.1.curvature))
        .map_or(0, |(i, _)| i);
    Ok(ExteriorInversion {
        b: solutions[best].iter().copied().collect(),
        alpha: lcurve[best].alpha,
        residual: lcurve[best].residual,
        condition_number: solved[best].1,
        lcurve,
    })
}

/// Signed curvature of the circle through three points, positive for a left turn.
fn menger_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
    let d = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    let denom = d(a, b) * d(b, c) * d(a, c);
    if denom > 0.0 {
        2.0 * cross / denom
    } else {
        0.0
    }
}

/// Logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Exterior,
}

/// Recovered quantities and, when the truth is known, their errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub mode: Mode,
    pub b: MaskedField,
    pub a: Vec<(usize, MaskedField)>,
    /// `D(x_i, y_j)` on the Ω points, row-major, when recovered.
    pub ddot: Option<Vec<Vec<f64>>>,
    pub ddot_trusted: Option<Vec<bool>>,
    pub errors: Vec<(String, f64)>,
}

impl RecoveryResult {
    pub fn error(&self, name: &str) -> Option<f64> {
        self.errors.iter().find(|(n, _)| n == name).map(|(_, e)| *e)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recovery serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_ops::DriftCoefficient;
    use crate::linearization::solve_hierarchy;

    fn model() -> Model {
        let grid = Grid::build(4.0, 257, (1.5, 2.5), (-2.5, -1.5)).unwrap();
        Model::new(grid, 0.75, 0.25).unwrap()
    }

    fn probe(grid: &Grid, k: usize) -> Field {
        grid.sample_on(Region::W1, |x| {
            ((x - 1.5) * (2.5 - x)).max(0.0).powi(2) * 16.0 * (1.0 + (k as f64 * (x - 2.0) * 3.0).cos())
        })
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert_eq!(legendre(1, 0.3), 0.3);
        assert!((legendre(2, 0.3) - (3.0 * 0.09 - 1.0) / 2.0).abs() < 1e-15);
        assert!((legendre(4, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn b_is_recovered_exactly_from_jets() {
        let m = model();
        let g = m.grid();
        let a3 = |x: f64| 1.0 + x;
        let coeffs =
            CoefficientSet::from_fns(g, 2, 6, |x| 1.0 + x * x / 2.0, &DriftCoefficient::Zero, &[(3, &a3)]).unwrap();
        let jet = solve_hierarchy(&m, &probe(g, 1), &coeffs, 2).unwrap();
        let b = recover_b(&m, &jet, DEFAULT_THRESHOLD).unwrap();
        assert!(b.relative_error(coeffs.b()) < 1e-10);
        let zero = CoefficientSet::zeros(g, 2, 6).unwrap();
        let jet = solve_hierarchy(&m, &probe(g, 1), &zero, 2).unwrap();
        let b = recover_b(&m, &jet, DEFAULT_THRESHOLD).unwrap();
        assert!(b.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn constant_data_is_degenerate() {
        let m = model();
        let g = m.grid();
        let f = g.sample(|x| if x.abs() >= 1.0 { 1.0 } else { 0.0 });
        let coeffs = CoefficientSet::zeros(g, 2, 6).unwrap();
        let jet = solve_hierarchy(&m, &f, &coeffs, 2).unwrap();
        assert!(matches!(
            recover_b(&m, &jet, DEFAULT_THRESHOLD),
            Err(Error::DegenerateProbe(_))
        ));
    }

    #[test]
    fn too_few_probes_is_underdetermined() {
        let m = model();
        let g = m.grid();
        let coeffs = CoefficientSet::zeros(g, 2, 6).unwrap();
        let jets: Vec<JetField> = (0..3)
            .map(|k| solve_hierarchy(&m, &probe(g, k), &coeffs, 3).unwrap())
            .collect();
        let a3 = MaskedField {
            values: vec![0.0; g.omega_len()],
            trusted: vec![true; g.omega_len()],
        };
        assert!(matches!(
            recover_drift(
                &m,
                &jets,
                coeffs.b(),
                &a3,
                &DriftOptions {
                    fit: DriftFit::PerPoint,
                    ..Default::default()
                }
            ),
            Err(Error::Underdetermined { .. })
        ));
    }

    #[test]
    fn tikhonov_recovers_well_posed_system() {
        let m = DMatrix::from_fn(6, 3, |r, c| ((r + 1) as f64).powi(c as i32));
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let d = &m * &x;
        let inv = tikhonov_lcurve(&m, &DMatrix::identity(3, 3), &d, &log_space(1e-12, 1e-6, 7)).unwrap();
        assert!(inv.b.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-3));
        assert!(log_space(1e-8, 1e-2, 7)
            .iter()
            .zip([1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
            .all(|(a, b)| (a / b - 1.0).abs() < 1e-12));
    }
}
