//! The fractional Laplacian, the fractional gradient and the two nonlocal lower-order
//! terms built from it: the quadratic form `h(x; u, v)` and the drift term `ψ(x; d, u)`.
//!
//! All line integrals use exact kernel moments against interpolated data (see
//! [`crate::quadrature`]). For `(-Δ)^s` the principal value is removed analytically on
//! the two cells adjacent to the evaluation point by a local quadratic interpolant, and
//! the far field uses quadratic interpolation on consecutive cell pairs. The nonlocal
//! forms `h` and `ψ` integrate products of linear interpolants, which are integrable
//! at the evaluation point without any special treatment. Beyond `[-L, L]` fields are
//! extended by their end values, which vanish for every field the solvers produce.

pub mod planar;

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quadrature::{LinearCellWeights, ProductCellWeights, QuadraticPairWeights};

/// Constant `C_n` for the one-dimensional spherical measure (two points).
pub const SPHERE_MEASURE_1D: f64 = 2.0;

/// Row-sum tolerance for the assembled operator at the reference resolution.
pub const TOL_QUAD: f64 = 1e-8;

const CACHE_MAGIC: &[u8; 5] = b"FLOP1";

fn check_order(s: f64, what: &str) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Order(format!("{what} = {s} must lie in (0, 1)")));
    }
    Ok(())
}

/// The normalizing constant `c_{n,s}` of the singular-integral definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstant {
    pub n: u32,
    pub s: f64,
    pub value: f64,
}

/// `c_{n,s} = Γ(n/2 + s) 4^s / (|Γ(-s)| π^{n/2})`.
pub fn kernel_constant(n: u32, s: f64) -> Result<KernelConstant> {
    check_order(s, "order s")?;
    if n == 0 {
        return Err(Error::Config("dimension n must be at least 1".into()));
    }
    let nf = n as f64;
    let value = gamma(nf / 2.0 + s) * 4f64.powf(s) / (gamma(-s).abs() * std::f64::consts::PI.powf(nf / 2.0));
    Ok(KernelConstant { n, s, value })
}

/// Value of `(-Δ)^s (1 - |x|²)_+^s` inside the unit ball: `4^s Γ(1+s) Γ(n/2+s) / Γ(n/2)`.
pub fn getoor_value(n: u32, s: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(s) * gamma(1.0 + s) * gamma(nf / 2.0 + s) / gamma(nf / 2.0)
}

/// Dense quadrature matrix of `(-Δ)^s` on the grid.
///
/// Rows cover every grid point, so the same matrix serves the equation on Ω and the
/// DN map on the exterior. Each row sums to zero, off-diagonal entries are nonpositive,
/// and away from the two end columns on each side the matrix is symmetric Toeplitz.
#[derive(Debug, Clone)]
pub struct FracLaplacian {
    s: f64,
    half_width: f64,
    n_points: usize,
    omega: std::ops::Range<usize>,
    matrix: DMatrix<f64>,
}

struct FarField {
    linear: LinearCellWeights,
    pairs: QuadraticPairWeights,
}

// Cells 1..cells on one side: quadratic interpolation on consecutive cell pairs, the
// last cell linear when the count is odd. `node(k)` maps an offset to a grid index.
fn add_far_side(row: &mut [f64], i: usize, cells: usize, far: &FarField, node: impl Fn(usize) -> usize) {
    let mut k = 1;
    while k + 1 < cells {
        let w = far.pairs.w[k];
        row[i] += w[0] + w[1] + w[2];
        row[node(k)] -= w[0];
        row[node(k + 1)] -= w[1];
        row[node(k + 2)] -= w[2];
        k += 2;
    }
    if k < cells {
        let (m0, m1) = (far.linear.m0[k], far.linear.m1[k]);
        row[i] += m0;
        row[node(k)] -= m0 - m1;
        row[node(k + 1)] -= m1;
    }
}

fn assemble_row(i: usize, n: usize, h: f64, s: f64, far: &FarField) -> Vec<f64> {
    let mut row = vec![0.0; n];
    // Near field [x_i - h, x_i + h]: quadratic interpolant, odd part cancels.
    let near = h.powf(-2.0 * s) / (2.0 - 2.0 * s);
    let right = if i + 1 < n { i + 1 } else { i };
    let left = if i > 0 { i - 1 } else { i };
    row[right] -= near;
    row[left] -= near;
    row[i] += 2.0 * near;

    let cells_right = n - 1 - i;
    add_far_side(&mut row, i, cells_right, far, |k| i + k);
    let reach = cells_right.max(1) as f64 * h;
    let tail = reach.powf(-2.0 * s) / (2.0 * s);
    row[i] += tail;
    row[n - 1] -= tail;

    let cells_left = i;
    add_far_side(&mut row, i, cells_left, far, |k| i - k);
    let reach = cells_left.max(1) as f64 * h;
    let tail = reach.powf(-2.0 * s) / (2.0 * s);
    row[i] += tail;
    row[0] -= tail;
    row
}

impl FracLaplacian {
    /// Assembles the operator for order `s` on `grid`. Rows are independent and built in parallel.
    pub fn assemble(grid: &Grid, s: f64) -> Result<Self> {
        check_order(s, "order s")?;
        let n = grid.n_points();
        let h = grid.spacing();
        if !(h > 0.0) || n < 3 {
            return Err(Error::Resolution("degenerate grid".into()));
        }
        let c = kernel_constant(1, s)?.value;
        let far = FarField {
            linear: LinearCellWeights::new(h, 1.0 + 2.0 * s, n),
            pairs: QuadraticPairWeights::new(h, 1.0 + 2.0 * s, n),
        };
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| assemble_row(i, n, h, s, &far)).collect();
        let matrix = DMatrix::from_fn(n, n, |i, j| c * rows[i][j]);
        Ok(FracLaplacian {
            s,
            half_width: grid.half_width(),
            n_points: n,
            omega: grid.omega(),
            matrix,
        })
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    /// The full `n_points × n_points` matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Rows of Ω, all columns: the `|Ω| × n_points` operator acting on full fields.
    pub fn omega_rows(&self) -> DMatrix<f64> {
        self.matrix.rows(self.omega.start, self.omega.len()).into_owned()
    }

    /// The Ω × Ω block, the matrix of the zero-exterior source problem.
    pub fn omega_block(&self) -> DMatrix<f64> {
        let (a, len) = (self.omega.start, self.omega.len());
        self.matrix.view((a, a), (len, len)).into_owned()
    }

    /// `(A u)_i` for a single grid row.
    pub fn apply_row(&self, i: usize, u: &[f64]) -> f64 {
        self.matrix.row(i).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    /// `A u` at every grid point.
    pub fn apply(&self, u: &Field) -> Vec<f64> {
        (0..self.n_points)
            .into_par_iter()
            .map(|i| self.apply_row(i, &u.values))
            .collect()
    }

    /// `A u` on the rows of Ω.
    pub fn apply_omega(&self, u: &Field) -> Vec<f64> {
        self.omega
            .clone()
            .into_par_iter()
            .map(|i| self.apply_row(i, &u.values))
            .collect()
    }

    /// Writes the operator to a binary cache file keyed by `(L, n_points, s)`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&self.half_width.to_le_bytes())?;
        out.write_all(&(self.n_points as u64).to_le_bytes())?;
        out.write_all(&self.s.to_le_bytes())?;
        out.write_all(&(self.omega.start as u64).to_le_bytes())?;
        out.write_all(&(self.omega.end as u64).to_le_bytes())?;
        for v in self.matrix.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an operator written by [`FracLaplacian::save`], checking the key against `grid` and `s`.
    pub fn load(path: &Path, grid: &Grid, s: f64) -> Result<Self> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("missing FLOP1 header".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next = |input: &mut dyn Read| -> Result<[u8; 8]> {
            input.read_exact(&mut b8)?;
            Ok(b8)
        };
        let half_width = f64::from_le_bytes(next(&mut input)?);
        let n_points = u64::from_le_bytes(next(&mut input)?) as usize;
        let order = f64::from_le_bytes(next(&mut input)?);
        let start = u64::from_le_bytes(next(&mut input)?) as usize;
        let end = u64::from_le_bytes(next(&mut input)?) as usize;
        if half_width != grid.half_width() || n_points != grid.n_points() || order != s || (start..end) != grid.omega()
        {
            return Err(Error::Cache(format!(
                "cache key (L={half_width}, n={n_points}, s={order}) does not match the request"
            )));
        }
        let mut data = vec![0.0; n_points * n_points];
        for v in data.iter_mut() {
            *v = f64::from_le_bytes(next(&mut input)?);
        }
        Ok(FracLaplacian {
            s,
            half_width,
            n_points,
            omega: start..end,
            matrix: DMatrix::from_vec(n_points, n_points, data),
        })
    }
}

/// `∇^t u(x, y)` on the line: `sqrt(c_{1,t}/2) (y - x) / |x - y|^{t + 3/2} (u(x) - u(y))`.
pub fn frac_gradient(grid: &Grid, u: &Field, i: usize, j: usize, t: f64) -> Result<f64> {
    check_order(t, "order t")?;
    if i == j {
        return Err(Error::SingularPoint(grid.point(i)));
    }
    let c = kernel_constant(1, t)?.value;
    let (x, y) = (grid.point(i), grid.point(j));
    let r = (y - x).abs();
    Ok((c / 2.0).sqrt() * (y - x) / r.powf(t + 1.5) * (u.values[i] - u.values[j]))
}

/// The drift coefficient `d(x, y)`, compactly supported in Ω × Ω.
///
/// On the line only the projection `d(x, y)·(x - y)` enters the equation, so the
/// solvers consume the sampled projection ([`DriftDot`]).
#[derive(Clone, Default)]
pub enum DriftCoefficient {
    #[default]
    Zero,
    /// Pointwise evaluator of `d`; it is cut off to Ω × Ω when sampled.
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Tabulated projection `d(x, y)·(x - y)`.
    Dot(DriftDot),
}

impl std::fmt::Debug for DriftCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftCoefficient::Zero => write!(f, "DriftCoefficient::Zero"),
            DriftCoefficient::Function(_) => write!(f, "DriftCoefficient::Function(..)"),
            DriftCoefficient::Dot(d) => write!(f, "DriftCoefficient::Dot({}×{})", d.rows(), d.cols()),
        }
    }
}

impl DriftCoefficient {
    pub fn from_fn(d: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        DriftCoefficient::Function(Arc::new(d))
    }

    /// Samples `d(x, y)·(x - y)` for `x` in Ω and `y` in the closure of Ω.
    pub fn dot(&self, grid: &Grid) -> DriftDot {
        match self {
            DriftCoefficient::Zero => DriftDot::zeros(grid),
            DriftCoefficient::Function(d) => DriftDot::from_fn(grid, |x, y| d(x, y) * (x - y)),
            DriftCoefficient::Dot(dot) => dot.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftCoefficient::Zero)
    }
}

/// Samples of `D(x, y) = d(x, y)·(x - y)`: rows are the Ω points, columns the closure
/// `[-1, 1]` (the two boundary columns are zero by the support condition).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDot {
    values: DMatrix<f64>,
    col_offset: usize,
}

impl DriftDot {
    pub fn zeros(grid: &Grid) -> Self {
        let closure = grid.omega_closure();
        DriftDot {
            values: DMatrix::zeros(grid.omega_len(), closure.len()),
            col_offset: closure.start,
        }
    }

    /// Samples `dot(x, y)` for `x, y` in Ω; zero whenever either point leaves Ω.
    pub fn from_fn(grid: &Grid, dot: impl Fn(f64, f64) -> f64) -> Self {
        let omega = grid.omega();
        let closure = grid.omega_closure();
        let values = DMatrix::from_fn(omega.len(), closure.len(), |r, c| {
            let j = closure.start + c;
            if grid.is_omega(j) {
                dot(grid.point(omega.start + r), grid.point(j))
            } else {
                0.0
            }
        });
        DriftDot {
            values,
            col_offset: closure.start,
        }
    }

    /// Builds from an `|Ω| × |Ω|` table indexed by Ω positions.
    pub fn from_omega_table(grid: &Grid, table: &DMatrix<f64>) -> Result<Self> {
        let n = grid.omega_len();
        if table.nrows() != n || table.ncols() != n {
            return Err(Error::Dimension {
                what: "drift table",
                expected: n,
                got: table.nrows(),
            });
        }
        let mut dot = DriftDot::zeros(grid);
        dot.values.view_mut((0, 1), (n, n)).copy_from(table);
        Ok(dot)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Value at Ω row `r` and full-grid column index `j`; zero outside the closure.
    pub fn at(&self, r: usize, j: usize) -> f64 {
        if j < self.col_offset || j >= self.col_offset + self.values.ncols() {
            0.0
        } else {
            self.values[(r, j - self.col_offset)]
        }
    }

    /// The `|Ω| × |Ω|` table on Ω × Ω.
    pub fn omega_table(&self) -> DMatrix<f64> {
        let n = self.values.nrows();
        self.values.view((0, 1), (n, n)).into_owned()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn add(&self, other: &DriftDot) -> DriftDot {
        DriftDot {
            values: &self.values + &other.values,
            col_offset: self.col_offset,
        }
    }
}

/// Precomputed kernel moments for the nonlocal lower-order terms at order `t`.
#[derive(Debug, Clone)]
pub struct NonlocalForms {
    t: f64,
    c_t: f64,
    quadratic: ProductCellWeights,
    drift: ProductCellWeights,
}

impl NonlocalForms {
    pub fn new(grid: &Grid, t: f64) -> Result<Self> {
        check_order(t, "order t")?;
        let h = grid.spacing();
        let n = grid.n_points();
        Ok(NonlocalForms {
            t,
            c_t: kernel_constant(1, t)?.value,
            quadratic: ProductCellWeights::new(h, 1.0 + 2.0 * t, n),
            drift: ProductCellWeights::new(h, t + 1.5, grid.omega_len() + 2),
        })
    }

    pub fn order(&self) -> f64 {
        self.t
    }

    pub fn c_t(&self) -> f64 {
        self.c_t
    }

    /// `∫ (u(x_i) - u(y)) (v(x_i) - v(y)) |x_i - y|^{-1-2t} dy` over the whole line.
    pub fn raw_product_integral(&self, u: &[f64], v: &[f64], i: usize) -> f64 {
        let n = u.len();
        let (ui, vi) = (u[i], v[i]);
        let h = self.quadratic.spacing;
        let right = self.quadratic.side_sum(|k| ui - u[i + k], |k| vi - v[i + k], n - i);
        let left = self.quadratic.side_sum(|k| ui - u[i - k], |k| vi - v[i - k], i + 1);
        let tail_r = (ui - u[n - 1]) * (vi - v[n - 1]);
        let tail_l = (ui - u[0]) * (vi - v[0]);
        let mut acc = right + left;
        if tail_r != 0.0 {
            acc += tail_r * self.quadratic.tail(((n - 1 - i).max(1)) as f64 * h);
        }
        if tail_l != 0.0 {
            acc += tail_l * self.quadratic.tail((i.max(1)) as f64 * h);
        }
        acc
    }

    /// Same integral with `|u(x)-u(y)| |v(x)-v(y)|`, bounded above cellwise by the product
    /// of interpolated absolute differences.
    pub fn abs_product_integral(&self, u: &[f64], v: &[f64], i: usize) -> f64 {
        let n = u.len();
        let (ui, vi) = (u[i], v[i]);
        let h = self.quadratic.spacing;
        let right = self
            .quadratic
            .side_sum(|k| (ui - u[i + k]).abs(), |k| (vi - v[i + k]).abs(), n - i);
        let left = self
            .quadratic
            .side_sum(|k| (ui - u[i - k]).abs(), |k| (vi - v[i - k]).abs(), i + 1);
        let tail_r = ((ui - u[n - 1]) * (vi - v[n - 1])).abs();
        let tail_l = ((ui - u[0]) * (vi - v[0])).abs();
        let mut acc = right + left;
        if tail_r != 0.0 {
            acc += tail_r * self.quadratic.tail(((n - 1 - i).max(1)) as f64 * h);
        }
        if tail_l != 0.0 {
            acc += tail_l * self.quadratic.tail((i.max(1)) as f64 * h);
        }
        acc
    }

    /// `h(x; u, v) = ∫ ∇^t u · ∇^t v dy` at every Ω point.
    pub fn h_bilinear(&self, grid: &Grid, u: &Field, v: &Field) -> Vec<f64> {
        let scale = self.c_t / 2.0;
        grid.omega()
            .into_par_iter()
            .map(|i| scale * self.raw_product_integral(&u.values, &v.values, i))
            .collect()
    }

    /// `h(x; u) = h(x; u, u)`.
    pub fn h_quadratic(&self, grid: &Grid, u: &Field) -> Vec<f64> {
        self.h_bilinear(grid, u, u)
    }

    /// `∫ d(x, y)·∇^t u(x, y) dy` at every Ω point, from the sampled projection `D = d·(x - y)`.
    ///
    /// On the line the integrand is `-sqrt(c_t/2) D(x,y) (u(x) - u(y)) |x - y|^{-t-3/2}`.
    pub fn drift_integral(&self, grid: &Grid, dot: &DriftDot, u: &Field) -> Vec<f64> {
        let scale = -(self.c_t / 2.0).sqrt();
        let omega = grid.omega();
        let closure = grid.omega_closure();
        omega
            .clone()
            .into_par_iter()
            .map(|i| {
                let r = i - omega.start;
                scale * self.drift_row(dot, r, i, &closure, &u.values)
            })
            .collect()
    }

    fn drift_row(&self, dot: &DriftDot, r: usize, i: usize, closure: &std::ops::Range<usize>, u: &[f64]) -> f64 {
        let ui = u[i];
        let right = self
            .drift
            .side_sum(|k| dot.at(r, i + k), |k| ui - u[i + k], closure.end - i);
        let left = self
            .drift
            .side_sum(|k| dot.at(r, i - k), |k| ui - u[i - k], i - closure.start + 1);
        right + left
    }

    /// `∫_Ω β(y) (u(x_i) - u(y)) |x_i - y|^{-t-3/2} dy · (-sqrt(c_t/2))` for a profile `β`
    /// sampled on the grid (used to expand the drift in a basis).
    pub fn drift_profile_integral(&self, grid: &Grid, profile: &[f64], u: &Field) -> Vec<f64> {
        let scale = -(self.c_t / 2.0).sqrt();
        let closure = grid.omega_closure();
        let inside = |j: usize| if grid.is_omega(j) { profile[j] } else { 0.0 };
        grid.omega()
            .into_par_iter()
            .map(|i| {
                let ui = u.values[i];
                let right = self
                    .drift
                    .side_sum(|k| inside(i + k), |k| ui - u.values[i + k], closure.end - i);
                let left = self
                    .drift
                    .side_sum(|k| inside(i - k), |k| ui - u.values[i - k], i - closure.start + 1);
                scale * (right + left)
            })
            .collect()
    }

    /// `ψ(x; d, u) = u(x)^m ∫ d(x,y)·∇^t u(x,y) dy` on Ω.
    pub fn psi_drift(&self, grid: &Grid, dot: &DriftDot, u: &Field, m: u32) -> Result<Vec<f64>> {
        if m < 2 {
            return Err(Error::Exponent(m));
        }
        let integral = self.drift_integral(grid, dot, u);
        Ok(grid
            .omega()
            .zip(integral)
            .map(|(i, v)| u.values[i].powi(m as i32) * v)
            .collect())
    }
}

/// `h(x; u, v)` on Ω, checking `t < s` (the pointwise bound needs it).
pub fn h_bilinear(grid: &Grid, u: &Field, v: &Field, t: f64, s: f64) -> Result<Vec<f64>> {
    check_order(s, "order s")?;
    if t >= s {
        return Err(Error::Order(format!("t = {t} must be smaller than s = {s}")));
    }
    Ok(NonlocalForms::new(grid, t)?.h_bilinear(grid, u, v))
}

/// `ψ(x; d, u)` on Ω.
pub fn psi_drift(grid: &Grid, d: &DriftCoefficient, u: &Field, m: u32, t: f64) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::Exponent(m));
    }
    NonlocalForms::new(grid, t)?.psi_drift(grid, &d.dot(grid), u, m)
}

/// Discrete Hölder seminorm: `max_{i≠j} |u_i - u_j| / |x_i - x_j|^s` by a full pair scan.
pub fn holder_seminorm(grid: &Grid, u: &Field, s: f64) -> f64 {
    let n = u.len();
    let h = grid.spacing();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0_f64;
            for j in i + 1..n {
                let q = (u.values[i] - u.values[j]).abs() / ((j - i) as f64 * h).powf(s);
                best = best.max(q);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Discrete `C^s` norm: sup norm plus Hölder seminorm.
pub fn holder_norm(grid: &Grid, u: &Field, s: f64) -> f64 {
    u.sup_norm() + holder_seminorm(grid, u, s)
}

/// Right-hand side factor `R^{2s-2t}/(2s-2t) + 2 R^{-2t}/t` of the pointwise bound.
pub fn bound_radius_factor(s: f64, t: f64, radius: f64) -> f64 {
    radius.powf(2.0 * s - 2.0 * t) / (2.0 * s - 2.0 * t) + 2.0 * radius.powf(-2.0 * t) / t
}

/// The radius minimizing [`bound_radius_factor`]: `R* = 4^{1/(2s)}`.
pub fn bound_optimal_radius(s: f64) -> f64 {
    4f64.powf(1.0 / (2.0 * s))
}

/// Constant in `‖h(u1) - h(u2)‖ ≤ C ‖u1 - u2‖_{C^s} ‖u1 + u2‖_{C^s}` obtained from the
/// pointwise bound at `R = 1` with `C_n = 2`.
pub fn discrepancy_constant(s: f64, t: f64) -> Result<f64> {
    let c = kernel_constant(1, t)?.value;
    Ok(c / 2.0 * SPHERE_MEASURE_1D * bound_radius_factor(s, t, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates both sides of the pointwise bound on
/// `∫ |u(x)-u(y)| |v(x)-v(y)| / |x-y|^{1+2t} dy` over `x` in Ω.
pub fn check_gradient_bound(
    grid: &Grid,
    u: &Field,
    v: &Field,
    s: f64,
    t: f64,
    radius: f64,
) -> Result<GradientBoundCheck> {
    check_order(s, "order s")?;
    if !(t > 0.0 && t < s) {
        return Err(Error::Order(format!("need 0 < t < s, got t = {t}, s = {s}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("radius {radius} must be positive")));
    }
    let forms = NonlocalForms::new(grid, t)?;
    let lhs = grid
        .omega()
        .into_par_iter()
        .map(|i| forms.abs_product_integral(&u.values, &v.values, i))
        .reduce(|| 0.0, f64::max);
    let rhs = SPHERE_MEASURE_1D * holder_norm(grid, u, s) * holder_norm(grid, v, s) * bound_radius_factor(s, t, radius);
    Ok(GradientBoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}
