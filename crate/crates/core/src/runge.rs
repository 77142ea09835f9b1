//! Exterior controls whose harmonic extensions approximate a target on Ω.
//!
//! Approximation by harmonic extensions is only a density statement, so controls are
//! computed by Tikhonov-regularized least squares over the nodal values on W₁ and the
//! achieved residual is always reported.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::solvers::Model;

pub const DEFAULT_ALPHAS: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];

/// The control-to-domain map `f|_{W₁} ↦ (solve_exterior f)|_Ω` as a dense matrix.
#[derive(Debug, Clone)]
pub struct ControlMap {
    matrix: DMatrix<f64>,
    gram: DMatrix<f64>,
    columns: std::ops::Range<usize>,
}

impl ControlMap {
    pub fn new(model: &Model) -> Result<Self> {
        let grid = model.grid();
        let cols = grid.w1();
        let omega = grid.omega();
        let a = model.operator().matrix();
        let rhs = -a
            .view((omega.start, cols.start), (omega.len(), cols.len()))
            .into_owned();
        let matrix = model.solve_source_matrix(&rhs)?;
        let gram = matrix.transpose() * &matrix;
        Ok(ControlMap {
            matrix,
            gram,
            columns: cols,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Embeds W₁ nodal values into an exterior field.
    pub fn control_field(&self, grid: &Grid, values: &[f64]) -> Field {
        let mut f = grid.zeros();
        f.values[self.columns.clone()].copy_from_slice(values);
        f
    }

    /// Ω values of the harmonic extension of the control.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(values))
            .iter()
            .copied()
            .collect()
    }
}

/// A target on Ω together with the regularization weight.
#[derive(Debug, Clone)]
pub struct RungeProblem {
    pub target: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct RungeSolution {
    /// Control as an exterior field supported in W₁.
    pub control: Field,
    /// Ω values of its harmonic extension.
    pub achieved: Vec<f64>,
    /// `‖achieved - target‖_{L²(Ω)}`.
    pub residual: f64,
    /// Norm of the objective gradient at the returned control, relative to
    /// `‖SᵀS + αI‖ ‖f‖ + ‖Sᵀ target‖`.
    pub gradient_norm: f64,
}

/// Minimizes `‖S f - target‖² + α‖f‖²` (both discrete `L²`) over W₁ nodal values.
pub fn solve_runge(model: &Model, map: &ControlMap, problem: &RungeProblem) -> Result<RungeSolution> {
    let grid = model.grid();
    if !(problem.alpha > 0.0) {
        return Err(Error::Regularization(problem.alpha));
    }
    if problem.target.len() != grid.omega_len() {
        return Err(Error::Dimension {
            what: "Runge target",
            expected: grid.omega_len(),
            got: problem.target.len(),
        });
    }
    if !problem.target.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Runge target"));
    }
    let target = DVector::from_column_slice(&problem.target);
    let rhs = map.matrix.transpose() * &target;
    let mut normal = map.gram.clone();
    for i in 0..normal.nrows() {
        normal[(i, i)] += problem.alpha;
    }
    let chol = normal
        .clone()
        .cholesky()
        .ok_or(Error::Conditioning { alpha: problem.alpha })?;
    let f = chol.solve(&rhs);
    if !f.iter().all(|v| v.is_finite()) {
        return Err(Error::Conditioning { alpha: problem.alpha });
    }
    let gradient = &normal * &f - &rhs;
    let scale = (normal.norm() * f.norm() + rhs.norm()).max(f64::MIN_POSITIVE);
    let achieved: Vec<f64> = (&map.matrix * &f).iter().copied().collect();
    let diff: Vec<f64> = achieved.iter().zip(&problem.target).map(|(a, b)| a - b).collect();
    Ok(RungeSolution {
        control: map.control_field(grid, f.as_slice()),
        residual: grid.l2_omega(&diff),
        achieved,
        gradient_norm: gradient.norm() / scale,
    })
}

/// One row of an α-sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub residual: f64,
    pub control_norm: f64,
}

/// Solves for every `α` in `alphas` (in parallel) and returns the rows in the given order.
pub fn alpha_sweep(
    model: &Model,
    map: &ControlMap,
    target: &[f64],
    alphas: &[f64],
) -> Result<Vec<(SweepRow, RungeSolution)>> {
    let grid = model.grid();
    alphas
        .par_iter()
        .map(|&alpha| {
            let sol = solve_runge(
                model,
                map,
                &RungeProblem {
                    target: target.to_vec(),
                    alpha,
                },
            )?;
            let control_norm = grid.l2_omega(&grid.restrict(&sol.control, crate::Region::W1));
            Ok((
                SweepRow {
                    alpha,
                    residual: sol.residual,
                    control_norm,
                },
                sol,
            ))
        })
        .collect()
}

/// The smallest `α` of the sweep whose normal equations factor.
pub fn best_of_sweep(model: &Model, map: &ControlMap, target: &[f64], alphas: &[f64]) -> Result<RungeSolution> {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut last = Error::Regularization(f64::NAN);
    for alpha in sorted {
        match solve_runge(
            model,
            map,
            &RungeProblem {
                target: target.to_vec(),
                alpha,
            },
        ) {
            Ok(sol) => return Ok(sol),
            Err(e) => last = e,
        }
    }
    Err(last)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,residual,control_norm\n");
    for r in rows {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            r.alpha, r.residual, r.control_norm
        ));
    }
    out
}

/// The piecewise test function attached to `x₀`, with its sign partition.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionPhi {
    pub x0: f64,
    /// `φ` on the Ω points.
    pub values: Vec<f64>,
    /// `+1` on `A₊`, `-1` on `A₋`, `0` elsewhere, per Ω point.
    pub partition: Vec<i8>,
}

/// `φ(y) = 1/(1+|x₀-y|²)` where `sign(x₀, y) > 0`, `(1+2|x₀-y|²)/(1+|x₀-y|²)` where it is
/// negative and `1` elsewhere, on the Ω points.
pub fn build_phi_x0(grid: &Grid, x0: f64, sign: impl Fn(f64, f64) -> f64) -> Result<TestFunctionPhi> {
    if !(x0.abs() < 1.0) {
        return Err(Error::Config(format!("x0 = {x0} must lie in the domain (-1, 1)")));
    }
    let mut values = Vec::with_capacity(grid.omega_len());
    let mut partition = Vec::with_capacity(grid.omega_len());
    for i in grid.omega() {
        let y = grid.point(i);
        let r2 = (x0 - y).powi(2);
        let sg = if y == x0 { 0.0 } else { sign(x0, y) };
        if sg > 0.0 {
            values.push(1.0 / (1.0 + r2));
            partition.push(1);
        } else if sg < 0.0 {
            values.push((1.0 + 2.0 * r2) / (1.0 + r2));
            partition.push(-1);
        } else {
            values.push(1.0);
            partition.push(0);
        }
    }
    Ok(TestFunctionPhi { x0, values, partition })
}
