//! Exterior measurements `Λ(f) = (-Δ)^s u_f` outside Ω.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Region};
use crate::solvers::{CoefficientSet, Model, PicardOptions};

/// Values of `(-Δ)^s u_f` at the exterior grid points, in increasing index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DnMeasurement {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl DnMeasurement {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Measurement as a full-grid field that vanishes on Ω.
    pub fn to_field(&self, grid: &Grid) -> Field {
        let mut f = grid.zeros();
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            f.values[i] = v;
        }
        f
    }

    /// Values on W₂.
    pub fn restrict_w2(&self, grid: &Grid) -> Vec<f64> {
        grid.restrict(&self.to_field(grid), Region::W2)
    }

    /// `h Σ Λ(f)_j φ_j` over the exterior points.
    pub fn pair(&self, grid: &Grid, phi: &Field) -> f64 {
        let h = grid.spacing();
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, v)| v * phi.values[i])
            .sum::<f64>()
            * h
    }

    /// Adds independent `N(0, σ²)` noise to every value, reproducibly from `seed`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("noise level {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(DnMeasurement {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v + normal.sample(&mut rng)).collect(),
        })
    }

    /// CSV with columns `x, lambda_value, region`, region being `w2` or `exterior`.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let w2 = grid.w2();
        let mut out = String::from("x,lambda_value,region\n");
        for (&i, v) in self.indices.iter().zip(&self.values) {
            let region = if w2.contains(&i) { "w2" } else { "exterior" };
            out.push_str(&format!("{:.16e},{:.16e},{}\n", grid.point(i), v, region));
        }
        out
    }
}

/// Exterior rows of the quadrature applied to an already computed solution.
pub fn measure(model: &Model, u: &Field) -> DnMeasurement {
    let grid = model.grid();
    let indices = grid.exterior_indices();
    let values = indices
        .iter()
        .map(|&i| model.operator().apply_row(i, &u.values))
        .collect();
    DnMeasurement { indices, values }
}

/// Solves the forward problem for `f` and measures `(-Δ)^s u_f` outside Ω.
pub fn dn_direct(model: &Model, f: &Field, coeffs: &CoefficientSet, opts: &PicardOptions) -> Result<DnMeasurement> {
    let (u, _) = model.solve_nonlinear(f, coeffs, opts)?;
    Ok(measure(model, &u))
}

/// `⟨Λ(f), φ⟩` through the symmetric bilinear form of the operator,
/// `h Σ_i u_i (A φ)_i` over the whole grid, plus the domain term `h Σ_Ω (q + a) φ`
/// (zero for exterior test functions).
pub fn dn_pairing(model: &Model, f: &Field, coeffs: &CoefficientSet, phi: &Field, opts: &PicardOptions) -> Result<f64> {
    let grid = model.grid();
    grid.check_field(phi, "test function")?;
    if grid.omega().any(|i| phi.values[i] != 0.0) {
        return Err(Error::ExteriorSupport(
            grid.omega().map(|i| phi.values[i].abs()).fold(0.0, f64::max),
        ));
    }
    let (u, _) = model.solve_nonlinear(f, coeffs, opts)?;
    Ok(pairing_of_solution(model, &u, phi))
}

/// The bilinear-form pairing for a known solution `u`.
pub fn pairing_of_solution(model: &Model, u: &Field, phi: &Field) -> f64 {
    let a_phi = model.operator().apply(phi);
    let h = model.grid().spacing();
    h * u.values.iter().zip(&a_phi).map(|(a, b)| a * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_ops::DriftCoefficient;

    fn setup() -> (Model, CoefficientSet, Field) {
        let grid = Grid::build(4.0, 257, (1.5, 2.5), (-2.5, -1.5)).unwrap();
        let model = Model::new(grid, 0.75, 0.25).unwrap();
        let g = model.grid();
        let d = DriftCoefficient::from_fn(|x, y| 0.5 * (1.0 - x * x) * (1.0 + 0.5 * y));
        let a3 = |x: f64| 1.0 + x;
        let coeffs = CoefficientSet::from_fns(g, 2, 6, |x| 1.0 + x * x / 2.0, &d, &[(3, &a3)]).unwrap();
        let f = g.sample_on(Region::W1, |x| {
            ((x - 1.5) * (2.5 - x)).max(0.0).powi(2) * 16.0 * (2.0 - x)
        });
        (model, coeffs, f)
    }

    #[test]
    fn zero_data_gives_zero_measurement() {
        let (model, coeffs, _) = setup();
        let m = dn_direct(&model, &model.grid().zeros(), &coeffs, &PicardOptions::default()).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pairing_matches_direct_rows() {
        let (model, coeffs, f) = setup();
        let g = model.grid();
        let opts = PicardOptions::default();
        let m = dn_direct(&model, &f, &coeffs, &opts).unwrap();
        let phi = g.sample_on(Region::W2, |x| (3.0 * x).sin());
        let p = dn_pairing(&model, &f, &coeffs, &phi, &opts).unwrap();
        let q = m.pair(g, &phi);
        assert!((p - q).abs() <= 1e-8 * q.abs(), "{p} {q}");
        let bad = g.sample_omega(|_| 1.0);
        assert!(dn_pairing(&model, &f, &coeffs, &bad, &opts).is_err());
    }

    #[test]
    fn measurement_is_nonlinear_in_data() {
        let (model, coeffs, f) = setup();
        let opts = PicardOptions::default();
        let m1 = dn_direct(&model, &f, &coeffs, &opts).unwrap();
        let m2 = dn_direct(&model, &f.scaled(2.0), &coeffs, &opts).unwrap();
        let dev = m1
            .values()
            .iter()
            .zip(m2.values())
            .map(|(a, b)| (2.0 * a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev > 1e-8);
    }

    #[test]
    fn noise_is_reproducible() {
        let (model, coeffs, f) = setup();
        let m = dn_direct(&model, &f, &coeffs, &PicardOptions::default()).unwrap();
        assert_eq!(m.with_noise(1e-3, 7).unwrap(), m.with_noise(1e-3, 7).unwrap());
        assert_ne!(m.with_noise(1e-3, 7).unwrap(), m);
        let csv = m.to_csv(model.grid());
        assert!(csv.starts_with("x,lambda_value,region\n") && csv.contains(",w2\n"));
    }
}
