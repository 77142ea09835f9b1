//! Uniform discretization of the truncated line `[-L, L]`.
//!
//! The physical domain is fixed to `Ω = (-1, 1)`. Everything else on the line is
//! exterior, and two open exterior windows are labeled: `W1` carries the controls
//! (exterior Dirichlet data) and `W2` is where the DN map is observed.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of grid points.
pub const MIN_POINTS: usize = 16;

/// A labeled subset of grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Omega,
    W1,
    W2,
    Exterior,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Omega => "omega",
            Region::W1 => "w1",
            Region::W2 => "w2",
            Region::Exterior => "exterior",
        }
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Region::Omega),
            "w1" => Ok(Region::W1),
            "w2" => Ok(Region::W2),
            "exterior" => Ok(Region::Exterior),
            other => Err(Error::Config(format!("unknown region '{other}'"))),
        }
    }
}

/// Construction options that relax the default window rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GridOptions {
    /// Accept `W1 == W2` (identical intervals). Partial overlap is always rejected.
    pub allow_shared_window: bool,
}

/// Uniform grid on `[-L, L]` with labeled subregions. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    n_points: usize,
    spacing: f64,
    omega: Range<usize>,
    w1: Range<usize>,
    w2: Range<usize>,
    w1_interval: (f64, f64),
    w2_interval: (f64, f64),
}

fn check_window(name: &str, (a, b): (f64, f64), half_width: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::Config(format!(
            "{name} = ({a}, {b}) is not a nonempty open interval"
        )));
    }
    if a.abs() >= half_width || b.abs() >= half_width {
        return Err(Error::Config(format!(
            "{name} = ({a}, {b}) must lie inside (-L, L) with L = {half_width}"
        )));
    }
    let outside_omega = b <= -1.0 || a >= 1.0;
    if !outside_omega {
        return Err(Error::Config(format!(
            "{name} = ({a}, {b}) intersects the closed domain [-1, 1]"
        )));
    }
    Ok(())
}

impl Grid {
    /// Builds a grid with disjoint windows.
    pub fn build(half_width: f64, n_points: usize, w1: (f64, f64), w2: (f64, f64)) -> Result<Self> {
        Self::build_with(half_width, n_points, w1, w2, GridOptions::default())
    }

    pub fn build_with(
        half_width: f64,
        n_points: usize,
        w1: (f64, f64),
        w2: (f64, f64),
        options: GridOptions,
    ) -> Result<Self> {
        if !half_width.is_finite() || half_width <= 1.0 {
            return Err(Error::Config(format!(
                "grid.L = {half_width} must be finite and exceed 1"
            )));
        }
        check_window("grid.w1", w1, half_width)?;
        check_window("grid.w2", w2, half_width)?;
        let identical = w1 == w2;
        let overlap = w1.0 < w2.1 && w2.0 < w1.1;
        if overlap && !(identical && options.allow_shared_window) {
            return Err(Error::Config(format!("grid.w1 = {w1:?} and grid.w2 = {w2:?} overlap")));
        }
        if n_points < MIN_POINTS {
            return Err(Error::Resolution(format!(
                "grid.n_points = {n_points} is below the minimum {MIN_POINTS}"
            )));
        }

        let spacing = 2.0 * half_width / (n_points - 1) as f64;
        let x = |i: usize| -half_width + i as f64 * spacing;
        let slack = 1e-9 * spacing;
        let open_range = |a: f64, b: f64| -> Range<usize> {
            let mut start = None;
            let mut end = 0;
            for i in 0..n_points {
                let xi = x(i);
                if xi > a + slack && xi < b - slack {
                    start.get_or_insert(i);
                    end = i + 1;
                }
            }
            match start {
                Some(s) => s..end,
                None => 0..0,
            }
        };

        let omega = open_range(-1.0, 1.0);
        let w1_range = open_range(w1.0, w1.1);
        let w2_range = open_range(w2.0, w2.1);
        if omega.len() < 3 {
            return Err(Error::Resolution(format!(
                "only {} grid points fall inside the domain",
                omega.len()
            )));
        }
        for (name, r) in [("grid.w1", &w1_range), ("grid.w2", &w2_range)] {
            if r.len() < 2 {
                return Err(Error::Resolution(format!(
                    "{name} resolves to {} grid points (need at least 2)",
                    r.len()
                )));
            }
        }

        Ok(Grid {
            half_width,
            n_points,
            spacing,
            omega,
            w1: w1_range,
            w2: w2_range,
            w1_interval: w1,
            w2_interval: w2,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    pub fn omega(&self) -> Range<usize> {
        self.omega.clone()
    }

    pub fn w1(&self) -> Range<usize> {
        self.w1.clone()
    }

    pub fn w2(&self) -> Range<usize> {
        self.w2.clone()
    }

    pub fn w1_interval(&self) -> (f64, f64) {
        self.w1_interval
    }

    pub fn w2_interval(&self) -> (f64, f64) {
        self.w2_interval
    }

    /// Indices of `[-1, 1]` on the grid: Ω plus the neighbouring exterior point on each side.
    pub fn omega_closure(&self) -> Range<usize> {
        self.omega.start - 1..self.omega.end + 1
    }

    pub fn omega_len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_omega(&self, i: usize) -> bool {
        self.omega.contains(&i)
    }

    /// Exterior indices in ascending order.
    pub fn exterior_indices(&self) -> Vec<usize> {
        (0..self.omega.start).chain(self.omega.end..self.n_points).collect()
    }

    pub fn region_indices(&self, region: Region) -> Vec<usize> {
        match region {
            Region::Omega => self.omega().collect(),
            Region::W1 => self.w1().collect(),
            Region::W2 => self.w2().collect(),
            Region::Exterior => self.exterior_indices(),
        }
    }

    /// Samples `f` at every grid point.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new((0..self.n_points).map(|i| f(self.point(i))).collect())
    }

    /// Samples `f` on Ω and sets every exterior value to zero.
    pub fn sample_omega(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut v = vec![0.0; self.n_points];
        for i in self.omega() {
            v[i] = f(self.point(i));
        }
        Field::new(v)
    }

    /// Samples `f` on the open window `region` and sets every other value to zero.
    pub fn sample_on(&self, region: Region, f: impl Fn(f64) -> f64) -> Field {
        let mut v = vec![0.0; self.n_points];
        for i in self.region_indices(region) {
            v[i] = f(self.point(i));
        }
        Field::new(v)
    }

    pub fn zeros(&self) -> Field {
        Field::new(vec![0.0; self.n_points])
    }

    /// Restriction of a full-grid field to a labeled region, order preserved.
    pub fn restrict(&self, field: &Field, region: Region) -> Vec<f64> {
        debug_assert_eq!(field.len(), self.n_points);
        match region {
            Region::Omega => field.values[self.omega()].to_vec(),
            Region::W1 => field.values[self.w1()].to_vec(),
            Region::W2 => field.values[self.w2()].to_vec(),
            Region::Exterior => self.exterior_indices().into_iter().map(|i| field.values[i]).collect(),
        }
    }

    /// Embeds Ω values into a full-grid field that vanishes on the exterior.
    pub fn extend_omega(&self, values: &[f64]) -> Result<Field> {
        if values.len() != self.omega_len() {
            return Err(Error::Dimension {
                what: "domain values",
                expected: self.omega_len(),
                got: values.len(),
            });
        }
        let mut v = vec![0.0; self.n_points];
        v[self.omega()].copy_from_slice(values);
        Ok(Field::new(v))
    }

    pub fn check_field(&self, field: &Field, what: &'static str) -> Result<()> {
        if field.len() != self.n_points {
            return Err(Error::Dimension {
                what,
                expected: self.n_points,
                got: field.len(),
            });
        }
        if !field.is_finite() {
            return Err(Error::NonFinite(what));
        }
        Ok(())
    }

    /// Discrete `L²(Ω)` norm, `sqrt(h Σ v²)`.
    pub fn l2_omega(&self, values: &[f64]) -> f64 {
        (self.spacing * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// A real function sampled at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field::new(self.values.iter().map(|v| alpha * v).collect())
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Field) -> Field {
        Field::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        )
    }
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Grid {
        Grid::build(4.0, 257, (1.5, 2.5), (-2.5, -1.5)).unwrap()
    }

    #[test]
    fn builds_reference_grid() {
        let g = reference();
        assert_eq!(g.spacing(), 1.0 / 32.0);
        assert_eq!(g.point(0), -4.0);
        assert_eq!(g.point(256), 4.0);
        assert!(g.omega().all(|i| g.point(i).abs() < 1.0));
        assert_eq!(g.omega_len(), 63);
        assert!(g.w1().all(|i| g.point(i) > 1.5 && g.point(i) < 2.5));
        assert!(g.w2().all(|i| g.point(i) > -2.5 && g.point(i) < -1.5));
        assert_eq!(g.w1().len(), 31);
    }

    #[test]
    fn partition_is_exact() {
        let g = reference();
        let mut seen = vec![0; g.n_points()];
        for i in g.omega().chain(g.exterior_indices()) {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        let ext = g.exterior_indices();
        assert!(g.w1().all(|i| ext.contains(&i)));
        assert!(g.w2().all(|i| ext.contains(&i)));
    }

    #[test]
    fn window_touching_domain_is_rejected() {
        let err = Grid::build(4.0, 257, (0.5, 1.5), (-2.5, -1.5)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let err = Grid::build(2.0, 129, (1.25, 1.75), (1.25, 1.75)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = Grid::build(2.0, 129, (1.25, 1.75), (1.5, 1.9)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn shared_window_is_an_option() {
        let opts = GridOptions {
            allow_shared_window: true,
        };
        let g = Grid::build_with(2.0, 129, (1.25, 1.75), (1.25, 1.75), opts).unwrap();
        assert_eq!(g.w1(), g.w2());
        let err = Grid::build_with(2.0, 129, (1.25, 1.75), (1.5, 1.9), opts).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn too_coarse_is_a_resolution_error() {
        assert!(matches!(
            Grid::build(4.0, 8, (1.5, 2.5), (-2.5, -1.5)),
            Err(Error::Resolution(_))
        ));
        // 17 points on [-4, 4]: h = 0.5 leaves a single point inside (1.5, 2.5).
        assert!(matches!(
            Grid::build(4.0, 17, (1.5, 2.5), (-2.5, -1.5)),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn window_outside_line_is_rejected() {
        assert!(matches!(
            Grid::build(2.0, 129, (1.5, 2.5), (-1.9, -1.2)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn restrict_examples() {
        let g = reference();
        let ones = g.sample(|_| 1.0);
        assert!(g.restrict(&ones, Region::Omega).iter().all(|&v| v == 1.0));
        let f = g.sample_on(Region::W1, |x| (x - 2.0).cos());
        assert!(g.restrict(&f, Region::W2).iter().all(|&v| v == 0.0));
        assert!(g.restrict(&g.zeros(), Region::Exterior).iter().all(|&v| v == 0.0));
    }
}
