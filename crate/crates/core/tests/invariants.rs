use std::sync::OnceLock;

use proptest::prelude::*;

use nlfrac::config::{ExperimentConfig, Expr};
use nlfrac::fractional_ops::{DriftCoefficient, FracLaplacian};
use nlfrac::runge::{alpha_sweep, ControlMap};
use nlfrac::solvers::{CoefficientSet, Model, PicardOptions};
use nlfrac::{Grid, Region};

fn grid() -> Grid {
    Grid::build(4.0, 129, (1.5, 2.5), (-2.5, -1.5)).unwrap()
}

fn model() -> &'static (Model, ControlMap) {
    static MODEL: OnceLock<(Model, ControlMap)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let m = Model::new(grid(), 0.75, 0.25).unwrap();
        let map = ControlMap::new(&m).unwrap();
        (m, map)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_kills_constants(s in 0.1f64..0.95, c in -5.0f64..5.0) {
        let g = grid();
        let a = FracLaplacian::assemble(&g, s).unwrap();
        let worst = a.apply(&g.sample(|_| c)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(worst <= 1e-9 * (1.0 + c.abs()), "{worst}");
    }

    #[test]
    fn operator_is_linear(s in 0.1f64..0.95, p in 0.5f64..4.0, q in -3.0f64..3.0) {
        let g = grid();
        let a = FracLaplacian::assemble(&g, s).unwrap();
        let u = g.sample_omega(|x| (p * x).sin());
        let v = g.sample_omega(|x| 1.0 - x * x);
        let lhs = a.apply(&u.axpy(q, &v));
        let (au, av) = (a.apply(&u), a.apply(&v));
        for i in 0..g.n_points() {
            prop_assert!((lhs[i] - au[i] - q * av[i]).abs() <= 1e-10 * (1.0 + lhs[i].abs()));
        }
    }

    #[test]
    fn quadratic_form_is_positive(s in 0.1f64..0.95, k in 1usize..6) {
        let g = grid();
        let a = FracLaplacian::assemble(&g, s).unwrap();
        let u = g.sample_omega(|x| (k as f64 * std::f64::consts::PI * (x + 1.0) / 2.0).sin());
        let au = a.apply(&u);
        let form: f64 = g.omega().map(|i| u.values[i] * au[i]).sum();
        prop_assert!(form > 0.0);
    }

    #[test]
    fn runge_residual_is_monotone(w in prop::collection::vec(-1.0f64..1.0, 4)) {
        let (m, map) = model();
        let g = m.grid();
        let target: Vec<f64> = g
            .omega()
            .map(|i| {
                let x = g.point(i);
                w[0] + w[1] * x + w[2] * (3.0 * x).sin() + w[3] * x.abs()
            })
            .collect();
        let alphas = [1e-2, 1e-4, 1e-6, 1e-8];
        let rows = alpha_sweep(m, map, &target, &alphas).unwrap();
        for pair in rows.windows(2) {
            prop_assert!(pair[1].0.residual <= pair[0].0.residual + 1e-12);
        }
    }

    #[test]
    fn nonnegative_data_gives_positive_solution(
        c in 1.6f64..2.4,
        w in 0.05f64..0.4,
        h in 0.01f64..3.0,
    ) {
        let (m, _) = model();
        let g = m.grid();
        let a3 = |x: f64| 1.0 + x;
        let coeffs = CoefficientSet::from_fns(g, 2, 4, |_| 0.0, &DriftCoefficient::Zero, &[(3, &a3)]).unwrap();
        let f = g.sample_on(Region::W1, |x| h * (1.0 - ((x - c) / w).powi(2)).max(0.0).powi(2));
        prop_assume!(f.sup_norm() > 0.0);
        let (u, _) = m.solve_nonlinear(&f, &coeffs, &PicardOptions::default()).unwrap();
        prop_assert!(g.omega().all(|i| u.values[i] > 0.0));
    }

    #[test]
    fn expression_matches_closure(a in -3.0f64..3.0, b in -3.0f64..3.0, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let e = Expr::parse(&format!("({a}) * x^2 + ({b}) * sin(y) - x*y")).unwrap();
        let want = a * x * x + b * y.sin() - x * y;
        prop_assert!((e.eval(x, y, 0.0) - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn overrides_land_in_the_config(n in 33usize..300, seed in 0u64..=i64::MAX as u64, noise in 0.0f64..1.0) {
        let c = ExperimentConfig::from_toml_str(
            "",
            &[format!("grid.n_points={n}"), format!("seed={seed}"), format!("noise={noise:e}")],
        )
        .unwrap();
        prop_assert_eq!(c.grid.n_points, n);
        prop_assert_eq!(c.seed, seed);
        prop_assert_eq!(c.noise, noise);
        let text = toml::to_string(&c).unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml_str(&text, &[]).unwrap(), c);
    }
}

#[test]
fn unknown_variables_are_rejected() {
    assert!(Expr::parse("x + w").is_err());
}
