//! Experiment pipelines behind the command line: each mode turns a configuration into a
//! set of named output files plus a JSON summary, and [`write_artifacts`] stores them
//! with a checksummed manifest.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{sha256_hex, ExperimentConfig};
use crate::dn_map::dn_direct;
use crate::error::{Error, Result};
use crate::fractional_ops::check_gradient_bound;
use crate::grid::{Field, Grid, Region};
use crate::inversion::{
    drift_error, exterior_data_inversion, recover_a3_and_drift_joint, recover_a_higher, recover_b, relative_l2,
    DriftOptions, ExteriorOptions, ExteriorProbe, MaskedField, Mode, RecoveryResult,
};
use crate::linearization::{divided_difference_jets, solve_hierarchy, JetField};
use crate::runge::{alpha_sweep, sweep_csv, ControlMap};
use crate::solvers::{CoefficientSet, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Forward,
    Dn,
    Linearize,
    Runge,
    InvertOracle,
    InvertExterior,
    VerifyBounds,
}

impl RunMode {
    pub const ALL: [RunMode; 7] = [
        RunMode::Forward,
        RunMode::Dn,
        RunMode::Linearize,
        RunMode::Runge,
        RunMode::InvertOracle,
        RunMode::InvertExterior,
        RunMode::VerifyBounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Forward => "forward",
            RunMode::Dn => "dn",
            RunMode::Linearize => "linearize",
            RunMode::Runge => "runge",
            RunMode::InvertOracle => "invert-oracle",
            RunMode::InvertExterior => "invert-exterior",
            RunMode::VerifyBounds => "verify-bounds",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = RunMode::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("mode {s:?} is not one of {}", names.join(", ")))
        })
    }
}

/// Output files (name, contents) and summary values of one run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Map<String, Value>,
}

impl Artifacts {
    fn file(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.into(),
            serde_json::to_value(value).expect("summary value serializes"),
        );
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub mode: RunMode,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestEntry>,
    pub summary: Map<String, Value>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Runs one experiment.
pub fn run(config: &ExperimentConfig, mode: RunMode) -> Result<Artifacts> {
    config.validate()?;
    match mode {
        RunMode::Forward => forward(config),
        RunMode::Dn => dn(config),
        RunMode::Linearize => linearize(config),
        RunMode::Runge => runge(config),
        RunMode::InvertOracle => invert_oracle(config),
        RunMode::InvertExterior => invert_exterior(config),
        RunMode::VerifyBounds => verify_bounds(config),
    }
}

/// Writes the files and `manifest.json` into `dir`.
pub fn write_artifacts(
    dir: &Path,
    config: &ExperimentConfig,
    mode: RunMode,
    artifacts: &Artifacts,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(artifacts.files.len());
    for (name, contents) in &artifacts.files {
        std::fs::write(dir.join(name), contents)?;
        files.push(ManifestEntry {
            name: name.clone(),
            sha256: sha256_hex(contents),
            bytes: contents.len(),
        });
    }
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        mode,
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        files,
        summary: artifacts.summary.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST_NAME), text + "\n")?;
    Ok(manifest)
}

fn e16(v: f64) -> String {
    format!("{v:.16e}")
}

fn omega_csv(grid: &Grid, columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("x");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (r, i) in grid.omega().enumerate() {
        out.push_str(&e16(grid.point(i)));
        for (_, col) in columns {
            out.push(',');
            out.push_str(&e16(col[r]));
        }
        out.push('\n');
    }
    out
}

fn masked_csv(grid: &Grid, field: &MaskedField, truth: Option<&[f64]>) -> String {
    let mut out = String::from(if truth.is_some() {
        "x,value,trusted,truth\n"
    } else {
        "x,value,trusted\n"
    });
    for (r, i) in grid.omega().enumerate() {
        out.push_str(&format!(
            "{},{},{}",
            e16(grid.point(i)),
            e16(field.values[r]),
            u8::from(field.trusted[r])
        ));
        if let Some(t) = truth {
            out.push_str(&format!(",{}", e16(t[r])));
        }
        out.push('\n');
    }
    out
}

fn forward(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let coeffs = config.coefficients(grid)?;
    let probes = config.probes(grid)?;
    let opts = config.picard();
    let solved: Vec<(Field, Field, crate::solvers::SolveReport)> = probes
        .par_iter()
        .map(|f| {
            let linear = model.solve_exterior(f)?;
            let (u, report) = model.solve_nonlinear(f, &coeffs, &opts)?;
            Ok((u, linear, report))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from("x,probe,u,u_linear\n");
    for (k, (u, lin, _)) in solved.iter().enumerate() {
        for i in 0..grid.n_points() {
            csv.push_str(&format!(
                "{},{k},{},{}\n",
                e16(grid.point(i)),
                e16(u.values[i]),
                e16(lin.values[i])
            ));
        }
    }
    let mut out = Artifacts::default();
    out.file("forward.csv", csv);
    let reports: Vec<_> = solved.iter().map(|(_, _, r)| r).collect();
    out.file(
        "forward_reports.json",
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    );
    out.note("iterations", reports.iter().map(|r| r.iterations).collect::<Vec<_>>());
    out.note("converged", reports.iter().all(|r| r.converged));
    Ok(out)
}

fn dn(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let coeffs = config.coefficients(grid)?;
    let probes = config.probes(grid)?;
    let opts = config.picard();
    let measured = probes
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            dn_direct(&model, f, &coeffs, &opts)?.with_noise(config.noise, config.seed.wrapping_add(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Artifacts::default();
    for (k, m) in measured.iter().enumerate() {
        out.file(format!("dn_probe{k}.csv"), m.to_csv(grid));
    }
    out.note("probes", measured.len());
    out.note("noise", config.noise);
    Ok(out)
}

fn linearize(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let coeffs = config.coefficients(grid)?;
    let probes = config.probes(grid)?;
    let order = config.linearize.order;
    let mut out = Artifacts::default();
    let mut deviations = Vec::new();
    for (k, f) in probes.iter().enumerate() {
        let jet = solve_hierarchy(&model, f, &coeffs, order)?;
        out.file(format!("jets_probe{k}.csv"), jet.to_csv(grid));
        if config.linearize.eps0 > 0.0 {
            let dd = divided_difference_jets(&model, f, &coeffs, order, config.linearize.eps0, &config.picard())?;
            out.file(format!("divided_probe{k}.csv"), dd.to_csv(grid));
            deviations.push(jet_deviation(grid, &jet, &dd));
        }
    }
    out.note("order", order);
    if !deviations.is_empty() {
        out.note("divided_difference_deviation", deviations);
    }
    Ok(out)
}

/// Relative `L²(Ω)` distance between two jets, per order.
pub fn jet_deviation(grid: &Grid, a: &JetField, b: &JetField) -> Vec<f64> {
    let mask = vec![true; grid.omega_len()];
    (1..=a.order().min(b.order()))
        .map(|k| {
            relative_l2(
                &grid.restrict(b.derivative(k), Region::Omega),
                &grid.restrict(a.derivative(k), Region::Omega),
                &mask,
            )
        })
        .collect()
}

fn runge(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let target_fn = config.runge.target.compile("runge.target")?;
    let target: Vec<f64> = grid.omega().map(|i| target_fn(grid.point(i))).collect();
    let map = ControlMap::new(&model)?;
    let rows = alpha_sweep(&model, &map, &target, &config.runge.alphas)?;
    let mut out = Artifacts::default();
    let sweep: Vec<_> = rows.iter().map(|(r, _)| *r).collect();
    out.file("runge_sweep.csv", sweep_csv(&sweep));
    let (best_row, best) = rows
        .iter()
        .min_by(|a, b| a.0.alpha.total_cmp(&b.0.alpha))
        .expect("validated nonempty alphas");
    let mut control = String::from("x,control\n");
    for i in grid.w1() {
        control.push_str(&format!("{},{}\n", e16(grid.point(i)), e16(best.control.values[i])));
    }
    out.file("runge_control.csv", control);
    out.file(
        "runge_achieved.csv",
        omega_csv(grid, &[("target", &target), ("achieved", &best.achieved)]),
    );
    out.note("alpha", best_row.alpha);
    out.note("residual", best_row.residual);
    out.note("gradient_norm", best.gradient_norm);
    Ok(out)
}

/// Generic probes `16 ((x-a)(b-x))² / (b-a)⁴ · cos(kπ(x-a)/(b-a))` on `W₁ = (a, b)`.
pub fn generic_probes(grid: &Grid, count: usize) -> Vec<Field> {
    let (a, b) = grid.w1_interval();
    let w = b - a;
    (0..count)
        .map(|k| {
            grid.sample_on(Region::W1, |x| {
                let bump = 16.0 * ((x - a) * (b - x)).max(0.0).powi(2) / w.powi(4);
                bump * (k as f64 * std::f64::consts::PI * (x - a) / w).cos()
            })
        })
        .collect()
}

/// Runs the three recovery steps against jets computed from the configured truth.
pub fn oracle_recovery(
    model: &Model,
    truth: &CoefficientSet,
    probe: &Field,
    config: &ExperimentConfig,
) -> Result<RecoveryResult> {
    let grid = model.grid();
    let inv = &config.inversion;
    let threshold = config.tolerances.threshold;
    if truth.m() != 2 {
        return Err(Error::Config(format!(
            "invert-oracle recovers the cubic and drift terms together and needs orders.m = 2, got {}",
            truth.m()
        )));
    }
    if inv.order > truth.k_max() {
        return Err(Error::Config(format!(
            "inversion.order = {} exceeds orders.k_max = {}",
            inv.order,
            truth.k_max()
        )));
    }
    let top = inv.order.max(3);
    let jet = solve_hierarchy(model, probe, truth, top)?;
    let b = recover_b(model, &jet, threshold)?;
    let jets: Vec<JetField> = generic_probes(grid, inv.n_probes)
        .par_iter()
        .map(|f| solve_hierarchy(model, f, truth, 3))
        .collect::<Result<_>>()?;
    let opts = DriftOptions {
        basis: inv.basis,
        fit: inv.fit,
        degree: inv.degree,
        threshold,
    };
    let (a3, drift) = recover_a3_and_drift_joint(model, &jets, &b.values, &opts)?;
    let mut known = CoefficientSet::zeros(grid, truth.m(), truth.k_max())?;
    known.set_b(b.values.clone())?;
    known.set_drift(drift.to_drift(grid)?)?;
    known.set_a(3, a3.values.clone())?;
    let mut a = vec![(3, a3)];
    for n in 4..=inv.order {
        let rec = recover_a_higher(model, &jet, &known, n, threshold)?;
        known.set_a(n, rec.values.clone())?;
        a.push((n, rec));
    }
    let mut errors = vec![("b".to_string(), b.relative_error(truth.b()))];
    for (n, rec) in &a {
        errors.push((
            format!("a{n}"),
            rec.relative_error(truth.a(*n).expect("order in range")),
        ));
    }
    errors.push(("ddot".into(), drift_error(grid, &drift, truth.drift(), 4)));
    let table = drift.omega_table(grid);
    Ok(RecoveryResult {
        mode: Mode::Oracle,
        b,
        a,
        ddot: Some(table.row_iter().map(|r| r.iter().copied().collect()).collect()),
        ddot_trusted: Some(drift.trusted.clone()),
        errors,
    })
}

fn recovery_files(out: &mut Artifacts, grid: &Grid, rec: &RecoveryResult, truth: &CoefficientSet) {
    out.file("recovery.json", rec.to_json());
    out.file("b.csv", masked_csv(grid, &rec.b, Some(truth.b())));
    for (n, field) in &rec.a {
        out.file(format!("a{n}.csv"), masked_csv(grid, field, truth.a(*n)));
    }
    if let (Some(table), Some(trusted)) = (&rec.ddot, &rec.ddot_trusted) {
        let mut csv = String::from("x,y,value,truth\n");
        let start = grid.omega().start;
        for (r, row) in table.iter().enumerate() {
            if !trusted[r] {
                continue;
            }
            for (c, v) in row.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    e16(grid.point(start + r)),
                    e16(grid.point(start + c)),
                    e16(*v),
                    e16(truth.drift().at(r, c))
                ));
            }
        }
        out.file("ddot.csv", csv);
    }
    for (name, e) in &rec.errors {
        out.note(&format!("error_{name}"), e);
    }
}

fn invert_oracle(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let truth = config.coefficients(grid)?;
    let probe = &config.probes(grid)?[0];
    let rec = oracle_recovery(&model, &truth, probe, config)?;
    let mut out = Artifacts::default();
    recovery_files(&mut out, grid, &rec, &truth);
    Ok(out)
}

/// `±ε` measurements of every probe under `truth`, with optional noise.
pub fn exterior_probes(
    model: &Model,
    truth: &CoefficientSet,
    probes: &[Field],
    eps: f64,
    noise: f64,
    seed: u64,
    opts: &crate::solvers::PicardOptions,
) -> Result<Vec<ExteriorProbe>> {
    probes
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let plus =
                dn_direct(model, &f.scaled(eps), truth, opts)?.with_noise(noise, seed.wrapping_add(2 * k as u64))?;
            let minus = dn_direct(model, &f.scaled(-eps), truth, opts)?
                .with_noise(noise, seed.wrapping_add(2 * k as u64 + 1))?;
            Ok(ExteriorProbe {
                f: f.clone(),
                eps,
                plus,
                minus,
            })
        })
        .collect()
}

fn invert_exterior(config: &ExperimentConfig) -> Result<Artifacts> {
    let model = config.model()?;
    let grid = model.grid();
    let truth = config.coefficients(grid)?;
    let inv = &config.inversion;
    let mut picard = config.picard();
    // The second difference divides the measurements by ε².
    picard.tol = picard.tol.min(1e-14);
    picard.max_iter = picard.max_iter.max(400);
    let probes = exterior_probes(
        &model,
        &truth,
        &generic_probes(grid, inv.exterior_probes),
        inv.eps,
        config.noise,
        config.seed,
        &picard,
    )?;
    let result = exterior_data_inversion(
        &model,
        &probes,
        &ExteriorOptions {
            alphas: inv.alphas.clone(),
            ..Default::default()
        },
    )?;
    let n = grid.omega_len();
    let b = MaskedField {
        values: result.b.clone(),
        trusted: vec![true; n],
    };
    let rec = RecoveryResult {
        mode: Mode::Exterior,
        errors: vec![("b".into(), b.relative_error(truth.b()))],
        b,
        a: Vec::new(),
        ddot: None,
        ddot_trusted: None,
    };
    let mut out = Artifacts::default();
    recovery_files(&mut out, grid, &rec, &truth);
    let mut lc = String::from("alpha,residual,seminorm,curvature\n");
    for p in &result.lcurve {
        lc.push_str(&format!(
            "{},{},{},{}\n",
            e16(p.alpha),
            e16(p.residual),
            e16(p.solution_norm),
            e16(p.curvature)
        ));
    }
    out.file("lcurve.csv", lc);
    out.note("alpha", result.alpha);
    out.note("residual", result.residual);
    out.note("condition_number", result.condition_number);
    Ok(out)
}

/// Named test functions for the pointwise bound, sampled on the whole grid.
pub fn bound_corpus(grid: &Grid) -> Vec<(String, Field)> {
    let mut out: Vec<(String, Box<dyn Fn(f64) -> f64>)> = Vec::new();
    for k in 1..=5 {
        out.push((format!("sin({k}x)"), Box::new(move |x: f64| (k as f64 * x).sin())));
    }
    for beta in [0.75, 1.0, 2.0] {
        out.push((
            format!("(1-x^2)_+^{beta}"),
            Box::new(move |x: f64| (1.0 - x * x).max(0.0).powf(beta)),
        ));
    }
    for a in [1.0, 4.0, 16.0] {
        out.push((format!("exp(-{a}x^2)"), Box::new(move |x: f64| (-a * x * x).exp())));
    }
    for g in [0.8, 1.0, 1.5] {
        out.push((format!("|x-0.3|^{g}"), Box::new(move |x: f64| (x - 0.3).abs().powf(g))));
    }
    out.push(("tanh(5x)".into(), Box::new(|x: f64| (5.0 * x).tanh())));
    out.push(("x exp(-x^2)".into(), Box::new(|x: f64| x * (-x * x).exp())));
    out.push((
        "cos(3x)/(1+x^2)".into(),
        Box::new(|x: f64| (3.0 * x).cos() / (1.0 + x * x)),
    ));
    out.push((
        "w1 bump".into(),
        Box::new(|x: f64| 16.0 * ((x - 1.5) * (2.5 - x)).max(0.0).powi(2)),
    ));
    out.push(("1 + x/4".into(), Box::new(|x: f64| 1.0 + x / 4.0)));
    out.push((
        "(1 - |x|/2)_+".into(),
        Box::new(|x: f64| (1.0 - x.abs() / 2.0).max(0.0)),
    ));
    out.into_iter().map(|(n, f)| (n, grid.sample(f))).collect()
}

pub const BOUND_RADII: [f64; 3] = [0.5, 1.0, 2.0];

/// Row of the bound sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub u: String,
    pub v: String,
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Every corpus function paired with itself and with its successor, at every radius.
pub fn bound_sweep(grid: &Grid, s: f64, t: f64) -> Result<Vec<BoundRow>> {
    let corpus = bound_corpus(grid);
    let n = corpus.len();
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| [(i, i), (i, (i + 1) % n)])
        .flat_map(|(i, j)| BOUND_RADII.map(|r| (i, j, r)))
        .collect();
    pairs
        .iter()
        .map(|&(i, j, radius)| {
            let c = check_gradient_bound(grid, &corpus[i].1, &corpus[j].1, s, t, radius)?;
            Ok(BoundRow {
                u: corpus[i].0.clone(),
                v: corpus[j].0.clone(),
                radius,
                lhs: c.lhs,
                rhs: c.rhs,
                holds: c.holds,
            })
        })
        .collect()
}

fn verify_bounds(config: &ExperimentConfig) -> Result<Artifacts> {
    let grid = config.grid()?;
    let rows = bound_sweep(&grid, config.orders.s, config.orders.t)?;
    let mut csv = String::from("u,v,radius,lhs,rhs,holds\n");
    for r in &rows {
        csv.push_str(&format!(
            "\"{}\",\"{}\",{},{},{},{}\n",
            r.u,
            r.v,
            e16(r.radius),
            e16(r.lhs),
            e16(r.rhs),
            r.holds
        ));
    }
    let mut out = Artifacts::default();
    out.file("bounds.csv", csv);
    out.note("cases", rows.len());
    out.note("all_hold", rows.iter().all(|r| r.holds));
    Ok(out)
}

/// Summary helper for callers that only need one number.
pub fn summary_f64(artifacts: &Artifacts, key: &str) -> Option<f64> {
    artifacts.summary.get(key).and_then(Value::as_f64)
}
