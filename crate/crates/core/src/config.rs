//! Experiment configuration: TOML files, `key=value` overrides and coefficient expressions.
//!
//! Coefficients are written as arithmetic expressions in `x` (and `y` for the drift) or
//! as tables with linear interpolation. Every field has a default, so an empty file
//! describes the reference setup.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use exmex::{Express, FlatEx};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_ops::DriftCoefficient;
use crate::grid::{Field, Grid, Region};
use crate::inversion::{DriftBasis, DriftFit, DEFAULT_BASIS_DEGREE, DEFAULT_THRESHOLD};
use crate::solvers::{CoefficientSet, Model, PicardOptions, DEFAULT_K_MAX, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// A parsed arithmetic expression in `x`, `y`, `z`.
#[derive(Clone)]
pub struct Expr {
    source: String,
    flat: Arc<FlatEx<f64>>,
    /// Position of `x`, `y`, `z` in the evaluation slice, when present.
    slots: [Option<usize>; 3],
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let flat = exmex::parse::<f64>(source).map_err(|e| Error::Parse {
            offset: 0,
            msg: format!("{source:?}: {e}"),
        })?;
        let mut slots = [None; 3];
        for (k, name) in flat.var_names().iter().enumerate() {
            match name.as_str() {
                "x" => slots[0] = Some(k),
                "y" => slots[1] = Some(k),
                "z" => slots[2] = Some(k),
                other => {
                    return Err(Error::Parse {
                        offset: source.find(other).unwrap_or(0),
                        msg: format!("unknown identifier {other:?} in {source:?} (allowed: x, y, z)"),
                    })
                }
            }
        }
        Ok(Expr {
            source: source.to_string(),
            flat: Arc::new(flat),
            slots,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses(&self, var: char) -> bool {
        match var {
            'x' => self.slots[0].is_some(),
            'y' => self.slots[1].is_some(),
            'z' => self.slots[2].is_some(),
            _ => false,
        }
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        let mut args = [0.0; 3];
        for (slot, v) in self.slots.iter().zip([x, y, z]) {
            if let Some(k) = slot {
                args[*k] = v;
            }
        }
        let n = self.flat.var_names().len();
        self.flat.eval(&args[..n]).unwrap_or(f64::NAN)
    }
}

/// A function of `x`: expression or table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Function1 {
    Expr(String),
    Table { x: Vec<f64>, values: Vec<f64> },
}

/// A function of `(x, y)`: expression or table on a tensor grid (`values[i][j]` at
/// `(x[i], x[j])`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Function2 {
    Expr(String),
    Table { x: Vec<f64>, values: Vec<Vec<f64>> },
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

fn check_nodes(key: &str, x: &[f64], len: usize) -> Result<()> {
    if x.len() < 2 || x.len() != len {
        return Err(Error::Config(format!(
            "{key}: table needs at least two nodes and as many values as nodes ({} nodes, {len} values)",
            x.len()
        )));
    }
    if !x.windows(2).all(|w| w[0] < w[1]) || !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Config(format!(
            "{key}: table nodes must be finite and increasing"
        )));
    }
    Ok(())
}

/// Index `k` and weight `w` with `x` between `nodes[k]` and `nodes[k+1]`, clamped to the ends.
fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        return (0, 0.0);
    }
    if x >= nodes[last] {
        return (last - 1, 1.0);
    }
    let k = nodes.partition_point(|&v| v <= x) - 1;
    (k, (x - nodes[k]) / (nodes[k + 1] - nodes[k]))
}

impl Function1 {
    pub fn compile(&self, key: &str) -> Result<Fn1> {
        match self {
            Function1::Expr(s) => {
                let e = Expr::parse(s).map_err(|e| Error::Config(format!("{key}: {e}")))?;
                if e.uses('y') || e.uses('z') {
                    return Err(Error::Config(format!("{key}: only x may appear in {s:?}")));
                }
                Ok(Arc::new(move |x| e.eval(x, 0.0, 0.0)))
            }
            Function1::Table { x, values } => {
                check_nodes(key, x, values.len())?;
                let (x, v) = (x.clone(), values.clone());
                Ok(Arc::new(move |t| {
                    let (k, w) = bracket(&x, t);
                    v[k] * (1.0 - w) + v[k + 1] * w
                }))
            }
        }
    }
}

impl Function2 {
    pub fn compile(&self, key: &str) -> Result<Fn2> {
        match self {
            Function2::Expr(s) => {
                let e = Expr::parse(s).map_err(|e| Error::Config(format!("{key}: {e}")))?;
                if e.uses('z') {
                    return Err(Error::Config(format!("{key}: only x and y may appear in {s:?}")));
                }
                Ok(Arc::new(move |x, y| e.eval(x, y, 0.0)))
            }
            Function2::Table { x, values } => {
                check_nodes(key, x, values.len())?;
                if values.iter().any(|row| row.len() != x.len()) {
                    return Err(Error::Config(format!("{key}: table rows must have one value per node")));
                }
                let (x, v) = (x.clone(), values.clone());
                Ok(Arc::new(move |a, b| {
                    let (i, wi) = bracket(&x, a);
                    let (j, wj) = bracket(&x, b);
                    let row = |i: usize| v[i][j] * (1.0 - wj) + v[i][j + 1] * wj;
                    row(i) * (1.0 - wi) + row(i + 1) * wi
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_points: usize,
    pub w1: (f64, f64),
    pub w2: (f64, f64),
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            half_width: 4.0,
            n_points: 513,
            w1: (1.5, 2.5),
            w2: (-2.5, -1.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderConfig {
    pub s: f64,
    pub t: f64,
    pub m: u32,
    pub k_max: usize,
}

impl Default for OrderConfig {
    fn default() -> Self {
        OrderConfig {
            s: 0.75,
            t: 0.25,
            m: 2,
            k_max: DEFAULT_K_MAX,
        }
    }
}

/// `a(x, z) = Σ_k a_k(x) z^k / k!`, given through the `a_k` keyed by `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientConfig {
    pub b: Function1,
    pub d: Function2,
    pub a: BTreeMap<String, Function1>,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        CoefficientConfig {
            b: Function1::Expr("1 + x^2/2".into()),
            d: Function2::Expr("0.5*(1 - x^2)*(1 + 0.5*y)".into()),
            a: BTreeMap::from([
                ("3".into(), Function1::Expr("1 + x".into())),
                ("4".into(), Function1::Expr("cos(PI*x/2)".into())),
            ]),
        }
    }
}

impl CoefficientConfig {
    /// All coefficients zero.
    pub fn zero() -> Self {
        CoefficientConfig {
            b: Function1::Expr("0".into()),
            d: Function2::Expr("0".into()),
            a: BTreeMap::new(),
        }
    }
}

/// Exterior data `amplitude · f(x)` restricted to W₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub f: Function1,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

pub const REFERENCE_BUMP: &str = "16*((x - 1.5)*(2.5 - x))^2";

fn default_probes() -> Vec<ProbeConfig> {
    vec![ProbeConfig {
        f: Function1::Expr(REFERENCE_BUMP.into()),
        amplitude: 1.0,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub picard_tol: f64,
    pub max_iter: usize,
    /// Relative threshold below which denominators count as vanishing.
    pub threshold: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            picard_tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizeConfig {
    pub order: usize,
    /// When positive, divided differences with this base step are written alongside.
    pub eps0: f64,
}

impl Default for LinearizeConfig {
    fn default() -> Self {
        LinearizeConfig { order: 3, eps0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RungeConfig {
    pub target: Function1,
    pub alphas: Vec<f64>,
}

impl Default for RungeConfig {
    fn default() -> Self {
        RungeConfig {
            target: Function1::Expr("1".into()),
            alphas: crate::runge::DEFAULT_ALPHAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    /// Number of generic probes `bump · cos(kπ(x - 1.5))`, `k = 0, 1, ...`.
    pub n_probes: usize,
    pub degree: usize,
    pub basis: DriftBasis,
    pub fit: DriftFit,
    /// Highest Taylor order of `a` to recover.
    pub order: usize,
    /// Amplitude of the `±ε` exterior probes.
    pub eps: f64,
    pub exterior_probes: usize,
    pub alphas: Vec<f64>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            n_probes: 12,
            degree: DEFAULT_BASIS_DEGREE,
            basis: DriftBasis::Projection,
            fit: DriftFit::Tensor,
            order: 4,
            eps: 0.05,
            exterior_probes: 6,
            alphas: crate::inversion::log_space(1e-8, 1e-2, 13),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<String>,
    pub seed: u64,
    /// Standard deviation of the noise added to exterior measurements.
    pub noise: f64,
    pub out: Option<String>,
    pub grid: GridConfig,
    pub orders: OrderConfig,
    pub coefficients: CoefficientConfig,
    pub probes: Vec<ProbeConfig>,
    pub tolerances: ToleranceConfig,
    pub linearize: LinearizeConfig,
    pub runge: RungeConfig,
    pub inversion: InversionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: None,
            seed: 0,
            noise: 0.0,
            out: None,
            grid: GridConfig::default(),
            orders: OrderConfig::default(),
            coefficients: CoefficientConfig::default(),
            probes: default_probes(),
            tolerances: ToleranceConfig::default(),
            linearize: LinearizeConfig::default(),
            runge: RungeConfig::default(),
            inversion: InversionConfig::default(),
        }
    }
}

/// Sets `path` (dot separated) in a TOML table, creating intermediate tables.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override key {path:?} is malformed")));
    }
    let mut table = root;
    for (depth, key) in keys[..keys.len() - 1].iter().enumerate() {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!(
                "override {path:?}: {} is not a table",
                keys[..=depth].join(".")
            ))
        })?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value, falling back to a string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl ExperimentConfig {
    /// Parses a TOML document, applies `key=value` overrides and validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key=value")))?;
            set_path(&mut table, key.trim(), override_value(value.trim()))?;
        }
        let config: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at {path}: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.orders;
        if !(0.0 < o.t && o.t < o.s && o.s < 1.0) {
            return Err(Error::Config(format!(
                "orders: need 0 < t < s < 1, got s = {}, t = {}",
                o.s, o.t
            )));
        }
        if o.m < 2 {
            return Err(Error::Config(format!("orders.m = {} must be an integer >= 2", o.m)));
        }
        if o.k_max <= o.m as usize {
            return Err(Error::Config(format!(
                "orders.k_max = {} must exceed orders.m = {}",
                o.k_max, o.m
            )));
        }
        for k in self.coefficients.a.keys() {
            let order: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("coefficients.a.{k}: key must be an order")))?;
            if order <= o.m as usize || order > o.k_max {
                return Err(Error::Config(format!(
                    "coefficients.a.{k}: order must lie in {}..={}",
                    o.m + 1,
                    o.k_max
                )));
            }
        }
        if !(self.tolerances.picard_tol > 0.0) || self.tolerances.max_iter == 0 {
            return Err(Error::Config(
                "tolerances: picard_tol and max_iter must be positive".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!(
                "noise = {} must be finite and nonnegative",
                self.noise
            )));
        }
        if self.probes.is_empty() {
            return Err(Error::Config("probes: at least one probe is required".into()));
        }
        if self.runge.alphas.iter().any(|a| !(*a > 0.0)) || self.inversion.alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("alphas must be positive".into()));
        }
        // Compile once so expression errors surface before any work starts.
        self.coefficients.b.compile("coefficients.b")?;
        self.coefficients.d.compile("coefficients.d")?;
        for (k, f) in &self.coefficients.a {
            f.compile(&format!("coefficients.a.{k}"))?;
        }
        for (i, p) in self.probes.iter().enumerate() {
            p.f.compile(&format!("probes[{i}].f"))?;
        }
        self.runge.target.compile("runge.target")?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::build(g.half_width, g.n_points, g.w1, g.w2)
    }

    pub fn model(&self) -> Result<Model> {
        Model::new(self.grid()?, self.orders.s, self.orders.t)
    }

    pub fn coefficients(&self, grid: &Grid) -> Result<CoefficientSet> {
        let c = &self.coefficients;
        let b = c.b.compile("coefficients.b")?;
        let d = c.d.compile("coefficients.d")?;
        let drift = match &c.d {
            Function2::Expr(s) if s.trim() == "0" => DriftCoefficient::Zero,
            _ => DriftCoefficient::from_fn(move |x, y| d(x, y)),
        };
        let a: Vec<(usize, Fn1)> =
            c.a.iter()
                .map(|(k, f)| {
                    Ok((
                        k.parse().expect("validated"),
                        f.compile(&format!("coefficients.a.{k}"))?,
                    ))
                })
                .collect::<Result<_>>()?;
        let refs: Vec<(usize, &dyn Fn(f64) -> f64)> =
            a.iter().map(|(k, f)| (*k, f.as_ref() as &dyn Fn(f64) -> f64)).collect();
        CoefficientSet::from_fns(grid, self.orders.m, self.orders.k_max, |x| b(x), &drift, &refs)
    }

    /// The configured probes sampled on W₁.
    pub fn probes(&self, grid: &Grid) -> Result<Vec<Field>> {
        self.probes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let f = p.f.compile(&format!("probes[{i}].f"))?;
                Ok(grid.sample_on(Region::W1, |x| p.amplitude * f(x)))
            })
            .collect()
    }

    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            tol: self.tolerances.picard_tol,
            max_iter: self.tolerances.max_iter,
            initial: None,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_evaluate() {
        let e = Expr::parse("0.5*(1 - x^2)*(1 + 0.5*y) + exp(z) - sin(0)").unwrap();
        assert!((e.eval(0.5, 2.0, 0.0) - (0.5 * 0.75 * 2.0 + 1.0)).abs() < 1e-14);
        assert!((Expr::parse("cos(PI*x/2)").unwrap().eval(1.0, 0.0, 0.0)).abs() < 1e-15);
        assert!(Expr::parse("2^-1").unwrap().eval(0.0, 0.0, 0.0) == 0.5);
        assert!(Expr::parse("1 + (x").is_err());
        assert!(Expr::parse("1 + w").is_err());
    }

    #[test]
    fn tables_interpolate() {
        let f = Function1::Table {
            x: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 2.0, 0.0],
        }
        .compile("b")
        .unwrap();
        assert_eq!(f(0.5), 1.0);
        assert_eq!(f(2.0), 1.0);
        assert_eq!(f(-5.0), 0.0);
        let g = Function2::Table {
            x: vec![0.0, 1.0],
            values: vec![vec![0.0, 1.0], vec![1.0, 2.0]],
        }
        .compile("d")
        .unwrap();
        assert_eq!(g(0.5, 0.5), 1.0);
        assert!(Function1::Table {
            x: vec![1.0, 0.0],
            values: vec![0.0, 2.0]
        }
        .compile("b")
        .is_err());
    }

    #[test]
    fn empty_document_is_the_reference_setup() {
        let c = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn overrides_and_key_paths() {
        let c = ExperimentConfig::from_toml_str(
            "[grid]\nn_points = 129\n",
            &["orders.s=0.6".into(), "coefficients.b=2 + x".into()],
        )
        .unwrap();
        assert_eq!(c.grid.n_points, 129);
        assert_eq!(c.orders.s, 0.6);
        assert_eq!(c.coefficients.b, Function1::Expr("2 + x".into()));
        let err = ExperimentConfig::from_toml_str("[grid]\nn_points = \"many\"\n", &[]).unwrap_err();
        assert!(err.to_string().contains("grid.n_points"), "{err}");
        let err = ExperimentConfig::from_toml_str("", &["orders.t=0.75".into()]).unwrap_err();
        assert!(err.to_string().contains("0 < t < s < 1"), "{err}");
        assert!(ExperimentConfig::from_toml_str("[grid]\nbogus = 1\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &["coefficients.a.2=x".into()]).is_err());
    }
}
