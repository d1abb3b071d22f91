//! Run configuration.
//!
//! A configuration file is a list of `key.path = value` lines (a TOML
//! document using only dotted keys); `#` starts a comment. Strings are
//! quoted, lists are bracketed. Every key is optional; absent keys take the
//! defaults in [`RunConfig::default`]. Unknown keys, wrong value types and
//! out-of-range parameters are all reported together.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::decode_state;
use crate::grid::{Boundary, Grid, ScalarField, VectorField};
use crate::linstep::LinStepConfig;
use crate::picard::{FreezeMode, PicardConfig};
use crate::state::{
    check_admissible, Admissibility, CubicSpline, FluidState, PhysParams, SecondViscosity, SmoothViscosity,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}` must be {expected}")]
    Type { key: String, expected: &'static str },
    #[error("`{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

/// Every problem found in one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    OracleCompare,
    VacuumStudy,
    Nondecay,
    Audits,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Simulate, Experiment::OracleCompare, Experiment::VacuumStudy, Experiment::Nondecay, Experiment::Audits];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::VacuumStudy => "vacuum-study",
            Experiment::Nondecay => "nondecay",
            Experiment::Audits => "audits",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    /// `c = c_val`, `u = u_val`.
    Constant { c_val: f64, u_val: Vec<f64> },
    /// `c = c_val + c_amplitude cos(k x')`, `u = u_val + amplitude sin(k x') e_component`
    /// with `x' = 2 pi x_1 / L_1`; `component` counts from 1.
    FourierMode { k: f64, amplitude: f64, component: usize, c_val: f64, c_amplitude: f64, u_val: Vec<f64> },
    /// `rho = 1 / (1 + |x|^(2 sigma))`, `u = u_val rho`.
    DecayingProfile { sigma: f64, u_val: Vec<f64> },
    Checkpoint { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleVelocity {
    /// `v = rate x_1 e_1` (decay boxes only).
    Stretch,
    /// `v = rate e_1`.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Windows between stored samples.
    pub sample_every: usize,
    /// Samples between checkpoints; 0 writes only the final state.
    pub checkpoint_every: usize,
    pub regularity_ceiling: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    /// The audits compare this corpus size with twice as many fields.
    pub corpus_size: usize,
    /// Points per axis of the periodic `[0, 2 pi)^3` audit grid.
    pub points: usize,
    pub modes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    /// Points per axis at each resolution, coarsest first.
    pub levels: Vec<usize>,
    pub t: f64,
    pub velocity: OracleVelocity,
    pub rate: f64,
    pub order_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub grid: Grid,
    pub physics: PhysParams,
    pub rho_max: f64,
    pub lin: LinStepConfig,
    pub picard: PicardConfig,
    pub t_final: f64,
    pub initial: InitialData,
    pub output: OutputConfig,
    pub audits: AuditConfig,
    pub oracle: OracleConfig,
    pub drift_budget: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::Simulate,
            seed: 0,
            grid: Grid::cube(1, 64, 2.0 * PI, Boundary::Periodic).expect("valid default grid"),
            physics: PhysParams::default(),
            rho_max: 10.0,
            lin: LinStepConfig::default(),
            picard: PicardConfig::default(),
            t_final: 0.1,
            initial: InitialData::Constant { c_val: 1.0, u_val: vec![0.0] },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                sample_every: 1,
                checkpoint_every: 0,
                regularity_ceiling: 1e8,
            },
            audits: AuditConfig { corpus_size: 100, points: 16, modes: 2 },
            oracle: OracleConfig {
                levels: vec![32, 64, 128, 256],
                t: 0.5,
                velocity: OracleVelocity::Stretch,
                rate: 1.0,
                order_min: 0.9,
            },
            drift_budget: 0.05,
        }
    }
}

/// Reads and validates a configuration file. Relative checkpoint paths are
/// resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError::Io { path: path.display().to_string(), message: e.to_string() }])
    })?;
    parse_config_with_base(&text, path.parent())
}

/// Parses configuration text; relative paths stay relative to the working
/// directory.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_with_base(text, None)
}

struct Fields {
    values: BTreeMap<String, toml::Value>,
    errors: Vec<ConfigError>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Finite numbers only; integers are accepted where reals are expected.
fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(x) if x.is_finite() => Some(*x),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.values.remove(key)
    }

    fn type_error(&mut self, key: &str, expected: &'static str) {
        self.errors.push(ConfigError::Type { key: key.into(), expected });
    }

    fn invalid(&mut self, key: &str, reason: impl Into<String>) {
        self.errors.push(ConfigError::Invalid { key: key.into(), reason: reason.into() });
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            None => default,
            Some(v) => as_f64(&v).unwrap_or_else(|| {
                self.type_error(key, "a finite number");
                default
            }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        match self.take(key) {
            None => default,
            Some(toml::Value::Integer(i)) if i >= 0 => i as usize,
            Some(_) => {
                self.type_error(key, "a nonnegative integer");
                default
            }
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> u64 {
        match self.take(key) {
            None => default,
            Some(toml::Value::Integer(i)) if i >= 0 => i as u64,
            Some(_) => {
                self.type_error(key, "a nonnegative integer");
                default
            }
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some(toml::Value::Boolean(b)) => b,
            Some(_) => {
                self.type_error(key, "true or false");
                default
            }
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        match self.take(key) {
            None => default.into(),
            Some(toml::Value::String(s)) => s,
            Some(_) => {
                self.type_error(key, "a quoted string");
                default.into()
            }
        }
    }

    /// A number or a list of numbers.
    fn f64_list(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.take(key) {
            None => default.to_vec(),
            Some(v) => {
                let parsed = match &v {
                    toml::Value::Array(a) => a.iter().map(as_f64).collect::<Option<Vec<_>>>(),
                    other => as_f64(other).map(|x| vec![x]),
                };
                parsed.unwrap_or_else(|| {
                    self.type_error(key, "a finite number or a list of them");
                    default.to_vec()
                })
            }
        }
    }

    fn usize_list(&mut self, key: &str, default: &[usize]) -> Vec<usize> {
        let as_usize = |v: &toml::Value| match v {
            toml::Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => None,
        };
        match self.take(key) {
            None => default.to_vec(),
            Some(v) => {
                let parsed = match &v {
                    toml::Value::Array(a) => a.iter().map(as_usize).collect::<Option<Vec<_>>>(),
                    other => as_usize(other).map(|x| vec![x]),
                };
                parsed.unwrap_or_else(|| {
                    self.type_error(key, "an integer or a list of integers");
                    default.to_vec()
                })
            }
        }
    }

    /// A list of `[rho, E]` pairs.
    fn pairs(&mut self, key: &str) -> Option<Vec<(f64, f64)>> {
        let v = self.take(key)?;
        let parsed = match &v {
            toml::Value::Array(rows) => rows
                .iter()
                .map(|r| match r {
                    toml::Value::Array(p) if p.len() == 2 => Some((as_f64(&p[0])?, as_f64(&p[1])?)),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>(),
            _ => None,
        };
        if parsed.is_none() {
            self.type_error(key, "a list of [rho, E] pairs");
        }
        parsed
    }
}

/// Broadcasts a single entry to `dim` axes.
fn per_axis<T: Copy>(fields: &mut Fields, key: &str, v: Vec<T>, dim: usize) -> Vec<T> {
    match v.len() {
        1 => vec![v[0]; dim],
        n if n == dim => v,
        n => {
            fields.invalid(key, format!("expected 1 or {dim} entries, got {n}"));
            vec![v[0]; dim]
        }
    }
}

fn parse_config_with_base(text: &str, base: Option<&Path>) -> Result<RunConfig, ConfigErrors> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigError::Syntax(e.message().to_string())])
    })?;
    let mut values = BTreeMap::new();
    flatten("", table, &mut values);
    let mut f = Fields { values, errors: Vec::new() };
    let d = RunConfig::default();

    let exp_name = f.string("experiment", d.experiment.name());
    let experiment = Experiment::from_name(&exp_name).unwrap_or_else(|| {
        f.invalid("experiment", format!("unknown experiment `{exp_name}`"));
        d.experiment
    });
    let seed = f.u64("seed", d.seed);

    // grid
    let dim = f.usize("grid.dim", 1);
    let dim_ok = (1..=3).contains(&dim);
    if !dim_ok {
        f.invalid("grid.dim", format!("must be 1, 2 or 3 (got {dim})"));
    }
    let axes = if dim_ok { dim } else { 1 };
    let points = f.usize_list("grid.points", &[64]);
    let points = per_axis(&mut f, "grid.points", points, axes);
    let extent = f.f64_list("grid.extent", &[2.0 * PI]);
    let extent = per_axis(&mut f, "grid.extent", extent, axes);
    let boundary_name = f.string("grid.boundary", "periodic");
    let boundary = match boundary_name.as_str() {
        "periodic" => Boundary::Periodic,
        "decay_box" => Boundary::DecayBox,
        other => {
            f.invalid("grid.boundary", format!("must be \"periodic\" or \"decay_box\" (got \"{other}\")"));
            Boundary::Periodic
        }
    };
    let grid = match Grid::new(axes, &points, &extent, boundary) {
        Ok(g) => Some(g),
        Err(e) => {
            f.invalid("grid", e.to_string());
            None
        }
    };

    // physics
    let dp = &d.physics;
    let a = f.f64("physics.A", dp.a);
    let gamma = f.f64("physics.gamma", dp.gamma);
    let alpha = f.f64("physics.alpha", dp.alpha);
    let kind = f.string("physics.viscosity.kind", "constant");
    let beta = f.f64("physics.viscosity.beta", 0.0);
    let coeffs = f.f64_list("physics.viscosity.coeffs", &[0.0]);
    let table = f.pairs("physics.viscosity.table");
    let b = f.f64("physics.viscosity.b", 1.5);
    let viscosity = match kind.as_str() {
        "constant" => SecondViscosity::Smooth(SmoothViscosity::Constant(beta)),
        "polynomial" => SecondViscosity::Smooth(SmoothViscosity::Polynomial(coeffs)),
        "table" => match table {
            Some(rows) => {
                let (x, y): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
                match CubicSpline::natural(x, y) {
                    Ok(s) => SecondViscosity::Smooth(SmoothViscosity::Table(s)),
                    Err(e) => {
                        f.invalid("physics.viscosity.table", e.to_string());
                        dp.viscosity.clone()
                    }
                }
            }
            None => {
                f.invalid("physics.viscosity.table", "required when physics.viscosity.kind = \"table\"");
                dp.viscosity.clone()
            }
        },
        "power_law" => SecondViscosity::PowerLaw { b },
        other => {
            f.invalid(
                "physics.viscosity.kind",
                format!("must be constant, polynomial, table or power_law (got \"{other}\")"),
            );
            dp.viscosity.clone()
        }
    };
    let physics = PhysParams {
        a,
        gamma,
        alpha,
        viscosity,
        c_inf: f.f64("physics.c_inf", dp.c_inf),
        eps_vac: f.f64("physics.eps_vac", dp.eps_vac),
        outside_theorem: f.bool("physics.outside_theorem", dp.outside_theorem),
    };
    let rho_max = f.f64("physics.rho_max", d.rho_max);
    let phys_errors = physics.validate();
    let phys_ok = phys_errors.is_empty();
    for e in phys_errors {
        f.errors.push(match e {
            crate::state::StateError::InvalidParam { key, reason } => {
                ConfigError::Invalid { key: format!("physics.{key}"), reason }
            }
            other => ConfigError::Invalid { key: "physics".into(), reason: other.to_string() },
        });
    }
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        f.invalid("physics.rho_max", format!("must be positive (got {rho_max})"));
    } else if phys_ok && !physics.is_power_law() {
        if let Admissibility::Fail { rho, value } = check_admissible(&physics, rho_max) {
            f.invalid(
                "physics.viscosity",
                format!("2 alpha + 3 E(rho) = {value:.3e} < 0 at rho = {rho:.4} (not admissible)"),
            );
        }
    }

    // scheme
    let dl = d.lin;
    let lin = LinStepConfig {
        dt: f.f64("scheme.dt", dl.dt),
        cfl_max: f.f64("scheme.cfl_max", dl.cfl_max),
        lin_tol: f.f64("scheme.lin_tol", dl.lin_tol),
        lin_maxit: f.usize("scheme.lin_maxit", dl.lin_maxit),
    };
    for (key, v) in [("scheme.dt", lin.dt), ("scheme.cfl_max", lin.cfl_max), ("scheme.lin_tol", lin.lin_tol)] {
        if !(v > 0.0 && v.is_finite()) {
            f.invalid(key, format!("must be positive (got {v})"));
        }
    }
    if lin.lin_maxit == 0 {
        f.invalid("scheme.lin_maxit", "must be positive");
    }
    let freeze_name = f.string("scheme.freeze", "window");
    let freeze = match freeze_name.as_str() {
        "window" => FreezeMode::Window,
        "per_step" => FreezeMode::PerStep,
        other => {
            f.invalid("scheme.freeze", format!("must be \"window\" or \"per_step\" (got \"{other}\")"));
            FreezeMode::Window
        }
    };
    let dpic = &d.picard;
    let picard = PicardConfig {
        window: f.f64("scheme.window", dpic.window),
        max_iter: f.usize("scheme.max_iter", dpic.max_iter),
        gamma_tol: f.f64("scheme.gamma_tol", dpic.gamma_tol),
        delta_list: f.f64_list("scheme.delta_list", &dpic.delta_list),
        freeze,
    };
    if lin.dt > 0.0 {
        if let Err(e) = picard.validate(lin.dt) {
            f.invalid("scheme", e.to_string());
        }
    }
    let dl = &picard.delta_list;
    if dl.iter().any(|x| !(*x > 0.0)) || dl.windows(2).any(|w| !(w[1] < w[0])) {
        f.invalid("scheme.delta_list", "must be positive and strictly descending");
    }
    let t_final = f.f64("scheme.t_final", d.t_final);
    if !(t_final > 0.0 && t_final.is_finite()) {
        f.invalid("scheme.t_final", format!("must be positive (got {t_final})"));
    }

    // initial data
    let ikind = f.string("initial.kind", "constant");
    let c_val = f.f64("initial.c_val", 1.0);
    let u_val = f.f64_list("initial.u_val", &[0.0]);
    let u_val = per_axis(&mut f, "initial.u_val", u_val, axes);
    let sigma = f.f64("initial.sigma", 2.0);
    let k = f.f64("initial.k", 1.0);
    let amplitude = f.f64("initial.amplitude", 0.1);
    let component = f.usize("initial.component", 1);
    let c_amplitude = f.f64("initial.c_amplitude", 0.0);
    let path = f.string("initial.path", "");
    let initial = match ikind.as_str() {
        "constant" => {
            if !(c_val >= 0.0) {
                f.invalid("initial.c_val", format!("must be nonnegative (got {c_val})"));
            }
            InitialData::Constant { c_val, u_val }
        }
        "fourier_mode" => {
            if !(1..=axes).contains(&component) {
                f.invalid("initial.component", format!("must lie in 1..={axes} (got {component})"));
            }
            if !(c_val - c_amplitude.abs() >= 0.0) {
                f.invalid("initial.c_amplitude", "c_val - |c_amplitude| must be nonnegative");
            }
            InitialData::FourierMode { k, amplitude, component, c_val, c_amplitude, u_val }
        }
        "remark12_profile" => {
            let bound = 1f64.max(1.0 / (gamma - 1.0));
            if !(sigma > bound) {
                f.invalid("initial.sigma", format!("σ must exceed max{{1, 1/(γ−1)}} = {bound}"));
            }
            InitialData::DecayingProfile { sigma, u_val }
        }
        "checkpoint" => {
            let mut p = PathBuf::from(&path);
            if path.is_empty() {
                f.invalid("initial.path", "required when initial.kind = \"checkpoint\"");
            } else {
                if p.is_relative() {
                    if let Some(base) = base {
                        p = base.join(p);
                    }
                }
                if !p.is_file() {
                    f.invalid("initial.path", format!("{} does not exist", p.display()));
                }
            }
            InitialData::Checkpoint { path: p }
        }
        other => {
            f.invalid(
                "initial.kind",
                format!("must be constant, fourier_mode, remark12_profile or checkpoint (got \"{other}\")"),
            );
            d.initial.clone()
        }
    };

    // output, audits, oracle
    let output = OutputConfig {
        dir: PathBuf::from(f.string("output.dir", "out")),
        sample_every: f.usize("output.sample_every", d.output.sample_every),
        checkpoint_every: f.usize("output.checkpoint_every", d.output.checkpoint_every),
        regularity_ceiling: f.f64("output.regularity_ceiling", d.output.regularity_ceiling),
    };
    if output.sample_every == 0 {
        f.invalid("output.sample_every", "must be positive");
    }
    let audits = AuditConfig {
        corpus_size: f.usize("audits.corpus_size", d.audits.corpus_size),
        points: f.usize("audits.points", d.audits.points),
        modes: f.usize("audits.modes", d.audits.modes),
    };
    if audits.corpus_size == 0 {
        f.invalid("audits.corpus_size", "must be positive");
    }
    if audits.points < 4 {
        f.invalid("audits.points", "must be at least 4");
    }
    if audits.modes == 0 || 2 * audits.modes >= audits.points.max(1) {
        f.invalid("audits.modes", "must be positive and below points / 2");
    }
    let vname = f.string("oracle.velocity", "stretch");
    let velocity = match vname.as_str() {
        "stretch" => OracleVelocity::Stretch,
        "uniform" => OracleVelocity::Uniform,
        other => {
            f.invalid("oracle.velocity", format!("must be \"stretch\" or \"uniform\" (got \"{other}\")"));
            OracleVelocity::Stretch
        }
    };
    let oracle = OracleConfig {
        levels: f.usize_list("oracle.levels", &d.oracle.levels),
        t: f.f64("oracle.t", d.oracle.t),
        velocity,
        rate: f.f64("oracle.rate", d.oracle.rate),
        order_min: f.f64("oracle.order_min", d.oracle.order_min),
    };
    if oracle.levels.len() < 2 || oracle.levels.iter().any(|&n| n < 4) {
        f.invalid("oracle.levels", "needs at least two resolutions of 4 or more points");
    }
    if !(oracle.t > 0.0) {
        f.invalid("oracle.t", "must be positive");
    }
    let drift_budget = f.f64("nondecay.drift_budget", d.drift_budget);
    if !(0.0..1.0).contains(&drift_budget) {
        f.invalid("nondecay.drift_budget", format!("must lie in [0, 1) (got {drift_budget})"));
    }

    let unknown: Vec<String> = f.values.keys().cloned().collect();
    for key in unknown {
        f.errors.push(ConfigError::UnknownKey(key));
    }
    let Some(grid) = grid else { return Err(ConfigErrors(f.errors)) };
    let cfg = RunConfig {
        experiment,
        seed,
        grid,
        physics,
        rho_max,
        lin,
        picard,
        t_final,
        initial,
        output,
        audits,
        oracle,
        drift_budget,
    };
    f.errors.extend(cfg.experiment_errors());
    if f.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(f.errors))
    }
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list<T>(v: &[T], f: impl Fn(&T) -> String) -> String {
    format!("[{}]", v.iter().map(f).collect::<Vec<_>>().join(", "))
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl RunConfig {
    fn experiment_errors(&self) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        let mut invalid = |key: &str, reason: &str| {
            errors.push(ConfigError::Invalid { key: key.into(), reason: reason.into() });
        };
        match self.experiment {
            Experiment::OracleCompare => {
                if self.oracle.velocity == OracleVelocity::Stretch && self.grid.boundary() != Boundary::DecayBox {
                    invalid("oracle.velocity", "the stretching flow needs grid.boundary = \"decay_box\"");
                }
                if matches!(self.initial, InitialData::Checkpoint { .. }) {
                    invalid("initial.kind", "oracle-compare needs analytic initial data");
                }
            }
            Experiment::VacuumStudy if self.picard.delta_list.len() < 3 => {
                invalid("scheme.delta_list", "vacuum-study needs at least three shifts");
            }
            _ => {}
        }
        errors
    }

    /// Checks the requirements of `self.experiment`; needed again after the
    /// experiment is changed on an already validated configuration.
    pub fn check_experiment(&self) -> Result<(), ConfigErrors> {
        let errors = self.experiment_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Every setting as `key = value` lines; parsing the result gives back
    /// an equal configuration.
    pub fn to_config_string(&self) -> String {
        let g = &self.grid;
        let dim = g.dim();
        let p = &self.physics;
        let mut lines = vec![
            format!("experiment = {}", quote(self.experiment.name())),
            format!("seed = {}", self.seed),
            format!("grid.dim = {dim}"),
            format!("grid.points = {}", fmt_list(&g.points()[..dim], |n| n.to_string())),
            format!("grid.extent = {}", fmt_list(&g.extent()[..dim], |x| fmt_f64(*x))),
            format!(
                "grid.boundary = {}",
                quote(if g.boundary() == Boundary::Periodic { "periodic" } else { "decay_box" })
            ),
            format!("physics.A = {}", fmt_f64(p.a)),
            format!("physics.gamma = {}", fmt_f64(p.gamma)),
            format!("physics.alpha = {}", fmt_f64(p.alpha)),
        ];
        match &p.viscosity {
            SecondViscosity::Smooth(SmoothViscosity::Constant(b)) => {
                lines.push("physics.viscosity.kind = \"constant\"".into());
                lines.push(format!("physics.viscosity.beta = {}", fmt_f64(*b)));
            }
            SecondViscosity::Smooth(SmoothViscosity::Polynomial(c)) => {
                lines.push("physics.viscosity.kind = \"polynomial\"".into());
                lines.push(format!("physics.viscosity.coeffs = {}", fmt_list(c, |x| fmt_f64(*x))));
            }
            SecondViscosity::Smooth(SmoothViscosity::Table(s)) => {
                let (x, y) = s.knots();
                let rows: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
                lines.push("physics.viscosity.kind = \"table\"".into());
                lines.push(format!(
                    "physics.viscosity.table = {}",
                    fmt_list(&rows, |(a, b)| format!("[{}, {}]", fmt_f64(*a), fmt_f64(*b)))
                ));
            }
            SecondViscosity::PowerLaw { b } => {
                lines.push("physics.viscosity.kind = \"power_law\"".into());
                lines.push(format!("physics.viscosity.b = {}", fmt_f64(*b)));
            }
        }
        lines.extend([
            format!("physics.c_inf = {}", fmt_f64(p.c_inf)),
            format!("physics.eps_vac = {}", fmt_f64(p.eps_vac)),
            format!("physics.outside_theorem = {}", p.outside_theorem),
            format!("physics.rho_max = {}", fmt_f64(self.rho_max)),
            format!("scheme.dt = {}", fmt_f64(self.lin.dt)),
            format!("scheme.cfl_max = {}", fmt_f64(self.lin.cfl_max)),
            format!("scheme.lin_tol = {}", fmt_f64(self.lin.lin_tol)),
            format!("scheme.lin_maxit = {}", self.lin.lin_maxit),
            format!("scheme.window = {}", fmt_f64(self.picard.window)),
            format!("scheme.max_iter = {}", self.picard.max_iter),
            format!("scheme.gamma_tol = {}", fmt_f64(self.picard.gamma_tol)),
            format!("scheme.delta_list = {}", fmt_list(&self.picard.delta_list, |x| fmt_f64(*x))),
            format!("scheme.t_final = {}", fmt_f64(self.t_final)),
            format!(
                "scheme.freeze = {}",
                quote(if self.picard.freeze == FreezeMode::Window { "window" } else { "per_step" })
            ),
        ]);
        match &self.initial {
            InitialData::Constant { c_val, u_val } => lines.extend([
                "initial.kind = \"constant\"".into(),
                format!("initial.c_val = {}", fmt_f64(*c_val)),
                format!("initial.u_val = {}", fmt_list(u_val, |x| fmt_f64(*x))),
            ]),
            InitialData::FourierMode { k, amplitude, component, c_val, c_amplitude, u_val } => lines.extend([
                "initial.kind = \"fourier_mode\"".into(),
                format!("initial.k = {}", fmt_f64(*k)),
                format!("initial.amplitude = {}", fmt_f64(*amplitude)),
                format!("initial.component = {component}"),
                format!("initial.c_val = {}", fmt_f64(*c_val)),
                format!("initial.c_amplitude = {}", fmt_f64(*c_amplitude)),
                format!("initial.u_val = {}", fmt_list(u_val, |x| fmt_f64(*x))),
            ]),
            InitialData::DecayingProfile { sigma, u_val } => lines.extend([
                "initial.kind = \"remark12_profile\"".into(),
                format!("initial.sigma = {}", fmt_f64(*sigma)),
                format!("initial.u_val = {}", fmt_list(u_val, |x| fmt_f64(*x))),
            ]),
            InitialData::Checkpoint { path } => lines.extend([
                "initial.kind = \"checkpoint\"".into(),
                format!("initial.path = {}", quote(&path.to_string_lossy())),
            ]),
        }
        let o = &self.oracle;
        lines.extend([
            format!("output.dir = {}", quote(&self.output.dir.to_string_lossy())),
            format!("output.sample_every = {}", self.output.sample_every),
            format!("output.checkpoint_every = {}", self.output.checkpoint_every),
            format!("output.regularity_ceiling = {}", fmt_f64(self.output.regularity_ceiling)),
            format!("audits.corpus_size = {}", self.audits.corpus_size),
            format!("audits.points = {}", self.audits.points),
            format!("audits.modes = {}", self.audits.modes),
            format!("oracle.levels = {}", fmt_list(&o.levels, |n| n.to_string())),
            format!("oracle.t = {}", fmt_f64(o.t)),
            format!(
                "oracle.velocity = {}",
                quote(if o.velocity == OracleVelocity::Stretch { "stretch" } else { "uniform" })
            ),
            format!("oracle.rate = {}", fmt_f64(o.rate)),
            format!("oracle.order_min = {}", fmt_f64(o.order_min)),
            format!("nondecay.drift_budget = {}", fmt_f64(self.drift_budget)),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

#[derive(Debug, Error)]
pub enum InitialDataError {
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    State(#[from] crate::state::StateError),
}

impl InitialData {
    /// The sound speed `c0(x)` of analytic initial data.
    pub fn sound_speed_at(&self, grid: &Grid, params: &PhysParams, x: [f64; 3]) -> Option<f64> {
        let kx = |k: f64| k * 2.0 * PI * x[0] / grid.extent()[0];
        match self {
            InitialData::Constant { c_val, .. } => Some(*c_val),
            InitialData::FourierMode { k, c_val, c_amplitude, .. } => Some(c_val + c_amplitude * kx(*k).cos()),
            InitialData::DecayingProfile { sigma, .. } => {
                let r2: f64 = x[..grid.dim()].iter().map(|v| v * v).sum();
                let rho = 1.0 / (1.0 + r2.powf(*sigma));
                Some(params.sound_coeff() * rho.powf(0.5 * (params.gamma - 1.0)))
            }
            InitialData::Checkpoint { .. } => None,
        }
    }

    fn velocity_at(&self, grid: &Grid, x: [f64; 3]) -> [f64; 3] {
        let mut u = [0.0; 3];
        match self {
            InitialData::Constant { u_val, .. } => u[..u_val.len()].copy_from_slice(u_val),
            InitialData::FourierMode { k, amplitude, component, u_val, .. } => {
                u[..u_val.len()].copy_from_slice(u_val);
                u[component - 1] += amplitude * (k * 2.0 * PI * x[0] / grid.extent()[0]).sin();
            }
            InitialData::DecayingProfile { sigma, u_val } => {
                let r2: f64 = x[..grid.dim()].iter().map(|v| v * v).sum();
                let rho = 1.0 / (1.0 + r2.powf(*sigma));
                for (a, v) in u_val.iter().enumerate() {
                    u[a] = v * rho;
                }
            }
            InitialData::Checkpoint { .. } => {}
        }
        u
    }

    /// Builds the initial state on `grid`. On a decay box the outer layer
    /// is set to the far field (`c = c_inf`, `u = 0`, `psi = 0`).
    pub fn state_on(&self, grid: &Grid, params: &PhysParams) -> Result<FluidState, InitialDataError> {
        if let InitialData::Checkpoint { path } = self {
            let err = |message: String| InitialDataError::Checkpoint { path: path.display().to_string(), message };
            let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
            let state = decode_state(&bytes).map_err(|e| err(e.to_string()))?;
            if state.grid() != grid {
                return Err(err("grid differs from the configured grid".into()));
            }
            if params.is_power_law() != state.e_field.is_some() {
                return Err(err("E field presence does not match the viscosity mode".into()));
            }
            return Ok(state);
        }
        let far = grid.boundary() == Boundary::DecayBox;
        let c = ScalarField::from_fn(grid, |x| self.sound_speed_at(grid, params, x).unwrap_or(0.0));
        let mut c = c;
        let mut u = VectorField::from_fn(grid, |x| self.velocity_at(grid, x));
        if far {
            for i in 0..grid.len() {
                if grid.is_boundary_layer(i) {
                    c.data_mut()[i] = params.c_inf;
                    for a in 0..u.ncomp() {
                        u.comp_mut(a)[i] = 0.0;
                    }
                }
            }
        }
        let mut state = FluidState::from_sound_speed(c, u, params);
        if far {
            for i in 0..grid.len() {
                if grid.is_boundary_layer(i) {
                    for a in 0..state.psi.ncomp() {
                        state.psi.comp_mut(a)[i] = 0.0;
                    }
                }
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str("grid.dim = 1\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn negative_alpha_names_the_key() {
        let err = parse_config_str("physics.alpha = -1\n").unwrap_err();
        assert!(err.0.iter().any(|e| matches!(e, ConfigError::Invalid { key, .. } if key == "physics.alpha")), "{err}");
    }

    #[test]
    fn decaying_profile_sigma_bound() {
        let err = parse_config_str("physics.gamma = 2\ninitial.kind = \"remark12_profile\"\ninitial.sigma = 0.5\n")
            .unwrap_err();
        assert!(err.to_string().contains("σ must exceed max{1, 1/(γ−1)} = 1"), "{err}");
    }

    #[test]
    fn collects_every_error() {
        let text = "grid.dim = 5\nphysics.alpha = -1\nscheme.dt = \"fast\"\nbogus.key = 1\n";
        let err = parse_config_str(text).unwrap_err();
        assert!(err.0.len() >= 4, "{err}");
        assert!(err.0.contains(&ConfigError::UnknownKey("bogus.key".into())));
        assert!(err.0.contains(&ConfigError::Type { key: "scheme.dt".into(), expected: "a finite number" }));
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert!(matches!(parse_config_str("grid.dim = = 2").unwrap_err().0[0], ConfigError::Syntax(_)));
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"
            experiment = "vacuum-study"
            seed = 42
            grid.dim = 2
            grid.points = [16, 24]
            grid.extent = 8.0
            grid.boundary = "decay_box"
            physics.viscosity.kind = "table"
            physics.viscosity.table = [[0.0, 0.0], [1.0, 0.25], [4.0, 0.5]]
            physics.c_inf = 0.1
            scheme.delta_list = [0.1, 0.01, 0.001]
            initial.kind = "remark12_profile"
            initial.u_val = [0.5, 0.0]
            output.dir = "runs/a \"b\""
        "#;
        let cfg = parse_config_str(text).unwrap();
        let again = parse_config_str(&cfg.to_config_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn inadmissible_viscosity_rejected() {
        let err = parse_config_str("physics.viscosity.kind = \"polynomial\"\nphysics.viscosity.coeffs = [0.0, -1.0]\n")
            .unwrap_err();
        assert!(err.to_string().contains("not admissible"), "{err}");
    }

    #[test]
    fn missing_checkpoint_rejected() {
        let err = parse_config_str("initial.kind = \"checkpoint\"\ninitial.path = \"/nonexistent/x.vfst\"\n").unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn initial_states() {
        let g = Grid::cube(1, 32, 16.0, Boundary::DecayBox).unwrap();
        let p = PhysParams::default();
        let init = InitialData::DecayingProfile { sigma: 2.0, u_val: vec![0.0] };
        let s = init.state_on(&g, &p).unwrap();
        assert_eq!(s.c.data()[0], 0.0);
        let mid = s.c.data()[16];
        let x = g.coord(16)[0];
        assert!((mid - 2f64.sqrt() / (1.0 + x.powi(4)).sqrt()).abs() < 1e-14);
    }
}
