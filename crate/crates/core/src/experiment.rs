//! Experiment orchestration: runs a [`RunConfig`] and writes its artifacts.
//!
//! Every run writes `report.txt` (one `check=... status=... expected=...
//! actual=... margin=...` line per check, then the overall status) and
//! `manifest.cfg` (version and wall time as comments, then the complete
//! configuration). The other files depend on the experiment:
//!
//! | experiment       | files                                                         |
//! |------------------|---------------------------------------------------------------|
//! | `simulate`       | `conserved.csv`, `regularity.csv`, `trace.csv`, checkpoints   |
//! | `nondecay`       | as `simulate`                                                 |
//! | `oracle-compare` | `oracle.csv`                                                  |
//! | `vacuum-study`   | `vacuum.csv`                                                  |
//! | `audits`         | `audits.csv`                                                  |

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::checkpoint::encode_state;
use crate::config::{Experiment, InitialDataError, OracleVelocity, RunConfig};
use crate::diagnostics::{
    commutator_audit, conservation_drift, conserved_series, gn_audit, nondecay_check, regularity_monitor,
    write_audits_csv, write_conserved_csv, write_regularity_csv, write_trace_csv, AuditKind, AuditRow,
    CommutatorExponents, Verdict,
};
use crate::elliptic::{elliptic_regularity_ratio, EllipticError};
use crate::grid::{Boundary, Grid, GridError, VectorField};
use crate::linstep::{characteristics_oracle_with, transport_step, FrozenVelocity, LinStepConfig};
use crate::picard::{time_march, vacuum_study};
use crate::rng::band_limited_field;

/// Relative change allowed in an audit maximum when the corpus doubles.
pub const AUDIT_STABILITY: f64 = 0.1;
/// Bound on the discrete elliptic regularity ratio over the audit corpus.
pub const ELLIPTIC_RATIO_MAX: f64 = 1.1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Initial(#[from] InitialDataError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl RunError {
    /// Process exit code: 2 for unusable initial data, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Initial(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RunStatus {
    Pass = 0,
    AssertionFailed = 1,
    ConfigError = 2,
    SolverFailure = 3,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        self as i32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
    /// Measured and written, but not asserted.
    Reported,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not-applicable",
            CheckStatus::Reported => "reported",
        }
    }

    fn asserted(ok: bool) -> Self {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub expected: String,
    pub actual: f64,
    /// Positive when the check holds with room to spare.
    pub margin: f64,
}

impl Check {
    fn new(name: &str, status: CheckStatus, expected: impl Into<String>, actual: f64, margin: f64) -> Self {
        Check { name: name.into(), status, expected: expected.into(), actual, margin }
    }

    /// `actual >= bound`.
    fn at_least(name: &str, actual: f64, bound: f64) -> Self {
        let margin = actual - bound;
        Check::new(name, CheckStatus::asserted(margin >= 0.0), format!(">= {bound:e}"), actual, margin)
    }

    /// `actual <= bound`.
    fn at_most(name: &str, actual: f64, bound: f64) -> Self {
        let margin = bound - actual;
        Check::new(name, CheckStatus::asserted(margin >= 0.0), format!("<= {bound:e}"), actual, margin)
    }

    fn reported(name: &str, actual: f64) -> Self {
        Check::new(name, CheckStatus::Reported, "-", actual, 0.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "check={} status={} expected=\"{}\" actual={:.12e} margin={:.12e}",
            self.name,
            self.status.as_str(),
            self.expected,
            self.actual,
            self.margin
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub checks: Vec<Check>,
    /// Set when a solver stopped the run early.
    pub failure: Option<String>,
}

impl RunOutcome {
    fn from_checks(checks: Vec<Check>, failure: Option<String>) -> Self {
        let status = if failure.is_some() {
            RunStatus::SolverFailure
        } else if checks.iter().any(|c| c.status == CheckStatus::Fail) {
            RunStatus::AssertionFailed
        } else {
            RunStatus::Pass
        };
        RunOutcome { status, checks, failure }
    }

    /// The contents of `report.txt`.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        if let Some(f) = &self.failure {
            s.push_str(&format!("failure=\"{}\"\n", f.replace('"', "'")));
        }
        s.push_str(&format!("status={} exit={}\n", status_name(self.status), self.status.exit_code()));
        s
    }
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Pass => "pass",
        RunStatus::AssertionFailed => "assertion-failed",
        RunStatus::ConfigError => "config-error",
        RunStatus::SolverFailure => "solver-failure",
    }
}

struct Out<'a> {
    dir: &'a Path,
}

impl Out<'_> {
    fn write(&self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let wrap = |source| RunError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(wrap)?);
        body(&mut w).and_then(|_| w.flush()).map_err(wrap)
    }
}

/// Runs the configured experiment, writing artifacts into `out_dir`
/// (created if missing).
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io { path: out_dir.into(), source })?;
    let out = Out { dir: out_dir };
    let outcome = match cfg.experiment {
        Experiment::Simulate => run_simulation(cfg, &out, false)?,
        Experiment::Nondecay => run_simulation(cfg, &out, true)?,
        Experiment::OracleCompare => run_oracle(cfg, &out)?,
        Experiment::VacuumStudy => run_vacuum(cfg, &out)?,
        Experiment::Audits => run_audits(cfg, &out)?,
    };
    out.write("report.txt", |w| w.write_all(outcome.report().as_bytes()))?;
    let mut echo = cfg.clone();
    echo.output.dir = out_dir.to_path_buf();
    let manifest = format!(
        "# vacflow {}\n# wall_time_s = {:.3}\n{}",
        env!("CARGO_PKG_VERSION"),
        start.elapsed().as_secs_f64(),
        echo.to_config_string()
    );
    out.write("manifest.cfg", |w| w.write_all(manifest.as_bytes()))?;
    Ok(outcome)
}

fn run_simulation(cfg: &RunConfig, out: &Out, nondecay: bool) -> Result<RunOutcome, RunError> {
    let params = &cfg.physics;
    let state0 = cfg.initial.state_on(&cfg.grid, params)?;
    let traj = time_march(&state0, cfg.t_final, params, &cfg.lin, &cfg.picard, cfg.output.sample_every);
    let records = conserved_series(&traj.samples, params);
    let regularity = regularity_monitor(&traj.samples, params, cfg.output.regularity_ceiling)?;

    out.write("conserved.csv", |w| write_conserved_csv(w, &records))?;
    out.write("regularity.csv", |w| write_regularity_csv(w, &regularity.records))?;
    out.write("trace.csv", |w| write_trace_csv(w, &traj.traces))?;
    let every = cfg.output.checkpoint_every;
    if every > 0 {
        for (k, s) in traj.samples.iter().enumerate().step_by(every) {
            out.write(&format!("checkpoint_{k:05}.vfst"), |w| w.write_all(&encode_state(s)))?;
        }
    }
    out.write("final.vfst", |w| w.write_all(&encode_state(traj.last())))?;

    let periodic = cfg.grid.boundary() == Boundary::Periodic;
    let (mass_drift, momentum_drift) = conservation_drift(&records);
    let mut checks = vec![
        Check::reported("mass_drift", mass_drift),
        Check::reported("momentum_drift", momentum_drift),
        Check::reported("clamp_events", traj.last().clamp_events as f64),
        Check::reported("final_time", traj.last().time),
    ];
    checks.push(match regularity.first_blowup {
        None => Check::new("regularity_ceiling", CheckStatus::Pass, "no norm above ceiling", 0.0, 0.0),
        Some(t) => Check::new("regularity_ceiling", CheckStatus::Fail, "no norm above ceiling", t, -1.0),
    });

    let energy_margin = records.iter().filter_map(|r| r.energy_margin).fold(f64::INFINITY, f64::min);
    checks.push(if energy_margin.is_finite() {
        let status = if periodic { CheckStatus::asserted(energy_margin >= 0.0) } else { CheckStatus::Reported };
        Check::new("energy_floor", status, "min margin >= 0", energy_margin, energy_margin)
    } else {
        Check::new("energy_floor", CheckStatus::NotApplicable, "min margin >= 0", 0.0, 0.0)
    });

    if nondecay {
        let rep = nondecay_check(&records, cfg.drift_budget);
        let status = match rep.verdict {
            Verdict::NotApplicable => CheckStatus::NotApplicable,
            _ if !periodic => CheckStatus::Reported,
            Verdict::Pass => CheckStatus::Pass,
            Verdict::Fail => CheckStatus::Fail,
        };
        let expected = format!(">= C_u (1 - tol) = {:e}", rep.floor_velocity * (1.0 - rep.tolerance));
        checks.push(Check::new("nondecay", status, expected, rep.min_sup_u, rep.margin));
        checks.push(Check::reported("nondecay_tolerance", rep.tolerance));
    }
    Ok(RunOutcome::from_checks(checks, traj.failure.map(|e| e.to_string())))
}

/// Observed orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
pub fn observed_orders(h: &[f64], err: &[f64]) -> Vec<f64> {
    (1..h.len()).map(|i| (err[i - 1] / err[i]).ln() / (h[i - 1] / h[i]).ln()).collect()
}

fn run_oracle(cfg: &RunConfig, out: &Out) -> Result<RunOutcome, RunError> {
    let params = &cfg.physics;
    let oc = &cfg.oracle;
    let g0 = cfg.grid;
    let dim = g0.dim();
    let coeff = 0.5 * (params.gamma - 1.0);
    let mut rows = Vec::new();
    let mut failure = None;
    for &n in &oc.levels {
        let grid = Grid::new(dim, &[n], &g0.extent()[..dim], g0.boundary())?;
        let velocity = VectorField::from_fn(&grid, |x| match oc.velocity {
            OracleVelocity::Stretch => [oc.rate * x[0], 0.0, 0.0],
            OracleVelocity::Uniform => [oc.rate, 0.0, 0.0],
        });
        let v = FrozenVelocity::new(velocity);
        let max_dt = v.max_dt(cfg.lin.cfl_max);
        let steps = if max_dt.is_finite() { (oc.t / max_dt).ceil().max(1.0) as usize } else { 1 };
        let dt = oc.t / steps as f64;
        let lin = LinStepConfig { dt, ..cfg.lin };
        let c0 = |x| cfg.initial.sound_speed_at(&grid, params, x).unwrap_or(params.c_inf);
        let mut c = cfg.initial.state_on(&grid, params)?.c;
        for _ in 0..steps {
            match transport_step(&c, &v, params, &lin) {
                Ok(t) => c = t.field,
                Err(e) => {
                    failure = Some(format!("transport at {n} points: {e}"));
                    break;
                }
            }
        }
        if failure.is_some() {
            break;
        }
        let exact = characteristics_oracle_with(&grid, &v, oc.t, coeff, params.c_inf, c0);
        let err = (0..grid.len())
            .filter(|&i| !grid.is_boundary_layer(i))
            .map(|i| (c.data()[i] - exact.data()[i]).abs())
            .fold(0.0f64, f64::max);
        rows.push((n, grid.spacing()[0], dt, steps, err));
    }
    let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.4).collect();
    let orders = observed_orders(&h, &errs);
    out.write("oracle.csv", |w| {
        writeln!(w, "points,h,dt,steps,linf_error,order")?;
        for (i, (n, h, dt, steps, err)) in rows.iter().enumerate() {
            let order = if i == 0 { String::new() } else { format!("{:.15e}", orders[i - 1]) };
            writeln!(w, "{n},{h:.15e},{dt:.15e},{steps},{err:.15e},{order}")?;
        }
        Ok(())
    })?;
    let mut checks: Vec<Check> = errs.iter().zip(&oc.levels).map(|(e, n)| Check::reported(&format!("linf_error_{n}"), *e)).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    if failure.is_none() {
        checks.push(Check::at_least("oracle_order", if min_order.is_nan() { f64::NEG_INFINITY } else { min_order }, oc.order_min));
    }
    Ok(RunOutcome::from_checks(checks, failure))
}

fn run_vacuum(cfg: &RunConfig, out: &Out) -> Result<RunOutcome, RunError> {
    let params = &cfg.physics;
    let s0 = cfg.initial.state_on(&cfg.grid, params)?;
    match vacuum_study(&s0.c, &s0.u, cfg.t_final, params, &cfg.lin, &cfg.picard) {
        Ok(table) => {
            out.write("vacuum.csv", |w| {
                writeln!(w, "delta,diff_to_next,clamp_events")?;
                for r in &table.rows {
                    let d = r.diff_to_next.map_or(String::new(), |d| format!("{d:.15e}"));
                    writeln!(w, "{:.15e},{d},{}", r.delta, r.clamp_events)?;
                }
                Ok(())
            })?;
            let diffs = table.differences();
            let mut checks: Vec<Check> =
                diffs.iter().enumerate().map(|(i, d)| Check::reported(&format!("difference_{}", i + 1), *d)).collect();
            // Smallest ratio d_{i+1} / d_i must stay below one.
            let worst = diffs.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
            let status = CheckStatus::asserted(table.is_cauchy());
            checks.push(Check::new("cauchy", status, "differences strictly decreasing (max ratio < 1)", worst, 1.0 - worst));
            Ok(RunOutcome::from_checks(checks, None))
        }
        Err(e) => Ok(RunOutcome::from_checks(Vec::new(), Some(e.to_string()))),
    }
}

fn run_audits(cfg: &RunConfig, out: &Out) -> Result<RunOutcome, RunError> {
    let a = &cfg.audits;
    let grid = Grid::cube(3, a.points, 2.0 * std::f64::consts::PI, Boundary::Periodic)?;
    let sizes = [a.corpus_size, 2 * a.corpus_size];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut stability = |label: String, kind: AuditKind, audit: &dyn Fn(usize) -> Result<f64, GridError>| {
        let maxima = [audit(sizes[0])?, audit(sizes[1])?];
        for (size, max_ratio) in sizes.iter().zip(maxima) {
            rows.push(AuditRow { kind: kind.clone(), corpus_size: *size, max_ratio });
        }
        let change = (maxima[1] - maxima[0]).abs() / maxima[0].abs().max(f64::MIN_POSITIVE);
        checks.push(Check::new(
            &label,
            CheckStatus::asserted(change < AUDIT_STABILITY),
            format!("relative change < {AUDIT_STABILITY:e}"),
            change,
            AUDIT_STABILITY - change,
        ));
        Ok::<(), GridError>(())
    };
    for p in [3.0, 4.0, 6.0] {
        stability(format!("gn_stability_p{p}"), AuditKind::GagliardoNirenberg { p }, &|n| {
            gn_audit(n, &grid, p, a.modes, cfg.seed)
        })?;
    }
    let inf = f64::INFINITY;
    for (label, e) in [
        ("commutator_stability_2_2_inf", CommutatorExponents { r: 2.0, a: 2.0, b: inf }),
        ("commutator_stability_2_inf_2", CommutatorExponents { r: 2.0, a: inf, b: 2.0 }),
    ] {
        stability(label.into(), AuditKind::Commutator(e), &|n| commutator_audit(n, &grid, e, a.modes, cfg.seed))?;
    }
    out.write("audits.csv", |w| write_audits_csv(w, &rows))?;

    let mut worst = 0.0f64;
    let mut failure = None;
    for i in 0..a.corpus_size {
        match elliptic_regularity_ratio(&band_limited_field(&grid, a.modes, cfg.seed, i as u64)) {
            Ok(r) => worst = worst.max(r),
            Err(EllipticError::Incompatible { .. }) => {}
            Err(e) => {
                failure = Some(format!("elliptic regularity audit: {e}"));
                break;
            }
        }
    }
    if failure.is_none() {
        checks.push(Check::at_most("elliptic_regularity", worst, ELLIPTIC_RATIO_MAX));
    }
    Ok(RunOutcome::from_checks(checks, failure))
}
