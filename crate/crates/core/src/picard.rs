//! Successive approximation over time windows.
//!
//! Within a window of `n` steps every iterate freezes the velocity history
//! of the previous one: iterate `k+1` transports `(c, psi, E)` and advances
//! `u` with the velocity levels `u^k(t_m)`. Iterate 0 keeps `(c, psi, E)` at
//! their initial values and takes `u^0` from implicit heat steps started at
//! `u0`. Convergence is measured by
//! `Gamma = |dc|_{H1}^2 + |dpsi|_{L2}^2 + |du|_{H1}^2` between consecutive
//! iterates at the window end.

use std::time::Instant;

use thiserror::Error;

use crate::elliptic::{implicit_heat_step, EllipticError};
use crate::grid::{field_norm, sobolev_norm, GridError, NormKind, ScalarField, VectorField};
use crate::linstep::{
    e_transport_step, momentum_step, psi_step, transport_step, FrozenVelocity, LinStepConfig, LinStepError,
};
use crate::state::{FluidState, PhysParams, SecondViscosity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PicardError {
    #[error(transparent)]
    Step(#[from] LinStepError),
    #[error("initial heat-flow iterate: {0}")]
    Heat(#[from] EllipticError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid successive-approximation setting: {0}")]
    Config(String),
    #[error("window at t = {t:.6} did not converge in {iterations} iterations (last Gamma {gamma:.3e})")]
    NotConverged { t: f64, iterations: usize, gamma: f64 },
}

/// How the velocity is frozen inside a window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FreezeMode {
    /// Iterate on whole-window velocity histories.
    #[default]
    Window,
    /// Single pass re-freezing at the latest velocity each step (comparison only).
    PerStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardConfig {
    pub window: f64,
    pub max_iter: usize,
    pub gamma_tol: f64,
    /// Descending regularization shifts for [`vacuum_study`].
    pub delta_list: Vec<f64>,
    pub freeze: FreezeMode,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            window: 0.01,
            max_iter: 20,
            gamma_tol: 1e-10,
            delta_list: vec![1e-2, 1e-3, 1e-4],
            freeze: FreezeMode::Window,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self, dt: f64) -> Result<(), PicardError> {
        if !(self.window.is_finite() && self.window >= dt) {
            return Err(PicardError::Config(format!("window {} must be at least dt = {dt}", self.window)));
        }
        if self.max_iter == 0 {
            return Err(PicardError::Config("max_iter must be positive".into()));
        }
        if !(self.gamma_tol > 0.0) {
            return Err(PicardError::Config("gamma_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PicardTrace {
    pub t_start: f64,
    pub window: f64,
    /// `Gamma^1, Gamma^2, ...`
    pub gammas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl PicardTrace {
    /// `Gamma^{k+1} / Gamma^k` for consecutive iterations with `Gamma^k > 0`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.gammas.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }
}

/// `|c1-c2|_{H1}^2 + |psi1-psi2|_{L2}^2 + |u1-u2|_{H1}^2`.
pub fn gamma_metric(s1: &FluidState, s2: &FluidState) -> Result<f64, GridError> {
    if s1.grid() != s2.grid() {
        return Err(GridError::ShapeMismatch);
    }
    let dc = s1.c.zip_map(&s2.c, |a, b| a - b);
    let dpsi = s1.psi.lincomb(1.0, &s2.psi, -1.0);
    let du = s1.u.lincomb(1.0, &s2.u, -1.0);
    let hc = sobolev_norm(&dc, 1)?;
    let lpsi = field_norm(&dpsi, NormKind::l2())?;
    let hu = sobolev_norm(&du, 1)?;
    Ok(hc * hc + lpsi * lpsi + hu * hu)
}

fn steps_for(window: f64, dt: f64) -> (usize, f64) {
    let n = ((window / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, window / n as f64)
}

/// Advances every unknown one step against the frozen velocity `v`.
fn advance(
    state: &mut FluidState,
    v: &FrozenVelocity,
    params: &PhysParams,
    cfg: &LinStepConfig,
) -> Result<(), PicardError> {
    let c = transport_step(&state.c, v, params, cfg)?;
    state.clamp_events += c.clamped as u64;
    state.c = c.field;
    state.psi = psi_step(&state.psi, v, cfg)?;
    if let (SecondViscosity::PowerLaw { b }, Some(e)) = (&params.viscosity, &state.e_field) {
        let e = e_transport_step(e, v, *b, params, cfg)?;
        state.clamp_events += e.clamped as u64;
        state.e_field = Some(e.field);
    }
    let (u, _) = momentum_step(&state.u, state, v, params, cfg)?;
    state.u = u;
    state.time += cfg.dt;
    Ok(())
}

/// One window of successive approximation from `state0`.
///
/// A window that exhausts `max_iter` returns its last iterate with
/// `converged = false`; the caller decides whether to retry.
pub fn picard_window(
    state0: &FluidState,
    params: &PhysParams,
    lin: &LinStepConfig,
    pic: &PicardConfig,
) -> Result<(FluidState, PicardTrace), PicardError> {
    pic.validate(lin.dt)?;
    let start = Instant::now();
    let (n, dt) = steps_for(pic.window, lin.dt);
    let cfg = LinStepConfig { dt, ..*lin };
    let mut trace = PicardTrace { t_start: state0.time, window: pic.window, ..PicardTrace::default() };

    let mut levels = Vec::with_capacity(n + 1);
    levels.push(state0.u.clone());
    for m in 0..n {
        let next = implicit_heat_step(&levels[m], dt, lin.lin_tol, lin.lin_maxit)?;
        levels.push(next);
    }
    let mut prev = FluidState { u: levels[n].clone(), time: state0.time + pic.window, ..state0.clone() };

    if pic.freeze == FreezeMode::PerStep {
        let mut s = state0.clone();
        for _ in 0..n {
            let v = FrozenVelocity::new(s.u.clone());
            advance(&mut s, &v, params, &cfg)?;
        }
        s.time = state0.time + pic.window;
        trace.gammas.push(gamma_metric(&s, &prev)?);
        trace.iterations = 1;
        trace.converged = true;
        trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok((s, trace));
    }

    for _ in 0..pic.max_iter {
        let mut s = state0.clone();
        let mut next_levels = Vec::with_capacity(n + 1);
        next_levels.push(s.u.clone());
        for level in levels.iter().take(n) {
            let v = FrozenVelocity::new(level.clone());
            advance(&mut s, &v, params, &cfg)?;
            next_levels.push(s.u.clone());
        }
        s.time = state0.time + pic.window;
        let gamma = gamma_metric(&s, &prev)?;
        if !gamma.is_finite() {
            return Err(LinStepError::NonFinite("successive approximation").into());
        }
        trace.gammas.push(gamma);
        trace.iterations += 1;
        levels = next_levels;
        prev = s;
        if gamma <= pic.gamma_tol {
            trace.converged = true;
            break;
        }
    }
    trace.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((prev, trace))
}

/// States and window traces of a march.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// The initial state followed by every `sample_every`-th window end (and
    /// the final state).
    pub samples: Vec<FluidState>,
    pub traces: Vec<PicardTrace>,
    /// Set when the march stopped before `t_final`.
    pub failure: Option<PicardError>,
}

impl Trajectory {
    pub fn last(&self) -> &FluidState {
        self.samples.last().expect("trajectory holds the initial state")
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn try_window(
    state: &FluidState,
    params: &PhysParams,
    lin: &LinStepConfig,
    pic: &PicardConfig,
) -> Result<(FluidState, PicardTrace), PicardError> {
    let (s, trace) = picard_window(state, params, lin, pic)?;
    if trace.converged {
        Ok((s, trace))
    } else {
        Err(PicardError::NotConverged {
            t: state.time,
            iterations: trace.iterations,
            gamma: trace.gammas.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Chains windows over `[t0, t_final]`. A failed window is retried once as
/// two half windows; a second failure ends the march with a partial
/// trajectory.
pub fn time_march(
    state0: &FluidState,
    t_final: f64,
    params: &PhysParams,
    lin: &LinStepConfig,
    pic: &PicardConfig,
    sample_every: usize,
) -> Trajectory {
    let mut traj = Trajectory { samples: vec![state0.clone()], ..Trajectory::default() };
    if let Err(e) = pic.validate(lin.dt) {
        traj.failure = Some(e);
        return traj;
    }
    let sample_every = sample_every.max(1);
    let mut state = state0.clone();
    let mut windows = 0usize;
    let eps = 1e-12 * t_final.abs().max(1.0);
    while state.time < t_final - eps {
        let w = pic.window.min(t_final - state.time);
        let cfg = PicardConfig { window: w, ..pic.clone() };
        let lin_w = LinStepConfig { dt: lin.dt.min(w), ..*lin };
        let outcome = match try_window(&state, params, &lin_w, &cfg) {
            Ok(r) => Ok(vec![r]),
            Err(_) => {
                let half = PicardConfig { window: 0.5 * w, ..cfg.clone() };
                let lin_h = LinStepConfig { dt: lin_w.dt.min(0.5 * w), ..lin_w };
                try_window(&state, params, &lin_h, &half)
                    .and_then(|first| {
                        let second = try_window(&first.0, params, &lin_h, &half)?;
                        Ok(vec![first, second])
                    })
            }
        };
        match outcome {
            Ok(parts) => {
                for (s, trace) in parts {
                    traj.traces.push(trace);
                    state = s;
                }
                windows += 1;
                if windows.is_multiple_of(sample_every) {
                    traj.samples.push(state.clone());
                }
            }
            Err(e) => {
                traj.failure = Some(e);
                break;
            }
        }
    }
    if traj.last().time != state.time {
        traj.samples.push(state);
    }
    traj
}

/// One row of the vacuum regularization table.
#[derive(Clone, Debug, PartialEq)]
pub struct VacuumRow {
    pub delta: f64,
    /// `|c^d_i - c^d_{i+1}|_2 + |u^d_i - u^d_{i+1}|_2` at the final time;
    /// `None` on the last row.
    pub diff_to_next: Option<f64>,
    pub clamp_events: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VacuumTable {
    pub rows: Vec<VacuumRow>,
    pub t_final: f64,
}

impl VacuumTable {
    pub fn differences(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.diff_to_next).collect()
    }

    /// Strictly decreasing difference column.
    pub fn is_cauchy(&self) -> bool {
        let d = self.differences();
        !d.is_empty() && d.windows(2).all(|w| w[1] < w[0])
    }
}

/// Regularized state for shift `delta`: `c0 + delta`, with `psi` recomputed
/// from the shifted sound speed.
pub fn regularized_state(c0: &ScalarField, u0: &VectorField, params: &PhysParams, delta: f64) -> (FluidState, PhysParams) {
    let p = PhysParams { c_inf: params.c_inf + delta, ..params.clone() };
    let c = c0.map(|v| v + delta);
    (FluidState::from_sound_speed(c, u0.clone(), &p), p)
}

/// Runs [`time_march`] from `c0 + delta` for every shift in
/// `pic.delta_list` (concurrently) and tabulates consecutive differences.
pub fn vacuum_study(
    c0: &ScalarField,
    u0: &VectorField,
    t_final: f64,
    params: &PhysParams,
    lin: &LinStepConfig,
    pic: &PicardConfig,
) -> Result<VacuumTable, PicardError> {
    let deltas = &pic.delta_list;
    if deltas.len() < 3 {
        return Err(PicardError::Config("delta_list needs at least three entries".into()));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(PicardError::Config("delta_list must be positive and strictly descending".into()));
    }
    let finals: Vec<Result<FluidState, PicardError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = deltas
            .iter()
            .map(|&delta| {
                scope.spawn(move || {
                    let (s0, p) = regularized_state(c0, u0, params, delta);
                    let traj = time_march(&s0, t_final, &p, lin, pic, usize::MAX);
                    match traj.failure {
                        Some(e) => Err(e),
                        None => Ok(traj.last().clone()),
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("delta run panicked")).collect()
    });
    let finals = finals.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let diff_to_next = match finals.get(i + 1) {
            Some(next) => {
                let a = &finals[i];
                let dc = a.c.zip_map(&next.c, |x, y| x - y);
                let du = a.u.lincomb(1.0, &next.u, -1.0);
                Some(field_norm(&dc, NormKind::l2())? + field_norm(&du, NormKind::l2())?)
            }
            None => None,
        };
        rows.push(VacuumRow { delta, diff_to_next, clamp_events: finals[i].clamp_events });
    }
    Ok(VacuumTable { rows, t_final })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};
    use std::f64::consts::PI;

    fn lin(dt: f64) -> LinStepConfig {
        LinStepConfig { dt, cfl_max: 0.5, lin_tol: 1e-13, lin_maxit: 2000 }
    }

    #[test]
    fn gamma_metric_cases() {
        let g = Grid::cube(2, 8, 3.0, Boundary::DecayBox).unwrap();
        let p = PhysParams::default();
        let a = FluidState::from_sound_speed(
            ScalarField::from_fn(&g, |x| 1.0 + 0.1 * x[0]),
            VectorField::from_fn(&g, |x| [x[1], 0.0, 0.0]),
            &p,
        );
        assert_eq!(gamma_metric(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.c = a.c.map(|v| v + 1.0);
        assert!((gamma_metric(&a, &b).unwrap() - g.volume()).abs() < 1e-12);
        b.u = a.u.map(|v| 2.0 * v);
        assert_eq!(gamma_metric(&a, &b).unwrap(), gamma_metric(&b, &a).unwrap());
        let other = FluidState::vacuum(&Grid::cube(2, 9, 3.0, Boundary::DecayBox).unwrap(), &p);
        assert!(gamma_metric(&a, &other).is_err());
    }

    #[test]
    fn vacuum_is_a_fixed_point_in_one_iteration() {
        let g = Grid::cube(2, 8, 4.0, Boundary::DecayBox).unwrap();
        let p = PhysParams::default();
        let s = FluidState::vacuum(&g, &p);
        let (out, trace) = picard_window(&s, &p, &lin(0.01), &PicardConfig::default()).unwrap();
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.gammas, vec![0.0]);
        assert!(trace.converged);
        assert_eq!(out.c, s.c);
        assert_eq!(out.u, s.u);
    }

    #[test]
    fn shear_mode_decays_by_compounded_factor() {
        let g = Grid::cube(3, 12, 2.0 * PI, Boundary::Periodic).unwrap();
        let p = PhysParams { c_inf: 1.0, ..PhysParams::default() };
        let u0 = VectorField::from_fn(&g, |x| [0.0, 0.1 * x[0].sin(), 0.0]);
        let s = FluidState::from_sound_speed(ScalarField::constant(&g, 1.0), u0.clone(), &p);
        let dt = 0.01;
        let pic = PicardConfig { window: 0.1, ..PicardConfig::default() };
        let traj = time_march(&s, 1.0, &p, &lin(dt), &pic, 1);
        assert!(traj.completed());
        let h = g.spacing()[0];
        let lam = (2.0 - 2.0 * h.cos()) / (h * h);
        let factor = (1.0 / (1.0 + dt * p.alpha * lam)).powi(100);
        let end = traj.last();
        assert!((end.time - 1.0).abs() < 1e-12);
        for (a, b) in end.u.comp(1).iter().zip(u0.comp(1)) {
            assert!((a - factor * b).abs() < 1e-8);
        }
    }

    #[test]
    fn contraction_on_smooth_positive_run() {
        let g = Grid::cube(1, 64, 2.0 * PI, Boundary::Periodic).unwrap();
        let p = PhysParams { c_inf: 1.0, ..PhysParams::default() };
        let c = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * x[0].sin());
        let u = VectorField::from_fn(&g, |x| [0.3 * (2.0 * x[0]).cos() + 0.1, 0.0, 0.0]);
        let s = FluidState::from_sound_speed(c, u, &p);
        let pic = PicardConfig { window: 0.01, ..PicardConfig::default() };
        let (_, trace) = picard_window(&s, &p, &lin(0.0025), &pic).unwrap();
        assert!(trace.converged, "{:?}", trace.gammas);
        assert!(trace.contraction_ratios().iter().all(|&r| r < 1.0), "{:?}", trace.gammas);
    }

    #[test]
    fn per_step_freezing_is_a_single_pass() {
        let g = Grid::cube(1, 32, 2.0 * PI, Boundary::Periodic).unwrap();
        let p = PhysParams { c_inf: 1.0, ..PhysParams::default() };
        let s = FluidState::from_sound_speed(
            ScalarField::from_fn(&g, |x| 1.0 + 0.1 * x[0].cos()),
            VectorField::from_fn(&g, |x| [0.2 * x[0].sin(), 0.0, 0.0]),
            &p,
        );
        let base = PicardConfig { window: 0.02, ..PicardConfig::default() };
        let per = PicardConfig { freeze: FreezeMode::PerStep, ..base.clone() };
        let (a, ta) = picard_window(&s, &p, &lin(0.005), &base).unwrap();
        let (b, tb) = picard_window(&s, &p, &lin(0.005), &per).unwrap();
        assert_eq!(tb.iterations, 1);
        assert!(ta.iterations > 1);
        assert!(gamma_metric(&a, &b).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_bad_configs() {
        let g = Grid::cube(1, 8, 1.0, Boundary::Periodic).unwrap();
        let p = PhysParams::default();
        let s = FluidState::vacuum(&g, &p);
        let pic = PicardConfig { window: 0.001, ..PicardConfig::default() };
        assert!(matches!(picard_window(&s, &p, &lin(0.01), &pic), Err(PicardError::Config(_))));
        let pic = PicardConfig { delta_list: vec![1e-2, 1e-3], ..PicardConfig::default() };
        assert!(vacuum_study(&s.c, &s.u, 0.1, &p, &lin(0.01), &pic).is_err());
    }

    #[test]
    fn non_convergence_aborts_with_partial_trajectory() {
        let g = Grid::cube(1, 32, 2.0 * PI, Boundary::Periodic).unwrap();
        let p = PhysParams { c_inf: 1.0, ..PhysParams::default() };
        let s = FluidState::from_sound_speed(
            ScalarField::from_fn(&g, |x| 1.0 + 0.3 * x[0].cos()),
            VectorField::from_fn(&g, |x| [0.5 * x[0].sin(), 0.0, 0.0]),
            &p,
        );
        let pic = PicardConfig { window: 0.05, max_iter: 1, gamma_tol: 1e-30, ..PicardConfig::default() };
        let traj = time_march(&s, 0.2, &p, &lin(0.01), &pic, 1);
        assert!(matches!(traj.failure, Some(PicardError::NotConverged { .. })));
        assert_eq!(traj.samples.len(), 1);
    }

    #[test]
    fn shifted_constant_state_table() {
        // c0 = 0, u = 0: each shifted run stays at c = delta, so consecutive
        // differences are |delta_i - delta_{i+1}| times sqrt(volume).
        let g = Grid::cube(1, 16, 4.0, Boundary::DecayBox).unwrap();
        let p = PhysParams::default();
        let pic = PicardConfig::default();
        let table =
            vacuum_study(&ScalarField::zeros(&g), &VectorField::zeros(&g), 0.05, &p, &lin(0.01), &pic).unwrap();
        let d = table.differences();
        let vol = g.volume().sqrt();
        for (i, diff) in d.iter().enumerate() {
            let expect = (pic.delta_list[i] - pic.delta_list[i + 1]) * vol;
            assert!((diff - expect).abs() < 1e-12, "{diff} {expect}");
        }
        assert!(table.is_cauchy());
    }
}
