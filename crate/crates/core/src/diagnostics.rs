//! Conserved quantities, the kinetic-energy / sup-norm floors, the residual of
//! the original `(rho, u)` system, regularity norms and the functional
//! inequality audits.
//!
//! The floors follow from discrete Cauchy-Schwarz, `|P|^2 <= 2 m E_k` and
//! `|P| <= m |u|_inf`, which hold exactly for Riemann sums with `rho >= 0`.
//! With relative drifts `e_m`, `e_P` at a sample this gives
//! `E_k >= C0 (1 - e_P)^2 / (1 + e_m)` and `|u|_inf >= C_u (1 - e_P) / (1 + e_m)`,
//! so the reported margins are nonnegative up to rounding.

use std::io::{self, Write};

use crate::grid::{
    apply_curl, apply_divergence, apply_gradient, apply_vector_gradient, field_norm, sobolev_norm, FieldRef, Grid,
    GridError, NormKind, ScalarField, VectorField,
};
use crate::picard::PicardTrace;
use crate::rng::band_limited_field;
use crate::state::{rho_of, FluidState, PhysParams, SecondViscosity, StateError};

/// Relative rounding allowance on the floor checks.
pub const ROUNDING: f64 = 1e-12;
const TINY: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq)]
pub struct ConservedRecord {
    pub t: f64,
    pub mass: f64,
    /// One entry per grid axis.
    pub momentum: Vec<f64>,
    pub kinetic: f64,
    pub sup_u: f64,
    /// `|P(0)|^2 / (2 m(0))`; `None` when `m(0) = 0` or `P(0) = 0`.
    pub floor_energy: Option<f64>,
    /// `|P(0)| / m(0)`.
    pub floor_velocity: Option<f64>,
    pub mass_drift: f64,
    pub momentum_drift: f64,
    /// `E_k - C0 (1 - e_P)^2 / (1 + e_m)`, when the floors are defined.
    pub energy_margin: Option<f64>,
    /// `|u|_inf - C_u (1 - e_P) / (1 + e_m)`.
    pub velocity_margin: Option<f64>,
}

impl ConservedRecord {
    pub fn momentum_norm(&self) -> f64 {
        self.momentum.iter().map(|p| p * p).sum::<f64>().sqrt()
    }
}

/// Mass, momentum, kinetic energy and `|u|_inf` of `state`. Floors and
/// drifts are taken relative to `initial` (or to `state` itself when
/// `initial` is `None`).
pub fn conserved_quantities(
    state: &FluidState,
    params: &PhysParams,
    initial: Option<&ConservedRecord>,
) -> ConservedRecord {
    let g = state.grid();
    let dim = g.dim();
    let dv = g.cell_volume();
    let mut mass = 0.0;
    let mut momentum = vec![0.0; dim];
    let mut kinetic = 0.0;
    for i in 0..g.len() {
        let rho = rho_of(state.c.data()[i], params);
        let u = state.u.at(i);
        mass += rho;
        let mut u2 = 0.0;
        for a in 0..dim {
            momentum[a] += rho * u[a];
            u2 += u[a] * u[a];
        }
        kinetic += 0.5 * rho * u2;
    }
    mass *= dv;
    kinetic *= dv;
    momentum.iter_mut().for_each(|p| *p *= dv);
    let sup_u = state.u.magnitude().max().max(0.0);
    let mut rec = ConservedRecord {
        t: state.time,
        mass,
        momentum,
        kinetic,
        sup_u,
        floor_energy: None,
        floor_velocity: None,
        mass_drift: 0.0,
        momentum_drift: 0.0,
        energy_margin: None,
        velocity_margin: None,
    };
    let (m0, p0, p0_norm) = match initial {
        Some(init) => (init.mass, init.momentum.clone(), init.momentum_norm()),
        None => (rec.mass, rec.momentum.clone(), rec.momentum_norm()),
    };
    rec.mass_drift = (rec.mass - m0).abs() / m0.max(TINY);
    let dp = rec.momentum.iter().zip(&p0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    rec.momentum_drift = dp / p0_norm.max(TINY);
    if m0 > 0.0 && p0_norm > 0.0 {
        let c0 = p0_norm * p0_norm / (2.0 * m0);
        let cu = p0_norm / m0;
        let keep = (1.0 - rec.momentum_drift).max(0.0);
        let grow = 1.0 + rec.mass_drift;
        rec.floor_energy = Some(c0);
        rec.floor_velocity = Some(cu);
        rec.energy_margin = Some(rec.kinetic - c0 * keep * keep / grow * (1.0 - ROUNDING));
        rec.velocity_margin = Some(rec.sup_u - cu * keep / grow * (1.0 - ROUNDING));
    }
    rec
}

/// Records for every sample, relative to the first.
pub fn conserved_series(samples: &[FluidState], params: &PhysParams) -> Vec<ConservedRecord> {
    let Some(first) = samples.first() else { return Vec::new() };
    let init = conserved_quantities(first, params, None);
    let mut out = vec![init.clone()];
    out.extend(samples[1..].iter().map(|s| conserved_quantities(s, params, Some(&init))));
    out
}

/// Largest relative mass and momentum drift over the records.
pub fn conservation_drift(records: &[ConservedRecord]) -> (f64, f64) {
    records.iter().fold((0.0f64, 0.0f64), |(m, p), r| (m.max(r.mass_drift), p.max(r.momentum_drift)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not-applicable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NondecayReport {
    pub verdict: Verdict,
    pub floor_velocity: f64,
    pub min_sup_u: f64,
    /// `1 - (1 - e_P) / (1 + e_m)` maximized over the samples.
    pub measured_drift: f64,
    /// `min(measured_drift, drift_budget)`.
    pub tolerance: f64,
    /// `min |u|_inf - C_u (1 - tolerance)`.
    pub margin: f64,
}

/// Checks `min_t |u(t)|_inf >= C_u (1 - tol)` where `tol` is the measured
/// drift, capped at `drift_budget` so that a run cannot excuse a decay by
/// losing its momentum.
pub fn nondecay_check(records: &[ConservedRecord], drift_budget: f64) -> NondecayReport {
    let cu = records.first().and_then(|r| r.floor_velocity);
    let Some(cu) = cu else {
        return NondecayReport {
            verdict: Verdict::NotApplicable,
            floor_velocity: 0.0,
            min_sup_u: records.iter().map(|r| r.sup_u).fold(f64::INFINITY, f64::min),
            measured_drift: 0.0,
            tolerance: 0.0,
            margin: 0.0,
        };
    };
    let min_sup_u = records.iter().map(|r| r.sup_u).fold(f64::INFINITY, f64::min);
    let measured_drift = records
        .iter()
        .map(|r| 1.0 - (1.0 - r.momentum_drift).max(0.0) / (1.0 + r.mass_drift))
        .fold(0.0f64, f64::max);
    let tolerance = measured_drift.min(drift_budget);
    let margin = min_sup_u - cu * (1.0 - tolerance) * (1.0 - ROUNDING);
    NondecayReport {
        verdict: if margin >= 0.0 { Verdict::Pass } else { Verdict::Fail },
        floor_velocity: cu,
        min_sup_u,
        measured_drift,
        tolerance,
        margin,
    }
}

fn interior_l2(grid: &Grid, comps: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for i in 0..grid.len() {
        if grid.is_boundary_layer(i) {
            continue;
        }
        for c in comps {
            sum += c[i] * c[i];
        }
    }
    (sum * grid.cell_volume()).sqrt()
}

/// Residuals of `rho_t + div(rho u) = 0` and `rho u_t + rho u.grad(u) +
/// grad(P) - div(alpha rho (grad u + grad u^T) + rho E div(u) I) = 0` at the
/// level of `state`, with backward time differences against `prev` and
/// central differences in space. L2 norms over interior nodes.
pub fn original_residual(
    state: &FluidState,
    prev: &FluidState,
    dt: f64,
    params: &PhysParams,
) -> Result<(f64, f64), StateError> {
    let g = *state.grid();
    let d = g.dim();
    let n = g.len();
    let rho = state.density(params);
    let rho_prev = prev.density(params);
    let grad_rho = apply_gradient(&rho);
    let div_u = apply_divergence(&state.u);
    let grad_u = apply_vector_gradient(&state.u);
    let mut r_mass = vec![0.0; n];
    for i in 0..n {
        let u = state.u.at(i);
        let mut adv = 0.0;
        for a in 0..d {
            adv += u[a] * grad_rho.comp(a)[i];
        }
        r_mass[i] = (rho.data()[i] - rho_prev.data()[i]) / dt + adv + rho.data()[i] * div_u.data()[i];
    }
    let e = match (&params.viscosity, &state.e_field) {
        (SecondViscosity::PowerLaw { .. }, Some(e)) => e.clone(),
        (SecondViscosity::PowerLaw { .. }, None) => return Err(StateError::MissingEField),
        (SecondViscosity::Smooth(s), _) => rho.map(|r| s.eval(r)),
    };
    let pressure = rho.map(|r| params.a * r.powf(params.gamma));
    let grad_p = apply_gradient(&pressure);
    let mut r_mom = vec![vec![0.0; n]; d];
    for i in 0..d {
        let mut div_stress = vec![0.0; n];
        for j in 0..d {
            let s: Vec<f64> = (0..n)
                .map(|p| {
                    let r = rho.data()[p];
                    let mut v = params.alpha * r * (grad_u.comp(i, j)[p] + grad_u.comp(j, i)[p]);
                    if i == j {
                        v += r * e.data()[p] * div_u.data()[p];
                    }
                    v
                })
                .collect();
            let ds = apply_gradient(&ScalarField::from_vec(&g, s).expect("grid-sized"));
            for (o, v) in div_stress.iter_mut().zip(ds.comp(j)) {
                *o += v;
            }
        }
        for p in 0..n {
            let r = rho.data()[p];
            let ut = (state.u.comp(i)[p] - prev.u.comp(i)[p]) / dt;
            let mut conv = 0.0;
            for j in 0..d {
                conv += state.u.comp(j)[p] * grad_u.comp(i, j)[p];
            }
            r_mom[i][p] = r * ut + r * conv + grad_p.comp(i)[p] - div_stress[p];
        }
    }
    Ok((interior_l2(&g, &[r_mass]), interior_l2(&g, &r_mom)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityRecord {
    pub t: f64,
    /// `|c - c_inf|_{H2}`.
    pub c_h2: f64,
    pub psi_d1: f64,
    pub u_h2: f64,
    pub ct_h1: f64,
    pub psi_t_l2: f64,
    pub u_t_l2: f64,
    /// `(int_0^t |u|_{D3}^2)^{1/2}` by the left-endpoint rule.
    pub u_d3_l2t: f64,
}

impl RegularityRecord {
    pub fn values(&self) -> [f64; 7] {
        [self.c_h2, self.psi_d1, self.u_h2, self.ct_h1, self.psi_t_l2, self.u_t_l2, self.u_d3_l2t]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub records: Vec<RegularityRecord>,
    /// First sample time at which a norm was non-finite or above the ceiling.
    pub first_blowup: Option<f64>,
}

/// Discrete norms of every sample. Time derivatives are backward differences
/// between consecutive samples (forward for the first).
pub fn regularity_monitor(samples: &[FluidState], params: &PhysParams, ceiling: f64) -> Result<RegularityReport, GridError> {
    let mut records = Vec::with_capacity(samples.len());
    let mut first_blowup = None;
    let mut d3_int = 0.0;
    for k in 0..samples.len() {
        let s = &samples[k];
        let (a, b) = match k {
            0 if samples.len() > 1 => (&samples[0], &samples[1]),
            0 => (s, s),
            _ => (&samples[k - 1], s),
        };
        let dt = b.time - a.time;
        let rate = |x: &[f64], y: &[f64]| -> Vec<f64> {
            if dt > 0.0 {
                x.iter().zip(y).map(|(p, q)| (q - p) / dt).collect()
            } else {
                vec![0.0; x.len()]
            }
        };
        let grid = s.grid();
        let ct = ScalarField::from_vec(grid, rate(a.c.data(), b.c.data()))?;
        let psi_t = VectorField::from_components(
            grid,
            (0..s.psi.ncomp()).map(|i| rate(a.psi.comp(i), b.psi.comp(i))).collect(),
        )?;
        let u_t =
            VectorField::from_components(grid, (0..s.u.ncomp()).map(|i| rate(a.u.comp(i), b.u.comp(i))).collect())?;
        if k > 0 {
            let prev = &samples[k - 1];
            let d3 = field_norm(&prev.u, NormKind::d(3))?;
            d3_int += d3 * d3 * (s.time - prev.time);
        }
        let rec = RegularityRecord {
            t: s.time,
            c_h2: sobolev_norm(&s.c.map(|v| v - params.c_inf), 2)?,
            psi_d1: field_norm(&s.psi, NormKind::d(1))?,
            u_h2: sobolev_norm(&s.u, 2)?,
            ct_h1: sobolev_norm(&ct, 1)?,
            psi_t_l2: field_norm(&psi_t, NormKind::l2())?,
            u_t_l2: field_norm(&u_t, NormKind::l2())?,
            u_d3_l2t: d3_int.sqrt(),
        };
        if first_blowup.is_none() && rec.values().iter().any(|v| !v.is_finite() || *v > ceiling) {
            first_blowup = Some(rec.t);
        }
        records.push(rec);
    }
    Ok(RegularityReport { records, first_blowup })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiConsistency {
    /// `|psi - 2 theta grad(c) / c|_inf` over interior nodes with `c > 10 eps_vac`.
    pub offvac: f64,
    /// `|curl psi|_inf` over interior nodes; `None` in 1D.
    pub curl: Option<f64>,
}

pub fn psi_consistency(state: &FluidState, params: &PhysParams, eps_vac: f64) -> PsiConsistency {
    let g = *state.grid();
    let grad = apply_gradient(&state.c);
    let two_theta = 2.0 * params.theta();
    let mut offvac = 0.0f64;
    for i in 0..g.len() {
        let c = state.c.data()[i];
        if g.is_boundary_layer(i) || c <= 10.0 * eps_vac {
            continue;
        }
        for a in 0..g.dim() {
            offvac = offvac.max((state.psi.comp(a)[i] - two_theta * grad.comp(a)[i] / c).abs());
        }
    }
    let curl = apply_curl(&state.psi).ok().map(|w| {
        let mut m = 0.0f64;
        for i in 0..g.len() {
            if !g.is_boundary_layer(i) {
                for c in w.comps() {
                    m = m.max(c[i].abs());
                }
            }
        }
        m
    });
    PsiConsistency { offvac, curl }
}

// ---------------------------------------------------------------------------
// Inequality audits
// ---------------------------------------------------------------------------

/// `|f|_p^p / (|f|_2^{(6-p)/2} |grad f|_2^{(3p-6)/2})`.
pub fn gn_ratio(f: &ScalarField, p: f64) -> Result<f64, GridError> {
    let lp = field_norm(f, NormKind::Lp(p))?;
    let l2 = field_norm(f, NormKind::l2())?;
    let d1 = field_norm(f, NormKind::d(1))?;
    let den = l2.powf((6.0 - p) / 2.0) * d1.powf((3.0 * p - 6.0) / 2.0);
    Ok(if den > 0.0 { lp.powf(p) / den } else { 0.0 })
}

/// Exponents `(r, a, b)` of the commutator estimate with `s = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutatorExponents {
    pub r: f64,
    pub a: f64,
    pub b: f64,
}

fn norm_p<'a>(f: impl Into<FieldRef<'a>>, p: f64) -> Result<f64, GridError> {
    let kind = if p.is_infinite() { NormKind::Linf } else { NormKind::Lp(p) };
    field_norm(f, kind)
}

/// `|grad(fg) - f grad(g)|_r / (|grad f|_a |g|_b + |grad f|_b |g|_a)`.
pub fn commutator_ratio(f: &ScalarField, g: &ScalarField, e: CommutatorExponents) -> Result<f64, GridError> {
    let fg = f.zip_map(g, |x, y| x * y);
    let lhs = apply_gradient(&fg).lincomb(1.0, &apply_gradient(g).scale_by(f), -1.0);
    let grad_f = apply_gradient(f);
    let num = norm_p(&lhs, e.r)?;
    let den = norm_p(&grad_f, e.a)? * norm_p(g, e.b)? + norm_p(&grad_f, e.b)? * norm_p(g, e.a)?;
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Maximum of `ratio(i)` over `0..n`, evaluated on all available cores.
fn par_max(n: usize, ratio: impl Fn(usize) -> Result<f64, GridError> + Sync) -> Result<f64, GridError> {
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(n.max(1));
    std::thread::scope(|scope| {
        let ratio = &ratio;
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let mut m = 0.0f64;
                    for i in (w..n).step_by(workers) {
                        m = m.max(ratio(i)?);
                    }
                    Ok::<f64, GridError>(m)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("audit worker panicked"))
            .try_fold(0.0f64, |m, r| r.map(|v| m.max(v)))
    })
}

/// Largest Gagliardo-Nirenberg ratio over `corpus_size` band-limited fields
/// (field `i` is stream `i` of `seed`).
pub fn gn_audit(corpus_size: usize, grid: &Grid, p: f64, modes: usize, seed: u64) -> Result<f64, GridError> {
    par_max(corpus_size, |i| gn_ratio(&band_limited_field(grid, modes, seed, i as u64), p))
}

/// Largest commutator ratio over `corpus_size` pairs (pair `i` uses streams
/// `2i` and `2i + 1`).
pub fn commutator_audit(
    corpus_size: usize,
    grid: &Grid,
    e: CommutatorExponents,
    modes: usize,
    seed: u64,
) -> Result<f64, GridError> {
    par_max(corpus_size, |i| {
        let f = band_limited_field(grid, modes, seed, 2 * i as u64);
        let g = band_limited_field(grid, modes, seed, 2 * i as u64 + 1);
        commutator_ratio(&f, &g, e)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum AuditKind {
    GagliardoNirenberg { p: f64 },
    Commutator(CommutatorExponents),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub kind: AuditKind,
    pub corpus_size: usize,
    pub max_ratio: f64,
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.15e}")
    }
}

/// `t,m,P_1..P_d,E_k,sup_u,C0,Cu,energy_margin,velocity_margin,floors_defined`.
/// Undefined floors and margins are written as zero with `floors_defined = 0`.
pub fn write_conserved_csv(out: &mut impl Write, records: &[ConservedRecord]) -> io::Result<()> {
    let dim = records.first().map_or(0, |r| r.momentum.len());
    let mut header = vec!["t".to_string(), "m".into()];
    header.extend((1..=dim).map(|a| format!("P_{a}")));
    header.extend(["E_k", "sup_u", "C0", "Cu", "energy_margin", "velocity_margin", "floors_defined"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![num(r.t), num(r.mass)];
        row.extend(r.momentum.iter().map(|p| num(*p)));
        row.push(num(r.kinetic));
        row.push(num(r.sup_u));
        for v in [r.floor_energy, r.floor_velocity, r.energy_margin, r.velocity_margin] {
            row.push(num(v.unwrap_or(0.0)));
        }
        row.push(if r.floor_energy.is_some() { "1" } else { "0" }.into());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `t,c_h2,psi_d1,u_h2,ct_h1,psi_t_l2,u_t_l2,u_d3_l2t`.
pub fn write_regularity_csv(out: &mut impl Write, records: &[RegularityRecord]) -> io::Result<()> {
    writeln!(out, "t,c_h2,psi_d1,u_h2,ct_h1,psi_t_l2,u_t_l2,u_d3_l2t")?;
    for r in records {
        let vals: Vec<String> = std::iter::once(r.t).chain(r.values()).map(num).collect();
        writeln!(out, "{}", vals.join(","))?;
    }
    Ok(())
}

/// `audit,corpus_size,p,r,a,b,max_ratio`; unused exponent columns are empty.
pub fn write_audits_csv(out: &mut impl Write, rows: &[AuditRow]) -> io::Result<()> {
    writeln!(out, "audit,corpus_size,p,r,a,b,max_ratio")?;
    for row in rows {
        let (name, p, rab) = match &row.kind {
            AuditKind::GagliardoNirenberg { p } => ("gagliardo_nirenberg", num(*p), ",,".to_string()),
            AuditKind::Commutator(e) => ("commutator", String::new(), format!("{},{},{}", num(e.r), num(e.a), num(e.b))),
        };
        writeln!(out, "{name},{},{p},{rab},{}", row.corpus_size, num(row.max_ratio))?;
    }
    Ok(())
}

/// `window,t_start,iteration,gamma,converged`; one row per iteration. Wall
/// times are left out so that the file is reproducible.
pub fn write_trace_csv(out: &mut impl Write, traces: &[PicardTrace]) -> io::Result<()> {
    writeln!(out, "window,t_start,iteration,gamma,converged")?;
    for (w, tr) in traces.iter().enumerate() {
        for (k, gamma) in tr.gammas.iter().enumerate() {
            writeln!(
                out,
                "{w},{},{},{},{}",
                num(tr.t_start),
                k + 1,
                num(*gamma),
                u8::from(tr.converged)
            )?;
        }
    }
    Ok(())
}
