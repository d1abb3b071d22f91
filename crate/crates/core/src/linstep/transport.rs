use crate::grid::{diff_axis, Boundary, Diff, Edge, ScalarField, VectorField};
use crate::state::{rho_of, PhysParams};

use super::{FrozenVelocity, LinStepConfig, LinStepError};

/// Result of an explicit scalar transport step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transported {
    pub field: ScalarField,
    /// Nodes where a negative undershoot was clamped to zero.
    pub clamped: usize,
}

/// First-order upwind update `f - dt * sum_l v_l d_l f` (donor cell).
fn upwind(f: &[f64], v: &FrozenVelocity, dt: f64) -> Vec<f64> {
    let g = *v.velocity().grid();
    let n = g.len();
    let mut out = f.to_vec();
    let mut back = vec![0.0; n];
    let mut fwd = vec![0.0; n];
    for axis in 0..g.dim() {
        diff_axis(&g, f, axis, Diff::Backward, Edge::ZeroPad, &mut back);
        diff_axis(&g, f, axis, Diff::Forward, Edge::ZeroPad, &mut fwd);
        let vel = v.velocity().comp(axis);
        for i in 0..n {
            let w = vel[i];
            let slope = if w > 0.0 { back[i] } else { fwd[i] };
            out[i] -= dt * w * slope;
        }
    }
    out
}

fn freeze_boundary(g: &crate::grid::Grid, f: &mut [f64], value: f64) {
    if g.boundary() == Boundary::DecayBox {
        for (i, x) in f.iter_mut().enumerate() {
            if g.is_boundary_layer(i) {
                *x = value;
            }
        }
    }
}

/// Upwind advection followed by the integrating factor `exp(-dt k div v)`.
fn advect_with_decay(
    f: &ScalarField,
    v: &FrozenVelocity,
    coeff: f64,
    far_value: f64,
    cfg: &LinStepConfig,
) -> Result<Transported, LinStepError> {
    v.check_cfl(cfg)?;
    let g = *f.grid();
    let mut out = upwind(f.data(), v, cfg.dt);
    let div = v.divergence().data();
    let mut clamped = 0;
    for (x, d) in out.iter_mut().zip(div) {
        *x *= (-cfg.dt * coeff * d).exp();
        if *x < 0.0 {
            *x = 0.0;
            clamped += 1;
        }
    }
    freeze_boundary(&g, &mut out, far_value);
    let field = ScalarField::from_vec(&g, out).expect("same grid");
    if !field.is_finite() {
        return Err(LinStepError::NonFinite("transport"));
    }
    Ok(Transported { field, clamped })
}

/// One step of `c_t + v.grad(c) + ((gamma-1)/2) c div(v) = 0`.
pub fn transport_step(
    c: &ScalarField,
    v: &FrozenVelocity,
    params: &PhysParams,
    cfg: &LinStepConfig,
) -> Result<Transported, LinStepError> {
    advect_with_decay(c, v, 0.5 * (params.gamma - 1.0), params.c_inf, cfg)
}

/// One step of `E_t + v.grad(E) + (b-1) E div(v) = 0`. The far-field value
/// is `E(rho(c_inf))`.
pub fn e_transport_step(
    e: &ScalarField,
    v: &FrozenVelocity,
    b: f64,
    params: &PhysParams,
    cfg: &LinStepConfig,
) -> Result<Transported, LinStepError> {
    let far = rho_of(params.c_inf, params).powf(b - 1.0);
    advect_with_decay(e, v, b - 1.0, far, cfg)
}

/// One step of `psi_t + sum_l v_l d_l psi + (grad v)^T psi + grad div(v) = 0`.
pub fn psi_step(psi: &VectorField, v: &FrozenVelocity, cfg: &LinStepConfig) -> Result<VectorField, LinStepError> {
    v.check_cfl(cfg)?;
    let g = *psi.grid();
    let d = g.dim();
    let grad = v.gradient();
    let mut comps = Vec::with_capacity(d);
    for i in 0..d {
        let mut out = upwind(psi.comp(i), v, cfg.dt);
        let gd = v.grad_div().comp(i);
        for (p, o) in out.iter_mut().enumerate() {
            // (B psi)_i = sum_j d_i v_j psi_j
            let mut b_psi = 0.0;
            for j in 0..d {
                b_psi += grad.comp(j, i)[p] * psi.comp(j)[p];
            }
            *o -= cfg.dt * (b_psi + gd[p]);
        }
        freeze_boundary(&g, &mut out, 0.0);
        comps.push(out);
    }
    let out = VectorField::from_components(&g, comps).expect("same grid");
    if !out.is_finite() {
        return Err(LinStepError::NonFinite("psi"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid, VectorField};
    use crate::state::PhysParams;
    use std::f64::consts::PI;

    fn cfg(dt: f64) -> LinStepConfig {
        LinStepConfig { dt, cfl_max: 1.0, ..LinStepConfig::default() }
    }

    #[test]
    fn no_flow_leaves_fields_unchanged() {
        let g = Grid::cube(2, 8, 1.0, Boundary::Periodic).unwrap();
        let c = ScalarField::from_fn(&g, |x| 1.0 + (6.0 * x[0]).sin() * x[1]);
        let v = FrozenVelocity::new(VectorField::zeros(&g));
        let p = PhysParams::default();
        let out = transport_step(&c, &v, &p, &cfg(0.1)).unwrap();
        assert_eq!(out.field, c);
        assert_eq!(out.clamped, 0);
        assert_eq!(e_transport_step(&c, &v, 1.5, &p, &cfg(0.1)).unwrap().field, c);
        let psi = VectorField::from_fn(&g, |x| [x[0], x[1] * 2.0, 0.0]);
        assert_eq!(psi_step(&psi, &v, &cfg(0.1)).unwrap(), psi);
    }

    #[test]
    fn uniform_translation_is_first_order() {
        let err = |n: usize| {
            let g = Grid::cube(1, n, 2.0 * PI, Boundary::Periodic).unwrap();
            let u = 0.8;
            let h = g.spacing()[0];
            let dt = 0.5 * h / u;
            let steps = (1.0 / dt).round() as usize;
            let dt = 1.0 / steps as f64;
            let v = FrozenVelocity::new(VectorField::constant(&g, &[u]));
            let mut c = ScalarField::from_fn(&g, |x| 2.0 + x[0].sin());
            for _ in 0..steps {
                c = transport_step(&c, &v, &PhysParams::default(), &cfg(dt)).unwrap().field;
            }
            let exact = ScalarField::from_fn(&g, |x| 2.0 + (x[0] - u).sin());
            c.data().iter().zip(exact.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let ratio = err(128) / err(256);
        assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
    }

    #[test]
    fn maximum_principle_for_divergence_free_flow() {
        let g = Grid::cube(2, 24, 2.0 * PI, Boundary::Periodic).unwrap();
        // Cellular flow, discretely divergence-free under central differences
        // only approximately, so check the pure advection part.
        let v = FrozenVelocity::new(VectorField::constant(&g, &[0.7, -0.4]));
        let mut c = ScalarField::from_fn(&g, |x| (x[0].sin() * x[1].cos()).max(0.0));
        let (lo, hi) = (c.min(), c.max());
        for _ in 0..50 {
            c = transport_step(&c, &v, &PhysParams::default(), &cfg(0.1)).unwrap().field;
            assert!(c.min() >= lo && c.max() <= hi);
        }
    }

    #[test]
    fn psi_constant_decays_under_stretching() {
        let g = Grid::cube(3, 12, 4.0, Boundary::DecayBox).unwrap();
        let v = FrozenVelocity::new(VectorField::from_fn(&g, |x| [x[0], 0.0, 0.0]));
        let dt = 0.01;
        let mut psi = VectorField::constant(&g, &[1.0, 2.0, -1.0]);
        let steps = 50;
        for _ in 0..steps {
            psi = psi_step(&psi, &v, &cfg(dt)).unwrap();
        }
        let t = dt * steps as f64;
        let centre = g.ravel([6, 6, 6]);
        let p = psi.at(centre);
        // Forward Euler on psi' = -psi gives (1 - dt)^n; exact e^{-t}.
        assert!((p[0] - (1.0 - dt).powi(steps)).abs() < 1e-12);
        assert!((p[0] - (-t).exp()).abs() < 2.0 * dt);
        assert!((p[1] - 2.0).abs() < 1e-12 && (p[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_rejected() {
        let g = Grid::cube(1, 10, 1.0, Boundary::Periodic).unwrap();
        let v = FrozenVelocity::new(VectorField::constant(&g, &[1.0]));
        let c = ScalarField::constant(&g, 1.0);
        let err = transport_step(&c, &v, &PhysParams::default(), &cfg(0.5)).unwrap_err();
        assert!(matches!(err, LinStepError::Cfl { .. }));
        assert!(psi_step(&VectorField::zeros(&g), &v, &cfg(0.5)).is_err());
    }

    #[test]
    fn decay_box_freezes_far_field() {
        let g = Grid::cube(1, 16, 8.0, Boundary::DecayBox).unwrap();
        let p = PhysParams { c_inf: 0.25, ..PhysParams::default() };
        let v = FrozenVelocity::new(VectorField::from_fn(&g, |x| [0.1 * x[0], 0.0, 0.0]));
        let c = ScalarField::from_fn(&g, |x| 1.0 + (-x[0] * x[0]).exp());
        let out = transport_step(&c, &v, &p, &cfg(0.05)).unwrap().field;
        assert_eq!(out.data()[0], 0.25);
        assert_eq!(out.data()[15], 0.25);
    }
}
