//! The linear sub-steps of one successive-approximation sweep. Every step
//! works against a frozen velocity `v` (the previous iterate):
//!
//! * `c_t + v.grad(c) + ((gamma-1)/2) c div(v) = 0` (explicit upwind + integrating factor)
//! * `psi_t + sum_l v_l d_l psi + (grad v)^T psi + grad div(v) = 0` (explicit upwind)
//! * `u_t + v.grad(v) + 2 theta c grad(c) + L u = psi.Q(c, v)` (backward Euler, CG)
//! * `E_t + v.grad(E) + (b-1) E div(v) = 0` in power-law mode

mod characteristics;
mod momentum;
mod transport;

pub use characteristics::{characteristics_oracle, characteristics_oracle_with, Interpolator};
pub use momentum::{lame_apply, momentum_step, momentum_step_forced, LameOperator};
pub use transport::{e_transport_step, psi_step, transport_step, Transported};

use thiserror::Error;

use crate::grid::{
    apply_divergence, apply_gradient, apply_vector_gradient, ScalarField, TensorField, VectorField,
};
use crate::krylov::SolveError;
use crate::state::StateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinStepError {
    #[error("CFL number {cfl:.3} exceeds {cfl_max}; step needs dt <= {required_dt:.3e}")]
    Cfl { cfl: f64, cfl_max: f64, required_dt: f64 },
    #[error("implicit viscous solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("implicit viscous operator is indefinite ({0}); check 2 alpha + 3 E >= 0")]
    Indefinite(SolveError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("non-finite values produced by the {0} step")]
    NonFinite(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinStepConfig {
    pub dt: f64,
    pub cfl_max: f64,
    /// Relative residual target of the implicit viscous solve.
    pub lin_tol: f64,
    pub lin_maxit: usize,
}

impl Default for LinStepConfig {
    fn default() -> Self {
        LinStepConfig { dt: 1e-3, cfl_max: 0.5, lin_tol: 1e-12, lin_maxit: 2000 }
    }
}

/// A known velocity field with its derivative caches.
#[derive(Clone, Debug)]
pub struct FrozenVelocity {
    v: VectorField,
    grad: TensorField,
    div: ScalarField,
    grad_div: VectorField,
    rate: f64,
}

impl FrozenVelocity {
    pub fn new(v: VectorField) -> Self {
        let grad = apply_vector_gradient(&v);
        let div = apply_divergence(&v);
        let grad_div = apply_gradient(&div);
        let h = v.grid().spacing();
        let rate = (0..v.ncomp())
            .map(|a| v.comp(a).iter().fold(0.0f64, |m, x| m.max(x.abs())) / h[a])
            .sum();
        FrozenVelocity { v, grad, div, grad_div, rate }
    }

    pub fn velocity(&self) -> &VectorField {
        &self.v
    }

    /// Entries `(i, j) = d v_i / d x_j`.
    pub fn gradient(&self) -> &TensorField {
        &self.grad
    }

    pub fn divergence(&self) -> &ScalarField {
        &self.div
    }

    pub fn grad_div(&self) -> &VectorField {
        &self.grad_div
    }

    /// `sum_l max|v_l| / h_l`; the CFL number of a step is `dt * rate`.
    pub fn advective_rate(&self) -> f64 {
        self.rate
    }

    /// Largest admissible step for `cfl_max`.
    pub fn max_dt(&self, cfl_max: f64) -> f64 {
        if self.rate == 0.0 {
            f64::INFINITY
        } else {
            cfl_max / self.rate
        }
    }

    pub(crate) fn check_cfl(&self, cfg: &LinStepConfig) -> Result<(), LinStepError> {
        let cfl = cfg.dt * self.rate;
        if cfl > cfg.cfl_max {
            Err(LinStepError::Cfl { cfl, cfl_max: cfg.cfl_max, required_dt: self.max_dt(cfg.cfl_max) })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};

    #[test]
    fn caches_match_fresh_operators() {
        let g = Grid::cube(2, 12, 6.0, Boundary::Periodic).unwrap();
        let v = VectorField::from_fn(&g, |x| [x[1].sin(), (x[0] * 2.0).cos(), 0.0]);
        let fv = FrozenVelocity::new(v.clone());
        assert_eq!(fv.divergence(), &apply_divergence(&v));
        assert_eq!(fv.gradient(), &apply_vector_gradient(&v));
        assert_eq!(fv.grad_div(), &apply_gradient(&apply_divergence(&v)));
        let h = g.spacing()[0];
        let peak = |a: usize| v.comp(a).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert_eq!(fv.advective_rate(), peak(0) / h + peak(1) / h);
    }

    #[test]
    fn cfl_violation_reports_required_dt() {
        let g = Grid::cube(1, 10, 1.0, Boundary::Periodic).unwrap();
        let fv = FrozenVelocity::new(VectorField::constant(&g, &[2.0]));
        let cfg = LinStepConfig { dt: 0.1, ..LinStepConfig::default() };
        match fv.check_cfl(&cfg) {
            Err(LinStepError::Cfl { required_dt, .. }) => assert!((required_dt - 0.025).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }
}
