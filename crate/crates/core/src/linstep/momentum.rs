use crate::grid::{apply_gradient, diff, diff_axis, Boundary, Diff, Edge, Grid, VectorField};
use crate::krylov::{conjugate_gradient, CgReport, LinearOperator, SolveError};
use crate::state::{q_from_parts, FluidState, PhysParams};

use super::{FrozenVelocity, LinStepConfig, LinStepError};

fn opposite(k: Diff) -> Diff {
    match k {
        Diff::Forward => Diff::Backward,
        _ => Diff::Forward,
    }
}

/// Applies the discrete Lame operator `L u = -div(alpha (grad u + grad u^T) +
/// Ebar div(u) I)` to a flattened `dim`-component field.
///
/// `L` is assembled in energy form: the average over every choice of
/// forward/backward differences per axis of `G^T K G`. With zero padding on
/// decay boxes this makes `L` symmetric, and positive semidefinite wherever
/// `2 alpha + 3 Ebar >= 0`.
pub fn lame_apply(grid: &Grid, alpha: f64, ebar: &[f64], u: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.len();
    assert_eq!(u.len(), d * n, "flattened field has wrong length");
    assert_eq!(ebar.len(), n);
    let kinds = [Diff::Backward, Diff::Forward];
    // one_sided[k][i][j] = D^k_j u_i
    let mut one_sided = vec![vec![vec![Vec::new(); d]; d]; 2];
    for (k, &kind) in kinds.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                one_sided[k][i][j] = diff(grid, &u[i * n..(i + 1) * n], j, kind, Edge::ZeroPad);
            }
        }
    }
    let mut out = vec![0.0; d * n];
    let mut sigma = vec![vec![0.0; n]; d * d];
    let mut tmp = vec![0.0; n];
    let patterns = 1usize << d;
    let weight = 1.0 / patterns as f64;
    for s in 0..patterns {
        let pick = |j: usize| (s >> j) & 1;
        for p in 0..n {
            let mut tr = 0.0;
            for a in 0..d {
                tr += one_sided[pick(a)][a][a][p];
            }
            for i in 0..d {
                for j in 0..d {
                    let gij = one_sided[pick(j)][i][j][p];
                    let gji = one_sided[pick(i)][j][i][p];
                    let mut v = alpha * (gij + gji);
                    if i == j {
                        v += ebar[p] * tr;
                    }
                    sigma[i * d + j][p] = v;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                diff_axis(grid, &sigma[i * d + j], j, opposite(kinds[pick(j)]), Edge::ZeroPad, &mut tmp);
                for (o, t) in out[i * n..(i + 1) * n].iter_mut().zip(&tmp) {
                    *o -= weight * t;
                }
            }
        }
    }
    out
}

/// `I + dt L`, with the decay-box outer layer held fixed (identity rows).
pub struct LameOperator<'a> {
    grid: Grid,
    alpha: f64,
    ebar: &'a [f64],
    dt: f64,
    mask: Option<Vec<bool>>,
}

impl<'a> LameOperator<'a> {
    pub fn new(grid: &Grid, alpha: f64, ebar: &'a [f64], dt: f64) -> Self {
        let mask = (grid.boundary() == Boundary::DecayBox).then(|| grid.boundary_mask());
        LameOperator { grid: *grid, alpha, ebar, dt, mask }
    }

    fn zero_layer(&self, x: &mut [f64]) {
        if let Some(mask) = &self.mask {
            let n = self.grid.len();
            for (k, v) in x.iter_mut().enumerate() {
                if mask[k % n] {
                    *v = 0.0;
                }
            }
        }
    }
}

impl LinearOperator for LameOperator<'_> {
    fn len(&self) -> usize {
        self.grid.dim() * self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.grid.len();
        let mut px = x.to_vec();
        self.zero_layer(&mut px);
        let lx = lame_apply(&self.grid, self.alpha, self.ebar, &px);
        for k in 0..x.len() {
            let fixed = self.mask.as_ref().is_some_and(|m| m[k % n]);
            y[k] = if fixed { x[k] } else { px[k] + self.dt * lx[k] };
        }
    }
}

/// One backward-Euler step of the momentum equation; see
/// [`momentum_step_forced`].
pub fn momentum_step(
    u: &VectorField,
    state: &FluidState,
    v: &FrozenVelocity,
    params: &PhysParams,
    cfg: &LinStepConfig,
) -> Result<(VectorField, CgReport), LinStepError> {
    momentum_step_forced(u, state, v, params, cfg, None)
}

/// Solves `(I + dt L(Ebar)) u_new = u + dt (-v.grad(v) - 2 theta c grad(c) +
/// psi.Q(Ebar, v) + f)`.
///
/// `c`, `psi` and the viscosity (`Ebar(c)` or the transported `E`) are taken
/// from `state`, which should already hold the new time level; `state.u` is
/// not used. On decay boxes the outer layer of `u_new` is zero.
pub fn momentum_step_forced(
    u: &VectorField,
    state: &FluidState,
    v: &FrozenVelocity,
    params: &PhysParams,
    cfg: &LinStepConfig,
    forcing: Option<&VectorField>,
) -> Result<(VectorField, CgReport), LinStepError> {
    let g = *u.grid();
    let d = g.dim();
    let n = g.len();
    let ebar = state.viscosity(params)?;
    let theta = params.theta();
    let grad_c = apply_gradient(&state.c);
    let grad_v = v.gradient();
    let q = q_from_parts(grad_v, v.divergence(), &ebar, params.alpha);
    let vel = v.velocity();
    let c = state.c.data();
    let mut rhs = vec![0.0; d * n];
    for i in 0..d {
        let ui = u.comp(i);
        let gci = grad_c.comp(i);
        for p in 0..n {
            let mut conv = 0.0;
            let mut psi_q = 0.0;
            for j in 0..d {
                conv += vel.comp(j)[p] * grad_v.comp(i, j)[p];
                psi_q += state.psi.comp(j)[p] * q.comp(j, i)[p];
            }
            let mut src = -conv - 2.0 * theta * c[p] * gci[p] + psi_q;
            if let Some(f) = forcing {
                src += f.comp(i)[p];
            }
            rhs[i * n + p] = ui[p] + cfg.dt * src;
        }
    }
    let op = LameOperator::new(&g, params.alpha, ebar.data(), cfg.dt);
    op.zero_layer(&mut rhs);
    let mut x = u.flatten();
    op.zero_layer(&mut x);
    let report = conjugate_gradient(&op, &rhs, &mut x, cfg.lin_tol, cfg.lin_maxit).map_err(|e| match e {
        SolveError::Indefinite { .. } => LinStepError::Indefinite(e),
        other => LinStepError::Solve(other),
    })?;
    let out = VectorField::from_flat(&g, d, &x).expect("same grid");
    if !out.is_finite() {
        return Err(LinStepError::NonFinite("momentum"));
    }
    Ok((out, report))
}
