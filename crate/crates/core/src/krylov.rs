//! Matrix-free conjugate gradients for the symmetric positive (semi)definite
//! operators of the implicit viscous step and the Poisson solves.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("non-positive curvature {curvature:.3e} at iteration {iteration}; operator is not SPD")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("non-finite value in CG iteration {0}")]
    NonFinite(usize),
}

#[allow(clippy::len_without_is_empty)]
pub trait LinearOperator {
    fn len(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Projects onto the range of the operator (e.g. removes the mean for a
    /// periodic Laplacian). Identity by default.
    fn project(&self, _x: &mut [f64]) {}
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` to `|r| <= tol*|b|`, starting from `x`.
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport, SolveError> {
    let n = op.len();
    debug_assert_eq!(b.len(), n);
    let mut rhs = b.to_vec();
    op.project(&mut rhs);
    op.project(x);
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, residual: 0.0 });
    }
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    op.project(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let res = rr.sqrt() / bnorm;
        if res <= tol {
            return Ok(CgReport { iterations: it, residual: res });
        }
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !curvature.is_finite() {
            return Err(SolveError::NonFinite(it));
        }
        if curvature <= 0.0 {
            return Err(SolveError::Indefinite { iteration: it, curvature });
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        op.project(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / bnorm;
    if res <= tol {
        Ok(CgReport { iterations: max_iter, residual: res })
    } else {
        Err(SolveError::NotConverged { iterations: max_iter, residual: res })
    }
}
