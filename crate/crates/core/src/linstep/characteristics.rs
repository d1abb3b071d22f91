use crate::grid::{Boundary, Grid, Point, ScalarField};
use crate::state::PhysParams;

use super::FrozenVelocity;

/// Tensor-product cubic Lagrange interpolation of nodal data.
#[derive(Clone, Copy, Debug)]
pub struct Interpolator<'a> {
    grid: Grid,
    data: &'a [f64],
}

impl<'a> Interpolator<'a> {
    pub fn new(field: &'a ScalarField) -> Self {
        Interpolator { grid: *field.grid(), data: field.data() }
    }

    pub(crate) fn from_slice(grid: &Grid, data: &'a [f64]) -> Self {
        Interpolator { grid: *grid, data }
    }

    /// Per-axis stencil start and weights, or `None` outside a decay box.
    fn axis_weights(&self, axis: usize, x: f64) -> Option<(isize, [f64; 4])> {
        let n = self.grid.points()[axis];
        let h = self.grid.spacing()[axis];
        let s = (x - self.grid.axis_coord(axis, 0)) / h;
        let start = match self.grid.boundary() {
            Boundary::Periodic => s.floor() as isize - 1,
            Boundary::DecayBox => {
                let half = 0.5 * self.grid.extent()[axis];
                if !(x.abs() <= half) {
                    return None;
                }
                (s.floor() as isize - 1).clamp(0, n as isize - 4)
            }
        };
        let t = s - start as f64;
        let w = [
            -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
            t * (t - 2.0) * (t - 3.0) / 2.0,
            -t * (t - 1.0) * (t - 3.0) / 2.0,
            t * (t - 1.0) * (t - 2.0) / 6.0,
        ];
        Some((start, w))
    }

    /// Interpolated value, or `None` if `x` lies outside a decay box.
    pub fn eval(&self, x: Point) -> Option<f64> {
        let dim = self.grid.dim();
        let pts = self.grid.points();
        let strides = self.grid.strides();
        let mut starts = [0isize; 3];
        let mut weights = [[1.0, 0.0, 0.0, 0.0]; 3];
        let mut taps = [1usize; 3];
        for a in 0..dim {
            let (s, w) = self.axis_weights(a, x[a])?;
            starts[a] = s;
            weights[a] = w;
            taps[a] = 4;
        }
        let wrap = |a: usize, i: isize| -> usize { i.rem_euclid(pts[a] as isize) as usize };
        let mut sum = 0.0;
        for i in 0..taps[0] {
            let o0 = wrap(0, starts[0] + i as isize) * strides[0];
            for j in 0..taps[1] {
                let o1 = o0 + wrap(1, starts[1] + j as isize) * strides[1];
                let w01 = weights[0][i] * weights[1][j];
                for k in 0..taps[2] {
                    let o2 = o1 + wrap(2, starts[2] + k as isize) * strides[2];
                    sum += w01 * weights[2][k] * self.data[o2];
                }
            }
        }
        Some(sum)
    }
}

/// Exact solution of `c_t + v.grad(c) + k c div(v) = 0` for the frozen `v`,
/// evaluated at every node by integrating characteristics backwards to time
/// zero with RK4. Characteristics that leave a decay box return
/// `far_value`. `c0` is evaluated at the foot of each characteristic.
pub fn characteristics_oracle_with(
    grid: &Grid,
    v: &FrozenVelocity,
    t: f64,
    coeff: f64,
    far_value: f64,
    c0: impl Fn(Point) -> f64,
) -> ScalarField {
    let dim = grid.dim();
    let vel = v.velocity();
    let interp_v: Vec<Interpolator> = (0..dim).map(|a| Interpolator::from_slice(grid, vel.comp(a))).collect();
    let interp_div = Interpolator::new(v.divergence());
    let max_grad = v.gradient().comps().iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let steps = ((t.abs() * max_grad / 0.05).ceil() as usize).max(16);
    let ds = t / steps as f64;
    // Right-hand side in reversed time: dX/dtau = -v(X), dI/dtau = div v(X).
    let rhs = |x: &Point| -> Option<([f64; 3], f64)> {
        let mut dx = [0.0; 3];
        for a in 0..dim {
            dx[a] = -interp_v[a].eval(*x)?;
        }
        Some((dx, interp_div.eval(*x)?))
    };
    let shift = |x: &Point, k: &[f64; 3], s: f64| -> Point {
        let mut y = *x;
        for a in 0..dim {
            y[a] += s * k[a];
        }
        y
    };
    ScalarField::from_fn(grid, |start| {
        let mut x = start;
        let mut integral = 0.0;
        for _ in 0..steps {
            let Some((k1, i1)) = rhs(&x) else { return far_value };
            let Some((k2, i2)) = rhs(&shift(&x, &k1, 0.5 * ds)) else { return far_value };
            let Some((k3, i3)) = rhs(&shift(&x, &k2, 0.5 * ds)) else { return far_value };
            let Some((k4, i4)) = rhs(&shift(&x, &k3, ds)) else { return far_value };
            for a in 0..dim {
                x[a] += ds / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            integral += ds / 6.0 * (i1 + 2.0 * i2 + 2.0 * i3 + i4);
        }
        if grid.boundary() == Boundary::DecayBox && (0..dim).any(|a| x[a].abs() > 0.5 * grid.extent()[a]) {
            return far_value;
        }
        c0(x) * (-coeff * integral).exp()
    })
}

/// Characteristics solution of the sound-speed equation with `c0` given by
/// its nodal values (cubic interpolation at the feet).
pub fn characteristics_oracle(c0: &ScalarField, v: &FrozenVelocity, t: f64, params: &PhysParams) -> ScalarField {
    let interp = Interpolator::new(c0);
    let far = params.c_inf;
    characteristics_oracle_with(c0.grid(), v, t, 0.5 * (params.gamma - 1.0), far, |x| {
        interp.eval(x).unwrap_or(far)
    })
}
