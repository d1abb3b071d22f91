//! Physical parameters, the sound-speed formulation `(c, psi, u)` and the
//! algebraic conversions between density and sound speed.
//!
//! With `P = A rho^gamma` and `theta = 1/(gamma - 1)`:
//!
//! * `c = sqrt(A gamma) rho^((gamma-1)/2)`, `rho = (c / sqrt(A gamma))^(2 theta)`
//! * `psi = 2 theta grad(c) / c` (equal to `grad(log rho)` off vacuum)
//! * `Ebar(c) = E(rho(c))`, the second-viscosity coefficient in `c` units
//! * `Q(c, v) = alpha (grad v + grad v^T) + Ebar(c) div(v) I`

use thiserror::Error;

use crate::grid::{apply_divergence, apply_gradient, apply_vector_gradient, Grid, ScalarField, TensorField, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid parameter {key}: {reason}")]
    InvalidParam { key: &'static str, reason: String },
    #[error("negative density {value:e} at node {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("negative sound speed {value:e} at node {index}")]
    NegativeSoundSpeed { index: usize, value: f64 },
    #[error("power-law viscosity carries E as a transported field; Ebar(c) is not defined")]
    PowerLawMode,
    #[error("power-law state is missing its transported E field")]
    MissingEField,
    #[error("viscosity table needs at least 2 strictly increasing, finite knots")]
    BadTable,
}

/// A second-viscosity generator `E(rho)` with two continuous derivatives.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothViscosity {
    Constant(f64),
    /// `E(rho) = sum_i coeffs[i] rho^i`.
    Polynomial(Vec<f64>),
    /// Natural cubic spline through `(rho, E)` knots, extended linearly past
    /// the end knots (second derivative stays continuous).
    Table(CubicSpline),
}

impl SmoothViscosity {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            SmoothViscosity::Constant(b) => *b,
            SmoothViscosity::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * rho + a),
            SmoothViscosity::Table(s) => s.eval(rho),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SecondViscosity {
    Smooth(SmoothViscosity),
    /// `lambda(rho) = rho^b`, i.e. `E(rho) = rho^(b-1)`, with `b` in
    /// `(1,2) U (2,3)`; E is then evolved as its own transported field.
    PowerLaw { b: f64 },
}

impl SecondViscosity {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            SecondViscosity::Smooth(s) => s.eval(rho),
            SecondViscosity::PowerLaw { b } => rho.max(0.0).powf(b - 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Result<Self, StateError> {
        let n = x.len();
        if n < 2
            || y.len() != n
            || x.iter().chain(&y).any(|v| !v.is_finite())
            || x.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(StateError::BadTable);
        }
        // Second derivatives by the Thomas algorithm, m_0 = m_{n-1} = 0.
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline { x, y, m })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn slope(&self, i: usize, at_right: bool) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let secant = (self.y[i + 1] - self.y[i]) / h;
        if at_right {
            secant + h * (2.0 * self.m[i + 1] + self.m[i]) / 6.0
        } else {
            secant - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slope(0, false) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slope(n - 2, true) * (t - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&k| k <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysParams {
    /// Pressure constant in `P = A rho^gamma`.
    pub a: f64,
    pub gamma: f64,
    /// Shear viscosity constant, `mu(rho) = alpha rho`.
    pub alpha: f64,
    pub viscosity: SecondViscosity,
    /// Far-field sound speed.
    pub c_inf: f64,
    /// Vacuum cutoff (in `c` units) for evaluating `psi` from `c`.
    pub eps_vac: f64,
    /// Allows smooth-viscosity runs with `gamma` in `(2, 3)`.
    pub outside_theorem: bool,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            a: 1.0,
            gamma: 2.0,
            alpha: 1.0,
            viscosity: SecondViscosity::Smooth(SmoothViscosity::Constant(0.0)),
            c_inf: 0.0,
            eps_vac: 1e-10,
            outside_theorem: false,
        }
    }
}

impl PhysParams {
    pub fn theta(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }

    /// `sqrt(A gamma)`.
    pub fn sound_coeff(&self) -> f64 {
        (self.a * self.gamma).sqrt()
    }

    pub fn is_power_law(&self) -> bool {
        matches!(self.viscosity, SecondViscosity::PowerLaw { .. })
    }

    /// Checks every parameter range and returns all violations.
    pub fn validate(&self) -> Vec<StateError> {
        let mut errs = Vec::new();
        let mut bad = |key: &'static str, reason: String| errs.push(StateError::InvalidParam { key, reason });
        if !(self.a.is_finite() && self.a > 0.0) {
            bad("A", format!("must be positive (got {})", self.a));
        }
        if !(self.gamma > 1.0 && self.gamma <= 3.0) {
            bad("gamma", format!("must lie in (1, 3] (got {})", self.gamma));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            bad("alpha", format!("must be positive (got {})", self.alpha));
        }
        if !(self.c_inf.is_finite() && self.c_inf >= 0.0) {
            bad("c_inf", format!("must be nonnegative (got {})", self.c_inf));
        }
        if !(self.eps_vac.is_finite() && self.eps_vac > 0.0) {
            bad("eps_vac", format!("must be positive (got {})", self.eps_vac));
        }
        match &self.viscosity {
            SecondViscosity::PowerLaw { b } => {
                if !((*b > 1.0 && *b < 2.0) || (*b > 2.0 && *b < 3.0)) {
                    bad("viscosity.b", format!("must lie in (1,2) U (2,3) (got {b})"));
                }
            }
            SecondViscosity::Smooth(s) => {
                let covered = (self.gamma > 1.0 && self.gamma <= 2.0) || self.gamma == 3.0;
                if !covered && !self.outside_theorem && self.gamma > 1.0 && self.gamma <= 3.0 {
                    bad(
                        "gamma",
                        format!(
                            "smooth viscosity needs gamma in (1,2] or gamma = 3 (got {}); set outside_theorem = true to run anyway",
                            self.gamma
                        ),
                    );
                }
                let finite = match s {
                    SmoothViscosity::Constant(b) => b.is_finite(),
                    SmoothViscosity::Polynomial(c) => !c.is_empty() && c.iter().all(|v| v.is_finite()),
                    SmoothViscosity::Table(_) => true,
                };
                if !finite {
                    bad("viscosity", "coefficients must be finite".into());
                }
            }
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Admissibility {
    Pass,
    Fail { rho: f64, value: f64 },
}

impl Admissibility {
    pub fn passed(&self) -> bool {
        matches!(self, Admissibility::Pass)
    }
}

pub const ADMISSIBILITY_SAMPLES: usize = 1001;

/// Samples `2 alpha + 3 E(rho)` on `[0, rho_max]` and reports the first
/// negative value.
pub fn check_admissible(params: &PhysParams, rho_max: f64) -> Admissibility {
    let n = ADMISSIBILITY_SAMPLES;
    for i in 0..n {
        let rho = rho_max * i as f64 / (n - 1) as f64;
        let value = 2.0 * params.alpha + 3.0 * params.viscosity.eval(rho);
        if !(value >= 0.0) {
            return Admissibility::Fail { rho, value };
        }
    }
    Admissibility::Pass
}

// ---------------------------------------------------------------------------
// Conversions
// ---------------------------------------------------------------------------

pub fn c_from_rho(rho: &ScalarField, params: &PhysParams) -> Result<ScalarField, StateError> {
    if let Some((index, &value)) = rho.data().iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(StateError::NegativeDensity { index, value });
    }
    let k = params.sound_coeff();
    let e = 0.5 * (params.gamma - 1.0);
    Ok(rho.map(|r| k * r.powf(e)))
}

pub fn rho_from_c(c: &ScalarField, params: &PhysParams) -> Result<ScalarField, StateError> {
    if let Some((index, &value)) = c.data().iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(StateError::NegativeSoundSpeed { index, value });
    }
    Ok(c.map(|v| rho_of(v, params)))
}

#[inline]
pub(crate) fn rho_of(c: f64, params: &PhysParams) -> f64 {
    (c.max(0.0) / params.sound_coeff()).powf(2.0 * params.theta())
}

/// `psi = 2 theta grad(c) / max(c, eps_vac)`, zero where the state is
/// vacuum to within `eps_vac` in both `c` and `|grad c|`.
pub fn psi_from_c(c: &ScalarField, params: &PhysParams, eps_vac: f64) -> VectorField {
    let grad = apply_gradient(c);
    let two_theta = 2.0 * params.theta();
    let mut psi = VectorField::zeros(c.grid());
    for i in 0..c.grid().len() {
        let ci = c.data()[i];
        let g = grad.at(i);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ci <= eps_vac && gnorm <= eps_vac {
            continue;
        }
        let denom = ci.max(eps_vac);
        for a in 0..psi.ncomp() {
            psi.comp_mut(a)[i] = two_theta * g[a] / denom;
        }
    }
    psi
}

/// `Ebar(c) = E(rho(c))`; power-law runs must use the transported field.
pub fn ebar_of_c(c: &ScalarField, params: &PhysParams) -> Result<ScalarField, StateError> {
    match &params.viscosity {
        SecondViscosity::PowerLaw { .. } => Err(StateError::PowerLawMode),
        SecondViscosity::Smooth(s) => Ok(c.map(|v| s.eval(rho_of(v, params)))),
    }
}

/// The second-viscosity coefficient field for a state in either mode.
pub fn viscosity_field(
    c: &ScalarField,
    e_field: Option<&ScalarField>,
    params: &PhysParams,
) -> Result<ScalarField, StateError> {
    match &params.viscosity {
        SecondViscosity::PowerLaw { .. } => e_field.cloned().ok_or(StateError::MissingEField),
        SecondViscosity::Smooth(_) => ebar_of_c(c, params),
    }
}

/// `Q = alpha (grad v + grad v^T) + Ebar div(v) I`.
pub fn q_tensor(ebar: &ScalarField, v: &VectorField, params: &PhysParams) -> TensorField {
    let grad = apply_vector_gradient(v);
    let div = apply_divergence(v);
    q_from_parts(&grad, &div, ebar, params.alpha)
}

pub(crate) fn q_from_parts(grad: &TensorField, div: &ScalarField, ebar: &ScalarField, alpha: f64) -> TensorField {
    let g = *grad.grid();
    let d = g.dim();
    let mut q = TensorField::zeros(&g);
    for i in 0..d {
        for j in i..d {
            let gij = grad.comp(i, j).to_vec();
            let gji = grad.comp(j, i).to_vec();
            let mut out: Vec<f64> = gij.iter().zip(&gji).map(|(a, b)| alpha * (a + b)).collect();
            if i == j {
                for ((o, e), dv) in out.iter_mut().zip(ebar.data()).zip(div.data()) {
                    *o += e * dv;
                }
            }
            q.comp_mut(j, i).copy_from_slice(&out);
            q.comp_mut(i, j).copy_from_slice(&out);
        }
    }
    q
}

/// The unknowns `(c, psi, u)` plus the optional transported `E` field.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub c: ScalarField,
    pub psi: VectorField,
    pub u: VectorField,
    pub e_field: Option<ScalarField>,
    pub time: f64,
    /// Number of negative-`c` (or `E`) undershoots clamped to zero so far.
    pub clamp_events: u64,
}

impl FluidState {
    /// Builds a state from density and velocity: `psi` from `c`, and `E =
    /// rho^(b-1)` in power-law mode.
    pub fn from_density(
        rho: &ScalarField,
        u: VectorField,
        params: &PhysParams,
    ) -> Result<Self, StateError> {
        let c = c_from_rho(rho, params)?;
        Ok(Self::from_sound_speed(c, u, params))
    }

    pub fn from_sound_speed(c: ScalarField, u: VectorField, params: &PhysParams) -> Self {
        let psi = psi_from_c(&c, params, params.eps_vac);
        let e_field = match params.viscosity {
            SecondViscosity::PowerLaw { b } => Some(c.map(|v| rho_of(v, params).powf(b - 1.0))),
            SecondViscosity::Smooth(_) => None,
        };
        FluidState { c, psi, u, e_field, time: 0.0, clamp_events: 0 }
    }

    /// Exact vacuum: `c = 0`, `psi = 0`, `u = 0`.
    pub fn vacuum(grid: &Grid, params: &PhysParams) -> Self {
        Self::from_sound_speed(ScalarField::zeros(grid), VectorField::zeros(grid), params)
    }

    pub fn grid(&self) -> &Grid {
        self.c.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite()
            && self.psi.is_finite()
            && self.u.is_finite()
            && self.e_field.as_ref().is_none_or(|e| e.is_finite())
    }

    pub fn density(&self, params: &PhysParams) -> ScalarField {
        self.c.map(|v| rho_of(v, params))
    }

    pub fn viscosity(&self, params: &PhysParams) -> Result<ScalarField, StateError> {
        viscosity_field(&self.c, self.e_field.as_ref(), params)
    }
}
