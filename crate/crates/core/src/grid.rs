//! Uniform Cartesian grids, discrete fields and second-order finite-difference
//! operators.
//!
//! Values are stored row-major with the last used axis varying fastest. Axes
//! beyond `dim` have a single point and never enter a stencil.
//!
//! Node positions are `x = i*h` on periodic grids (so `[0, L)`) and cell
//! centres `x = -L/2 + (i + 1/2)*h` on decay boxes, which are centred on the
//! origin. On a decay box the outermost layer of nodes holds the frozen
//! far-field values; first derivatives there fall back to one-sided
//! first-order differences.
//!
//! Reductions (norms, inner products) are plain sequential sums, so repeated
//! runs are bitwise reproducible.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1, 2 or 3 (got {0})")]
    InvalidDim(usize),
    #[error("axis {axis} needs at least 4 points (got {points})")]
    TooFewPoints { axis: usize, points: usize },
    #[error("axis {axis} extent must be positive and finite (got {extent})")]
    InvalidExtent { axis: usize, extent: f64 },
    #[error("expected {expected} per-axis values, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("fields live on different grids")]
    ShapeMismatch,
    #[error("curl is undefined in {0}D")]
    CurlUndefined(usize),
    #[error("derivative order {0} is not supported (max 3)")]
    UnsupportedOrder(usize),
    #[error("norm exponent must lie in [1, inf] (got {0})")]
    InvalidExponent(f64),
    #[error("field has {got} components, expected {expected}")]
    ComponentCount { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    DecayBox,
}

impl Boundary {
    pub fn code(self) -> u32 {
        match self {
            Boundary::Periodic => 0,
            Boundary::DecayBox => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Boundary::Periodic),
            1 => Some(Boundary::DecayBox),
            _ => None,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::DecayBox => f.write_str("decay_box"),
        }
    }
}

pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    points: [usize; 3],
    extent: [f64; 3],
    spacing: [f64; 3],
    boundary: Boundary,
}

impl Grid {
    /// Builds a grid. `points` and `extent` take either one value per used
    /// axis or a single value broadcast to all of them.
    pub fn new(
        dim: usize,
        points: &[usize],
        extent: &[f64],
        boundary: Boundary,
    ) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::InvalidDim(dim));
        }
        let pick = |len: usize| -> Result<(), GridError> {
            if len == dim || len == 1 {
                Ok(())
            } else {
                Err(GridError::AxisCount { expected: dim, got: len })
            }
        };
        pick(points.len())?;
        pick(extent.len())?;
        let mut p = [1usize; 3];
        let mut e = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for axis in 0..dim {
            let n = if points.len() == 1 { points[0] } else { points[axis] };
            let l = if extent.len() == 1 { extent[0] } else { extent[axis] };
            if n < 4 {
                return Err(GridError::TooFewPoints { axis, points: n });
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(GridError::InvalidExtent { axis, extent: l });
            }
            p[axis] = n;
            e[axis] = l;
            h[axis] = l / n as f64;
        }
        Ok(Grid { dim, points: p, extent: e, spacing: h, boundary })
    }

    /// Same number of points and extent along every used axis.
    pub fn cube(dim: usize, n: usize, extent: f64, boundary: Boundary) -> Result<Self, GridError> {
        Self::new(dim, &[n], &[extent], boundary)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> [usize; 3] {
        self.points
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell, `h_1 * ... * h_dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Smallest spacing over the used axes.
    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn strides(&self) -> [usize; 3] {
        [self.points[1] * self.points[2], self.points[2], 1]
    }

    /// Same grid with every used axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut g = *self;
        for axis in 0..self.dim {
            g.points[axis] *= factor;
            g.spacing[axis] = g.extent[axis] / g.points[axis] as f64;
        }
        g
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        [idx / s[0], (idx / s[1]) % self.points[1], idx % self.points[2]]
    }

    pub fn ravel(&self, multi: [usize; 3]) -> usize {
        let s = self.strides();
        multi[0] * s[0] + multi[1] * s[1] + multi[2] * s[2]
    }

    /// Physical position of axis index `i`.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if axis >= self.dim {
            return 0.0;
        }
        let h = self.spacing[axis];
        match self.boundary {
            Boundary::Periodic => i as f64 * h,
            Boundary::DecayBox => -0.5 * self.extent[axis] + (i as f64 + 0.5) * h,
        }
    }

    pub fn coord(&self, idx: usize) -> Point {
        let m = self.unravel(idx);
        [self.axis_coord(0, m[0]), self.axis_coord(1, m[1]), self.axis_coord(2, m[2])]
    }

    /// True for nodes on the frozen outer layer of a decay box.
    pub fn is_boundary_layer(&self, idx: usize) -> bool {
        if self.boundary == Boundary::Periodic {
            return false;
        }
        let m = self.unravel(idx);
        (0..self.dim).any(|a| m[a] == 0 || m[a] + 1 == self.points[a])
    }

    /// Mask of the frozen outer layer (all false on periodic grids).
    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary_layer(i)).collect()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<(), GridError> {
        if self == other {
            Ok(())
        } else {
            Err(GridError::ShapeMismatch)
        }
    }
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField { grid: *grid, data: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Point) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        ScalarField { grid: *grid, data }
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != grid.len() {
            return Err(GridError::ShapeMismatch);
        }
        Ok(ScalarField { grid: *grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid, data }
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: f64, other: &ScalarField, b: f64) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann-sum integral.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// A field with an arbitrary number of components (usually `dim`; the 2D
/// curl yields a single component).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::zeros_with(grid, grid.dim())
    }

    pub fn zeros_with(grid: &Grid, ncomp: usize) -> Self {
        VectorField { grid: *grid, comps: vec![vec![0.0; grid.len()]; ncomp] }
    }

    pub fn constant(grid: &Grid, value: &[f64]) -> Self {
        let comps = (0..grid.dim())
            .map(|a| vec![value.get(a).copied().unwrap_or(0.0); grid.len()])
            .collect();
        VectorField { grid: *grid, comps }
    }

    /// Builds a `dim`-component field; extra entries of the returned array
    /// are ignored.
    pub fn from_fn(grid: &Grid, f: impl Fn(Point) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.len() {
            let v = f(grid.coord(i));
            for (a, comp) in out.comps.iter_mut().enumerate() {
                comp[i] = v[a];
            }
        }
        out
    }

    pub fn from_components(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(GridError::ShapeMismatch);
        }
        Ok(VectorField { grid: *grid, comps })
    }

    pub fn from_scalars(fields: Vec<ScalarField>) -> Result<Self, GridError> {
        let grid = *fields.first().ok_or(GridError::ShapeMismatch)?.grid();
        for f in &fields {
            grid.check_same(f.grid())?;
        }
        Ok(VectorField { grid, comps: fields.into_iter().map(|f| f.data).collect() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.comps[a]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn component(&self, a: usize) -> ScalarField {
        ScalarField { grid: self.grid, data: self.comps[a].clone() }
    }

    pub fn at(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.comps.iter().enumerate().take(3) {
            v[a] = c[idx];
        }
        v
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let data = (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        ScalarField { grid: self.grid, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        VectorField {
            grid: self.grid,
            comps: self.comps.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    /// `a*self + b*other`.
    pub fn lincomb(&self, a: f64, other: &VectorField, b: f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect())
            .collect();
        VectorField { grid: self.grid, comps }
    }

    /// Multiplies every component by a scalar field.
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(&s.data).map(|(&v, &w)| v * w).collect())
            .collect();
        VectorField { grid: self.grid, comps }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// Components concatenated into one vector (solver layout).
    pub fn flatten(&self) -> Vec<f64> {
        self.comps.concat()
    }

    pub fn from_flat(grid: &Grid, ncomp: usize, flat: &[f64]) -> Result<Self, GridError> {
        if flat.len() != ncomp * grid.len() {
            return Err(GridError::ShapeMismatch);
        }
        Ok(VectorField { grid: *grid, comps: flat.chunks(grid.len()).map(|c| c.to_vec()).collect() })
    }
}

/// `dim x dim` tensor field, component `(i, j)` stored at `i*dim + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl TensorField {
    pub fn zeros(grid: &Grid) -> Self {
        let d = grid.dim();
        TensorField { grid: *grid, comps: vec![vec![0.0; grid.len()]; d * d] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.grid.dim()
    }

    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.grid.dim() + j]
    }

    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.comps[i * d + j]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// One-dimensional difference kernels
// ---------------------------------------------------------------------------

/// How a decay-box stencil treats nodes that fall outside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Edge {
    /// Switch to one-sided differences on the outer layer.
    OneSided,
    /// Treat values beyond the box as zero (homogeneous Dirichlet operators).
    ZeroPad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Diff {
    Central,
    Forward,
    Backward,
    Second,
}

/// Applies a one-axis difference to `f`, writing into `out`.
pub(crate) fn diff_axis(grid: &Grid, f: &[f64], axis: usize, kind: Diff, edge: Edge, out: &mut [f64]) {
    let n = grid.points[axis];
    let s = grid.strides()[axis];
    let h = grid.spacing[axis];
    let periodic = grid.boundary == Boundary::Periodic;
    let zero_pad = edge == Edge::ZeroPad;
    for (idx, o) in out.iter_mut().enumerate() {
        let i = (idx / s) % n;
        let base = idx - i * s;
        let at = |j: isize| -> f64 {
            if periodic {
                f[base + (j.rem_euclid(n as isize) as usize) * s]
            } else if j < 0 || j >= n as isize {
                0.0
            } else {
                f[base + j as usize * s]
            }
        };
        let i = i as isize;
        let first = i == 0;
        let last = i == n as isize - 1;
        let one_sided = !periodic && !zero_pad;
        *o = match kind {
            Diff::Central => {
                if one_sided && first {
                    (at(1) - at(0)) / h
                } else if one_sided && last {
                    (at(i) - at(i - 1)) / h
                } else {
                    (at(i + 1) - at(i - 1)) / (2.0 * h)
                }
            }
            Diff::Forward => {
                if one_sided && last {
                    (at(i) - at(i - 1)) / h
                } else {
                    (at(i + 1) - at(i)) / h
                }
            }
            Diff::Backward => {
                if one_sided && first {
                    (at(1) - at(0)) / h
                } else {
                    (at(i) - at(i - 1)) / h
                }
            }
            Diff::Second => {
                if one_sided && first {
                    (at(0) - 2.0 * at(1) + at(2)) / (h * h)
                } else if one_sided && last {
                    (at(i) - 2.0 * at(i - 1) + at(i - 2)) / (h * h)
                } else {
                    (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (h * h)
                }
            }
        };
    }
}

pub(crate) fn diff(grid: &Grid, f: &[f64], axis: usize, kind: Diff, edge: Edge) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    diff_axis(grid, f, axis, kind, edge, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

/// Central-difference gradient.
pub fn apply_gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let comps = (0..g.dim).map(|a| diff(&g, &f.data, a, Diff::Central, Edge::OneSided)).collect();
    VectorField { grid: g, comps }
}

/// Central-difference divergence of a `dim`-component field.
pub fn apply_divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut out = vec![0.0; g.len()];
    let mut tmp = vec![0.0; g.len()];
    for a in 0..g.dim.min(v.ncomp()) {
        diff_axis(&g, &v.comps[a], a, Diff::Central, Edge::OneSided, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    ScalarField { grid: g, data: out }
}

/// Velocity-gradient tensor with entries `(i, j) = d v_i / d x_j`.
pub fn apply_vector_gradient(v: &VectorField) -> TensorField {
    let g = v.grid;
    let d = g.dim;
    let mut out = TensorField::zeros(&g);
    for i in 0..d {
        for j in 0..d {
            diff_axis(&g, &v.comps[i], j, Diff::Central, Edge::OneSided, &mut out.comps[i * d + j]);
        }
    }
    out
}

/// Central-difference curl. In 2D the scalar curl is returned as a
/// one-component field.
pub fn apply_curl(v: &VectorField) -> Result<VectorField, GridError> {
    let g = v.grid;
    let d = g.dim;
    if d == 1 {
        return Err(GridError::CurlUndefined(1));
    }
    if v.ncomp() != d {
        return Err(GridError::ComponentCount { expected: d, got: v.ncomp() });
    }
    let dd = |comp: usize, axis: usize| diff(&g, &v.comps[comp], axis, Diff::Central, Edge::OneSided);
    let sub = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let comps = if d == 2 {
        vec![sub(dd(1, 0), dd(0, 1))]
    } else {
        vec![sub(dd(2, 1), dd(1, 2)), sub(dd(0, 2), dd(2, 0)), sub(dd(1, 0), dd(0, 1))]
    };
    Ok(VectorField { grid: g, comps })
}

/// Standard `2d+1`-point Laplacian.
pub fn apply_laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let mut out = vec![0.0; g.len()];
    let mut tmp = vec![0.0; g.len()];
    for a in 0..g.dim {
        diff_axis(&g, &f.data, a, Diff::Second, Edge::OneSided, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }
    ScalarField { grid: g, data: out }
}

/// Component-wise Laplacian.
pub fn apply_vector_laplacian(v: &VectorField) -> VectorField {
    let comps = (0..v.ncomp())
        .map(|a| apply_laplacian(&ScalarField { grid: v.grid, data: v.comps[a].clone() }).data)
        .collect();
    VectorField { grid: v.grid, comps }
}

/// Pointwise dot product of two vector fields.
pub fn dot(a: &VectorField, b: &VectorField) -> ScalarField {
    let g = a.grid;
    let mut out = vec![0.0; g.len()];
    for (ca, cb) in a.comps.iter().zip(&b.comps) {
        for ((o, x), y) in out.iter_mut().zip(ca).zip(cb) {
            *o += x * y;
        }
    }
    ScalarField { grid: g, data: out }
}

/// Riemann-sum inner product `sum a_i b_i h^d` over all components.
pub fn inner(a: &[f64], b: &[f64], grid: &Grid) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * grid.cell_volume()
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    Lp(f64),
    Linf,
    /// `|nabla^k f|_{L^p}` with `k` nested central-difference gradients.
    Dk { k: usize, p: f64 },
}

impl NormKind {
    pub fn l2() -> Self {
        NormKind::Lp(2.0)
    }

    pub fn d(k: usize) -> Self {
        NormKind::Dk { k, p: 2.0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FieldRef<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a VectorField),
    Tensor(&'a TensorField),
}

impl<'a> From<&'a ScalarField> for FieldRef<'a> {
    fn from(f: &'a ScalarField) -> Self {
        FieldRef::Scalar(f)
    }
}

impl<'a> From<&'a VectorField> for FieldRef<'a> {
    fn from(f: &'a VectorField) -> Self {
        FieldRef::Vector(f)
    }
}

impl<'a> From<&'a TensorField> for FieldRef<'a> {
    fn from(f: &'a TensorField) -> Self {
        FieldRef::Tensor(f)
    }
}

impl<'a> FieldRef<'a> {
    fn grid(&self) -> Grid {
        match self {
            FieldRef::Scalar(f) => f.grid,
            FieldRef::Vector(f) => f.grid,
            FieldRef::Tensor(f) => f.grid,
        }
    }

    fn components(&self) -> Vec<&'a [f64]> {
        match *self {
            FieldRef::Scalar(f) => vec![f.data.as_slice()],
            FieldRef::Vector(f) => f.comps.iter().map(|c| c.as_slice()).collect(),
            FieldRef::Tensor(f) => f.comps.iter().map(|c| c.as_slice()).collect(),
        }
    }
}

/// Discrete Lebesgue/Sobolev-seminorm of a field by Riemann sums. Multi-
/// component fields use the pointwise Euclidean magnitude.
pub fn field_norm<'a>(f: impl Into<FieldRef<'a>>, kind: NormKind) -> Result<f64, GridError> {
    let f = f.into();
    let grid = f.grid();
    let (k, p) = match kind {
        NormKind::Lp(p) => (0, p),
        NormKind::Linf => (0, f64::INFINITY),
        NormKind::Dk { k, p } => (k, p),
    };
    if k > 3 {
        return Err(GridError::UnsupportedOrder(k));
    }
    if !(p >= 1.0) {
        return Err(GridError::InvalidExponent(p));
    }
    let mut comps: Vec<Vec<f64>> = f.components().into_iter().map(|c| c.to_vec()).collect();
    for _ in 0..k {
        let mut next = Vec::with_capacity(comps.len() * grid.dim);
        for c in &comps {
            for a in 0..grid.dim {
                next.push(diff(&grid, c, a, Diff::Central, Edge::OneSided));
            }
        }
        comps = next;
    }
    Ok(lp_of_components(&comps, &grid, p))
}

pub(crate) fn lp_of_components(comps: &[Vec<f64>], grid: &Grid, p: f64) -> f64 {
    let n = grid.len();
    let mag = |i: usize| -> f64 {
        if comps.len() == 1 {
            comps[0][i].abs()
        } else {
            comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()
        }
    };
    if p.is_infinite() {
        return (0..n).map(mag).fold(0.0, f64::max);
    }
    let sum: f64 = if p == 2.0 {
        (0..n)
            .map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>())
            .sum()
    } else {
        (0..n).map(|i| mag(i).powf(p)).sum()
    };
    (sum * grid.cell_volume()).powf(1.0 / p)
}

/// `sqrt(|f|_2^2 + |Df|_2^2 + ... + |D^k f|_2^2)`.
pub fn sobolev_norm<'a>(f: impl Into<FieldRef<'a>>, order: usize) -> Result<f64, GridError> {
    let f = f.into();
    let mut sum = 0.0;
    for k in 0..=order {
        let v = field_norm(f, NormKind::d(k))?;
        sum += v * v;
    }
    Ok(sum.sqrt())
}
