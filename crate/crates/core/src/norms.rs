//! Finsler norm families and their pointwise tensor calculus.
//!
//! A structure couples a family of norms `F(x, V)` — positively
//! 1-homogeneous and strongly convex in `V`, smoothly varying in `x` —
//! with a measure density `phi` so that `dm = e^phi dx`. Supported
//! families:
//!
//! * `euclidean` — `F = |V|`;
//! * `riemannian` — `F = sqrt(a_ij(x) V^i V^j)` for a positive-definite
//!   coefficient field `a`;
//! * `randers` — `F = sqrt(a_ij V^i V^j) + b_i V^i`, the canonical
//!   non-reversible family, valid while `a^{ij} b_i b_j < 1`;
//! * `quartic` — `F = ((V.AV)^2 + eps * sum V_i^4)^{1/4}`, a genuinely
//!   non-Riemannian reversible family (small `eps` keeps the fundamental
//!   tensor positive definite; the plain 4-norm would degenerate on the
//!   axes).
//!
//! All derived quantities (fundamental tensor `g_V`, Cartan tensor, dual
//! norm, Legendre transform) are implemented analytically per family, with
//! finite-difference versions kept alongside as cross-check oracles.

use crate::expr::{Expr, ParseError};
use crate::linalg::{Covector, Point, SymMat, SymTensor3, Vector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Convergence tolerance for the inverse Legendre Newton solve, relative to
/// the covector magnitude.
pub const LEGENDRE_NEWTON_TOL: f64 = 1e-13;

/// Gradient tolerance for the projected-ascent dual norm.
pub const DUAL_ASCENT_TOL: f64 = 1e-10;

/// Relative step used by the finite-difference fundamental-tensor oracle.
pub const FD_HESSIAN_STEP: f64 = 1e-4;

/// Relative step used by the finite-difference Cartan-tensor oracle.
pub const FD_CARTAN_STEP: f64 = 1e-3;

#[derive(Debug, Clone, thiserror::Error)]
pub enum NormError {
    #[error("tensor quantities are undefined at V = 0")]
    ZeroVector,
    #[error("dimension mismatch: structure is {expected}-dimensional, argument is {got}-dimensional")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("coefficient expression error: {0}")]
    Expression(#[from] ParseError),
    #[error("inverse Legendre Newton iteration failed to converge ({residual:.3e} after {iterations} steps)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Axis-aligned chart box; validation grids and constant sampling live here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Domain {
    lo: [f64; 3],
    hi: [f64; 3],
    dim: usize,
}

impl Domain {
    pub fn new(bounds: &[(f64, f64)]) -> Self {
        assert!(bounds.len() == 2 || bounds.len() == 3);
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for (i, (a, b)) in bounds.iter().enumerate() {
            assert!(a < b, "empty domain interval");
            lo[i] = *a;
            hi[i] = *b;
        }
        Self { lo, hi, dim: bounds.len() }
    }

    /// Centered box `[-r, r]^dim`.
    pub fn centered_box(dim: usize, r: f64) -> Self {
        match dim {
            2 => Self::new(&[(-r, r), (-r, r)]),
            3 => Self::new(&[(-r, r), (-r, r), (-r, r)]),
            _ => panic!("supported dimensions are 2 and 3"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self, i: usize) -> f64 {
        self.lo[i]
    }

    pub fn hi(&self, i: usize) -> f64 {
        self.hi[i]
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p.get(i) >= self.lo[i] && p.get(i) <= self.hi[i])
    }

    pub fn center(&self) -> Point {
        let mut c = Point::zeros(self.dim);
        for i in 0..self.dim {
            c.set(i, 0.5 * (self.lo[i] + self.hi[i]));
        }
        c
    }

    /// Longest edge of the box; the natural length scale of the chart.
    pub fn scale(&self) -> f64 {
        (0..self.dim).map(|i| self.hi[i] - self.lo[i]).fold(0.0, f64::max)
    }

    /// Deterministic lattice of `k^dim` points including the corners.
    pub fn grid(&self, k: usize) -> Vec<Point> {
        assert!(k >= 2);
        let mut pts = Vec::new();
        let coord = |i: usize, s: usize| {
            self.lo[i] + (self.hi[i] - self.lo[i]) * s as f64 / (k - 1) as f64
        };
        match self.dim {
            2 => {
                for sx in 0..k {
                    for sy in 0..k {
                        pts.push(Point::xy(coord(0, sx), coord(1, sy)));
                    }
                }
            }
            3 => {
                for sx in 0..k {
                    for sy in 0..k {
                        for sz in 0..k {
                            pts.push(Point::xyz(coord(0, sx), coord(1, sy), coord(2, sz)));
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        pts
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Point {
        let mut p = Point::zeros(self.dim);
        for i in 0..self.dim {
            p.set(i, rng.gen_range(self.lo[i]..self.hi[i]));
        }
        p
    }
}

/// One scalar coefficient with pre-computed symbolic partials.
#[derive(Debug, Clone)]
struct Coeff {
    expr: Expr,
    dx: [Expr; 3],
    constant: Option<f64>,
}

impl Coeff {
    fn new(expr: Expr, dim: usize) -> Self {
        let mut dx = [Expr::constant(0.0), Expr::constant(0.0), Expr::constant(0.0)];
        for (k, slot) in dx.iter_mut().enumerate().take(dim) {
            *slot = expr.derivative(k);
        }
        let constant = if expr.is_constant() {
            Some(expr.eval(&Point::zeros(dim)))
        } else {
            None
        };
        Self { expr, dx, constant }
    }

    fn from_value(v: f64) -> Self {
        Self {
            expr: Expr::constant(v),
            dx: [Expr::constant(0.0), Expr::constant(0.0), Expr::constant(0.0)],
            constant: Some(v),
        }
    }

    #[inline]
    fn eval(&self, x: &Point) -> f64 {
        match self.constant {
            Some(v) => v,
            None => self.expr.eval(x),
        }
    }

    #[inline]
    fn eval_dx(&self, x: &Point, k: usize) -> f64 {
        if self.constant.is_some() {
            0.0
        } else {
            self.dx[k].eval(x)
        }
    }
}

/// Symmetric matrix coefficient field `a_ij(x)`.
#[derive(Debug, Clone)]
pub struct MetricField {
    entries: Vec<Coeff>, // row-major upper triangle, len = dim*(dim+1)/2
    dim: usize,
    constant: bool,
}

fn tri_index(dim: usize, i: usize, j: usize) -> usize {
    // upper-triangle storage: (0,0),(0,1),..,(0,d-1),(1,1),..
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let _ = dim;
    // offset of row i = sum_{r<i} (dim - r)
    let mut off = 0;
    for r in 0..i {
        off += dim - r;
    }
    off + (j - i)
}

impl MetricField {
    pub fn identity(dim: usize) -> Self {
        Self::from_values(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_values(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                entries.push(Coeff::from_value(f(i, j)));
            }
        }
        Self { entries, dim, constant: true }
    }

    /// Parse from row-major full-matrix strings; symmetry is enforced.
    pub fn parse(rows: &[Vec<String>], dim: usize) -> Result<Self, NormError> {
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(NormError::InvalidStructure(format!(
                "metric must be a {dim}x{dim} matrix of expressions"
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = rows[i][j].replace(' ', "");
                let b = rows[j][i].replace(' ', "");
                if a != b {
                    return Err(NormError::InvalidStructure(format!(
                        "metric entries ({i},{j}) and ({j},{i}) differ: `{}` vs `{}`",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        let mut entries = Vec::new();
        let mut constant = true;
        for i in 0..dim {
            for j in i..dim {
                let e = Expr::parse(&rows[i][j], dim)?;
                constant &= e.is_constant();
                entries.push(Coeff::new(e, dim));
            }
        }
        Ok(Self { entries, dim, constant })
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn eval(&self, x: &Point) -> SymMat {
        SymMat::from_fn(self.dim, |i, j| self.entries[tri_index(self.dim, i, j)].eval(x))
    }

    /// Partial derivative matrix `da/dx_k`.
    pub fn eval_dx(&self, x: &Point, k: usize) -> SymMat {
        SymMat::from_fn(self.dim, |i, j| self.entries[tri_index(self.dim, i, j)].eval_dx(x, k))
    }

    pub fn entry_source(&self, i: usize, j: usize) -> String {
        format!("{}", self.entries[tri_index(self.dim, i, j)].expr)
    }
}

/// Covector coefficient field, used for the Randers drift.
#[derive(Debug, Clone)]
pub struct DriftField {
    entries: Vec<Coeff>,
    dim: usize,
    constant: bool,
}

impl DriftField {
    pub fn from_values(vals: &[f64]) -> Self {
        Self {
            entries: vals.iter().map(|v| Coeff::from_value(*v)).collect(),
            dim: vals.len(),
            constant: true,
        }
    }

    pub fn parse(entries: &[String], dim: usize) -> Result<Self, NormError> {
        if entries.len() != dim {
            return Err(NormError::InvalidStructure(format!(
                "drift must have {dim} components"
            )));
        }
        let mut out = Vec::new();
        let mut constant = true;
        for s in entries {
            let e = Expr::parse(s, dim)?;
            constant &= e.is_constant();
            out.push(Coeff::new(e, dim));
        }
        Ok(Self { entries: out, dim, constant })
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn eval(&self, x: &Point) -> Covector {
        let mut b = Covector::zeros(self.dim);
        for i in 0..self.dim {
            b.set(i, self.entries[i].eval(x));
        }
        b
    }

    pub fn eval_dx(&self, x: &Point, k: usize) -> Covector {
        let mut b = Covector::zeros(self.dim);
        for i in 0..self.dim {
            b.set(i, self.entries[i].eval_dx(x, k));
        }
        b
    }

    pub fn entry_source(&self, i: usize) -> String {
        format!("{}", self.entries[i].expr)
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Euclidean,
    Riemannian { metric: MetricField },
    Randers { metric: MetricField, drift: DriftField },
    Quartic { metric: MetricField, epsilon: f64 },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Euclidean => "euclidean",
            Family::Riemannian { .. } => "riemannian",
            Family::Randers { .. } => "randers",
            Family::Quartic { .. } => "quartic",
        }
    }
}

/// Fundamental tensor `g_V` at a base point and direction: the Hessian of
/// `F^2/2` in the fiber variable.
#[derive(Debug, Clone, Copy)]
pub struct FundamentalTensor {
    pub g: SymMat,
    pub base_point: Point,
    pub base_vector: Vector,
}

impl FundamentalTensor {
    pub fn quad(&self, w: &Vector) -> f64 {
        self.g.quad(w)
    }

    pub fn bilinear(&self, v: &Vector, w: &Vector) -> f64 {
        self.g.bilinear(v, w)
    }

    pub fn inverse(&self) -> Result<SymMat, NormError> {
        Ok(self.g.inverse()?)
    }
}

/// Sampled uniform smoothness/convexity and reversibility constants.
///
/// `lambda` and `lambda_max` bound `g_V(W, W) / F^2(x, W)` from below and
/// above; `dual_lambda`/`dual_lambda_max` do the same for the inverse tensor
/// against the dual norm. `rho` is the largest observed `F(V)/F(-V)`.
/// Both classical reversibility bounds (`rho^2 <= 1/lambda` and
/// `rho^2 <= lambda_max`) are recorded so reports can show each.
#[derive(Debug, Clone, Serialize)]
pub struct UniformConstants {
    pub lambda: f64,
    pub lambda_max: f64,
    pub rho: f64,
    pub dual_lambda: f64,
    pub dual_lambda_max: f64,
    pub samples: usize,
    pub seed: u64,
}

impl UniformConstants {
    /// Slack of `rho^2 <= 1/lambda` (nonnegative when the bound holds).
    pub fn rho_vs_inv_lambda_slack(&self) -> f64 {
        1.0 / self.lambda - self.rho * self.rho
    }

    /// Slack of `rho^2 <= lambda_max`.
    pub fn rho_vs_lambda_max_slack(&self) -> f64 {
        self.lambda_max - self.rho * self.rho
    }
}

/// A Finsler norm family plus a measure density on a chart domain.
#[derive(Debug, Clone)]
pub struct FinslerStructure {
    dim: usize,
    family: Family,
    density: Option<Coeff>,
    density_source: Option<String>,
    domain: Domain,
    /// Constant flag curvature when known in closed form (0 for locally
    /// Minkowski structures, 1 for the round-sphere patch).
    known_curvature: Option<f64>,
}

impl FinslerStructure {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3);
        Self {
            dim,
            family: Family::Euclidean,
            density: None,
            density_source: None,
            domain: Domain::centered_box(dim, 8.0),
            known_curvature: Some(0.0),
        }
    }

    pub fn riemannian(metric: MetricField, domain: Domain) -> Result<Self, NormError> {
        let dim = domain.dim();
        let known = if metric.is_constant() { Some(0.0) } else { None };
        let s = Self {
            dim,
            family: Family::Riemannian { metric },
            density: None,
            density_source: None,
            domain,
            known_curvature: known,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn randers(metric: MetricField, drift: DriftField, domain: Domain) -> Result<Self, NormError> {
        let dim = domain.dim();
        let known = if metric.is_constant() && drift.is_constant() {
            Some(0.0)
        } else {
            None
        };
        let s = Self {
            dim,
            family: Family::Randers { metric, drift },
            density: None,
            density_source: None,
            domain,
            known_curvature: known,
        };
        s.validate()?;
        Ok(s)
    }

    /// Randers structure of a time-minimal navigation problem: drift `wind`
    /// against the Euclidean background. Travelling with the wind is cheap,
    /// against it expensive; `|wind| < 1` is required.
    pub fn randers_navigation(wind: &[f64], domain: Domain) -> Result<Self, NormError> {
        let dim = domain.dim();
        if wind.len() != dim {
            return Err(NormError::DimensionMismatch { expected: dim, got: wind.len() });
        }
        let w2: f64 = wind.iter().map(|w| w * w).sum();
        if w2 >= 1.0 {
            return Err(NormError::InvalidStructure(format!(
                "navigation wind must satisfy |wind| < 1, got |wind|^2 = {w2}"
            )));
        }
        let den = 1.0 - w2;
        let metric = MetricField::from_values(dim, |i, j| {
            let kron = if i == j { 1.0 } else { 0.0 };
            (den * kron + wind[i] * wind[j]) / (den * den)
        });
        let drift: Vec<f64> = wind.iter().map(|w| -w / den).collect();
        Self::randers(metric, DriftField::from_values(&drift), domain)
    }

    pub fn quartic(metric: MetricField, epsilon: f64, domain: Domain) -> Result<Self, NormError> {
        if !(epsilon > 0.0) {
            return Err(NormError::InvalidStructure(format!(
                "quartic regularization requires epsilon > 0, got {epsilon}"
            )));
        }
        let dim = domain.dim();
        let known = if metric.is_constant() { Some(0.0) } else { None };
        let s = Self {
            dim,
            family: Family::Quartic { metric, epsilon },
            density: None,
            density_source: None,
            domain,
            known_curvature: known,
        };
        s.validate()?;
        Ok(s)
    }

    /// Stereographic patch of the round unit sphere: conformal metric
    /// `4 (dx^2 + dy^2) / (1 + x^2 + y^2)^2`, constant flag curvature 1.
    pub fn sphere_patch(domain: Domain) -> Result<Self, NormError> {
        assert_eq!(domain.dim(), 2, "the sphere patch is two-dimensional");
        let conf = "4/(1 + x^2 + y^2)^2".to_string();
        let rows = vec![
            vec![conf.clone(), "0".to_string()],
            vec!["0".to_string(), conf],
        ];
        let metric = MetricField::parse(&rows, 2)?;
        let mut s = Self::riemannian(metric, domain)?;
        s.known_curvature = Some(1.0);
        Ok(s)
    }

    /// Attach a log-density `phi` so the measure becomes `e^phi dx`.
    pub fn with_density(mut self, phi: &str) -> Result<Self, NormError> {
        let e = Expr::parse(phi, self.dim)?;
        self.density = Some(Coeff::new(e, self.dim));
        self.density_source = Some(phi.to_string());
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn density_source(&self) -> Option<&str> {
        self.density_source.as_deref()
    }

    /// Constant flag curvature if the family stores one in closed form.
    pub fn known_flag_curvature(&self) -> Option<f64> {
        self.known_curvature
    }

    /// True when no coefficient depends on `x` (locally Minkowski case:
    /// geodesics are straight lines).
    pub fn is_x_independent(&self) -> bool {
        match &self.family {
            Family::Euclidean => true,
            Family::Riemannian { metric } => metric.is_constant(),
            Family::Randers { metric, drift } => metric.is_constant() && drift.is_constant(),
            Family::Quartic { metric, .. } => metric.is_constant(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), NormError> {
        if got != self.dim {
            Err(NormError::DimensionMismatch { expected: self.dim, got })
        } else {
            Ok(())
        }
    }

    /// Log-density `phi(x)` of the measure (0 when unset).
    pub fn log_density(&self, x: &Point) -> f64 {
        self.density.as_ref().map_or(0.0, |c| c.eval(x))
    }

    /// Measure weight `e^{phi(x)}`.
    pub fn measure_weight(&self, x: &Point) -> f64 {
        self.log_density(x).exp()
    }

    /// Norm evaluation `F(x, V)`. Positively 1-homogeneous; `F(x, 0) = 0`.
    pub fn norm(&self, x: &Point, v: &Vector) -> f64 {
        debug_assert_eq!(v.dim(), self.dim);
        match &self.family {
            Family::Euclidean => v.euclid_norm(),
            Family::Riemannian { metric } => metric.eval(x).quad(v).max(0.0).sqrt(),
            Family::Randers { metric, drift } => {
                let alpha = metric.eval(x).quad(v).max(0.0).sqrt();
                alpha + drift.eval(x).pair(v)
            }
            Family::Quartic { metric, epsilon } => {
                let q = metric.eval(x).quad(v);
                let s: f64 = v.as_slice().iter().map(|c| c.powi(4)).sum();
                (q * q + epsilon * s).max(0.0).powf(0.25)
            }
        }
    }

    /// Squared norm, the Lagrangian of the geodesic problem.
    pub fn norm_sq(&self, x: &Point, v: &Vector) -> f64 {
        match &self.family {
            Family::Euclidean | Family::Riemannian { .. } => {
                // avoid the sqrt round-trip
                match &self.family {
                    Family::Euclidean => v.as_slice().iter().map(|c| c * c).sum(),
                    Family::Riemannian { metric } => metric.eval(x).quad(v),
                    _ => unreachable!(),
                }
            }
            _ => {
                let f = self.norm(x, v);
                f * f
            }
        }
    }

    /// Chart gradient of `F^2` in `x` at frozen `V` (feeds the geodesic
    /// equations; identically zero for locally Minkowski structures).
    pub fn norm_sq_x_gradient(&self, x: &Point, v: &Vector) -> Covector {
        let mut out = Covector::zeros(self.dim);
        match &self.family {
            Family::Euclidean => {}
            Family::Riemannian { metric } => {
                if !metric.is_constant() {
                    for k in 0..self.dim {
                        out.set(k, metric.eval_dx(x, k).quad(v));
                    }
                }
            }
            Family::Randers { metric, drift } => {
                if !(metric.is_constant() && drift.is_constant()) {
                    let alpha = metric.eval(x).quad(v).max(0.0).sqrt();
                    let f = alpha + drift.eval(x).pair(v);
                    for k in 0..self.dim {
                        let da = metric.eval_dx(x, k).quad(v);
                        let db = drift.eval_dx(x, k).pair(v);
                        let dalpha = if alpha > 0.0 { da / (2.0 * alpha) } else { 0.0 };
                        out.set(k, 2.0 * f * (dalpha + db));
                    }
                }
            }
            Family::Quartic { metric, .. } => {
                if !metric.is_constant() {
                    let q = metric.eval(x).quad(v);
                    let f2 = self.norm_sq(x, v);
                    if f2 > 0.0 {
                        for k in 0..self.dim {
                            let dq = metric.eval_dx(x, k).quad(v);
                            out.set(k, q * dq / f2);
                        }
                    }
                }
            }
        }
        out
    }

    /// Legendre transform `l(V) = g_V(V, .)`, the fiber gradient of `F^2/2`.
    /// `l(0) = 0` by continuous extension.
    pub fn legendre(&self, x: &Point, v: &Vector) -> Covector {
        debug_assert_eq!(v.dim(), self.dim);
        match &self.family {
            Family::Euclidean => v.to_covector(),
            Family::Riemannian { metric } => metric.eval(x).lower(v),
            Family::Randers { metric, drift } => {
                let a = metric.eval(x);
                let b = drift.eval(x);
                let alpha = a.quad(v).max(0.0).sqrt();
                if alpha == 0.0 {
                    return Covector::zeros(self.dim);
                }
                let f = alpha + b.pair(v);
                let av = a.lower(v);
                let mut out = Covector::zeros(self.dim);
                for i in 0..self.dim {
                    out.set(i, f * (av.get(i) / alpha + b.get(i)));
                }
                out
            }
            Family::Quartic { metric, epsilon } => {
                let a = metric.eval(x);
                let q = a.quad(v);
                let s: f64 = v.as_slice().iter().map(|c| c.powi(4)).sum();
                let p = q * q + epsilon * s;
                if p == 0.0 {
                    return Covector::zeros(self.dim);
                }
                let sqrt_p = p.sqrt();
                let av = a.lower(v);
                let mut out = Covector::zeros(self.dim);
                for i in 0..self.dim {
                    let p_i = 4.0 * q * av.get(i) + 4.0 * epsilon * v.get(i).powi(3);
                    out.set(i, p_i / (4.0 * sqrt_p));
                }
                out
            }
        }
    }

    /// Fundamental tensor `g_V` (analytic per family). Errors at `V = 0`.
    pub fn fundamental_tensor(&self, x: &Point, v: &Vector) -> Result<FundamentalTensor, NormError> {
        self.check_dim(v.dim())?;
        if self.norm_sq(x, v) == 0.0 {
            return Err(NormError::ZeroVector);
        }
        let g = match &self.family {
            Family::Euclidean => SymMat::identity(self.dim),
            Family::Riemannian { metric } => metric.eval(x),
            Family::Randers { metric, drift } => {
                let a = metric.eval(x);
                let b = drift.eval(x);
                let alpha = a.quad(v).sqrt();
                let f = alpha + b.pair(v);
                let av = a.lower(v);
                // unit alpha-covector and angular part h = a - la la^T
                let mut la = Covector::zeros(self.dim);
                for i in 0..self.dim {
                    la.set(i, av.get(i) / alpha);
                }
                SymMat::from_fn(self.dim, |i, j| {
                    let m_i = la.get(i) + b.get(i);
                    let m_j = la.get(j) + b.get(j);
                    let h_ij = a.get(i, j) - la.get(i) * la.get(j);
                    m_i * m_j + (f / alpha) * h_ij
                })
            }
            Family::Quartic { metric, epsilon } => {
                let a = metric.eval(x);
                let q = a.quad(v);
                let s: f64 = v.as_slice().iter().map(|c| c.powi(4)).sum();
                let p = q * q + epsilon * s;
                let sqrt_p = p.sqrt();
                let av = a.lower(v);
                let p_grad: Vec<f64> = (0..self.dim)
                    .map(|i| 4.0 * q * av.get(i) + 4.0 * epsilon * v.get(i).powi(3))
                    .collect();
                SymMat::from_fn(self.dim, |i, j| {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    let p_ij = 8.0 * av.get(i) * av.get(j)
                        + 4.0 * q * a.get(i, j)
                        + 12.0 * epsilon * v.get(i) * v.get(i) * kron;
                    p_ij / (4.0 * sqrt_p) - p_grad[i] * p_grad[j] / (8.0 * p * sqrt_p)
                })
            }
        };
        Ok(FundamentalTensor { g, base_point: *x, base_vector: *v })
    }

    /// Cartan tensor `C_ijk = (1/4) d^3(F^2)/dV^i dV^j dV^k` (analytic).
    /// Identically zero for Euclidean/Riemannian structures; contraction
    /// with the base direction vanishes for every family.
    pub fn cartan_tensor(&self, x: &Point, v: &Vector) -> Result<SymTensor3, NormError> {
        self.check_dim(v.dim())?;
        if self.norm_sq(x, v) == 0.0 {
            return Err(NormError::ZeroVector);
        }
        let n = self.dim;
        let mut out = SymTensor3::zeros(n);
        match &self.family {
            Family::Euclidean | Family::Riemannian { .. } => {}
            Family::Randers { metric, drift } => {
                let a = metric.eval(x);
                let b = drift.eval(x);
                let alpha = a.quad(v).sqrt();
                let f = alpha + b.pair(v);
                let av = a.lower(v);
                let la: Vec<f64> = (0..n).map(|i| av.get(i) / alpha).collect();
                let m: Vec<f64> = (0..n).map(|i| la[i] + b.get(i)).collect();
                let h = |i: usize, j: usize| a.get(i, j) - la[i] * la[j];
                for i in 0..n {
                    for j in i..n {
                        for k in j..n {
                            let sym_m = h(i, j) * m[k] + h(j, k) * m[i] + h(k, i) * m[j];
                            let sym_l = h(i, j) * la[k] + h(j, k) * la[i] + h(k, i) * la[j];
                            let c = sym_m / (2.0 * alpha) - f * sym_l / (2.0 * alpha * alpha);
                            out.set_sym(i, j, k, c);
                        }
                    }
                }
            }
            Family::Quartic { metric, epsilon } => {
                let a = metric.eval(x);
                let q = a.quad(v);
                let s: f64 = v.as_slice().iter().map(|c| c.powi(4)).sum();
                let p = q * q + epsilon * s;
                let sqrt_p = p.sqrt();
                let av = a.lower(v);
                let pg: Vec<f64> = (0..n)
                    .map(|i| 4.0 * q * av.get(i) + 4.0 * epsilon * v.get(i).powi(3))
                    .collect();
                let phess = |i: usize, j: usize| {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    8.0 * av.get(i) * av.get(j)
                        + 4.0 * q * a.get(i, j)
                        + 12.0 * epsilon * v.get(i) * v.get(i) * kron
                };
                for i in 0..n {
                    for j in i..n {
                        for k in j..n {
                            let third = {
                                let base = 8.0
                                    * (a.get(i, k) * av.get(j)
                                        + a.get(j, k) * av.get(i)
                                        + a.get(i, j) * av.get(k));
                                let diag = if i == j && j == k {
                                    24.0 * epsilon * v.get(i)
                                } else {
                                    0.0
                                };
                                base + diag
                            };
                            let g_ijk = third / (4.0 * sqrt_p)
                                - (phess(i, j) * pg[k] + phess(i, k) * pg[j] + phess(j, k) * pg[i])
                                    / (8.0 * p * sqrt_p)
                                + 3.0 * pg[i] * pg[j] * pg[k] / (16.0 * p * p * sqrt_p);
                            out.set_sym(i, j, k, 0.5 * g_ijk);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Finite-difference fundamental tensor, the cross-check oracle for the
    /// analytic path. Central second differences of `F^2/2` with a step
    /// relative to the Euclidean size of `V`.
    pub fn fundamental_tensor_fd(&self, x: &Point, v: &Vector, rel_step: f64) -> Result<SymMat, NormError> {
        self.check_dim(v.dim())?;
        if self.norm_sq(x, v) == 0.0 {
            return Err(NormError::ZeroVector);
        }
        let s = rel_step * v.euclid_norm();
        let f = |w: Vector| 0.5 * self.norm_sq(x, &w);
        let n = self.dim;
        let e = |i: usize, h: f64| {
            let mut w = *v;
            w.set(i, w.get(i) + h);
            w
        };
        Ok(SymMat::from_fn(n, |i, j| {
            if i == j {
                (f(e(i, s)) - 2.0 * f(*v) + f(e(i, -s))) / (s * s)
            } else {
                let mut pp = *v;
                pp.set(i, pp.get(i) + s);
                pp.set(j, pp.get(j) + s);
                let mut pm = *v;
                pm.set(i, pm.get(i) + s);
                pm.set(j, pm.get(j) - s);
                let mut mp = *v;
                mp.set(i, mp.get(i) - s);
                mp.set(j, mp.get(j) + s);
                let mut mm = *v;
                mm.set(i, mm.get(i) - s);
                mm.set(j, mm.get(j) - s);
                (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * s * s)
            }
        }))
    }

    /// Finite-difference Cartan tensor oracle: third central differences of
    /// `F^2`, divided by 4.
    pub fn cartan_tensor_fd(&self, x: &Point, v: &Vector, rel_step: f64) -> Result<SymTensor3, NormError> {
        self.check_dim(v.dim())?;
        if self.norm_sq(x, v) == 0.0 {
            return Err(NormError::ZeroVector);
        }
        let s = rel_step * v.euclid_norm();
        let f = |offsets: &[(usize, f64)]| {
            let mut w = *v;
            for (i, h) in offsets {
                w.set(*i, w.get(*i) + h);
            }
            self.norm_sq(x, &w)
        };
        let n = self.dim;
        let mut out = SymTensor3::zeros(n);
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let d3 = if i == j && j == k {
                        (f(&[(i, 2.0 * s)]) - 2.0 * f(&[(i, s)]) + 2.0 * f(&[(i, -s)])
                            - f(&[(i, -2.0 * s)]))
                            / (2.0 * s * s * s)
                    } else if i == j {
                        // d^2/di^2 d/dk
                        let second = |hk: f64| {
                            (f(&[(i, s), (k, hk)]) - 2.0 * f(&[(k, hk)]) + f(&[(i, -s), (k, hk)]))
                                / (s * s)
                        };
                        (second(s) - second(-s)) / (2.0 * s)
                    } else if j == k {
                        let second = |hi: f64| {
                            (f(&[(j, s), (i, hi)]) - 2.0 * f(&[(i, hi)]) + f(&[(j, -s), (i, hi)]))
                                / (s * s)
                        };
                        (second(s) - second(-s)) / (2.0 * s)
                    } else {
                        // all distinct: eight-point stencil
                        let mut acc = 0.0;
                        for (si, sj, sk) in [
                            (1.0, 1.0, 1.0),
                            (1.0, 1.0, -1.0),
                            (1.0, -1.0, 1.0),
                            (1.0, -1.0, -1.0),
                            (-1.0, 1.0, 1.0),
                            (-1.0, 1.0, -1.0),
                            (-1.0, -1.0, 1.0),
                            (-1.0, -1.0, -1.0),
                        ] {
                            let sign = si * sj * sk;
                            acc += sign * f(&[(i, si * s), (j, sj * s), (k, sk * s)]);
                        }
                        acc / (8.0 * s * s * s)
                    };
                    out.set_sym(i, j, k, 0.25 * d3);
                }
            }
        }
        Ok(out)
    }

    /// Dual norm `F*(x, xi) = sup { xi(V) : F(x, V) <= 1 }`, computed by
    /// projected gradient ascent of `xi(W)/F(W)` over unit directions from
    /// multiple deterministic starts. Independent of the Legendre-transform
    /// path so the duality identity `F*(l(V)) = F(V)` is a real check.
    pub fn dual_norm(&self, x: &Point, xi: &Covector) -> f64 {
        debug_assert_eq!(xi.dim(), self.dim);
        let xi_scale = xi.as_slice().iter().map(|c| c.abs()).fold(0.0, f64::max);
        if xi_scale == 0.0 {
            return 0.0;
        }
        // closed forms where the unit ball is an ellipsoid (possibly offset);
        // a degenerate metric sample falls through to the generic ascent
        match &self.family {
            Family::Euclidean => {
                return xi.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt();
            }
            Family::Riemannian { metric } => {
                if let Ok(a_xi) = metric.eval(x).raise(xi) {
                    return xi.pair(&a_xi).max(0.0).sqrt();
                }
            }
            Family::Randers { metric, drift } => {
                if let Some(t) = randers_dual(&metric.eval(x), &drift.eval(x), xi) {
                    return t;
                }
            }
            Family::Quartic { .. } => {}
        }
        let starts = ascent_starts(self.dim);
        let mut best = f64::NEG_INFINITY;
        for s in &starts {
            let val = self.ascend_direction(x, xi, *s);
            if val > best {
                best = val;
            }
        }
        best
    }

    fn ascend_direction(&self, x: &Point, xi: &Covector, start: Vector) -> f64 {
        let phi = |w: &Vector| xi.pair(w) / self.norm(x, w);
        let mut w = normalize_euclid(start);
        let mut val = phi(&w);
        // angular displacement of the first trial step, adapted across
        // iterations; the gradient magnitude alone is a poor step scale when
        // the norm is far from unit-Euclidean size
        let mut trial_angle = 0.5;
        for _ in 0..300 {
            let f = self.norm(x, &w);
            let l = self.legendre(x, &w);
            // grad of xi(W)/F(W); 0-homogeneous, hence tangent to the sphere
            let mut grad = Vector::zeros(self.dim);
            for i in 0..self.dim {
                grad.set(i, xi.get(i) / f - xi.pair(&w) * l.get(i) / (f * f * f));
            }
            let gnorm = grad.euclid_norm();
            if gnorm <= DUAL_ASCENT_TOL * (1.0 + val.abs()) {
                break;
            }
            let mut step = trial_angle / gnorm;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = normalize_euclid(w + grad * step);
                let cand_val = phi(&cand);
                if cand_val > val + 0.25 * step * gnorm * gnorm {
                    w = cand;
                    val = cand_val;
                    accepted = true;
                    trial_angle = (step * gnorm * 2.0).min(0.5);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        val
    }

    /// Inverse Legendre transform: the unique `W` with `l(W) = xi`, via a
    /// damped Newton iteration on the strongly convex potential
    /// `F^2(W)/2 - xi(W)`. `warm` seeds the iteration (mesh assembly reuses
    /// per-element solutions).
    pub fn legendre_inverse(
        &self,
        x: &Point,
        xi: &Covector,
        warm: Option<Vector>,
    ) -> Result<Vector, NormError> {
        self.check_dim(xi.dim())?;
        let xi_scale = xi.as_slice().iter().map(|c| c.abs()).fold(0.0, f64::max);
        if xi_scale == 0.0 {
            return Ok(Vector::zeros(self.dim));
        }
        // closed-form fast paths
        match &self.family {
            Family::Euclidean => return Ok(xi.to_vector()),
            Family::Riemannian { metric } => return Ok(metric.eval(x).raise(xi)?),
            Family::Randers { metric, drift } => {
                if let Some(v) = randers_legendre_inverse(&metric.eval(x), &drift.eval(x), xi) {
                    return Ok(v);
                }
            }
            Family::Quartic { .. } => {}
        }
        let seed = {
            // raise with the background metric for a convexity-respecting start
            let a = match &self.family {
                Family::Randers { metric, .. } | Family::Quartic { metric, .. } => metric.eval(x),
                _ => unreachable!(),
            };
            a.raise(xi)?
        };
        let mut w = match warm {
            Some(w) if w.dim() == self.dim && self.norm_sq(x, &w) > 0.0 => w,
            _ => seed,
        };
        if self.norm_sq(x, &w) == 0.0 {
            w = xi.to_vector();
        }
        let potential = |w: &Vector| 0.5 * self.norm_sq(x, w) - xi.pair(w);
        let mut m_val = potential(&w);
        let mut last_res = f64::INFINITY;
        for it in 0..60 {
            let l = self.legendre(x, &w);
            let mut residual = Covector::zeros(self.dim);
            let mut res_norm: f64 = 0.0;
            for i in 0..self.dim {
                let r = xi.get(i) - l.get(i);
                residual.set(i, r);
                res_norm = res_norm.max(r.abs());
            }
            if res_norm <= LEGENDRE_NEWTON_TOL * xi_scale {
                return Ok(w);
            }
            let g = self.fundamental_tensor(x, &w)?;
            let step = g.g.solve(&residual)?;
            if res_norm <= 1e-5 * xi_scale {
                // quadratic basin: potential differences fall below float
                // resolution, so take undamped steps and watch the residual
                if res_norm >= last_res && res_norm <= 1e-10 * xi_scale {
                    return Ok(w); // residual has hit its rounding floor
                }
                last_res = res_norm;
                w = w + step;
                continue;
            }
            // globalization: Armijo backtracking on the convex potential
            let descent: f64 = (0..self.dim).map(|i| residual.get(i) * step.get(i)).sum();
            let mut tau = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let cand = w + step * tau;
                if self.norm_sq(x, &cand) > 0.0 {
                    let cand_val = potential(&cand);
                    if cand_val <= m_val - 1e-4 * tau * descent {
                        w = cand;
                        m_val = cand_val;
                        moved = true;
                        break;
                    }
                }
                tau *= 0.5;
            }
            if !moved {
                return Err(NormError::NewtonDiverged { residual: res_norm, iterations: it });
            }
        }
        let l = self.legendre(x, &w);
        let res = (0..self.dim)
            .map(|i| (xi.get(i) - l.get(i)).abs())
            .fold(0.0, f64::max);
        if res <= 1e-10 * xi_scale {
            Ok(w)
        } else {
            Err(NormError::NewtonDiverged { residual: res, iterations: 60 })
        }
    }

    /// Sample uniform convexity/smoothness constants and the reversibility
    /// modulus over the given domain. Seeded sampling locates the extreme
    /// configurations; a derivative-free polish then sharpens each incumbent
    /// so the classical bounds (tight for constant Randers) are met to high
    /// accuracy rather than up to sampling noise. Deterministic per seed.
    pub fn estimate_uniform_constants(
        &self,
        domain: &Domain,
        samples: usize,
        seed: u64,
    ) -> Result<UniformConstants, NormError> {
        self.check_dim(domain.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim;
        let mut lambda = f64::INFINITY;
        let mut lambda_arg = None;
        let mut lambda_max: f64 = 0.0;
        let mut lambda_max_arg = None;
        let mut rho: f64 = 0.0;
        let mut rho_arg = None;
        let mut dual_lambda = f64::INFINITY;
        let mut dual_lambda_max: f64 = 0.0;
        for _ in 0..samples {
            let x = domain.sample(&mut rng);
            let v = random_direction(&mut rng, n);
            let w = random_direction(&mut rng, n);
            let g = self.fundamental_tensor(&x, &v)?;
            let fw = self.norm(&x, &w);
            let ratio = g.quad(&w) / (fw * fw);
            if ratio < lambda {
                lambda = ratio;
                lambda_arg = Some((x, v, w));
            }
            if ratio > lambda_max {
                lambda_max = ratio;
                lambda_max_arg = Some((x, v, w));
            }
            let fv = self.norm(&x, &v);
            let fmv = self.norm(&x, &(-v));
            if fv / fmv > rho {
                rho = fv / fmv;
                rho_arg = Some((x, v));
            }
            // dual side: g^{ij} against the dual norm, via the Legendre image
            let g_inv = g.inverse()?;
            let xi = self.legendre(&x, &w);
            let fstar = fw; // F*(l(W)) = F(W)
            let dual_ratio = g_inv.quad_covector(&xi) / (fstar * fstar);
            dual_lambda = dual_lambda.min(dual_ratio);
            dual_lambda_max = dual_lambda_max.max(dual_ratio);
        }
        let ratio_obj = |x: &Point, v: &Vector, w: &Vector| -> f64 {
            let g = match self.fundamental_tensor(x, v) {
                Ok(g) => g,
                Err(_) => return f64::NAN,
            };
            let fw = self.norm(x, w);
            g.quad(w) / (fw * fw)
        };
        if let Some((x, v, w)) = lambda_arg {
            let polished = polish_extremum(domain, &x, &[v, w], false, |x, dirs| {
                ratio_obj(x, &dirs[0], &dirs[1])
            });
            lambda = lambda.min(polished);
        }
        if let Some((x, v, w)) = lambda_max_arg {
            let polished = polish_extremum(domain, &x, &[v, w], true, |x, dirs| {
                ratio_obj(x, &dirs[0], &dirs[1])
            });
            lambda_max = lambda_max.max(polished);
        }
        if let Some((x, v)) = rho_arg {
            let polished = polish_extremum(domain, &x, &[v], true, |x, dirs| {
                self.norm(x, &dirs[0]) / self.norm(x, &(-dirs[0]))
            });
            rho = rho.max(polished);
        }
        Ok(UniformConstants {
            lambda,
            lambda_max,
            rho,
            dual_lambda,
            dual_lambda_max,
            samples,
            seed,
        })
    }

    /// Construction-time validation on a deterministic sample grid.
    fn validate(&self) -> Result<(), NormError> {
        let grid = self.domain.grid(5);
        let dirs = ascent_starts(self.dim);
        match &self.family {
            Family::Euclidean => {}
            Family::Riemannian { metric } => {
                for x in &grid {
                    if !metric.eval(x).is_positive_definite() {
                        return Err(NormError::InvalidStructure(format!(
                            "metric is not positive definite at ({:?})",
                            x.as_slice()
                        )));
                    }
                }
            }
            Family::Randers { metric, drift } => {
                for x in &grid {
                    let a = metric.eval(x);
                    if !a.is_positive_definite() {
                        return Err(NormError::InvalidStructure(format!(
                            "randers metric is not positive definite at ({:?})",
                            x.as_slice()
                        )));
                    }
                    let b = drift.eval(x);
                    let b_norm_sq = a.inverse()?.quad_covector(&b);
                    if b_norm_sq >= 1.0 {
                        return Err(NormError::InvalidStructure(format!(
                            "randers drift too large: a^ij b_i b_j = {b_norm_sq:.6} >= 1 at ({:?})",
                            x.as_slice()
                        )));
                    }
                }
            }
            Family::Quartic { metric, epsilon } => {
                if !(*epsilon > 0.0) {
                    return Err(NormError::InvalidStructure(
                        "quartic epsilon must be positive".into(),
                    ));
                }
                for x in &grid {
                    if !metric.eval(x).is_positive_definite() {
                        return Err(NormError::InvalidStructure(format!(
                            "quartic metric is not positive definite at ({:?})",
                            x.as_slice()
                        )));
                    }
                    for d in &dirs {
                        let g = self.fundamental_tensor(x, d)?;
                        if !g.g.is_positive_definite() {
                            return Err(NormError::InvalidStructure(format!(
                                "fundamental tensor degenerates at ({:?}), direction ({:?})",
                                x.as_slice(),
                                d.as_slice()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Shrinking-step coordinate search over a chart point and unit directions.
/// Derivative-free so it works uniformly across families; ~1e-8 accuracy on
/// the smooth ratio objectives it polishes.
fn polish_extremum(
    domain: &Domain,
    x0: &Point,
    dirs0: &[Vector],
    maximize: bool,
    obj: impl Fn(&Point, &[Vector]) -> f64,
) -> f64 {
    let n = domain.dim();
    let mut x = *x0;
    let mut dirs: Vec<Vector> = dirs0.to_vec();
    let better = |cand: f64, incumbent: f64| {
        cand.is_finite() && if maximize { cand > incumbent } else { cand < incumbent }
    };
    let mut best = obj(&x, &dirs);
    let mut step = 0.25;
    let x_scale = domain.scale().max(1e-6);
    for _ in 0..200 {
        let mut improved = false;
        for i in 0..n {
            for sgn in [1.0, -1.0] {
                let mut cand = x;
                let raw = cand.get(i) + sgn * step * x_scale;
                cand.set(i, raw.clamp(domain.lo(i), domain.hi(i)));
                let val = obj(&cand, &dirs);
                if better(val, best) {
                    best = val;
                    x = cand;
                    improved = true;
                }
            }
        }
        for d in 0..dirs.len() {
            for i in 0..n {
                for sgn in [1.0, -1.0] {
                    let mut cand = dirs[d];
                    cand.set(i, cand.get(i) + sgn * step);
                    let norm = cand.euclid_norm();
                    if norm < 1e-9 {
                        continue;
                    }
                    let cand = cand * (1.0 / norm);
                    let mut trial = dirs.clone();
                    trial[d] = cand;
                    let val = obj(&x, &trial);
                    if better(val, best) {
                        best = val;
                        dirs = trial;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-9 {
                break;
            }
        }
    }
    best
}

fn normalize_euclid(v: Vector) -> Vector {
    let n = v.euclid_norm();
    if n == 0.0 {
        v
    } else {
        v * (1.0 / n)
    }
}

/// Deterministic fan of starting directions for multi-start ascent
/// (8 in the plane, 26 in space).
/// Closed-form Randers dual norm: with `A = a^{-1}`, `q = xi' A xi`,
/// `s = b' A xi`, `beta^2 = b' A b`, the scaling `t = F*(xi)` solves
/// `t^2 (1 - beta^2) + 2 s t - q = 0`. `None` on a degenerate sample, which
/// falls back to the generic iterative path.
fn randers_dual(a: &SymMat, b: &Covector, xi: &Covector) -> Option<f64> {
    let a_xi = a.raise(xi).ok()?;
    let a_b = a.raise(b).ok()?;
    let q = xi.pair(&a_xi);
    let s = b.pair(&a_xi);
    let margin = 1.0 - b.pair(&a_b);
    if margin <= 0.0 || q <= 0.0 {
        return None;
    }
    Some(((s * s + margin * q).sqrt() - s) / margin)
}

/// Closed-form Randers momentum inverse: for `t = F*(xi)` and
/// `r = sqrt(s^2 + (1-beta^2) q)` the maximizer of `xi(V) - F^2(V)/2` is
/// `V = (t/r) A (xi - t b)`; plugging back gives `l(V) = xi` exactly.
fn randers_legendre_inverse(a: &SymMat, b: &Covector, xi: &Covector) -> Option<Vector> {
    let a_xi = a.raise(xi).ok()?;
    let a_b = a.raise(b).ok()?;
    let q = xi.pair(&a_xi);
    let s = b.pair(&a_xi);
    let margin = 1.0 - b.pair(&a_b);
    if margin <= 0.0 || q <= 0.0 {
        return None;
    }
    let r = (s * s + margin * q).sqrt();
    let t = (r - s) / margin;
    Some((a_xi - a_b * t) * (t / r))
}

pub(crate) fn ascent_starts(dim: usize) -> Vec<Vector> {
    match dim {
        2 => (0..8)
            .map(|k| {
                let t = 0.37 + k as f64 * std::f64::consts::TAU / 8.0;
                Vector::xy(t.cos(), t.sin())
            })
            .collect(),
        3 => {
            let mut out = Vec::new();
            for sx in -1i32..=1 {
                for sy in -1i32..=1 {
                    for sz in -1i32..=1 {
                        if sx == 0 && sy == 0 && sz == 0 {
                            continue;
                        }
                        out.push(normalize_euclid(Vector::xyz(sx as f64, sy as f64, sz as f64)));
                    }
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

/// Uniform direction on the Euclidean sphere (Box-Muller normals).
pub(crate) fn random_direction(rng: &mut impl Rng, dim: usize) -> Vector {
    loop {
        let mut v = Vector::zeros(dim);
        for i in 0..dim {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            v.set(i, (-2.0 * u1.ln()).sqrt() * u2.cos());
        }
        let n = v.euclid_norm();
        if n > 1e-6 {
            return v * (1.0 / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randers_05() -> FinslerStructure {
        FinslerStructure::randers(
            MetricField::identity(2),
            DriftField::from_values(&[0.5, 0.0]),
            Domain::centered_box(2, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn euclidean_345() {
        let s = FinslerStructure::euclidean(2);
        let x = Point::xy(0.0, 0.0);
        assert_eq!(s.norm(&x, &Vector::xy(3.0, 4.0)), 5.0);
    }

    #[test]
    fn randers_directional_values() {
        let s = randers_05();
        let x = Point::xy(0.0, 0.0);
        assert!((s.norm(&x, &Vector::xy(1.0, 0.0)) - 1.5).abs() < 1e-15);
        assert!((s.norm(&x, &Vector::xy(-1.0, 0.0)) - 0.5).abs() < 1e-15);
        // g_V(V,V) = F^2(V) at V = (1,0)
        let g = s.fundamental_tensor(&x, &Vector::xy(1.0, 0.0)).unwrap();
        assert!((g.quad(&Vector::xy(1.0, 0.0)) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn navigation_form_directional_values() {
        let s = FinslerStructure::randers_navigation(&[0.5, 0.0], Domain::centered_box(2, 2.0))
            .unwrap();
        let x = Point::xy(0.0, 0.0);
        // moving with the wind costs 1/(1+w), against it 1/(1-w)
        assert!((s.norm(&x, &Vector::xy(1.0, 0.0)) - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.norm(&x, &Vector::xy(-1.0, 0.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        let s = randers_05();
        let x = Point::xy(0.0, 0.0);
        assert!(matches!(
            s.fundamental_tensor(&x, &Vector::xy(0.0, 0.0)),
            Err(NormError::ZeroVector)
        ));
        assert!(matches!(
            s.cartan_tensor(&x, &Vector::xy(0.0, 0.0)),
            Err(NormError::ZeroVector)
        ));
    }

    #[test]
    fn randers_drift_bound_enforced() {
        let err = FinslerStructure::randers(
            MetricField::identity(2),
            DriftField::from_values(&[1.0, 0.0]),
            Domain::centered_box(2, 1.0),
        );
        assert!(err.is_err());
    }

    #[test]
    fn legendre_zero_is_zero() {
        let s = randers_05();
        let x = Point::xy(0.3, -0.2);
        let l = s.legendre(&x, &Vector::xy(0.0, 0.0));
        assert_eq!(l.as_slice(), &[0.0, 0.0]);
        let w = s.legendre_inverse(&x, &Covector::new(&[0.0, 0.0]), None).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn quartic_euler_identity() {
        let s = FinslerStructure::quartic(
            MetricField::identity(2),
            0.1,
            Domain::centered_box(2, 1.0),
        )
        .unwrap();
        let x = Point::xy(0.0, 0.0);
        let v = Vector::xy(1.0, 2.0);
        let g = s.fundamental_tensor(&x, &v).unwrap();
        let f = s.norm(&x, &v);
        assert!((g.quad(&v) - f * f).abs() < 1e-12 * f * f);
    }

    #[test]
    fn dual_norm_euclidean() {
        let s = FinslerStructure::euclidean(2);
        let x = Point::xy(0.0, 0.0);
        let v = s.dual_norm(&x, &Covector::new(&[3.0, 4.0]));
        assert!((v - 5.0).abs() < 1e-9);
    }
}
