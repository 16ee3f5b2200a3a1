//! Small fixed-capacity linear algebra for dimensions 2 and 3.
//!
//! Tangent vectors, cotangent vectors and chart points are distinct types;
//! the only mixed operation is the duality pairing `Covector::pair`.
//! Everything is `Copy` and allocation-free so norm evaluations stay cheap
//! inside mesh assembly and ODE loops.

use serde::{Deserialize, Serialize};

/// Largest supported chart dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, thiserror::Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("dimension {0} out of range (supported: 2, 3)")]
    BadDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
}

macro_rules! coords_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            data: [f64; MAX_DIM],
            dim: usize,
        }

        impl $name {
            pub fn new(coords: &[f64]) -> Self {
                assert!(
                    coords.len() == 2 || coords.len() == 3,
                    "supported dimensions are 2 and 3, got {}",
                    coords.len()
                );
                let mut data = [0.0; MAX_DIM];
                data[..coords.len()].copy_from_slice(coords);
                Self { data, dim: coords.len() }
            }

            pub fn zeros(dim: usize) -> Self {
                assert!(dim == 2 || dim == 3);
                Self { data: [0.0; MAX_DIM], dim }
            }

            pub fn xy(x: f64, y: f64) -> Self {
                Self::new(&[x, y])
            }

            pub fn xyz(x: f64, y: f64, z: f64) -> Self {
                Self::new(&[x, y, z])
            }

            #[inline]
            pub fn dim(&self) -> usize {
                self.dim
            }

            #[inline]
            pub fn as_slice(&self) -> &[f64] {
                &self.data[..self.dim]
            }

            #[inline]
            pub fn get(&self, i: usize) -> f64 {
                debug_assert!(i < self.dim);
                self.data[i]
            }

            #[inline]
            pub fn set(&mut self, i: usize, v: f64) {
                debug_assert!(i < self.dim);
                self.data[i] = v;
            }

            /// Euclidean length, used only for step-size heuristics.
            pub fn euclid_norm(&self) -> f64 {
                self.as_slice().iter().map(|c| c * c).sum::<f64>().sqrt()
            }

            pub fn is_finite(&self) -> bool {
                self.as_slice().iter().all(|c| c.is_finite())
            }
        }
    };
}

coords_type!(
    /// A point in a coordinate chart.
    Point
);
coords_type!(
    /// A tangent vector attached to some chart point.
    Vector
);
coords_type!(
    /// A cotangent vector (differential); pairs with [`Vector`].
    Covector
);

macro_rules! additive_ops {
    ($name:ident) => {
        impl std::ops::Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                debug_assert_eq!(self.dim, rhs.dim);
                let mut out = self;
                for i in 0..self.dim {
                    out.data[i] += rhs.data[i];
                }
                out
            }
        }

        impl std::ops::Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                debug_assert_eq!(self.dim, rhs.dim);
                let mut out = self;
                for i in 0..self.dim {
                    out.data[i] -= rhs.data[i];
                }
                out
            }
        }

        impl std::ops::Mul<f64> for $name {
            type Output = $name;
            fn mul(self, s: f64) -> $name {
                let mut out = self;
                for i in 0..self.dim {
                    out.data[i] *= s;
                }
                out
            }
        }

        impl std::ops::Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                self * -1.0
            }
        }
    };
}

additive_ops!(Vector);
additive_ops!(Covector);

impl Point {
    /// Chart translation by a tangent vector.
    pub fn offset(self, v: Vector) -> Point {
        debug_assert_eq!(self.dim, v.dim);
        let mut out = self;
        for i in 0..self.dim {
            out.data[i] += v.data[i];
        }
        out
    }

    /// Displacement `self - from` as a tangent vector at `from`.
    pub fn displacement_from(self, from: Point) -> Vector {
        debug_assert_eq!(self.dim, from.dim);
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            out.data[i] = self.data[i] - from.data[i];
        }
        out
    }

    pub fn midpoint(self, other: Point) -> Point {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = self;
        for i in 0..self.dim {
            out.data[i] = 0.5 * (self.data[i] + other.data[i]);
        }
        out
    }
}

impl Covector {
    /// Duality pairing `<xi, v>`.
    #[inline]
    pub fn pair(&self, v: &Vector) -> f64 {
        debug_assert_eq!(self.dim, v.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.data[i] * v.data[i];
        }
        acc
    }
}

impl Vector {
    /// Reinterpret the component array as a covector (chart-dependent; used
    /// only by finite-difference helpers and Euclidean fast paths).
    pub fn to_covector(self) -> Covector {
        Covector { data: self.data, dim: self.dim }
    }
}

impl Covector {
    pub fn to_vector(self) -> Vector {
        Vector { data: self.data, dim: self.dim }
    }
}

/// Dense symmetric matrix of order 2 or 3 (stored padded to 3x3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat {
    m: [[f64; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3);
        Self { m: [[0.0; MAX_DIM]; MAX_DIM], dim }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.m[i][i] = 1.0;
        }
        out
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                out.m[i][j] = v;
                out.m[j][i] = v;
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.m[i][j] = v;
        self.m[j][i] = v;
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> SymMat {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] *= s;
            }
        }
        out
    }

    /// `A v` with the result read as a covector (lowering an index).
    pub fn lower(&self, v: &Vector) -> Covector {
        debug_assert_eq!(self.dim, v.dim());
        let mut out = Covector::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.m[i][j] * v.get(j);
            }
            out.set(i, acc);
        }
        out
    }

    /// `A^{-1} xi` with the result read as a vector (raising an index).
    pub fn raise(&self, xi: &Covector) -> Result<Vector, LinalgError> {
        let inv = self.inverse()?;
        let mut out = Vector::zeros(self.dim);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += inv.m[i][j] * xi.get(j);
            }
            out.set(i, acc);
        }
        Ok(out)
    }

    /// Quadratic form `v^T A v`.
    pub fn quad(&self, v: &Vector) -> f64 {
        debug_assert_eq!(self.dim, v.dim());
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.m[i][j] * v.get(i) * v.get(j);
            }
        }
        acc
    }

    /// Bilinear form `v^T A w`.
    pub fn bilinear(&self, v: &Vector, w: &Vector) -> f64 {
        debug_assert_eq!(self.dim, v.dim());
        debug_assert_eq!(self.dim, w.dim());
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.m[i][j] * v.get(i) * w.get(j);
            }
        }
        acc
    }

    /// Quadratic form on covectors, `xi^T A xi` (used with inverse tensors).
    pub fn quad_covector(&self, xi: &Covector) -> f64 {
        debug_assert_eq!(self.dim, xi.dim());
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.m[i][j] * xi.get(i) * xi.get(j);
            }
        }
        acc
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            3 => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
            _ => unreachable!(),
        }
    }

    pub fn inverse(&self) -> Result<SymMat, LinalgError> {
        let det = self.det();
        if det.abs() < 1e-300 || !det.is_finite() {
            return Err(LinalgError::Singular);
        }
        let m = &self.m;
        let mut out = SymMat::zeros(self.dim);
        match self.dim {
            2 => {
                out.m[0][0] = m[1][1] / det;
                out.m[1][1] = m[0][0] / det;
                out.m[0][1] = -m[0][1] / det;
                out.m[1][0] = out.m[0][1];
            }
            3 => {
                let c = |a: usize, b: usize, cc: usize, d: usize| m[a][cc] * m[b][d] - m[a][d] * m[b][cc];
                out.m[0][0] = c(1, 2, 1, 2) / det;
                out.m[0][1] = -c(0, 2, 1, 2) / det;
                out.m[0][2] = c(0, 1, 1, 2) / det;
                out.m[1][0] = out.m[0][1];
                out.m[1][1] = c(0, 2, 0, 2) / det;
                out.m[1][2] = -c(0, 1, 0, 2) / det;
                out.m[2][0] = out.m[0][2];
                out.m[2][1] = out.m[1][2];
                out.m[2][2] = c(0, 1, 0, 1) / det;
            }
            _ => unreachable!(),
        }
        Ok(out)
    }

    /// Solve `A x = b` for symmetric positive-definite `A`.
    pub fn solve(&self, b: &Covector) -> Result<Vector, LinalgError> {
        self.raise(b)
    }

    /// Cholesky-based positive-definiteness test.
    pub fn is_positive_definite(&self) -> bool {
        let m = &self.m;
        match self.dim {
            2 => m[0][0] > 0.0 && self.det() > 0.0,
            3 => {
                m[0][0] > 0.0
                    && (m[0][0] * m[1][1] - m[0][1] * m[0][1]) > 0.0
                    && self.det() > 0.0
            }
            _ => unreachable!(),
        }
    }

    /// Largest absolute entry difference, for tolerance checks.
    pub fn max_abs_diff(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max(self.m[i][j].abs());
            }
        }
        worst
    }
}

/// Totally symmetric rank-3 tensor of order 2 or 3 (the Cartan tensor).
#[derive(Debug, Clone, Copy)]
pub struct SymTensor3 {
    c: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
    dim: usize,
}

impl SymTensor3 {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3);
        Self { c: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM], dim }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim && k < self.dim);
        self.c[i][j][k]
    }

    /// Set the entry and all permutations of (i, j, k).
    pub fn set_sym(&mut self, i: usize, j: usize, k: usize, v: f64) {
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            self.c[a][b][c] = v;
        }
    }

    /// Contraction `C(u, v, w)`.
    pub fn contract(&self, u: &Vector, v: &Vector, w: &Vector) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    acc += self.c[i][j][k] * u.get(i) * v.get(j) * w.get(k);
                }
            }
        }
        acc
    }

    /// Contraction over the last slot only: `C(., ., w)` as a matrix.
    pub fn contract_last(&self, w: &Vector) -> SymMat {
        let mut out = SymMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut acc = 0.0;
                for k in 0..self.dim {
                    acc += self.c[i][j][k] * w.get(k);
                }
                out.m[i][j] = acc;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    worst = worst.max(self.c[i][j][k].abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &SymTensor3) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for k in 0..self.dim {
                    worst = worst.max((self.c[i][j][k] - other.c[i][j][k]).abs());
                }
            }
        }
        worst
    }
}
