//! Minimal 2-vector / 2x2-matrix arithmetic.
//!
//! All model algebra in this crate is bivariate, so instead of pulling in a
//! general linear-algebra dependency we keep the handful of closed-form
//! operations we need: inverse, determinant, Cholesky factor, quadratic
//! forms. By convention the `x` slot carries the sensitivity (p) coordinate
//! and the `y` slot the false-positive-rate (q) coordinate.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Ridge added to a matrix before inversion to keep near-singular systems
/// solvable; small enough to be invisible at the tolerances we work to.
pub const INVERSION_RIDGE: f64 = 1e-12;

/// A point in the bivariate (p, q) plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Euclidean norm.
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Largest absolute component.
    pub fn norm_inf(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Outer product `self * other^T`.
    pub fn outer(self, other: Vec2) -> Mat2 {
        Mat2::new(
            self.x * other.x,
            self.x * other.y,
            self.y * other.x,
            self.y * other.y,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// A 2x2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64, // row 1, col 1
    pub b: f64, // row 1, col 2
    pub c: f64, // row 2, col 1
    pub d: f64, // row 2, col 2
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 {
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    /// Symmetric matrix from variances and covariance.
    pub fn symmetric(var_x: f64, var_y: f64, cov: f64) -> Self {
        Mat2::new(var_x, cov, cov, var_y)
    }

    pub fn det(self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(self) -> f64 {
        self.a + self.d
    }

    /// Inverse with a fixed ridge on the diagonal so near-singular matrices
    /// stay invertible. All statistical inversions in this crate go through
    /// here, which keeps boundary fits (variances collapsing to zero) from
    /// poisoning downstream algebra with NaNs.
    pub fn ridged_inverse(self) -> Mat2 {
        let m = Mat2::new(
            self.a + INVERSION_RIDGE,
            self.b,
            self.c,
            self.d + INVERSION_RIDGE,
        );
        let det = m.det();
        Mat2::new(m.d / det, -m.b / det, -m.c / det, m.a / det)
    }

    /// log |M| with the same ridge as [`Mat2::ridged_inverse`], so that
    /// `log det` and the inverse always refer to the same matrix.
    pub fn ridged_log_det(self) -> f64 {
        ((self.a + INVERSION_RIDGE) * (self.d + INVERSION_RIDGE) - self.b * self.c).ln()
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    /// Quadratic form `v^T M v`.
    pub fn quad_form(self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    /// Lower-triangular Cholesky factor of a (near-)PSD symmetric matrix.
    ///
    /// Returns `(factor, repaired)` where `repaired` reports that a small
    /// diagonal ridge had to be added to restore positive definiteness.
    pub fn cholesky_repaired(self) -> (Mat2, bool) {
        let mut m = self;
        let mut repaired = false;
        // repair: bump the diagonal until both pivots are positive
        if m.a <= 0.0 || m.a * m.d - m.b * m.c <= 0.0 {
            let bump = 1e-10 * (1.0 + m.trace().abs());
            m = Mat2::new(m.a + bump, m.b, m.c, m.d + bump);
            repaired = true;
            // in the worst case (large negative covariance entries) keep
            // doubling the bump; bounded because the diagonal dominates
            // eventually
            let mut extra = bump;
            while m.a <= 0.0 || m.a * m.d - m.b * m.c <= 0.0 {
                extra *= 10.0;
                m = Mat2::new(m.a + extra, m.b, m.c, m.d + extra);
            }
        }
        let l11 = m.a.sqrt();
        let l21 = m.c / l11;
        let l22 = (m.d - l21 * l21).max(0.0).sqrt();
        (Mat2::new(l11, 0.0, l21, l22), repaired)
    }

    pub fn is_finite(self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(self.a + rhs.a, self.b + rhs.b, self.c + rhs.c, self.d + rhs.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2::new(self.a - rhs.a, self.b - rhs.b, self.c - rhs.c, self.d - rhs.d)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.a * rhs.a + self.b * rhs.c,
            self.a * rhs.b + self.b * rhs.d,
            self.c * rhs.a + self.d * rhs.c,
            self.c * rhs.b + self.d * rhs.d,
        )
    }
}
