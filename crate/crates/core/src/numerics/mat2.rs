use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Real 2×2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    /// The nilpotent `e12`.
    pub const E12: Mat2 = Mat2([[0.0, 1.0], [0.0, 0.0]]);
    /// The nilpotent `e21`.
    pub const E21: Mat2 = Mat2([[0.0, 0.0], [1.0, 0.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    /// Matrix with the given columns.
    pub fn from_columns(c0: [f64; 2], c1: [f64; 2]) -> Self {
        Mat2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    pub fn col(&self, j: usize) -> [f64; 2] {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Inverse, `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let [[a, b], [c, e]] = self.0;
        Some(Mat2([[e / d, -b / d], [-c / d, a / d]]))
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * s, b * s], [c * s, d * s]])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn transpose(&self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a, c], [b, d]])
    }

    /// Entrywise max-norm.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn commutator(&self, other: &Mat2) -> Mat2 {
        *self * *other - *other * *self
    }

    /// `exp(self)` for a trace-free matrix, via `Ω² = −det(Ω)·I`.
    pub fn exp_traceless(&self) -> Mat2 {
        let delta = -self.det();
        let r = delta.abs().sqrt();
        let (c, s) = if r < 1e-4 {
            (1.0 + delta / 2.0 + delta * delta / 24.0, 1.0 + delta / 6.0 + delta * delta / 120.0)
        } else if delta > 0.0 {
            (r.cosh(), r.sinh() / r)
        } else {
            (r.cos(), r.sin() / r)
        };
        Mat2::IDENTITY * c + *self * s
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::ZERO
    }
}

impl Index<(usize, usize)> for Mat2 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        for i in 0..2 {
            for j in 0..2 {
                self.0[i][j] += o.0[i][j];
            }
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        self.scale(s)
    }
}

/// `det(u, v)` for column vectors.
pub fn det2(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(2.0, 1.0, 3.0, 4.0);
        let p = m * m.inverse().unwrap();
        assert!((p - Mat2::IDENTITY).max_abs() < 1e-15);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
    }

    #[test]
    fn traceless_exponential() {
        let t = 0.7_f64;
        let rot = Mat2::new(0.0, -t, t, 0.0).exp_traceless();
        assert!((rot - Mat2::new(t.cos(), -t.sin(), t.sin(), t.cos())).max_abs() < 1e-15);
        let hyp = Mat2::new(t, 0.0, 0.0, -t).exp_traceless();
        assert!((hyp - Mat2::new(t.exp(), 0.0, 0.0, (-t).exp())).max_abs() < 1e-14);
        let nil = Mat2::new(0.0, t, 0.0, 0.0).exp_traceless();
        assert_eq!(nil, Mat2::new(1.0, t, 0.0, 1.0));
        let small = Mat2::new(1e-5, 2e-5, -3e-5, -1e-5).exp_traceless();
        assert!((small.det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn columns() {
        let m = Mat2::from_columns([1.0, 2.0], [3.0, 4.0]);
        assert_eq!(m.col(0), [1.0, 2.0]);
        assert_eq!(m.col(1), [3.0, 4.0]);
        assert_eq!(m.det(), det2([1.0, 2.0], [3.0, 4.0]));
    }
}
