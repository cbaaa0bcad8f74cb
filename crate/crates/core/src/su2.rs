//! SU(2) group elements as unit quaternions and su(2) algebra vectors.
//!
//! A group element is a unit quaternion q = (w, x, y, z) under the Hamilton
//! product. An algebra element is a 3-vector `a`; the exponential map is
//!
//!   exp(a) = (cos|a|, sin|a| a/|a|)
//!
//! and `log` is its principal inverse (rotation half-angle in [0, pi)).
//! The pointwise pairing on algebra vectors is 2 * dot, which is the value of
//! -Tr(alpha beta) for the corresponding traceless anti-hermitian matrices.
//! The "sigma3 direction" used by the abelian embeds is the quaternion k-axis.

use serde::{Deserialize, Serialize};

/// Quaternion components `[w, x, y, z]`; `w` is the scalar part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat(pub [f64; 4]);

/// su(2) algebra vector (3 real coefficients).
pub type Su2Vec = [f64; 3];

pub const ZERO_VEC: Su2Vec = [0.0, 0.0, 0.0];

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat([w, x, y, z])
    }

    pub fn w(&self) -> f64 {
        self.0[0]
    }

    /// Imaginary (vector) part.
    pub fn imag(&self) -> Su2Vec {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        if n < 1e-300 {
            return Quat::IDENTITY;
        }
        Quat([self.0[0] / n, self.0[1] / n, self.0[2] / n, self.0[3] / n])
    }

    /// Hamilton product.
    pub fn mul(&self, o: &Quat) -> Quat {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = o.0;
        Quat([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    /// Conjugate; equals the inverse on unit quaternions.
    pub fn conj(&self) -> Quat {
        Quat([self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }

    pub fn scale(&self, s: f64) -> Quat {
        Quat([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }

    pub fn add(&self, o: &Quat) -> Quat {
        Quat([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }

    /// Re Tr of the 2x2 matrix representative: 2w.
    pub fn re_trace(&self) -> f64 {
        2.0 * self.0[0]
    }

    /// Group exponential of an algebra vector.
    pub fn exp(a: &Su2Vec) -> Quat {
        let t = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if t < 1e-12 {
            // sin t / t to second order keeps the result unit to machine precision
            let s = 1.0 - t * t / 6.0;
            Quat([1.0 - t * t / 2.0, s * a[0], s * a[1], s * a[2]]).normalized()
        } else {
            let s = t.sin() / t;
            Quat([t.cos(), s * a[0], s * a[1], s * a[2]])
        }
    }

    /// Principal logarithm of `self / |self|`. Well-defined away from w = -|q|.
    pub fn log(&self) -> Su2Vec {
        let v = self.imag();
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let w = self.0[0];
        if r < 1e-300 {
            return ZERO_VEC;
        }
        let phi = r.atan2(w);
        let f = phi / r;
        [f * v[0], f * v[1], f * v[2]]
    }

    /// Adjoint action on algebra vectors: the SO(3) rotation v -> q v q*.
    pub fn rotate(&self, v: &Su2Vec) -> Su2Vec {
        let [w, x, y, z] = self.0;
        [
            (1.0 - 2.0 * (y * y + z * z)) * v[0] + 2.0 * (x * y - w * z) * v[1] + 2.0 * (x * z + w * y) * v[2],
            2.0 * (x * y + w * z) * v[0] + (1.0 - 2.0 * (x * x + z * z)) * v[1] + 2.0 * (y * z - w * x) * v[2],
            2.0 * (x * z - w * y) * v[0] + 2.0 * (y * z + w * x) * v[1] + (1.0 - 2.0 * (x * x + y * y)) * v[2],
        ]
    }

    /// Left-multiplication as a 4x4 real matrix L with L p = self * p.
    pub fn left_matrix(&self) -> [[f64; 4]; 4] {
        let [a, b, c, d] = self.0;
        [
            [a, -b, -c, -d],
            [b, a, -d, c],
            [c, d, a, -b],
            [d, -c, b, a],
        ]
    }

    /// Right-multiplication as a 4x4 real matrix R with R p = p * self.
    pub fn right_matrix(&self) -> [[f64; 4]; 4] {
        let [a, b, c, d] = self.0;
        [
            [a, -b, -c, -d],
            [b, a, d, -c],
            [c, -d, a, b],
            [d, c, -b, a],
        ]
    }

    /// Jacobian of q -> log(q/|q|) as a 3x4 matrix. Radial directions are
    /// annihilated, so the same Jacobian serves non-unit inputs (averages of
    /// group elements).
    pub fn dlog(&self) -> [[f64; 4]; 3] {
        let v = self.imag();
        let w = self.0[0];
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let r = r2.sqrt();
        let rho2 = w * w + r2;
        let mut jac = [[0.0; 4]; 3];
        if r < 1e-9 {
            // near the identity axis: log(q) ~ v/w, d log = (1/w) [ -v/w | I ]
            for i in 0..3 {
                jac[i][0] = -v[i] / (w * w);
                jac[i][i + 1] = 1.0 / w;
            }
            return jac;
        }
        let phi = r.atan2(w);
        let n = [v[0] / r, v[1] / r, v[2] / r];
        // d(phi)/dw = -r/rho2, d(phi)/dr = w/rho2
        // a = phi * n: da/dv = (phi/r)(I - n n^T) + (w/rho2) n n^T, da/dw = -(r/rho2) n
        for i in 0..3 {
            jac[i][0] = -(r / rho2) * n[i];
            for j in 0..3 {
                let nn = n[i] * n[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[i][j + 1] = (phi / r) * (delta - nn) + (w / rho2) * nn;
            }
        }
        jac
    }
}

/// 2 * dot, the pointwise inner product induced by -Tr(alpha beta).
pub fn algebra_dot(a: &Su2Vec, b: &Su2Vec) -> f64 {
    2.0 * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
}

/// -Tr(alpha beta) with alpha, beta the matrices of a, b equals 2 dot(a, b);
/// Tr(alpha beta) itself is -2 dot(a, b).
pub fn trace_product(a: &Su2Vec, b: &Su2Vec) -> f64 {
    -2.0 * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
}
