//! Rotation-group primitives: the skew map and its inverse, the Cayley
//! retraction, anti-symmetrization and drift repair onto SO(3).
//!
//! The generic functions take any [`Real`] scalar so the prediction model can
//! be differentiated with dual numbers through exactly the same arithmetic as
//! the simulator.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Symmetry violation accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;

/// Orthogonality and determinant tolerance for [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-9;

pub const E1: Vec3 = Vec3::new(1.0, 0.0, 0.0);
pub const E2: Vec3 = Vec3::new(0.0, 1.0, 0.0);
pub const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Skew-symmetric matrix of `w`, so that `hat(w) * a == w.cross(a)`.
#[inline]
pub fn hat<S: Real>(w: &Vector3<S>) -> Matrix3<S> {
    let z = S::zero();
    Matrix3::new(z, -w.z, w.y, w.z, z, -w.x, -w.y, w.x, z)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).abs().max();
    if !(asymmetry <= SKEW_TOL) {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(vee_unchecked(m))
}

/// Reads the axial vector off the lower triangle without checking symmetry.
#[inline]
pub(crate) fn vee_unchecked<S: Real>(m: &Matrix3<S>) -> Vector3<S> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Anti-symmetric part `(A - A^T) / 2`.
#[inline]
pub fn sk<S: Real>(a: &Matrix3<S>) -> Matrix3<S> {
    let half = S::from_f64(0.5);
    (a - a.transpose()) * half
}

/// `(I + X/2)(I - X/2)^-1` with `X = hat(x)`, via the closed-form 3x3 inverse.
pub(crate) fn cay_matrix<S: Real>(x: &Vector3<S>) -> Matrix3<S> {
    let half = S::from_f64(0.5);
    let xh = hat(x) * half;
    let id = Matrix3::<S>::identity();
    (id + xh) * inverse3(&(id - xh))
}

/// Cayley retraction of `x` onto SO(3).
pub fn cay(x: &Vec3) -> Rotation {
    Rotation(cay_matrix(x))
}

/// Adjugate inverse. Callers guarantee a nonzero determinant; `I - hat(x)/2`
/// has determinant `1 + |x|^2 / 4`.
fn inverse3<S: Real>(m: &Matrix3<S>) -> Matrix3<S> {
    let c00 = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let c01 = m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)];
    let c02 = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
    let c10 = m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)];
    let c11 = m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)];
    let c12 = m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)];
    let c20 = m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)];
    let c21 = m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)];
    let c22 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let det = m[(0, 0)] * c00 + m[(0, 1)] * c01 + m[(0, 2)] * c02;
    let inv_det = S::one() / det;
    Matrix3::new(c00, c10, c20, c01, c11, c21, c02, c12, c22) * inv_det
}

/// Frobenius norm of `M^T M - I`.
pub fn orthogonality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Nearest rotation to `m` (orthogonal polar factor), computed with the
/// Newton iteration `X <- (X + X^-T) / 2`.
pub fn project_to_so3(m: &Mat3) -> Result<Rotation> {
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Degenerate { det });
    }
    let mut x = *m;
    for _ in 0..100 {
        let inv_t = inverse3(&x).transpose();
        let next = (x + inv_t) * 0.5;
        let delta = (next - x).norm();
        x = next;
        if delta <= 1e-15 {
            break;
        }
    }
    Ok(Rotation(x))
}

/// A 3x3 matrix in SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthogonality and determinant against [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        let orthogonality = orthogonality_error(&m);
        let det = m.determinant();
        if orthogonality <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL {
            Ok(Rotation(m))
        } else {
            Err(Error::NotRotation { orthogonality, det })
        }
    }

    /// Wraps a matrix produced by a structure-preserving update.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// `self * other`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.0)
    }
}
