//! Rotation group primitives.
//!
//! Attitudes are plain 3×3 rotation matrices. Tangent vectors are axis-angle
//! vectors in R³ identified with skew-symmetric matrices through [`hat`].
//! The exponential and logarithm switch to truncated Taylor series below
//! [`SMALL_ANGLE`] so that `sin(θ)/θ` style ratios never evaluate `0/0`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this angle the series branches of `exp`/`log` are used.
pub const SMALL_ANGLE: f64 = 1e-6;

/// `log_so3` refuses rotations within this margin of a half turn.
pub const PI_MARGIN: f64 = 1e-6;

const ORTHO_TOL: f64 = 1e-10;
const SKEW_TOL: f64 = 1e-9;

/// A 3×3 special orthogonal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix3<f64>", into = "Matrix3<f64>")]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps `m` after checking `‖mᵀm − I‖_F ≤ 1e-10` and `|det m − 1| ≤ 1e-10`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let ortho = orthogonality_error(&m);
        if !ortho.is_finite() || ortho > ORTHO_TOL {
            return Err(Error::NotARotation {
                reason: format!("|R^T R - I|_F = {ortho:e}"),
            });
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::NotARotation {
                reason: format!("det = {det}"),
            });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without validation. Used on the output of group operations
    /// that are orthogonal up to round-off.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation of `angle` radians about the unit `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        exp_so3(&(axis.normalize() * angle))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    #[inline]
    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.0)
    }
}

fn orthogonality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl TryFrom<Matrix3<f64>> for RotationMatrix {
    type Error = Error;

    fn try_from(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix(m)
    }
}

impl From<RotationMatrix> for Matrix3<f64> {
    fn from(r: RotationMatrix) -> Self {
        r.0
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<&Vector3<f64>> for &RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Skew map: `hat(v) * y == v.cross(&y)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects inputs with `‖A + Aᵀ‖_F > 1e-9`.
pub fn vee(a: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asymmetry = (a + a.transpose()).norm();
    if !(asymmetry <= SKEW_TOL) {
        return Err(Error::NotSkewSymmetric { asymmetry });
    }
    Ok(vee_unchecked(a))
}

/// Axial vector of the skew part of `a`, `vee((A − Aᵀ)/2)`.
#[inline]
pub fn vee_unchecked(a: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// Rodrigues formula.
pub fn exp_so3(v: &Vector3<f64>) -> RotationMatrix {
    let theta = v.norm();
    let k = hat(v);
    let k2 = k * k;
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = 0.5 * theta;
        let s = half.sin() / half;
        (theta.sin() / theta, 0.5 * s * s)
    };
    RotationMatrix(Matrix3::identity() + k * a + k2 * b)
}

/// Rotation angle in `[0, π]` and the axial vector `vee((R − Rᵀ)/2) = sin(θ)·axis`.
fn angle_and_axial(m: &Matrix3<f64>) -> (f64, Vector3<f64>) {
    let axial = vee_unchecked(m);
    let cos = 0.5 * (m.trace() - 1.0);
    (axial.norm().atan2(cos), axial)
}

/// Principal logarithm. Fails for rotation angles `≥ π − 1e-6`.
pub fn log_so3(r: &RotationMatrix) -> Result<Vector3<f64>> {
    let (theta, axial) = angle_and_axial(r.matrix());
    if theta >= PI - PI_MARGIN {
        return Err(Error::AngleNearPi { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        1.0 + theta * theta / 6.0
    } else {
        theta / theta.sin()
    };
    Ok(axial * scale)
}

/// Angle of the relative rotation `R1ᵀR2`, in `[0, π]`.
pub fn geodesic_angle(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    angle_and_axial(&(r1.matrix().transpose() * r2.matrix())).0
}

/// Closest rotation to `m` in the Frobenius norm (special orthogonal
/// Procrustes via SVD with a determinant correction).
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::Singular);
    }
    let u = svd.u.ok_or(Error::Singular)?;
    let v_t = svd.v_t.ok_or(Error::Singular)?;
    let d = (u * v_t).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    Ok(RotationMatrix(u * correction * v_t))
}
