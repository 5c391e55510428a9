//! Single-direction measurement geometry.
//!
//! A direction `e` known in the reference frame is observed in the body frame
//! as `b = Rᵀe`. One such pair fixes the attitude only up to a rotation about
//! `b`: every `R = R° exp(θ hat(b))` is consistent with it. With a bounded
//! rotation error `ν ∈ E(0, S)` on the measured direction the consistent
//! attitudes fill a thin strip around that one-parameter fiber.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{minkowski_sum_cover, symmetrize, UnionCoverSearch};
use crate::error::{Error, Result};
use crate::so3::{exp_so3, hat, RotationMatrix};

/// Minimum `‖b × e‖` accepted when constructing the fiber base point.
pub const COLINEAR_TOL: f64 = 1e-8;

/// Largest accepted measurement rotation error (rad).
pub const MAX_NOISE_ANGLE: f64 = 0.5;

const UNIT_TOL: f64 = 1e-9;

fn check_unit(v: &Vector3<f64>) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// Reference direction `e`, measured body direction `b̃` and noise shape `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionMeasurement {
    pub reference: Vector3<f64>,
    pub measured: Vector3<f64>,
    pub noise: Matrix3<f64>,
}

impl DirectionMeasurement {
    pub fn new(reference: Vector3<f64>, measured: Vector3<f64>, noise: Matrix3<f64>) -> Result<Self> {
        check_unit(&reference)?;
        check_unit(&measured)?;
        if noise.cholesky().is_none() || (noise - noise.transpose()).amax() > 1e-12 * noise.amax() {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: symmetrize(&noise).symmetric_eigenvalues().min(),
            });
        }
        Ok(Self {
            reference,
            measured,
            noise,
        })
    }
}

/// Center and attitude-coordinate shape of the measurement set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementEllipsoid {
    pub center: RotationMatrix,
    pub shape: Matrix3<f64>,
}

/// The shortest rotation taking `b` onto `e`.
pub fn alignment_rotation(b: &Vector3<f64>, e: &Vector3<f64>) -> Result<RotationMatrix> {
    let cross = b.cross(e);
    let cross_norm = cross.norm();
    if !(cross_norm >= COLINEAR_TOL) {
        return Err(Error::DegenerateGeometry { cross_norm });
    }
    let angle = cross_norm.atan2(b.dot(e));
    Ok(exp_so3(&(cross * (angle / cross_norm))))
}

/// `exp(acos(bᵀe) hat(b×e/‖b×e‖)) exp(θ° hat(b))`, a rotation with `R°b = e`.
pub fn reference_rotation(b: &Vector3<f64>, e: &Vector3<f64>, theta0: f64) -> Result<RotationMatrix> {
    check_unit(b)?;
    check_unit(e)?;
    Ok(alignment_rotation(b, e)? * exp_so3(&(b * theta0)))
}

/// Point of the fiber `R° exp(θ hat(b))`.
pub fn feasible_attitude(r0: &RotationMatrix, b: &Vector3<f64>, theta: f64) -> RotationMatrix {
    r0 * &exp_so3(&(b * theta))
}

/// Measured direction `b̃ = exp(−hat(ν)) b` for the true body direction `b`.
pub fn apply_measurement_noise(b: &Vector3<f64>, nu: &Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = nu.norm();
    if !(norm < MAX_NOISE_ANGLE) {
        return Err(Error::NoiseTooLarge { norm });
    }
    Ok((exp_so3(&-nu) * *b).normalize())
}

/// Fiber angle chosen to bring the measurement center closest to a prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberAlignment {
    pub theta: f64,
    /// Set when both trace coefficients vanish and every angle is optimal.
    pub degenerate: bool,
}

/// Minimizer over θ of `tr(I − R̂ᶠᵀ R̃△ exp(θ hat(b̃)))`.
///
/// With `a = tr(A hat(b̃))`, `c = tr(A hat(b̃)²)` and `A = R̂ᶠᵀR̃△` the index is
/// `const − a sin θ + c (1 − cos θ)`, so the minimizer is `atan2(a, −c)`,
/// which satisfies both `tan θ = −a/c` and `a sin θ − c cos θ > 0`.
pub fn optimal_theta_circ(r_f: &RotationMatrix, r_align: &RotationMatrix, b: &Vector3<f64>) -> FiberAlignment {
    let a_mat = r_f.matrix().transpose() * r_align.matrix();
    let s = hat(b);
    let a = (a_mat * s).trace();
    let c = (a_mat * s * s).trace();
    if a.abs() < 1e-12 && c.abs() < 1e-12 {
        return FiberAlignment {
            theta: 0.0,
            degenerate: true,
        };
    }
    FiberAlignment {
        theta: a.atan2(-c),
        degenerate: false,
    }
}

/// Alignment index `tr(I − R̂ᶠᵀ R̃△ exp(θ hat(b̃)))`.
pub fn alignment_index(r_f: &RotationMatrix, r_align: &RotationMatrix, b: &Vector3<f64>, theta: f64) -> f64 {
    3.0 - (r_f.matrix().transpose() * r_align.matrix() * exp_so3(&(b * theta)).matrix()).trace()
}

/// Measurement ellipsoid center `R̂ᵐ`; identical to [`reference_rotation`]
/// evaluated at the measured direction.
pub fn measurement_center(b_meas: &Vector3<f64>, e: &Vector3<f64>, theta0: f64) -> Result<RotationMatrix> {
    reference_rotation(b_meas, e, theta0)
}

/// Intermediate shapes of the measurement uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementUncertainty {
    /// `(1 + π)² S`
    pub q1: Matrix3<f64>,
    /// `π² Aᵀ S A` with `A = I + hat(b̃)`
    pub q2: Matrix3<f64>,
    /// Cover of the vector sum of `q1` and `q2`.
    pub p0: Matrix3<f64>,
    /// Cover of `E(−π b̃, p0) ∪ E(π b̃, p0)`.
    pub pm: Matrix3<f64>,
}

pub fn measurement_uncertainty_parts(b_meas: &Vector3<f64>, noise: &Matrix3<f64>) -> Result<MeasurementUncertainty> {
    measurement_uncertainty_with(b_meas, noise, &UnionCoverSearch::default())
}

pub fn measurement_uncertainty_with(
    b_meas: &Vector3<f64>,
    noise: &Matrix3<f64>,
    search: &UnionCoverSearch,
) -> Result<MeasurementUncertainty> {
    check_unit(b_meas)?;
    let a = Matrix3::identity() + hat(b_meas);
    let q1 = symmetrize(&(noise * (1.0 + PI).powi(2)));
    let q2 = symmetrize(&(a.transpose() * noise * a * (PI * PI)));
    let p0 = minkowski_sum_cover(&q1, &q2)?;
    let pm = search.cover(b_meas, &p0, PI)?;
    Ok(MeasurementUncertainty { q1, q2, p0, pm })
}

/// Attitude-coordinate shape `Pᵐ` of the measurement set.
pub fn measurement_uncertainty(b_meas: &Vector3<f64>, noise: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    Ok(measurement_uncertainty_parts(b_meas, noise)?.pm)
}

/// Full measurement ellipsoid for the given fiber angle.
pub fn measurement_ellipsoid(meas: &DirectionMeasurement, theta0: f64) -> Result<MeasurementEllipsoid> {
    Ok(MeasurementEllipsoid {
        center: measurement_center(&meas.measured, &meas.reference, theta0)?,
        shape: measurement_uncertainty(&meas.measured, &meas.noise)?,
    })
}
