//! Rigid-body attitude dynamics and the Lie group variational integrator.
//!
//! The continuous model is `JΩ̇ + Ω×JΩ = M`, `Ṙ = R hat(Ω)` with the moment
//! `M` generated by an attitude-dependent potential. The discrete flow is
//!
//! ```text
//! h hat(JΩ_k + h/2 M_k) = F_k J_d − J_d F_kᵀ
//! R_{k+1}  = R_k F_k
//! JΩ_{k+1} = F_kᵀ JΩ_k + h/2 F_kᵀ M_k + h/2 M_{k+1}
//! ```
//!
//! with `J_d = ½ tr(J) I − J`. Only the first line is implicit; it is solved
//! for `F_k = exp(hat(f))` by Newton iteration in the three-dimensional Lie
//! algebra, so the attitude is always advanced by a group multiplication and
//! never needs reprojection.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{exp_so3, hat, vee_unchecked, RotationMatrix};

/// Principal moment of inertia together with the nonstandard matrix `J_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaModel {
    j: Matrix3<f64>,
    j_d: Matrix3<f64>,
    j_inv: Matrix3<f64>,
}

impl InertiaModel {
    pub fn new(j: Matrix3<f64>) -> Result<Self> {
        if (j - j.transpose()).norm() > 1e-12 * j.norm().max(1.0) {
            return Err(Error::InvalidArgument("inertia matrix is not symmetric".into()));
        }
        let chol = j.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: j.symmetric_eigenvalues().min(),
        })?;
        let j_inv = chol.inverse();
        let j_d = Matrix3::identity() * (0.5 * j.trace()) - j;
        Ok(Self { j, j_d, j_inv })
    }

    pub fn diagonal(j1: f64, j2: f64, j3: f64) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&Vector3::new(j1, j2, j3)))
    }

    #[inline]
    pub fn j(&self) -> &Matrix3<f64> {
        &self.j
    }

    #[inline]
    pub fn j_d(&self) -> &Matrix3<f64> {
        &self.j_d
    }

    #[inline]
    pub fn j_inv(&self) -> &Matrix3<f64> {
        &self.j_inv
    }
}

/// Attitude-dependent potential acting on the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialModel {
    #[default]
    FreeBody,
    /// Circular-orbit gravity gradient in units where the orbital rate is 1.
    /// The local vertical is `e_r(t) = (cos t, sin t, 0)` in the reference frame.
    GravityGradient,
}

impl PotentialModel {
    pub fn moment(&self, r: &RotationMatrix, t: f64, inertia: &InertiaModel) -> Vector3<f64> {
        match self {
            PotentialModel::FreeBody => Vector3::zeros(),
            PotentialModel::GravityGradient => gravity_gradient_moment(r, t, inertia),
        }
    }

    pub fn energy(&self, r: &RotationMatrix, t: f64, inertia: &InertiaModel) -> f64 {
        match self {
            PotentialModel::FreeBody => 0.0,
            PotentialModel::GravityGradient => {
                let a = r.matrix().transpose() * local_vertical(t);
                1.5 * a.dot(&(inertia.j() * a))
            }
        }
    }
}

/// Attitude, body-frame angular velocity and (normalized) time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub attitude: RotationMatrix,
    pub angular_velocity: Vector3<f64>,
    pub time: f64,
}

impl RigidBodyState {
    pub fn new(attitude: RotationMatrix, angular_velocity: Vector3<f64>, time: f64) -> Self {
        Self {
            attitude,
            angular_velocity,
            time,
        }
    }
}

/// `M` from `hat(M) = (∂U/∂R)ᵀR − Rᵀ(∂U/∂R)`.
pub fn moment_from_potential(r: &RotationMatrix, du_dr: &Matrix3<f64>) -> Vector3<f64> {
    let r = r.matrix();
    vee_unchecked(&(du_dr.transpose() * r - r.transpose() * du_dr))
}

#[inline]
fn local_vertical(t: f64) -> Vector3<f64> {
    Vector3::new(t.cos(), t.sin(), 0.0)
}

/// `3 a × J a` with `a = Rᵀ e_r(t)`.
pub fn gravity_gradient_moment(r: &RotationMatrix, t: f64, inertia: &InertiaModel) -> Vector3<f64> {
    let a = r.matrix().transpose() * local_vertical(t);
    3.0 * a.cross(&(inertia.j() * a))
}

/// Newton settings for the implicit attitude equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitSolver {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for ImplicitSolver {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 50,
            fd_step: 1e-7,
        }
    }
}

fn implicit_residual(phi_hat: &Matrix3<f64>, j_d: &Matrix3<f64>, f: &Vector3<f64>) -> (Matrix3<f64>, RotationMatrix) {
    let rot = exp_so3(f);
    let fm = rot.matrix();
    (phi_hat - (fm * j_d - j_d * fm.transpose()), rot)
}

impl ImplicitSolver {
    /// Solves `hat(φ) = F J_d − J_d Fᵀ` for `F ∈ SO(3)`.
    pub fn solve(&self, phi: &Vector3<f64>, j_d: &Matrix3<f64>) -> Result<RotationMatrix> {
        // J = tr(J_d) I − J_d
        let j = Matrix3::identity() * j_d.trace() - j_d;
        let mut f = j.try_inverse().ok_or(Error::Singular)? * phi;
        let phi_hat = hat(phi);

        let (mut res, mut rot) = implicit_residual(&phi_hat, j_d, &f);
        let mut res_norm = res.norm();
        for _ in 0..self.max_iter {
            if res_norm <= self.tol {
                return Ok(rot);
            }
            let g = vee_unchecked(&res);
            let mut jac = Matrix3::zeros();
            for i in 0..3 {
                let mut fp = f;
                fp[i] += self.fd_step;
                let (rp, _) = implicit_residual(&phi_hat, j_d, &fp);
                jac.set_column(i, &((vee_unchecked(&rp) - g) / self.fd_step));
            }
            let delta = jac.lu().solve(&g).ok_or(Error::Singular)?;
            f -= delta;
            (res, rot) = implicit_residual(&phi_hat, j_d, &f);
            res_norm = res.norm();
        }
        if res_norm <= self.tol {
            Ok(rot)
        } else {
            Err(Error::NoConvergence {
                iterations: self.max_iter,
                residual: res_norm,
            })
        }
    }
}

/// Implicit solve with explicit tolerance and iteration cap.
pub fn solve_implicit_f(phi: &Vector3<f64>, j_d: &Matrix3<f64>, tol: f64, max_iter: usize) -> Result<RotationMatrix> {
    ImplicitSolver {
        tol,
        max_iter,
        ..ImplicitSolver::default()
    }
    .solve(phi, j_d)
}

/// Discrete flow map of a rigid body with fixed step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lgvi {
    pub step: f64,
    pub inertia: InertiaModel,
    pub potential: PotentialModel,
    pub solver: ImplicitSolver,
}

impl Lgvi {
    pub fn new(step: f64, inertia: InertiaModel, potential: PotentialModel) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {step}")));
        }
        Ok(Self {
            step,
            inertia,
            potential,
            solver: ImplicitSolver::default(),
        })
    }

    pub fn step(&self, state: &RigidBodyState) -> Result<RigidBodyState> {
        let h = self.step;
        let j = self.inertia.j();
        let m_k = self.potential.moment(&state.attitude, state.time, &self.inertia);
        let momentum = j * state.angular_velocity;
        let phi = (momentum + m_k * (0.5 * h)) * h;
        let f = self.solver.solve(&phi, self.inertia.j_d())?;
        let attitude = state.attitude * f;
        let time = state.time + h;
        let m_next = self.potential.moment(&attitude, time, &self.inertia);
        let ft = f.matrix().transpose();
        let momentum_next = ft * momentum + ft * m_k * (0.5 * h) + m_next * (0.5 * h);
        Ok(RigidBodyState {
            attitude,
            angular_velocity: self.inertia.j_inv() * momentum_next,
            time,
        })
    }

    pub fn propagate(&self, state: &RigidBodyState, n: usize) -> Result<RigidBodyState> {
        let mut s = *state;
        for _ in 0..n {
            s = self.step(&s)?;
        }
        Ok(s)
    }

    /// States `x_0, …, x_n` (length `n + 1`).
    pub fn trajectory(&self, state: &RigidBodyState, n: usize) -> Result<Vec<RigidBodyState>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(*state);
        let mut s = *state;
        for _ in 0..n {
            s = self.step(&s)?;
            out.push(s);
        }
        Ok(out)
    }
}

pub fn lgvi_step(state: &RigidBodyState, h: f64, inertia: &InertiaModel, potential: PotentialModel) -> Result<RigidBodyState> {
    Lgvi::new(h, *inertia, potential)?.step(state)
}

pub fn propagate(
    state: &RigidBodyState,
    n: usize,
    h: f64,
    inertia: &InertiaModel,
    potential: PotentialModel,
) -> Result<RigidBodyState> {
    Lgvi::new(h, *inertia, potential)?.propagate(state, n)
}

/// `½ΩᵀJΩ + U(R, t)`.
pub fn energy(state: &RigidBodyState, inertia: &InertiaModel, potential: PotentialModel) -> f64 {
    let w = &state.angular_velocity;
    0.5 * w.dot(&(inertia.j() * w)) + potential.energy(&state.attitude, state.time, inertia)
}

/// Spatial angular momentum `R J Ω`.
pub fn spatial_momentum(state: &RigidBodyState, inertia: &InertiaModel) -> Vector3<f64> {
    state.attitude.matrix() * (inertia.j() * state.angular_velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{geodesic_angle, vee};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn spacecraft() -> InertiaModel {
        InertiaModel::diagonal(1.0, 2.8, 2.0).unwrap()
    }

    #[test]
    fn j_d_definition() {
        let inertia = spacecraft();
        let expected = Matrix3::from_diagonal(&Vector3::new(1.9, 0.1, 0.9));
        assert_relative_eq!(*inertia.j_d(), expected, epsilon = 1e-15);
        assert!(InertiaModel::diagonal(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn moment_from_potential_examples() {
        let r = exp_so3(&Vector3::new(0.4, -0.2, 0.9));
        assert_eq!(moment_from_potential(&r, &Matrix3::zeros()), Vector3::zeros());
        assert_relative_eq!(moment_from_potential(&r, r.matrix()), Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn moment_row_form_matches_skew_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let r = exp_so3(&v);
            let du = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let rows: Vector3<f64> = (0..3)
                .map(|i| {
                    let ri = r.matrix().row(i).transpose();
                    let vi = du.row(i).transpose();
                    ri.cross(&vi)
                })
                .sum();
            let skew = du.transpose() * r.matrix() - r.matrix().transpose() * du;
            assert_relative_eq!(rows, vee(&skew).unwrap(), epsilon = 1e-12);
            assert_relative_eq!(moment_from_potential(&r, &du), rows, epsilon = 1e-12);
        }
    }

    #[test]
    fn gravity_gradient_examples() {
        let inertia = spacecraft();
        let m = gravity_gradient_moment(&RotationMatrix::identity(), 0.0, &inertia);
        assert_eq!(m, Vector3::zeros());

        let r = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0));
        assert_relative_eq!(gravity_gradient_moment(&r, 0.0, &inertia), Vector3::zeros(), epsilon = 1e-15);

        let r = exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0));
        assert_relative_eq!(
            gravity_gradient_moment(&r, 0.0, &inertia),
            Vector3::new(0.0, 0.0, -2.7),
            epsilon = 1e-12
        );
        assert_eq!(
            PotentialModel::FreeBody.moment(&r, 0.3, &inertia),
            Vector3::zeros()
        );
    }

    #[test]
    fn gravity_gradient_moment_is_generated_by_its_potential() {
        // dU/dR = 3 e_r e_rᵀ R J for U = 3/2 e_rᵀ R J Rᵀ e_r
        let inertia = spacecraft();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = exp_so3(&Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)));
            let t = rng.random_range(0.0..6.0);
            let er = local_vertical(t);
            let du = 3.0 * er * er.transpose() * r.matrix() * inertia.j();
            assert_relative_eq!(
                moment_from_potential(&r, &du),
                gravity_gradient_moment(&r, t, &inertia),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn implicit_solve_zero() {
        let f = solve_implicit_f(&Vector3::zeros(), spacecraft().j_d(), 1e-13, 50).unwrap();
        assert_eq!(f, RotationMatrix::identity());
    }

    #[test]
    fn implicit_solve_spherical_closed_form() {
        let inertia = InertiaModel::new(Matrix3::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let phi = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
            let f = solve_implicit_f(&phi, inertia.j_d(), 1e-13, 50).unwrap();
            let closed = exp_so3(&(phi.normalize() * phi.norm().asin()));
            assert_relative_eq!(*f.matrix(), *closed.matrix(), epsilon = 1e-12);
        }
    }

    #[test]
    fn implicit_solve_spacecraft_residual() {
        let inertia = spacecraft();
        let omega = Vector3::new(2.32, 0.45, -0.59);
        let phi = inertia.j() * omega * 0.01;
        let f = solve_implicit_f(&phi, inertia.j_d(), 1e-14, 50).unwrap();
        let fm = f.matrix();
        let residual = (hat(&phi) - (fm * inertia.j_d() - inertia.j_d() * fm.transpose())).norm();
        assert!(residual <= 1e-14, "residual {residual:e}");
        assert!(f.orthogonality_error() <= 1e-14);
    }

    #[test]
    fn implicit_solve_reports_non_convergence() {
        let inertia = spacecraft();
        let phi = Vector3::new(0.3, 0.2, 0.1);
        match solve_implicit_f(&phi, inertia.j_d(), 0.0, 1) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual.is_finite());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn step_at_rest_only_advances_time() {
        let inertia = spacecraft();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(0.1, 0.2, 0.3)), Vector3::zeros(), 1.0);
        let s1 = lgvi_step(&s0, 0.01, &inertia, PotentialModel::FreeBody).unwrap();
        assert_eq!(s1.attitude, s0.attitude);
        assert_eq!(s1.angular_velocity, Vector3::zeros());
        assert_relative_eq!(s1.time, 1.01);
        assert!(lgvi_step(&s0, 0.0, &inertia, PotentialModel::FreeBody).is_err());
    }

    #[test]
    fn spherical_body_spins_uniformly() {
        let inertia = InertiaModel::new(Matrix3::identity()).unwrap();
        let s0 = RigidBodyState::new(RotationMatrix::identity(), Vector3::z(), 0.0);
        let s1 = lgvi_step(&s0, 0.1, &inertia, PotentialModel::FreeBody).unwrap();
        assert_eq!(s1.angular_velocity, Vector3::z());
        let expected = exp_so3(&(Vector3::z() * 0.1f64.asin()));
        assert_relative_eq!(*s1.attitude.matrix(), *expected.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn propagate_composes() {
        let integ = Lgvi::new(0.01, spacecraft(), PotentialModel::GravityGradient).unwrap();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0);
        assert_eq!(integ.propagate(&s0, 0).unwrap(), s0);
        let direct = integ.propagate(&s0, 30).unwrap();
        let split = integ.propagate(&integ.propagate(&s0, 12).unwrap(), 18).unwrap();
        assert_eq!(direct, split);
        let traj = integ.trajectory(&s0, 30).unwrap();
        assert_eq!(traj.len(), 31);
        assert_eq!(traj[30], direct);
    }

    #[test]
    fn energy_examples() {
        let s = RigidBodyState::new(RotationMatrix::identity(), Vector3::zeros(), 0.0);
        assert_eq!(energy(&s, &spacecraft(), PotentialModel::FreeBody), 0.0);
        let unit = InertiaModel::new(Matrix3::identity()).unwrap();
        let s = RigidBodyState::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, 2.0), 0.0);
        assert_eq!(energy(&s, &unit, PotentialModel::FreeBody), 2.0);
    }

    #[test]
    fn gravity_gradient_energy_drift_is_bounded() {
        // The potential is time-dependent, so only boundedness is meaningful;
        // compare against an integrator 4x finer as a sanity check of the
        // step size used by the scenario.
        let inertia = spacecraft();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0);
        let h = (PI / 2.0) / 2000.0;
        let coarse = Lgvi::new(h, inertia, PotentialModel::GravityGradient).unwrap();
        let fine = Lgvi::new(h / 4.0, inertia, PotentialModel::GravityGradient).unwrap();
        let a = coarse.propagate(&s0, 2000).unwrap();
        let b = fine.propagate(&s0, 8000).unwrap();
        assert!(geodesic_angle(&a.attitude, &b.attitude) < 1e-4);
        assert!(a.attitude.orthogonality_error() < 1e-12);
    }
}
