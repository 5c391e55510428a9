//! The set-membership filter loop.
//!
//! Each cycle propagates the state ellipsoid through the discrete dynamics
//! (center by the integrator, shape by per-step linearized congruences),
//! builds the measurement strip for a single direction observation, and
//! replaces the intersection of the two by a trace-minimal covering
//! ellipsoid. The fused offset is absorbed into the center so the chart of
//! the posterior is always centered.

use std::time::{Duration, Instant};

use nalgebra::{Matrix6, Vector3, Vector6};

use crate::dynamics::{Lgvi, RigidBodyState};
use crate::ellipsoid::{min_eigenvalue, symmetrize, Fusion, FusionSearch, StateEllipsoid, UnionCoverSearch};
use crate::error::{Error, Result};
use crate::measurement::{alignment_rotation, measurement_uncertainty_with, optimal_theta_circ, DirectionMeasurement};
use crate::so3::{exp_so3, log_so3, RotationMatrix};

/// Filter tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Integration step (normalized time).
    pub step: f64,
    /// Integration steps between consecutive measurements.
    pub steps_between_measurements: usize,
    /// Central-difference perturbation for the transition matrix.
    pub jacobian_step: f64,
    pub fusion: FusionSearch,
    pub union_cover: UnionCoverSearch,
}

impl FilterConfig {
    pub fn new(step: f64, steps_between_measurements: usize) -> Result<Self> {
        let cfg = Self {
            step,
            steps_between_measurements,
            jacobian_step: 1e-6,
            fusion: FusionSearch::default(),
            union_cover: UnionCoverSearch::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {}", self.step)));
        }
        if self.steps_between_measurements < 1 {
            return Err(Error::InvalidArgument("steps between measurements must be at least 1".into()));
        }
        if !(self.jacobian_step > 0.0) {
            return Err(Error::InvalidArgument("jacobian step must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the filter decided during one measurement cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStepReport {
    pub prior: StateEllipsoid,
    pub predicted: StateEllipsoid,
    pub posterior: StateEllipsoid,
    /// Time at the measurement instant.
    pub time: f64,
    pub theta0: f64,
    pub theta_degenerate: bool,
    pub r_star: Option<f64>,
    pub beta: Option<f64>,
    /// The fusion was infeasible and the predicted ellipsoid was kept.
    pub fusion_inconsistent: bool,
    /// Whether the fused ellipsoid replaced the predicted one.
    pub fusion_applied: bool,
    pub trace_prior: f64,
    pub trace_predicted: f64,
    pub trace_posterior: f64,
    pub elapsed: Duration,
}

/// Predicted ellipsoid at the next measurement instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub ellipsoid: StateEllipsoid,
    pub time: f64,
}

/// Chart coordinates of `(R, Ω)` about `center`.
fn chart(center: &RigidBodyState, state: &RigidBodyState) -> Result<Vector6<f64>> {
    let zeta = log_so3(&(center.attitude.transpose() * state.attitude))?;
    let d = state.angular_velocity - center.angular_velocity;
    Ok(Vector6::new(zeta.x, zeta.y, zeta.z, d.x, d.y, d.z))
}

/// Retraction `(R̂ exp(hat(ζ)), Ω̂ + δΩ)`.
pub fn perturb(center: &RigidBodyState, x: &Vector6<f64>) -> RigidBodyState {
    let zeta = Vector3::new(x[0], x[1], x[2]);
    let d = Vector3::new(x[3], x[4], x[5]);
    RigidBodyState {
        attitude: center.attitude * exp_so3(&zeta),
        angular_velocity: center.angular_velocity + d,
        time: center.time,
    }
}

/// One-step transition matrix by central differences of the discrete flow,
/// with coordinates taken in the chart at the propagated center.
pub fn linearized_transition(state: &RigidBodyState, integrator: &Lgvi, delta: f64) -> Result<Matrix6<f64>> {
    let next = integrator.step(state)?;
    linearized_transition_about(state, &next, integrator, delta)
}

fn linearized_transition_about(
    state: &RigidBodyState,
    next: &RigidBodyState,
    integrator: &Lgvi,
    delta: f64,
) -> Result<Matrix6<f64>> {
    let mut a = Matrix6::zeros();
    for i in 0..6 {
        let mut dx = Vector6::zeros();
        dx[i] = delta;
        let plus = chart(next, &integrator.step(&perturb(state, &dx))?)?;
        let minus = chart(next, &integrator.step(&perturb(state, &-dx))?)?;
        a.set_column(i, &((plus - minus) / (2.0 * delta)));
    }
    Ok(a)
}

/// `A P Aᵀ`, symmetrized; fails if the result is not positive definite.
pub fn propagate_uncertainty(p: &Matrix6<f64>, a: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let out = symmetrize(&(a * p * a.transpose()));
    let min_eig = min_eigenvalue(&out);
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
    }
    Ok(out)
}

/// `ζ̂ᵐᶠ` with `R̂ᶠ = R̂ᵐ exp(hat(ζ̂ᵐᶠ))`.
pub fn relative_center_offset(r_m: &RotationMatrix, r_f: &RotationMatrix) -> Result<Vector3<f64>> {
    log_so3(&(r_m.transpose() * *r_f))
}

/// The ellipsoid center is the point estimate.
pub fn point_estimate(e: &StateEllipsoid) -> (RotationMatrix, Vector3<f64>) {
    (e.attitude, e.angular_velocity)
}

/// Set-membership attitude filter driven by single direction measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    pub integrator: Lgvi,
    pub config: FilterConfig,
}

impl Estimator {
    pub fn new(integrator: Lgvi, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        if integrator.step != config.step {
            return Err(Error::InvalidArgument(format!(
                "integrator step {} differs from filter step {}",
                integrator.step, config.step
            )));
        }
        Ok(Self { integrator, config })
    }

    /// Propagates only the center over `steps` integration steps.
    pub fn flow_update_center(&self, prior: &StateEllipsoid, time: f64, steps: usize) -> Result<RigidBodyState> {
        let s = RigidBodyState::new(prior.attitude, prior.angular_velocity, time);
        self.integrator.propagate(&s, steps)
    }

    /// Propagates center and shape over `steps` integration steps.
    pub fn predict_steps(&self, prior: &StateEllipsoid, time: f64, steps: usize) -> Result<Prediction> {
        let mut center = RigidBodyState::new(prior.attitude, prior.angular_velocity, time);
        let mut p = prior.shape;
        for _ in 0..steps {
            let next = self.integrator.step(&center)?;
            let a = linearized_transition_about(&center, &next, &self.integrator, self.config.jacobian_step)?;
            p = propagate_uncertainty(&p, &a)?;
            center = next;
        }
        Ok(Prediction {
            ellipsoid: StateEllipsoid {
                attitude: center.attitude,
                angular_velocity: center.angular_velocity,
                shape: p,
            },
            time: center.time,
        })
    }

    /// Flow update to the next measurement instant.
    pub fn predict(&self, prior: &StateEllipsoid, time: f64) -> Result<Prediction> {
        self.predict_steps(prior, time, self.config.steps_between_measurements)
    }

    /// Measurement update and fusion at the predicted instant.
    pub fn update(&self, prediction: &Prediction, meas: &DirectionMeasurement) -> Result<(StateEllipsoid, FusionOutcome)> {
        let predicted = &prediction.ellipsoid;
        let b = &meas.measured;
        let align = alignment_rotation(b, &meas.reference)?;
        let fiber = optimal_theta_circ(&predicted.attitude, &align, b);
        let r_m = align * exp_so3(&(b * fiber.theta));
        let pm = measurement_uncertainty_with(b, &meas.noise, &self.config.union_cover)?.pm;
        let zeta_mf = relative_center_offset(&r_m, &predicted.attitude)?;
        let x_mf = Vector6::new(zeta_mf.x, zeta_mf.y, zeta_mf.z, 0.0, 0.0, 0.0);

        match self.config.fusion.optimize(&x_mf, &predicted.shape, &pm) {
            Ok(fusion) if fusion.shape.trace() >= predicted.trace() => Ok((
                *predicted,
                FusionOutcome {
                    theta0: fiber.theta,
                    theta_degenerate: fiber.degenerate,
                    fusion: Some(fusion),
                    applied: false,
                },
            )),
            Ok(fusion) => {
                let zeta = Vector3::new(fusion.center[0], fusion.center[1], fusion.center[2]);
                let d_omega = Vector3::new(fusion.center[3], fusion.center[4], fusion.center[5]);
                let posterior = StateEllipsoid {
                    attitude: r_m * exp_so3(&zeta),
                    angular_velocity: predicted.angular_velocity + d_omega,
                    shape: fusion.shape,
                };
                Ok((
                    posterior,
                    FusionOutcome {
                        theta0: fiber.theta,
                        theta_degenerate: fiber.degenerate,
                        fusion: Some(fusion),
                        applied: true,
                    },
                ))
            }
            Err(Error::EmptyIntersection { .. }) => Ok((
                *predicted,
                FusionOutcome {
                    theta0: fiber.theta,
                    theta_degenerate: fiber.degenerate,
                    fusion: None,
                    applied: false,
                },
            )),
            Err(e) => Err(e),
        }
    }

    /// One full cycle: flow update over the configured number of steps,
    /// measurement update, fusion, and recentering.
    pub fn filter_step(
        &self,
        prior: &StateEllipsoid,
        time: f64,
        meas: &DirectionMeasurement,
    ) -> Result<(StateEllipsoid, FilterStepReport)> {
        let start = Instant::now();
        let prediction = self.predict(prior, time)?;
        let (posterior, outcome) = self.update(&prediction, meas)?;
        let report = FilterStepReport {
            prior: *prior,
            predicted: prediction.ellipsoid,
            posterior,
            time: prediction.time,
            theta0: outcome.theta0,
            theta_degenerate: outcome.theta_degenerate,
            r_star: outcome.fusion.map(|f| f.r),
            beta: outcome.fusion.map(|f| f.beta),
            fusion_inconsistent: outcome.fusion.is_none(),
            fusion_applied: outcome.applied,
            trace_prior: prior.trace(),
            trace_predicted: prediction.ellipsoid.trace(),
            trace_posterior: posterior.trace(),
            elapsed: start.elapsed(),
        };
        Ok((posterior, report))
    }
}

/// Measurement-update decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOutcome {
    pub theta0: f64,
    pub theta_degenerate: bool,
    /// `None` when the intersection was empty under the model.
    pub fusion: Option<Fusion>,
    /// False when the predicted ellipsoid was kept: either the intersection
    /// was empty or no weight `r > 0` beat the `r → 0` limit, which is the
    /// predicted ellipsoid itself.
    pub applied: bool,
}
