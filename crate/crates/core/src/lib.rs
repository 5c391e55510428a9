//! Set-membership attitude and angular-velocity estimation for a rigid body
//! under an attitude-dependent potential, driven by one direction
//! measurement at a time.
//!
//! - [`so3`]: rotation-matrix geometry (hat/vee, exp/log, distances).
//! - [`dynamics`]: rigid-body model and the Lie group variational integrator.
//! - [`ellipsoid`]: containment, Minkowski-sum and union covers, intersection fusion.
//! - [`measurement`]: single-direction feasible sets and measurement ellipsoids.
//! - [`estimator`]: flow update, measurement update and fusion.
//! - [`scenario`]: closed-loop simulation, configuration and trace output.

pub mod dynamics;
pub mod ellipsoid;
pub mod error;
pub mod estimator;
pub mod measurement;
pub mod scenario;
pub mod selftest;
pub mod so3;

pub use dynamics::{InertiaModel, Lgvi, PotentialModel, RigidBodyState};
pub use ellipsoid::{Ellipsoid, StateEllipsoid};
pub use error::{Error, Result};
pub use estimator::{Estimator, FilterConfig, FilterStepReport};
pub use measurement::DirectionMeasurement;
pub use scenario::{ScenarioConfig, TraceRecord};
pub use so3::RotationMatrix;
