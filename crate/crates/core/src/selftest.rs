//! Fast invariant checks run by `ellatt selftest`.

use std::fmt;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{energy, spatial_momentum, ImplicitSolver, InertiaModel, Lgvi, PotentialModel, RigidBodyState};
use crate::ellipsoid::{
    contains_ellipsoid, contains_point, fuse_intersection, minkowski_sum_cover, sample_in_ellipsoid_with,
    union_cover_symmetric, Ellipsoid,
};
use crate::estimator::{linearized_transition, perturb};
use crate::measurement::alignment_rotation;
use crate::scenario::{paper_sec5, run_scenario, write_trace, TraceFormat};
use crate::so3::{exp_so3, geodesic_angle, log_so3};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String), String>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-scale..scale))
}

fn spacecraft_inertia() -> InertiaModel {
    InertiaModel::diagonal(1.0, 2.8, 2.0).expect("valid inertia")
}

fn exp_log_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v = random_vec(&mut rng, 1.0).normalize() * rng.random_range(0.0..3.0);
        match log_so3(&exp_so3(&v)) {
            Ok(w) => worst = worst.max((w - v).norm()),
            Err(e) => return Check::new("so3 exp/log round trip", false, e.to_string()),
        }
    }
    Check::new("so3 exp/log round trip", worst <= 1e-10, format!("max error {worst:.2e}"))
}

fn free_body_invariants() -> Check {
    let run = || -> Result<(bool, String), String> {
        let j = spacecraft_inertia();
        let integ = Lgvi::new((PI / 2.0) / 2000.0, j, PotentialModel::FreeBody).map_err(|e| e.to_string())?;
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0);
        let e0 = energy(&s0, &j, PotentialModel::FreeBody);
        let m0 = spatial_momentum(&s0, &j);
        let (mut orth, mut de, mut dm) = (0.0f64, 0.0f64, 0.0f64);
        let mut s = s0;
        for _ in 0..10_000 {
            s = integ.step(&s).map_err(|e| e.to_string())?;
            orth = orth.max(s.attitude.orthogonality_error());
            de = de.max(((energy(&s, &j, PotentialModel::FreeBody) - e0) / e0).abs());
            dm = dm.max((spatial_momentum(&s, &j) - m0).norm());
        }
        Ok((
            orth <= 1e-12 && dm <= 1e-10 && de <= 1e-6,
            format!("orthogonality {orth:.2e}, momentum {dm:.2e}, energy {de:.2e} over 1e4 steps"),
        ))
    };
    Check::from_result("free-body structure", run())
}

fn convergence_order() -> Check {
    let run = || -> Result<(bool, String), String> {
        let j = spacecraft_inertia();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0);
        let t = 1.0;
        let end = |n: usize| -> Result<RigidBodyState, String> {
            Lgvi::new(t / n as f64, j, PotentialModel::GravityGradient)
                .and_then(|i| i.propagate(&s0, n))
                .map_err(|e| e.to_string())
        };
        let reference = end(6400)?;
        let err = |s: &RigidBodyState| {
            geodesic_angle(&s.attitude, &reference.attitude) + (s.angular_velocity - reference.angular_velocity).norm()
        };
        let ratio = err(&end(100)?) / err(&end(200)?);
        Ok(((3.2..=4.8).contains(&ratio), format!("error ratio {ratio:.3} under step halving")))
    };
    Check::from_result("integrator convergence order", run())
}

fn spherical_closed_form() -> Check {
    let j_d = Matrix3::identity() * 0.5;
    let phi = Vector3::new(0.3, -0.2, 0.4);
    let solver = ImplicitSolver::default();
    match solver.solve(&phi, &j_d).and_then(|f| log_so3(&f)) {
        Ok(f) => {
            let expected = phi.normalize() * phi.norm().asin();
            let err = (f - expected).norm();
            Check::new("spherical implicit solve", err <= 1e-12, format!("error {err:.2e} against asin"))
        }
        Err(e) => Check::new("spherical implicit solve", false, e.to_string()),
    }
}

fn minkowski_cover() -> Check {
    let i3 = Matrix3::<f64>::identity();
    let run = || -> Result<(bool, String), String> {
        let four = minkowski_sum_cover(&i3, &i3).map_err(|e| e.to_string())?;
        let nine = minkowski_sum_cover(&i3, &(i3 * 4.0)).map_err(|e| e.to_string())?;
        let balls = (four - i3 * 4.0).norm() <= 1e-14 && (nine - i3 * 9.0).norm() <= 1e-13;
        let q1 = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5);
        let q2 = Matrix3::from_diagonal(&Vector3::new(0.2, 3.0, 1.0));
        let p = minkowski_sum_cover(&q1, &q2).map_err(|e| e.to_string())?;
        let e1 = Ellipsoid::from_fixed(&Vector3::zeros(), &q1).map_err(|e| e.to_string())?;
        let e2 = Ellipsoid::from_fixed(&Vector3::zeros(), &q2).map_err(|e| e.to_string())?;
        let out = Ellipsoid::from_fixed(&Vector3::zeros(), &p).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut misses = 0;
        for _ in 0..10_000 {
            let x = sample_in_ellipsoid_with(&e1, &mut rng) + sample_in_ellipsoid_with(&e2, &mut rng);
            if !contains_point(&out, &x).map_err(|e| e.to_string())? {
                misses += 1;
            }
        }
        Ok((balls && misses == 0, format!("ball cases exact: {balls}, {misses} of 1e4 sampled sums outside")))
    };
    Check::from_result("minkowski-sum cover", run())
}

fn union_cover() -> Check {
    let run = || -> Result<(bool, String), String> {
        let sigma = 0.2 * PI / 180.0;
        let p0 = Matrix3::identity() * sigma * sigma;
        let b = Vector3::z();
        let pm = union_cover_symmetric(&b, &p0, PI).map_err(|e| e.to_string())?;
        let outer = Ellipsoid::from_fixed(&Vector3::zeros(), &pm).map_err(|e| e.to_string())?;
        let mut certified = true;
        for sign in [1.0, -1.0] {
            let inner = Ellipsoid::from_fixed(&(b * (sign * PI)), &p0).map_err(|e| e.to_string())?;
            certified &= contains_ellipsoid(&outer, &inner).map_err(|e| e.to_string())?;
        }
        let naive = Matrix3::from_diagonal(&Vector3::new(sigma * sigma, sigma * sigma, (PI + sigma).powi(2)));
        let naive = Ellipsoid::from_fixed(&Vector3::zeros(), &naive).map_err(|e| e.to_string())?;
        let inner = Ellipsoid::from_fixed(&(b * PI), &p0).map_err(|e| e.to_string())?;
        let naive_rejected = !contains_ellipsoid(&naive, &inner).map_err(|e| e.to_string())?;
        Ok((
            certified && naive_rejected,
            format!("cover certified: {certified}, naive candidate rejected: {naive_rejected}"),
        ))
    };
    Check::from_result("union cover", run())
}

fn fusion_hand_case() -> Check {
    match fuse_intersection(&Vector6::zeros(), &Matrix6::identity(), &Matrix3::identity(), 1.0) {
        Ok(f) => {
            let expected = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 2.0, 2.0, 2.0));
            let err = (f.shape - expected).norm() + (f.beta - 2.0).abs() + f.center.norm();
            Check::new("fusion hand case", err <= 1e-14, format!("deviation {err:.2e}"))
        }
        Err(e) => Check::new("fusion hand case", false, e.to_string()),
    }
}

fn alignment() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let b = random_vec(&mut rng, 1.0).normalize();
        let e = random_vec(&mut rng, 1.0).normalize();
        match alignment_rotation(&b, &e) {
            Ok(r) => worst = worst.max((r * b - e).norm()),
            Err(err) => return Check::new("direction alignment", false, err.to_string()),
        }
    }
    Check::new("direction alignment", worst <= 1e-10, format!("max |R b - e| {worst:.2e}"))
}

fn jacobian() -> Check {
    let run = || -> Result<(bool, String), String> {
        let integ = Lgvi::new((PI / 2.0) / 2000.0, spacecraft_inertia(), PotentialModel::GravityGradient)
            .map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let s = RigidBodyState::new(exp_so3(&random_vec(&mut rng, 2.0)), random_vec(&mut rng, 2.5), rng.random_range(0.0..3.0));
            let a = linearized_transition(&s, &integ, 1e-6).map_err(|e| e.to_string())?;
            let x = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * 1e-4;
            let next = integ.step(&s).map_err(|e| e.to_string())?;
            let moved = integ.step(&perturb(&s, &x)).map_err(|e| e.to_string())?;
            let zeta = log_so3(&(next.attitude.transpose() * moved.attitude)).map_err(|e| e.to_string())?;
            let dw = moved.angular_velocity - next.angular_velocity;
            let direct = Vector6::new(zeta.x, zeta.y, zeta.z, dw.x, dw.y, dw.z);
            worst = worst.max((a * x - direct).norm() / direct.norm());
        }
        Ok((worst <= 1e-3, format!("max relative error {worst:.2e} over 20 states")))
    };
    Check::from_result("transition jacobian", run())
}

fn determinism() -> Check {
    let run = || -> Result<(bool, String), String> {
        let cfg = paper_sec5();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trace(&run_scenario(&cfg).map_err(|e| e.to_string())?, TraceFormat::Csv, &mut a).map_err(|e| e.to_string())?;
        write_trace(&run_scenario(&cfg).map_err(|e| e.to_string())?, TraceFormat::Csv, &mut b).map_err(|e| e.to_string())?;
        Ok((a == b, format!("{} bytes per run", a.len())))
    };
    Check::from_result("scenario determinism", run())
}

/// Runs every check in order.
pub fn run_all() -> Vec<Check> {
    vec![
        exp_log_round_trip(),
        free_body_invariants(),
        convergence_order(),
        spherical_closed_form(),
        minkowski_cover(),
        union_cover(),
        fusion_hand_case(),
        alignment(),
        jacobian(),
        determinism(),
    ]
}
