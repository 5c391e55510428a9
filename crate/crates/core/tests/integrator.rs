use std::f64::consts::PI;

use ellipsoidal_attitude::dynamics::*;
use ellipsoidal_attitude::so3::*;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn spacecraft() -> InertiaModel {
    InertiaModel::diagonal(1.0, 2.8, 2.0).unwrap()
}

fn initial() -> RigidBodyState {
    RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0)
}

const H: f64 = (PI / 2.0) / 2000.0;

#[test]
fn free_body_structure_over_ten_thousand_steps() {
    let j = spacecraft();
    let integ = Lgvi::new(H, j, PotentialModel::FreeBody).unwrap();
    let traj = integ.trajectory(&initial(), 10_000).unwrap();
    let e0 = energy(&traj[0], &j, PotentialModel::FreeBody);
    let m0 = spatial_momentum(&traj[0], &j);
    let orth = traj.iter().map(|s| s.attitude.orthogonality_error()).fold(0.0, f64::max);
    let mom = traj.iter().map(|s| (spatial_momentum(s, &j) - m0).norm()).fold(0.0, f64::max);
    let rel: Vec<f64> = traj.iter().map(|s| (energy(s, &j, PotentialModel::FreeBody) - e0) / e0).collect();
    let worst = rel.iter().map(|e| e.abs()).fold(0.0, f64::max);
    assert!(orth <= 1e-12, "orthogonality drift {orth:e}");
    assert!(mom <= 1e-10, "momentum drift {mom:e}");
    assert!(worst <= 1e-6, "energy deviation {worst:e}");

    // secular growth: least-squares slope of the relative energy error,
    // extrapolated over the run, stays far below the deviation bound
    let n = rel.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let mean_e = rel.iter().sum::<f64>() / n;
    let (num, den) = rel.iter().enumerate().fold((0.0, 0.0), |(a, b), (k, e)| {
        let dk = k as f64 - mean_k;
        (a + dk * (e - mean_e), b + dk * dk)
    });
    let drift = (num / den * n).abs();
    assert!(drift <= 1e-8, "energy trend {drift:e} over the run");
}

#[test]
fn gravity_gradient_keeps_orthogonality() {
    let integ = Lgvi::new(H, spacecraft(), PotentialModel::GravityGradient).unwrap();
    let end = integ.propagate(&initial(), 10_000).unwrap();
    assert!(end.attitude.orthogonality_error() <= 1e-12);
}

fn endpoint_error(n: usize, reference: &RigidBodyState) -> f64 {
    let s = Lgvi::new(1.0 / n as f64, spacecraft(), PotentialModel::GravityGradient)
        .unwrap()
        .propagate(&initial(), n)
        .unwrap();
    geodesic_angle(&s.attitude, &reference.attitude) + (s.angular_velocity - reference.angular_velocity).norm()
}

#[test]
fn second_order_under_step_halving() {
    let reference = Lgvi::new(1.0 / 12_800.0, spacecraft(), PotentialModel::GravityGradient)
        .unwrap()
        .propagate(&initial(), 12_800)
        .unwrap();
    for n in [50, 100, 200] {
        let ratio = endpoint_error(n, &reference) / endpoint_error(2 * n, &reference);
        assert!((3.2..=4.8).contains(&ratio), "n = {n}: ratio {ratio}");
    }
}

#[test]
fn spherical_solve_matches_asin() {
    // J = I gives J_d = I/2 and hat(φ) = (F − Fᵀ)/2 = sin θ hat(axis)
    let j_d = Matrix3::identity() * 0.5;
    for phi in [Vector3::new(0.3, -0.2, 0.4), Vector3::new(1e-4, 0.0, 0.0), Vector3::new(0.0, 0.7, 0.6)] {
        let f = ImplicitSolver::default().solve(&phi, &j_d).unwrap();
        let expected = phi.normalize() * phi.norm().asin();
        assert!((log_so3(&f).unwrap() - expected).norm() <= 1e-12);
    }
}

#[test]
fn spherical_free_body_spins_about_fixed_axis() {
    let integ = Lgvi::new(0.01, InertiaModel::new(Matrix3::identity()).unwrap(), PotentialModel::FreeBody).unwrap();
    let w = Vector3::new(0.3, -0.5, 0.8);
    let end = integ.propagate(&RigidBodyState::new(RotationMatrix::identity(), w, 0.0), 100).unwrap();
    assert!((end.angular_velocity - w).norm() <= 1e-12);
    // each step turns by asin(h |w|) about the fixed axis
    let angle = 100.0 * (0.01 * w.norm()).asin();
    assert!((end.attitude.matrix() - exp_so3(&(w.normalize() * angle)).matrix()).norm() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn free_body_conserves_momentum_for_any_state(
        a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64,
        w1 in -3.0..3.0f64, w2 in -3.0..3.0f64, w3 in -3.0..3.0f64,
    ) {
        let j = spacecraft();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(a, b, c)), Vector3::new(w1, w2, w3), 0.0);
        let integ = Lgvi::new(H, j, PotentialModel::FreeBody).unwrap();
        let end = integ.propagate(&s0, 200).unwrap();
        prop_assert!((spatial_momentum(&end, &j) - spatial_momentum(&s0, &j)).norm() <= 1e-11);
        prop_assert!(end.attitude.orthogonality_error() <= 1e-13);
    }

    #[test]
    fn composition_of_steps(a in -2.0..2.0f64, w in -2.0..2.0f64) {
        let integ = Lgvi::new(H, spacecraft(), PotentialModel::GravityGradient).unwrap();
        let s0 = RigidBodyState::new(exp_so3(&Vector3::new(a, 0.3, -0.1)), Vector3::new(w, 0.4, 0.2), 0.5);
        let direct = integ.propagate(&s0, 7).unwrap();
        let split = integ.propagate(&integ.propagate(&s0, 3).unwrap(), 4).unwrap();
        prop_assert_eq!(direct, split);
    }
}
