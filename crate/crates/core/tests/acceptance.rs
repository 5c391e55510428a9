//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ellipsoidal_attitude::dynamics::*;
use ellipsoidal_attitude::ellipsoid::*;
use ellipsoidal_attitude::estimator::{linearized_transition, perturb};
use ellipsoidal_attitude::measurement::*;
use ellipsoidal_attitude::scenario::*;
use ellipsoidal_attitude::so3::*;
use nalgebra::{DVector, Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if (0.1..=1.0).contains(&v.norm()) {
            return v.normalize();
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    exp_so3(&(random_unit(rng) * rng.random_range(0.0..PI)))
}

fn spacecraft() -> InertiaModel {
    InertiaModel::diagonal(1.0, 2.8, 2.0).unwrap()
}

fn initial_state() -> RigidBodyState {
    RigidBodyState::new(exp_so3(&Vector3::new(0.0, 0.0, PI / 4.0)), Vector3::new(2.32, 0.45, -0.59), 0.0)
}

fn noise_bound() -> Matrix3<f64> {
    Matrix3::identity() * (0.2 * PI / 180.0).powi(2)
}

fn replication() -> Verdict {
    let dir = tempfile::tempdir().map_err(err)?;
    let out = dir.path().join("trace.csv");
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_ellatt"))
        .args(["replicate-paper", "--seeds", "10", "--out"])
        .arg(&out)
        .output()
        .map_err(err)?;
    let elapsed = started.elapsed();
    if !status.status.success() {
        return Err(format!("replicate-paper failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let cfg = paper_sec5();
    let (mut att, mut rate) = (Vec::new(), Vec::new());
    let mut reduced = 0;
    for seed in cfg.seed..cfg.seed + 10 {
        let file = std::fs::File::open(seeded_path(&out, seed)).map_err(err)?;
        let records = read_trace_csv(file).map_err(err)?;
        let last = records.last().ok_or("empty trace")?;
        att.push(last.att_err_deg);
        rate.push(last.rate_err);
        if records.get(3).ok_or("short trace")?.att_err_deg < records[0].att_err_deg {
            reduced += 1;
        }
    }
    let (a, w) = (median(&att).unwrap(), median(&rate).unwrap());
    let passed = a <= 5.0 && w <= 0.16 && reduced == 10 && elapsed < Duration::from_secs(60);
    Ok((
        passed,
        format!(
            "median terminal errors {a:.3} deg (<= 5) and {w:.4} rad/s (<= 0.16); \
             attitude error at k = 3 below k = 0 in {reduced}/10 seeds; {:.1} s wall time",
            elapsed.as_secs_f64()
        ),
    ))
}

fn guarantee() -> Verdict {
    let cfg = paper_sec5().with_initial_quadratic(0.857).map_err(err)?;
    let q = cfg.initial_quadratic().map_err(err)?;
    let (mut inside, mut total) = (0usize, 0usize);
    for (_, run) in run_seeds(&cfg, 10) {
        let records = run.map_err(err)?;
        total += records.len() - 1;
        inside += records[1..].iter().filter(|r| r.membership).count();
    }
    let rate = inside as f64 / total as f64;
    Ok((
        rate >= 0.95,
        format!("x0' P0^-1 x0 = {q:.3}; truth inside at {inside}/{total} measurement instants ({:.1}%, >= 95%)", rate * 100.0),
    ))
}

fn energy_trend(rel: &[f64]) -> f64 {
    let n = rel.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let mean_e = rel.iter().sum::<f64>() / n;
    let (num, den) = rel.iter().enumerate().fold((0.0, 0.0), |(a, b), (k, e)| {
        let dk = k as f64 - mean_k;
        (a + dk * (e - mean_e), b + dk * dk)
    });
    (num / den * n).abs()
}

fn integrator_structure() -> Verdict {
    let j = spacecraft();
    let h = (PI / 2.0) / 2000.0;
    let traj = Lgvi::new(h, j, PotentialModel::FreeBody).map_err(err)?.trajectory(&initial_state(), 10_000).map_err(err)?;
    let e0 = energy(&traj[0], &j, PotentialModel::FreeBody);
    let m0 = spatial_momentum(&traj[0], &j);
    let orth = traj.iter().map(|s| s.attitude.orthogonality_error()).fold(0.0, f64::max);
    let mom = traj.iter().map(|s| (spatial_momentum(s, &j) - m0).norm()).fold(0.0, f64::max);
    let rel: Vec<f64> = traj.iter().map(|s| (energy(s, &j, PotentialModel::FreeBody) - e0) / e0).collect();
    let dev = rel.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let trend = energy_trend(&rel);

    let gg = Lgvi::new(h, j, PotentialModel::GravityGradient).map_err(err)?;
    let gg_orth = gg
        .trajectory(&initial_state(), 10_000)
        .map_err(err)?
        .iter()
        .map(|s| s.attitude.orthogonality_error())
        .fold(0.0, f64::max);

    let end = |n: usize| {
        Lgvi::new(1.0 / n as f64, j, PotentialModel::GravityGradient).and_then(|i| i.propagate(&initial_state(), n))
    };
    let reference = end(12_800).map_err(err)?;
    let endpoint_err = |n: usize| -> Result<f64, String> {
        let s = end(n).map_err(err)?;
        Ok(geodesic_angle(&s.attitude, &reference.attitude) + (s.angular_velocity - reference.angular_velocity).norm())
    };
    let mut ratios = Vec::new();
    for n in [50, 100, 200] {
        ratios.push(endpoint_err(n)? / endpoint_err(2 * n)?);
    }

    let j_d = Matrix3::identity() * 0.5;
    let mut asin_err: f64 = 0.0;
    for phi in [Vector3::new(0.3, -0.2, 0.4), Vector3::new(1e-4, 0.0, 0.0), Vector3::new(0.0, 0.7, 0.6)] {
        let f = ImplicitSolver::default().solve(&phi, &j_d).map_err(err)?;
        asin_err = asin_err.max((log_so3(&f).map_err(err)? - phi.normalize() * phi.norm().asin()).norm());
    }

    let passed = orth <= 1e-12
        && gg_orth <= 1e-12
        && mom <= 1e-10
        && dev <= 1e-6
        && trend <= 1e-8
        && ratios.iter().all(|r| (3.2..=4.8).contains(r))
        && asin_err <= 1e-12;
    Ok((
        passed,
        format!(
            "orthogonality {:.1e} (gravity gradient {gg_orth:.1e}), momentum {mom:.1e}, energy {dev:.1e} with trend {trend:.1e}; \
             halving ratios {:.3}/{:.3}/{:.3}; asin error {asin_err:.1e}",
            orth, ratios[0], ratios[1], ratios[2]
        ),
    ))
}

fn ellipsoid_calculus() -> Verdict {
    let i3 = Matrix3::<f64>::identity();
    let four = minkowski_sum_cover(&i3, &i3).map_err(err)?;
    let nine = minkowski_sum_cover(&i3, &(i3 * 4.0)).map_err(err)?;
    let balls = four == i3 * 4.0 && nine == i3 * 9.0;

    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let q1 = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5);
    let q2 = Matrix3::from_diagonal(&Vector3::new(0.2, 3.0, 1.0));
    let cover = Ellipsoid::from_fixed(&Vector3::zeros(), &minkowski_sum_cover(&q1, &q2).map_err(err)?).map_err(err)?;
    let e1 = Ellipsoid::from_fixed(&Vector3::zeros(), &q1).map_err(err)?;
    let e2 = Ellipsoid::from_fixed(&Vector3::zeros(), &q2).map_err(err)?;
    let mut outside = 0;
    for _ in 0..10_000 {
        let x = sample_on_boundary_with(&e1, &mut rng) + sample_on_boundary_with(&e2, &mut rng);
        if !contains_point(&cover, &x).map_err(err)? {
            outside += 1;
        }
    }

    let fused = fuse_intersection(&Vector6::zeros(), &Matrix6::identity(), &i3, 1.0).map_err(err)?;
    let expected = Matrix6::from_diagonal(&Vector6::new(1.0, 1.0, 1.0, 2.0, 2.0, 2.0));
    let fusion_dev = (fused.shape - expected).norm() + (fused.beta - 2.0).abs() + fused.center.norm();

    let sigma = 0.2 * PI / 180.0;
    let p0 = i3 * sigma * sigma;
    let b = Vector3::z();
    let pm = union_cover_symmetric(&b, &p0, PI).map_err(err)?;
    let outer = Ellipsoid::from_fixed(&Vector3::zeros(), &pm).map_err(err)?;
    let mut certified = true;
    for sign in [1.0, -1.0] {
        let inner = Ellipsoid::from_fixed(&(b * (sign * PI)), &p0).map_err(err)?;
        certified &= contains_ellipsoid(&outer, &inner).map_err(err)?;
    }
    let naive = Ellipsoid::from_fixed(
        &Vector3::zeros(),
        &Matrix3::from_diagonal(&Vector3::new(sigma * sigma, sigma * sigma, (PI + sigma).powi(2))),
    )
    .map_err(err)?;
    let shifted = Ellipsoid::from_fixed(&(b * PI), &p0).map_err(err)?;
    let naive_rejected = !contains_ellipsoid(&naive, &shifted).map_err(err)?;

    let passed = balls && outside == 0 && fusion_dev <= 1e-14 && certified && naive_rejected;
    Ok((
        passed,
        format!(
            "ball cases exact: {balls}; {outside}/10000 boundary sums outside the cover; fusion hand case deviation {fusion_dev:.1e}; \
             union cover certified: {certified}; naive candidate rejected: {naive_rejected}"
        ),
    ))
}

/// Fraction of draws where the true attitude falls outside the measurement
/// ellipsoid centered at the fiber point nearest a perturbed guess.
fn violation_rate(rng: &mut ChaCha8Rng, draws: usize, boundary_noise: bool) -> Result<f64, String> {
    let s = noise_bound();
    let noise_set = Ellipsoid::from_fixed(&Vector3::zeros(), &s).map_err(err)?;
    let mut bad = 0;
    for _ in 0..draws {
        let r = random_rotation(rng);
        let e = random_unit(rng);
        let nu: DVector<f64> = if boundary_noise {
            sample_on_boundary_with(&noise_set, rng) * (1.0 - 1e-12)
        } else {
            sample_in_ellipsoid_with(&noise_set, rng)
        };
        let b = apply_measurement_noise(&(r.transpose() * e), &Vector3::new(nu[0], nu[1], nu[2])).map_err(err)?;
        let guess = r * exp_so3(&(random_unit(rng) * rng.random_range(0.0..0.5)));
        let align = alignment_rotation(&b, &e).map_err(err)?;
        let theta = optimal_theta_circ(&guess, &align, &b).theta;
        let r_m = measurement_center(&b, &e, theta).map_err(err)?;
        let pm = Ellipsoid::from_fixed(&Vector3::zeros(), &measurement_uncertainty(&b, &s).map_err(err)?).map_err(err)?;
        let inside = match log_so3(&(r_m.transpose() * r)) {
            Ok(z) => contains_point(&pm, &DVector::from_column_slice(z.as_slice())).map_err(err)?,
            Err(_) => false,
        };
        if !inside {
            bad += 1;
        }
    }
    Ok(bad as f64 / draws as f64)
}

fn measurement_geometry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let mut align_err: f64 = 0.0;
    for _ in 0..100 {
        let (b, e) = (random_unit(&mut rng), random_unit(&mut rng));
        let r = reference_rotation(&b, &e, rng.random_range(-PI..PI)).map_err(err)?;
        align_err = align_err.max((r * b - e).norm());
    }

    let grid: Vec<f64> = (0..3600).map(|k| -PI + 2.0 * PI * k as f64 / 3600.0).collect();
    let mut grid_ok = 0;
    for _ in 0..50 {
        let (b, e) = (random_unit(&mut rng), random_unit(&mut rng));
        let r_f = random_rotation(&mut rng);
        let align = alignment_rotation(&b, &e).map_err(err)?;
        let theta = optimal_theta_circ(&r_f, &align, &b).theta;
        let best = grid
            .iter()
            .copied()
            .min_by(|x, y| alignment_index(&r_f, &align, &b, *x).total_cmp(&alignment_index(&r_f, &align, &b, *y)))
            .unwrap();
        let gap = ((theta - best + PI).rem_euclid(2.0 * PI) - PI).abs();
        let no_worse = alignment_index(&r_f, &align, &b, theta) <= alignment_index(&r_f, &align, &b, best) + 1e-12;
        if gap <= 2.0 * PI / 3600.0 && no_worse {
            grid_ok += 1;
        }
    }

    let interior = violation_rate(&mut rng, 1000, false)?;
    let boundary = violation_rate(&mut rng, 1000, true)?;
    let passed = align_err <= 1e-10 && grid_ok == 50 && interior <= 0.01 && boundary <= 0.01;
    Ok((
        passed,
        format!(
            "max |R b - e| {align_err:.1e} over 100 pairs; theta matches the 3600-point grid in {grid_ok}/50 cases; \
             violation rate {:.1}% interior noise, {:.1}% boundary noise (<= 1%)",
            interior * 100.0,
            boundary * 100.0
        ),
    ))
}

fn jacobian() -> Verdict {
    let integ = Lgvi::new((PI / 2.0) / 2000.0, spacecraft(), PotentialModel::GravityGradient).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s = RigidBodyState::new(
            random_rotation(&mut rng),
            Vector3::from_fn(|_, _| rng.random_range(-2.5..2.5)),
            rng.random_range(0.0..PI),
        );
        let a = linearized_transition(&s, &integ, 1e-6).map_err(err)?;
        let x = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * 1e-4;
        let next = integ.step(&s).map_err(err)?;
        let moved = integ.step(&perturb(&s, &x)).map_err(err)?;
        let zeta = log_so3(&(next.attitude.transpose() * moved.attitude)).map_err(err)?;
        let dw = moved.angular_velocity - next.angular_velocity;
        let direct = Vector6::new(zeta.x, zeta.y, zeta.z, dw.x, dw.y, dw.z);
        worst = worst.max((a * x - direct).norm() / direct.norm());
    }
    Ok((worst <= 1e-3, format!("max relative error {worst:.1e} over 20 states at perturbation norm 1e-4")))
}

fn csv(records: &[TraceRecord]) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    write_trace(records, TraceFormat::Csv, &mut out).map_err(err)?;
    Ok(out)
}

fn determinism() -> Verdict {
    let cfg = paper_sec5();
    let a = csv(&run_scenario(&cfg).map_err(err)?)?;
    let b = csv(&run_scenario(&cfg).map_err(err)?)?;
    let mut fanned = run_seeds(&cfg, 2).into_iter().map(|(_, r)| r.map_err(err));
    let c = csv(&fanned.next().ok_or("no run")??)?;
    let other = csv(&fanned.next().ok_or("no run")??)?;
    Ok((
        a == b && a == c && a != other,
        format!(
            "repeat runs identical: {}; parallel fan-out identical: {}; next seed differs: {} ({} bytes)",
            a == b,
            a == c,
            a != other,
            a.len()
        ),
    ))
}

/// Shrinkage of the final set on the bundled scenario. Reported alongside
/// the criteria but not one of them.
fn final_trace_note() -> String {
    let cfg = paper_sec5();
    let p0 = cfg.initial_estimate.shape.trace();
    let finals: Vec<f64> = run_seeds(&cfg, 10)
        .into_iter()
        .filter_map(|(_, r)| r.ok().and_then(|recs| recs.last().map(|l| l.trace_p)))
        .collect();
    let m = median(&finals).unwrap_or(f64::NAN);
    let met = m < 0.01 * p0;
    format!(
        "{} final trace(P) shrinkage: median {m:.3} vs bound {:.3} (1% of trace(P0) = {p0:.2}); informational, not an acceptance criterion",
        if met { "NOTE met" } else { "NOTE not met" },
        0.01 * p0
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("replication of the spacecraft scenario", replication),
        ("deterministic guarantee", guarantee),
        ("integrator structure", integrator_structure),
        ("ellipsoid calculus", ellipsoid_calculus),
        ("measurement geometry", measurement_geometry),
        ("transition jacobian", jacobian),
        ("determinism", determinism),
    ];
    if std::env::args().any(|a| a == "--list") {
        for (name, _) in &criteria {
            println!("{name}: test");
        }
        return ExitCode::SUCCESS;
    }

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let (passed, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} [{}/{}] {name}: {detail} ({:.1} s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            criteria.len(),
            started.elapsed().as_secs_f64()
        );
    }
    println!("{}", final_trace_note());
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
