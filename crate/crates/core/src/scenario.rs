//! Closed-loop simulation: truth propagation, bounded-noise direction
//! measurements, adaptive direction selection and trace output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{InertiaModel, Lgvi, PotentialModel, RigidBodyState};
use crate::ellipsoid::{state_membership, symmetrize, StateEllipsoid};
use crate::error::Error;
use crate::estimator::{Estimator, FilterConfig};
use crate::measurement::{apply_measurement_noise, DirectionMeasurement};
use crate::so3::{exp_so3, geodesic_angle, project_to_so3, RotationMatrix, PI_MARGIN};

/// The bundled configuration reproducing the spacecraft example.
pub const PAPER_SEC5_CONFIG: &str = include_str!("../configs/paper_sec5.json");

/// Catalog columns further than this from unit length are rejected; closer
/// ones are normalized on load.
pub const CATALOG_UNIT_TOL: f64 = 1e-3;

/// Attitude matrices given explicitly may be off SO(3) by rounding up to
/// this Frobenius error; they are projected on load.
pub const MATRIX_PROJECTION_TOL: f64 = 1e-2;

/// Smallest predicted `‖(R̂ᵀe) × e‖` accepted by [`select_direction`].
pub const MIN_DIRECTION_SEPARATION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse(_) | ScenarioError::Invalid { .. } => 2,
            ScenarioError::Io { .. } => 2,
            ScenarioError::Numerical(_) => 3,
        }
    }
}

/// Attitude as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeSpec {
    /// Axis-angle vector in degrees.
    AxisAngleDeg([f64; 3]),
    /// Row-major 3×3 matrix.
    Matrix([[f64; 3]; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub attitude: AttitudeSpec,
    /// rad per normalized time unit, body frame
    pub angular_velocity: [f64; 3],
}

/// On-disk scenario description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub inertia_diagonal: [f64; 3],
    #[serde(default = "default_potential")]
    pub potential: PotentialModel,
    pub truth: StateSpec,
    pub estimate: StateSpec,
    pub initial_shape_diagonal: [f64; 6],
    pub directions: Vec<[f64; 3]>,
    pub noise_sigma_deg: f64,
    #[serde(default = "identity3")]
    pub noise_shape: [[f64; 3]; 3],
    pub duration: f64,
    pub measurements: usize,
    pub steps_between_measurements: usize,
    #[serde(default)]
    pub seed: u64,
    /// When false the measurements are exact; the noise bound still shapes the measurement set.
    #[serde(default = "default_true")]
    pub inject_noise: bool,
}

fn default_true() -> bool {
    true
}

fn default_potential() -> PotentialModel {
    PotentialModel::GravityGradient
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub inertia: InertiaModel,
    pub potential: PotentialModel,
    pub truth: RigidBodyState,
    pub initial_estimate: StateEllipsoid,
    pub catalog: Vec<Vector3<f64>>,
    /// Noise bound `S` (rad²).
    pub noise: Matrix3<f64>,
    pub step: f64,
    pub measurements: usize,
    pub steps_between_measurements: usize,
    pub seed: u64,
    pub inject_noise: bool,
}

fn attitude_from_spec(spec: &AttitudeSpec, field: &str) -> Result<RotationMatrix, ScenarioError> {
    match spec {
        AttitudeSpec::AxisAngleDeg(v) => {
            let v = Vector3::from(*v) * (std::f64::consts::PI / 180.0);
            if !v.iter().all(|c| c.is_finite()) {
                return Err(ScenarioError::invalid(field, "non-finite axis-angle"));
            }
            Ok(exp_so3(&v))
        }
        AttitudeSpec::Matrix(rows) => {
            let m = Matrix3::from_fn(|i, j| rows[i][j]);
            let ortho = (m.transpose() * m - Matrix3::identity()).norm();
            if !(ortho <= MATRIX_PROJECTION_TOL) || m.determinant() <= 0.0 {
                return Err(ScenarioError::invalid(field, format!("matrix is not a rotation (|R^T R - I| = {ortho:e})")));
            }
            project_to_so3(&m).map_err(|e| ScenarioError::invalid(field, e.to_string()))
        }
    }
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<ScenarioConfig, ScenarioError> {
        let inertia = InertiaModel::diagonal(self.inertia_diagonal[0], self.inertia_diagonal[1], self.inertia_diagonal[2])
            .map_err(|e| ScenarioError::invalid("inertia_diagonal", e.to_string()))?;

        let truth_r = attitude_from_spec(&self.truth.attitude, "truth.attitude")?;
        let est_r = attitude_from_spec(&self.estimate.attitude, "estimate.attitude")?;
        let truth_w = Vector3::from(self.truth.angular_velocity);
        let est_w = Vector3::from(self.estimate.angular_velocity);
        if !truth_w.iter().chain(est_w.iter()).all(|c| c.is_finite()) {
            return Err(ScenarioError::invalid("angular_velocity", "non-finite component"));
        }

        let diag = Vector6::from(self.initial_shape_diagonal);
        if !diag.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(ScenarioError::invalid("initial_shape_diagonal", "entries must be positive"));
        }
        let p0 = Matrix6::from_diagonal(&diag);
        let initial_estimate = StateEllipsoid::new(est_r, est_w, p0)
            .map_err(|e| ScenarioError::invalid("initial_shape_diagonal", e.to_string()))?;
        let (inside, x0) = state_membership(&initial_estimate, &truth_r, &truth_w)
            .map_err(|e| ScenarioError::invalid("truth", e.to_string()))?;
        if !inside {
            let q: f64 = x0.component_div(&diag).dot(&x0);
            return Err(ScenarioError::invalid(
                "truth",
                format!("initial truth outside initial ellipsoid (x0^T P0^-1 x0 = {q})"),
            ));
        }

        if self.directions.is_empty() {
            return Err(ScenarioError::invalid("directions", "catalog is empty"));
        }
        let mut catalog = Vec::with_capacity(self.directions.len());
        for (j, col) in self.directions.iter().enumerate() {
            let v = Vector3::from(*col);
            let norm = v.norm();
            if !((norm - 1.0).abs() <= CATALOG_UNIT_TOL) {
                return Err(ScenarioError::invalid(
                    format!("directions[{j}]"),
                    format!("not a unit vector (norm {norm})"),
                ));
            }
            catalog.push(v / norm);
        }

        if !(self.noise_sigma_deg > 0.0) {
            return Err(ScenarioError::invalid("noise_sigma_deg", "must be positive"));
        }
        let shape = Matrix3::from_fn(|i, j| self.noise_shape[i][j]);
        if (shape - shape.transpose()).amax() > 1e-12 || shape.cholesky().is_none() {
            return Err(ScenarioError::invalid("noise_shape", "must be symmetric positive definite"));
        }
        let sigma = self.noise_sigma_deg.to_radians();
        let noise = symmetrize(&(shape * sigma * sigma));

        if self.measurements == 0 {
            return Err(ScenarioError::invalid("measurements", "must be at least 1"));
        }
        if self.steps_between_measurements == 0 {
            return Err(ScenarioError::invalid("steps_between_measurements", "must be at least 1"));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(ScenarioError::invalid("duration", "must be positive"));
        }
        let step = self.duration / (self.measurements * self.steps_between_measurements) as f64;

        Ok(ScenarioConfig {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            inertia,
            potential: self.potential,
            truth: RigidBodyState::new(truth_r, truth_w, 0.0),
            initial_estimate,
            catalog,
            noise,
            step,
            measurements: self.measurements,
            steps_between_measurements: self.steps_between_measurements,
            seed: self.seed,
            inject_noise: self.inject_noise,
        })
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    file.validate()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// The bundled spacecraft scenario.
pub fn paper_sec5() -> ScenarioConfig {
    parse_config(PAPER_SEC5_CONFIG).expect("bundled config is valid")
}

/// Zero-mean normal draw with covariance `S/9`, resampled until it lies in `E(0, S)`.
pub fn sample_bounded_noise<R: Rng + ?Sized>(s: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let chol = s.cholesky().expect("noise bound must be positive definite");
    let l = chol.l() / 3.0;
    loop {
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let nu = l * z;
        if nu.dot(&chol.solve(&nu)) <= 1.0 {
            return nu;
        }
    }
}

/// Catalog entry maximizing the predicted `‖(R̂ᵀe) × e‖`, lowest index on ties.
pub fn select_direction(r_pred: &RotationMatrix, catalog: &[Vector3<f64>]) -> Result<(usize, Vector3<f64>), Error> {
    let mut best: Option<(usize, f64)> = None;
    for (j, e) in catalog.iter().enumerate() {
        let score = (r_pred.transpose() * *e).cross(e).norm();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    match best {
        Some((j, score)) if score >= MIN_DIRECTION_SEPARATION => Ok((j, catalog[j])),
        Some((_, score)) => Err(Error::DegenerateGeometry { cross_norm: score }),
        None => Err(Error::InvalidArgument("direction catalog is empty".into())),
    }
}

/// One row of the output trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub att_err_deg: f64,
    pub rate_err: f64,
    #[serde(rename = "trace_P")]
    pub trace_p: f64,
    pub membership: bool,
    pub dir_idx: Option<usize>,
    pub theta0: Option<f64>,
    pub r_star: Option<f64>,
    pub beta_flag: bool,
    /// Row-major true attitude.
    pub truth_attitude: [f64; 9],
    pub truth_rate: [f64; 3],
    pub est_attitude: [f64; 9],
    pub est_rate: [f64; 3],
}

fn row_major(r: &RotationMatrix) -> [f64; 9] {
    let m = r.matrix();
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

fn record(
    k: usize,
    truth: &RigidBodyState,
    est: &StateEllipsoid,
    dir_idx: Option<usize>,
    theta0: Option<f64>,
    r_star: Option<f64>,
    beta_flag: bool,
) -> TraceRecord {
    let membership = state_membership(est, &truth.attitude, &truth.angular_velocity)
        .map(|(inside, _)| inside)
        .unwrap_or(false);
    TraceRecord {
        k,
        t: truth.time,
        att_err_deg: geodesic_angle(&est.attitude, &truth.attitude).to_degrees(),
        rate_err: (truth.angular_velocity - est.angular_velocity).norm(),
        trace_p: est.trace(),
        membership,
        dir_idx,
        theta0,
        r_star,
        beta_flag,
        truth_attitude: row_major(&truth.attitude),
        truth_rate: truth.angular_velocity.into(),
        est_attitude: row_major(&est.attitude),
        est_rate: est.angular_velocity.into(),
    }
}

impl ScenarioConfig {
    pub fn estimator(&self) -> Result<Estimator, Error> {
        let integrator = Lgvi::new(self.step, self.inertia, self.potential)?;
        Estimator::new(integrator, FilterConfig::new(self.step, self.steps_between_measurements)?)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Chart coordinates `x₀` of the truth about the initial estimate.
    pub fn initial_offset(&self) -> Result<Vector6<f64>, Error> {
        self.initial_estimate.coordinates(&self.truth.attitude, &self.truth.angular_velocity)
    }

    /// `x₀ᵀ P₀⁻¹ x₀`.
    pub fn initial_quadratic(&self) -> Result<f64, Error> {
        let x = self.initial_offset()?;
        let chol = self.initial_estimate.shape.cholesky().ok_or(Error::Singular)?;
        Ok(x.dot(&chol.solve(&x)))
    }

    /// Moves the truth along its current offset direction so that
    /// `x₀ᵀ P₀⁻¹ x₀ = target`.
    pub fn with_initial_quadratic(&self, target: f64) -> Result<Self, Error> {
        if !(target > 0.0) || !target.is_finite() {
            return Err(Error::InvalidArgument(format!("target quadratic must be positive, got {target}")));
        }
        let q = self.initial_quadratic()?;
        if q <= 0.0 {
            return Err(Error::InvalidArgument("truth coincides with the estimate".into()));
        }
        let x = self.initial_offset()? * (target / q).sqrt();
        let zeta = Vector3::new(x[0], x[1], x[2]);
        if zeta.norm() >= std::f64::consts::PI - PI_MARGIN {
            return Err(Error::AngleNearPi { angle: zeta.norm() });
        }
        let mut out = self.clone();
        out.truth.attitude = self.initial_estimate.attitude * exp_so3(&zeta);
        out.truth.angular_velocity = self.initial_estimate.angular_velocity + Vector3::new(x[3], x[4], x[5]);
        Ok(out)
    }
}

/// Runs the closed loop; one record for the initial state and one per
/// measurement instant.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<TraceRecord>, ScenarioError> {
    let est = cfg.estimator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = cfg.truth;
    let mut estimate = cfg.initial_estimate;
    let mut time = truth.time;
    let mut out = Vec::with_capacity(cfg.measurements + 1);
    out.push(record(0, &truth, &estimate, None, None, None, false));

    for k in 1..=cfg.measurements {
        let prediction = est.predict(&estimate, time)?;
        truth = est.integrator.propagate(&truth, cfg.steps_between_measurements)?;
        let (idx, e) = select_direction(&prediction.ellipsoid.attitude, &cfg.catalog)?;
        let nu = if cfg.inject_noise {
            sample_bounded_noise(&cfg.noise, &mut rng)
        } else {
            Vector3::zeros()
        };
        let b = truth.attitude.transpose() * e;
        let measured = apply_measurement_noise(&b, &nu)?;
        let meas = DirectionMeasurement::new(e, measured, cfg.noise)?;
        let (posterior, outcome) = est.update(&prediction, &meas)?;
        estimate = posterior;
        time = prediction.time;
        out.push(record(
            k,
            &truth,
            &estimate,
            Some(idx),
            Some(outcome.theta0),
            outcome.fusion.map(|f| f.r),
            outcome.fusion.is_none(),
        ));
    }
    Ok(out)
}

/// Trace serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TraceFormat {
    #[default]
    Csv,
    Json,
}

/// Leading columns of the CSV trace, in order.
pub const CSV_METRIC_COLUMNS: [&str; 10] = [
    "k",
    "t",
    "att_err_deg",
    "rate_err",
    "trace_P",
    "membership",
    "dir_idx",
    "theta0",
    "r_star",
    "beta_flag",
];

pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = CSV_METRIC_COLUMNS.iter().map(|s| s.to_string()).collect();
    for prefix in ["truth", "est"] {
        for i in 0..3 {
            for j in 0..3 {
                cols.push(format!("{prefix}_R{i}{j}"));
            }
        }
        for i in 0..3 {
            cols.push(format!("{prefix}_w{i}"));
        }
    }
    cols
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn csv_row(r: &TraceRecord) -> Vec<String> {
    let mut row = vec![
        r.k.to_string(),
        fmt_f(r.t),
        fmt_f(r.att_err_deg),
        fmt_f(r.rate_err),
        fmt_f(r.trace_p),
        (r.membership as u8).to_string(),
        r.dir_idx.map(|d| d.to_string()).unwrap_or_default(),
        fmt_opt(r.theta0),
        fmt_opt(r.r_star),
        (r.beta_flag as u8).to_string(),
    ];
    row.extend(r.truth_attitude.iter().chain(r.truth_rate.iter()).map(|x| fmt_f(*x)));
    row.extend(r.est_attitude.iter().chain(r.est_rate.iter()).map(|x| fmt_f(*x)));
    row
}

pub fn write_trace<W: Write>(records: &[TraceRecord], format: TraceFormat, out: W) -> Result<(), std::io::Error> {
    match format {
        TraceFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(csv_header())?;
            for r in records {
                w.write_record(csv_row(r))?;
            }
            w.flush()
        }
        TraceFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records)?;
            out.write_all(b"\n")
        }
    }
}

pub fn emit_trace(records: &[TraceRecord], path: &Path, format: TraceFormat) -> Result<(), ScenarioError> {
    let io_err = |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let file = fs::File::create(path).map_err(io_err)?;
    let mut buf = std::io::BufWriter::new(file);
    write_trace(records, format, &mut buf).map_err(io_err)?;
    buf.flush().map_err(io_err)
}

/// Parses a CSV trace written by [`write_trace`].
pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>, ScenarioError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| ScenarioError::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != csv_header() {
        return Err(ScenarioError::Parse("unexpected trace header".into()));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| ScenarioError::Parse(format!("{s:?}: {e}")));
    let parse_opt = |s: &str| if s.is_empty() { Ok(None) } else { parse_f(s).map(Some) };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let f: Vec<&str> = row.iter().collect();
        let floats = |range: std::ops::Range<usize>| -> Result<Vec<f64>, ScenarioError> { f[range].iter().map(|s| parse_f(s)).collect() };
        let tail = floats(10..34)?;
        out.push(TraceRecord {
            k: f[0].parse().map_err(|_| ScenarioError::Parse("k".into()))?,
            t: parse_f(f[1])?,
            att_err_deg: parse_f(f[2])?,
            rate_err: parse_f(f[3])?,
            trace_p: parse_f(f[4])?,
            membership: f[5] == "1",
            dir_idx: if f[6].is_empty() {
                None
            } else {
                Some(f[6].parse().map_err(|_| ScenarioError::Parse("dir_idx".into()))?)
            },
            theta0: parse_opt(f[7])?,
            r_star: parse_opt(f[8])?,
            beta_flag: f[9] == "1",
            truth_attitude: std::array::from_fn(|i| tail[i]),
            truth_rate: std::array::from_fn(|i| tail[9 + i]),
            est_attitude: std::array::from_fn(|i| tail[12 + i]),
            est_rate: std::array::from_fn(|i| tail[21 + i]),
        });
    }
    Ok(out)
}

/// Output path for one seed of a fan-out run: `trace.csv` → `trace_seed7.csv`.
pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}_seed{seed}.{ext}"),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

/// Runs `count` seeds starting at the configured one, in parallel.
pub fn run_seeds(cfg: &ScenarioConfig, count: usize) -> Vec<(u64, Result<Vec<TraceRecord>, ScenarioError>)> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            (seed, run_scenario(&cfg.with_seed(seed)))
        })
        .collect()
}

/// Headline numbers of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub initial_att_err_deg: f64,
    pub initial_rate_err: f64,
    pub final_att_err_deg: f64,
    pub final_rate_err: f64,
    pub initial_trace: f64,
    pub final_trace: f64,
    /// Fraction of measurement instants (k ≥ 1) with the truth inside the ellipsoid.
    pub membership_rate: f64,
}

pub fn summarize(records: &[TraceRecord]) -> Option<RunSummary> {
    let first = records.first()?;
    let last = records.last()?;
    let updates = &records[1..];
    let membership_rate = if updates.is_empty() {
        1.0
    } else {
        updates.iter().filter(|r| r.membership).count() as f64 / updates.len() as f64
    };
    Some(RunSummary {
        initial_att_err_deg: first.att_err_deg,
        initial_rate_err: first.rate_err,
        final_att_err_deg: last.att_err_deg,
        final_rate_err: last.rate_err,
        initial_trace: first.trace_p,
        final_trace: last.trace_p,
        membership_rate,
    })
}

/// Median, averaging the middle pair for even lengths. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
