//! Bounded-error set arithmetic on ellipsoids `{x : (x − c)ᵀ P⁻¹ (x − c) ≤ 1}`.
//!
//! Every operation here is conservative: covers are certified to contain
//! their inputs and fused ellipsoids contain the intersection they replace.
//! The size measure throughout is `tr(P)`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{log_so3, RotationMatrix};

/// Slack on the unit level set used by every membership test.
pub const MEMBERSHIP_SLACK: f64 = 1e-9;

/// `max_λ λ_min(M(λ))` above this value certifies containment.
pub const CONTAINMENT_TOL: f64 = -1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

/// `(P + Pᵀ)/2`.
pub fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

fn symmetrize_dyn(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Ellipsoid in Rⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: shape.nrows(),
            });
        }
        check_spd(&shape)?;
        Ok(Self { center, shape })
    }

    pub fn from_fixed<const N: usize>(center: &SMatrix<f64, N, 1>, shape: &SMatrix<f64, N, N>) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(center.as_slice()),
            DMatrix::from_column_slice(N, N, shape.as_slice()),
        )
    }

    /// Centered ball of the given radius.
    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n) * (radius * radius))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    #[inline]
    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn trace(&self) -> f64 {
        self.shape.trace()
    }

    /// `(x − c)ᵀ P⁻¹ (x − c)`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let d = x - &self.center;
        let chol = self.shape.clone().cholesky().ok_or(Error::Singular)?;
        Ok(d.dot(&chol.solve(&d)))
    }

    fn inverse_shape(&self) -> Result<DMatrix<f64>> {
        Ok(symmetrize_dyn(&self.shape.clone().cholesky().ok_or(Error::Singular)?.inverse()))
    }

    /// `[[Q, −Qc], [−cᵀQ, cᵀQc − 1]]` with `Q = P⁻¹`: the quadratic
    /// `[x; 1]ᵀ M [x; 1] ≤ 0` describes the ellipsoid.
    fn homogeneous_form(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let q = self.inverse_shape()?;
        let qc = &q * &self.center;
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&q);
        for i in 0..n {
            m[(i, n)] = -qc[i];
            m[(n, i)] = -qc[i];
        }
        m[(n, n)] = self.center.dot(&qc) - 1.0;
        Ok(m)
    }
}

fn check_spd(p: &DMatrix<f64>) -> Result<()> {
    let asym = (p - p.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * p.amax().max(1.0)) {
        return Err(Error::InvalidArgument(format!(
            "shape matrix is not symmetric (max |P - P^T| = {asym:e})"
        )));
    }
    let min_eig = p.clone().symmetric_eigenvalues().min();
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const N: usize>(p: &SMatrix<f64, N, N>) -> f64
where
    nalgebra::Const<N>: nalgebra::DimSub<nalgebra::U1>,
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<nalgebra::Const<N>>
        + nalgebra::allocator::Allocator<<nalgebra::Const<N> as nalgebra::DimSub<nalgebra::U1>>::Output>,
{
    symmetrize(p).symmetric_eigenvalues().min()
}

/// `(x − c)ᵀ P⁻¹ (x − c) ≤ 1 + 1e-9`.
pub fn contains_point(e: &Ellipsoid, x: &DVector<f64>) -> Result<bool> {
    Ok(e.quadratic_form(x)? <= 1.0 + MEMBERSHIP_SLACK)
}

/// Uncertainty set on TSO(3) centered at `(R̂, Ω̂)`, with 6×6 shape matrix in
/// the coordinates `x = [ζ; δΩ]`, `R = R̂ exp(hat(ζ))`, `Ω = Ω̂ + δΩ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEllipsoid {
    pub attitude: RotationMatrix,
    pub angular_velocity: Vector3<f64>,
    pub shape: Matrix6<f64>,
}

impl StateEllipsoid {
    pub fn new(attitude: RotationMatrix, angular_velocity: Vector3<f64>, shape: Matrix6<f64>) -> Result<Self> {
        check_spd(&DMatrix::from_column_slice(6, 6, shape.as_slice()))?;
        Ok(Self {
            attitude,
            angular_velocity,
            shape,
        })
    }

    pub fn trace(&self) -> f64 {
        self.shape.trace()
    }

    /// Chart coordinates `[ζ; δΩ]` of `(R, Ω)` about the center.
    pub fn coordinates(&self, r: &RotationMatrix, omega: &Vector3<f64>) -> Result<Vector6<f64>> {
        let zeta = log_so3(&(self.attitude.transpose() * *r))?;
        let d = omega - self.angular_velocity;
        Ok(Vector6::new(zeta.x, zeta.y, zeta.z, d.x, d.y, d.z))
    }

    /// Attitude block of the shape matrix.
    pub fn attitude_block(&self) -> Matrix3<f64> {
        self.shape.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn rate_block(&self) -> Matrix3<f64> {
        self.shape.fixed_view::<3, 3>(3, 3).into_owned()
    }
}

/// Membership of `(R, Ω)` together with its chart coordinates.
pub fn state_membership(e: &StateEllipsoid, r: &RotationMatrix, omega: &Vector3<f64>) -> Result<(bool, Vector6<f64>)> {
    let x = e.coordinates(r, omega)?;
    let chol = e.shape.cholesky().ok_or(Error::Singular)?;
    let q = x.dot(&chol.solve(&x));
    Ok((q <= 1.0 + MEMBERSHIP_SLACK, x))
}

/// Ellipsoid on the attitude coordinates only, `{x ∈ R⁶ : Hx ∈ E(c, P)}`
/// with `H = [I₃ 0₃]`. Unbounded in the rate coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateStrip {
    pub center: Vector3<f64>,
    pub shape: Matrix3<f64>,
}

impl DegenerateStrip {
    pub fn new(center: Vector3<f64>, shape: Matrix3<f64>) -> Result<Self> {
        Ellipsoid::from_fixed(&center, &shape)?;
        Ok(Self { center, shape })
    }

    pub fn contains(&self, x: &Vector6<f64>) -> bool {
        let d = x.fixed_rows::<3>(0) - self.center;
        match self.shape.cholesky() {
            Some(chol) => d.dot(&chol.solve(&d)) <= 1.0 + MEMBERSHIP_SLACK,
            None => false,
        }
    }
}

fn lower_factor(e: &Ellipsoid) -> DMatrix<f64> {
    // shape was verified SPD at construction
    e.shape.clone().cholesky().expect("SPD shape").l()
}

/// Uniform sample from the solid ellipsoid using the caller's generator.
pub fn sample_in_ellipsoid_with<R: Rng + ?Sized>(e: &Ellipsoid, rng: &mut R) -> DVector<f64> {
    let n = e.dim();
    let dir = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let norm = dir.norm();
    let dir = if norm > 0.0 { dir / norm } else { DVector::from_element(n, 0.0) };
    let radius = rng.random::<f64>().powf(1.0 / n as f64);
    // keep samples strictly inside so round-off in the map cannot push them out
    let y = dir * (radius * (1.0 - 1e-12));
    e.center() + lower_factor(e) * y
}

/// Uniform sample from the boundary surface image of the unit sphere.
pub fn sample_on_boundary_with<R: Rng + ?Sized>(e: &Ellipsoid, rng: &mut R) -> DVector<f64> {
    let n = e.dim();
    let dir = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
    let dir = dir.normalize();
    e.center() + lower_factor(e) * dir
}

/// Deterministic single sample for `seed`.
pub fn sample_in_ellipsoid(e: &Ellipsoid, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_in_ellipsoid_with(e, &mut rng)
}

/// Shape of the trace-minimal member of `(1 + 1/s) Q₁ + (1 + s) Q₂` covering
/// the vector sum `E(0, Q₁) ⊕ E(0, Q₂)`; `s = √(tr Q₁ / tr Q₂)`.
pub fn minkowski_sum_cover<const N: usize>(q1: &SMatrix<f64, N, N>, q2: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let t1 = q1.trace();
    let t2 = q2.trace();
    if !(t1 > 0.0) || !(t2 > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let q = (t1 / t2).sqrt();
    Ok(symmetrize(&(q1 * (1.0 + 1.0 / q) + q2 * (1.0 + q))))
}

/// Bounds of the S-procedure multiplier search.
const LAMBDA_LOG_MIN: f64 = -13.815_510_557_964_274; // ln 1e-6
const LAMBDA_LOG_MAX: f64 = 13.815_510_557_964_274; // ln 1e6
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Result of the multiplier search in [`containment_margin`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentCertificate {
    pub lambda: f64,
    pub margin: f64,
}

impl ContainmentCertificate {
    pub fn certified(&self) -> bool {
        self.margin >= CONTAINMENT_TOL
    }
}

/// Maximizes `λ_min(λ M_in − M_out)` over `λ ∈ [1e-6, 1e6]`, stopping early
/// once the margin certifies containment. `λ_min` of an affine pencil is
/// concave in `λ`, so golden-section search on `ln λ` finds the maximum.
pub fn containment_margin(outer: &Ellipsoid, inner: &Ellipsoid) -> Result<ContainmentCertificate> {
    margin_search(outer, inner, CONTAINMENT_TOL)
}

/// Multiplier search that stops as soon as the margin reaches `target`.
fn margin_search(outer: &Ellipsoid, inner: &Ellipsoid, target: f64) -> Result<ContainmentCertificate> {
    if outer.dim() != inner.dim() {
        return Err(Error::DimensionMismatch {
            expected: outer.dim(),
            actual: inner.dim(),
        });
    }
    let m_out = outer.homogeneous_form()?;
    let m_in = inner.homogeneous_form()?;
    let eval = |s: f64| -> f64 {
        let lambda = s.exp();
        let m = &m_in * lambda - &m_out;
        symmetrize_dyn(&m).symmetric_eigenvalues().min()
    };

    let mut best = ContainmentCertificate {
        lambda: f64::NAN,
        margin: f64::NEG_INFINITY,
    };
    let record = |s: f64, v: f64, best: &mut ContainmentCertificate| {
        if v > best.margin {
            *best = ContainmentCertificate {
                lambda: s.exp(),
                margin: v,
            };
        }
    };

    let (mut a, mut b) = (LAMBDA_LOG_MIN, LAMBDA_LOG_MAX);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    record(c, fc, &mut best);
    record(d, fd, &mut best);
    while best.margin < target && (b - a) > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = eval(c);
            record(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = eval(d);
            record(d, fd, &mut best);
        }
    }
    if best.margin < target {
        for s in [LAMBDA_LOG_MIN, LAMBDA_LOG_MAX] {
            let v = eval(s);
            record(s, v, &mut best);
        }
    }
    Ok(best)
}

/// S-procedure test for `inner ⊆ outer`.
pub fn contains_ellipsoid(outer: &Ellipsoid, inner: &Ellipsoid) -> Result<bool> {
    Ok(containment_margin(outer, inner)?.certified())
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Parameters of the certified union-cover search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnionCoverSearch {
    pub grid: usize,
    pub alpha_max: f64,
    pub refine_iters: usize,
}

impl Default for UnionCoverSearch {
    fn default() -> Self {
        Self {
            grid: 40,
            alpha_max: 50.0,
            refine_iters: 40,
        }
    }
}

impl UnionCoverSearch {
    /// Trace-minimal certified `α P₀ + β b bᵀ` covering
    /// `E(−κ b, P₀) ∪ E(κ b, P₀)`.
    pub fn cover(&self, b: &Vector3<f64>, p0: &Matrix3<f64>, offset: f64) -> Result<Matrix3<f64>> {
        let norm = b.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnit { norm });
        }
        let lmax = symmetrize(p0).symmetric_eigenvalues().max();
        if !(lmax > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: lmax });
        }
        let bbt = b * b.transpose();
        let plus = Ellipsoid::from_fixed(&(b * offset), p0)?;
        let minus = Ellipsoid::from_fixed(&(-b * offset), p0)?;
        let candidate = |alpha: f64, beta: f64| symmetrize(&(p0 * alpha + bbt * beta));
        // the family is centrally symmetric, so covering one offset copy
        // covers its mirror image as well. The search demands a nonnegative
        // margin: the bisection would otherwise settle on the round-off
        // tolerance of the predicate itself.
        let certified = |alpha: f64, beta: f64| -> Result<bool> {
            let outer = Ellipsoid::from_fixed(&Vector3::zeros(), &candidate(alpha, beta))?;
            Ok(margin_search(&outer, &plus, 0.0)?.margin >= 0.0)
        };

        let alphas = log_space(1.0, self.alpha_max, self.grid);
        let beta_lo = offset * offset;
        let beta_hi = 4.0 * (offset + lmax.sqrt()).powi(2);
        let betas = log_space(beta_lo, beta_hi, self.grid);
        let tr0 = p0.trace();

        // (alpha index, first certified beta index)
        let mut grid_hits: Vec<(usize, usize)> = Vec::new();
        for (i, &alpha) in alphas.iter().enumerate() {
            if !certified(alpha, betas[betas.len() - 1])? {
                continue;
            }
            let (mut lo, mut hi) = (0usize, betas.len() - 1);
            if certified(alpha, betas[0])? {
                hi = 0;
            } else {
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if certified(alpha, betas[mid])? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            grid_hits.push((i, hi));
        }
        let trace_of = |alpha: f64, beta: f64| alpha * tr0 + beta;
        let best_grid = grid_hits
            .iter()
            .min_by(|x, y| {
                trace_of(alphas[x.0], betas[x.1]).total_cmp(&trace_of(alphas[y.0], betas[y.1]))
            })
            .copied()
            .ok_or(Error::CoverSearchExhausted)?;

        // refine beta by bisection around the best grid alpha and its neighbours
        let mut best = (alphas[best_grid.0], betas[best_grid.1]);
        for &(i, j) in grid_hits.iter().filter(|(i, _)| i.abs_diff(best_grid.0) <= 1) {
            let alpha = alphas[i];
            let mut hi = betas[j];
            let mut lo = if j == 0 { 0.0 } else { betas[j - 1] };
            for _ in 0..self.refine_iters {
                let mid = 0.5 * (lo + hi);
                if certified(alpha, mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if trace_of(alpha, hi) < trace_of(best.0, best.1) {
                best = (alpha, hi);
            }
        }

        let p = candidate(best.0, best.1);
        let outer = Ellipsoid::from_fixed(&Vector3::zeros(), &p)?;
        if contains_ellipsoid(&outer, &plus)? && contains_ellipsoid(&outer, &minus)? {
            Ok(p)
        } else {
            Err(Error::CoverSearchExhausted)
        }
    }
}

/// Certified cover of `E(−κ b, P₀) ∪ E(κ b, P₀)` centered at the origin.
pub fn union_cover_symmetric(b: &Vector3<f64>, p0: &Matrix3<f64>, offset: f64) -> Result<Matrix3<f64>> {
    UnionCoverSearch::default().cover(b, p0, offset)
}

/// Output of [`fuse_intersection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fusion {
    pub center: Vector6<f64>,
    pub shape: Matrix6<f64>,
    pub beta: f64,
    pub r: f64,
    /// Gain `L = P_f Hᵀ [H P_f Hᵀ + r⁻¹ P_m]⁻¹`.
    pub gain: SMatrix<f64, 6, 3>,
}

/// Cover of `E(x̂, P_f) ∩ {x : Hx ∈ E(0, P_m)}` for the weight `r > 0`,
/// with `H = [I₃ 0₃]`.
pub fn fuse_intersection(x_mf: &Vector6<f64>, pf: &Matrix6<f64>, pm: &Matrix3<f64>, r: f64) -> Result<Fusion> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("fusion weight must be positive, got {r}")));
    }
    let pf_ht: SMatrix<f64, 6, 3> = pf.fixed_columns::<3>(0).into_owned();
    let h_pf_ht: Matrix3<f64> = pf.fixed_view::<3, 3>(0, 0).into_owned();
    let w = symmetrize(&(h_pf_ht + pm / r));
    let w_inv = w.cholesky().ok_or(Error::Singular)?.inverse();
    let gain = pf_ht * w_inv;
    let innovation = x_mf.fixed_rows::<3>(0).into_owned();
    let beta = 1.0 + r - innovation.dot(&(w_inv * innovation));
    if !(beta > 0.0) {
        return Err(Error::EmptyIntersection { beta });
    }
    let mut lh = Matrix6::zeros();
    lh.fixed_columns_mut::<3>(0).copy_from(&gain);
    let i_lh = Matrix6::identity() - lh;
    let shape = (i_lh * pf * i_lh.transpose() + gain * pm * gain.transpose() / r) * beta;
    Ok(Fusion {
        center: i_lh * x_mf,
        shape: symmetrize(&shape),
        beta,
        r,
        gain,
    })
}

/// Bracket and resolution of the fusion-weight search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionSearch {
    pub r_min: f64,
    pub r_max: f64,
    pub scan: usize,
    pub refine_iters: usize,
}

impl Default for FusionSearch {
    fn default() -> Self {
        Self {
            r_min: 1e-4,
            r_max: 1e4,
            scan: 60,
            refine_iters: 60,
        }
    }
}

impl FusionSearch {
    /// Log-spaced scan of `r` followed by golden-section refinement of
    /// `tr P(r)` around the best scan point.
    pub fn optimize(&self, x_mf: &Vector6<f64>, pf: &Matrix6<f64>, pm: &Matrix3<f64>) -> Result<Fusion> {
        let rs = log_space(self.r_min, self.r_max, self.scan);
        let mut worst_beta = f64::NEG_INFINITY;
        let objective = |r: f64| -> Option<Fusion> { fuse_intersection(x_mf, pf, pm, r).ok() };
        let mut best: Option<(usize, Fusion)> = None;
        for (i, &r) in rs.iter().enumerate() {
            match fuse_intersection(x_mf, pf, pm, r) {
                Ok(f) => {
                    if best.as_ref().is_none_or(|(_, b)| f.shape.trace() < b.shape.trace()) {
                        best = Some((i, f));
                    }
                }
                Err(Error::EmptyIntersection { beta }) => worst_beta = worst_beta.max(beta),
                Err(e) => return Err(e),
            }
        }
        let (i, mut best) = best.ok_or(Error::EmptyIntersection { beta: worst_beta })?;

        let mut a = rs[i.saturating_sub(1)].ln();
        let mut b = rs[(i + 1).min(rs.len() - 1)].ln();
        let value = |s: f64| objective(s.exp()).map(|f| f.shape.trace()).unwrap_or(f64::INFINITY);
        let mut c = b - GOLDEN * (b - a);
        let mut d = a + GOLDEN * (b - a);
        let mut fc = value(c);
        let mut fd = value(d);
        for _ in 0..self.refine_iters {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - GOLDEN * (b - a);
                fc = value(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + GOLDEN * (b - a);
                fd = value(d);
            }
        }
        if let Some(f) = objective((0.5 * (a + b)).exp()) {
            if f.shape.trace() < best.shape.trace() {
                best = f;
            }
        }
        Ok(best)
    }
}

/// Fusion with the trace-minimizing weight `r*`.
pub fn optimize_fusion_r(x_mf: &Vector6<f64>, pf: &Matrix6<f64>, pm: &Matrix3<f64>) -> Result<Fusion> {
    FusionSearch::default().optimize(x_mf, pf, pm)
}
