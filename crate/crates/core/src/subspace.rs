//! One-dimensional subspace estimation from the reverse-modulated observation.
//!
//! A subspace `[x] ⊂ ℂ^M` is carried around as a unit-norm representative;
//! two representatives that differ by a unit-modulus factor describe the same
//! subspace, so comparisons always go through [`subspace_distance`].
//!
//! The UL subspace estimate is the dominant left-singular vector of `Ỹ`, the
//! DL estimate the dominant right-singular vector. Both can be obtained from
//! a dense SVD or from the rank-1 power iteration in
//! [`power_iteration_rank1`].

use crate::error::{Error, Result};
use crate::linalg::{
    dominant_eigvec_psd, full_svd, hermitian_eigen, orthonormality_defect, ComplexMatrix,
    ComplexVector, Svd,
};

/// Unit-norm representative of a point of the Grassmannian `G₁(ℂ^M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePoint {
    rep: ComplexVector,
}

impl SubspacePoint {
    /// Normalizes `v`; rejects the zero vector and non-finite entries.
    pub fn from_vector(v: ComplexVector) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() {
            return Err(Error::InvalidArgument("non-finite vector".into()));
        }
        if norm == 0.0 {
            return Err(Error::InvalidArgument(
                "the zero vector spans no subspace".into(),
            ));
        }
        Ok(Self {
            rep: v.unscale(norm),
        })
    }

    pub fn rep(&self) -> &ComplexVector {
        &self.rep
    }

    pub fn dim(&self) -> usize {
        self.rep.len()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        subspace_distance(self, other)
    }
}

/// Principal angle `arccos(|aᴴb|)` between two lines, in `[0, π/2]`.
///
/// Evaluated as `atan2(sin θ, cos θ)` so that angles below `√ε` keep full
/// relative precision. The sine is the mean of the two projection residuals,
/// which makes the result bitwise symmetric in its arguments.
pub fn subspace_distance(a: &SubspacePoint, b: &SubspacePoint) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of C^{} and C^{}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(unit_vector_angle(&a.rep, &b.rep))
}

pub(crate) fn unit_vector_angle(a: &ComplexVector, b: &ComplexVector) -> f64 {
    let c = a.dotc(b);
    let r1 = (b - a * c).norm();
    let r2 = (a - b * c.conj()).norm();
    (0.5 * (r1 + r2)).atan2(c.norm())
}

fn require_square(y: &ComplexMatrix, what: &str) -> Result<()> {
    if y.nrows() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} requires tau = M, got a {}x{} matrix",
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Dominant left-singular vector of an already decomposed observation.
pub fn ul_from_svd(svd: &Svd) -> Result<SubspacePoint> {
    svd.check_leading_gap()?;
    SubspacePoint::from_vector(svd.left_vector(0))
}

/// Dominant right-singular vector of an already decomposed observation.
pub fn dl_from_svd(svd: &Svd) -> Result<SubspacePoint> {
    svd.check_leading_gap()?;
    SubspacePoint::from_vector(svd.right_vector(0))
}

/// ML estimate of the UL subspace: the dominant eigenvector of `ỸỸᴴ`,
/// obtained as the first left-singular vector of `Ỹ`.
pub fn ml_ul_subspace_svd(y_tilde: &ComplexMatrix) -> Result<SubspacePoint> {
    ul_from_svd(&full_svd(y_tilde)?)
}

/// ML estimate of the DL subspace: the first right-singular vector of `Ỹ`.
pub fn ml_dl_subspace_svd(y_tilde: &ComplexMatrix) -> Result<SubspacePoint> {
    dl_from_svd(&full_svd(y_tilde)?)
}

/// Outcome of [`power_iteration_rank1`].
#[derive(Debug, Clone)]
pub struct PowerIterResult {
    pub g_hat: SubspacePoint,
    pub h_hat: SubspacePoint,
    pub sigma1_hat: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Default iteration cap used when the caller has no better bound.
pub fn default_max_iters(m: usize) -> usize {
    10 * m + 100
}

/// Rank-1 SVD of `Ỹ` by alternating power iterations.
///
/// Starts from the column of `Ỹ` with the largest norm (lowest index on
/// ties), then alternates `ĥᵢ ∝ Ỹᴴĝᵢ₋₁`, `ĝᵢ ∝ Ỹĥᵢ` until both subspace
/// increments are at most `delta`. On the first pass only the `ĝ` increment
/// is tested: the constant start vector for `ĥ` never enters an update.
/// Hitting `max_iters` returns the last iterates with `converged = false`.
pub fn power_iteration_rank1(
    y_tilde: &ComplexMatrix,
    delta: f64,
    max_iters: usize,
) -> Result<PowerIterResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let (mut best, mut best_norm) = (0, 0.0);
    for (j, col) in y_tilde.column_iter().enumerate() {
        let n = col.norm_squared();
        if n > best_norm {
            best = j;
            best_norm = n;
        }
    }
    if !(best_norm > 0.0) {
        return Err(Error::ZeroMatrix);
    }

    let mut g = y_tilde.column(best).into_owned();
    g.unscale_mut(best_norm.sqrt());
    let mut h_prev: Option<ComplexVector> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut h;

    loop {
        iterations += 1;
        h = y_tilde.ad_mul(&g);
        let hn = h.norm();
        if !(hn > 0.0) {
            return Err(Error::ZeroMatrix);
        }
        h.unscale_mut(hn);

        let mut g_next = y_tilde * &h;
        let gn = g_next.norm();
        if !(gn > 0.0) {
            return Err(Error::ZeroMatrix);
        }
        g_next.unscale_mut(gn);

        let dg = unit_vector_angle(&g, &g_next);
        let dh = h_prev.as_ref().map_or(0.0, |hp| unit_vector_angle(hp, &h));
        g = g_next;

        if dg.max(dh) <= delta {
            converged = true;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        h_prev = Some(h);
    }

    let sigma1_hat = g.dotc(&(y_tilde * &h)).norm();
    Ok(PowerIterResult {
        g_hat: SubspacePoint { rep: g },
        h_hat: SubspacePoint { rep: h },
        sigma1_hat,
        iterations,
        converged,
    })
}

/// UL estimate from the raw `M × M` receive signal, skipping reverse
/// modulation. Valid only for `tau = M`, where `Y` and `YΦ` share their
/// left-singular vectors.
pub fn ml_ul_subspace_noreverse(y: &ComplexMatrix) -> Result<SubspacePoint> {
    require_square(y, "omitting pilot reverse modulation")?;
    ml_ul_subspace_svd(y)
}

/// DL estimate computed as `Φᴴṽ₁`, with `ṽ₁` the first right-singular vector
/// of the raw receive signal. Valid only for `tau = M`.
pub fn ml_dl_subspace_swapped(y: &ComplexMatrix, pilot: &ComplexMatrix) -> Result<SubspacePoint> {
    require_square(y, "swapping pilot reverse modulation")?;
    if pilot.nrows() != y.ncols() || pilot.ncols() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "pilot is {}x{}, receive signal is {}x{}",
            pilot.nrows(),
            pilot.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let v_raw = ml_dl_subspace_svd(y)?;
    SubspacePoint::from_vector(pilot.ad_mul(v_raw.rep()))
}

/// Spatial covariance of the UL perturbation columns, with cached Hermitian
/// square roots.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    r: ComplexMatrix,
    r_sqrt: ComplexMatrix,
    r_inv_sqrt: ComplexMatrix,
}

impl NoiseCovariance {
    pub fn new(r: ComplexMatrix) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let skew = (&r - r.adjoint()).norm();
        if skew > 1e-10 * r.norm() {
            return Err(Error::InvalidArgument("covariance is not Hermitian".into()));
        }
        let (vals, vecs) = hermitian_eigen(&r)?;
        let min = *vals.last().expect("nonempty");
        let max = vals[0];
        if !(min > 0.0) || min <= 1e-14 * max {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let apply = |f: &dyn Fn(f64) -> f64| {
            let mut scaled = vecs.clone();
            for (k, l) in vals.iter().enumerate() {
                scaled.column_mut(k).scale_mut(f(*l));
            }
            scaled * vecs.adjoint()
        };
        let r_sqrt = apply(&|l| l.sqrt());
        let r_inv_sqrt = apply(&|l| 1.0 / l.sqrt());
        Ok(Self {
            r,
            r_sqrt,
            r_inv_sqrt,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.r
    }

    pub fn sqrt(&self) -> &ComplexMatrix {
        &self.r_sqrt
    }

    pub fn inv_sqrt(&self) -> &ComplexMatrix {
        &self.r_inv_sqrt
    }
}

/// UL estimate under spatially correlated perturbations with known
/// covariance `R`: whiten with `R^{-1/2}`, take the first left-singular
/// vector `u₁`, and map back with `R^{1/2}u₁`. Requires `tau = M`.
pub fn ml_ul_subspace_whitened(
    y_tilde: &ComplexMatrix,
    noise: &NoiseCovariance,
) -> Result<SubspacePoint> {
    require_square(y_tilde, "the whitened estimator")?;
    if noise.r.nrows() != y_tilde.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {0}x{0}, observation has {1} rows",
            noise.r.nrows(),
            y_tilde.nrows()
        )));
    }
    let u1 = ml_ul_subspace_svd(&(noise.inv_sqrt() * y_tilde))?;
    SubspacePoint::from_vector(noise.sqrt() * u1.rep())
}

/// Complex Bingham prior `∝ etr{κ gᴴΠΠᴴg}` on the UL channel direction.
#[derive(Debug, Clone)]
pub struct BinghamPrior {
    kappa: f64,
    basis: ComplexMatrix,
}

impl BinghamPrior {
    /// `basis` must have orthonormal columns; `kappa >= 0`.
    pub fn new(kappa: f64, basis: ComplexMatrix) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "concentration must be finite and >= 0, got {kappa}"
            )));
        }
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "prior basis must be M x p with 1 <= p <= M, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let defect = orthonormality_defect(&basis);
        if defect > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "prior basis columns are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self { kappa, basis })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }
}

/// Minimum mean-square-distance UL estimate under a Bingham prior: the
/// dominant eigenvector of `κΠΠᴴ + YYᴴ`. Requires `tau = M`.
pub fn mmsd_ul_subspace(y: &ComplexMatrix, prior: &BinghamPrior) -> Result<SubspacePoint> {
    require_square(y, "the MMSD estimator")?;
    if prior.basis.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "prior lives in C^{}, observation has {} rows",
            prior.basis.nrows(),
            y.nrows()
        )));
    }
    let a = (&prior.basis * prior.basis.adjoint()).scale(prior.kappa) + y * y.adjoint();
    SubspacePoint::from_vector(dominant_eigvec_psd(&a)?)
}
