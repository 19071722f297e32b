//! Estimation of the UL channel gain `ζ = ‖g‖²` from the reverse-modulated
//! observation.
//!
//! With `sₘ` the squared singular values of `Ỹ` and `q = ζQ̃/(1+ζQ̃)`, the
//! marginal log-likelihood is, up to a constant,
//!
//! ```text
//! L(ζ) = −M·ln(1 + ζQ̃) + ln exp[q·s₁, …, q·s_M]
//! ```
//!
//! where `exp[x₁, …, x_M]` is the divided difference of the exponential
//! function. It is evaluated first as a signed log-sum-exp over the
//! partial-fraction terms, and when the accompanying rounding bound says the
//! sum cancelled too much, by scaling and squaring of the divided-difference
//! table, which involves positive terms only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{full_svd, lambda_max_hermitian, ComplexMatrix};

const EPS: f64 = f64::EPSILON;

/// Error of the fast route, relative to the magnitude of its logarithmic
/// result, above which the fallback takes over.
const FAST_ROUTE_TOL: f64 = 1e-10;

/// Relative bound above which a likelihood value counts as degraded
/// (fewer than about three correct digits).
pub const DEGRADATION_TOL: f64 = 1e-3;

/// Consecutive squared singular values closer than this (relative to the
/// largest) skip the partial-fraction route.
const MIN_RELATIVE_GAP: f64 = 1e-9;

/// Terms of the Taylor series used for the base divided-difference table.
const TAYLOR_TERMS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GainMethod {
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "SCM")]
    Scm,
}

/// Which evaluation route produced a likelihood value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodRoute {
    PartialFractions,
    ScalingSquaring,
    ZeroGain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// Estimated relative error of `exp(value)`, i.e. absolute error of `value`.
    pub rel_error_bound: f64,
    pub route: LikelihoodRoute,
}

/// Squared singular values of the observation and the effective repeater
/// power, with the pairwise log-gaps precomputed.
#[derive(Debug, Clone)]
pub struct LogLikelihoodContext {
    sigma_sq: Vec<f64>,
    q_eff: f64,
    /// `Σ_{n≠m} ln|sₘ − sₙ|`; empty when two values are confluent.
    ln_gap_prod: Vec<f64>,
    /// `Σ_{n≠m} |ln|sₘ − sₙ||`, for the rounding bound.
    ln_gap_abs: Vec<f64>,
    ln_factorial: Vec<f64>,
}

impl LogLikelihoodContext {
    /// `sigma_sq` must be nonincreasing, nonnegative, finite, of length ≥ 2.
    pub fn new(sigma_sq: Vec<f64>, q_eff: f64) -> Result<Self> {
        if !(q_eff > 0.0 && q_eff.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "effective repeater power must be > 0, got {q_eff}"
            )));
        }
        let m = sigma_sq.len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 singular values, got {m}"
            )));
        }
        if sigma_sq.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument(
                "squared singular values must be finite and >= 0".into(),
            ));
        }
        if sigma_sq.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "squared singular values must be sorted in descending order".into(),
            ));
        }
        if sigma_sq[0] == 0.0 {
            return Err(Error::ZeroMatrix);
        }

        let confluent = sigma_sq
            .windows(2)
            .any(|w| w[0] - w[1] <= MIN_RELATIVE_GAP * sigma_sq[0]);
        let (mut ln_gap_prod, mut ln_gap_abs) = (Vec::new(), Vec::new());
        if !confluent {
            for (i, si) in sigma_sq.iter().enumerate() {
                let (mut p, mut a) = (0.0, 0.0);
                for (j, sj) in sigma_sq.iter().enumerate() {
                    if i != j {
                        let l = (si - sj).abs().ln();
                        p += l;
                        a += l.abs();
                    }
                }
                ln_gap_prod.push(p);
                ln_gap_abs.push(a);
            }
        }
        let mut ln_factorial = vec![0.0; m];
        for k in 1..m {
            ln_factorial[k] = ln_factorial[k - 1] + (k as f64).ln();
        }
        Ok(Self {
            sigma_sq,
            q_eff,
            ln_gap_prod,
            ln_gap_abs,
            ln_factorial,
        })
    }

    /// Context from the singular values of `Ỹ`.
    pub fn from_observation(y_tilde: &ComplexMatrix, q_eff: f64) -> Result<Self> {
        check_observation(y_tilde)?;
        let s = full_svd(y_tilde)?.sigma.iter().map(|s| s * s).collect();
        Self::new(s, q_eff)
    }

    pub fn antennas(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn q_eff(&self) -> f64 {
        self.q_eff
    }

    /// Log-likelihood with its rounding bound, without judging the bound.
    pub fn evaluate(&self, zeta: f64) -> Result<LogLikelihood> {
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gain must be finite and >= 0, got {zeta}"
            )));
        }
        let m = self.antennas();
        let zq = zeta * self.q_eff;
        let prefactor = -(m as f64) * zq.ln_1p();
        let q = zq / (1.0 + zq);
        if q == 0.0 {
            return Ok(LogLikelihood {
                value: -self.ln_factorial[m - 1],
                rel_error_bound: m as f64 * EPS,
                route: LikelihoodRoute::ZeroGain,
            });
        }

        if !self.ln_gap_prod.is_empty() {
            if let Some((ln_dd, bound)) = self.partial_fractions(q) {
                if bound <= FAST_ROUTE_TOL * ln_dd.abs().max(1.0) {
                    return Ok(LogLikelihood {
                        value: prefactor + ln_dd,
                        rel_error_bound: bound + EPS * prefactor.abs(),
                        route: LikelihoodRoute::PartialFractions,
                    });
                }
            }
        }

        let points: Vec<f64> = self.sigma_sq.iter().map(|s| q * s).collect();
        let (ln_dd, bound) = ln_exp_divided_difference(&points);
        Ok(LogLikelihood {
            value: prefactor + ln_dd,
            rel_error_bound: bound + EPS * prefactor.abs(),
            route: LikelihoodRoute::ScalingSquaring,
        })
    }

    /// Signed log-sum-exp of `Σₘ e^{q sₘ} / Πₙ q(sₘ − sₙ)`; `None` when the
    /// sum comes out nonpositive.
    fn partial_fractions(&self, q: f64) -> Option<(f64, f64)> {
        let m = self.antennas();
        let exps: Vec<f64> = self
            .sigma_sq
            .iter()
            .zip(&self.ln_gap_prod)
            .map(|(s, p)| q * s - p)
            .collect();
        let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let (mut sum, mut comp, mut abs_sum, mut err) = (0.0f64, 0.0f64, 0.0, 0.0);
        for (k, e) in exps.iter().enumerate() {
            let mag = (e - top).exp();
            let t = if k % 2 == 0 { mag } else { -mag };
            // Neumaier summation
            let s = sum + t;
            comp += if sum.abs() >= t.abs() {
                (sum - s) + t
            } else {
                (t - s) + sum
            };
            sum = s;
            abs_sum += mag;
            let exponent_err =
                3.0 * m as f64 + 2.0 * (q * self.sigma_sq[k]).abs() + self.ln_gap_abs[k] + e.abs() + top.abs();
            err += mag * exponent_err;
        }
        let total = sum + comp;
        if !(total > 0.0) {
            return None;
        }
        let bound = EPS * (err + 2.0 * abs_sum) / total;
        let ln_q_term = (m - 1) as f64 * q.ln();
        Some((
            top + total.ln() - ln_q_term,
            bound + EPS * (ln_q_term.abs() + top.abs()),
        ))
    }
}

/// `ln exp[x₁, …, xₙ]` for arbitrary (possibly repeated) real points, with a
/// bound on its absolute error.
///
/// The divided differences `exp[xᵢ, …, xⱼ]` form the upper triangle of the
/// exponential of the bidiagonal matrix `diag(x) + superdiag(1)`. The points
/// are scaled by `2⁻ᵏ` until their spread is at most 1, the table is built by
/// a Taylor series with nonnegative terms, and `k` squarings undo the scaling:
///
/// ```text
/// exp[xᵢ..xⱼ] = 2^{−(j−i)} Σ_{l=i..j} exp[xᵢ/2..x_l/2] · exp[x_l/2..xⱼ/2]
/// ```
///
/// Every quantity is positive, so working with logarithms loses nothing to
/// cancellation.
pub fn ln_exp_divided_difference(points: &[f64]) -> (f64, f64) {
    let n = points.len();
    assert!(n >= 1, "divided difference needs at least one point");
    let mut x = points.to_vec();
    x.sort_by(|a, b| b.total_cmp(a));
    let top = x[0];
    for v in x.iter_mut() {
        *v -= top;
    }
    let spread = -x[n - 1];
    let k = if spread > 1.0 {
        spread.log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(k as i32);
    let lo = x[n - 1] * scale;
    let z: Vec<f64> = x.iter().map(|v| v * scale - lo).collect();

    let mut ln_fact = vec![0.0; n];
    for d in 1..n {
        ln_fact[d] = ln_fact[d - 1] + (d as f64).ln();
    }

    // ln exp[zᵢ..zⱼ] + lo, stored row-major in the upper triangle.
    let mut table = vec![f64::NEG_INFINITY; n * n];
    let mut h = [0.0f64; TAYLOR_TERMS];
    for i in 0..n {
        h.fill(0.0);
        h[0] = 1.0;
        for j in i..n {
            // complete homogeneous polynomials hₜ(zᵢ..zⱼ)
            for t in 1..TAYLOR_TERMS {
                h[t] += z[j] * h[t - 1];
            }
            let d = j - i;
            let (mut sum, mut coeff) = (0.0, 1.0);
            for (t, ht) in h.iter().enumerate() {
                if t > 0 {
                    coeff /= (d + t) as f64;
                }
                sum += ht * coeff;
            }
            table[i * n + j] = lo + sum.ln() - ln_fact[d];
        }
    }

    let mut next = vec![f64::NEG_INFINITY; n * n];
    let ln2 = std::f64::consts::LN_2;
    for _ in 0..k {
        for i in 0..n {
            for j in i..n {
                let mut peak = f64::NEG_INFINITY;
                for l in i..=j {
                    peak = peak.max(table[i * n + l] + table[l * n + j]);
                }
                let mut acc = 0.0;
                for l in i..=j {
                    acc += (table[i * n + l] + table[l * n + j] - peak).exp();
                }
                next[i * n + j] = peak + acc.ln() - (j - i) as f64 * ln2;
            }
        }
        std::mem::swap(&mut table, &mut next);
    }

    let bound = 4.0 * EPS * ((n * (k as usize + 1)) as f64 + 30.0) + EPS * top.abs();
    (top + table[n - 1], bound)
}

/// Log-likelihood of the gain. Fails with [`Error::NumericalDegradation`]
/// when the rounding bound exceeds [`DEGRADATION_TOL`].
pub fn log_likelihood_zeta(ctx: &LogLikelihoodContext, zeta: f64) -> Result<f64> {
    let ll = ctx.evaluate(zeta)?;
    if !(ll.value.is_finite() && ll.rel_error_bound <= DEGRADATION_TOL) {
        return Err(Error::NumericalDegradation {
            rel_error_bound: ll.rel_error_bound,
        });
    }
    Ok(ll.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Stop once the bracket is at most `rel_tol·(1 + ζ̂)` wide.
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_evals: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainEstimate {
    pub zeta_hat: f64,
    /// Estimate before clamping at zero; equals `zeta_hat` for ML.
    pub zeta_unclamped: f64,
    pub method: GainMethod,
    /// Some likelihood value used by the search had degraded precision.
    pub overflow_flag: bool,
    pub clamped: bool,
    pub search_evals: usize,
}

fn check_observation(y_tilde: &ComplexMatrix) -> Result<()> {
    if y_tilde.nrows() < 2 || y_tilde.ncols() < 1 {
        return Err(Error::DimensionMismatch(format!(
            "observation must have at least 2 rows, got {}x{}",
            y_tilde.nrows(),
            y_tilde.ncols()
        )));
    }
    Ok(())
}

fn check_power(q_eff: f64) -> Result<()> {
    if !(q_eff > 0.0 && q_eff.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "effective repeater power must be > 0, got {q_eff}"
        )));
    }
    Ok(())
}

/// ML gain estimate by golden-section search of the marginal likelihood.
pub fn ml_gain(y_tilde: &ComplexMatrix, q_eff: f64, search: &SearchOptions) -> Result<GainEstimate> {
    check_power(q_eff)?;
    let ctx = LogLikelihoodContext::from_observation(y_tilde, q_eff)?;
    ml_gain_from_context(&ctx, search)
}

/// Golden-section maximization over `[0, ζ_hi]`, with `ζ_hi` doubled while
/// the likelihood still increases at the upper edge.
pub fn ml_gain_from_context(ctx: &LogLikelihoodContext, search: &SearchOptions) -> Result<GainEstimate> {
    if !(search.rel_tol > 0.0) || search.max_evals < 4 {
        return Err(Error::InvalidArgument(
            "search needs rel_tol > 0 and at least 4 evaluations".into(),
        ));
    }
    let m = ctx.antennas() as f64;
    let q_eff = ctx.q_eff();
    let mut probe = Probe {
        ctx,
        evals: 0,
        degraded: false,
        best: (f64::NEG_INFINITY, 0.0),
    };
    let f = |probe: &mut Probe, zeta: f64| probe.eval(zeta);
    // The likelihood can have a second mode at the boundary, which the
    // bracketing below never samples.
    f(&mut probe, 0.0)?;

    let mut hi = (4.0 * (ctx.sigma_sq()[0] / m - 1.0) / q_eff).max(1.0 / q_eff);
    let mut f_hi = f(&mut probe, hi)?;
    loop {
        let f_next = f(&mut probe, 2.0 * hi)?;
        if !(f_next > f_hi) || probe.evals >= search.max_evals / 2 {
            break;
        }
        hi *= 2.0;
        f_hi = f_next;
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(&mut probe, c)?;
    let mut fd = f(&mut probe, d)?;
    while probe.evals < search.max_evals {
        let centre = 0.5 * (a + b);
        if b - a <= search.rel_tol * (1.0 + centre) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(&mut probe, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(&mut probe, d)?;
        }
    }

    let zeta_hat = probe.best.1;
    Ok(GainEstimate {
        zeta_hat,
        zeta_unclamped: zeta_hat,
        method: GainMethod::Ml,
        overflow_flag: probe.degraded,
        clamped: false,
        search_evals: probe.evals,
    })
}

/// Likelihood evaluations seen by the search, with the best point so far.
struct Probe<'a> {
    ctx: &'a LogLikelihoodContext,
    evals: usize,
    degraded: bool,
    best: (f64, f64),
}

impl Probe<'_> {
    fn eval(&mut self, zeta: f64) -> Result<f64> {
        let ll = self.ctx.evaluate(zeta)?;
        self.evals += 1;
        self.degraded |= !(ll.rel_error_bound <= DEGRADATION_TOL);
        if ll.value > self.best.0 {
            self.best = (ll.value, zeta);
        }
        Ok(ll.value)
    }
}

/// `(σ₁² − T)/(Q̃T)` from the largest singular value of an `M × T`
/// observation, clamped at zero.
pub fn scm_gain_from_sigma1(sigma1: f64, columns: usize, q_eff: f64) -> Result<GainEstimate> {
    check_power(q_eff)?;
    if columns == 0 {
        return Err(Error::InvalidArgument("observation has no columns".into()));
    }
    let t = columns as f64;
    let raw = (sigma1 * sigma1 - t) / (q_eff * t);
    Ok(GainEstimate {
        zeta_hat: raw.max(0.0),
        zeta_unclamped: raw,
        method: GainMethod::Scm,
        overflow_flag: false,
        clamped: raw < 0.0,
        search_evals: 0,
    })
}

/// Sample-covariance estimate: `λ_max(R̂) = σ₁²/T`, `ζ̂ = (λ_max − 1)/Q̃`.
pub fn scm_gain(y_tilde: &ComplexMatrix, q_eff: f64) -> Result<GainEstimate> {
    check_observation(y_tilde)?;
    let sigma1 = full_svd(y_tilde)?.sigma[0];
    scm_gain_from_sigma1(sigma1, y_tilde.ncols(), q_eff)
}

/// Maximizer of the likelihood with the channel direction fixed at its ML
/// estimate: with `λ = λ_max(ỸỸᴴ)` the profile `−T ln(1+ζQ̃) + λζQ̃/(1+ζQ̃)`
/// peaks at `(λ − T)/(Q̃T)`. Returned unclamped; computed through a
/// Hermitian eigensolver rather than the SVD used by [`scm_gain`].
pub fn ml_gain_given_subspace(y_tilde: &ComplexMatrix, q_eff: f64) -> Result<GainEstimate> {
    check_observation(y_tilde)?;
    check_power(q_eff)?;
    let t = y_tilde.ncols() as f64;
    let lambda = lambda_max_hermitian(&(y_tilde * y_tilde.adjoint()))?;
    let raw = (lambda - t) / (q_eff * t);
    Ok(GainEstimate {
        zeta_hat: raw,
        zeta_unclamped: raw,
        method: GainMethod::Ml,
        overflow_flag: false,
        clamped: false,
        search_evals: 0,
    })
}
