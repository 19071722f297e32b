//! Dense complex linear algebra and seeded random sampling.
//!
//! Matrices and vectors are nalgebra's dynamically sized types over
//! `Complex<f64>`. The SVD and Hermitian eigendecomposition are delegated to
//! faer, pinned to one thread so results never depend on scheduling; QR for
//! pilot sampling stays on nalgebra. The rest of the crate only sees the
//! conventions fixed here: singular values sorted descending and eigenvector
//! phases pinned.

use std::sync::Once;

use faer::{Mat, MatRef, Par, Side};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Relative gap below which the two leading eigenvalues count as equal.
pub const DEGENERACY_RTOL: f64 = 1e-12;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha12 with the stream id mapped onto ChaCha's 64-bit stream
/// selector, so every trial of a Monte Carlo run owns an independent,
/// non-overlapping sequence regardless of the order trials are executed in.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One circularly-symmetric complex Gaussian draw with `E|z|² = variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> C64 {
        let s = (0.5 * variance).sqrt();
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        C64::new(s * re, s * im)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// i.i.d. CN(0, `variance_per_entry`) vector of length `len`.
pub fn sample_complex_gaussian_vector(
    rng: &mut RngStream,
    len: usize,
    variance_per_entry: f64,
) -> ComplexVector {
    assert!(variance_per_entry >= 0.0, "variance must be nonnegative");
    DVector::from_iterator(len, (0..len).map(|_| rng.complex_gaussian(variance_per_entry)))
}

/// i.i.d. CN(0, `variance_per_entry`) matrix, filled column by column.
pub fn sample_complex_gaussian_matrix(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    variance_per_entry: f64,
) -> ComplexMatrix {
    assert!(variance_per_entry >= 0.0, "variance must be nonnegative");
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.complex_gaussian(variance_per_entry)),
    )
}

/// Haar-distributed `tau × m` matrix with orthonormal columns.
///
/// Orthonormalizes a complex Gaussian matrix and rotates each column of `Q`
/// by the phase of the matching diagonal entry of `R`, which makes the
/// factorization unique and the result exactly Haar on the Stiefel manifold.
pub fn sample_unitary_pilot(rng: &mut RngStream, tau: usize, m: usize) -> Result<ComplexMatrix> {
    if m == 0 || tau < m {
        return Err(Error::InvalidArgument(format!(
            "pilot length tau ({tau}) must be >= number of columns M ({m}) >= 1"
        )));
    }
    let gaussian = sample_complex_gaussian_matrix(rng, tau, m, 1.0);
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        let d = r[(j, j)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d / mag;
            for v in q.column_mut(j).iter_mut() {
                *v *= phase;
            }
        }
    }
    Ok(q)
}

/// Thin singular value decomposition `A = U diag(sigma) V^H`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    /// Singular values, descending.
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    /// Fails with [`Error::DegenerateSpectrum`] when σ₁² and σ₂² coincide
    /// within [`DEGENERACY_RTOL`], or when the matrix is zero.
    pub fn check_leading_gap(&self) -> Result<()> {
        let s1 = self.sigma.first().copied().unwrap_or(0.0);
        let s2 = self.sigma.get(1).copied().unwrap_or(0.0);
        let (l1, l2) = (s1 * s1, s2 * s2);
        if l1 == 0.0 || (self.sigma.len() > 1 && l1 - l2 <= DEGENERACY_RTOL * l1) {
            return Err(Error::DegenerateSpectrum {
                lambda1: l1,
                lambda2: l2,
            });
        }
        Ok(())
    }

    pub fn left_vector(&self, k: usize) -> ComplexVector {
        self.u.column(k).into_owned()
    }

    pub fn right_vector(&self, k: usize) -> ComplexVector {
        self.v.column(k).into_owned()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (k, s) in self.sigma.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

/// Decompositions run single-threaded; parallelism lives at the trial level.
fn sequential_backend() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

fn to_backend(a: &ComplexMatrix) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_backend(a: MatRef<'_, C64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD with singular values sorted descending.
pub fn full_svd(a: &ComplexMatrix) -> Result<Svd> {
    sequential_backend();
    if !all_finite(a) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let svd = to_backend(a)
        .thin_svd()
        .map_err(|_| Error::NoConvergence("singular value decomposition"))?;
    let sigma = svd.S().column_vector().iter().map(|s| s.re).collect();
    Ok(Svd {
        u: from_backend(svd.U()),
        sigma,
        v: from_backend(svd.V()),
    })
}

/// Rotates `v` so its first entry of largest magnitude is real and positive.
pub fn fix_phase(v: &mut ComplexVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag {
            best_mag = mag;
            best = i;
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / best_mag;
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Hermitian part `(A + A^H) / 2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Eigendecomposition of the Hermitian part of `a`, eigenvalues descending.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    sequential_backend();
    if !all_finite(a) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let eig = to_backend(&hermitian_part(a))
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NoConvergence("Hermitian eigendecomposition"))?;
    let n = a.nrows();
    let vals = eig.S().column_vector().iter().rev().map(|l| l.re).collect();
    let u = eig.U();
    let vecs = ComplexMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((vals, vecs))
}

/// Largest eigenvalue of the Hermitian part of `a`.
pub fn lambda_max_hermitian(a: &ComplexMatrix) -> Result<f64> {
    sequential_backend();
    if !all_finite(a) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let vals = to_backend(&hermitian_part(a))
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::NoConvergence("Hermitian eigenvalues"))?;
    Ok(vals.last().copied().unwrap_or(f64::NAN))
}

/// Unit eigenvector of the largest eigenvalue of a Hermitian PSD matrix.
pub fn dominant_eigvec_psd(a: &ComplexMatrix) -> Result<ComplexVector> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let (vals, vecs) = hermitian_eigen(a)?;
    let l1 = vals[0];
    let l2 = vals.get(1).copied().unwrap_or(f64::NEG_INFINITY);
    if l1 <= 0.0 || l1 - l2 <= DEGENERACY_RTOL * l1.abs() {
        return Err(Error::DegenerateSpectrum {
            lambda1: l1,
            lambda2: l2,
        });
    }
    let mut v = vecs.column(0).into_owned();
    v.unscale_mut(v.norm());
    fix_phase(&mut v);
    Ok(v)
}

/// Largest absolute entry of `A^H A − I`.
pub fn orthonormality_defect(a: &ComplexMatrix) -> f64 {
    let gram = a.adjoint() * a;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn all_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(rng: &mut RngStream, r: usize, c: usize) -> ComplexMatrix {
        sample_complex_gaussian_matrix(rng, r, c, 1.0)
    }

    #[test]
    fn zero_variance_gives_zero_vector() {
        let mut rng = RngStream::new(1, 0);
        let v = sample_complex_gaussian_vector(&mut rng, 3, 0.0);
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn gaussian_second_moment() {
        // E|z|² = 2, Var|z|² = 4 for CN(0, 2); 3 SE at 1e5 draws = 0.019.
        let mut rng = RngStream::new(7, 3);
        let v = sample_complex_gaussian_vector(&mut rng, 100_000, 2.0);
        let m2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len() as f64;
        assert!((1.98..=2.02).contains(&m2), "second moment {m2}");
    }

    #[test]
    fn gaussian_mean_and_component_variance() {
        let mut rng = RngStream::new(8, 0);
        let v = sample_complex_gaussian_vector(&mut rng, 100_000, 1.0);
        let n = v.len() as f64;
        let mean = v.iter().sum::<C64>() / n;
        assert!(mean.norm() < 0.02, "mean {mean}");
        let var_re = v.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        let var_im = v.iter().map(|z| z.im * z.im).sum::<f64>() / n;
        // each component N(0, 1/2); SE of the variance estimate ≈ 0.5·√(2/n)
        assert!((var_re - 0.5).abs() < 3.0 * 0.5 * (2.0 / n).sqrt() + 1e-3);
        assert!((var_im - 0.5).abs() < 3.0 * 0.5 * (2.0 / n).sqrt() + 1e-3);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, id| {
            let mut r = RngStream::new(seed, id);
            sample_complex_gaussian_vector(&mut r, 16, 1.0)
        };
        let a = draw(42, 5);
        let b = draw(42, 5);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits()
            && x.im.to_bits() == y.im.to_bits()));
        assert_ne!(a, draw(42, 6));
        assert_ne!(a, draw(43, 5));
    }

    #[test]
    fn pilot_is_unitary() {
        let mut rng = RngStream::new(1, 1);
        let phi = sample_unitary_pilot(&mut rng, 4, 4).unwrap();
        assert!(orthonormality_defect(&phi) <= 1e-12);

        let phi = sample_unitary_pilot(&mut rng, 8, 4).unwrap();
        assert_eq!(phi.shape(), (8, 4));
        for j in 0..4 {
            assert!((phi.column(j).norm() - 1.0).abs() <= 1e-12);
        }
        assert!(orthonormality_defect(&phi) <= 1e-12);
    }

    #[test]
    fn pilot_rejects_short_tau() {
        let mut rng = RngStream::new(1, 1);
        assert!(matches!(
            sample_unitary_pilot(&mut rng, 2, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn haar_pilot_has_zero_mean() {
        let mut rng = RngStream::new(11, 0);
        let mut acc = ComplexMatrix::zeros(4, 4);
        let n = 10_000;
        for _ in 0..n {
            acc += sample_unitary_pilot(&mut rng, 4, 4).unwrap();
        }
        acc.unscale_mut(n as f64);
        assert!(acc.iter().all(|z| z.norm() < 0.03), "{acc}");
    }

    #[test]
    fn haar_phase_fix_removes_diagonal_bias() {
        // Without the phase fix the diagonal of a QR-derived Q has a positive
        // real mean; with it the diagonal is zero-mean like any other entry.
        let mut rng = RngStream::new(12, 0);
        let n = 10_000;
        let mut diag_mean = C64::new(0.0, 0.0);
        for _ in 0..n {
            let q = sample_unitary_pilot(&mut rng, 3, 3).unwrap();
            diag_mean += q[(0, 0)];
        }
        diag_mean /= n as f64;
        assert!(diag_mean.norm() < 0.03, "{diag_mean}");
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let id = ComplexMatrix::identity(3, 3);
        let s = full_svd(&id).unwrap();
        for v in &s.sigma {
            assert!((v - 1.0).abs() < 1e-14);
        }

        let mut a = ComplexVector::zeros(4);
        a[0] = C64::new(2.0, 0.0);
        let mut b = ComplexVector::zeros(4);
        b[1] = C64::new(0.0, 3.0);
        let s = full_svd(&(&a * b.adjoint())).unwrap();
        assert!((s.sigma[0] - 6.0).abs() < 1e-13);
        assert!(s.sigma[1..].iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = RngStream::new(3, 3);
        for (r, c) in [(8, 8), (5, 9), (9, 5), (64, 64), (256, 256)] {
            let a = gaussian(&mut rng, r, c);
            let s = full_svd(&a).unwrap();
            let resid = (&a - s.reconstruct()).norm() / a.norm();
            assert!(resid < 1e-10, "{r}x{c}: {resid}");
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            assert!(orthonormality_defect(&s.u) < 1e-10);
            assert!(orthonormality_defect(&s.v) < 1e-10);
        }
    }

    #[test]
    fn dominant_eigvec_of_diagonal() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 0)] = C64::new(3.0, 0.0);
        a[(1, 1)] = C64::new(1.0, 0.0);
        let v = dominant_eigvec_psd(&a).unwrap();
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(v[1].norm() < 1e-14);
    }

    #[test]
    fn dominant_eigvec_of_spiked_identity() {
        let mut rng = RngStream::new(4, 0);
        let mut phi = sample_complex_gaussian_vector(&mut rng, 5, 1.0);
        phi.unscale_mut(phi.norm());
        let r = &phi * phi.adjoint() + ComplexMatrix::identity(5, 5);
        let v = dominant_eigvec_psd(&r).unwrap();
        let overlap = phi.dotc(&v).norm();
        assert!((1.0 - overlap).abs() < 1e-13);
    }

    #[test]
    fn dominant_eigvec_matches_svd_of_square_root() {
        let mut rng = RngStream::new(5, 0);
        for _ in 0..20 {
            let b = gaussian(&mut rng, 6, 6);
            let a = &b * b.adjoint();
            let (vals, vecs) = hermitian_eigen(&a).unwrap();
            // Hermitian square root of A
            let mut scaled = vecs.clone();
            for (k, l) in vals.iter().enumerate() {
                scaled.column_mut(k).scale_mut(l.max(0.0).sqrt());
            }
            let root = scaled * vecs.adjoint();
            let u1 = full_svd(&root).unwrap().left_vector(0);
            let v = dominant_eigvec_psd(&a).unwrap();
            let angle = crate::subspace::unit_vector_angle(&v, &u1);
            assert!(angle <= 1e-10, "{angle}");
        }
    }

    #[test]
    fn dominant_eigvec_rejects_degenerate_spectrum() {
        let id = ComplexMatrix::identity(3, 3);
        assert!(matches!(
            dominant_eigvec_psd(&id),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn dominant_eigvec_symmetrizes_input() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 0)] = C64::new(2.0, 0.0);
        a[(1, 1)] = C64::new(1.0, 0.0);
        a[(0, 1)] = C64::new(1e-17, 0.0);
        let v = dominant_eigvec_psd(&a).unwrap();
        assert!((v[0].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phase_convention_is_deterministic() {
        let mut v = ComplexVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(0.0, -2.0)]);
        fix_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
    }
}
