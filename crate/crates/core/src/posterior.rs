//! Gaussian approximations to the latent posterior, at the observed points
//! and at new ones, and draws from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::adjoint::{compute_a, compute_r, AdjointError};
use crate::linalg::{cholesky, cholesky_semidefinite, symmetric_eigenvalues, DenseMatrix, LinalgError};
use crate::newton::{BFactorization, LaplaceFit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("predictive covariance is ill-conditioned: {0}")]
    Conditioning(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: Vec<f64>,
    pub cov: DenseMatrix,
}

const PSD_TOL: f64 = 1e-10;
const JITTER_STEPS: usize = 8;

fn check_psd(cov: &DenseMatrix) -> Result<(), PosteriorError> {
    if cov.rows() == 0 {
        return Ok(());
    }
    let ev = symmetric_eigenvalues(cov)?;
    let scale = cov.max_abs().max(1.0);
    if ev[0] < -PSD_TOL * scale {
        return Err(PosteriorError::Conditioning(format!("smallest eigenvalue {:e}", ev[0])));
    }
    Ok(())
}

/// Moments of the latent process at new points given cross-covariance
/// K* (n* × n) and prior covariance K** (n* × n*).
pub fn predictive(
    fit: &LaplaceFit,
    k_star: &DenseMatrix,
    k_star_star: &DenseMatrix,
) -> Result<PredictiveGaussian, PosteriorError> {
    let n = fit.n();
    let ns = k_star.rows();
    if k_star.cols() != n || k_star_star.rows() != ns || k_star_star.cols() != ns {
        return Err(PosteriorError::Dimension(format!(
            "K* is {}x{}, K** is {}x{}, latent dimension {n}",
            k_star.rows(),
            k_star.cols(),
            k_star_star.rows(),
            k_star_star.cols()
        )));
    }
    let mean = k_star.matvec(&fit.grad_loglik);
    let reduction = match &fit.factorization {
        BFactorization::B1 { sqrt_w, chol } => {
            let v = chol.solve_lower_matrix(&sqrt_w.t_mul_dense(&k_star.transpose()));
            v.t_matmul(&v)
        }
        BFactorization::B2 { .. } => {
            let r = compute_r(fit)?;
            k_star.matmul(&r).matmul(&k_star.transpose())
        }
        BFactorization::B3 { w, lu } => {
            let c = lu.solve_matrix(&w.dense_mul(&fit.k));
            let inner = &w.to_dense() - &w.mul_dense(&c);
            k_star.matmul(&inner).matmul(&k_star.transpose())
        }
    };
    let mut cov = k_star_star - &reduction;
    cov.symmetrize();
    check_psd(&cov)?;
    Ok(PredictiveGaussian { mean, cov })
}

/// Approximate conditional N(θ̂, (K⁻¹ + W)⁻¹) at the observed points.
pub fn conditional_latent(fit: &LaplaceFit) -> Result<PredictiveGaussian, PosteriorError> {
    Ok(PredictiveGaussian {
        mean: fit.theta.clone(),
        cov: compute_a(fit)?,
    })
}

/// Lower factor F with FFᵀ ≈ Σ, escalating a diagonal jitter if needed.
fn sampling_factor(cov: &DenseMatrix) -> Result<DenseMatrix, PosteriorError> {
    if let Ok(l) = cholesky_semidefinite(cov) {
        return Ok(l);
    }
    let n = cov.rows();
    let base = 1e-12 * cov.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut jitter = base;
    for _ in 0..=JITTER_STEPS {
        let mut c = cov.clone();
        c.add_diagonal(jitter);
        if let Ok(f) = cholesky(&c) {
            return Ok(f.l().clone());
        }
        jitter *= 2.0;
    }
    Err(PosteriorError::Conditioning(format!(
        "no Cholesky factor after jitter up to {:e}",
        jitter / 2.0
    )))
}

/// `count` draws from `g` using a generator seeded with `seed`.
pub fn sample(g: &PredictiveGaussian, seed: u64, count: usize) -> Result<Vec<Vec<f64>>, PosteriorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(g, &mut rng, count)
}

/// Like [`sample`] with a caller-owned generator.
pub fn sample_with<R: rand::Rng>(
    g: &PredictiveGaussian,
    rng: &mut R,
    count: usize,
) -> Result<Vec<Vec<f64>>, PosteriorError> {
    let n = g.mean.len();
    if g.cov.rows() != n || g.cov.cols() != n {
        return Err(PosteriorError::Dimension("mean and covariance disagree".into()));
    }
    let f = sampling_factor(&g.cov)?;
    let mut out = Vec::with_capacity(count);
    let mut z = vec![0.0; n];
    for _ in 0..count {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let fz = f.matvec(&z);
        out.push(g.mean.iter().zip(&fz).map(|(m, d)| m + d).collect());
    }
    Ok(out)
}
