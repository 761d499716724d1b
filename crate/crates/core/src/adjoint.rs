//! Gradient of the approximate log marginal likelihood with respect to the
//! covariance parameters φ and the likelihood parameters η.
//!
//! Everything is built from the factorization saved by the final Newton
//! iteration. The likelihood is differentiated in O(m) sweeps regardless of
//! n, dim φ and dim η, and K(φ) takes a single reverse sweep contracted with
//! the adjoint Ω.

use thiserror::Error;

use crate::autodiff::{
    gradient, hessian_contraction_gradient, hessian_vector, rev_sweep, strided_tangent, AdError, SweepCounter,
};
use crate::linalg::{BlockDiagonal, DenseMatrix, LinalgError};
use crate::models::{joint_point, CovarianceMap, CovarianceModel, Joint, LikelihoodModel, ModelError};
use crate::newton::{laplace_fit, BFactorization, BStrategy, LaplaceFit, NewtonError, NewtonSettings};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdjointError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdjointOptions {
    /// Form only the diagonal blocks of A for the trace term.
    pub block_only_a: bool,
}

/// Gradient together with the intermediate quantities of its computation.
#[derive(Clone, Debug)]
pub struct MarginalGradient {
    pub grad_phi: Vec<f64>,
    pub grad_eta: Vec<f64>,
    /// ∇θ̂ of −½ log|B| at fixed K.
    pub s2: Vec<f64>,
    /// ∇η of −½ log|B| at fixed θ̂ and K.
    pub s2p: Vec<f64>,
    /// Tangent carrying s2 through the implicit dependence of θ̂ on η.
    pub u: Vec<f64>,
    pub omega: DenseMatrix,
    /// Sweeps spent in the log-determinant term alone.
    pub logdet_sweeps: SweepCounter,
    /// Sweeps over the likelihood and covariance, all terms.
    pub sweeps: SweepCounter,
}

/// R = (K + W⁻¹)⁻¹ from the saved factorization.
pub fn compute_r(fit: &LaplaceFit) -> Result<DenseMatrix, AdjointError> {
    Ok(r_matrix(&fit.k, &fit.factorization))
}

/// R = (K + W⁻¹)⁻¹ for a factorization built from `k`.
pub fn r_matrix(k: &DenseMatrix, factorization: &BFactorization) -> DenseMatrix {
    let mut r = match factorization {
        BFactorization::B1 { sqrt_w, chol } => {
            let x = chol.solve_lower_matrix(&sqrt_w.to_dense().transpose());
            x.t_matmul(&x)
        }
        BFactorization::B2 { k_chol, w, chol } => {
            let d = chol.solve_lower_matrix(&w.dense_mul(&k_chol.l().transpose()));
            &w.to_dense() - &d.t_matmul(&d)
        }
        BFactorization::B3 { w, lu } => {
            let c = lu.solve_matrix(k);
            &w.to_dense() - &w.mul_dense(&w.dense_mul(&c))
        }
    };
    r.symmetrize();
    r
}

/// A = (K⁻¹ + W)⁻¹ from the saved factorization.
pub fn compute_a(fit: &LaplaceFit) -> Result<DenseMatrix, AdjointError> {
    Ok(a_matrix(&fit.k, &fit.factorization))
}

/// A = (K⁻¹ + W)⁻¹ for a factorization built from `k`.
pub fn a_matrix(k: &DenseMatrix, factorization: &BFactorization) -> DenseMatrix {
    let mut a = match factorization {
        BFactorization::B1 { sqrt_w, chol } => {
            let c = chol.solve_lower_matrix(&sqrt_w.t_mul_dense(k));
            k - &c.t_matmul(&c)
        }
        BFactorization::B2 { k_chol, chol, .. } => {
            let c = chol.solve_lower_matrix(&k_chol.l().transpose());
            c.t_matmul(&c)
        }
        BFactorization::B3 { w, lu } => {
            let c = lu.solve_matrix(k);
            k - &w.dense_mul(k).matmul(&c)
        }
    };
    a.symmetrize();
    a
}

/// Diagonal m×m blocks of A, skipping the dense O(n³) product.
pub fn compute_a_blocks(fit: &LaplaceFit, m: usize) -> Result<BlockDiagonal, AdjointError> {
    let k = &fit.k;
    let n = fit.n();
    let mut out = BlockDiagonal::zeros(n, m)?;
    // A_ij = base_ij − Σ_r left_ri right_rj over i, j in the same block.
    let (base, left, right): (Option<&DenseMatrix>, DenseMatrix, DenseMatrix) = match &fit.factorization {
        BFactorization::B1 { sqrt_w, chol } => {
            let c = chol.solve_lower_matrix(&sqrt_w.t_mul_dense(k));
            (Some(k), c.clone(), c)
        }
        BFactorization::B2 { k_chol, chol, .. } => {
            let c = chol.solve_lower_matrix(&k_chol.l().transpose());
            (None, c.scale(-1.0), c)
        }
        BFactorization::B3 { w, lu } => {
            let c = lu.solve_matrix(k);
            (Some(k), w.dense_mul(k).transpose(), c)
        }
    };
    for b in 0..n / m {
        for p in 0..m {
            for q in 0..m {
                let (i, j) = (b * m + p, b * m + q);
                let mut v = base.map_or(0.0, |k| k[(i, j)]);
                for r in 0..left.rows() {
                    v -= left[(r, i)] * right[(r, j)];
                }
                out.set(i, j, v);
            }
        }
    }
    for b in 0..n / m {
        for p in 0..m {
            for q in 0..p {
                let (i, j) = (b * m + p, b * m + q);
                let s = 0.5 * (out.get(i, j) + out.get(j, i));
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
    }
    Ok(out)
}

/// Gradient of −½ log|B| = ½ trace(A ∇²θ log π) with respect to θ̂ (s2) and
/// η (s2p), holding A fixed.
///
/// The m tangent pairs (vⱼ, wⱼ) pick out the diagonal blocks: vⱼ is the
/// strided unit vector, wⱼ carries the j-th column of every block of A.
/// All pairs share one recording; one reverse sweep closes it.
pub fn logdet_gradient<L: LikelihoodModel>(
    lik: &L,
    theta: &[f64],
    eta: &[f64],
    a_block: impl Fn(usize, usize) -> f64,
    counter: &mut SweepCounter,
) -> Result<(Vec<f64>, Vec<f64>), AdjointError> {
    lik.capability().require(3)?;
    let n = lik.n();
    let m = lik.block_size();
    if theta.len() != n || eta.len() != lik.n_eta() {
        return Err(AdjointError::Dimension("θ or η has the wrong length".into()));
    }
    if m == 0 || n % m != 0 {
        return Err(AdError::NotDivisible { n, m }.into());
    }
    let x = joint_point(theta, eta);
    let len = x.len();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .map(|j| {
            let v = strided_tangent(len, n, m, j);
            let mut w = vec![0.0; len];
            for b in 0..n / m {
                for k in 0..m {
                    w[b * m + k] = a_block(b * m + k, b * m + j);
                }
            }
            (v, w)
        })
        .collect();
    let g = hessian_contraction_gradient(&Joint(lik), &x, &pairs, counter)?;
    let s2 = g[..n].iter().map(|v| 0.5 * v).collect();
    let s2p = g[n..].iter().map(|v| 0.5 * v).collect();
    Ok((s2, s2p))
}

/// Adjoint of K: Ω = ½aaᵀ − ½R + (s2 − RKs2)∇log πᵀ.
pub fn omega(fit: &LaplaceFit, r: &DenseMatrix, s2: &[f64]) -> DenseMatrix {
    let t = implicit_tangent(fit, r, s2);
    let n = fit.n();
    DenseMatrix::from_fn(n, n, |i, j| {
        0.5 * fit.a[i] * fit.a[j] - 0.5 * r[(i, j)] + t[i] * fit.grad_loglik[j]
    })
}

/// (I + KW)⁻ᵀ s2 = s2 − RKs2.
fn implicit_tangent(fit: &LaplaceFit, r: &DenseMatrix, s2: &[f64]) -> Vec<f64> {
    let rks = r.matvec(&fit.k.matvec(s2));
    s2.iter().zip(&rks).map(|(s, x)| s - x).collect()
}

/// ∇φ: one reverse sweep of φ ↦ K(φ) with cotangent Ω.
pub fn grad_phi<C: CovarianceModel>(
    cov: &C,
    phi: &[f64],
    omega: &DenseMatrix,
    counter: &mut SweepCounter,
) -> Result<Vec<f64>, AdjointError> {
    if phi.is_empty() {
        return Ok(Vec::new());
    }
    let n = cov.n();
    if omega.rows() != n || omega.cols() != n {
        return Err(AdjointError::Dimension(format!(
            "Ω is {}x{}, K is {n}x{n}",
            omega.rows(),
            omega.cols()
        )));
    }
    Ok(rev_sweep(&CovarianceMap(cov), phi, omega.as_slice(), counter)?)
}

/// ∇η: explicit partial of log π, the trace term s2p, and s2 carried through
/// θ̂(η) by the tangent `u`.
pub fn grad_eta<L: LikelihoodModel>(
    lik: &L,
    fit: &LaplaceFit,
    u: &[f64],
    s2p: &[f64],
    counter: &mut SweepCounter,
) -> Result<Vec<f64>, AdjointError> {
    let n = lik.n();
    let t = lik.n_eta();
    if t == 0 {
        return Ok(Vec::new());
    }
    lik.capability().require(2)?;
    let joint = Joint(lik);
    let x = joint_point(&fit.theta, &fit.eta);
    let (_, g) = gradient(&joint, &x, counter)?;
    let mut tangent = vec![0.0; n + t];
    tangent[..n].copy_from_slice(u);
    let hu = hessian_vector(&joint, &x, &tangent, counter)?;
    Ok((0..t).map(|l| g[n + l] + s2p[l] + hu[n + l]).collect())
}

/// Full adjoint gradient of the log marginal at a converged fit.
pub fn marginal_gradient<L: LikelihoodModel, C: CovarianceModel>(
    fit: &LaplaceFit,
    cov: &C,
    phi: &[f64],
    lik: &L,
    options: AdjointOptions,
) -> Result<MarginalGradient, AdjointError> {
    let n = fit.n();
    if cov.n() != n || lik.n() != n || phi.len() != cov.n_phi() {
        return Err(AdjointError::Dimension(
            "fit, covariance and likelihood disagree".into(),
        ));
    }
    let mut sweeps = SweepCounter::new();
    let mut logdet_sweeps = SweepCounter::new();
    if phi.is_empty() && lik.n_eta() == 0 {
        return Ok(MarginalGradient {
            grad_phi: Vec::new(),
            grad_eta: Vec::new(),
            s2: Vec::new(),
            s2p: Vec::new(),
            u: Vec::new(),
            omega: DenseMatrix::zeros(n, n),
            logdet_sweeps,
            sweeps,
        });
    }
    let r = compute_r(fit)?;
    let (s2, s2p) = if options.block_only_a {
        let blocks = compute_a_blocks(fit, lik.block_size())?;
        logdet_gradient(lik, &fit.theta, &fit.eta, |i, j| blocks.get(i, j), &mut logdet_sweeps)?
    } else {
        let a = compute_a(fit)?;
        logdet_gradient(lik, &fit.theta, &fit.eta, |i, j| a[(i, j)], &mut logdet_sweeps)?
    };
    sweeps.forward += logdet_sweeps.forward;
    sweeps.reverse += logdet_sweeps.reverse;
    let t = implicit_tangent(fit, &r, &s2);
    let u = fit.k.matvec(&t);
    let om = omega(fit, &r, &s2);
    let gphi = grad_phi(cov, phi, &om, &mut sweeps)?;
    let geta = grad_eta(lik, fit, &u, &s2p, &mut sweeps)?;
    Ok(MarginalGradient {
        grad_phi: gphi,
        grad_eta: geta,
        s2,
        s2p,
        u,
        omega: om,
        logdet_sweeps,
        sweeps,
    })
}

/// Builds K(φ), fits the Laplace approximation and differentiates it.
pub fn log_marginal_and_gradient<L: LikelihoodModel, C: CovarianceModel>(
    cov: &C,
    phi: &[f64],
    lik: &L,
    eta: &[f64],
    settings: &NewtonSettings,
    strategy: BStrategy,
    options: AdjointOptions,
) -> Result<(LaplaceFit, MarginalGradient), AdjointError> {
    cov.validate_phi(phi)?;
    let k = cov.matrix(phi);
    let fit = laplace_fit(&k, lik, eta, settings, strategy)?;
    let grad = marginal_gradient(&fit, cov, phi, lik, options)?;
    Ok((fit, grad))
}

/// Central finite differences of the re-solved log marginal over (φ, η),
/// with step h = rel_step·max(1, |x|).
pub fn finite_difference_gradient<L: LikelihoodModel, C: CovarianceModel>(
    cov: &C,
    phi: &[f64],
    lik: &L,
    eta: &[f64],
    settings: &NewtonSettings,
    strategy: BStrategy,
    rel_step: f64,
) -> Result<(Vec<f64>, Vec<f64>), AdjointError> {
    let value = |phi: &[f64], eta: &[f64]| -> Result<f64, AdjointError> {
        let k = cov.matrix(phi);
        Ok(laplace_fit(&k, lik, eta, settings, strategy)?.log_marginal)
    };
    let mut gphi = Vec::with_capacity(phi.len());
    for j in 0..phi.len() {
        let h = rel_step * phi[j].abs().max(1.0);
        let mut up = phi.to_vec();
        let mut dn = phi.to_vec();
        up[j] += h;
        dn[j] -= h;
        gphi.push((value(&up, eta)? - value(&dn, eta)?) / (2.0 * h));
    }
    let mut geta = Vec::with_capacity(eta.len());
    for l in 0..eta.len() {
        let h = rel_step * eta[l].abs().max(1.0);
        let mut up = eta.to_vec();
        let mut dn = eta.to_vec();
        up[l] += h;
        dn[l] -= h;
        geta.push((value(phi, &up)? - value(phi, &dn)?) / (2.0 * h));
    }
    Ok((gphi, geta))
}
