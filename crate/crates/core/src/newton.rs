//! Newton iterations for the conditional mode θ̂ and the Laplace
//! approximation of the log marginal likelihood.
//!
//! Every step solves (K⁻¹ + W)θ_new = Wθ + ∇log π through one of three
//! Woodbury forms of the B-matrix, so neither K nor W is ever inverted.

use std::fmt;

use thiserror::Error;

use crate::autodiff::{block_hessian, gradient, AdError, SweepCounter};
use crate::linalg::{
    block_sqrt, cholesky, log_det_lu, lu_decompose, BlockDiagonal, CholeskyFactor, DenseMatrix, LUFactors, LinalgError,
    MatrixSqrt,
};
use crate::models::{joint_point, Joint, LikelihoodModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BStrategy {
    /// B = I + W^{1/2}ᵀ K W^{1/2}; needs W positive semi-definite.
    B1,
    /// B = I + K^{1/2}ᵀ W K^{1/2}; needs K positive definite.
    B2,
    /// B = I + K W, factored by pivoted LU.
    B3,
}

impl BStrategy {
    pub const ALL: [BStrategy; 3] = [BStrategy::B1, BStrategy::B2, BStrategy::B3];
}

impl fmt::Display for BStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BStrategy::B1 => "b1",
            BStrategy::B2 => "b2",
            BStrategy::B3 => "b3",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonSettings {
    /// Convergence threshold Δ on |Ψ_new − Ψ_old|.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linesearch: bool,
    pub max_halvings: usize,
    /// Starting point; zero when absent.
    pub theta0: Option<Vec<f64>>,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            linesearch: true,
            max_halvings: 10,
            theta0: None,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), NewtonError> {
        if !(self.tolerance > 0.0) {
            return Err(NewtonError::InvalidSettings(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(NewtonError::InvalidSettings("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewtonError {
    #[error("strategy {strategy} is unsuitable here: {source}")]
    StrategyUnsuitable {
        strategy: BStrategy,
        #[source]
        source: LinalgError,
    },
    #[error("no convergence after {iterations} iterations (last objective {last:?})")]
    NonConvergence {
        iterations: usize,
        psi_trace: Vec<f64>,
        last: Option<f64>,
    },
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("non-finite {0}")]
    NonFinite(String),
}

/// A factored B-matrix together with the pieces needed to reuse it.
#[derive(Clone, Debug)]
pub enum BFactorization {
    /// `S` with S Sᵀ = W and the Cholesky factor of I + SᵀKS.
    B1 { sqrt_w: MatrixSqrt, chol: CholeskyFactor },
    /// Cholesky factor of K and of I + L_Kᵀ W L_K.
    B2 {
        k_chol: CholeskyFactor,
        w: BlockDiagonal,
        chol: CholeskyFactor,
    },
    /// W and the LU factors of I + KW.
    B3 { w: BlockDiagonal, lu: LUFactors },
}

impl BFactorization {
    pub fn strategy(&self) -> BStrategy {
        match self {
            BFactorization::B1 { .. } => BStrategy::B1,
            BFactorization::B2 { .. } => BStrategy::B2,
            BFactorization::B3 { .. } => BStrategy::B3,
        }
    }

    pub fn log_det(&self) -> Result<f64, LinalgError> {
        match self {
            BFactorization::B1 { chol, .. } | BFactorization::B2 { chol, .. } => Ok(chol.log_det()),
            BFactorization::B3 { lu, .. } => log_det_lu(lu),
        }
    }

    /// Product of the stored factors (LLᵀ or PᵀLU).
    pub fn reconstruct(&self) -> DenseMatrix {
        match self {
            BFactorization::B1 { chol, .. } | BFactorization::B2 { chol, .. } => chol.l().matmul(&chol.l().transpose()),
            BFactorization::B3 { lu, .. } => lu.p().t_matmul(&lu.l().matmul(&lu.u())),
        }
    }
}

/// B-matrix for `strategy` formed directly from K and W.
pub fn b_matrix(k: &DenseMatrix, w: &BlockDiagonal, strategy: BStrategy) -> Result<DenseMatrix, LinalgError> {
    let n = k.rows();
    let mut b = match strategy {
        BStrategy::B1 => {
            let s = block_sqrt(w)?;
            s.t_mul_dense(&s.dense_mul(k))
        }
        BStrategy::B2 => {
            let lk = cholesky(k)?;
            lk.l().t_matmul(&w.mul_dense(lk.l()))
        }
        BStrategy::B3 => w.dense_mul(k),
    };
    if strategy != BStrategy::B3 {
        b.symmetrize();
    }
    b.add_diagonal(1.0);
    debug_assert_eq!(b.rows(), n);
    Ok(b)
}

/// Factors the B-matrix of `strategy` for the given K and W.
pub fn factorize(k: &DenseMatrix, w: &BlockDiagonal, strategy: BStrategy) -> Result<BFactorization, NewtonError> {
    let unsuitable = |source| NewtonError::StrategyUnsuitable { strategy, source };
    Ok(match strategy {
        BStrategy::B1 => {
            let s = block_sqrt(w).map_err(unsuitable)?;
            let mut bm = s.t_mul_dense(&s.dense_mul(k));
            bm.symmetrize();
            bm.add_diagonal(1.0);
            let chol = cholesky(&bm).map_err(unsuitable)?;
            BFactorization::B1 { sqrt_w: s, chol }
        }
        BStrategy::B2 => {
            let k_chol = cholesky(k).map_err(unsuitable)?;
            let lk = k_chol.l();
            let mut bm = lk.t_matmul(&w.mul_dense(lk));
            bm.symmetrize();
            bm.add_diagonal(1.0);
            let chol = cholesky(&bm).map_err(unsuitable)?;
            BFactorization::B2 {
                k_chol,
                w: w.clone(),
                chol,
            }
        }
        BStrategy::B3 => {
            let mut bm = w.dense_mul(k);
            bm.add_diagonal(1.0);
            let lu = lu_decompose(&bm).map_err(unsuitable)?;
            BFactorization::B3 { w: w.clone(), lu }
        }
    })
}

/// Result of one Newton step.
#[derive(Clone, Debug)]
pub struct NewtonStep {
    pub theta: Vec<f64>,
    pub a: Vec<f64>,
    pub factorization: BFactorization,
}

/// Ψ = −½ aᵀθ + log π.
pub fn objective(theta: &[f64], a: &[f64], loglik: f64) -> f64 {
    let quad: f64 = theta.iter().zip(a).map(|(t, ai)| t * ai).sum();
    -0.5 * quad + loglik
}

/// One Newton update from θ given W and ∇log π at θ.
pub fn newton_step(
    theta: &[f64],
    k: &DenseMatrix,
    w: &BlockDiagonal,
    grad: &[f64],
    strategy: BStrategy,
) -> Result<NewtonStep, NewtonError> {
    let n = theta.len();
    if k.rows() != n || k.cols() != n || w.dim() != n || grad.len() != n {
        return Err(NewtonError::Dimension(format!(
            "θ has {n} entries, K is {}x{}, W is {}, gradient has {}",
            k.rows(),
            k.cols(),
            w.dim(),
            grad.len()
        )));
    }
    let factorization = factorize(k, w, strategy)?;
    let wt = w.matvec(theta);
    let b: Vec<f64> = wt.iter().zip(grad).map(|(x, g)| x + g).collect();

    let (theta_new, a) = match &factorization {
        BFactorization::B1 { sqrt_w: s, chol } => {
            let kb = k.matvec(&b);
            let z = chol.solve(&s.t_matvec(&kb));
            let sz = s.matvec(&z);
            let a: Vec<f64> = b.iter().zip(&sz).map(|(bi, si)| bi - si).collect();
            (k.matvec(&a), a)
        }
        BFactorization::B2 { k_chol, chol, .. } => {
            let lk = k_chol.l();
            let c = chol.solve(&lk.t_matvec(&b));
            (lk.matvec(&c), k_chol.solve_lower_t(&c))
        }
        BFactorization::B3 { w, lu } => {
            let v = lu.solve(&k.matvec(&b));
            let wv = w.matvec(&v);
            let a: Vec<f64> = b.iter().zip(&wv).map(|(bi, x)| bi - x).collect();
            (k.matvec(&a), a)
        }
    };
    if theta_new.iter().chain(&a).any(|v| !v.is_finite()) {
        return Err(NewtonError::NonFinite("Newton step".into()));
    }
    Ok(NewtonStep {
        theta: theta_new,
        a,
        factorization,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinesearchOutcome {
    pub a: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: f64,
    pub halvings: usize,
    pub exhausted: bool,
}

/// Step-halving by averaging a-vectors: a ← (a + a_old)/2 until Ψ reaches
/// at least `psi_prev`.
///
/// `theta_of` maps a to θ = Ka and `psi_of` evaluates Ψ at (θ, a); a failed
/// or non-finite evaluation counts as a rejection.
pub fn linesearch<T, P>(
    a_new: &[f64],
    a_old: &[f64],
    theta_of: T,
    mut psi_of: P,
    psi_prev: f64,
    max_halvings: usize,
) -> LinesearchOutcome
where
    T: Fn(&[f64]) -> Vec<f64>,
    P: FnMut(&[f64], &[f64]) -> Option<f64>,
{
    let mut a = a_new.to_vec();
    let mut theta = theta_of(&a);
    let eval = |psi_of: &mut P, theta: &[f64], a: &[f64]| psi_of(theta, a).filter(|p| p.is_finite());
    let mut psi = eval(&mut psi_of, &theta, &a);
    if a_new == a_old {
        return LinesearchOutcome {
            a,
            theta,
            psi: psi.unwrap_or(f64::NEG_INFINITY),
            halvings: 0,
            exhausted: true,
        };
    }
    let mut halvings = 0;
    loop {
        if let Some(p) = psi {
            if p >= psi_prev {
                return LinesearchOutcome {
                    a,
                    theta,
                    psi: p,
                    halvings,
                    exhausted: false,
                };
            }
        }
        if halvings == max_halvings {
            return LinesearchOutcome {
                a,
                theta,
                psi: psi.unwrap_or(f64::NEG_INFINITY),
                halvings,
                exhausted: true,
            };
        }
        for (ai, ao) in a.iter_mut().zip(a_old) {
            *ai = 0.5 * (*ai + ao);
        }
        theta = theta_of(&a);
        psi = eval(&mut psi_of, &theta, &a);
        halvings += 1;
    }
}

/// Converged Laplace approximation at fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct LaplaceFit {
    pub theta: Vec<f64>,
    /// K⁻¹θ̂, carried by the recursion.
    pub a: Vec<f64>,
    /// −∇²θ log π at θ̂.
    pub w: BlockDiagonal,
    pub grad_loglik: Vec<f64>,
    pub loglik: f64,
    pub factorization: BFactorization,
    pub psi: f64,
    pub log_det_b: f64,
    pub log_marginal: f64,
    pub iterations: usize,
    pub psi_trace: Vec<f64>,
    pub halvings: Vec<usize>,
    /// Set when the final step could not improve Ψ and the previous
    /// iterate was kept.
    pub linesearch_exhausted: bool,
    pub k: DenseMatrix,
    pub eta: Vec<f64>,
    pub sweeps: SweepCounter,
}

impl LaplaceFit {
    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn strategy(&self) -> BStrategy {
        self.factorization.strategy()
    }

    /// ‖θ̂ − K ∇log π(θ̂)‖∞.
    pub fn self_consistency(&self) -> f64 {
        let kg = self.k.matvec(&self.grad_loglik);
        self.theta
            .iter()
            .zip(&kg)
            .map(|(t, g)| (t - g).abs())
            .fold(0.0, f64::max)
    }
}

struct LocalState {
    loglik: f64,
    grad: Vec<f64>,
    w: BlockDiagonal,
}

fn local_state<L: LikelihoodModel>(
    lik: &L,
    theta: &[f64],
    eta: &[f64],
    counter: &mut SweepCounter,
) -> Result<LocalState, NewtonError> {
    let n = theta.len();
    let joint = Joint(lik);
    let x = joint_point(theta, eta);
    let (loglik, g) = gradient(&joint, &x, counter)?;
    let h = block_hessian(&joint, &x, n, lik.block_size(), counter)?;
    let w = h.scale(-1.0);
    if !loglik.is_finite() || !w.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NewtonError::NonFinite("likelihood derivatives".into()));
    }
    Ok(LocalState {
        loglik,
        grad: g[..n].to_vec(),
        w,
    })
}

/// Runs Newton iterations to the mode and returns the Laplace approximation.
pub fn laplace_fit<L: LikelihoodModel>(
    k: &DenseMatrix,
    lik: &L,
    eta: &[f64],
    settings: &NewtonSettings,
    strategy: BStrategy,
) -> Result<LaplaceFit, NewtonError> {
    settings.validate()?;
    let n = lik.n();
    if k.rows() != n || k.cols() != n {
        return Err(NewtonError::Dimension(format!(
            "K is {}x{} but the likelihood has {n} latent variables",
            k.rows(),
            k.cols()
        )));
    }
    if eta.len() != lik.n_eta() {
        return Err(NewtonError::Dimension(format!(
            "expected {} likelihood parameters, got {}",
            lik.n_eta(),
            eta.len()
        )));
    }
    let mut counter = SweepCounter::new();
    let loglik_at = |theta: &[f64]| lik.log_density::<f64>(theta, eta);

    let user_start = settings.theta0.as_ref().is_some_and(|t0| t0.iter().any(|v| *v != 0.0));
    let (mut theta, mut a) = match &settings.theta0 {
        Some(t0) if t0.iter().any(|v| *v != 0.0) => {
            if t0.len() != n {
                return Err(NewtonError::Dimension(format!(
                    "θ₀ has {} entries, expected {n}",
                    t0.len()
                )));
            }
            let lu = lu_decompose(k).map_err(|source| NewtonError::StrategyUnsuitable { strategy, source })?;
            (t0.clone(), lu.solve(t0))
        }
        _ => (vec![0.0; n], vec![0.0; n]),
    };
    let mut psi_old = objective(&theta, &a, loglik_at(&theta));
    if !psi_old.is_finite() {
        return Err(NewtonError::NonFinite("objective at the starting point".into()));
    }
    let mut psi_trace = Vec::new();
    let mut halvings = Vec::new();
    let mut exhausted = false;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=settings.max_iterations {
        iterations = it;
        let state = local_state(lik, &theta, eta, &mut counter)?;
        let step = newton_step(&theta, k, &state.w, &state.grad, strategy)?;
        let mut psi_new = objective(&step.theta, &step.a, loglik_at(&step.theta));
        let mut cand_theta = step.theta;
        let mut cand_a = step.a;
        let mut used = 0;
        if psi_new.is_finite() && psi_new < psi_old && psi_old - psi_new < settings.tolerance {
            // Converged: the drop is below the tolerance. The step is kept but
            // its Ψ stays out of the trace of accepted increases.
            theta = cand_theta;
            a = cand_a;
            halvings.push(0);
            converged = true;
            break;
        }
        let needs_search = !psi_new.is_finite() || ((it > 1 || user_start) && psi_new < psi_old);
        if settings.linesearch && needs_search {
            let out = linesearch(
                &cand_a,
                &a,
                |a| k.matvec(a),
                |t, a| Some(objective(t, a, loglik_at(t))),
                psi_old,
                settings.max_halvings,
            );
            let out = if out.exhausted {
                // The Newton direction does not ascend (indefinite K⁻¹ + W);
                // retry with the curvature restricted to its PSD part.
                let w_psd = state.w.psd_part();
                let step = newton_step(&theta, k, &w_psd, &state.grad, strategy)?;
                linesearch(
                    &step.a,
                    &a,
                    |a| k.matvec(a),
                    |t, a| Some(objective(t, a, loglik_at(t))),
                    psi_old,
                    settings.max_halvings,
                )
            } else {
                out
            };
            if out.exhausted {
                exhausted = true;
                halvings.push(out.halvings);
                let kg = k.matvec(&state.grad);
                let resid = theta.iter().zip(&kg).map(|(t, g)| (t - g).abs()).fold(0.0, f64::max);
                let scale = theta.iter().fold(1.0_f64, |m, t| m.max(t.abs()));
                if resid <= 1e-6 * scale {
                    converged = true;
                    break;
                }
                return Err(NewtonError::NonConvergence {
                    iterations: it,
                    psi_trace,
                    last: Some(psi_old),
                });
            }
            cand_theta = out.theta;
            cand_a = out.a;
            psi_new = out.psi;
            used = out.halvings;
        }
        if !psi_new.is_finite() {
            return Err(NewtonError::NonConvergence {
                iterations: it,
                psi_trace,
                last: Some(psi_old),
            });
        }
        theta = cand_theta;
        a = cand_a;
        psi_trace.push(psi_new);
        halvings.push(used);
        if (psi_new - psi_old).abs() < settings.tolerance {
            converged = true;
            break;
        }
        psi_old = psi_new;
    }
    if !converged {
        let last = psi_trace.last().copied();
        return Err(NewtonError::NonConvergence {
            iterations,
            psi_trace,
            last,
        });
    }

    // Curvature, gradient and factorization at the returned mode.
    let state = local_state(lik, &theta, eta, &mut counter)?;
    let factorization = factorize(k, &state.w, strategy)?;
    let psi = objective(&theta, &a, state.loglik);
    let log_det_b = factorization
        .log_det()
        .map_err(|source| NewtonError::StrategyUnsuitable { strategy, source })?;
    Ok(LaplaceFit {
        log_marginal: psi - 0.5 * log_det_b,
        log_det_b,
        factorization,
        theta,
        a,
        w: state.w,
        grad_loglik: state.grad,
        loglik: state.loglik,
        psi,
        iterations,
        psi_trace,
        halvings,
        linesearch_exhausted: exhausted,
        k: k.clone(),
        eta: eta.to_vec(),
        sweeps: counter,
    })
}
