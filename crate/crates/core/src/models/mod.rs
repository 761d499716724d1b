//! Likelihoods and covariance functions, plus the CSV loaders that feed them.

mod covariance;
mod data;
mod likelihoods;
mod pk;

use thiserror::Error;

use crate::autodiff::{AdError, Real, ScalarField, VectorField};

pub use covariance::{DiagCovariance, IdentityScaled, SeKernel};
pub use data::{load_gp_csv, load_pk_csv, GpData};
pub use likelihoods::{GaussianLikelihood, PoissonLikelihood, StudentTLikelihood};
pub use pk::{pk_solution, PkData, PkLikelihood, PkParams, PkPatient, PK_TIMES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model input: {0}")]
    Validation(String),
    #[error("line {line}: {message}")]
    Load { line: u64, message: String },
    #[error("{0}")]
    Io(String),
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
}

/// How many nested derivative levels a model's evaluator can be pushed
/// through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Capability {
    Full,
    Limited { max_depth: usize, operation: &'static str },
}

impl Capability {
    /// Fails with a capability error if `depth` levels are not available.
    pub fn require(self, depth: usize) -> Result<(), AdError> {
        match self {
            Capability::Limited { max_depth, operation } if max_depth < depth => Err(AdError::Capability {
                operation: operation.to_string(),
                required: depth,
                supported: max_depth,
            }),
            _ => Ok(()),
        }
    }
}

/// Observation model log π(y | θ, η).
///
/// The Hessian in θ must be block-diagonal with blocks of `block_size()`
/// consecutive coordinates. That declaration is trusted.
pub trait LikelihoodModel: Sync {
    fn n(&self) -> usize;
    fn block_size(&self) -> usize;
    fn n_eta(&self) -> usize;
    fn log_density<S: Real>(&self, theta: &[S], eta: &[S]) -> S;

    fn capability(&self) -> Capability {
        Capability::Full
    }
}

/// Prior covariance K(φ).
pub trait CovarianceModel: Sync {
    fn n(&self) -> usize;
    fn n_phi(&self) -> usize;

    /// Row-major n×n entries.
    fn covariance<S: Real>(&self, phi: &[S]) -> Vec<S>;

    fn structure(&self) -> CovarianceStructure {
        CovarianceStructure::Dense
    }

    fn validate_phi(&self, phi: &[f64]) -> Result<(), ModelError> {
        if phi.len() != self.n_phi() {
            return Err(ModelError::Validation(format!(
                "expected {} covariance parameters, got {}",
                self.n_phi(),
                phi.len()
            )));
        }
        if let Some(p) = phi.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(ModelError::Validation(format!(
                "covariance parameter {p} is not positive"
            )));
        }
        Ok(())
    }

    fn matrix(&self, phi: &[f64]) -> crate::linalg::DenseMatrix {
        let n = self.n();
        crate::linalg::DenseMatrix::from_row_major(n, n, self.covariance(phi)).expect("covariance returned n*n entries")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovarianceStructure {
    Dense,
    Diagonal,
}

/// log π(y | θ, η) as a scalar field over the joint vector (θ, η).
pub struct Joint<'a, L>(pub &'a L);

impl<L: LikelihoodModel> ScalarField for Joint<'_, L> {
    fn dim(&self) -> usize {
        self.0.n() + self.0.n_eta()
    }

    fn eval<S: Real>(&self, x: &[S]) -> S {
        let n = self.0.n();
        self.0.log_density(&x[..n], &x[n..])
    }
}

/// φ ↦ vec(K(φ)) as a vector field.
pub struct CovarianceMap<'a, C>(pub &'a C);

impl<C: CovarianceModel> VectorField for CovarianceMap<'_, C> {
    fn dim_in(&self) -> usize {
        self.0.n_phi()
    }

    fn dim_out(&self) -> usize {
        self.0.n() * self.0.n()
    }

    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        self.0.covariance(x)
    }
}

/// Joint vector (θ, η).
pub fn joint_point(theta: &[f64], eta: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(theta.len() + eta.len());
    x.extend_from_slice(theta);
    x.extend_from_slice(eta);
    x
}
