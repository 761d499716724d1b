use super::{CovarianceModel, CovarianceStructure, ModelError};
use crate::autodiff::Real;
use crate::linalg::DenseMatrix;

/// Squared-exponential kernel α²·exp(−½ Σₖ (xᵢₖ − xⱼₖ)²/ℓₖ²) plus a fixed
/// nugget on the diagonal.
///
/// φ = (α, ℓ) with one shared lengthscale, or (α, ℓ₁, …, ℓ_d) with one per
/// input column when built with [`SeKernel::ard`].
#[derive(Clone, Debug)]
pub struct SeKernel {
    x: Vec<Vec<f64>>,
    per_dimension: bool,
    nugget: f64,
}

impl SeKernel {
    pub fn new(x: Vec<Vec<f64>>, nugget: f64) -> Result<Self, ModelError> {
        Self::build(x, false, nugget)
    }

    pub fn ard(x: Vec<Vec<f64>>, nugget: f64) -> Result<Self, ModelError> {
        Self::build(x, true, nugget)
    }

    fn build(x: Vec<Vec<f64>>, per_dimension: bool, nugget: f64) -> Result<Self, ModelError> {
        let d = x.first().map_or(0, Vec::len);
        if x.is_empty() || d == 0 {
            return Err(ModelError::Validation("kernel needs at least one input point".into()));
        }
        if x.iter().any(|r| r.len() != d) {
            return Err(ModelError::Validation("input rows have different lengths".into()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::Validation("inputs must be finite".into()));
        }
        if !(nugget >= 0.0) {
            return Err(ModelError::Validation(format!("nugget {nugget} must be non-negative")));
        }
        Ok(Self {
            x,
            per_dimension,
            nugget,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn input_dim(&self) -> usize {
        self.x[0].len()
    }

    fn kernel<S: Real>(&self, phi: &[S], a: &[f64], b: &[f64]) -> S {
        let amp2 = phi[0] * phi[0];
        let mut q = S::zero();
        for k in 0..a.len() {
            let ell = if self.per_dimension { phi[1 + k] } else { phi[1] };
            let diff = a[k] - b[k];
            q += (ell * ell).recip() * (diff * diff);
        }
        amp2 * (q * -0.5).exp()
    }

    /// K(X*, X) for new inputs.
    pub fn cross(&self, phi: &[f64], x_new: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_fn(x_new.len(), self.x.len(), |i, j| {
            self.kernel(phi, &x_new[i], &self.x[j])
        })
    }

    /// K(X*, X*) for new inputs, nugget included.
    pub fn self_covariance(&self, phi: &[f64], x_new: &[Vec<f64>]) -> DenseMatrix {
        let mut k = DenseMatrix::from_fn(x_new.len(), x_new.len(), |i, j| self.kernel(phi, &x_new[i], &x_new[j]));
        k.add_diagonal(self.nugget);
        k
    }
}

impl CovarianceModel for SeKernel {
    fn n(&self) -> usize {
        self.x.len()
    }

    fn n_phi(&self) -> usize {
        if self.per_dimension {
            1 + self.input_dim()
        } else {
            2
        }
    }

    fn covariance<S: Real>(&self, phi: &[S]) -> Vec<S> {
        let n = self.x.len();
        let mut k = vec![S::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel(phi, &self.x[i], &self.x[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = k[i * n + i] + self.nugget;
        }
        k
    }
}

/// Independent groups: coordinate i has variance τ²_{i mod g}. With
/// interleaved per-patient latents this is blockdiag(diag(τ₁², τ₂², …)).
#[derive(Clone, Debug)]
pub struct DiagCovariance {
    n: usize,
    groups: usize,
}

impl DiagCovariance {
    pub fn new(n: usize, groups: usize) -> Result<Self, ModelError> {
        if groups == 0 || n % groups != 0 {
            return Err(ModelError::Validation(format!(
                "{groups} groups do not evenly divide {n} latent coordinates"
            )));
        }
        Ok(Self { n, groups })
    }
}

impl CovarianceModel for DiagCovariance {
    fn n(&self) -> usize {
        self.n
    }

    fn n_phi(&self) -> usize {
        self.groups
    }

    fn structure(&self) -> CovarianceStructure {
        CovarianceStructure::Diagonal
    }

    fn covariance<S: Real>(&self, phi: &[S]) -> Vec<S> {
        let mut k = vec![S::zero(); self.n * self.n];
        for i in 0..self.n {
            let tau = phi[i % self.groups];
            k[i * self.n + i] = tau * tau;
        }
        k
    }
}

/// K(φ) = φ₀·I. Handy for exercising the gradient plumbing.
#[derive(Clone, Debug)]
pub struct IdentityScaled {
    pub n: usize,
}

impl CovarianceModel for IdentityScaled {
    fn n(&self) -> usize {
        self.n
    }

    fn n_phi(&self) -> usize {
        1
    }

    fn structure(&self) -> CovarianceStructure {
        CovarianceStructure::Diagonal
    }

    fn covariance<S: Real>(&self, phi: &[S]) -> Vec<S> {
        let mut k = vec![S::zero(); self.n * self.n];
        for i in 0..self.n {
            k[i * self.n + i] = phi[0];
        }
        k
    }
}
