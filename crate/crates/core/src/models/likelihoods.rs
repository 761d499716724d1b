use std::f64::consts::PI;

use super::{LikelihoodModel, ModelError};
use crate::autodiff::Real;

/// Poisson counts with log-rate θ: Σ yᵢθᵢ − exp(θᵢ) − log(yᵢ!).
#[derive(Clone, Debug)]
pub struct PoissonLikelihood {
    y: Vec<f64>,
    log_factorial: Vec<f64>,
}

impl PoissonLikelihood {
    pub fn new(y: &[f64]) -> Result<Self, ModelError> {
        for (i, &yi) in y.iter().enumerate() {
            if !(yi >= 0.0) || yi.fract() != 0.0 || !yi.is_finite() {
                return Err(ModelError::Validation(format!(
                    "count {i} is {yi}; counts must be non-negative integers"
                )));
            }
        }
        let log_factorial = y
            .iter()
            .map(|&yi| (2..=yi as u64).map(|k| (k as f64).ln()).sum())
            .collect();
        Ok(Self {
            y: y.to_vec(),
            log_factorial,
        })
    }

    pub fn counts(&self) -> &[f64] {
        &self.y
    }
}

impl LikelihoodModel for PoissonLikelihood {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn block_size(&self) -> usize {
        1
    }

    fn n_eta(&self) -> usize {
        0
    }

    fn log_density<S: Real>(&self, theta: &[S], _eta: &[S]) -> S {
        let mut acc = S::zero();
        for ((&t, &y), &lf) in theta.iter().zip(&self.y).zip(&self.log_factorial) {
            acc += t * y - t.exp() - lf;
        }
        acc
    }
}

/// Student-t observations around θ with fixed degrees of freedom ν and
/// scale σ = exp(η₀).
#[derive(Clone, Debug)]
pub struct StudentTLikelihood {
    y: Vec<f64>,
    nu: f64,
    log_norm: f64,
}

impl StudentTLikelihood {
    pub fn new(y: &[f64], nu: f64) -> Result<Self, ModelError> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(ModelError::Validation(format!(
                "degrees of freedom {nu} must be positive"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Validation("observations must be finite".into()));
        }
        let log_norm = libm::lgamma(0.5 * (nu + 1.0)) - libm::lgamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        Ok(Self {
            y: y.to_vec(),
            nu,
            log_norm,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

impl LikelihoodModel for StudentTLikelihood {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn block_size(&self) -> usize {
        1
    }

    fn n_eta(&self) -> usize {
        1
    }

    fn log_density<S: Real>(&self, theta: &[S], eta: &[S]) -> S {
        let log_sigma = eta[0];
        let inv_scale = (log_sigma * -2.0).exp() / self.nu;
        let half = 0.5 * (self.nu + 1.0);
        let mut acc = S::zero();
        for (&t, &y) in theta.iter().zip(&self.y) {
            let r = -t + y;
            acc -= (r * r * inv_scale).ln_1p() * half;
        }
        acc + (-log_sigma + self.log_norm) * self.y.len() as f64
    }
}

/// Gaussian observations N(y | θ, σ²) with η₀ = σ on its natural scale.
#[derive(Clone, Debug)]
pub struct GaussianLikelihood {
    y: Vec<f64>,
}

impl GaussianLikelihood {
    pub fn new(y: &[f64]) -> Result<Self, ModelError> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Validation("observations must be finite".into()));
        }
        Ok(Self { y: y.to_vec() })
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }
}

impl LikelihoodModel for GaussianLikelihood {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn block_size(&self) -> usize {
        1
    }

    fn n_eta(&self) -> usize {
        1
    }

    fn log_density<S: Real>(&self, theta: &[S], eta: &[S]) -> S {
        let sigma = eta[0];
        let inv_var = (sigma * sigma).recip();
        let mut ss = S::zero();
        for (&t, &y) in theta.iter().zip(&self.y) {
            let r = -t + y;
            ss += r * r;
        }
        let n = self.y.len() as f64;
        ss * inv_var * -0.5 - sigma.ln() * n - 0.5 * n * (2.0 * PI).ln()
    }
}
