//! Sampler targets on unconstrained coordinates.

use laplace_core::autodiff::{gradient, Real, ScalarField, SweepCounter};
use laplace_core::models::{CovarianceModel, CovarianceStructure, LikelihoodModel};
use laplace_core::newton::{BStrategy, NewtonSettings};

use crate::hmc::Target;
use crate::problem::Problem;
use crate::with_model;

struct Prior<'a>(&'a Problem);

impl ScalarField for Prior<'_> {
    fn dim(&self) -> usize {
        self.0.n_hyper()
    }
    fn eval<S: Real>(&self, z: &[S]) -> S {
        self.0.log_prior(z)
    }
}

/// log π_G(y | φ, η) + hyperprior + Jacobian, over z = log(φ, η).
pub struct MarginalTarget<'a> {
    pub problem: &'a Problem,
    pub settings: NewtonSettings,
    pub strategy: BStrategy,
}

impl Target for MarginalTarget<'_> {
    fn dim(&self) -> usize {
        self.problem.n_hyper()
    }

    fn log_density_grad(&self, z: &[f64]) -> Option<(f64, Vec<f64>)> {
        let natural: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let (fit, g) = self
            .problem
            .fit_and_gradient(&natural, &self.settings, self.strategy)
            .ok()?;
        let (lp, gp) = gradient(&Prior(self.problem), z, &mut SweepCounter::new()).ok()?;
        let gn = self.problem.natural_gradient(&g, &natural);
        let grad = gn.iter().zip(&natural).zip(&gp).map(|((d, x), p)| d * x + p).collect();
        Some((fit.log_marginal + lp, grad))
    }
}

/// log N(θ | 0, K) for a row-major K.
fn gaussian_log_density<S: Real>(k: &[S], theta: &[S], structure: CovarianceStructure) -> S {
    let n = theta.len();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut acc = S::zero();
    if structure == CovarianceStructure::Diagonal {
        for i in 0..n {
            let v = k[i * n + i];
            acc -= theta[i] * theta[i] / v * 0.5 + v.ln() * 0.5 + half_log_2pi;
        }
        return acc;
    }
    let mut l = vec![S::zero(); n * n];
    for j in 0..n {
        let mut d = k[j * n + j];
        for p in 0..j {
            d -= l[j * n + p] * l[j * n + p];
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = k[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = s / djj;
        }
    }
    let mut v = vec![S::zero(); n];
    for i in 0..n {
        let mut s = theta[i];
        for p in 0..i {
            s -= l[i * n + p] * v[p];
        }
        v[i] = s / l[i * n + i];
        acc -= v[i] * v[i] * 0.5 + l[i * n + i].ln() + half_log_2pi;
    }
    acc
}

/// Joint density over (z, θ).
pub struct FullTarget<'a> {
    pub problem: &'a Problem,
}

impl ScalarField for FullTarget<'_> {
    fn dim(&self) -> usize {
        self.problem.n_hyper() + self.problem.n_latent()
    }

    fn eval<S: Real>(&self, x: &[S]) -> S {
        let h = self.problem.n_hyper();
        let (z, theta) = x.split_at(h);
        let (phi, eta) = self.problem.split_unconstrained(z);
        let prior = self.problem.log_prior(z);
        with_model!(&self.problem.model, |cov, lik| {
            let k = cov.covariance(&phi);
            gaussian_log_density(&k, theta, cov.structure()) + lik.log_density(theta, &eta) + prior
        })
    }
}

impl Target for FullTarget<'_> {
    fn dim(&self) -> usize {
        ScalarField::dim(self)
    }

    fn log_density_grad(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        gradient(self, x, &mut SweepCounter::new()).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_diagonal_gaussian_agree() {
        let k = [4.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.25];
        let th = [1.0, -2.0, 0.3];
        let a = gaussian_log_density(&k, &th, CovarianceStructure::Dense);
        let b = gaussian_log_density(&k, &th, CovarianceStructure::Diagonal);
        assert!((a - b).abs() < 1e-14);
        let want: f64 = th
            .iter()
            .zip([4.0f64, 9.0, 0.25])
            .map(|(t, v)| -0.5 * t * t / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln())
            .sum();
        assert!((a - want).abs() < 1e-14);
    }

    #[test]
    fn correlated_gaussian_matches_closed_form() {
        // K = [[2, 1], [1, 2]]: |K| = 3, K⁻¹ = [[2, −1], [−1, 2]]/3.
        let k = [2.0, 1.0, 1.0, 2.0];
        let th = [0.5, -1.0];
        let quad = (2.0 * 0.25 - 2.0 * 0.5 * -1.0 + 2.0 * 1.0) / 3.0;
        let want = -0.5 * quad - 0.5 * 3.0f64.ln() - (2.0 * std::f64::consts::PI).ln();
        assert!((gaussian_log_density(&k, &th, CovarianceStructure::Dense) - want).abs() < 1e-14);
    }
}
