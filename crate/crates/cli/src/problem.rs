//! A configured model: data, covariance, likelihood and the map between
//! the sampler's unconstrained coordinates and (φ, η).
//!
//! Every hyperparameter is positive and its unconstrained coordinate is
//! its logarithm, so z = log(φ, η_natural).

use laplace_core::adjoint::{log_marginal_and_gradient, AdjointOptions, MarginalGradient};
use laplace_core::autodiff::Real;
use laplace_core::models::{
    load_gp_csv, load_pk_csv, CovarianceModel, DiagCovariance, GaussianLikelihood, LikelihoodModel, PkLikelihood,
    PoissonLikelihood, SeKernel, StudentTLikelihood,
};
use laplace_core::newton::{BStrategy, LaplaceFit, NewtonSettings};

use crate::config::ModelConfig;
use crate::error::CliError;

pub enum Model {
    Gaussian { cov: SeKernel, lik: GaussianLikelihood },
    Poisson { cov: SeKernel, lik: PoissonLikelihood },
    StudentT { cov: SeKernel, lik: StudentTLikelihood },
    Pk { cov: DiagCovariance, lik: PkLikelihood },
}

/// Runs `$body` with `$cov` and `$lik` bound to the concrete model types.
#[macro_export]
macro_rules! with_model {
    ($model:expr, |$cov:ident, $lik:ident| $body:expr) => {
        match $model {
            $crate::problem::Model::Gaussian { cov: $cov, lik: $lik } => $body,
            $crate::problem::Model::Poisson { cov: $cov, lik: $lik } => $body,
            $crate::problem::Model::StudentT { cov: $cov, lik: $lik } => $body,
            $crate::problem::Model::Pk { cov: $cov, lik: $lik } => $body,
        }
    };
}

pub struct Problem {
    pub model: Model,
    pub names: Vec<String>,
    /// Natural-scale hyperparameters from the config.
    pub initial: Vec<f64>,
    pub n_phi: usize,
}

fn kernel(x: Vec<Vec<f64>>, lengthscales: &[f64], nugget: f64) -> Result<(SeKernel, Vec<String>), CliError> {
    let d = x.first().map_or(0, Vec::len);
    let mut names = vec!["amplitude".to_string()];
    let kern = if lengthscales.len() == 1 {
        names.push("lengthscale".into());
        SeKernel::new(x, nugget)?
    } else if lengthscales.len() == d {
        names.extend((1..=d).map(|k| format!("lengthscale_{k}")));
        SeKernel::ard(x, nugget)?
    } else {
        return Err(CliError::Config(format!(
            "{} lengthscales given for {d} input columns",
            lengthscales.len()
        )));
    };
    Ok((kern, names))
}

impl Problem {
    pub fn from_config(cfg: &ModelConfig) -> Result<Self, CliError> {
        match cfg {
            ModelConfig::GaussianGp {
                data,
                amplitude,
                lengthscales,
                sigma,
                nugget,
            } => {
                let d = load_gp_csv(data)?;
                let (cov, mut names) = kernel(d.x, lengthscales, *nugget)?;
                let n_phi = names.len();
                names.push("sigma".into());
                let mut initial = vec![*amplitude];
                initial.extend(lengthscales);
                initial.push(*sigma);
                Ok(Self {
                    model: Model::Gaussian {
                        cov,
                        lik: GaussianLikelihood::new(&d.y)?,
                    },
                    names,
                    initial,
                    n_phi,
                })
            }
            ModelConfig::PoissonGp {
                data,
                amplitude,
                lengthscales,
                nugget,
            } => {
                let d = load_gp_csv(data)?;
                let (cov, names) = kernel(d.x, lengthscales, *nugget)?;
                let mut initial = vec![*amplitude];
                initial.extend(lengthscales);
                Ok(Self {
                    n_phi: names.len(),
                    model: Model::Poisson {
                        cov,
                        lik: PoissonLikelihood::new(&d.y)?,
                    },
                    names,
                    initial,
                })
            }
            ModelConfig::StudentTGp {
                data,
                amplitude,
                lengthscales,
                sigma,
                nu,
                nugget,
            } => {
                let d = load_gp_csv(data)?;
                let (cov, mut names) = kernel(d.x, lengthscales, *nugget)?;
                let n_phi = names.len();
                names.push("sigma".into());
                let mut initial = vec![*amplitude];
                initial.extend(lengthscales);
                initial.push(*sigma);
                Ok(Self {
                    model: Model::StudentT {
                        cov,
                        lik: StudentTLikelihood::new(&d.y, *nu)?,
                    },
                    names,
                    initial,
                    n_phi,
                })
            }
            ModelConfig::Pk {
                data,
                dose,
                tau,
                sigma,
                k1pop,
                k2pop,
            } => {
                let lik = PkLikelihood::new(load_pk_csv(data, *dose)?)?;
                let cov = DiagCovariance::new(lik.n(), 2)?;
                Ok(Self {
                    model: Model::Pk { cov, lik },
                    names: ["tau1", "tau2", "sigma", "k1pop", "k2pop"].map(String::from).to_vec(),
                    initial: vec![tau[0], tau[1], *sigma, *k1pop, *k2pop],
                    n_phi: 2,
                })
            }
        }
    }

    pub fn n_hyper(&self) -> usize {
        self.names.len()
    }

    pub fn n_latent(&self) -> usize {
        with_model!(&self.model, |_c, lik| lik.n())
    }

    /// Splits natural hyperparameters into φ and the likelihood's η.
    pub fn split(&self, natural: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let phi = natural[..self.n_phi].to_vec();
        let rest = &natural[self.n_phi..];
        let eta = match self.model {
            Model::Gaussian { .. } | Model::Poisson { .. } => rest.to_vec(),
            Model::StudentT { .. } | Model::Pk { .. } => rest.iter().map(|v| v.ln()).collect(),
        };
        (phi, eta)
    }

    /// dη/d(natural) for each η coordinate.
    fn eta_scale(&self, natural: &[f64]) -> Vec<f64> {
        let rest = &natural[self.n_phi..];
        match self.model {
            Model::Gaussian { .. } | Model::Poisson { .. } => vec![1.0; rest.len()],
            Model::StudentT { .. } | Model::Pk { .. } => rest.iter().map(|v| 1.0 / v).collect(),
        }
    }

    /// Same map for AD scalars, from unconstrained z.
    pub fn split_unconstrained<S: Real>(&self, z: &[S]) -> (Vec<S>, Vec<S>) {
        let phi = z[..self.n_phi].iter().map(|v| v.exp()).collect();
        let rest = &z[self.n_phi..];
        let eta = match self.model {
            Model::Gaussian { .. } | Model::Poisson { .. } => rest.iter().map(|v| v.exp()).collect(),
            Model::StudentT { .. } | Model::Pk { .. } => rest.to_vec(),
        };
        (phi, eta)
    }

    pub fn fit(&self, natural: &[f64], settings: &NewtonSettings, strategy: BStrategy) -> Result<LaplaceFit, CliError> {
        let (phi, eta) = self.split(natural);
        with_model!(&self.model, |cov, lik| {
            cov.validate_phi(&phi)?;
            Ok(laplace_core::newton::laplace_fit(
                &cov.matrix(&phi),
                lik,
                &eta,
                settings,
                strategy,
            )?)
        })
    }

    /// Fit plus adjoint gradient with respect to (φ, η) in the
    /// likelihood's own η coordinates.
    pub fn fit_and_gradient(
        &self,
        natural: &[f64],
        settings: &NewtonSettings,
        strategy: BStrategy,
    ) -> Result<(LaplaceFit, MarginalGradient), CliError> {
        let (phi, eta) = self.split(natural);
        with_model!(&self.model, |cov, lik| Ok(log_marginal_and_gradient(
            cov,
            &phi,
            lik,
            &eta,
            settings,
            strategy,
            AdjointOptions::default()
        )?))
    }

    /// Log marginal and its gradient with respect to the natural
    /// hyperparameters.
    pub fn natural_gradient(&self, g: &MarginalGradient, natural: &[f64]) -> Vec<f64> {
        let mut out = g.grad_phi.clone();
        out.extend(g.grad_eta.iter().zip(self.eta_scale(natural)).map(|(d, s)| d * s));
        out
    }

    /// Hyperprior on z, Jacobian included. PK: half-normal(0, 1) on τ and
    /// σ, Normal(2, 0.5) on k1pop, Normal(1, 0.5) on k2pop. GP models:
    /// standard normal on each log hyperparameter.
    pub fn log_prior<S: Real>(&self, z: &[S]) -> S {
        let mut acc = S::zero();
        match self.model {
            Model::Pk { .. } => {
                for &zi in &z[..3] {
                    let v = zi.exp();
                    acc += zi - v * v * 0.5;
                }
                for (zi, mu) in z[3..].iter().zip([2.0, 1.0]) {
                    let r = (zi.exp() - mu) * 2.0;
                    acc += *zi - r * r * 0.5;
                }
            }
            _ => {
                for &zi in z {
                    acc -= zi * zi * 0.5;
                }
            }
        }
        acc
    }
}
