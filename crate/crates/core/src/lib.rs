//! Integrated Laplace approximation for latent Gaussian models.
//!
//! Given a prior θ ~ N(0, K(φ)) and an arbitrary likelihood π(y | θ, η)
//! whose Hessian in θ is block-diagonal, this crate finds the conditional
//! mode, approximates log π(y | φ, η), differentiates that approximation with
//! respect to every hyperparameter by an adjoint method, and draws from the
//! Gaussian approximation of the latent posterior.
//!
//! ```
//! use laplace_core::models::{PoissonLikelihood, SeKernel, CovarianceModel};
//! use laplace_core::newton::{laplace_fit, BStrategy, NewtonSettings};
//!
//! let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
//! let kernel = SeKernel::new(x, 1e-8).unwrap();
//! let lik = PoissonLikelihood::new(&[0.0, 1.0, 3.0, 2.0, 0.0, 1.0]).unwrap();
//! let k = kernel.matrix(&[1.0, 2.0]);
//! let fit = laplace_fit(&k, &lik, &[], &NewtonSettings::default(), BStrategy::B1).unwrap();
//! assert!(fit.log_marginal.is_finite());
//! ```

pub mod adjoint;
pub mod autodiff;
pub mod linalg;
pub mod models;
pub mod newton;
pub mod posterior;
