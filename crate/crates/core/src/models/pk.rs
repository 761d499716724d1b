//! One-compartment pharmacokinetics with first-order absorption from the gut.
//!
//! Each patient gets a bolus dose into the gut at t = 0. The latent vector
//! interleaves patient log-rate offsets, θ = (δ₁¹, δ₂¹, δ₁², δ₂², …), and the
//! patient rates are kᵢⁿ = exp(log kᵢ,pop + δᵢⁿ). The likelihood parameters
//! are η = (log σ, log k₁,pop, log k₂,pop).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{LikelihoodModel, ModelError};
use crate::autodiff::Real;

/// Measurement times of the reference design.
pub const PK_TIMES: [f64; 6] = [0.083, 0.167, 0.25, 1.0, 2.0, 4.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PkParams {
    pub k1: f64,
    pub k2: f64,
    pub m0_gut: f64,
    pub m0_cent: f64,
}

/// Mass in the central compartment, generic in the scalar type.
///
/// The (1 − e^{(k₂−k₁)t})/(k₁ − k₂) factor is evaluated through `exp_m1`,
/// which stays accurate when the rates are close.
pub fn central_mass<S: Real>(t: f64, k1: S, k2: S, m0_gut: f64, m0_cent: f64) -> S {
    let d = k2 - k1;
    let decay = (k2 * -t).exp();
    let absorbed = k1 * m0_gut * (d * t).exp_m1() / d;
    decay * (absorbed + m0_cent)
}

/// (m_gut(t), m_cent(t)) for the analytic solution.
pub fn pk_solution(t: f64, p: &PkParams) -> Result<(f64, f64), ModelError> {
    if !(p.k1 > 0.0) || !(p.k2 >= 0.0) {
        return Err(ModelError::Validation(format!(
            "rates must be positive (k1 = {}, k2 = {})",
            p.k1, p.k2
        )));
    }
    if (p.k1 - p.k2).abs() < 1e-8 {
        return Err(ModelError::Degenerate(format!(
            "k1 = {} and k2 = {} coincide; the analytic solution needs distinct rates",
            p.k1, p.k2
        )));
    }
    let gut = p.m0_gut * (-p.k1 * t).exp();
    let cent = (-p.k2 * t).exp() / (p.k1 - p.k2)
        * (p.m0_gut * p.k1 * (1.0 - ((p.k2 - p.k1) * t).exp()) + (p.k1 - p.k2) * p.m0_cent);
    Ok((gut, cent))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PkPatient {
    pub id: String,
    pub dose: f64,
    pub times: Vec<f64>,
    pub amounts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PkData {
    pub patients: Vec<PkPatient>,
}

impl PkData {
    /// Draws a dataset from the hierarchical model with patient log-rate
    /// offsets δ ~ N(0, τ²) and Gaussian measurement noise σ.
    pub fn simulate<R: Rng>(
        rng: &mut R,
        n_patients: usize,
        times: &[f64],
        k_pop: (f64, f64),
        tau: (f64, f64),
        sigma: f64,
        dose: f64,
    ) -> Result<Self, ModelError> {
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        if bad(k_pop.0) || bad(k_pop.1) || bad(tau.0) || bad(tau.1) || bad(sigma) {
            return Err(ModelError::Validation("simulation parameters must be positive".into()));
        }
        let d1 = Normal::new(0.0, tau.0).map_err(|e| ModelError::Validation(e.to_string()))?;
        let d2 = Normal::new(0.0, tau.1).map_err(|e| ModelError::Validation(e.to_string()))?;
        let noise = Normal::new(0.0, sigma).map_err(|e| ModelError::Validation(e.to_string()))?;
        let mut patients = Vec::with_capacity(n_patients);
        for p in 0..n_patients {
            let k1 = k_pop.0 * d1.sample(rng).exp();
            let k2 = k_pop.1 * d2.sample(rng).exp();
            let amounts = times
                .iter()
                .map(|&t| central_mass(t, k1, k2, dose, 0.0) + noise.sample(rng))
                .collect();
            patients.push(PkPatient {
                id: format!("{}", p + 1),
                dose,
                times: times.to_vec(),
                amounts,
            });
        }
        Ok(Self { patients })
    }

    pub fn n_observations(&self) -> usize {
        self.patients.iter().map(|p| p.times.len()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct PkLikelihood {
    data: PkData,
}

impl PkLikelihood {
    pub fn new(data: PkData) -> Result<Self, ModelError> {
        if data.patients.is_empty() {
            return Err(ModelError::Validation("no patients".into()));
        }
        for p in &data.patients {
            if p.times.len() != p.amounts.len() {
                return Err(ModelError::Validation(format!(
                    "patient {} has {} times but {} amounts",
                    p.id,
                    p.times.len(),
                    p.amounts.len()
                )));
            }
            if !(p.dose > 0.0) {
                return Err(ModelError::Validation(format!(
                    "patient {} has a non-positive dose",
                    p.id
                )));
            }
            if p.times.iter().chain(&p.amounts).any(|v| !v.is_finite()) || p.times.iter().any(|&t| t < 0.0) {
                return Err(ModelError::Validation(format!(
                    "patient {} has invalid measurements",
                    p.id
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &PkData {
        &self.data
    }

    pub fn n_patients(&self) -> usize {
        self.data.patients.len()
    }
}

impl LikelihoodModel for PkLikelihood {
    fn n(&self) -> usize {
        2 * self.data.patients.len()
    }

    fn block_size(&self) -> usize {
        2
    }

    fn n_eta(&self) -> usize {
        3
    }

    fn log_density<S: Real>(&self, theta: &[S], eta: &[S]) -> S {
        let log_sigma = eta[0];
        let inv_var = (log_sigma * -2.0).exp();
        let mut ss = S::zero();
        for (p, patient) in self.data.patients.iter().enumerate() {
            let k1 = (eta[1] + theta[2 * p]).exp();
            let k2 = (eta[2] + theta[2 * p + 1]).exp();
            for (&t, &y) in patient.times.iter().zip(&patient.amounts) {
                let r = -central_mass(t, k1, k2, patient.dose, 0.0) + y;
                ss += r * r;
            }
        }
        let n = self.data.n_observations() as f64;
        ss * inv_var * -0.5 - log_sigma * n - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_condition() {
        let p = PkParams {
            k1: 2.0,
            k2: 1.0,
            m0_gut: 3.0,
            m0_cent: 0.5,
        };
        let (g, c) = pk_solution(0.0, &p).unwrap();
        assert!((g - 3.0).abs() < 1e-15 && (c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_system_conserves_mass() {
        let p = PkParams {
            k1: 1.3,
            k2: 0.0,
            m0_gut: 2.0,
            m0_cent: 0.7,
        };
        for i in 0..20 {
            let (g, c) = pk_solution(i as f64 * 0.25, &p).unwrap();
            assert!((g + c - 2.7).abs() < 1e-13);
        }
    }

    #[test]
    fn generic_form_matches_reference() {
        let p = PkParams {
            k1: 2.0,
            k2: 1.0,
            m0_gut: 1.0,
            m0_cent: 0.2,
        };
        for &t in &PK_TIMES {
            let (_, c) = pk_solution(t, &p).unwrap();
            let g = central_mass(t, p.k1, p.k2, p.m0_gut, p.m0_cent);
            assert!((c - g).abs() < 1e-14);
        }
    }

    #[test]
    fn equal_rates_rejected() {
        let p = PkParams {
            k1: 1.0,
            k2: 1.0 + 1e-10,
            m0_gut: 1.0,
            m0_cent: 0.0,
        };
        assert!(matches!(pk_solution(1.0, &p), Err(ModelError::Degenerate(_))));
    }
}
