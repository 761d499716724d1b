mod common;

use common::*;
use laplace_core::adjoint::{
    compute_a, compute_a_blocks, compute_r, finite_difference_gradient, grad_phi, log_marginal_and_gradient,
    logdet_gradient, marginal_gradient, omega, AdjointOptions,
};
use laplace_core::autodiff::{third_order_diag, Real, SweepCounter};
use laplace_core::linalg::{BlockDiagonal, DenseMatrix};
use laplace_core::models::{
    joint_point, CovarianceModel, DiagCovariance, GaussianLikelihood, IdentityScaled, Joint, LikelihoodModel, PkData,
    PkLikelihood, PoissonLikelihood, SeKernel, StudentTLikelihood, PK_TIMES,
};
use laplace_core::newton::{laplace_fit, BStrategy, NewtonSettings};

fn tight() -> NewtonSettings {
    NewtonSettings {
        tolerance: 1e-12,
        ..NewtonSettings::default()
    }
}

/// Quadratic likelihood −½ Σ wᵢ(θᵢ − yᵢ)² with a fixed curvature, used to
/// place W where a test needs it.
struct FixedCurvature {
    w: Vec<f64>,
    y: Vec<f64>,
}

impl LikelihoodModel for FixedCurvature {
    fn n(&self) -> usize {
        self.w.len()
    }
    fn block_size(&self) -> usize {
        1
    }
    fn n_eta(&self) -> usize {
        0
    }
    fn log_density<S: Real>(&self, theta: &[S], _eta: &[S]) -> S {
        let mut acc = S::zero();
        for i in 0..self.w.len() {
            let r = theta[i] - self.y[i];
            acc -= r * r * (0.5 * self.w[i]);
        }
        acc
    }
}

fn fixed_fit(k: &DenseMatrix, w: f64, strategy: BStrategy) -> laplace_core::newton::LaplaceFit {
    let n = k.rows();
    let lik = FixedCurvature {
        w: vec![w; n],
        y: vec![0.3; n],
    };
    laplace_fit(k, &lik, &[], &tight(), strategy).unwrap()
}

#[test]
fn r_and_a_at_unit_curvature() {
    let k = DenseMatrix::identity(4);
    for s in BStrategy::ALL {
        let fit = fixed_fit(&k, 1.0, s);
        let half = DenseMatrix::identity(4).scale(0.5);
        assert!(compute_r(&fit).unwrap().max_abs_diff(&half) < 1e-14, "{s}");
        assert!(compute_a(&fit).unwrap().max_abs_diff(&half) < 1e-14, "{s}");
    }
}

#[test]
fn small_curvature_limits() {
    let k = DenseMatrix::identity(3);
    for s in BStrategy::ALL {
        let fit = fixed_fit(&k, 1e-8, s);
        let r = compute_r(&fit).unwrap();
        assert!(r.max_abs_diff(&DenseMatrix::identity(3).scale(1e-8)) < 1e-12, "{s}");
    }
    for s in BStrategy::ALL {
        let fit = fixed_fit(&k, 0.0, s);
        assert!(compute_a(&fit).unwrap().max_abs_diff(&k) < 1e-15, "{s}");
    }
}

fn poisson_setup(n: usize) -> (SeKernel, PoissonLikelihood, Vec<f64>) {
    let kern = SeKernel::new(grid(n), 1e-6).unwrap();
    let lik = PoissonLikelihood::new(&poisson_counts(n, 3)).unwrap();
    (kern, lik, vec![1.1, 1.4])
}

#[test]
fn r_and_a_match_dense_oracles() {
    let (kern, lik, phi) = poisson_setup(10);
    let k = kern.matrix(&phi);
    for s in BStrategy::ALL {
        let fit = laplace_fit(&k, &lik, &[], &tight(), s).unwrap();
        let w = fit.w.to_dense();
        let r_oracle = inverse(&(&k + &inverse(&w)));
        let a_oracle = inverse(&(&inverse(&k) + &w));
        assert!(max_rel_err_mat(&compute_r(&fit).unwrap(), &r_oracle) < 1e-8, "{s}");
        assert!(max_rel_err_mat(&compute_a(&fit).unwrap(), &a_oracle) < 1e-8, "{s}");
    }
}

#[test]
fn student_t_a_matches_oracle_under_b3() {
    let x = grid(8);
    let y: Vec<f64> = x.iter().map(|v| v[0].cos()).chain([]).collect();
    let mut y = y;
    y[3] += 4.0;
    let kern = SeKernel::new(x, 1e-6).unwrap();
    let k = kern.matrix(&[1.0, 1.2]);
    let lik = StudentTLikelihood::new(&y, 3.0).unwrap();
    let fit = laplace_fit(&k, &lik, &[(0.3f64).ln()], &tight(), BStrategy::B3).unwrap();
    let a_oracle = inverse(&(&inverse(&k) + &fit.w.to_dense()));
    assert!(max_rel_err_mat(&compute_a(&fit).unwrap(), &a_oracle) < 1e-8);
}

#[test]
fn r_identity_holds() {
    let (kern, lik, phi) = poisson_setup(10);
    let k = kern.matrix(&phi);
    for s in BStrategy::ALL {
        let fit = laplace_fit(&k, &lik, &[], &tight(), s).unwrap();
        let r = compute_r(&fit).unwrap();
        let mut lhs = DenseMatrix::identity(10);
        lhs = &lhs + &k.matmul(&fit.w.to_dense());
        let lhs = inverse(&lhs);
        let rhs = &DenseMatrix::identity(10) - &k.matmul(&r);
        assert!(lhs.max_abs_diff(&rhs) < 1e-8, "{s}");
    }
}

#[test]
fn logdet_gradient_gaussian() {
    let x = grid(6);
    let y: Vec<f64> = x.iter().map(|v| v[0].sin()).collect();
    let k = SeKernel::new(x, 1e-8).unwrap().matrix(&[1.0, 1.0]);
    let lik = GaussianLikelihood::new(&y).unwrap();
    let sigma = 0.5;
    let fit = laplace_fit(&k, &lik, &[sigma], &tight(), BStrategy::B1).unwrap();
    let a = compute_a(&fit).unwrap();
    let (s2, s2p) = logdet_gradient(&lik, &fit.theta, &fit.eta, |i, j| a[(i, j)], &mut SweepCounter::new()).unwrap();
    assert!(s2.iter().all(|v| v.abs() < 1e-14));
    // −½ trace(A W(σ)) with W = σ⁻²I, A held fixed
    let f = |s: f64| -0.5 * a.trace() / (s * s);
    let h = 1e-6;
    let fd = (f(sigma + h) - f(sigma - h)) / (2.0 * h);
    assert!(rel_err(s2p[0], fd) < 1e-5, "{} vs {fd}", s2p[0]);
}

#[test]
fn diagonal_special_case() {
    let (kern, lik, phi) = poisson_setup(10);
    let k = kern.matrix(&phi);
    let fit = laplace_fit(&k, &lik, &[], &tight(), BStrategy::B1).unwrap();
    let a = compute_a(&fit).unwrap();
    let (s2, _) = logdet_gradient(&lik, &fit.theta, &[], |i, j| a[(i, j)], &mut SweepCounter::new()).unwrap();
    let d3 = third_order_diag(&Joint(&lik), &fit.theta, &mut SweepCounter::new()).unwrap();
    for i in 0..10 {
        let want = 0.5 * a[(i, i)] * d3[i];
        assert!(rel_err(s2[i], want) < 1e-8);
    }
}

#[test]
fn omega_limits() {
    let k = DenseMatrix::identity(3);
    let fit = fixed_fit(&k, 1.0, BStrategy::B3);
    let r = compute_r(&fit).unwrap();
    let mut zero_a = fit.clone();
    zero_a.a = vec![0.0; 3];
    let om = omega(&zero_a, &r, &[0.0; 3]);
    assert!(om.max_abs_diff(&r.scale(-0.5)) < 1e-15);

    let small = fixed_fit(&k, 1e-300, BStrategy::B3);
    let r0 = compute_r(&small).unwrap();
    let s2 = [0.1, -0.2, 0.3];
    let om = omega(&small, &r0, &s2);
    let want = DenseMatrix::from_fn(3, 3, |i, j| {
        0.5 * small.a[i] * small.a[j] + s2[i] * small.grad_loglik[j]
    });
    assert!(om.max_abs_diff(&want) < 1e-15);
}

#[test]
fn grad_phi_linear_kernel_and_zero_adjoint() {
    let cov = IdentityScaled { n: 3 };
    let om = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.5, -3.0, 1.0], &[0.0, 0.0, 4.0]]);
    let g = grad_phi(&cov, &[0.7], &om, &mut SweepCounter::new()).unwrap();
    assert!((g[0] - om.trace()).abs() < 1e-15);
    let g = grad_phi(&cov, &[0.7], &DenseMatrix::zeros(3, 3), &mut SweepCounter::new()).unwrap();
    assert_eq!(g, vec![0.0]);
}

#[test]
fn gaussian_gradient_matches_closed_form() {
    let x = grid(10);
    let y: Vec<f64> = x.iter().map(|v| v[0].sin() + 0.2).collect();
    let kern = SeKernel::new(x.clone(), 1e-8).unwrap();
    let lik = GaussianLikelihood::new(&y).unwrap();
    let (amp, ell, sigma) = (1.3, 0.9, 0.35);
    let k = kern.matrix(&[amp, ell]);
    let mut k_free = k.clone();
    k_free.add_diagonal(-1e-8);
    let d_amp = k_free.scale(2.0 / amp);
    let d_ell = DenseMatrix::from_fn(10, 10, |i, j| {
        let d = x[i][0] - x[j][0];
        k_free[(i, j)] * d * d / ell.powi(3)
    });
    let d_sigma = DenseMatrix::identity(10).scale(2.0 * sigma);
    let want = [
        gp_evidence_derivative(&k, sigma, &y, &d_amp),
        gp_evidence_derivative(&k, sigma, &y, &d_ell),
        gp_evidence_derivative(&k, sigma, &y, &d_sigma),
    ];
    for s in BStrategy::ALL {
        let (_, g) = log_marginal_and_gradient(
            &kern,
            &[amp, ell],
            &lik,
            &[sigma],
            &tight(),
            s,
            AdjointOptions::default(),
        )
        .unwrap();
        let got = [g.grad_phi[0], g.grad_phi[1], g.grad_eta[0]];
        assert!(max_rel_err(&got, &want) < 1e-6, "{s}: {got:?} vs {want:?}");
    }
}

fn check_fd<L: LikelihoodModel, C: CovarianceModel>(
    cov: &C,
    phi: &[f64],
    lik: &L,
    eta: &[f64],
    strategy: BStrategy,
    tol: f64,
) {
    let (_, g) = log_marginal_and_gradient(cov, phi, lik, eta, &tight(), strategy, AdjointOptions::default()).unwrap();
    let (fphi, feta) = finite_difference_gradient(cov, phi, lik, eta, &tight(), strategy, 1e-5).unwrap();
    let e_phi = max_rel_err(&g.grad_phi, &fphi);
    let e_eta = max_rel_err(&g.grad_eta, &feta);
    assert!(
        e_phi < tol && e_eta < tol,
        "{strategy}: φ {:?} vs {:?}, η {:?} vs {:?}",
        g.grad_phi,
        fphi,
        g.grad_eta,
        feta
    );
}

#[test]
fn poisson_gradient_matches_finite_differences() {
    let (kern, lik, phi) = poisson_setup(10);
    for s in BStrategy::ALL {
        check_fd(&kern, &phi, &lik, &[], s, 1e-5);
    }
}

#[test]
fn student_t_gradient_matches_finite_differences() {
    let x = grid(8);
    let mut y: Vec<f64> = x.iter().map(|v| v[0].cos()).collect();
    y[2] += 3.0;
    y[6] -= 2.5;
    let kern = SeKernel::new(x, 1e-6).unwrap();
    let lik = StudentTLikelihood::new(&y, 4.0).unwrap();
    check_fd(&kern, &[1.0, 1.1], &lik, &[(0.4f64).ln()], BStrategy::B3, 1e-4);
}

fn pk_fixture(n_patients: usize, seed: u64) -> PkLikelihood {
    let data = PkData::simulate(&mut rng(seed), n_patients, &PK_TIMES, (2.0, 1.0), (0.2, 0.2), 0.1, 1.0).unwrap();
    PkLikelihood::new(data).unwrap()
}

#[test]
fn pk_gradient_matches_finite_differences() {
    let lik = pk_fixture(10, 11);
    let cov = DiagCovariance::new(20, 2).unwrap();
    let eta = [(0.1f64).ln(), (2.0f64).ln(), (1.0f64).ln()];
    for s in [BStrategy::B3, BStrategy::B2] {
        check_fd(&cov, &[0.2, 0.25], &lik, &eta, s, 1e-4);
    }
}

#[test]
fn strategies_agree_on_gradient() {
    let (kern, lik, phi) = poisson_setup(10);
    let grads: Vec<_> = BStrategy::ALL
        .iter()
        .map(|&s| {
            log_marginal_and_gradient(&kern, &phi, &lik, &[], &tight(), s, AdjointOptions::default())
                .unwrap()
                .1
        })
        .collect();
    for g in &grads[1..] {
        assert!(max_rel_err(&g.grad_phi, &grads[0].grad_phi) < 1e-6);
    }
}

#[test]
fn block_only_a_matches_dense_path() {
    let lik = pk_fixture(6, 5);
    let cov = DiagCovariance::new(12, 2).unwrap();
    let eta = [(0.12f64).ln(), (1.9f64).ln(), (1.1f64).ln()];
    for s in [BStrategy::B2, BStrategy::B3] {
        let k = cov.matrix(&[0.3, 0.2]);
        let fit = laplace_fit(&k, &lik, &eta, &tight(), s).unwrap();
        let dense = marginal_gradient(&fit, &cov, &[0.3, 0.2], &lik, AdjointOptions::default()).unwrap();
        let fast = marginal_gradient(&fit, &cov, &[0.3, 0.2], &lik, AdjointOptions { block_only_a: true }).unwrap();
        assert!(max_rel_err(&dense.grad_phi, &fast.grad_phi) < 1e-10);
        assert!(max_rel_err(&dense.grad_eta, &fast.grad_eta) < 1e-10);
        let a = compute_a(&fit).unwrap();
        let blocks = compute_a_blocks(&fit, 2).unwrap();
        assert!(
            blocks
                .to_dense()
                .max_abs_diff(&BlockDiagonal::from_dense_blocks(&a, 2).unwrap().to_dense())
                < 1e-12
        );
    }
}

#[test]
fn logdet_sweeps_are_m_pairs_plus_one() {
    let lik = pk_fixture(4, 9);
    let cov = DiagCovariance::new(8, 2).unwrap();
    let eta = [(0.1f64).ln(), (2.0f64).ln(), 0.0];
    let (_, g) = log_marginal_and_gradient(
        &cov,
        &[0.2, 0.2],
        &lik,
        &eta,
        &tight(),
        BStrategy::B3,
        AdjointOptions::default(),
    )
    .unwrap();
    assert_eq!(g.logdet_sweeps, SweepCounter { forward: 4, reverse: 1 });
}

#[test]
fn no_hyperparameters_no_sweeps() {
    let lik = PoissonLikelihood::new(&[1.0, 2.0]).unwrap();
    struct Fixed;
    impl CovarianceModel for Fixed {
        fn n(&self) -> usize {
            2
        }
        fn n_phi(&self) -> usize {
            0
        }
        fn covariance<S: Real>(&self, _phi: &[S]) -> Vec<S> {
            vec![S::cst(1.0), S::cst(0.2), S::cst(0.2), S::cst(1.0)]
        }
    }
    let fit = laplace_fit(&Fixed.matrix(&[]), &lik, &[], &tight(), BStrategy::B1).unwrap();
    let g = marginal_gradient(&fit, &Fixed, &[], &lik, AdjointOptions::default()).unwrap();
    assert!(g.grad_phi.is_empty() && g.grad_eta.is_empty());
    assert_eq!(g.sweeps, SweepCounter::default());
    let _ = joint_point(&[], &[]);
}
