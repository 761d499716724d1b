mod common;

use common::*;
use laplace_core::autodiff::{
    block_hessian, dense_hessian, fwd_sweep, gradient, third_order_diag, ScalarField, SweepCounter,
};
use laplace_core::models::{
    joint_point, load_gp_csv, load_pk_csv, pk_solution, CovarianceMap, CovarianceModel, DiagCovariance,
    GaussianLikelihood, Joint, LikelihoodModel, ModelError, PkData, PkLikelihood, PkParams, PoissonLikelihood,
    SeKernel, StudentTLikelihood, PK_TIMES,
};
use rand::Rng;

const H: f64 = 1e-6;

fn fd_grad<F: ScalarField>(f: &F, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += H;
            m[i] -= H;
            (f.eval(&p) - f.eval(&m)) / (2.0 * H)
        })
        .collect()
}

/// Gradient, Hessian blocks and (for m = 1) third-order diagonal against
/// differences of the next-lower order.
fn check_derivatives<L: LikelihoodModel>(lik: &L, theta: &[f64], eta: &[f64], label: &str) {
    let f = Joint(lik);
    let x = joint_point(theta, eta);
    let n = lik.n();
    let (_, g) = gradient(&f, &x, &mut SweepCounter::new()).unwrap();
    assert!(max_rel_err(&g, &fd_grad(&f, &x)) < 1e-6, "{label}: gradient");

    let m = lik.block_size();
    let blocks = block_hessian(&f, &x, n, m, &mut SweepCounter::new()).unwrap();
    let grad_at = |i: usize, s: f64| {
        let mut p = x.clone();
        p[i] += s;
        gradient(&f, &p, &mut SweepCounter::new()).unwrap().1
    };
    for j in 0..n {
        let (gp, gm) = (grad_at(j, H), grad_at(j, -H));
        let b = j / m;
        for i in b * m..(b + 1) * m {
            let fd = (gp[i] - gm[i]) / (2.0 * H);
            assert!(
                rel_err(blocks.get(i, j), fd) < 1e-5,
                "{label}: H[{i},{j}] {} vs {fd}",
                blocks.get(i, j)
            );
        }
    }

    if m == 1 {
        let theta_only = ThetaSlice { lik, eta };
        let third = third_order_diag(&theta_only, theta, &mut SweepCounter::new()).unwrap();
        for i in 0..n {
            let h_at = |s: f64| {
                let mut p = x.clone();
                p[i] += s;
                block_hessian(&f, &p, n, 1, &mut SweepCounter::new()).unwrap().get(i, i)
            };
            let fd = (h_at(H) - h_at(-H)) / (2.0 * H);
            assert!(rel_err(third[i], fd) < 1e-4, "{label}: third[{i}] {} vs {fd}", third[i]);
        }
    }
}

/// log π as a function of θ alone.
struct ThetaSlice<'a, L> {
    lik: &'a L,
    eta: &'a [f64],
}

impl<L: LikelihoodModel> ScalarField for ThetaSlice<'_, L> {
    fn dim(&self) -> usize {
        self.lik.n()
    }
    fn eval<S: laplace_core::autodiff::Real>(&self, x: &[S]) -> S {
        let eta: Vec<S> = self.eta.iter().map(|v| S::cst(*v)).collect();
        self.lik.log_density(x, &eta)
    }
}

fn pk(patients: usize, seed: u64) -> PkLikelihood {
    let data = PkData::simulate(&mut rng(seed), patients, &PK_TIMES, (1.5, 0.7), (0.2, 0.2), 0.05, 1.0).unwrap();
    PkLikelihood::new(data).unwrap()
}

#[test]
fn likelihood_derivatives_match_finite_differences() {
    let mut g = rng(77);
    let n = 6;
    let counts = poisson_counts(n, 5);
    let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin()).collect();
    let poisson = PoissonLikelihood::new(&counts).unwrap();
    let gauss = GaussianLikelihood::new(&y).unwrap();
    let student = StudentTLikelihood::new(&y, 3.5).unwrap();
    let pk = pk(3, 4);
    for point in 0..10 {
        let theta: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
        check_derivatives(&poisson, &theta, &[], &format!("poisson {point}"));
        check_derivatives(
            &gauss,
            &theta,
            &[g.random_range(0.3..1.5)],
            &format!("gaussian {point}"),
        );
        check_derivatives(
            &student,
            &theta,
            &[g.random_range(-1.0f64..0.5)],
            &format!("student-t {point}"),
        );
        let eta = [
            g.random_range(-3.0..-1.5),
            g.random_range(0.2..0.6),
            g.random_range(-0.6..-0.2),
        ];
        let th: Vec<f64> = (0..pk.n()).map(|_| g.random_range(-0.3..0.3)).collect();
        check_derivatives(&pk, &th, &eta, &format!("pk {point}"));
    }
}

#[test]
fn pk_solution_matches_ode() {
    let mut g = rng(31);
    let mut pairs = 0;
    while pairs < 20 {
        let (k1, k2): (f64, f64) = (g.random_range(0.2..3.0), g.random_range(0.2..3.0));
        if (k1 - k2).abs() <= 0.1 {
            continue;
        }
        pairs += 1;
        let p = PkParams {
            k1,
            k2,
            m0_gut: g.random_range(0.5..2.0),
            m0_cent: g.random_range(0.0..0.5),
        };
        for i in 0..50 {
            let t = 4.0 * i as f64 / 49.0;
            let (gut, cent) = pk_solution(t, &p).unwrap();
            let (og, oc) = pk_ode(t, k1, k2, (p.m0_gut, p.m0_cent));
            assert!(rel_err(gut, og) < 1e-7, "gut at t={t}, k=({k1},{k2})");
            assert!(
                rel_err(cent, oc) < 1e-7,
                "central at t={t}, k=({k1},{k2}): {cent} vs {oc}"
            );
        }
    }
}

#[test]
fn pk_hessian_is_two_by_two_block_diagonal() {
    let lik = pk(5, 12);
    let mut g = rng(8);
    for _ in 0..10 {
        let theta: Vec<f64> = (0..lik.n()).map(|_| g.random_range(-0.4..0.4)).collect();
        let eta = [
            g.random_range(-3.0..-1.5),
            g.random_range(0.2..0.6),
            g.random_range(-0.6..-0.2),
        ];
        let h = dense_hessian(&Joint(&lik), &joint_point(&theta, &eta), &mut SweepCounter::new()).unwrap();
        for i in 0..lik.n() {
            for j in 0..lik.n() {
                if i / 2 != j / 2 {
                    assert!(h[(i, j)].abs() < 1e-12, "({i},{j}) = {:e}", h[(i, j)]);
                }
            }
        }
    }
}

#[test]
fn poisson_curvature_is_exp_theta() {
    let y = [0.0, 3.0, 1.0, 7.0];
    let lik = PoissonLikelihood::new(&y).unwrap();
    let theta = [0.4, -1.2, 2.0, 0.0];
    let w = block_hessian(&Joint(&lik), &theta, 4, 1, &mut SweepCounter::new()).unwrap();
    for i in 0..4 {
        assert!(rel_err(-w.get(i, i), theta[i].exp()) < 1e-14);
    }
}

#[test]
fn student_t_curvature_changes_sign() {
    // −∂²/∂θ² log t_ν((y − θ)/σ) = (ν+1)(νσ² − r²)/(νσ² + r²)², negative
    // once |r| > σ√ν.
    let nu = 4.0;
    let sigma: f64 = 0.5;
    let lik = StudentTLikelihood::new(&[0.0, 0.0, 0.0], nu).unwrap();
    let theta = [0.2, 1.0, 3.0];
    let w = block_hessian(
        &Joint(&lik),
        &joint_point(&theta, &[sigma.ln()]),
        3,
        1,
        &mut SweepCounter::new(),
    )
    .unwrap();
    for (i, r) in theta.iter().enumerate() {
        let s2 = nu * sigma * sigma;
        let want = (nu + 1.0) * (s2 - r * r) / (s2 + r * r).powi(2);
        assert!(rel_err(-w.get(i, i), want) < 1e-12, "{i}");
    }
    assert!(-w.get(0, 0) > 0.0 && -w.get(2, 2) < 0.0);
}

#[test]
fn kernel_jacobian_matches_finite_differences() {
    let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.6, (i as f64).sin()]).collect();
    for kern in [
        SeKernel::new(x.clone(), 1e-6).unwrap(),
        SeKernel::ard(x.clone(), 0.0).unwrap(),
    ] {
        let map = CovarianceMap(&kern);
        let phi: Vec<f64> = (0..kern.n_phi()).map(|i| 0.8 + 0.3 * i as f64).collect();
        for j in 0..phi.len() {
            let mut e = vec![0.0; phi.len()];
            e[j] = 1.0;
            let got = fwd_sweep(&map, &phi, &e, &mut SweepCounter::new()).unwrap();
            let mut p = phi.clone();
            let mut m = phi.clone();
            p[j] += H;
            m[j] -= H;
            let fd: Vec<f64> = kern
                .matrix(&p)
                .as_slice()
                .iter()
                .zip(kern.matrix(&m).as_slice())
                .map(|(a, b)| (a - b) / (2.0 * H))
                .collect();
            assert!(max_rel_err(&got, &fd) < 1e-8, "φ[{j}]");
        }
    }
    let d = DiagCovariance::new(6, 2).unwrap();
    let got = fwd_sweep(&CovarianceMap(&d), &[0.5, 2.0], &[1.0, 0.0], &mut SweepCounter::new()).unwrap();
    assert_eq!(got[0], 1.0);
    assert_eq!(got[7], 0.0);
}

#[test]
fn csv_loaders_round_trip_and_report_lines() {
    let dir = std::env::temp_dir().join(format!("laplace-models-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let pk_path = dir.join("pk.csv");
    std::fs::write(&pk_path, "patient_id,time,amount\na,0.5,0.3\na,1,0.4\nb,0.5,0.2\n").unwrap();
    let data = load_pk_csv(&pk_path, 1.0).unwrap();
    assert_eq!(data.patients.len(), 2);
    assert_eq!(data.n_observations(), 3);

    let bad = dir.join("bad.csv");
    std::fs::write(&bad, "patient_id,time,amount\na,0.5,0.3\na,1,0.4\nb,x,0.2\n").unwrap();
    assert!(matches!(load_pk_csv(&bad, 1.0), Err(ModelError::Load { line: 4, .. })));

    let gp = dir.join("gp.csv");
    std::fs::write(&gp, "x,y\n0.0,1\n0.5,2\n").unwrap();
    assert_eq!(load_gp_csv(&gp).unwrap().y, vec![1.0, 2.0]);
    assert!(matches!(load_gp_csv(&dir.join("missing.csv")), Err(ModelError::Io(_))));
    std::fs::remove_dir_all(&dir).ok();
}
