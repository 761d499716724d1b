mod common;

use common::*;
use laplace_core::adjoint::{a_matrix, r_matrix};
use laplace_core::linalg::{cholesky, log_det_lu, lu_decompose, symmetric_eigen, BlockDiagonal, DenseMatrix};
use laplace_core::models::{CovarianceModel, PoissonLikelihood, SeKernel};
use laplace_core::newton::{b_matrix, factorize, laplace_fit, BStrategy, NewtonSettings};
use proptest::prelude::*;
use rand::Rng;

fn pair(seed: u64) -> (DenseMatrix, BlockDiagonal) {
    let mut g = rng(seed);
    let m = [1, 2, 3][g.random_range(0..3)];
    let n = m * g.random_range(1..=12 / m);
    (random_spd(&mut g, n), random_block_spd(&mut g, n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn woodbury_forms_agree_with_dense_inverse(seed in any::<u64>()) {
        let (k, w) = pair(seed);
        let mut kw = inverse(&k);
        let wd = w.to_dense();
        kw = &kw + &wd;
        let want = inverse(&kw);
        for s in BStrategy::ALL {
            let f = factorize(&k, &w, s).unwrap();
            let got = a_matrix(&k, &f);
            prop_assert!(max_rel_err_mat(&got, &want) < 1e-8, "{s}: {}", max_rel_err_mat(&got, &want));
        }
    }

    #[test]
    fn r_identity(seed in any::<u64>()) {
        let (k, w) = pair(seed);
        let n = k.rows();
        let mut ikw = w.dense_mul(&k);
        ikw.add_diagonal(1.0);
        let want = inverse(&ikw);
        for s in BStrategy::ALL {
            let r = r_matrix(&k, &factorize(&k, &w, s).unwrap());
            let got = &DenseMatrix::identity(n) - &k.matmul(&r);
            prop_assert!(got.max_abs_diff(&want) < 1e-8, "{s}");
        }
    }

    #[test]
    fn determinant_identity(seed in any::<u64>()) {
        let (k, w) = pair(seed);
        let mut inner = inverse(&k);
        inner = &inner + &w.to_dense();
        let want = log_det_eigen(&k) + log_det_eigen(&inner);
        for s in BStrategy::ALL {
            let got = factorize(&k, &w, s).unwrap().log_det().unwrap();
            prop_assert!((got - want).abs() < 1e-8, "{s}: {got} vs {want}");
            let dense = log_det_general(&b_matrix(&k, &w, s).unwrap());
            prop_assert!((dense - want).abs() < 1e-8, "{s} dense form");
        }
    }

    #[test]
    fn cholesky_exists_iff_positive_definite(seed in any::<u64>(), shift in -1.0f64..1.0) {
        let mut g = rng(seed);
        let n = g.random_range(1..=12);
        let mut a = random_spd(&mut g, n);
        let lo = min_eigenvalue(&a);
        // Move the spectrum so that its minimum lands at `shift`.
        a.add_diagonal(shift - lo);
        let oracle = min_eigenvalue(&a);
        if oracle.abs() > 1e-9 {
            prop_assert_eq!(cholesky(&a).is_ok(), oracle > 0.0, "min eigenvalue {}", oracle);
        }
    }

    #[test]
    fn factorizations_reconstruct(seed in any::<u64>()) {
        let mut g = rng(seed);
        let n = g.random_range(1..=12);
        let a = random_spd(&mut g, n);
        let l = cholesky(&a).unwrap();
        prop_assert!(l.l().matmul(&l.l().transpose()).max_abs_diff(&a) < 1e-10 * a.max_abs());
        let gen = DenseMatrix::from_fn(n, n, |_, _| g.random_range(-1.0..1.0));
        let lu = lu_decompose(&gen).unwrap();
        let back = lu.p().t_matmul(&lu.l().matmul(&lu.u()));
        prop_assert!(back.max_abs_diff(&gen) < 1e-10);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        let rebuilt = vecs.matmul(&DenseMatrix::from_diagonal(&vals)).matmul(&vecs.transpose());
        prop_assert!(rebuilt.max_abs_diff(&a) < 1e-10 * a.max_abs());
    }
}

#[test]
fn lu_and_cholesky_log_det_agree_on_poisson_fit() {
    let n = 12;
    let y = poisson_counts(n, 4);
    let kern = SeKernel::new(grid(n), 1e-8).unwrap();
    let k = kern.matrix(&[1.1, 0.9]);
    let lik = PoissonLikelihood::new(&y).unwrap();
    let fit = laplace_fit(&k, &lik, &[], &NewtonSettings::default(), BStrategy::B1).unwrap();
    let b1 = b_matrix(&k, &fit.w, BStrategy::B1).unwrap();
    let via_chol = cholesky(&b1).unwrap().log_det();
    let via_lu = log_det_lu(&lu_decompose(&b1).unwrap()).unwrap();
    assert!((via_chol - via_lu).abs() < 1e-10);
    let b3 = b_matrix(&k, &fit.w, BStrategy::B3).unwrap();
    assert!((log_det_lu(&lu_decompose(&b3).unwrap()).unwrap() - via_chol).abs() < 1e-8);
}
