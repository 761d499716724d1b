#![allow(dead_code)]

use laplace_core::linalg::{BlockDiagonal, DenseMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn from_na(a: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn inverse(a: &DenseMatrix) -> DenseMatrix {
    from_na(&to_na(a).try_inverse().expect("invertible"))
}

/// log|A| of a symmetric positive definite matrix from its eigenvalues.
pub fn log_det_eigen(a: &DenseMatrix) -> f64 {
    let mut m = to_na(a);
    m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().iter().map(|v| v.ln()).sum()
}

/// log|A| for a general matrix with positive determinant.
pub fn log_det_general(a: &DenseMatrix) -> f64 {
    let d = to_na(a).determinant();
    assert!(d > 0.0, "determinant {d}");
    d.ln()
}

pub fn min_eigenvalue(a: &DenseMatrix) -> f64 {
    let m = to_na(a);
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DenseMatrix {
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut a = g.t_matmul(&g);
    a.add_diagonal(0.5);
    a.symmetrize();
    a
}

pub fn random_block_spd<R: Rng>(rng: &mut R, n: usize, m: usize) -> BlockDiagonal {
    let mut w = BlockDiagonal::zeros(n, m).unwrap();
    for b in 0..n / m {
        let blk = random_spd(rng, m);
        for r in 0..m {
            for c in 0..m {
                w.set(b * m + r, b * m + c, blk[(r, c)] * 0.5);
            }
        }
    }
    w
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter().zip(want).map(|(g, w)| rel_err(*g, *w)).fold(0.0, f64::max)
}

pub fn max_rel_err_mat(got: &DenseMatrix, want: &DenseMatrix) -> f64 {
    max_rel_err(got.as_slice(), want.as_slice())
}

/// Gaussian-process evidence log N(y | 0, K + σ²I).
pub fn gp_evidence(k: &DenseMatrix, sigma: f64, y: &[f64]) -> f64 {
    let mut c = k.clone();
    c.add_diagonal(sigma * sigma);
    let ci = inverse(&c);
    let quad: f64 = y.iter().zip(ci.matvec(y)).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * log_det_eigen(&c) - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// d/dψ of the evidence for a covariance derivative dC = ∂(K + σ²I)/∂ψ.
pub fn gp_evidence_derivative(k: &DenseMatrix, sigma: f64, y: &[f64], dc: &DenseMatrix) -> f64 {
    let mut c = k.clone();
    c.add_diagonal(sigma * sigma);
    let ci = inverse(&c);
    let alpha = ci.matvec(y);
    let quad: f64 = alpha.iter().zip(dc.matvec(&alpha)).map(|(a, b)| a * b).sum();
    0.5 * quad - 0.5 * ci.matmul(dc).trace()
}

/// Unit grid inputs in one dimension.
pub fn grid(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| vec![i as f64 / (n as f64 - 1.0).max(1.0) * 4.0])
        .collect()
}

/// Poisson counts drawn from exp(f) for a smooth f.
pub fn poisson_counts(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let f = 1.0 + (i as f64 * 0.7).sin();
            let lam = f.exp();
            // inversion sampling
            let u: f64 = r.random();
            let mut k = 0u32;
            let mut p = (-lam).exp();
            let mut cdf = p;
            while u > cdf && k < 200 {
                k += 1;
                p *= lam / k as f64;
                cdf += p;
            }
            k as f64
        })
        .collect()
}

/// Classical fourth/fifth-order Dormand–Prince integration of the
/// one-compartment system, with adaptive steps.
pub fn pk_ode(t_end: f64, k1: f64, k2: f64, m0: (f64, f64)) -> (f64, f64) {
    let f = |y: [f64; 2]| [-k1 * y[0], k1 * y[0] - k2 * y[1]];
    let (c2, c3, c4, c5) = (1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0);
    let a = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
        ],
    ];
    let b5 = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    let b4 = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let _ = (c2, c3, c4, c5);
    let mut y = [m0.0, m0.1];
    let mut t = 0.0;
    let mut h = 1e-3;
    let tol = 1e-13;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let mut k = [[0.0; 2]; 7];
        k[0] = f(y);
        for s in 1..6 {
            let mut ys = y;
            for d in 0..2 {
                ys[d] += h * (0..s).map(|j| a[s - 1][j] * k[j][d]).sum::<f64>();
            }
            k[s] = f(ys);
        }
        let mut y5 = y;
        for d in 0..2 {
            y5[d] += h * (0..6).map(|j| b5[j] * k[j][d]).sum::<f64>();
        }
        k[6] = f(y5);
        let mut err: f64 = 0.0;
        for d in 0..2 {
            let y4 = y[d] + h * (0..7).map(|j| b4[j] * k[j][d]).sum::<f64>();
            err = err.max((y5[d] - y4).abs() / (1.0 + y5[d].abs()));
        }
        if err <= tol {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    (y[0], y[1])
}
