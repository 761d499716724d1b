use super::{DenseMatrix, LinalgError};

const SYMMETRY_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-14;

/// Lower-triangular `L` with strictly positive diagonal, `L Lᵀ = A`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    l: DenseMatrix,
}

impl CholeskyFactor {
    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_lower_t(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b` with `A = L Lᵀ`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_lower_t(&self.solve_lower(b))
    }

    /// `L \ M` column by column.
    pub fn solve_lower_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(m.rows(), n);
        let mut x = m.clone();
        for i in 0..n {
            let lii = self.l[(i, i)];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                for j in 0..m.cols() {
                    let v = x[(k, j)];
                    x[(i, j)] -= lik * v;
                }
            }
            for j in 0..m.cols() {
                x[(i, j)] /= lii;
            }
        }
        x
    }

    /// `Lᵀ \ M`.
    pub fn solve_lower_t_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(m.rows(), n);
        let mut x = m.clone();
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = self.l[(k, i)];
                if lki == 0.0 {
                    continue;
                }
                for j in 0..m.cols() {
                    let v = x[(k, j)];
                    x[(i, j)] -= lki * v;
                }
            }
            let lii = self.l[(i, i)];
            for j in 0..m.cols() {
                x[(i, j)] /= lii;
            }
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        log_det_chol(self)
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(a: &DenseMatrix) -> Result<CholeskyFactor, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "cholesky of {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs().max(1.0);
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let n = a.rows();
    let max_diag = a.diagonal().iter().fold(0.0_f64, |acc, d| acc.max(*d));
    let threshold = PIVOT_TOL * max_diag;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            let (ri, rj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor { l })
}

/// Cholesky of a positive semi-definite matrix, allowing zero pivots whose
/// trailing column is numerically zero. The resulting diagonal may contain
/// zeros, so the factor is only suitable for multiplication (e.g. sampling),
/// not for solves.
pub fn cholesky_semidefinite(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(
            "semi-definite cholesky needs a square matrix".into(),
        ));
    }
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    super::block::semidefinite_cholesky_in_place(a.as_slice(), n, &mut l)
        .map_err(|(pivot, value)| LinalgError::NotPositiveDefinite { pivot, value })?;
    DenseMatrix::from_row_major(n, n, l)
}

/// `log|A| = 2 Σ log Lᵢᵢ`.
pub fn log_det_chol(factor: &CholeskyFactor) -> f64 {
    2.0 * factor.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
