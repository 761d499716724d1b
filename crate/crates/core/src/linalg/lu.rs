use super::{DenseMatrix, LinalgError};

const PIVOT_TOL: f64 = 1e-14;

/// `P A = L U` with unit-lower `L`, upper `U` and row permutation `P`.
///
/// `L` and `U` share one packed matrix; `perm[i]` is the row of `A` that
/// ended up in row `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LUFactors {
    packed: DenseMatrix,
    perm: Vec<usize>,
    parity: f64,
}

impl LUFactors {
    pub fn dim(&self) -> usize {
        self.packed.rows()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Sign of the permutation, `±1`.
    pub fn permutation_sign(&self) -> f64 {
        self.parity
    }

    pub fn l(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => self.packed[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        })
    }

    pub fn u(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| if i <= j { self.packed[(i, j)] } else { 0.0 })
    }

    pub fn p(&self) -> DenseMatrix {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| if self.perm[i] == j { 1.0 } else { 0.0 })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.packed.row(i);
            let s: f64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.packed.row(i);
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A X = M` for every column of `M`.
    pub fn solve_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(m.rows(), n);
        let k = m.cols();
        let mut x = DenseMatrix::from_fn(n, k, |i, j| m[(self.perm[i], j)]);
        for i in 0..n {
            for p in 0..i {
                let lip = self.packed[(i, p)];
                if lip == 0.0 {
                    continue;
                }
                for j in 0..k {
                    let v = x[(p, j)];
                    x[(i, j)] -= lip * v;
                }
            }
        }
        for i in (0..n).rev() {
            for p in i + 1..n {
                let uip = self.packed[(i, p)];
                if uip == 0.0 {
                    continue;
                }
                for j in 0..k {
                    let v = x[(p, j)];
                    x[(i, j)] -= uip * v;
                }
            }
            let uii = self.packed[(i, i)];
            for j in 0..k {
                x[(i, j)] /= uii;
            }
        }
        x
    }

    pub fn log_det(&self) -> Result<f64, LinalgError> {
        log_det_lu(self)
    }
}

/// LU decomposition with partial pivoting.
pub fn lu_decompose(a: &DenseMatrix) -> Result<LUFactors, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!(
            "LU of {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let threshold = PIVOT_TOL * a.norm_inf();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut parity = 1.0;
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pmax >= threshold) || pmax == 0.0 {
            return Err(LinalgError::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            parity = -parity;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= factor * v;
            }
        }
    }
    Ok(LUFactors {
        packed: lu,
        perm,
        parity,
    })
}

/// `log|A| = Σ log|Uᵢᵢ|`, rejecting a negative determinant.
pub fn log_det_lu(f: &LUFactors) -> Result<f64, LinalgError> {
    let mut sign = f.parity;
    let mut acc = 0.0;
    for i in 0..f.dim() {
        let u = f.packed[(i, i)];
        if u < 0.0 {
            sign = -sign;
        }
        acc += u.abs().ln();
    }
    if sign < 0.0 {
        return Err(LinalgError::NegativeDeterminant);
    }
    Ok(acc)
}
