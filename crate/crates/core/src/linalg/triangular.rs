use super::{DenseMatrix, LinalgError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Triangle {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Solve `op(T) X = B`.
    Left,
    /// Solve `X op(T) = B`.
    Right,
}

/// Triangular solve with `op(T) = T` or `Tᵀ` depending on `transpose`.
///
/// Only the referenced triangle of `t` is read.
pub fn tri_solve(
    t: &DenseMatrix,
    uplo: Triangle,
    transpose: bool,
    side: Side,
    b: &DenseMatrix,
) -> Result<DenseMatrix, LinalgError> {
    if !t.is_square() {
        return Err(LinalgError::Dimension("triangular matrix must be square".into()));
    }
    let n = t.rows();
    if let Some(i) = (0..n).find(|&i| t[(i, i)] == 0.0) {
        return Err(LinalgError::Singular { pivot: i });
    }
    match side {
        Side::Left => {
            if b.rows() != n {
                return Err(LinalgError::Dimension(format!(
                    "rhs has {} rows, expected {n}",
                    b.rows()
                )));
            }
            Ok(solve_left(t, uplo, transpose, b))
        }
        Side::Right => {
            if b.cols() != n {
                return Err(LinalgError::Dimension(format!(
                    "rhs has {} cols, expected {n}",
                    b.cols()
                )));
            }
            // X op(T) = B  <=>  op(T)ᵀ Xᵀ = Bᵀ
            Ok(solve_left(t, uplo, !transpose, &b.transpose()).transpose())
        }
    }
}

/// Vector form of a left triangular solve.
pub fn tri_solve_vec(t: &DenseMatrix, uplo: Triangle, transpose: bool, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let rhs = DenseMatrix::from_row_major(b.len(), 1, b.to_vec())?;
    Ok(tri_solve(t, uplo, transpose, Side::Left, &rhs)?.into_vec())
}

fn solve_left(t: &DenseMatrix, uplo: Triangle, transpose: bool, b: &DenseMatrix) -> DenseMatrix {
    let n = t.rows();
    let k = b.cols();
    // Effective entry of op(T).
    let at = |i: usize, j: usize| if transpose { t[(j, i)] } else { t[(i, j)] };
    let lower = (uplo == Triangle::Lower) != transpose;
    let mut x = b.clone();
    let order: Box<dyn Iterator<Item = usize>> = if lower { Box::new(0..n) } else { Box::new((0..n).rev()) };
    for i in order {
        let range = if lower { 0..i } else { i + 1..n };
        for p in range {
            let a = at(i, p);
            if a == 0.0 {
                continue;
            }
            for j in 0..k {
                let v = x[(p, j)];
                x[(i, j)] -= a * v;
            }
        }
        let d = at(i, i);
        for j in 0..k {
            x[(i, j)] /= d;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_leaves_rhs_unchanged() {
        let b = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let x = tri_solve(&DenseMatrix::identity(3), Triangle::Lower, false, Side::Left, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn hand_solve() {
        let l = DenseMatrix::from_rows(&[&[2.0, 0.0], &[1.0, 1.0]]);
        let x = tri_solve_vec(&l, Triangle::Lower, false, &[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_diagonal_is_singular() {
        let l = DenseMatrix::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(
            tri_solve_vec(&l, Triangle::Lower, false, &[1.0, 1.0]),
            Err(LinalgError::Singular { pivot: 1 })
        );
    }

    #[test]
    fn all_flag_combinations_solve() {
        let l = DenseMatrix::from_rows(&[&[2.0, 0.0, 0.0], &[1.0, 3.0, 0.0], &[-1.0, 0.5, 1.5]]);
        let u = l.transpose();
        let b = DenseMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0) + 0.5);
        for (t, uplo) in [(&l, Triangle::Lower), (&u, Triangle::Upper)] {
            for transpose in [false, true] {
                let op = if transpose { t.transpose() } else { t.clone() };
                let x = tri_solve(t, uplo, transpose, Side::Left, &b).unwrap();
                assert!(op.matmul(&x).max_abs_diff(&b) < 1e-13);
                let y = tri_solve(t, uplo, transpose, Side::Right, &b).unwrap();
                assert!(y.matmul(&op).max_abs_diff(&b) < 1e-13);
            }
        }
    }
}
