use super::{DenseMatrix, LinalgError};

/// Symmetric block-diagonal matrix with `n / m` dense `m x m` blocks.
///
/// Used for `W`, the negative Hessian of the log likelihood in the latent
/// variable. Entries outside the diagonal blocks are structurally zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonal {
    n: usize,
    m: usize,
    blocks: Vec<f64>,
}

impl BlockDiagonal {
    pub fn zeros(n: usize, m: usize) -> Result<Self, LinalgError> {
        if m == 0 || n % m != 0 {
            return Err(LinalgError::BlockSize { n, m });
        }
        Ok(Self {
            n,
            m,
            blocks: vec![0.0; n * m],
        })
    }

    pub fn identity(n: usize, m: usize) -> Result<Self, LinalgError> {
        let mut w = Self::zeros(n, m)?;
        for i in 0..n {
            w.set(i, i, 1.0);
        }
        Ok(w)
    }

    /// Diagonal matrix (block size 1).
    pub fn from_diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            m: 1,
            blocks: d.to_vec(),
        }
    }

    /// Takes the diagonal blocks of a dense matrix, ignoring everything else.
    pub fn from_dense_blocks(a: &DenseMatrix, m: usize) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension("block extraction needs a square matrix".into()));
        }
        let mut w = Self::zeros(a.rows(), m)?;
        for b in 0..w.num_blocks() {
            for r in 0..m {
                for c in 0..m {
                    w.set(b * m + r, b * m + c, a[(b * m + r, b * m + c)]);
                }
            }
        }
        Ok(w)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        if self.m == 0 {
            0
        } else {
            self.n / self.m
        }
    }

    /// Row-major entries of block `b`.
    pub fn block(&self, b: usize) -> &[f64] {
        let s = self.m * self.m;
        &self.blocks[b * s..(b + 1) * s]
    }

    fn block_mut(&mut self, b: usize) -> &mut [f64] {
        let s = self.m * self.m;
        &mut self.blocks[b * s..(b + 1) * s]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (bi, bj) = (i / self.m, j / self.m);
        if bi != bj {
            return 0.0;
        }
        self.block(bi)[(i % self.m) * self.m + j % self.m]
    }

    /// Sets an in-block entry. Panics if `(i, j)` falls outside the blocks.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (bi, bj) = (i / self.m, j / self.m);
        assert_eq!(bi, bj, "entry ({i}, {j}) is outside the diagonal blocks");
        let m = self.m;
        self.block_mut(bi)[(i % m) * m + j % m] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|x| x.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            m: self.m,
            blocks: self.blocks.iter().map(|x| x * s).collect(),
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0_f64;
        for b in 0..self.num_blocks() {
            let blk = self.block(b);
            for r in 0..m {
                for c in 0..r {
                    worst = worst.max((blk[r * m + c] - blk[c * m + r]).abs());
                }
            }
        }
        worst
    }

    /// Nearest positive semi-definite block-diagonal matrix: negative
    /// eigenvalues of each block are set to zero.
    pub fn psd_part(&self) -> Self {
        let m = self.m;
        let mut out = self.clone();
        for b in 0..self.num_blocks() {
            let blk = DenseMatrix::from_row_major(m, m, self.block(b).to_vec()).expect("m*m block");
            let (vals, vecs) = super::symmetric_eigen(&blk).expect("square block");
            let dst = out.block_mut(b);
            for r in 0..m {
                for c in 0..m {
                    dst[r * m + c] = (0..m).map(|k| vals[k].max(0.0) * vecs[(r, k)] * vecs[(c, k)]).sum();
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        let m = self.m;
        for b in 0..self.num_blocks() {
            let blk = self.block(b);
            for r in 0..m {
                for c in 0..m {
                    out[(b * m + r, b * m + c)] = blk[r * m + c];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let m = self.m;
        let mut out = vec![0.0; self.n];
        for b in 0..self.num_blocks() {
            let blk = self.block(b);
            for r in 0..m {
                out[b * m + r] = (0..m).map(|c| blk[r * m + c] * x[b * m + c]).sum();
            }
        }
        out
    }

    /// `W · M` in `O(m n k)` for an `n x k` matrix `M`.
    pub fn mul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(rhs.rows(), self.n);
        let m = self.m;
        let k = rhs.cols();
        let mut out = DenseMatrix::zeros(self.n, k);
        for b in 0..self.num_blocks() {
            let blk = self.block(b);
            for r in 0..m {
                for c in 0..m {
                    let w = blk[r * m + c];
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        out[(b * m + r, j)] += w * rhs[(b * m + c, j)];
                    }
                }
            }
        }
        out
    }

    /// `M · W` for a `k x n` matrix `M`.
    pub fn dense_mul(&self, lhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(lhs.cols(), self.n);
        let m = self.m;
        let mut out = DenseMatrix::zeros(lhs.rows(), self.n);
        for i in 0..lhs.rows() {
            for b in 0..self.num_blocks() {
                let blk = self.block(b);
                for c in 0..m {
                    out[(i, b * m + c)] = (0..m).map(|r| lhs[(i, b * m + r)] * blk[r * m + c]).sum();
                }
            }
        }
        out
    }
}

/// A factor `S` with `S Sᵀ = W`, stored block-wise.
///
/// For block size 1 this is the element-wise square root. Larger blocks use
/// a lower-triangular (semi-definite) Cholesky factor per block.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSqrt {
    factor: BlockDiagonal,
}

impl MatrixSqrt {
    pub fn factor(&self) -> &BlockDiagonal {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    /// `S · M`.
    pub fn mul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.factor.mul_dense(rhs)
    }

    /// `Sᵀ · M`.
    pub fn t_mul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.transposed().mul_dense(rhs)
    }

    /// `M · S`.
    pub fn dense_mul(&self, lhs: &DenseMatrix) -> DenseMatrix {
        self.factor.dense_mul(lhs)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.factor.matvec(x)
    }

    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        self.transposed().matvec(x)
    }

    fn transposed(&self) -> BlockDiagonal {
        let m = self.factor.block_size();
        let mut t = self.factor.clone();
        for b in 0..self.factor.num_blocks() {
            let src = self.factor.block(b);
            let dst = t.block_mut(b);
            for r in 0..m {
                for c in 0..m {
                    dst[c * m + r] = src[r * m + c];
                }
            }
        }
        t
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.factor.to_dense()
    }
}

const NEGATIVE_EIGEN_TOL: f64 = 1e-12;

/// Block-wise square root of a positive semi-definite block-diagonal matrix.
pub fn block_sqrt(w: &BlockDiagonal) -> Result<MatrixSqrt, LinalgError> {
    let m = w.block_size();
    let mut factor = BlockDiagonal::zeros(w.dim(), m)?;
    for b in 0..w.num_blocks() {
        let blk = w.block(b);
        let out = factor.block_mut(b);
        if m == 1 {
            let x = blk[0];
            if x < -NEGATIVE_EIGEN_TOL || !x.is_finite() {
                return Err(LinalgError::IndefiniteBlock { block: b, value: x });
            }
            out[0] = x.max(0.0).sqrt();
            continue;
        }
        semidefinite_cholesky_in_place(blk, m, out)
            .map_err(|(_, value)| LinalgError::IndefiniteBlock { block: b, value })?;
    }
    Ok(MatrixSqrt { factor })
}

/// Cholesky of a symmetric PSD `m x m` matrix given row-major in `a`, written
/// into `l`. Zero pivots are allowed when the rest of their column vanishes.
/// On failure returns the offending pivot index and value.
pub(crate) fn semidefinite_cholesky_in_place(a: &[f64], m: usize, l: &mut [f64]) -> Result<(), (usize, f64)> {
    let scale = (0..m).fold(1.0_f64, |acc, i| acc.max(a[i * m + i].abs()));
    let tol = NEGATIVE_EIGEN_TOL * scale;
    l.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !d.is_finite() || d < -tol {
            return Err((j, d));
        }
        if d <= tol {
            for i in j + 1..m {
                let mut s = a[i * m + j];
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                if s.abs() > (tol * scale).sqrt() {
                    return Err((j, -s.abs()));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / djj;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_root_is_elementwise() {
        let w = BlockDiagonal::from_diagonal(&[4.0, 9.0, 16.0]);
        let s = block_sqrt(&w).unwrap();
        assert_eq!(s.to_dense(), DenseMatrix::from_diagonal(&[2.0, 3.0, 4.0]));
    }

    #[test]
    fn zero_matrix_root_is_zero() {
        for m in [1, 2, 4] {
            let w = BlockDiagonal::zeros(8, m).unwrap();
            let s = block_sqrt(&w).unwrap();
            assert_eq!(s.to_dense().max_abs(), 0.0);
        }
    }

    #[test]
    fn indefinite_block_is_reported() {
        let mut w = BlockDiagonal::identity(4, 2).unwrap();
        w.set(2, 3, 2.0);
        w.set(3, 2, 2.0);
        match block_sqrt(&w) {
            Err(LinalgError::IndefiniteBlock { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected indefinite block, got {other:?}"),
        }
        let w = BlockDiagonal::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(
            block_sqrt(&w),
            Err(LinalgError::IndefiniteBlock { block: 1, .. })
        ));
    }

    #[test]
    fn tiny_negative_diagonal_is_clamped() {
        let w = BlockDiagonal::from_diagonal(&[1.0, -1e-14]);
        let s = block_sqrt(&w).unwrap();
        assert_eq!(s.to_dense()[(1, 1)], 0.0);
    }

    #[test]
    fn rejects_bad_block_size() {
        assert!(matches!(
            BlockDiagonal::zeros(5, 2),
            Err(LinalgError::BlockSize { n: 5, m: 2 })
        ));
    }

    #[test]
    fn block_products_match_dense() {
        let mut w = BlockDiagonal::zeros(4, 2).unwrap();
        let vals = [[2.0, 0.5], [0.5, 1.0]];
        for b in 0..2 {
            for r in 0..2 {
                for c in 0..2 {
                    w.set(2 * b + r, 2 * b + c, vals[r][c] * (b + 1) as f64);
                }
            }
        }
        let m = DenseMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        assert!(w.mul_dense(&m).max_abs_diff(&w.to_dense().matmul(&m)) < 1e-14);
        let mt = m.transpose();
        assert!(w.dense_mul(&mt).max_abs_diff(&mt.matmul(&w.to_dense())) < 1e-14);
        let s = block_sqrt(&w).unwrap();
        let sd = s.to_dense();
        assert!(sd.matmul(&sd.transpose()).max_abs_diff(&w.to_dense()) < 1e-14);
        assert!(s.t_mul_dense(&m).max_abs_diff(&sd.transpose().matmul(&m)) < 1e-14);
    }
}
