use super::{seed, AdError, Real, Tape, Var};
use crate::linalg::{BlockDiagonal, DenseMatrix};

/// Map ℝᵏ → ℝˡ written once against [`Real`].
pub trait VectorField {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S>;
}

/// Map ℝᵏ → ℝ written once against [`Real`].
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn eval<S: Real>(&self, x: &[S]) -> S;
}

/// Number of forward and reverse sweeps executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepCounter {
    pub forward: usize,
    pub reverse: usize,
}

impl SweepCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> usize {
        self.forward + self.reverse
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), AdError> {
    if expected == got {
        Ok(())
    } else {
        Err(AdError::DimensionMismatch(format!(
            "{what}: expected {expected}, got {got}"
        )))
    }
}

/// Replays the forward evaluation on a tape to find the first operation that
/// produced a non-finite value or partial.
fn diagnose<F: VectorField>(f: &F, x: &[f64], v: &[f64]) -> AdError {
    let tape = Tape::new();
    let xs = seed(&tape.inputs(x), v);
    let _ = f.eval(&xs);
    match tape.first_non_finite() {
        Some((node, op)) => AdError::NonFinite { op, node },
        None => AdError::NonFinite {
            op: super::Op::Input,
            node: 0,
        },
    }
}

/// Directional derivative (∂f/∂x)·v from one forward sweep.
pub fn fwd_sweep<F: VectorField>(f: &F, x: &[f64], v: &[f64], counter: &mut SweepCounter) -> Result<Vec<f64>, AdError> {
    check_len("input", f.dim_in(), x.len())?;
    check_len("tangent", f.dim_in(), v.len())?;
    counter.forward += 1;
    let y = f.eval(&seed(x, v));
    check_len("output", f.dim_out(), y.len())?;
    if y.iter().any(|yi| !yi.v.is_finite() || !yi.d.is_finite()) {
        return Err(diagnose(f, x, v));
    }
    Ok(y.into_iter().map(|yi| yi.d).collect())
}

/// Cotangent product wᵀ·(∂f/∂x) from one reverse sweep.
pub fn rev_sweep<F: VectorField>(f: &F, x: &[f64], w: &[f64], counter: &mut SweepCounter) -> Result<Vec<f64>, AdError> {
    check_len("input", f.dim_in(), x.len())?;
    check_len("cotangent", f.dim_out(), w.len())?;
    let tape = Tape::new();
    let xs = tape.inputs(x);
    let y = f.eval(&xs);
    check_len("output", f.dim_out(), y.len())?;
    let seeds: Vec<(Var, f64)> = y.into_iter().zip(w.iter().copied()).collect();
    counter.reverse += 1;
    tape.reverse(&seeds, &xs)
}

/// Value and gradient of a scalar field.
pub fn gradient<F: ScalarField>(f: &F, x: &[f64], counter: &mut SweepCounter) -> Result<(f64, Vec<f64>), AdError> {
    check_len("input", f.dim(), x.len())?;
    let tape = Tape::new();
    let xs = tape.inputs(x);
    let y = f.eval(&xs);
    counter.reverse += 1;
    let g = tape.reverse(&[(y, 1.0)], &xs)?;
    Ok((y.value(), g))
}

/// (∇²f)·v from a forward sweep seeded `v` and a reverse sweep seeded 1.
pub fn hessian_vector<F: ScalarField>(
    f: &F,
    x: &[f64],
    v: &[f64],
    counter: &mut SweepCounter,
) -> Result<Vec<f64>, AdError> {
    check_len("input", f.dim(), x.len())?;
    check_len("tangent", f.dim(), v.len())?;
    let tape = Tape::new();
    let xs = tape.inputs(x);
    let y = f.eval(&seed(&xs, v));
    counter.forward += 1;
    counter.reverse += 1;
    tape.reverse(&[(y.d, 1.0)], &xs)
}

/// Gradient of Σⱼ vⱼᵀ(∇²f)wⱼ.
///
/// Each pair is evaluated with two forward levels on one shared recording
/// and the results are summed, so a single reverse sweep finishes the job.
pub fn hessian_contraction_gradient<F: ScalarField>(
    f: &F,
    x: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
    counter: &mut SweepCounter,
) -> Result<Vec<f64>, AdError> {
    check_len("input", f.dim(), x.len())?;
    let tape = Tape::new();
    let xs = tape.inputs(x);
    let mut s = Var::constant(0.0);
    for (v, w) in pairs {
        check_len("first tangent", f.dim(), v.len())?;
        check_len("second tangent", f.dim(), w.len())?;
        let inner = seed(&xs, v);
        let y = f.eval(&seed(&inner, w));
        counter.forward += 2;
        s += y.d.d;
    }
    counter.reverse += 1;
    tape.reverse(&[(s, 1.0)], &xs)
}

/// Strided unit tangent: ones at θ-coordinates `j, j+m, j+2m, …` of a joint
/// vector of length `len` whose first `n` entries are θ.
pub fn strided_tangent(len: usize, n: usize, m: usize, j: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for i in (j..n).step_by(m) {
        v[i] = 1.0;
    }
    v
}

/// Block-diagonal θ-Hessian of `f` over a joint vector `x = (θ, η)` with
/// `θ = x[..n]`, using m Hessian-vector products.
///
/// The block structure is trusted: entries coupling different blocks are
/// folded into the computed ones if present. See [`check_block_structure`].
pub fn block_hessian<F: ScalarField>(
    f: &F,
    x: &[f64],
    n: usize,
    m: usize,
    counter: &mut SweepCounter,
) -> Result<BlockDiagonal, AdError> {
    if m == 0 || n % m != 0 {
        return Err(AdError::NotDivisible { n, m });
    }
    check_len("input", f.dim(), x.len())?;
    if n > x.len() {
        return Err(AdError::DimensionMismatch(format!(
            "latent dimension {n} exceeds input length {}",
            x.len()
        )));
    }
    let mut h = BlockDiagonal::zeros(n, m).map_err(|_| AdError::NotDivisible { n, m })?;
    let mut cols = Vec::with_capacity(m);
    for j in 0..m {
        cols.push(hessian_vector(f, x, &strided_tangent(x.len(), n, m, j), counter)?);
    }
    for b in 0..n / m {
        for k in 0..m {
            for j in 0..m {
                let hkj = cols[j][b * m + k];
                let hjk = cols[k][b * m + j];
                h.set(b * m + k, b * m + j, 0.5 * (hkj + hjk));
            }
        }
    }
    Ok(h)
}

/// ∂³f/∂xᵢ³ for a field with diagonal Hessian: two forward sweeps seeded 𝟙
/// followed by a reverse sweep seeded 1.
pub fn third_order_diag<F: ScalarField>(f: &F, x: &[f64], counter: &mut SweepCounter) -> Result<Vec<f64>, AdError> {
    let ones = vec![1.0; x.len()];
    hessian_contraction_gradient(f, x, &[(ones.clone(), ones)], counter)
}

/// Full Hessian from one Hessian-vector product per coordinate.
pub fn dense_hessian<F: ScalarField>(f: &F, x: &[f64], counter: &mut SweepCounter) -> Result<DenseMatrix, AdError> {
    let k = x.len();
    let mut h = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = hessian_vector(f, x, &e, counter)?;
        for i in 0..k {
            h[(i, j)] = col[i];
        }
    }
    h.symmetrize();
    Ok(h)
}

/// Debug check of a declared block size: computes the dense θ-Hessian and
/// returns the largest off-block entry as `(i, j, value)` if it exceeds `tol`.
pub fn check_block_structure<F: ScalarField>(
    f: &F,
    x: &[f64],
    n: usize,
    m: usize,
    tol: f64,
) -> Result<Option<(usize, usize, f64)>, AdError> {
    if m == 0 || n % m != 0 {
        return Err(AdError::NotDivisible { n, m });
    }
    let h = dense_hessian(f, x, &mut SweepCounter::new())?;
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in 0..n {
            if i / m == j / m {
                continue;
            }
            let v = h[(i, j)];
            if v.abs() > tol && worst.map_or(true, |(_, _, w)| v.abs() > w.abs()) {
                worst = Some((i, j, v));
            }
        }
    }
    Ok(worst)
}
