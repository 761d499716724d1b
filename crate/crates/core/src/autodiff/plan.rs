//! Explicit sweep compositions.
//!
//! A plan lists forward sweeps (each a tangent over a block of the joint
//! variable `(θ, η)`) optionally closed by one reverse sweep. Forward levels
//! are nested duals; the reverse level, when present, is a tape and is always
//! the outermost differentiation.

use super::{seed, AdError, Dual, Real, ScalarField, SweepCounter, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Forward,
    Reverse,
}

/// Which part of the joint variable a seed or result refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariableBlock {
    Theta,
    Eta,
    Joint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub mode: SweepMode,
    /// Tangent over the block for forward sweeps; the scalar output
    /// cotangent (length 1) for reverse sweeps.
    pub seed: Vec<f64>,
    /// Forward: where the tangent lives. Reverse: which gradient block is
    /// returned.
    pub block: VariableBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    n_theta: usize,
    n_eta: usize,
    sweeps: Vec<Sweep>,
}

pub const MAX_FORWARD_LEVELS: usize = 3;

impl SweepPlan {
    pub fn new(n_theta: usize, n_eta: usize) -> Self {
        Self {
            n_theta,
            n_eta,
            sweeps: Vec::new(),
        }
    }

    pub fn forward(mut self, block: VariableBlock, tangent: Vec<f64>) -> Self {
        self.sweeps.push(Sweep {
            mode: SweepMode::Forward,
            seed: tangent,
            block,
        });
        self
    }

    pub fn reverse(mut self, block: VariableBlock, cotangent: f64) -> Self {
        self.sweeps.push(Sweep {
            mode: SweepMode::Reverse,
            seed: vec![cotangent],
            block,
        });
        self
    }

    pub fn sweeps(&self) -> &[Sweep] {
        &self.sweeps
    }

    fn block_range(&self, block: VariableBlock) -> std::ops::Range<usize> {
        match block {
            VariableBlock::Theta => 0..self.n_theta,
            VariableBlock::Eta => self.n_theta..self.n_theta + self.n_eta,
            VariableBlock::Joint => 0..self.n_theta + self.n_eta,
        }
    }

    pub fn validate(&self) -> Result<(), AdError> {
        if self.sweeps.is_empty() {
            return Err(AdError::InvalidPlan("plan has no sweeps".into()));
        }
        let last = self.sweeps.len() - 1;
        let mut forwards = 0;
        for (i, s) in self.sweeps.iter().enumerate() {
            match s.mode {
                SweepMode::Reverse => {
                    if i != last {
                        return Err(AdError::InvalidPlan(format!(
                            "reverse sweep at position {i} is not the final sweep"
                        )));
                    }
                    if s.seed.len() != 1 {
                        return Err(AdError::InvalidPlan(
                            "reverse seed must be a single output cotangent".into(),
                        ));
                    }
                }
                SweepMode::Forward => {
                    forwards += 1;
                    let want = self.block_range(s.block).len();
                    if s.seed.len() != want {
                        return Err(AdError::InvalidPlan(format!(
                            "forward seed at position {i} has length {}, block has {want}",
                            s.seed.len()
                        )));
                    }
                }
            }
        }
        if forwards > MAX_FORWARD_LEVELS {
            return Err(AdError::InvalidPlan(format!(
                "{forwards} forward levels requested, at most {MAX_FORWARD_LEVELS} supported"
            )));
        }
        Ok(())
    }

    fn joint_tangent(&self, s: &Sweep) -> Vec<f64> {
        let mut t = vec![0.0; self.n_theta + self.n_eta];
        t[self.block_range(s.block)].copy_from_slice(&s.seed);
        t
    }
}

/// Executes `plan` on `f` at the joint point `x`.
///
/// Without a reverse sweep the result is the single highest-order directional
/// derivative. With one, it is the gradient (restricted to the reverse
/// sweep's block) of that directional derivative times the cotangent.
pub fn run_plan<F: ScalarField>(
    f: &F,
    x: &[f64],
    plan: &SweepPlan,
    counter: &mut SweepCounter,
) -> Result<Vec<f64>, AdError> {
    plan.validate()?;
    if x.len() != plan.n_theta + plan.n_eta || f.dim() != x.len() {
        return Err(AdError::DimensionMismatch(format!(
            "plan expects {} inputs, point has {}, field has {}",
            plan.n_theta + plan.n_eta,
            x.len(),
            f.dim()
        )));
    }
    let tangents: Vec<Vec<f64>> = plan
        .sweeps
        .iter()
        .filter(|s| s.mode == SweepMode::Forward)
        .map(|s| plan.joint_tangent(s))
        .collect();
    let reverse = plan.sweeps.iter().find(|s| s.mode == SweepMode::Reverse);
    counter.forward += tangents.len();

    match reverse {
        None => {
            let out = match tangents.len() {
                1 => f.eval(&seed(x, &tangents[0])).d,
                2 => f.eval(&seed(&seed(x, &tangents[0]), &tangents[1])).d.d,
                _ => {
                    let x3 = seed(&seed(&seed(x, &tangents[0]), &tangents[1]), &tangents[2]);
                    f.eval(&x3).d.d.d
                }
            };
            if !out.is_finite() {
                return Err(AdError::NonFinite {
                    op: super::Op::Input,
                    node: 0,
                });
            }
            Ok(vec![out])
        }
        Some(rev) => {
            let w = rev.seed[0];
            let tape = Tape::new();
            let xs = tape.inputs(x);
            let y = match tangents.len() {
                0 => f.eval(&xs),
                1 => f.eval(&seed(&xs, &tangents[0])).d,
                2 => f.eval(&seed(&seed(&xs, &tangents[0]), &tangents[1])).d.d,
                _ => {
                    let x3 = seed(&seed(&seed(&xs, &tangents[0]), &tangents[1]), &tangents[2]);
                    top3(f.eval(&x3))
                }
            };
            counter.reverse += 1;
            let g = tape.reverse(&[(y, w)], &xs)?;
            Ok(g[plan.block_range(rev.block)].to_vec())
        }
    }
}

fn top3<T: Real>(y: Dual<Dual<Dual<T>>>) -> T {
    y.d.d.d
}
