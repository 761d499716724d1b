//! Reverse-mode recording.
//!
//! A [`Tape`] is an append-only arena of nodes; every node stores its
//! parents and the local partial derivatives, so parents always precede
//! children. A [`Var`] is a value plus an optional slot on a tape; constants
//! carry no slot and are never recorded. A tape may be swept once.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::{AdError, Real};

/// Operation that produced a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    ExpM1,
    Ln1p,
    Powi,
    Powf,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Input => "input",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Sqrt => "sqrt",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::ExpM1 => "exp_m1",
            Op::Ln1p => "ln_1p",
            Op::Powi => "powi",
            Op::Powf => "powf",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    arity: u8,
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    non_finite: Cell<Option<(usize, Op)>>,
    swept: Cell<bool>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an independent variable.
    pub fn input(&self, value: f64) -> Var<'_> {
        let slot = self.push(Op::Input, value, &[]);
        Var {
            val: value,
            node: Some((self, slot)),
        }
    }

    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    fn push(&self, op: Op, value: f64, parents: &[(u32, f64)]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        let mut node = Node {
            op,
            arity: parents.len() as u8,
            parents: [0; 2],
            partials: [0.0; 2],
        };
        for (k, &(p, d)) in parents.iter().enumerate() {
            node.parents[k] = p;
            node.partials[k] = d;
        }
        let finite = value.is_finite() && parents.iter().all(|(_, d)| d.is_finite());
        if !finite && self.non_finite.get().is_none() {
            self.non_finite.set(Some((idx, op)));
        }
        nodes.push(node);
        idx as u32
    }

    /// First recorded node whose value or local partial was not finite.
    pub fn first_non_finite(&self) -> Option<(usize, Op)> {
        self.non_finite.get()
    }

    /// One reverse sweep: propagates the cotangents `seeds` from their output
    /// variables back to `wrt`. Consumes the recording.
    pub fn reverse(&self, seeds: &[(Var<'_>, f64)], wrt: &[Var<'_>]) -> Result<Vec<f64>, AdError> {
        if self.swept.replace(true) {
            return Err(AdError::TapeConsumed);
        }
        if let Some((node, op)) = self.non_finite.get() {
            return Err(AdError::NonFinite { op, node });
        }
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        for (var, w) in seeds {
            if let Some(slot) = var.slot_on(self) {
                adjoint[slot] += w;
            }
        }
        for idx in (0..nodes.len()).rev() {
            let a = adjoint[idx];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[idx];
            for k in 0..node.arity as usize {
                adjoint[node.parents[k] as usize] += a * node.partials[k];
            }
        }
        Ok(wrt
            .iter()
            .map(|v| v.slot_on(self).map_or(0.0, |s| adjoint[s]))
            .collect())
    }

    /// Operation recorded at `node`.
    pub fn op(&self, node: usize) -> Option<Op> {
        self.nodes.borrow().get(node).map(|n| n.op)
    }

    /// Whether this tape has already been swept.
    pub fn is_consumed(&self) -> bool {
        self.swept.get()
    }
}

/// Reverse-mode scalar: a value and, unless constant, its node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    val: f64,
    node: Option<(&'t Tape, u32)>,
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Self { val: value, node: None }
    }

    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    fn slot_on(&self, tape: &Tape) -> Option<usize> {
        match self.node {
            Some((t, s)) if std::ptr::eq(t, tape) => Some(s as usize),
            _ => None,
        }
    }

    fn unary(self, op: Op, value: f64, partial: f64) -> Self {
        match self.node {
            None => Var::constant(value),
            Some((tape, slot)) => {
                let idx = tape.push(op, value, &[(slot, partial)]);
                Var {
                    val: value,
                    node: Some((tape, idx)),
                }
            }
        }
    }

    fn binary(self, rhs: Self, op: Op, value: f64, da: f64, db: f64) -> Self {
        match (self.node, rhs.node) {
            (None, None) => Var::constant(value),
            (Some((tape, a)), None) => Var {
                val: value,
                node: Some((tape, tape.push(op, value, &[(a, da)]))),
            },
            (None, Some((tape, b))) => Var {
                val: value,
                node: Some((tape, tape.push(op, value, &[(b, db)]))),
            },
            (Some((tape, a)), Some((other, b))) => {
                debug_assert!(std::ptr::eq(tape, other), "mixing variables from different tapes");
                Var {
                    val: value,
                    node: Some((tape, tape.push(op, value, &[(a, da), (b, db)]))),
                }
            }
        }
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some((_, slot)) => write!(f, "Var({} @{})", self.val, slot),
            None => write!(f, "Var({})", self.val),
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(Op::Add, self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(Op::Sub, self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        if rhs == 0.0 {
            return Var::constant(0.0);
        }
        self.unary(Op::Mul, self.val * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(Op::Div, self.val / rhs, 1.0 / rhs)
    }
}

impl AddAssign for Var<'_> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var<'_> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var<'_> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Sum for Var<'_> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Var::constant(0.0), |a, b| a + b)
    }
}

impl Real for Var<'_> {
    const DEPTH: usize = 1;

    fn cst(x: f64) -> Self {
        Var::constant(x)
    }

    fn value(&self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(Op::Ln, self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(Op::Sqrt, s, 0.5 / s)
    }

    fn sin(self) -> Self {
        self.unary(Op::Sin, self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.unary(Op::Cos, self.val.cos(), -self.val.sin())
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(Op::Tanh, t, 1.0 - t * t)
    }

    fn exp_m1(self) -> Self {
        self.unary(Op::ExpM1, self.val.exp_m1(), self.val.exp())
    }

    fn ln_1p(self) -> Self {
        self.unary(Op::Ln1p, self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Var::constant(1.0),
            1 => self,
            _ => self.unary(Op::Powi, self.val.powi(n), f64::from(n) * self.val.powi(n - 1)),
        }
    }

    fn powf(self, p: f64) -> Self {
        self.unary(Op::Powf, self.val.powf(p), p * self.val.powf(p - 1.0))
    }
}
