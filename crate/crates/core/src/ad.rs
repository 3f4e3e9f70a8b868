//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to [`Var`]s during a forward
//! pass. Each node stores at most two parent ids together with the local
//! partial derivatives, so the backward pass is a single reverse sweep
//! over a flat array.
//!
//! ```
//! use idyn::ad::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x;
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(y.value(), 9.0);
//! assert_eq!(grads.wrt(x), 6.0);
//! ```
//!
//! Constants (created with [`Scalar::cst`] or by combining constants)
//! never touch the tape, which keeps the recorded graph limited to the
//! parameter-dependent part of a computation.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Creates an independent input variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            parents: [NONE, NONE],
            partials: [0.0, 0.0],
        });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every recorded node, keeping the allocation for reuse.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    #[inline]
    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NONE as usize, "tape overflow");
        nodes.push(node);
        idx as u32
    }

    /// Accumulates adjoints of `output` in reverse recording order.
    ///
    /// A constant output yields all-zero gradients. An output recorded on
    /// a different tape is rejected.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        match output.tape {
            None => return Ok(Gradients { adjoints }),
            Some(t) if !std::ptr::eq(t, self) => {
                return Err(Error::invalid("output variable belongs to another tape"));
            }
            Some(_) => {}
        }
        adjoints[output.idx as usize] = 1.0;
        for i in (0..nodes.len()).rev() {
            let adj = adjoints[i];
            if adj == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    adjoints[p as usize] += node.partials[k] * adj;
                }
            }
        }
        Ok(Gradients { adjoints })
    }
}

/// Adjoints of every node on a tape with respect to one output.
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    /// d(output)/d(v). Zero for constants.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.tape.is_none() {
            return 0.0;
        }
        self.adjoints.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// Records `f` on a fresh tape at `inputs` and returns the output value
/// together with its gradient with respect to every input.
pub fn gradient<F>(inputs: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let xs = tape.vars(inputs);
    let y = f(&xs)?;
    let grads = tape.backward(y)?;
    Ok((y.value(), grads.wrt_all(&xs)))
}

/// A scalar that is either a constant or a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({} @{})", self.val, self.idx),
            None => write!(f, "Var({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(v: f64) -> Self {
        Var {
            tape: None,
            idx: NONE,
            val: v,
        }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(Node {
                    parents: [self.idx, NONE],
                    partials: [d, 0.0],
                }),
                val,
            },
        }
    }

    #[inline]
    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Var::constant(val),
            (Some(_), None) => a.unary(val, da),
            (None, Some(_)) => b.unary(val, db),
            (Some(ta), Some(tb)) => {
                debug_assert!(std::ptr::eq(ta, tb), "mixing variables from two tapes");
                Var {
                    tape: Some(ta),
                    idx: ta.push(Node {
                        parents: [a.idx, b.idx],
                        partials: [da, db],
                    }),
                    val,
                }
            }
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        Var::binary(self, rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl AddAssign for Var<'_> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var<'_> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<'t> Scalar for Var<'t> {
    const TAPED: bool = true;

    #[inline]
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }

    /// The derivative at 0 is taken as 0 rather than infinity.
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        let d = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.unary(s, d)
    }

    #[inline]
    fn acos(self) -> Self {
        let d = -1.0 / (1.0 - self.val * self.val).sqrt();
        self.unary(self.val.acos(), d)
    }

    #[inline]
    fn atan2(self, x: Self) -> Self {
        let r2 = self.val * self.val + x.val * x.val;
        let (dy, dx) = if r2 > 0.0 {
            (x.val / r2, -self.val / r2)
        } else {
            (0.0, 0.0)
        };
        Var::binary(self, x, self.val.atan2(x.val), dy, dx)
    }

    #[inline]
    fn norm3(x: Self, y: Self, z: Self) -> Self {
        (x * x + y * y + z * z).sqrt()
    }

    #[inline]
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            Var::constant(0.0)
        }
    }
}
