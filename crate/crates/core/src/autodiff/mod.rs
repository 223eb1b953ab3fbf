//! Reverse-mode automatic differentiation over vector-valued primitives.
//!
//! Model code is written once against the [`Ops`] trait and runs either on
//! [`Eval`] (plain values, no bookkeeping) or on [`Tape`] (records every
//! primitive so gradients can be pulled back). Both backends evaluate the
//! same kernels, so a taped forward pass returns exactly the numbers a plain
//! pass does.
//!
//! Values are flat `f64` vectors; a scalar is a vector of length one and
//! broadcasts against any length in the elementwise ops. Fixed linear maps
//! (resampling weights, view factors) enter as sparse matrices, dense weight
//! matrices as row-major vectors.

mod checkpoint;
pub mod kernels;
mod tape;

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Deref;

pub use checkpoint::{MemoryStats, Rollout, StepFn, checkpointed_rollout, full_rollout};
pub use kernels::EdgeList;
pub use tape::{Gradients, Recording, Tape, Var, record};

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// A node value: owned, or shared with the caller (network weights).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Owned(Vec<f64>),
    Shared(Arc<Vec<f64>>),
}

impl Deref for Value {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        match self {
            Value::Owned(v) => v,
            Value::Shared(v) => v,
        }
    }
}

impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Owned(v)
    }
}

/// An operation whose forward and adjoint are supplied by the caller.
pub trait CustomOp {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>>;
    /// Adjoint of every input given the adjoint of the output.
    fn backward(&self, inputs: &[&[f64]], output: &[f64], adjoint: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Elementwise primitives addressable by name through [`Ops::unary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryPrimitive {
    Neg,
    Exp,
    Ln,
    Exp10,
    Tanh,
    Relu,
    Sigmoid,
    Pow4,
    RoundSte,
}

impl UnaryPrimitive {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "neg" => Self::Neg,
            "exp" => Self::Exp,
            "ln" | "log" => Self::Ln,
            "exp10" => Self::Exp10,
            "tanh" => Self::Tanh,
            "relu" => Self::Relu,
            "sigmoid" => Self::Sigmoid,
            "pow4" => Self::Pow4,
            "round_ste" => Self::RoundSte,
            other => return Err(Error::UnsupportedPrimitive(other.into())),
        })
    }
}

/// Backend-agnostic numeric operations.
///
/// Shape errors are programming errors and panic; fallible operations
/// (custom ops, named primitives) return `Result`.
pub trait Ops {
    type V: Clone;

    /// Differentiable leaf.
    fn input(&mut self, v: Vec<f64>) -> Self::V;
    /// Differentiable leaf sharing storage with the caller.
    fn input_shared(&mut self, v: &Arc<Vec<f64>>) -> Self::V;
    /// Leaf that never receives a gradient.
    fn constant(&mut self, v: Vec<f64>) -> Self::V;
    fn constant_shared(&mut self, v: &Arc<Vec<f64>>) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a [f64];

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn div(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn neg(&mut self, a: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn offset(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn powf(&mut self, a: &Self::V, p: f64) -> Self::V;
    fn exp(&mut self, a: &Self::V) -> Self::V;
    fn ln(&mut self, a: &Self::V) -> Self::V;
    /// `10^a`
    fn exp10(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn relu(&mut self, a: &Self::V) -> Self::V;
    fn sigmoid(&mut self, a: &Self::V) -> Self::V;
    fn pow4(&mut self, a: &Self::V) -> Self::V;
    /// Rounds to the nearest integer; the adjoint passes through unchanged.
    fn round_ste(&mut self, a: &Self::V) -> Self::V;

    /// Length-1 sum of all entries.
    fn sum(&mut self, a: &Self::V) -> Self::V;
    /// Repeats a length-1 value `n` times.
    fn broadcast(&mut self, a: &Self::V, n: usize) -> Self::V;
    fn concat(&mut self, parts: &[Self::V]) -> Self::V;
    fn slice(&mut self, a: &Self::V, start: usize, len: usize) -> Self::V;
    /// `out[k] = a[idx[k]]`
    fn gather(&mut self, a: &Self::V, idx: &Arc<Vec<usize>>) -> Self::V;
    /// Dense row-major `w (rows × cols)` times `x`.
    fn matvec(&mut self, w: &Self::V, x: &Self::V, rows: usize, cols: usize) -> Self::V;
    /// Fixed sparse matrix times `x`.
    fn spmv(&mut self, m: &Arc<CsrMatrix>, x: &Self::V) -> Self::V;
    /// Net conductive inflow per node for link conductances `g`.
    fn edge_diffusion(&mut self, edges: &Arc<EdgeList>, t: &Self::V, g: &Self::V) -> Self::V;
    fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Self::V]) -> Result<Self::V>;

    fn unary(&mut self, name: &str, a: &Self::V) -> Result<Self::V> {
        Ok(match UnaryPrimitive::from_name(name)? {
            UnaryPrimitive::Neg => self.neg(a),
            UnaryPrimitive::Exp => self.exp(a),
            UnaryPrimitive::Ln => self.ln(a),
            UnaryPrimitive::Exp10 => self.exp10(a),
            UnaryPrimitive::Tanh => self.tanh(a),
            UnaryPrimitive::Relu => self.relu(a),
            UnaryPrimitive::Sigmoid => self.sigmoid(a),
            UnaryPrimitive::Pow4 => self.pow4(a),
            UnaryPrimitive::RoundSte => self.round_ste(a),
        })
    }

    fn scalar(&mut self, x: f64) -> Self::V {
        self.constant(alloc::vec![x])
    }
}

/// Plain evaluation without recording.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Ops for Eval {
    type V = Value;

    fn input(&mut self, v: Vec<f64>) -> Value {
        Value::Owned(v)
    }
    fn input_shared(&mut self, v: &Arc<Vec<f64>>) -> Value {
        Value::Shared(v.clone())
    }
    fn constant(&mut self, v: Vec<f64>) -> Value {
        Value::Owned(v)
    }
    fn constant_shared(&mut self, v: &Arc<Vec<f64>>) -> Value {
        Value::Shared(v.clone())
    }
    fn value<'a>(&'a self, v: &'a Value) -> &'a [f64] {
        v
    }
    fn add(&mut self, a: &Value, b: &Value) -> Value {
        kernels::binary(a, b, |x, y| x + y).into()
    }
    fn sub(&mut self, a: &Value, b: &Value) -> Value {
        kernels::binary(a, b, |x, y| x - y).into()
    }
    fn mul(&mut self, a: &Value, b: &Value) -> Value {
        kernels::binary(a, b, |x, y| x * y).into()
    }
    fn div(&mut self, a: &Value, b: &Value) -> Value {
        kernels::binary(a, b, |x, y| x / y).into()
    }
    fn neg(&mut self, a: &Value) -> Value {
        kernels::unary(a, |x| -x).into()
    }
    fn scale(&mut self, a: &Value, c: f64) -> Value {
        kernels::unary(a, |x| x * c).into()
    }
    fn offset(&mut self, a: &Value, c: f64) -> Value {
        kernels::unary(a, |x| x + c).into()
    }
    fn powf(&mut self, a: &Value, p: f64) -> Value {
        kernels::unary(a, |x| libm::pow(x, p)).into()
    }
    fn exp(&mut self, a: &Value) -> Value {
        kernels::unary(a, libm::exp).into()
    }
    fn ln(&mut self, a: &Value) -> Value {
        kernels::unary(a, libm::log).into()
    }
    fn exp10(&mut self, a: &Value) -> Value {
        kernels::unary(a, kernels::exp10).into()
    }
    fn tanh(&mut self, a: &Value) -> Value {
        kernels::unary(a, libm::tanh).into()
    }
    fn relu(&mut self, a: &Value) -> Value {
        kernels::unary(a, |x| x.max(0.0)).into()
    }
    fn sigmoid(&mut self, a: &Value) -> Value {
        kernels::unary(a, kernels::sigmoid).into()
    }
    fn pow4(&mut self, a: &Value) -> Value {
        kernels::unary(a, kernels::pow4).into()
    }
    fn round_ste(&mut self, a: &Value) -> Value {
        kernels::unary(a, libm::round).into()
    }
    fn sum(&mut self, a: &Value) -> Value {
        alloc::vec![kernels::sum(a)].into()
    }
    fn broadcast(&mut self, a: &Value, n: usize) -> Value {
        assert_eq!(a.len(), 1, "broadcast needs a scalar");
        alloc::vec![a[0]; n].into()
    }
    fn concat(&mut self, parts: &[Value]) -> Value {
        parts.iter().flat_map(|p| p.iter().copied()).collect::<Vec<_>>().into()
    }
    fn slice(&mut self, a: &Value, start: usize, len: usize) -> Value {
        a[start..start + len].to_vec().into()
    }
    fn gather(&mut self, a: &Value, idx: &Arc<Vec<usize>>) -> Value {
        kernels::gather(a, idx).into()
    }
    fn matvec(&mut self, w: &Value, x: &Value, rows: usize, cols: usize) -> Value {
        kernels::matvec(w, x, rows, cols).into()
    }
    fn spmv(&mut self, m: &Arc<CsrMatrix>, x: &Value) -> Value {
        m.mul_vec(x).into()
    }
    fn edge_diffusion(&mut self, edges: &Arc<EdgeList>, t: &Value, g: &Value) -> Value {
        kernels::edge_diffusion(edges, t, g).into()
    }
    fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Value]) -> Result<Value> {
        let refs: Vec<&[f64]> = inputs.iter().map(|v| &v[..]).collect();
        Ok(op.forward(&refs)?.into())
    }
}
