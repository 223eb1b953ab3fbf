use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, EdgeList};
use super::{CustomOp, Ops, Value};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var, f64),
    Powf(Var, f64),
    Exp(Var),
    Ln(Var),
    Exp10(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Pow4(Var),
    RoundSte(Var),
    Sum(Var),
    Broadcast(Var, usize),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Gather(Var, Arc<Vec<usize>>),
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    SpMv(Arc<CsrMatrix>, Var),
    EdgeDiffusion(Arc<EdgeList>, Var, Var),
    Custom(Arc<dyn CustomOp>, Vec<Var>),
}

struct Node {
    op: Op,
    value: Value,
    needs_grad: bool,
}

/// Append-only record of primitive operations and their values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl core::fmt::Debug for Tape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.len())
            .field("floats", &self.float_count())
            .finish()
    }
}

fn compute<'a>(op: &Op, val: impl Fn(Var) -> &'a [f64]) -> Result<Vec<f64>> {
    use kernels::{binary, unary};
    Ok(match op {
        Op::Leaf => unreachable!("leaves are not recomputed"),
        Op::Add(a, b) => binary(val(*a), val(*b), |x, y| x + y),
        Op::Sub(a, b) => binary(val(*a), val(*b), |x, y| x - y),
        Op::Mul(a, b) => binary(val(*a), val(*b), |x, y| x * y),
        Op::Div(a, b) => binary(val(*a), val(*b), |x, y| x / y),
        Op::Neg(a) => unary(val(*a), |x| -x),
        Op::Scale(a, c) => unary(val(*a), |x| x * c),
        Op::Offset(a, c) => unary(val(*a), |x| x + c),
        Op::Powf(a, p) => unary(val(*a), |x| libm::pow(x, *p)),
        Op::Exp(a) => unary(val(*a), libm::exp),
        Op::Ln(a) => unary(val(*a), libm::log),
        Op::Exp10(a) => unary(val(*a), kernels::exp10),
        Op::Tanh(a) => unary(val(*a), libm::tanh),
        Op::Relu(a) => unary(val(*a), |x| x.max(0.0)),
        Op::Sigmoid(a) => unary(val(*a), kernels::sigmoid),
        Op::Pow4(a) => unary(val(*a), kernels::pow4),
        Op::RoundSte(a) => unary(val(*a), libm::round),
        Op::Sum(a) => vec![kernels::sum(val(*a))],
        Op::Broadcast(a, n) => {
            let v = val(*a);
            assert_eq!(v.len(), 1, "broadcast needs a scalar");
            vec![v[0]; *n]
        }
        Op::Concat(parts) => parts.iter().flat_map(|p| val(*p).iter().copied()).collect(),
        Op::Slice(a, s, l) => val(*a)[*s..*s + *l].to_vec(),
        Op::Gather(a, idx) => kernels::gather(val(*a), idx),
        Op::MatVec { w, x, rows, cols } => kernels::matvec(val(*w), val(*x), *rows, *cols),
        Op::SpMv(m, x) => m.mul_vec(val(*x)),
        Op::EdgeDiffusion(e, t, g) => kernels::edge_diffusion(e, val(*t), val(*g)),
        Op::Custom(op, ins) => {
            let refs: Vec<&[f64]> = ins.iter().map(|v| val(*v)).collect();
            op.forward(&refs)?
        }
    })
}

fn inputs_of(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
        Op::Neg(a)
        | Op::Scale(a, _)
        | Op::Offset(a, _)
        | Op::Powf(a, _)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Exp10(a)
        | Op::Tanh(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Pow4(a)
        | Op::RoundSte(a)
        | Op::Sum(a)
        | Op::Broadcast(a, _)
        | Op::Slice(a, _, _)
        | Op::Gather(a, _)
        | Op::SpMv(_, a) => vec![*a],
        Op::Concat(v) | Op::Custom(_, v) => v.clone(),
        Op::MatVec { w, x, .. } => vec![*w, *x],
        Op::EdgeDiffusion(_, t, g) => vec![*t, *g],
    }
}

/// Accumulates an adjoint into a (possibly broadcast) operand of length `len`.
fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, contrib: impl Iterator<Item = f64>) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    if len == 1 {
        buf[0] += contrib.sum::<f64>();
    } else {
        for (b, c) in buf.iter_mut().zip(contrib) {
            *b += c;
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `f64` values held by the tape (shared leaves included).
    pub fn float_count(&self) -> usize {
        self.nodes.iter().map(|n| n.value.len()).sum()
    }

    pub fn get(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let x = self.get(v);
        assert_eq!(x.len(), 1, "not a scalar");
        x[0]
    }

    fn push(&mut self, op: Op) -> Var {
        let value = compute(&op, |v| &self.nodes[v.0].value[..]).expect("infallible primitive");
        self.push_value(op, value)
    }

    fn push_value(&mut self, op: Op, value: Vec<f64>) -> Var {
        let needs_grad = inputs_of(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Value, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Recomputes every non-leaf node from the leaves.
    pub fn replay(&self) -> Result<Vec<Vec<f64>>> {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let v = match &n.op {
                Op::Leaf => n.value.to_vec(),
                op => compute(op, |v| &vals[v.0][..])?,
            };
            vals.push(v);
        }
        Ok(vals)
    }

    /// Values currently stored on the tape, in node order.
    pub fn recorded_values(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.value.to_vec()).collect()
    }

    /// Gradient of a scalar node with adjoint seed `seed`.
    pub fn gradient_seeded(&self, output: Var, seed: f64) -> Result<Gradients> {
        let len = self.get(output).len();
        if len != 1 {
            return Err(Error::NonScalarOutput(len));
        }
        self.backward(output, vec![seed])
    }

    pub fn gradient(&self, output: Var) -> Result<Gradients> {
        self.gradient_seeded(output, 1.0)
    }

    /// Vector-Jacobian product: pulls `adjoint` (same length as `output`) back
    /// to every node.
    pub fn backward(&self, output: Var, adjoint: Vec<f64>) -> Result<Gradients> {
        assert_eq!(adjoint.len(), self.get(output).len(), "adjoint length");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(adjoint);
        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            self.pull(id, &g, &mut adj)?;
            adj[id] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn pull(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let len = |v: Var| self.nodes[v.0].value.len();
        // broadcast-aware elementwise access
        let at = |x: &[f64], i: usize| if x.len() == 1 { x[0] } else { x[i] };
        macro_rules! elementwise_unary {
            ($a:expr, |$i:ident, $x:ident, $y:ident| $d:expr) => {{
                let a = $a;
                if wants(a) {
                    let xa = val(a);
                    let it = g.iter().enumerate().map(|($i, gi)| {
                        let $x = xa[$i];
                        let $y = out[$i];
                        let _ = ($x, $y);
                        gi * $d
                    });
                    accumulate(&mut adj[a.0], len(a), it);
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(&mut adj[a.0], len(*a), g.iter().copied());
                }
                if wants(*b) {
                    accumulate(&mut adj[b.0], len(*b), g.iter().copied());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(&mut adj[a.0], len(*a), g.iter().copied());
                }
                if wants(*b) {
                    accumulate(&mut adj[b.0], len(*b), g.iter().map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                if wants(*a) {
                    accumulate(
                        &mut adj[a.0],
                        len(*a),
                        g.iter().enumerate().map(|(i, gi)| gi * at(xb, i)),
                    );
                }
                if wants(*b) {
                    accumulate(
                        &mut adj[b.0],
                        len(*b),
                        g.iter().enumerate().map(|(i, gi)| gi * at(xa, i)),
                    );
                }
            }
            Op::Div(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                if wants(*a) {
                    accumulate(
                        &mut adj[a.0],
                        len(*a),
                        g.iter().enumerate().map(|(i, gi)| gi / at(xb, i)),
                    );
                }
                if wants(*b) {
                    accumulate(
                        &mut adj[b.0],
                        len(*b),
                        g.iter()
                            .enumerate()
                            .map(|(i, gi)| -gi * at(xa, i) / (at(xb, i) * at(xb, i))),
                    );
                }
            }
            Op::Neg(a) => elementwise_unary!(*a, |i, x, y| -1.0),
            Op::Scale(a, c) => elementwise_unary!(*a, |i, x, y| *c),
            Op::Offset(a, _) => elementwise_unary!(*a, |i, x, y| 1.0),
            Op::Powf(a, p) => elementwise_unary!(*a, |i, x, y| p * libm::pow(x, p - 1.0)),
            Op::Exp(a) => elementwise_unary!(*a, |i, x, y| y),
            Op::Ln(a) => elementwise_unary!(*a, |i, x, y| 1.0 / x),
            Op::Exp10(a) => elementwise_unary!(*a, |i, x, y| core::f64::consts::LN_10 * y),
            Op::Tanh(a) => elementwise_unary!(*a, |i, x, y| 1.0 - y * y),
            Op::Relu(a) => elementwise_unary!(*a, |i, x, y| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Sigmoid(a) => elementwise_unary!(*a, |i, x, y| y * (1.0 - y)),
            Op::Pow4(a) => elementwise_unary!(*a, |i, x, y| 4.0 * x * x * x),
            Op::RoundSte(a) => elementwise_unary!(*a, |i, x, y| 1.0),
            Op::Sum(a) => {
                if wants(*a) {
                    let n = len(*a);
                    accumulate(&mut adj[a.0], n, core::iter::repeat_n(g[0], n));
                }
            }
            Op::Broadcast(a, _) => {
                if wants(*a) {
                    accumulate(&mut adj[a.0], 1, g.iter().copied());
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = len(*p);
                    if wants(*p) {
                        accumulate(&mut adj[p.0], n, g[off..off + n].iter().copied());
                    }
                    off += n;
                }
            }
            Op::Slice(a, s, l) => {
                if wants(*a) {
                    let n = len(*a);
                    let buf = adj[a.0].get_or_insert_with(|| vec![0.0; n]);
                    for (b, gi) in buf[*s..*s + *l].iter_mut().zip(g) {
                        *b += gi;
                    }
                }
            }
            Op::Gather(a, idx) => {
                if wants(*a) {
                    let n = len(*a);
                    let buf = adj[a.0].get_or_insert_with(|| vec![0.0; n]);
                    for (&k, gi) in idx.iter().zip(g) {
                        buf[k] += gi;
                    }
                }
            }
            Op::MatVec { w, x, rows, cols } => {
                let (wv, xv) = (val(*w), val(*x));
                if wants(*w) {
                    let buf = adj[w.0].get_or_insert_with(|| vec![0.0; rows * cols]);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            kernels::axpy(*gr, xv, &mut buf[r * cols..(r + 1) * cols]);
                        }
                    }
                }
                if wants(*x) {
                    let buf = adj[x.0].get_or_insert_with(|| vec![0.0; *cols]);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            kernels::axpy(*gr, &wv[r * cols..(r + 1) * cols], buf);
                        }
                    }
                }
            }
            Op::SpMv(m, x) => {
                if wants(*x) {
                    let buf = adj[x.0].get_or_insert_with(|| vec![0.0; m.cols()]);
                    m.mul_transpose_acc(g, buf);
                }
            }
            Op::EdgeDiffusion(e, t, cond) => {
                let (tv, gv) = (val(*t), val(*cond));
                if wants(*t) {
                    let buf = adj[t.0].get_or_insert_with(|| vec![0.0; e.nodes]);
                    for (&(a, b), &ge) in e.pairs.iter().zip(gv) {
                        let d = ge * (g[a] - g[b]);
                        buf[b] += d;
                        buf[a] -= d;
                    }
                }
                if wants(*cond) {
                    let buf = adj[cond.0].get_or_insert_with(|| vec![0.0; e.pairs.len()]);
                    for (k, &(a, b)) in e.pairs.iter().enumerate() {
                        buf[k] += (tv[b] - tv[a]) * (g[a] - g[b]);
                    }
                }
            }
            Op::Custom(op, ins) => {
                let refs: Vec<&[f64]> = ins.iter().map(|v| val(*v)).collect();
                let grads = op.backward(&refs, out, g)?;
                for (v, gv) in ins.iter().zip(grads) {
                    if wants(*v) {
                        accumulate(&mut adj[v.0], len(*v), gv.into_iter());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Adjoints of every node reached by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when it did not influence the output.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }

    /// Adjoint of `v` with zeros when it did not influence the output.
    pub fn wrt(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }

    /// Moves the adjoint of `v` out.
    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.adjoints.get_mut(v.0).and_then(Option::take)
    }
}

impl Ops for Tape {
    type V = Var;

    fn input(&mut self, v: Vec<f64>) -> Var {
        self.leaf(Value::Owned(v), true)
    }
    fn input_shared(&mut self, v: &Arc<Vec<f64>>) -> Var {
        self.leaf(Value::Shared(v.clone()), true)
    }
    fn constant(&mut self, v: Vec<f64>) -> Var {
        self.leaf(Value::Owned(v), false)
    }
    fn constant_shared(&mut self, v: &Arc<Vec<f64>>) -> Var {
        self.leaf(Value::Shared(v.clone()), false)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a [f64] {
        self.get(*v)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        self.push(Op::Add(*a, *b))
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        self.push(Op::Sub(*a, *b))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        self.push(Op::Mul(*a, *b))
    }
    fn div(&mut self, a: &Var, b: &Var) -> Var {
        self.push(Op::Div(*a, *b))
    }
    fn neg(&mut self, a: &Var) -> Var {
        self.push(Op::Neg(*a))
    }
    fn scale(&mut self, a: &Var, c: f64) -> Var {
        self.push(Op::Scale(*a, c))
    }
    fn offset(&mut self, a: &Var, c: f64) -> Var {
        self.push(Op::Offset(*a, c))
    }
    fn powf(&mut self, a: &Var, p: f64) -> Var {
        self.push(Op::Powf(*a, p))
    }
    fn exp(&mut self, a: &Var) -> Var {
        self.push(Op::Exp(*a))
    }
    fn ln(&mut self, a: &Var) -> Var {
        self.push(Op::Ln(*a))
    }
    fn exp10(&mut self, a: &Var) -> Var {
        self.push(Op::Exp10(*a))
    }
    fn tanh(&mut self, a: &Var) -> Var {
        self.push(Op::Tanh(*a))
    }
    fn relu(&mut self, a: &Var) -> Var {
        self.push(Op::Relu(*a))
    }
    fn sigmoid(&mut self, a: &Var) -> Var {
        self.push(Op::Sigmoid(*a))
    }
    fn pow4(&mut self, a: &Var) -> Var {
        self.push(Op::Pow4(*a))
    }
    fn round_ste(&mut self, a: &Var) -> Var {
        self.push(Op::RoundSte(*a))
    }
    fn sum(&mut self, a: &Var) -> Var {
        self.push(Op::Sum(*a))
    }
    fn broadcast(&mut self, a: &Var, n: usize) -> Var {
        self.push(Op::Broadcast(*a, n))
    }
    fn concat(&mut self, parts: &[Var]) -> Var {
        self.push(Op::Concat(parts.to_vec()))
    }
    fn slice(&mut self, a: &Var, start: usize, len: usize) -> Var {
        self.push(Op::Slice(*a, start, len))
    }
    fn gather(&mut self, a: &Var, idx: &Arc<Vec<usize>>) -> Var {
        self.push(Op::Gather(*a, idx.clone()))
    }
    fn matvec(&mut self, w: &Var, x: &Var, rows: usize, cols: usize) -> Var {
        self.push(Op::MatVec {
            w: *w,
            x: *x,
            rows,
            cols,
        })
    }
    fn spmv(&mut self, m: &Arc<CsrMatrix>, x: &Var) -> Var {
        self.push(Op::SpMv(m.clone(), *x))
    }
    fn edge_diffusion(&mut self, edges: &Arc<EdgeList>, t: &Var, g: &Var) -> Var {
        self.push(Op::EdgeDiffusion(edges.clone(), *t, *g))
    }
    fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let op = Op::Custom(op, inputs.to_vec());
        let value = compute(&op, |v| &self.nodes[v.0].value[..])?;
        Ok(self.push_value(op, value))
    }
}

/// A finished recording of a scalar function of scalar inputs.
#[derive(Debug)]
pub struct Recording {
    pub tape: Tape,
    pub inputs: Vec<Var>,
    pub output: Var,
}

impl Recording {
    pub fn value(&self) -> f64 {
        self.tape.scalar_value(self.output)
    }

    /// `∂output/∂input` for every registered input.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        let g = self.tape.gradient(self.output)?;
        Ok(self.inputs.iter().map(|&v| g.wrt(v, 1)[0]).collect())
    }
}

/// Records `f` on a fresh tape with one scalar leaf per entry of `inputs`.
pub fn record<F>(inputs: &[f64], f: F) -> Result<Recording>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|&x| tape.input(vec![x])).collect();
    let output = f(&mut tape, &vars)?;
    Ok(Recording {
        tape,
        inputs: vars,
        output,
    })
}
