//! Forward kernels shared by the plain evaluator and the tape, so both
//! produce bit-identical values.

use alloc::vec::Vec;

/// Undirected conduction links between nodes; link `e` joins `pairs[e]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeList {
    pub nodes: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Elementwise binary op with length-1 broadcasting on either side.
#[inline]
pub fn binary(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.len(), b.len()) {
        (x, y) if x == y => a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect(),
        (1, _) => b.iter().map(|&q| f(a[0], q)).collect(),
        (_, 1) => a.iter().map(|&p| f(p, b[0])).collect(),
        (x, y) => panic!("operand lengths {x} and {y} do not broadcast"),
    }
}

pub fn broadcast_len(a: usize, b: usize) -> usize {
    if a == 1 { b } else { a }
}

#[inline]
pub fn unary(a: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    a.iter().map(|&x| f(x)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn pow4(x: f64) -> f64 {
    let x2 = x * x;
    x2 * x2
}

pub fn exp10(x: f64) -> f64 {
    libm::pow(10.0, x)
}

/// Dot product with eight independent partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major `W x` with `W` of shape `rows × cols`.
pub fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(w.len(), rows * cols, "matrix size");
    assert_eq!(x.len(), cols, "matvec input length");
    w.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// `out_i = Σ_{links (i,k)} g_e (t_k − t_i)`, accumulated in link order.
pub fn edge_diffusion(edges: &EdgeList, t: &[f64], g: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), edges.nodes, "edge diffusion state length");
    assert_eq!(g.len(), edges.pairs.len(), "edge diffusion conductance length");
    let mut out = alloc::vec![0.0; edges.nodes];
    for (&(a, b), &ge) in edges.pairs.iter().zip(g) {
        let flow = ge * (t[b] - t[a]);
        out[a] += flow;
        out[b] -= flow;
    }
    out
}

pub fn gather(a: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| a[i]).collect()
}

pub fn sum(a: &[f64]) -> f64 {
    a.iter().sum()
}
