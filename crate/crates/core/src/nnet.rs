//! Multilayer perceptrons and the Adam optimizer.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Gradients, Ops, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    /// Loads (830) → 5 × 1200 → one raw node count per surface, plus one
    /// shift per surface when `shifts` is set.
    pub fn transfer(input_dim: usize, surfaces: usize, shifts: bool) -> Self {
        Self {
            input_dim,
            hidden_layers: 5,
            hidden_width: 1200,
            output_dim: if shifts { 2 * surfaces } else { surfaces },
            activation: Activation::Relu,
            output_activation: OutputActivation::Identity,
        }
    }

    /// Dense loads → 5 × 1500 → dense temperatures.
    pub fn ann(dense_nodes: usize) -> Self {
        Self {
            input_dim: dense_nodes,
            hidden_layers: 5,
            hidden_width: 1500,
            output_dim: dense_nodes,
            activation: Activation::Relu,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || (self.hidden_layers > 0 && self.hidden_width == 0) {
            return Err(Error::InvalidConfig("network dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(core::iter::repeat_n(self.hidden_width, self.hidden_layers));
        d.push(self.output_dim);
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Row-major weights (`out × in`) and biases per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Arc<Vec<f64>>>,
    pub biases: Vec<Arc<Vec<f64>>>,
}

impl MlpParams {
    /// He-normal weights (`σ = √(2 / fan_in)`), zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = spec.dims();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("finite std");
            weights.push(Arc::new(
                (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect(),
            ));
            biases.push(Arc::new(vec![0.0; fan_out]));
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    /// Builds from explicit layer tensors, checking shapes against `spec`.
    pub fn from_parts(spec: MlpSpec, weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        if weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "layer count",
                expected: dims.len() - 1,
                got: weights.len(),
            });
        }
        for (k, w) in dims.windows(2).enumerate() {
            if weights[k].len() != w[0] * w[1] {
                return Err(Error::DimensionMismatch {
                    context: "weight matrix",
                    expected: w[0] * w[1],
                    got: weights[k].len(),
                });
            }
            if biases[k].len() != w[1] {
                return Err(Error::DimensionMismatch {
                    context: "bias vector",
                    expected: w[1],
                    got: biases[k].len(),
                });
            }
        }
        Ok(Self {
            spec,
            weights: weights.into_iter().map(Arc::new).collect(),
            biases: biases.into_iter().map(Arc::new).collect(),
        })
    }

    /// Registers every tensor as a leaf (differentiable when `trainable`).
    pub fn bind<O: Ops>(&self, ops: &mut O, trainable: bool) -> MlpVars<O::V> {
        let leaf = |ops: &mut O, t: &Arc<Vec<f64>>| {
            if trainable {
                ops.input_shared(t)
            } else {
                ops.constant_shared(t)
            }
        };
        MlpVars {
            weights: self.weights.iter().map(|w| leaf(ops, w)).collect(),
            biases: self.biases.iter().map(|b| leaf(ops, b)).collect(),
        }
    }

    /// Plain forward pass.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut ev = crate::autodiff::Eval;
        let vars = self.bind(&mut ev, false);
        let x = ev.constant(x.to_vec());
        Ok(forward(&mut ev, self, &vars, &x)?.to_vec())
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Applies `f` to every tensor in a fixed order (weights then bias, per layer).
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [Arc::make_mut(w), Arc::make_mut(b)])
    }
}

/// Network tensors bound to an [`Ops`] backend.
#[derive(Debug, Clone)]
pub struct MlpVars<V> {
    pub weights: Vec<V>,
    pub biases: Vec<V>,
}

/// Affine + activation composition; the last layer uses the output activation.
pub fn forward<O: Ops>(ops: &mut O, params: &MlpParams, vars: &MlpVars<O::V>, x: &O::V) -> Result<O::V> {
    let dims = params.spec.dims();
    let got = ops.value(x).len();
    if got != dims[0] {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: dims[0],
            got,
        });
    }
    let last = dims.len() - 2;
    let mut h = x.clone();
    for (k, w) in dims.windows(2).enumerate() {
        let z = ops.matvec(&vars.weights[k], &h, w[1], w[0]);
        let z = ops.add(&z, &vars.biases[k]);
        h = if k < last {
            match params.spec.activation {
                Activation::Relu => ops.relu(&z),
                Activation::Tanh => ops.tanh(&z),
            }
        } else {
            match params.spec.output_activation {
                OutputActivation::Identity => z,
                OutputActivation::Sigmoid => ops.sigmoid(&z),
            }
        };
    }
    Ok(h)
}

/// Gradient tensors with the layout of [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    /// Pulls the adjoints of bound network leaves out of a backward pass.
    pub fn from_tape(grads: &mut Gradients, vars: &MlpVars<Var>, params: &MlpParams) -> Self {
        let pull = |g: &mut Gradients, v: &Var, len: usize| g.take(*v).unwrap_or_else(|| vec![0.0; len]);
        Self {
            weights: vars
                .weights
                .iter()
                .zip(&params.weights)
                .map(|(v, w)| pull(grads, v, w.len()))
                .collect(),
            biases: vars
                .biases
                .iter()
                .zip(&params.biases)
                .map(|(v, b)| pull(grads, v, b.len()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of `params` along `grads`. Zero gradients leave parameters untouched.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        if self.m.is_empty() {
            self.m = grads.tensors().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let b1t = 1.0 - libm::pow(self.beta1, self.t as f64);
        let b2t = 1.0 - libm::pow(self.beta2, self.t as f64);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mh = m[k] / b1t;
                let vh = v[k] / b2t;
                p[k] -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
    }
}

/// Loss and parameter gradient of one sample, recorded on a fresh tape.
pub fn loss_and_grad<F>(params: &MlpParams, f: F) -> Result<(f64, MlpGrads)>
where
    F: FnOnce(&mut Tape, &MlpVars<Var>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, true);
    let out = f(&mut tape, &vars)?;
    let value = tape.scalar_value(out);
    let mut g = tape.gradient(out)?;
    Ok((value, MlpGrads::from_tape(&mut g, &vars, params)))
}

/// One optimizer step on the mean loss of `batch`.
///
/// Per-sample gradients are summed in batch order; a non-finite loss aborts
/// before any parameter changes.
pub fn train_step<B, F>(params: &mut MlpParams, adam: &mut Adam, batch: &[B], mut sample_loss: F) -> Result<f64>
where
    F: FnMut(&MlpParams, &B) -> Result<(f64, MlpGrads)>,
{
    let mut total = params.zero_grads();
    let mut loss = 0.0;
    for (i, b) in batch.iter().enumerate() {
        let (l, g) = sample_loss(params, b)?;
        if !l.is_finite() || !g.is_finite() {
            return Err(Error::NonFiniteLoss { sample: i, value: l });
        }
        loss += l;
        total.add_assign(&g);
    }
    let scale = 1.0 / batch.len().max(1) as f64;
    total.scale(scale);
    adam.step(params, &total);
    Ok(loss * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eval;

    fn spec(i: usize, layers: usize, w: usize, o: usize) -> MlpSpec {
        MlpSpec {
            input_dim: i,
            hidden_layers: layers,
            hidden_width: w,
            output_dim: o,
            activation: Activation::Relu,
            output_activation: OutputActivation::Identity,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::init(spec(4, 2, 8, 3), 7).unwrap();
        let b = MlpParams::init(spec(4, 2, 8, 3), 7).unwrap();
        let c = MlpParams::init(spec(4, 2, 8, 3), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.biases.iter().all(|b| b.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn he_std_matches_fan_in() {
        let p = MlpParams::init(spec(1200, 1, 1200, 1), 3).unwrap();
        let w = &p.weights[1];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = libm::sqrt(w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n);
        let expect = libm::sqrt(2.0 / 1200.0);
        assert!((std / expect - 1.0).abs() < 0.05, "std {std}");
    }

    #[test]
    fn zero_hidden_layers_is_one_matrix() {
        let p = MlpParams::init(spec(3, 0, 0, 2), 1).unwrap();
        assert_eq!(p.layers(), 1);
        assert_eq!(p.weights[0].len(), 6);
    }

    #[test]
    fn identity_layer_passes_input() {
        let p = MlpParams::from_parts(
            spec(3, 0, 0, 3),
            vec![vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0; 3]],
        )
        .unwrap();
        assert_eq!(p.predict(&[1.5, -2.0, 3.0]).unwrap(), vec![1.5, -2.0, 3.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let s = spec(3, 2, 4, 2);
        let dims = s.dims();
        let w = dims.windows(2).map(|d| vec![0.0; d[0] * d[1]]).collect();
        let b = dims.windows(2).map(|d| vec![0.0; d[1]]).collect();
        let p = MlpParams::from_parts(s, w, b).unwrap();
        assert_eq!(p.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn small_net_matches_hand_arithmetic() {
        // 2-2-1 with relu hidden
        let p = MlpParams::from_parts(
            spec(2, 1, 2, 1),
            vec![vec![0.5, -1.0, 2.0, 0.25], vec![1.5, -0.5]],
            vec![vec![0.1, -3.0], vec![0.2]],
        )
        .unwrap();
        let x = [2.0, 1.0];
        let h0 = (0.5 * 2.0 - 1.0 * 1.0 + 0.1f64).max(0.0);
        let h1 = (2.0 * 2.0 + 0.25 * 1.0 - 3.0f64).max(0.0);
        let y = 1.5 * h0 - 0.5 * h1 + 0.2;
        assert!((p.predict(&x).unwrap()[0] - y).abs() < 1e-15);
    }

    #[test]
    fn input_length_is_checked() {
        let p = MlpParams::init(spec(3, 1, 4, 2), 1).unwrap();
        assert!(matches!(p.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = MlpParams::init(spec(3, 1, 4, 2), 1).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(1e-3);
        let g = p.zero_grads();
        adam.step(&mut p, &g);
        assert_eq!(p, before);
    }

    fn bowl(params: &MlpParams, x: &[f64]) -> Result<(f64, MlpGrads)> {
        loss_and_grad(params, |t, vars| {
            let xin = t.constant(x.to_vec());
            let y = forward(t, params, vars, &xin)?;
            let target = t.constant(vec![1.0, -1.0]);
            let d = t.sub(&y, &target);
            let d2 = t.mul(&d, &d);
            Ok(t.sum(&d2))
        })
    }

    #[test]
    fn quadratic_loss_decreases() {
        let mut p = MlpParams::init(spec(3, 0, 0, 2), 4).unwrap();
        let mut adam = Adam::new(1e-3);
        let batch = vec![vec![0.5, 0.2, -0.3]];
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let l = train_step(&mut p, &mut adam, &batch, |p, x| bowl(p, x)).unwrap();
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn training_is_reproducible() {
        let run = || {
            let mut p = MlpParams::init(spec(3, 1, 5, 2), 9).unwrap();
            let mut adam = Adam::new(1e-2);
            let batch = vec![vec![0.5, 0.2, -0.3], vec![0.1, 0.9, 0.4]];
            let losses: Vec<f64> = (0..10)
                .map(|_| train_step(&mut p, &mut adam, &batch, |p, x| bowl(p, x)).unwrap())
                .collect();
            (losses, p)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn matvec_weight_gradient_is_input() {
        let p = MlpParams::init(spec(3, 0, 0, 2), 2).unwrap();
        let x = vec![0.3, -1.2, 2.5];
        let (_, g) = loss_and_grad(&p, |t, vars| {
            let xin = t.constant(x.clone());
            let y = forward(t, &p, vars, &xin)?;
            Ok(t.sum(&y))
        })
        .unwrap();
        assert_eq!(g.weights[0], [x.clone(), x].concat());
        assert_eq!(g.biases[0], vec![1.0, 1.0]);
    }

    #[test]
    fn eval_and_tape_agree_bitwise() {
        let p = MlpParams::init(spec(5, 2, 7, 3), 11).unwrap();
        let x = vec![0.1, 0.2, -0.3, 0.4, 0.5];
        let mut t = Tape::new();
        let vars = p.bind(&mut t, true);
        let xin = t.constant(x.clone());
        let y = forward(&mut t, &p, &vars, &xin).unwrap();
        let mut ev = Eval;
        let ev_vars = p.bind(&mut ev, false);
        let xe = ev.constant(x);
        let ye = forward(&mut ev, &p, &ev_vars, &xe).unwrap();
        assert_eq!(t.get(y), &ye[..]);
    }
}
