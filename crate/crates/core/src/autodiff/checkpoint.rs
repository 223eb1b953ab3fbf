//! Long rollouts as a single tape node with checkpointed recomputation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use super::{CustomOp, Eval, Ops, Tape, Value};
use crate::{Error, Result};

/// One step of a fixed-parameter recurrence `x_{k+1} = f(x_k, p)`.
pub trait StepFn {
    fn state_len(&self) -> usize;
    fn step<O: Ops>(&self, ops: &mut O, state: &O::V, params: &O::V) -> O::V;
    /// Called on the plain forward pass after every step (`step` is 1-based).
    fn check(&self, _step: usize, _state: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Peak storage observed during a checkpointed backward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryStats {
    /// States held as checkpoints.
    pub checkpoints: usize,
    /// Largest number of steps recorded on a segment tape at once.
    pub segment_steps: usize,
    /// `checkpoints + segment_steps`, in units of one state vector.
    pub peak_states: usize,
    /// Peak `f64` count across checkpoints and the live segment tape.
    pub peak_floats: usize,
}

/// Rollout of `n_steps` steps; inputs are `[state, params]`, output is the final state.
pub struct Rollout<F> {
    f: Arc<F>,
    n_steps: usize,
    every: usize,
    checkpoints: RefCell<Vec<Vec<f64>>>,
    stats: RefCell<MemoryStats>,
}

impl<F: StepFn> Rollout<F> {
    pub fn new(f: Arc<F>, n_steps: usize, every: usize) -> Result<Self> {
        if every < 1 {
            return Err(Error::InvalidCheckpointInterval);
        }
        Ok(Self {
            f,
            n_steps,
            every,
            checkpoints: RefCell::new(Vec::new()),
            stats: RefCell::new(MemoryStats::default()),
        })
    }

    pub fn stats(&self) -> MemoryStats {
        *self.stats.borrow()
    }

    fn segments(&self) -> usize {
        self.n_steps.div_ceil(self.every)
    }
}

impl<F: StepFn> CustomOp for Rollout<F> {
    fn name(&self) -> &str {
        "rollout"
    }

    fn forward(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let [state, params] = inputs else {
            return Err(Error::DimensionMismatch {
                context: "rollout inputs",
                expected: 2,
                got: inputs.len(),
            });
        };
        let mut ev = Eval;
        let p = Value::Owned(params.to_vec());
        let mut x = Value::Owned(state.to_vec());
        let mut cps = Vec::with_capacity(self.segments());
        for k in 0..self.n_steps {
            if k % self.every == 0 {
                cps.push(x.to_vec());
            }
            x = self.f.step(&mut ev, &x, &p);
            self.f.check(k + 1, &x)?;
        }
        *self.checkpoints.borrow_mut() = cps;
        Ok(x.to_vec())
    }

    fn backward(&self, inputs: &[&[f64]], _output: &[f64], adjoint: &[f64]) -> Result<Vec<Vec<f64>>> {
        let params = inputs[1];
        let cps = self.checkpoints.borrow();
        let state_floats = inputs[0].len();
        let mut stats = MemoryStats {
            checkpoints: cps.len(),
            ..MemoryStats::default()
        };
        let mut g_state = adjoint.to_vec();
        let mut g_params = vec![0.0; params.len()];
        let shared = Arc::new(params.to_vec());
        for seg in (0..cps.len()).rev() {
            let start = seg * self.every;
            let len = self.every.min(self.n_steps - start);
            let mut tape = Tape::new();
            let x0 = tape.input(cps[seg].clone());
            let p = tape.input_shared(&shared);
            let mut x = x0;
            for _ in 0..len {
                x = self.f.step(&mut tape, &x, &p);
            }
            stats.segment_steps = stats.segment_steps.max(len);
            let floats = tape.float_count() - params.len() + cps.len() * state_floats;
            stats.peak_floats = stats.peak_floats.max(floats);
            let mut g = tape.backward(x, g_state)?;
            g_state = g.take(x0).unwrap_or_else(|| vec![0.0; state_floats]);
            if let Some(gp) = g.get(p) {
                for (a, b) in g_params.iter_mut().zip(gp) {
                    *a += b;
                }
            }
        }
        stats.peak_states = stats.checkpoints + stats.segment_steps;
        *self.stats.borrow_mut() = stats;
        Ok(vec![g_state, g_params])
    }
}

/// Runs `n_steps` steps as one tape node, storing a checkpoint every `every`
/// steps and re-recording one segment at a time on the backward pass.
pub fn checkpointed_rollout<O, F>(
    ops: &mut O,
    f: Arc<F>,
    state: &O::V,
    params: &O::V,
    n_steps: usize,
    every: usize,
) -> Result<(O::V, Arc<Rollout<F>>)>
where
    O: Ops,
    F: StepFn + 'static,
{
    let op = Arc::new(Rollout::new(f, n_steps, every)?);
    let out = ops.custom(op.clone(), &[state.clone(), params.clone()])?;
    Ok((out, op))
}

/// Records every step directly on `ops`.
pub fn full_rollout<O: Ops, F: StepFn>(
    ops: &mut O,
    f: &F,
    state: &O::V,
    params: &O::V,
    n_steps: usize,
) -> Result<O::V> {
    let mut x = state.clone();
    for k in 0..n_steps {
        x = f.step(ops, &x, params);
        f.check(k + 1, ops.value(&x))?;
    }
    Ok(x)
}
