//! Hybrid models: a transfer network picks the nodalization (and, for the
//! shifted variant, per-surface temperature offsets) and the physics model
//! does the rest.
//!
//! Pipeline for one sample:
//! loads → transfer net → node counts → coarse meshes → load/temperature
//! downsampling and view-factor lookup → explicit rollout → spline upsampling
//! → optional per-surface shift.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Eval, Ops, Tape, Value, Var, checkpointed_rollout};
use crate::mesh::{FaceMesh, Nodalization, SpacecraftConfig, SurfaceKind, node_offsets, total_node_count};
use crate::nnet::{MlpGrads, MlpParams, MlpSpec, MlpVars, forward};
use crate::radiation::{ViewFactorMatrix, lookup_coarse_csr, nearest_dense_rows};
use crate::resample::Resampler;
use crate::solver::{FaceProps, SolverSettings, ThermalStep, Topology, node_parameters, pack_params};
use crate::sparse::CsrMatrix;
use crate::{DENSE_N, Error, MAX_N, MIN_N, Result};

/// Temperature scale of the ANN baseline's outputs, K.
pub const ANN_TEMPERATURE_SCALE: f64 = 400.0;

/// Default rollout checkpoint interval, steps.
pub const DEFAULT_CHECKPOINT_EVERY: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Architecture {
    /// Nodalization only.
    PimlA,
    /// Nodalization plus per-surface shifts.
    PimlAs,
}

impl Architecture {
    pub fn has_shifts(self) -> bool {
        matches!(self, Architecture::PimlAs)
    }
}

/// Constants of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossParams {
    /// Total dense nodes `D`.
    pub dense_nodes: usize,
    pub kappa_l: f64,
    pub kappa_u: f64,
    pub w_2d: f64,
    pub w_1d: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            dense_nodes: 830,
            kappa_l: 38.0,
            kappa_u: 306.0,
            w_2d: 1.0,
            w_1d: 10.0,
        }
    }
}

impl LossParams {
    /// `D` from the dense mesh, `κ_l` / `κ_u` from uniform n = 2 / 6.
    pub fn for_config(config: &SpacecraftConfig) -> Self {
        let m = config.len();
        Self {
            dense_nodes: total_node_count(&Nodalization::uniform(DENSE_N, m), config),
            kappa_l: total_node_count(&Nodalization::uniform(2, m), config) as f64,
            kappa_u: total_node_count(&Nodalization::uniform(6, m), config) as f64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_l < self.kappa_u) {
            return Err(Error::InvalidSettings("kappa_l must be below kappa_u"));
        }
        Ok(())
    }

    /// Per-node weights `w_d` on the dense mesh.
    pub fn node_weights(&self, kinds: &[SurfaceKind]) -> Vec<f64> {
        kinds
            .iter()
            .flat_map(|k| {
                let w = if k.is_2d() { self.w_2d } else { self.w_1d };
                core::iter::repeat_n(w, k.node_count(DENSE_N))
            })
            .collect()
    }
}

/// Raw transfer-network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    pub raw_nodalization: Vec<f64>,
    /// K; zeros for the unshifted variant.
    pub shifts: Vec<f64>,
}

impl TransferOutput {
    pub fn from_net_output(out: &[f64], surfaces: usize, arch: Architecture) -> Self {
        Self {
            raw_nodalization: out[..surfaces].to_vec(),
            shifts: if arch.has_shifts() {
                out[surfaces..2 * surfaces].to_vec()
            } else {
                vec![0.0; surfaces]
            },
        }
    }
}

/// `round(2 + 8·sigmoid(raw))`, always within `[2, 10]`.
pub fn decode_n(raw: f64) -> usize {
    let v = libm::round(2.0 + 8.0 * crate::autodiff::kernels::sigmoid(raw));
    (v as usize).clamp(MIN_N, MAX_N)
}

pub fn decode_nodalization(raw: &[f64]) -> Nodalization {
    Nodalization::new(raw.iter().map(|&r| decode_n(r)).collect())
}

/// Real-valued node counts `2 + 8·sigmoid(raw)` before rounding.
fn relaxed_counts<O: Ops>(ops: &mut O, raw: &O::V) -> O::V {
    let s = ops.sigmoid(raw);
    let s = ops.scale(&s, (MAX_N - MIN_N) as f64);
    ops.offset(&s, MIN_N as f64)
}

/// How the per-surface node counts are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeMode {
    /// Round with a straight-through gradient.
    Ste,
    /// Fixed counts, no gradient (baselines).
    Fixed(Vec<usize>),
    /// Structure fixed at `ns`; counts are `relaxed + offsets`, which equals
    /// the straight-through value and gradient at the point where `offsets`
    /// were frozen. Used to check gradients by finite differences.
    Frozen { ns: Vec<usize>, offsets: Vec<f64> },
}

impl NodeMode {
    /// Freezes the rounding offsets of `raw`.
    pub fn frozen_at(raw: &[f64]) -> Self {
        let mut ns = Vec::new();
        let mut offsets = Vec::new();
        for &r in raw {
            let relaxed = 2.0 + 8.0 * crate::autodiff::kernels::sigmoid(r);
            let n = decode_n(r);
            ns.push(n);
            offsets.push(n as f64 - relaxed);
        }
        NodeMode::Frozen { ns, offsets }
    }
}

/// Mesh-dependent operators for one nodalization.
#[derive(Debug, Clone)]
pub struct Structure {
    pub ns: Vec<usize>,
    pub topology: Topology,
    pub step: Arc<ThermalStep>,
    pub load_down: Arc<CsrMatrix>,
    pub temp_down: Arc<CsrMatrix>,
    pub temp_up: Arc<CsrMatrix>,
}

impl Structure {
    pub fn total_nodes(&self) -> usize {
        self.topology.node_count()
    }
}

/// Memo of built structures keyed by nodalization, supplied by the host.
pub trait StructureCache: Send + Sync {
    fn get(&self, ns: &[usize]) -> Option<Arc<Structure>>;
    fn put(&self, ns: &[usize], structure: Arc<Structure>);
}

/// Everything about the spacecraft the models share. Immutable.
#[derive(Clone)]
pub struct PhysicsContext {
    pub config: SpacecraftConfig,
    pub faces: Vec<FaceProps>,
    pub kinds: Vec<SurfaceKind>,
    pub dense_meshes: Vec<FaceMesh>,
    pub dense_vf: Arc<CsrMatrix>,
    pub dense_space: Vec<f64>,
    pub resampler: Resampler,
    pub settings: SolverSettings,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub loss: LossParams,
    pub node_weights: Arc<Vec<f64>>,
    /// Surface of every dense node.
    pub dense_face: Arc<Vec<usize>>,
    pub dense_offsets: Vec<usize>,
    pub cache: Option<Arc<dyn StructureCache>>,
}

impl core::fmt::Debug for PhysicsContext {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PhysicsContext")
            .field("surfaces", &self.kinds.len())
            .field("dense_nodes", &self.loss.dense_nodes)
            .field("settings", &self.settings)
            .field("checkpoint_every", &self.checkpoint_every)
            .field("cached", &self.cache.is_some())
            .finish_non_exhaustive()
    }
}

impl PhysicsContext {
    pub fn new(config: SpacecraftConfig, dense_vf: &ViewFactorMatrix, settings: SolverSettings) -> Result<Self> {
        config.validate()?;
        let steps = settings.steps()?;
        let kinds = config.kinds();
        let dense_meshes = config.dense_meshes();
        let nodes: usize = dense_meshes.iter().map(FaceMesh::node_count).sum();
        if dense_vf.len() != nodes {
            return Err(Error::DimensionMismatch {
                context: "dense view factors",
                expected: nodes,
                got: dense_vf.len(),
            });
        }
        let loss = LossParams::for_config(&config);
        let node_weights = Arc::new(loss.node_weights(&kinds));
        let dense_face = Arc::new(
            kinds
                .iter()
                .enumerate()
                .flat_map(|(j, k)| core::iter::repeat_n(j, k.node_count(DENSE_N)))
                .collect(),
        );
        Ok(Self {
            faces: config.surfaces.iter().map(FaceProps::from_surface).collect(),
            dense_offsets: node_offsets(&kinds, &vec![DENSE_N; kinds.len()]),
            kinds,
            dense_meshes,
            dense_vf: Arc::new(dense_vf.to_csr()),
            dense_space: dense_vf.space_factors(),
            resampler: Resampler::new(DENSE_N),
            settings,
            steps,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            loss,
            node_weights,
            dense_face,
            config,
            cache: None,
        })
    }

    pub fn surfaces(&self) -> usize {
        self.kinds.len()
    }

    pub fn dense_nodes(&self) -> usize {
        self.loss.dense_nodes
    }

    /// Meshes, view factors and resampling operators for `ns`.
    pub fn structure(&self, ns: &[usize]) -> Result<Structure> {
        let nod = Nodalization::new(ns.to_vec());
        let coarse = self.config.meshes(&nod)?;
        let f = lookup_coarse_csr(&self.dense_vf, &self.dense_meshes, &coarse)?;
        let space: Vec<f64> = nearest_dense_rows(&self.dense_meshes, &coarse)
            .into_iter()
            .map(|r| self.dense_space[r])
            .collect();
        let topology = Topology::new(&self.kinds, ns);
        let step = Arc::new(ThermalStep::new(
            topology.edges.clone(),
            Arc::new(f),
            &space,
            self.settings.space_sink_temperature,
        )?);
        let ops = self.resampler.craft(&self.kinds, ns)?;
        Ok(Structure {
            ns: ns.to_vec(),
            topology,
            step,
            load_down: Arc::new(ops.load_down),
            temp_down: Arc::new(ops.temp_down),
            temp_up: Arc::new(ops.temp_up),
        })
    }

    /// [`PhysicsContext::structure`] through the cache, if one is attached.
    pub fn structure_shared(&self, ns: &[usize]) -> Result<Arc<Structure>> {
        if let Some(c) = &self.cache {
            if let Some(s) = c.get(ns) {
                return Ok(s);
            }
            let s = Arc::new(self.structure(ns)?);
            c.put(ns, s.clone());
            return Ok(s);
        }
        Ok(Arc::new(self.structure(ns)?))
    }

    fn check_dense(&self, what: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.dense_nodes() {
            return Err(Error::DimensionMismatch {
                context: what,
                expected: self.dense_nodes(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Physics part of the pipeline for given node-count values.
    ///
    /// `n_values` holds one length-1 value per surface whose value is the
    /// integer count used by `structure`.
    pub fn simulate_on<O: Ops>(
        &self,
        ops: &mut O,
        structure: &Structure,
        n_values: &[O::V],
        loads: &[f64],
        initial: &[f64],
    ) -> Result<O::V> {
        self.check_dense("dense loads", loads)?;
        self.check_dense("dense initial temperatures", initial)?;
        let params = node_parameters(ops, &self.faces, &structure.topology, n_values, &self.settings);
        let q_dense = ops.constant(loads.to_vec());
        let q = ops.spmv(&structure.load_down, &q_dense);
        let t_dense = ops.constant(initial.to_vec());
        let t0 = ops.spmv(&structure.temp_down, &t_dense);
        let p = pack_params(ops, &params, &q);
        let (t, _) = checkpointed_rollout(ops, structure.step.clone(), &t0, &p, self.steps, self.checkpoint_every)?;
        Ok(ops.spmv(&structure.temp_up, &t))
    }

    /// Fixed-nodalization physics model (HF at n = 10, LF at n = 3).
    pub fn fixed_forward(&self, ns: &[usize], loads: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
        let s = self.structure_shared(ns)?;
        let mut ev = Eval;
        let n: Vec<Value> = ns.iter().map(|&k| ev.scalar(k as f64)).collect();
        Ok(self.simulate_on(&mut ev, &s, &n, loads, initial)?.to_vec())
    }

    pub fn hf_forward(&self, loads: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
        self.fixed_forward(&vec![DENSE_N; self.surfaces()], loads, initial)
    }
}

/// One input record on the dense mesh.
#[derive(Debug, Clone, Copy)]
pub struct SampleInput<'a> {
    pub loads: &'a [f64],
    pub initial: &'a [f64],
}

/// Output of [`piml_forward`].
#[derive(Debug, Clone)]
pub struct PimlOutput<V> {
    /// Dense temperature prediction.
    pub dense: V,
    /// One length-1 node-count value per surface.
    pub n_values: Vec<V>,
    pub nodalization: Nodalization,
    pub shifts: Option<V>,
}

/// A trained (or initial) hybrid model.
#[derive(Debug, Clone, PartialEq)]
pub struct PimlModel {
    pub arch: Architecture,
    pub net: MlpParams,
    /// Loads are divided by this before entering the network.
    pub load_scale: f64,
}

impl PimlModel {
    /// Default-size transfer network with zero final biases (n = 6 start) and
    /// zero shift rows.
    pub fn init(arch: Architecture, ctx: &PhysicsContext, load_scale: f64, seed: u64) -> Result<Self> {
        let spec = MlpSpec::transfer(ctx.dense_nodes(), ctx.surfaces(), arch.has_shifts());
        Self::with_spec(arch, spec, ctx.surfaces(), load_scale, seed)
    }

    pub fn with_spec(arch: Architecture, spec: MlpSpec, surfaces: usize, load_scale: f64, seed: u64) -> Result<Self> {
        let expected = if arch.has_shifts() { 2 * surfaces } else { surfaces };
        if spec.output_dim != expected {
            return Err(Error::DimensionMismatch {
                context: "transfer network outputs",
                expected,
                got: spec.output_dim,
            });
        }
        let mut net = MlpParams::init(spec, seed)?;
        if arch.has_shifts() {
            let last = net.weights.len() - 1;
            let cols = spec.dims()[spec.dims().len() - 2];
            let w = Arc::make_mut(&mut net.weights[last]);
            for x in &mut w[surfaces * cols..] {
                *x = 0.0;
            }
        }
        Ok(Self { arch, net, load_scale })
    }

    /// Sets the final layer so every surface decodes to `n` and all shifts are zero.
    pub fn force_uniform(&mut self, n: usize) {
        let last = self.net.weights.len() - 1;
        for x in Arc::make_mut(&mut self.net.weights[last]).iter_mut() {
            *x = 0.0;
        }
        let raw = match n {
            MAX_N => 50.0,
            MIN_N => -50.0,
            _ => {
                let p = (n as f64 - 2.0) / 8.0;
                libm::log(p / (1.0 - p))
            }
        };
        let m = if self.arch.has_shifts() {
            self.net.spec.output_dim / 2
        } else {
            self.net.spec.output_dim
        };
        let b = Arc::make_mut(&mut self.net.biases[last]);
        for (k, x) in b.iter_mut().enumerate() {
            *x = if k < m { raw } else { 0.0 };
        }
    }

    fn scaled_input(&self, loads: &[f64]) -> Vec<f64> {
        loads.iter().map(|q| q / self.load_scale).collect()
    }

    /// Transfer-network outputs for one load vector.
    pub fn transfer(&self, loads: &[f64], surfaces: usize) -> Result<TransferOutput> {
        let out = self.net.predict(&self.scaled_input(loads))?;
        Ok(TransferOutput::from_net_output(&out, surfaces, self.arch))
    }

    /// Plain prediction on the dense mesh plus the chosen nodalization.
    pub fn predict(&self, ctx: &PhysicsContext, sample: SampleInput<'_>) -> Result<(Vec<f64>, Nodalization)> {
        let mut ev = Eval;
        let vars = self.net.bind(&mut ev, false);
        let out = piml_forward(&mut ev, ctx, self, &vars, sample, &NodeMode::Ste)?;
        Ok((out.dense.to_vec(), out.nodalization))
    }
}

/// Full hybrid forward pass on any backend.
pub fn piml_forward<O: Ops>(
    ops: &mut O,
    ctx: &PhysicsContext,
    model: &PimlModel,
    vars: &MlpVars<O::V>,
    sample: SampleInput<'_>,
    mode: &NodeMode,
) -> Result<PimlOutput<O::V>> {
    let m = ctx.surfaces();
    let x = ops.constant(model.scaled_input(sample.loads));
    let out = forward(ops, &model.net, vars, &x)?;
    let raw = ops.slice(&out, 0, m);
    let (ns, counts): (Vec<usize>, O::V) = match mode {
        NodeMode::Ste => {
            let relaxed = relaxed_counts(ops, &raw);
            let c = ops.round_ste(&relaxed);
            let ns = ops
                .value(&c)
                .iter()
                .map(|&v| (v as usize).clamp(MIN_N, MAX_N))
                .collect();
            (ns, c)
        }
        NodeMode::Fixed(ns) => (ns.clone(), ops.constant(ns.iter().map(|&n| n as f64).collect())),
        NodeMode::Frozen { ns, offsets } => {
            let relaxed = relaxed_counts(ops, &raw);
            let off = ops.constant(offsets.clone());
            (ns.clone(), ops.add(&relaxed, &off))
        }
    };
    if ns.len() != m {
        return Err(Error::DimensionMismatch {
            context: "node counts",
            expected: m,
            got: ns.len(),
        });
    }
    let n_values: Vec<O::V> = (0..m).map(|j| ops.slice(&counts, j, 1)).collect();
    let structure = ctx.structure_shared(&ns)?;
    let mut dense = ctx.simulate_on(ops, &structure, &n_values, sample.loads, sample.initial)?;
    let shifts = if model.arch.has_shifts() {
        let s = ops.slice(&out, m, m);
        let per_node = ops.gather(&s, &ctx.dense_face);
        dense = ops.add(&dense, &per_node);
        Some(s)
    } else {
        None
    };
    Ok(PimlOutput {
        dense,
        n_values,
        nodalization: Nodalization::new(ns),
        shifts,
    })
}

/// `(1/D) Σ_d w_d (T_d − T̂_d)²` for one sample.
pub fn loss_mse<O: Ops>(
    ops: &mut O,
    pred: &O::V,
    truth: &[f64],
    weights: &Arc<Vec<f64>>,
    dense_nodes: usize,
) -> Result<O::V> {
    let got = ops.value(pred).len();
    if got != truth.len() || got != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction vs truth",
            expected: truth.len(),
            got,
        });
    }
    let t = ops.constant(truth.to_vec());
    let d = ops.sub(pred, &t);
    let d2 = ops.mul(&d, &d);
    let w = ops.constant_shared(weights);
    let wd = ops.mul(&w, &d2);
    let s = ops.sum(&wd);
    let den = ops.scalar(dense_nodes as f64);
    Ok(ops.div(&s, &den))
}

/// `10^{4κ}` with `κ = (Στ − κ_l)/(κ_u − κ_l) − 1` for one sample; `τ` is n² on
/// plates and n on cylinders.
pub fn loss_cost<O: Ops>(ops: &mut O, n_values: &[O::V], kinds: &[SurfaceKind], params: &LossParams) -> O::V {
    let taus: Vec<O::V> = n_values
        .iter()
        .zip(kinds)
        .map(|(n, k)| if k.is_2d() { ops.mul(n, n) } else { n.clone() })
        .collect();
    let all = ops.concat(&taus);
    let total = ops.sum(&all);
    let shifted = ops.offset(&total, -params.kappa_l);
    let span = ops.scalar(params.kappa_u - params.kappa_l);
    let k = ops.div(&shifted, &span);
    let k = ops.offset(&k, -1.0);
    let k4 = ops.scale(&k, 4.0);
    ops.exp10(&k4)
}

/// Plain cost term for a total node count.
pub fn cost_term(total_nodes: f64, params: &LossParams) -> f64 {
    let k = (total_nodes - params.kappa_l) / (params.kappa_u - params.kappa_l) - 1.0;
    crate::autodiff::kernels::exp10(4.0 * k)
}

/// `L = L_m + L_c`.
pub fn total_loss<O: Ops>(ops: &mut O, l_m: &O::V, l_c: &O::V) -> O::V {
    ops.add(l_m, l_c)
}

/// Loss terms of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub cost: f64,
    pub total_nodes: usize,
}

/// Loss and transfer-network gradient of one sample.
pub fn piml_sample_grad(
    ctx: &PhysicsContext,
    model: &PimlModel,
    sample: SampleInput<'_>,
    truth: &[f64],
    mode: &NodeMode,
) -> Result<(LossParts, MlpGrads)> {
    let (mut parts, g) = piml_batch_grad(ctx, model, &[(sample, truth)], mode)?;
    Ok((parts.pop().expect("one sample"), g))
}

/// Per-sample loss terms and the gradient of their sum, on one tape.
///
/// Network adjoints accumulate in place, so this is cheaper than summing
/// per-sample gradients.
pub fn piml_batch_grad(
    ctx: &PhysicsContext,
    model: &PimlModel,
    samples: &[(SampleInput<'_>, &[f64])],
    mode: &NodeMode,
) -> Result<(Vec<LossParts>, MlpGrads)> {
    let mut tape = Tape::new();
    let vars = model.net.bind(&mut tape, true);
    let mut parts = Vec::with_capacity(samples.len());
    let mut total: Option<Var> = None;
    for (sample, truth) in samples {
        let out = piml_forward(&mut tape, ctx, model, &vars, *sample, mode)?;
        let lm = loss_mse(&mut tape, &out.dense, truth, &ctx.node_weights, ctx.dense_nodes())?;
        let lc = loss_cost(&mut tape, &out.n_values, &ctx.kinds, &ctx.loss);
        let l = total_loss(&mut tape, &lm, &lc);
        parts.push(LossParts {
            total: tape.scalar_value(l),
            mse: tape.scalar_value(lm),
            cost: tape.scalar_value(lc),
            total_nodes: total_node_count(&out.nodalization, &ctx.config),
        });
        total = Some(match total {
            None => l,
            Some(t) => tape.add(&t, &l),
        });
    }
    let Some(total) = total else {
        return Ok((parts, model.net.zero_grads()));
    };
    let mut g = tape.gradient(total)?;
    Ok((parts, MlpGrads::from_tape(&mut g, &vars, &model.net)))
}

/// Loss terms of one sample without gradients.
pub fn piml_sample_loss(
    ctx: &PhysicsContext,
    model: &PimlModel,
    sample: SampleInput<'_>,
    truth: &[f64],
    mode: &NodeMode,
) -> Result<LossParts> {
    let mut ev = Eval;
    let vars = model.net.bind(&mut ev, false);
    let out = piml_forward(&mut ev, ctx, model, &vars, sample, mode)?;
    let lm = loss_mse(&mut ev, &out.dense, truth, &ctx.node_weights, ctx.dense_nodes())?;
    let lc = loss_cost(&mut ev, &out.n_values, &ctx.kinds, &ctx.loss);
    let l = total_loss(&mut ev, &lm, &lc);
    Ok(LossParts {
        total: l[0],
        mse: lm[0],
        cost: lc[0],
        total_nodes: total_node_count(&out.nodalization, &ctx.config),
    })
}

/// Purely data-driven baseline: loads → dense temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    pub net: MlpParams,
    pub load_scale: f64,
}

impl AnnModel {
    pub fn init(dense_nodes: usize, load_scale: f64, seed: u64) -> Result<Self> {
        Self::with_spec(MlpSpec::ann(dense_nodes), load_scale, seed)
    }

    pub fn with_spec(spec: MlpSpec, load_scale: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            net: MlpParams::init(spec, seed)?,
            load_scale,
        })
    }

    pub fn forward<O: Ops>(&self, ops: &mut O, vars: &MlpVars<O::V>, loads: &[f64]) -> Result<O::V> {
        let x = ops.constant(loads.iter().map(|q| q / self.load_scale).collect());
        let y = forward(ops, &self.net, vars, &x)?;
        Ok(ops.scale(&y, ANN_TEMPERATURE_SCALE))
    }

    pub fn predict(&self, loads: &[f64]) -> Result<Vec<f64>> {
        let mut ev = Eval;
        let vars = self.net.bind(&mut ev, false);
        Ok(self.forward(&mut ev, &vars, loads)?.to_vec())
    }

    /// Per-sample weighted MSE and the gradient of their sum, on one tape.
    pub fn batch_grad(
        &self,
        ctx_weights: &Arc<Vec<f64>>,
        dense_nodes: usize,
        samples: &[(&[f64], &[f64])],
    ) -> Result<(Vec<f64>, MlpGrads)> {
        let mut tape = Tape::new();
        let vars = self.net.bind(&mut tape, true);
        let mut losses = Vec::with_capacity(samples.len());
        let mut total: Option<Var> = None;
        for (loads, truth) in samples {
            let y = self.forward(&mut tape, &vars, loads)?;
            let l = loss_mse(&mut tape, &y, truth, ctx_weights, dense_nodes)?;
            losses.push(tape.scalar_value(l));
            total = Some(match total {
                None => l,
                Some(t) => tape.add(&t, &l),
            });
        }
        let Some(total) = total else {
            return Ok((losses, self.net.zero_grads()));
        };
        let mut g = tape.gradient(total)?;
        Ok((losses, MlpGrads::from_tape(&mut g, &vars, &self.net)))
    }

    /// Weighted MSE and gradient for one sample.
    pub fn sample_grad(
        &self,
        ctx_weights: &Arc<Vec<f64>>,
        dense_nodes: usize,
        loads: &[f64],
        truth: &[f64],
    ) -> Result<(f64, MlpGrads)> {
        crate::nnet::loss_and_grad(&self.net, |t, vars| {
            let y = self.forward(t, vars, loads)?;
            loss_mse(t, &y, truth, ctx_weights, dense_nodes)
        })
    }
}

/// Mean absolute error per surface (dense nodes).
pub fn mae_per_face(pred: &[f64], truth: &[f64], offsets: &[usize]) -> Vec<f64> {
    offsets
        .windows(2)
        .map(|w| {
            let n = (w[1] - w[0]) as f64;
            (w[0]..w[1]).map(|i| libm::fabs(pred[i] - truth[i])).sum::<f64>() / n
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_examples() {
        assert_eq!(decode_n(0.0), 6);
        assert_eq!(decode_n(-1e6), 2);
        assert_eq!(decode_n(f64::NEG_INFINITY), 2);
        assert_eq!(decode_n(1e6), 10);
        assert_eq!(decode_n(0.5), 7);
        assert_eq!(decode_nodalization(&[0.0, 0.5]).per_surface(), &[6, 7]);
    }

    #[test]
    fn ste_passes_sigmoid_gradient() {
        let rec = crate::autodiff::record(&[0.5], |t, x| {
            let c = relaxed_counts(t, &x[0]);
            Ok(t.round_ste(&c))
        })
        .unwrap();
        assert_eq!(rec.value(), 7.0);
        let s = crate::autodiff::kernels::sigmoid(0.5);
        let g = rec.gradient().unwrap()[0];
        assert!((g - 8.0 * s * (1.0 - s)).abs() < 1e-15);
    }

    #[test]
    fn cost_anchors() {
        let p = LossParams::default();
        assert_eq!(cost_term(306.0, &p), 1.0);
        assert_eq!(cost_term(38.0, &p), 1e-4);
        assert_eq!(cost_term(574.0, &p), 1e4);
    }

    #[test]
    fn cost_on_backend_matches_plain() {
        let p = LossParams::default();
        let kinds = SpacecraftConfig::default_spacecraft().kinds();
        for n in [2usize, 6, 8] {
            let mut ev = Eval;
            let vals: Vec<Value> = kinds.iter().map(|_| ev.scalar(n as f64)).collect();
            let c = loss_cost(&mut ev, &vals, &kinds, &p);
            let total = kinds.iter().map(|k| k.node_count(n)).sum::<usize>() as f64;
            assert_eq!(c[0], cost_term(total, &p));
        }
    }

    #[test]
    fn mse_examples() {
        let p = LossParams::default();
        let kinds = SpacecraftConfig::default_spacecraft().kinds();
        let w = Arc::new(p.node_weights(&kinds));
        let truth = vec![300.0; 830];
        let mut ev = Eval;
        let same = ev.constant(truth.clone());
        assert_eq!(loss_mse(&mut ev, &same, &truth, &w, 830).unwrap()[0], 0.0);
        let mut one = truth.clone();
        one[0] += 1.0;
        let v = ev.constant(one);
        assert!((loss_mse(&mut ev, &v, &truth, &w, 830).unwrap()[0] - 1.0 / 830.0).abs() < 1e-18);
        let mut cyl = truth.clone();
        cyl[6 * 100] -= 1.0; // first protrusion node
        let v = ev.constant(cyl);
        assert!((loss_mse(&mut ev, &v, &truth, &w, 830).unwrap()[0] - 10.0 / 830.0).abs() < 1e-17);
    }

    #[test]
    fn loss_params_from_default_config() {
        let p = LossParams::for_config(&SpacecraftConfig::default_spacecraft());
        assert_eq!(p, LossParams::default());
    }

    #[test]
    fn mae_per_face_splits_by_offsets() {
        let m = mae_per_face(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &[0, 2, 3]);
        assert_eq!(m, vec![1.5, 3.0]);
    }
}
