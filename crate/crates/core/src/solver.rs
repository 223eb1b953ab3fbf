//! Explicit finite-difference conduction/radiation time stepping.
//!
//! Each node carries a lumped capacity `C_i = ρ c_p t A_i`. Per step
//!
//! ```text
//! T_i ← T_i + dt/C_i · [ Σ_links g (T_m − T_i) + Q_i
//!                        + σ ε_i A_i (Σ_j F_ij T_j⁴ − (Σ_j F_ij + F_space,i) T_i⁴ + F_space,i T_sink⁴) ]
//! ```
//!
//! Conduction stays inside a face (5-point stencil on plates, 3-point along
//! cylinder axes). The per-node coefficients are computed from the node count
//! of each face by [`node_parameters`], which runs on any [`Ops`] backend so
//! the count can carry a gradient.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::autodiff::{EdgeList, Eval, Ops, StepFn, Value};
use crate::mesh::{Nodalization, Surface, SurfaceKind, node_offsets};
use crate::sparse::CsrMatrix;
use crate::{Error, Result, STEFAN_BOLTZMANN};

/// Reference temperature for the explicit stability estimate, K.
pub const STABILITY_T_REF: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverSettings {
    /// s
    pub dt: f64,
    /// s
    pub duration: f64,
    pub stefan_boltzmann: f64,
    /// K
    pub space_sink_temperature: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 0.1,
            duration: 50.0,
            stefan_boltzmann: STEFAN_BOLTZMANN,
            space_sink_temperature: 0.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidSettings("dt must be positive"));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidSettings("duration must be non-negative"));
        }
        if self.space_sink_temperature < 0.0 {
            return Err(Error::InvalidSettings("sink temperature must be non-negative"));
        }
        let r = self.duration / self.dt;
        if libm::fabs(r - libm::round(r)) > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidSettings("duration must be a whole number of steps"));
        }
        Ok(())
    }

    /// Number of steps, `duration / dt`.
    pub fn steps(&self) -> Result<usize> {
        self.validate()?;
        Ok(libm::round(self.duration / self.dt) as usize)
    }
}

/// Temperatures of every node at the active nodalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub temperatures: Vec<f64>,
    /// s
    pub time: f64,
}

impl ThermalState {
    pub fn new(temperatures: Vec<f64>) -> Self {
        Self {
            temperatures,
            time: 0.0,
        }
    }
}

/// Per-face inputs to the node coefficient formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceProps {
    pub kind: SurfaceKind,
    /// Plate width, or circumference for cylinders.
    pub width: f64,
    /// Plate height, or axial length for cylinders.
    pub height: f64,
    pub radius: f64,
    /// ρ c_p t, J/(m²·K)
    pub areal_capacity: f64,
    pub emissivity: f64,
    /// k t, W/K
    pub sheet_conductance: f64,
}

impl FaceProps {
    pub fn from_surface(s: &Surface) -> Self {
        let m = &s.material;
        Self {
            kind: s.kind,
            width: s.width,
            height: s.height,
            radius: m.radius,
            areal_capacity: m.areal_capacity(),
            emissivity: m.ir_emissivity,
            sheet_conductance: m.conductivity * m.thickness,
        }
    }

    /// Radiating area of the whole face.
    pub fn area(&self) -> f64 {
        match self.kind {
            SurfaceKind::Rectangular2D => self.width * self.height,
            SurfaceKind::Cylindrical1D => 2.0 * PI * self.radius * self.height,
        }
    }
}

/// Node and link layout for one nodalization.
#[derive(Debug, Clone)]
pub struct Topology {
    pub kinds: Vec<SurfaceKind>,
    pub ns: Vec<usize>,
    pub offsets: Vec<usize>,
    pub edges: Arc<EdgeList>,
    /// Face of every node.
    pub node_face: Arc<Vec<usize>>,
    /// `2·face` for links along the width (or axis), `2·face + 1` along the height.
    pub edge_class: Arc<Vec<usize>>,
}

impl Topology {
    pub fn new(kinds: &[SurfaceKind], ns: &[usize]) -> Self {
        assert_eq!(kinds.len(), ns.len(), "one node count per face");
        let offsets = node_offsets(kinds, ns);
        let mut pairs = Vec::new();
        let mut class = Vec::new();
        let mut node_face = Vec::new();
        for (j, (&kind, &n)) in kinds.iter().zip(ns).enumerate() {
            let o = offsets[j];
            node_face.extend(core::iter::repeat_n(j, kind.node_count(n)));
            match kind {
                SurfaceKind::Rectangular2D => {
                    for row in 0..n {
                        for col in 0..n {
                            let i = o + row * n + col;
                            if col + 1 < n {
                                pairs.push((i, i + 1));
                                class.push(2 * j);
                            }
                            if row + 1 < n {
                                pairs.push((i, i + n));
                                class.push(2 * j + 1);
                            }
                        }
                    }
                }
                SurfaceKind::Cylindrical1D => {
                    for k in 0..n.saturating_sub(1) {
                        pairs.push((o + k, o + k + 1));
                        class.push(2 * j);
                    }
                }
            }
        }
        let nodes = *offsets.last().unwrap_or(&0);
        Self {
            kinds: kinds.to_vec(),
            ns: ns.to_vec(),
            offsets,
            edges: Arc::new(EdgeList { nodes, pairs }),
            node_face: Arc::new(node_face),
            edge_class: Arc::new(class),
        }
    }

    pub fn node_count(&self) -> usize {
        self.edges.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.pairs.len()
    }
}

/// Per-node and per-link coefficients of the update.
#[derive(Debug, Clone)]
pub struct NodeParams<V> {
    /// `dt / C_i`
    pub dt_over_c: V,
    /// `σ ε_i A_i`
    pub rad_coef: V,
    /// Link conductances, W/K.
    pub conductance: V,
}

/// Node coefficients from one node-count value per face.
///
/// `n` holds length-1 values; on a tape they may carry a gradient, which then
/// flows into the element areas (plates: `A/n²`, cylinders: `A/n`) and the
/// axial conductance of cylinders (`k t 2πr n / L`).
pub fn node_parameters<O: Ops>(
    ops: &mut O,
    faces: &[FaceProps],
    topo: &Topology,
    n: &[O::V],
    settings: &SolverSettings,
) -> NodeParams<O::V> {
    assert_eq!(faces.len(), n.len(), "one node count per face");
    let dt = ops.scalar(settings.dt);
    let mut dtc = Vec::with_capacity(faces.len());
    let mut rad = Vec::with_capacity(faces.len());
    let mut cond = Vec::with_capacity(2 * faces.len());
    for (f, nj) in faces.iter().zip(n) {
        let total = ops.scalar(f.area());
        let area = match f.kind {
            SurfaceKind::Rectangular2D => {
                let n2 = ops.mul(nj, nj);
                ops.div(&total, &n2)
            }
            SurfaceKind::Cylindrical1D => ops.div(&total, nj),
        };
        let cap = ops.scale(&area, f.areal_capacity);
        dtc.push(ops.div(&dt, &cap));
        rad.push(ops.scale(&area, settings.stefan_boltzmann * f.emissivity));
        match f.kind {
            SurfaceKind::Rectangular2D => {
                cond.push(ops.scalar(f.sheet_conductance * f.height / f.width));
                cond.push(ops.scalar(f.sheet_conductance * f.width / f.height));
            }
            SurfaceKind::Cylindrical1D => {
                let per_n = f.sheet_conductance * 2.0 * PI * f.radius / f.height;
                cond.push(ops.scale(nj, per_n));
                cond.push(ops.scalar(0.0));
            }
        }
    }
    let dtc = ops.concat(&dtc);
    let rad = ops.concat(&rad);
    let cond = ops.concat(&cond);
    NodeParams {
        dt_over_c: ops.gather(&dtc, &topo.node_face),
        rad_coef: ops.gather(&rad, &topo.node_face),
        conductance: ops.gather(&cond, &topo.edge_class),
    }
}

/// Packs coefficients and loads into the single parameter vector of [`ThermalStep`].
pub fn pack_params<O: Ops>(ops: &mut O, p: &NodeParams<O::V>, loads: &O::V) -> O::V {
    ops.concat(&[
        p.dt_over_c.clone(),
        p.rad_coef.clone(),
        p.conductance.clone(),
        loads.clone(),
    ])
}

/// One explicit step; parameters are `[dt/C (N), σεA (N), g (E), Q (N)]`.
#[derive(Debug, Clone)]
pub struct ThermalStep {
    pub nodes: usize,
    pub edges: Arc<EdgeList>,
    pub view_factors: Arc<CsrMatrix>,
    /// `Σ_j F_ij + F_space,i`
    pub emission: Arc<Vec<f64>>,
    /// `F_space,i · T_sink⁴`
    pub sink: Arc<Vec<f64>>,
}

impl ThermalStep {
    /// `space` holds `F_space` per node.
    pub fn new(
        edges: Arc<EdgeList>,
        view_factors: Arc<CsrMatrix>,
        space: &[f64],
        sink_temperature: f64,
    ) -> Result<Self> {
        let nodes = edges.nodes;
        for (what, got) in [
            ("view factor rows", view_factors.rows()),
            ("view factor columns", view_factors.cols()),
            ("space factors", space.len()),
        ] {
            if got != nodes {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected: nodes,
                    got,
                });
            }
        }
        let t4 = crate::autodiff::kernels::pow4(sink_temperature);
        let emission = view_factors.row_sums().iter().zip(space).map(|(r, s)| r + s).collect();
        let sink = space.iter().map(|s| s * t4).collect();
        Ok(Self {
            nodes,
            edges,
            view_factors,
            emission: Arc::new(emission),
            sink: Arc::new(sink),
        })
    }

    pub fn param_len(&self) -> usize {
        3 * self.nodes + self.edges.len()
    }
}

impl StepFn for ThermalStep {
    fn state_len(&self) -> usize {
        self.nodes
    }

    fn step<O: Ops>(&self, ops: &mut O, t: &O::V, p: &O::V) -> O::V {
        let (n, e) = (self.nodes, self.edges.len());
        let dtc = ops.slice(p, 0, n);
        let rad = ops.slice(p, n, n);
        let g = ops.slice(p, 2 * n, e);
        let q = ops.slice(p, 2 * n + e, n);
        let t4 = ops.pow4(t);
        let incoming = ops.spmv(&self.view_factors, &t4);
        let emission = ops.constant_shared(&self.emission);
        let outgoing = ops.mul(&emission, &t4);
        let net = ops.sub(&incoming, &outgoing);
        let sink = ops.constant_shared(&self.sink);
        let net = ops.add(&net, &sink);
        let radiative = ops.mul(&rad, &net);
        let conductive = ops.edge_diffusion(&self.edges, t, &g);
        let flux = ops.add(&conductive, &q);
        let flux = ops.add(&flux, &radiative);
        let dt = ops.mul(&dtc, &flux);
        ops.add(t, &dt)
    }

    fn check(&self, step: usize, state: &[f64]) -> Result<()> {
        check_state(step, state)
    }
}

/// Rejects non-finite or non-positive temperatures.
pub fn check_state(step: usize, state: &[f64]) -> Result<()> {
    match state.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
        Some(node) => Err(Error::Instability {
            step,
            node,
            value: state[node],
        }),
        None => Ok(()),
    }
}

/// Result of [`ThermalModel::simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub final_state: ThermalState,
    /// States after every step, when requested (the initial state first).
    pub trajectory: Option<Vec<ThermalState>>,
}

/// A fixed-nodalization model ready to run.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    pub topology: Topology,
    pub faces: Vec<FaceProps>,
    pub step_fn: Arc<ThermalStep>,
    pub settings: SolverSettings,
    /// `[dt/C, σεA, g]` without the loads.
    coefficients: Vec<f64>,
}

impl ThermalModel {
    /// `view_factors` and `space` must be laid out for `nodalization`.
    pub fn new(
        surfaces: &[Surface],
        nodalization: &Nodalization,
        view_factors: Arc<CsrMatrix>,
        space: &[f64],
        settings: SolverSettings,
    ) -> Result<Self> {
        let faces: Vec<FaceProps> = surfaces.iter().map(FaceProps::from_surface).collect();
        Self::from_faces(faces, nodalization.per_surface(), view_factors, space, settings)
    }

    pub fn from_faces(
        faces: Vec<FaceProps>,
        ns: &[usize],
        view_factors: Arc<CsrMatrix>,
        space: &[f64],
        settings: SolverSettings,
    ) -> Result<Self> {
        settings.validate()?;
        if faces.len() != ns.len() {
            return Err(Error::DimensionMismatch {
                context: "nodalization",
                expected: faces.len(),
                got: ns.len(),
            });
        }
        let kinds: Vec<SurfaceKind> = faces.iter().map(|f| f.kind).collect();
        let topology = Topology::new(&kinds, ns);
        let step_fn = Arc::new(ThermalStep::new(
            topology.edges.clone(),
            view_factors,
            space,
            settings.space_sink_temperature,
        )?);
        let mut ev = Eval;
        let n: Vec<Value> = ns.iter().map(|&n| ev.scalar(n as f64)).collect();
        let p = node_parameters(&mut ev, &faces, &topology, &n, &settings);
        let coefficients = [&p.dt_over_c[..], &p.rad_coef[..], &p.conductance[..]].concat();
        Ok(Self {
            topology,
            faces,
            step_fn,
            settings,
            coefficients,
        })
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn dt_over_c(&self) -> &[f64] {
        &self.coefficients[..self.node_count()]
    }

    pub fn rad_coef(&self) -> &[f64] {
        let n = self.node_count();
        &self.coefficients[n..2 * n]
    }

    pub fn conductances(&self) -> &[f64] {
        &self.coefficients[2 * self.node_count()..]
    }

    /// Lumped capacity per node, J/K.
    pub fn capacities(&self) -> Vec<f64> {
        self.dt_over_c().iter().map(|d| self.settings.dt / d).collect()
    }

    fn params(&self, loads: &[f64]) -> Result<Value> {
        if loads.len() != self.node_count() {
            return Err(Error::DimensionMismatch {
                context: "loads",
                expected: self.node_count(),
                got: loads.len(),
            });
        }
        let mut p = self.coefficients.clone();
        p.extend_from_slice(loads);
        Ok(Value::Owned(p))
    }

    fn check_state_len(&self, state: &ThermalState) -> Result<()> {
        if state.temperatures.len() != self.node_count() {
            return Err(Error::DimensionMismatch {
                context: "state",
                expected: self.node_count(),
                got: state.temperatures.len(),
            });
        }
        Ok(())
    }

    pub fn step(&self, state: &ThermalState, loads: &[f64]) -> Result<ThermalState> {
        self.check_state_len(state)?;
        let p = self.params(loads)?;
        let t = self
            .step_fn
            .step(&mut Eval, &Value::Owned(state.temperatures.clone()), &p);
        check_state(1, &t)?;
        Ok(ThermalState {
            temperatures: t.to_vec(),
            time: state.time + self.settings.dt,
        })
    }

    /// Runs `duration / dt` steps with constant loads.
    pub fn simulate(&self, initial: &ThermalState, loads: &[f64], record: bool) -> Result<Simulation> {
        self.check_state_len(initial)?;
        let steps = self.settings.steps()?;
        let p = self.params(loads)?;
        let mut ev = Eval;
        let mut t = Value::Owned(initial.temperatures.clone());
        let mut trajectory = record.then(|| vec![initial.clone()]);
        for k in 0..steps {
            t = self.step_fn.step(&mut ev, &t, &p);
            check_state(k + 1, &t)?;
            if let Some(tr) = trajectory.as_mut() {
                tr.push(ThermalState {
                    temperatures: t.to_vec(),
                    time: initial.time + (k + 1) as f64 * self.settings.dt,
                });
            }
        }
        Ok(Simulation {
            final_state: ThermalState {
                temperatures: t.to_vec(),
                time: initial.time + steps as f64 * self.settings.dt,
            },
            trajectory,
        })
    }

    /// Conservative explicit stability limit at [`STABILITY_T_REF`].
    pub fn stability_bound(&self) -> StabilityBound {
        let n = self.node_count();
        let mut conduction = vec![0.0; n];
        for (&(a, b), g) in self.topology.edges.pairs.iter().zip(self.conductances()) {
            conduction[a] += g;
            conduction[b] += g;
        }
        let t3 = STABILITY_T_REF * STABILITY_T_REF * STABILITY_T_REF;
        let dt_max = self
            .capacities()
            .iter()
            .zip(&conduction)
            .zip(self.rad_coef())
            .map(|((c, g), r)| c / (g + 4.0 * r * t3))
            .fold(f64::INFINITY, f64::min);
        StabilityBound {
            dt_max,
            exceeded: self.settings.dt > dt_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBound {
    /// s
    pub dt_max: f64,
    /// `true` when the configured step is above the bound.
    pub exceeded: bool,
}
