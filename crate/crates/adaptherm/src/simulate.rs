//! Recorded rollouts for inspection.

use std::path::Path;

use adaptherm_core::autodiff::{Eval, Ops, StepFn};
use adaptherm_core::piml::PhysicsContext;
use adaptherm_core::solver::{check_state, node_parameters, pack_params};

use crate::Result;
use crate::report::{CsvOut, Meta, num};

/// Runs the physics at nodalization `ns` and returns `(time, dense
/// temperatures)` at t = 0 and after every `every` steps (and at the end).
/// States are upsampled to the dense mesh before recording.
pub fn trajectory(
    ctx: &PhysicsContext,
    ns: &[usize],
    loads: &[f64],
    initial: &[f64],
    every: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let s = ctx.structure_shared(ns)?;
    let mut ev = Eval;
    let n: Vec<_> = ns.iter().map(|&k| ev.scalar(k as f64)).collect();
    let params = node_parameters(&mut ev, &ctx.faces, &s.topology, &n, &ctx.settings);
    let qd = ev.constant(loads.to_vec());
    let q = ev.spmv(&s.load_down, &qd);
    let td = ev.constant(initial.to_vec());
    let mut t = ev.spmv(&s.temp_down, &td);
    let p = pack_params(&mut ev, &params, &q);
    let mut out = vec![(0.0, ev.spmv(&s.temp_up, &t).to_vec())];
    let every = every.max(1);
    for k in 1..=ctx.steps {
        t = s.step.step(&mut ev, &t, &p);
        check_state(k, &t)?;
        if k % every == 0 || k == ctx.steps {
            out.push((k as f64 * ctx.settings.dt, ev.spmv(&s.temp_up, &t).to_vec()));
        }
    }
    Ok(out)
}

/// Long-format CSV: one row per recorded time and dense node.
pub fn write_trajectory(path: &Path, meta: &Meta, ctx: &PhysicsContext, traj: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut out = CsvOut::create(path, meta, &["time_s", "surface", "node_index", "T_K"])?;
    for (time, temps) in traj {
        for (j, surface) in ctx.config.surfaces.iter().enumerate() {
            for i in ctx.dense_offsets[j]..ctx.dense_offsets[j + 1] {
                out.row([
                    num(*time),
                    surface.name.clone(),
                    (i - ctx.dense_offsets[j]).to_string(),
                    num(temps[i]),
                ])?;
            }
        }
    }
    out.finish()
}
