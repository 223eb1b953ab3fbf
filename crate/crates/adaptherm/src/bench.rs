//! Per-sample runtime table.

use std::path::Path;
use std::time::Instant;

use adaptherm_core::dataset::ThermalSample;
use adaptherm_core::mesh::total_node_count;
use adaptherm_core::piml::PhysicsContext;

use crate::Result;
use crate::checkpoint::{Model, ModelKind};
use crate::report::{CsvOut, Meta, median, num};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: ModelKind,
    pub median_runtime_s: f64,
    /// None for the ANN, which has no mesh.
    pub median_total_nodes: Option<f64>,
    pub runs: usize,
}

/// Times `reps` sequential passes over `samples`. One untimed pass first
/// fills the structure cache, so every model is timed warm.
pub fn bench(ctx: &PhysicsContext, model: &Model, samples: &[&ThermalSample], reps: usize) -> Result<BenchRow> {
    for s in samples {
        model.predict(ctx, s.input())?;
    }
    let mut times = Vec::with_capacity(reps * samples.len());
    let mut nodes = Vec::new();
    for _ in 0..reps {
        for s in samples {
            let t = Instant::now();
            let p = model.predict(ctx, s.input())?;
            times.push(t.elapsed().as_secs_f64());
            if let Some(n) = &p.nodalization {
                nodes.push(total_node_count(n, &ctx.config) as f64);
            }
        }
    }
    Ok(BenchRow {
        kind: model.kind(),
        median_runtime_s: median(&times),
        median_total_nodes: (!nodes.is_empty()).then(|| median(&nodes)),
        runs: times.len(),
    })
}

pub fn write_bench(path: &Path, meta: &Meta, rows: &[BenchRow]) -> Result<()> {
    let mut out = CsvOut::create(path, meta, &["model", "median_runtime_s", "median_total_nodes"])?;
    for r in rows {
        out.row([
            r.kind.name().to_string(),
            num(r.median_runtime_s),
            r.median_total_nodes.map_or(String::new(), num),
        ])?;
    }
    out.finish()
}
