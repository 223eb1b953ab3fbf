//! Evaluation reports: per-face MAE, nodalization histograms and per-orbit
//! error over time.

use std::path::Path;
use std::time::Instant;

use adaptherm_core::dataset::ThermalSample;
use adaptherm_core::mesh::total_node_count;
use adaptherm_core::piml::{PhysicsContext, mae_per_face};
use adaptherm_core::{MAX_N, MIN_N};
use rayon::prelude::*;

use crate::checkpoint::{Model, ModelKind};
use crate::report::{CsvOut, Meta, num, quantile};
use crate::{Error, Result};

/// Outcome of one model on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub orbit: usize,
    pub beta_deg: f64,
    pub time: f64,
    pub mae_per_face: Vec<f64>,
    /// |T − T̂| on every dense node.
    pub abs_errors: Vec<f64>,
    pub nodalization: Option<Vec<usize>>,
    pub total_nodes: Option<usize>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub kind: ModelKind,
    pub samples: Vec<SampleResult>,
}

impl ModelEval {
    /// Mean over samples of the per-face MAE.
    pub fn mae_per_face(&self) -> Vec<f64> {
        let m = self.samples.first().map_or(0, |s| s.mae_per_face.len());
        let k = self.samples.len().max(1) as f64;
        (0..m)
            .map(|j| self.samples.iter().map(|s| s.mae_per_face[j]).sum::<f64>() / k)
            .collect()
    }

    /// Mean absolute error over every dense node of every sample.
    pub fn overall_mae(&self) -> f64 {
        let (s, n) = self.samples.iter().fold((0.0, 0usize), |(s, n), r| {
            (s + r.abs_errors.iter().sum::<f64>(), n + r.abs_errors.len())
        });
        s / n.max(1) as f64
    }
}

/// Runs `model` on every sample. Samples are independent and run on the
/// rayon pool; results keep sample order.
pub fn evaluate(ctx: &PhysicsContext, model: &Model, samples: &[&ThermalSample]) -> Result<ModelEval> {
    if samples.is_empty() {
        return Err(Error::Usage("evaluation split is empty".into()));
    }
    let results = samples
        .par_iter()
        .map(|s| {
            let t = Instant::now();
            let p = model.predict(ctx, s.input())?;
            let runtime_s = t.elapsed().as_secs_f64();
            let abs_errors: Vec<f64> = p
                .temperatures
                .iter()
                .zip(&s.target)
                .map(|(a, b)| (a - b).abs())
                .collect();
            Ok(SampleResult {
                orbit: s.orbit,
                beta_deg: s.beta_deg,
                time: s.time,
                mae_per_face: mae_per_face(&p.temperatures, &s.target, &ctx.dense_offsets),
                abs_errors,
                total_nodes: p.nodalization.as_ref().map(|n| total_node_count(n, &ctx.config)),
                nodalization: p.nodalization.map(|n| n.per_surface().to_vec()),
                runtime_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelEval {
        kind: model.kind(),
        samples: results,
    })
}

pub fn write_mae_per_face(path: &Path, meta: &Meta, ctx: &PhysicsContext, evals: &[ModelEval]) -> Result<()> {
    let mut cols = vec!["model".to_string()];
    cols.extend(ctx.config.surfaces.iter().map(|s| s.name.clone()));
    cols.push("overall".into());
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(path, meta, &cols)?;
    for e in evals {
        let mut row = vec![e.kind.name().to_string()];
        row.extend(e.mae_per_face().into_iter().map(num));
        row.push(num(e.overall_mae()));
        out.row(&row)?;
    }
    out.finish()
}

/// Long format: one row per (model, surface, n) with its sample count.
pub fn write_nodalization_hist(path: &Path, meta: &Meta, ctx: &PhysicsContext, evals: &[ModelEval]) -> Result<()> {
    let mut out = CsvOut::create(path, meta, &["model", "surface", "n", "count"])?;
    for e in evals {
        if e.samples.iter().any(|s| s.nodalization.is_none()) {
            continue;
        }
        for (j, surface) in ctx.config.surfaces.iter().enumerate() {
            for n in MIN_N..=MAX_N {
                let count = e
                    .samples
                    .iter()
                    .filter(|s| s.nodalization.as_ref().unwrap()[j] == n)
                    .count();
                out.row([e.kind.name(), &surface.name, &n.to_string(), &count.to_string()])?;
            }
        }
    }
    out.finish()
}

/// Per model, orbit and time point: quantiles of |T − T̂| over the dense nodes.
pub fn write_orbit_error(path: &Path, meta: &Meta, evals: &[ModelEval]) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        meta,
        &["model", "orbit", "beta_deg", "time_s", "median_K", "q025_K", "q975_K"],
    )?;
    for e in evals {
        for s in &e.samples {
            out.row([
                e.kind.name().to_string(),
                s.orbit.to_string(),
                num(s.beta_deg),
                num(s.time),
                num(quantile(&s.abs_errors, 0.5)),
                num(quantile(&s.abs_errors, 0.025)),
                num(quantile(&s.abs_errors, 0.975)),
            ])?;
        }
    }
    out.finish()
}
