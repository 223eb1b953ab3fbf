//! Minibatch training of the hybrid models and the ANN baseline.

use std::time::Instant;

use adaptherm_core::dataset::{Dataset, ThermalSample};
use adaptherm_core::nnet::{Adam, MlpGrads, MlpParams};
use adaptherm_core::piml::{
    AnnModel, Architecture, NodeMode, PhysicsContext, PimlModel, piml_batch_grad, piml_sample_loss,
};
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::Result;
use crate::report::median;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Validation pass every this many epochs (and always after the last).
    pub validate_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 8,
            lr: 1e-4,
            seed: 0,
            validate_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// One row of the training log. Train rows average the per-sample values
/// seen during the epoch (before each update); validation rows are a full
/// pass with the end-of-epoch weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub mse: f64,
    pub cost: f64,
    /// None for the ANN.
    pub median_nodes: Option<f64>,
    pub wall_s: f64,
}

pub const LOG_COLUMNS: [&str; 7] = ["epoch", "split", "L", "L_m", "L_c", "median_nodes", "wall_s"];

impl EpochRow {
    pub fn cells(&self) -> [String; 7] {
        [
            self.epoch.to_string(),
            self.split.name().to_string(),
            self.loss.to_string(),
            self.mse.to_string(),
            self.cost.to_string(),
            self.median_nodes.map_or(String::new(), |m| m.to_string()),
            format!("{:.3}", self.wall_s),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stats {
    total: f64,
    mse: f64,
    cost: f64,
    nodes: Option<usize>,
}

fn summarize(epoch: usize, split: Split, s: &[Stats], start: Instant) -> EpochRow {
    let n = s.len().max(1) as f64;
    let nodes: Vec<f64> = s.iter().filter_map(|x| x.nodes).map(|x| x as f64).collect();
    EpochRow {
        epoch,
        split,
        loss: s.iter().map(|x| x.total).sum::<f64>() / n,
        mse: s.iter().map(|x| x.mse).sum::<f64>() / n,
        cost: s.iter().map(|x| x.cost).sum::<f64>() / n,
        median_nodes: (!nodes.is_empty()).then(|| median(&nodes)),
        wall_s: start.elapsed().as_secs_f64(),
    }
}

/// Shared loop over shuffled minibatches. Each batch is cut into one
/// contiguous part per worker; a part's gradient is the sum over its samples
/// on one tape, parts are added in batch order, averaged, and Adam takes one
/// step. Results are bit-identical for a fixed thread count.
fn fit<G, E>(
    net: &mut MlpParams,
    train: &[&ThermalSample],
    val: &[&ThermalSample],
    opts: &TrainOptions,
    grad: G,
    eval: E,
    on_row: &mut dyn FnMut(&EpochRow),
) -> Result<Vec<EpochRow>>
where
    G: Fn(&MlpParams, &[&ThermalSample]) -> adaptherm_core::Result<(Vec<Stats>, MlpGrads)> + Sync,
    E: Fn(&MlpParams, &ThermalSample) -> adaptherm_core::Result<Stats> + Sync,
{
    if opts.batch == 0 || train.is_empty() {
        return Err(crate::Error::Usage(
            "training needs a positive batch size and at least one sample".into(),
        ));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(opts.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let lanes = rayon::current_num_threads().max(1);
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(train.len());
        for batch in order.chunks(opts.batch) {
            let part = batch.len().div_ceil(lanes);
            let parts: Vec<&[usize]> = batch.chunks(part).collect();
            let results: Vec<_> = parts
                .par_iter()
                .map(|idx| {
                    let samples: Vec<&ThermalSample> = idx.iter().map(|&i| train[i]).collect();
                    grad(net, &samples)
                })
                .collect();
            let mut total: Option<MlpGrads> = None;
            for (idx, r) in parts.iter().zip(results) {
                let (stats, g) = r?;
                for (&i, s) in idx.iter().zip(&stats) {
                    if !s.total.is_finite() {
                        return Err(adaptherm_core::Error::NonFiniteLoss {
                            sample: i,
                            value: s.total,
                        }
                        .into());
                    }
                }
                if !g.is_finite() {
                    return Err(adaptherm_core::Error::NonFiniteLoss {
                        sample: idx[0],
                        value: f64::NAN,
                    }
                    .into());
                }
                seen.extend(stats);
                match total.as_mut() {
                    None => total = Some(g),
                    Some(t) => t.add_assign(&g),
                }
            }
            let mut total = total.expect("batch is not empty");
            total.scale(1.0 / batch.len() as f64);
            adam.step(net, &total);
        }
        let row = summarize(epoch, Split::Train, &seen, start);
        on_row(&row);
        log.push(row);
        let every = opts.validate_every.max(1);
        if !val.is_empty() && (epoch % every == 0 || epoch == opts.epochs) {
            let s = val
                .par_iter()
                .map(|s| eval(net, s))
                .collect::<adaptherm_core::Result<Vec<_>>>()?;
            let row = summarize(epoch, Split::Validation, &s, start);
            on_row(&row);
            log.push(row);
        }
    }
    Ok(log)
}

/// Trains PIML-A or PIML-AS from the default initialization.
pub fn train_piml(
    ctx: &PhysicsContext,
    arch: Architecture,
    train: &[&ThermalSample],
    val: &[&ThermalSample],
    opts: &TrainOptions,
    on_row: &mut dyn FnMut(&EpochRow),
) -> Result<(PimlModel, Vec<EpochRow>)> {
    let scale = Dataset::max_abs_load(train.iter().copied());
    let model = PimlModel::init(arch, ctx, scale, opts.seed)?;
    continue_piml(ctx, model, train, val, opts, on_row)
}

/// Trains an existing hybrid model further.
pub fn continue_piml(
    ctx: &PhysicsContext,
    mut model: PimlModel,
    train: &[&ThermalSample],
    val: &[&ThermalSample],
    opts: &TrainOptions,
    on_row: &mut dyn FnMut(&EpochRow),
) -> Result<(PimlModel, Vec<EpochRow>)> {
    let (arch, load_scale) = (model.arch, model.load_scale);
    let with = |net: &MlpParams| PimlModel {
        arch,
        net: net.clone(),
        load_scale,
    };
    let stats = |p: adaptherm_core::piml::LossParts| Stats {
        total: p.total,
        mse: p.mse,
        cost: p.cost,
        nodes: Some(p.total_nodes),
    };
    let log = fit(
        &mut model.net,
        train,
        val,
        opts,
        |net, batch| {
            let inputs: Vec<_> = batch.iter().map(|s| (s.input(), &s.target[..])).collect();
            let (p, g) = piml_batch_grad(ctx, &with(net), &inputs, &NodeMode::Ste)?;
            Ok((p.into_iter().map(stats).collect(), g))
        },
        |net, s| {
            Ok(stats(piml_sample_loss(
                ctx,
                &with(net),
                s.input(),
                &s.target,
                &NodeMode::Ste,
            )?))
        },
        on_row,
    )?;
    Ok((model, log))
}

/// Weighted squared error of a dense prediction, the `L_m` term.
pub fn weighted_mse(ctx: &PhysicsContext, pred: &[f64], truth: &[f64]) -> f64 {
    let s: f64 = pred
        .iter()
        .zip(truth)
        .zip(ctx.node_weights.iter())
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum();
    s / ctx.dense_nodes() as f64
}

/// Trains the data-only baseline on `L_m` alone.
pub fn train_ann(
    ctx: &PhysicsContext,
    train: &[&ThermalSample],
    val: &[&ThermalSample],
    opts: &TrainOptions,
    on_row: &mut dyn FnMut(&EpochRow),
) -> Result<(AnnModel, Vec<EpochRow>)> {
    let scale = Dataset::max_abs_load(train.iter().copied());
    let mut model = AnnModel::init(ctx.dense_nodes(), scale, opts.seed)?;
    let with = |net: &MlpParams| AnnModel {
        net: net.clone(),
        load_scale: scale,
    };
    let stats = |l: f64| Stats {
        total: l,
        mse: l,
        cost: 0.0,
        nodes: None,
    };
    let log = fit(
        &mut model.net,
        train,
        val,
        opts,
        |net, batch| {
            let inputs: Vec<_> = batch.iter().map(|s| (&s.loads[..], &s.target[..])).collect();
            let (l, g) = with(net).batch_grad(&ctx.node_weights, ctx.dense_nodes(), &inputs)?;
            Ok((l.into_iter().map(stats).collect(), g))
        },
        |net, s| Ok(stats(weighted_mse(ctx, &with(net).predict(&s.loads)?, &s.target))),
        on_row,
    )?;
    Ok((model, log))
}
