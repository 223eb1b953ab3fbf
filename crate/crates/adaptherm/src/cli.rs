//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaptherm_core::dataset::{INITIAL_TEMPERATURE, ThermalSample, default_orbits};
use adaptherm_core::mesh::{Nodalization, SpacecraftConfig, total_node_count};
use adaptherm_core::orbit::{LoadModel, OrbitSpec};
use adaptherm_core::piml::{Architecture, PhysicsContext};
use adaptherm_core::radiation::ViewFactorMatrix;
use adaptherm_core::solver::SolverSettings;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{self, Model, ModelKind};
use crate::config::{config_hash, geometry_hash, hex, load_or_default};
use crate::datafile::{self, PhysicsKey};
use crate::report::{CsvOut, Meta, create_dir, write_json};
use crate::structures::with_cache;
use crate::train::{EpochRow, LOG_COLUMNS, TrainOptions, train_ann, train_piml};
use crate::{Error, Result, bench, eval, simulate, vfcache};

#[derive(Debug, Parser)]
#[command(
    name = "adaptherm",
    version,
    about = "Spacecraft thermal models with adaptive nodalization"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace the dense view-factor matrix and write the cache file.
    Viewfactors(VfArgs),
    /// Generate or inspect training data.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train a model (or record the configuration of a fixed one).
    Train(TrainArgs),
    /// Per-face error, nodalization histograms and error over time.
    Eval(EvalArgs),
    /// Median per-sample runtime and node counts.
    Bench(BenchArgs),
    /// Record one rollout at a fixed nodalization.
    Simulate(SimulateArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Generate(GenerateArgs),
    Inspect {
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// Spacecraft JSON; the built-in spacecraft when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// View-factor cache, read when it matches and written otherwise.
    #[arg(long)]
    pub viewfactors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VfArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub rays: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long, default_value_t = 1000)]
    pub rays: usize,
    /// Seed of the view-factor tracer.
    #[arg(long, default_value_t = 1)]
    pub vf_seed: u64,
    /// Seed of the orbit phases.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub orbits: usize,
    #[arg(long, default_value_t = 24)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 50.0)]
    pub duration: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub model: ModelKind,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    /// Checkpoint files (repeat the flag).
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Validation)]
    pub split: SplitArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Validation)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long, default_value_t = 1000)]
    pub rays: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Time within the orbit, s.
    #[arg(long, default_value_t = 0.0)]
    pub time: f64,
    /// Nodes per dimension on every surface.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 50.0)]
    pub duration: f64,
    /// Recording interval, s.
    #[arg(long, default_value_t = 1.0)]
    pub every: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 success, 1 usage or input error, 2 numeric failure.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(t) = cli.threads
        && let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global()
    {
        eprintln!("error: --threads: {e}");
        return 1;
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Viewfactors(a) => cmd_viewfactors(&a),
        Command::Dataset {
            command: DatasetCommand::Generate(a),
        } => cmd_generate(&a),
        Command::Dataset {
            command: DatasetCommand::Inspect { dataset },
        } => cmd_inspect(&dataset),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn sibling_json(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => create_dir(d),
        _ => Ok(()),
    }
}

fn view_factors(config: &SpacecraftConfig, cache: Option<&Path>, rays: usize, seed: u64) -> Result<ViewFactorMatrix> {
    match cache {
        Some(p) => vfcache::load_or_compute(p, config, rays, seed),
        None => vfcache::compute_parallel(config, rays, seed),
    }
}

/// Dataset plus the physics context that produced its targets.
pub struct Loaded {
    pub config: SpacecraftConfig,
    pub ctx: PhysicsContext,
    pub data: adaptherm_core::dataset::Dataset,
    pub key: PhysicsKey,
}

pub fn load_with_physics(dataset: &Path, physics: &PhysicsArgs) -> Result<Loaded> {
    let (data, key) = datafile::load(dataset)?;
    let config = load_or_default(physics.config.as_deref())?;
    if geometry_hash(&config) != key.geometry {
        return Err(Error::Usage(format!(
            "{} was generated for a different spacecraft geometry; pass the matching --config",
            dataset.display()
        )));
    }
    let vf = view_factors(&config, physics.viewfactors.as_deref(), key.rays as usize, key.vf_seed)?;
    let (ctx, _) = with_cache(PhysicsContext::new(config.clone(), &vf, key.settings())?);
    Ok(Loaded { config, ctx, data, key })
}

fn select(data: &adaptherm_core::dataset::Dataset, split: SplitArg) -> Result<Vec<&ThermalSample>> {
    Ok(match split {
        SplitArg::All => data.samples.iter().collect(),
        SplitArg::Train => data.split()?.0,
        SplitArg::Validation => data.split()?.1,
    })
}

#[derive(Serialize)]
struct VfRun {
    command: &'static str,
    rays: usize,
    nodes: usize,
    wall_s: f64,
    max_row_sum: f64,
    node_pairs_over_3sigma: usize,
    node_pairs: usize,
    max_face_pair_z: f64,
    geometry_hash: String,
}

fn cmd_viewfactors(a: &VfArgs) -> Result<()> {
    let config = load_or_default(a.config.as_deref())?;
    let start = Instant::now();
    let vf = vfcache::compute_parallel(&config, a.rays, a.seed)?;
    parent_dir(&a.out)?;
    vfcache::write(&a.out, &vfcache::CacheKey::new(&config, a.rays, a.seed), &vf)?;
    let rec = vf.reciprocity();
    let offsets = adaptherm_core::mesh::node_offsets(&config.kinds(), &vec![adaptherm_core::DENSE_N; config.len()]);
    let face_z = vf
        .surface_reciprocity(&offsets)
        .iter()
        .map(|p| p.z_score())
        .fold(0.0, f64::max);
    let max_row = vf.row_sums().into_iter().fold(0.0, f64::max);
    println!(
        "view factors: {} nodes, {} rays/node, {:.1} s",
        vf.len(),
        a.rays,
        start.elapsed().as_secs_f64()
    );
    println!(
        "reciprocity: {} of {} node pairs beyond 3σ (max rel {:.3e}); max face-pair z {:.2}; max row sum {:.6}",
        rec.pairs_over_3sigma, rec.pairs, rec.max_rel_violation, face_z, max_row
    );
    let run = VfRun {
        command: "viewfactors",
        rays: a.rays,
        nodes: vf.len(),
        wall_s: start.elapsed().as_secs_f64(),
        max_row_sum: max_row,
        node_pairs_over_3sigma: rec.pairs_over_3sigma,
        node_pairs: rec.pairs,
        max_face_pair_z: face_z,
        geometry_hash: hex(&geometry_hash(&config)),
    };
    write_json(&sibling_json(&a.out), &Meta::new(config_hash(&config), a.seed), &run)
}

#[derive(Serialize)]
struct GenerateRun {
    command: &'static str,
    orbits: usize,
    samples_per_orbit: usize,
    samples: usize,
    rays: usize,
    vf_seed: u64,
    dt_s: f64,
    duration_s: f64,
    wall_s: f64,
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let config = load_or_default(a.physics.config.as_deref())?;
    let start = Instant::now();
    let vf = view_factors(&config, a.physics.viewfactors.as_deref(), a.rays, a.vf_seed)?;
    let settings = SolverSettings {
        dt: a.dt,
        duration: a.duration,
        ..SolverSettings::default()
    };
    let ctx = PhysicsContext::new(config.clone(), &vf, settings)?;
    let lm = LoadModel::new(&config)?;
    let orbits = default_orbits(a.orbits, a.samples, a.seed);
    for o in &orbits {
        o.validate()?;
    }
    let data = datafile::generate_parallel(&ctx, &lm, &orbits, a.seed)?;
    let key = PhysicsKey {
        rays: a.rays as u64,
        vf_seed: a.vf_seed,
        geometry: geometry_hash(&config),
        dt: settings.dt,
        duration: settings.duration,
        sink_temperature: settings.space_sink_temperature,
    };
    parent_dir(&a.out)?;
    datafile::save(&data, &key, &a.out)?;
    println!(
        "dataset: {} orbits × {} samples → {} ({:.1} s)",
        a.orbits,
        a.samples,
        a.out.display(),
        start.elapsed().as_secs_f64()
    );
    let run = GenerateRun {
        command: "dataset generate",
        orbits: a.orbits,
        samples_per_orbit: a.samples,
        samples: data.samples.len(),
        rays: a.rays,
        vf_seed: a.vf_seed,
        dt_s: a.dt,
        duration_s: a.duration,
        wall_s: start.elapsed().as_secs_f64(),
    };
    write_json(&sibling_json(&a.out), &Meta::new(config_hash(&config), a.seed), &run)
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let (d, key) = datafile::load(path)?;
    let n = d.samples.first().map_or(0, |s| s.loads.len());
    println!("{}", path.display());
    println!(
        "  seed {}, {} orbits, {} samples, {} dense nodes",
        d.seed,
        d.orbits.len(),
        d.samples.len(),
        n
    );
    println!(
        "  view factors: {} rays/node, seed {}, geometry {}",
        key.rays,
        key.vf_seed,
        &hex(&key.geometry)[..16]
    );
    println!(
        "  solver: dt {} s, duration {} s, sink {} K",
        key.dt, key.duration, key.sink_temperature
    );
    println!("  orbit  beta_deg  samples  eclipse  mean_load_W  min_T_K  max_T_K");
    for s in datafile::orbit_stats(&d) {
        println!(
            "  {:>5}  {:>8.2}  {:>7}  {:>7}  {:>11.3}  {:>7.2}  {:>7.2}",
            s.orbit, s.beta_deg, s.samples, s.eclipse_samples, s.mean_load_total, s.min_target, s.max_target
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainRun {
    command: &'static str,
    model: ModelKind,
    checkpoint: String,
    epochs: usize,
    batch: usize,
    lr: f64,
    train_samples: usize,
    validation_samples: usize,
    final_train_loss: Option<f64>,
    final_validation_loss: Option<f64>,
    wall_s: f64,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let l = load_with_physics(&a.dataset, &a.physics)?;
    let (train, val) = l.data.split()?;
    let hash = config_hash(&l.config);
    let meta = Meta::new(hash.clone(), a.seed);
    create_dir(&a.out)?;
    let opts = TrainOptions {
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        seed: a.seed,
        validate_every: 1,
    };
    let start = Instant::now();
    let name = a.model.name();
    let mut log_rows: Vec<EpochRow> = Vec::new();
    let mut progress = |r: &EpochRow| {
        println!(
            "epoch {:>4} {:<10} L {:.6e}  L_m {:.6e}  L_c {:.6e}  nodes {}  {:.1} s",
            r.epoch,
            r.split.name(),
            r.loss,
            r.mse,
            r.cost,
            r.median_nodes.map_or("-".into(), |m| m.to_string()),
            r.wall_s
        );
    };
    let (model, path) = match a.model {
        ModelKind::PimlA | ModelKind::PimlAs => {
            let arch = if a.model == ModelKind::PimlA {
                Architecture::PimlA
            } else {
                Architecture::PimlAs
            };
            let (m, log) = train_piml(&l.ctx, arch, &train, &val, &opts, &mut progress)?;
            log_rows = log;
            (Model::Piml(m), a.out.join(format!("{name}.ckpt")))
        }
        ModelKind::Ann => {
            let (m, log) = train_ann(&l.ctx, &train, &val, &opts, &mut progress)?;
            log_rows = log;
            (Model::Ann(m), a.out.join(format!("{name}.ckpt")))
        }
        ModelKind::Lf | ModelKind::Hf => {
            let m = Model::fixed(a.model).expect("fixed model");
            println!("{name}: fixed nodalization, nothing to train");
            (m, a.out.join(format!("{name}.json")))
        }
    };
    checkpoint::save(&model, &path, &l.ctx, &hash)?;
    let mut log = CsvOut::create(&a.out.join(format!("{name}_log.csv")), &meta, &LOG_COLUMNS)?;
    for r in &log_rows {
        log.row(r.cells())?;
    }
    log.finish()?;
    let last = |s: crate::train::Split| log_rows.iter().rev().find(|r| r.split == s).map(|r| r.loss);
    let run = TrainRun {
        command: "train",
        model: a.model,
        checkpoint: path.display().to_string(),
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        train_samples: train.len(),
        validation_samples: val.len(),
        final_train_loss: last(crate::train::Split::Train),
        final_validation_loss: last(crate::train::Split::Validation),
        wall_s: start.elapsed().as_secs_f64(),
    };
    write_json(&a.out.join(format!("{name}_run.json")), &meta, &run)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Model>> {
    paths.iter().map(|p| checkpoint::load(p)).collect()
}

#[derive(Serialize)]
struct EvalRun {
    command: &'static str,
    models: Vec<ModelSummary>,
    samples: usize,
}

#[derive(Serialize)]
struct ModelSummary {
    model: ModelKind,
    overall_mae_k: f64,
    worst_face: String,
    worst_face_mae_k: f64,
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let l = load_with_physics(&a.dataset, &a.physics)?;
    let samples = select(&l.data, a.split)?;
    let models = load_models(&a.checkpoints)?;
    let meta = Meta::new(config_hash(&l.config), l.data.seed);
    create_dir(&a.out)?;
    let mut evals = Vec::new();
    for m in &models {
        let e = eval::evaluate(&l.ctx, m, &samples)?;
        println!("{}: overall MAE {:.4} K", m.kind(), e.overall_mae());
        evals.push(e);
    }
    eval::write_mae_per_face(&a.out.join("mae_per_face.csv"), &meta, &l.ctx, &evals)?;
    eval::write_nodalization_hist(&a.out.join("nodalization_hist.csv"), &meta, &l.ctx, &evals)?;
    eval::write_orbit_error(&a.out.join("orbit_error.csv"), &meta, &evals)?;
    let summary = evals
        .iter()
        .map(|e| {
            let faces = e.mae_per_face();
            let (j, worst) = faces
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b });
            ModelSummary {
                model: e.kind,
                overall_mae_k: e.overall_mae(),
                worst_face: l.config.surfaces[j].name.clone(),
                worst_face_mae_k: worst,
            }
        })
        .collect();
    write_json(
        &a.out.join("eval_run.json"),
        &meta,
        &EvalRun {
            command: "eval",
            models: summary,
            samples: samples.len(),
        },
    )
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let l = load_with_physics(&a.dataset, &a.physics)?;
    let samples = select(&l.data, a.split)?;
    let models = load_models(&a.checkpoints)?;
    let meta = Meta::new(config_hash(&l.config), l.data.seed);
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for m in &models {
        let r = bench::bench(&l.ctx, m, &samples, a.reps)?;
        println!(
            "{}: median {:.6} s, median nodes {}",
            r.kind,
            r.median_runtime_s,
            r.median_total_nodes.map_or("-".into(), |n| n.to_string())
        );
        rows.push(r);
    }
    bench::write_bench(&a.out.join("bench.csv"), &meta, &rows)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let config = load_or_default(a.physics.config.as_deref())?;
    if !(a.every > 0.0) {
        return Err(Error::Usage("--every must be positive".into()));
    }
    let nod = Nodalization::uniform(a.n, config.len());
    nod.validate(&config)?;
    let vf = view_factors(&config, a.physics.viewfactors.as_deref(), a.rays, a.seed)?;
    let settings = SolverSettings {
        dt: a.dt,
        duration: a.duration,
        ..SolverSettings::default()
    };
    let ctx = PhysicsContext::new(config.clone(), &vf, settings)?;
    let spec = OrbitSpec {
        beta_deg: a.beta,
        ..OrbitSpec::default()
    };
    let loads = LoadModel::new(&config)?.orbit_loads(&spec, a.time)?;
    let t0 = vec![INITIAL_TEMPERATURE; ctx.dense_nodes()];
    let every = (a.every / a.dt).round().max(1.0) as usize;
    let traj = simulate::trajectory(&ctx, nod.per_surface(), &loads, &t0, every)?;
    parent_dir(&a.out)?;
    simulate::write_trajectory(&a.out, &Meta::new(config_hash(&config), a.seed), &ctx, &traj)?;
    let last = &traj.last().expect("initial state is recorded").1;
    println!(
        "simulated {} s at n = {} ({} nodes): mean {:.3} K, range {:.3}–{:.3} K",
        a.duration,
        a.n,
        total_node_count(&nod, &config),
        last.iter().sum::<f64>() / last.len() as f64,
        last.iter().cloned().fold(f64::INFINITY, f64::min),
        last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}
