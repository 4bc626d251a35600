//! `neutomo`: staged tomography pipeline and experiment runner.
//!
//! Stage commands read and write fixed file names inside the output directory,
//! so `generate`, `route`, `sample`, `train`, `predict` and `evaluate` chain
//! without extra flags. `run` and `grid` execute whole cells from a JSON spec.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use neutomo::experiment::{
    build_network, cell_id, run_cell, run_grid, summary_table, GridSpec, Method, TopologySource,
};
use neutomo::io::{implied_node_count, load_pair_values, save_series};
use neutomo::metrics::{CellMetadata, EvalReport};
use neutomo::netmodel::load_topology;
use neutomo::neuralnet::{train, BatchSize, TomographyModel, TrainingExample};
use neutomo::nmf::{nmf_complete, NmfConfig};
use neutomo::pairs::Pair;
use neutomo::pat::pat_train;
use neutomo::predictions::PredictionTable;
use neutomo::reconstruct::{merge_metrics, reconstruct, score};
use neutomo::routing::route_all_pairs;
use neutomo::sampling::sample;
use neutomo::seeds::{stage_rng, Stage};
use neutomo::{GroundTruthTable, LinkMetricRegime, MeasurementSet, MetricSemantics, RoutingStrategy, SamplingMethod};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "neutomo", version, about = "Neural network tomography toolkit")]
struct Cli {
    /// JSON experiment spec (optionally with a `grid` section) supplying defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for stage files and cell artifacts.
    #[arg(long, global = true, env = "NEUTOMO_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the spec.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true, value_enum)]
    regime: Option<Regime>,
    /// Lower bound of uniform link metrics.
    #[arg(long, global = true)]
    metric_lo: Option<f64>,
    /// Upper bound of uniform link metrics.
    #[arg(long, global = true)]
    metric_hi: Option<f64>,
    #[arg(long, global = true, value_enum)]
    semantics: Option<Semantics>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long, global = true, value_enum)]
    sampling: Option<Sampling>,
    /// Fraction of pairs measured.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// neutomo, neutomo+pat or nmf.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Master seeds (comma separated); stage commands use the first.
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    /// Positive integer or "full".
    #[arg(long, global = true)]
    batch_size: Option<String>,
    /// Hidden width as a multiple of the node count.
    #[arg(long, global = true)]
    gamma_factor: Option<f64>,
    #[arg(long, global = true)]
    hidden_layers: Option<usize>,
    /// Train on targets divided by their mean.
    #[arg(long, global = true)]
    normalize_targets: Option<bool>,
    #[arg(long, global = true)]
    rank: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Regime {
    Unweighted,
    File,
    Uniform,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Semantics {
    Additive,
    Congestion,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Strategy {
    Bpr,
    Mhr,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Sampling {
    Random,
    Monitor,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or load a topology, assign link metrics, write topology.txt.
    Generate {
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        avg_degree: Option<f64>,
        /// Edge-list file to load instead of generating.
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Route every pair of topology.txt, write ground_truth.csv.
    Route {
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Split ground_truth.csv into measured.csv and heldout.csv.
    Sample {
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Train the model on measured.csv, write model.json and losses.csv.
    Train,
    /// Path-augmented training, write model.json, losses.csv and predictions.csv.
    Pat,
    /// Predict pairs with a trained model, write predictions.csv.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pair file (`u,v,...`); defaults to heldout.csv.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Masked NMF completion of heldout pairs, write predictions.csv.
    Nmf,
    /// Extended adjacency matrices from measured plus predicted hop counts.
    Reconstruct {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Largest m to reconstruct.
        #[arg(long, default_value_t = 5)]
        max_m: u32,
        /// Ground truth to score against (FPR/FNR).
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Score predictions against held-out truth, write report.json.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every seed of the spec as a full cell.
    Run {
        /// Recompute cells that already have a report.
        #[arg(long)]
        force: bool,
    },
    /// Run the grid of the spec and write rows.csv and summary tables.
    Grid {
        #[arg(long, env = "NEUTOMO_WORKERS", default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        force: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Route { .. } => "route",
            Command::Sample { .. } => "sample",
            Command::Train => "train",
            Command::Pat => "pat",
            Command::Predict { .. } => "predict",
            Command::Nmf => "nmf",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Evaluate { .. } => "evaluate",
            Command::Run { .. } => "run",
            Command::Grid { .. } => "grid",
        }
    }
}

fn default_grid() -> GridSpec {
    GridSpec {
        base: neutomo::experiment::ExperimentSpec::new(TopologySource::Generate {
            nodes: 100,
            avg_degree: 4.0,
            seed: None,
        }),
        grid: Default::default(),
    }
}

fn load_grid(path: Option<&Path>) -> Result<GridSpec> {
    let Some(path) = path else {
        return Ok(default_grid());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    // stage commands work from files, so a config may omit the topology
    if let Some(obj) = value.as_object_mut() {
        if !obj.contains_key("topology") {
            obj.insert("topology".into(), serde_json::to_value(&default_grid().base.topology)?);
        }
    }
    serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))
}

impl Overrides {
    fn apply(&self, grid: &mut GridSpec) -> Result<()> {
        let spec = &mut grid.base;
        if let Some(r) = self.regime {
            spec.regime = match r {
                Regime::Unweighted => LinkMetricRegime::Unweighted,
                Regime::File => LinkMetricRegime::FromFile,
                Regime::Uniform => LinkMetricRegime::uniform_default(),
            };
        }
        if self.metric_lo.is_some() || self.metric_hi.is_some() {
            let LinkMetricRegime::UniformRandom { lo, hi } = &mut spec.regime else {
                bail!("--metric-lo/--metric-hi need the uniform regime");
            };
            *lo = self.metric_lo.unwrap_or(*lo);
            *hi = self.metric_hi.unwrap_or(*hi);
        }
        if let Some(s) = self.semantics {
            spec.semantics = match s {
                Semantics::Additive => MetricSemantics::Additive,
                Semantics::Congestion => MetricSemantics::Congestion,
            };
        }
        if let Some(s) = self.strategy {
            spec.strategy = match s {
                Strategy::Bpr => RoutingStrategy::Bpr,
                Strategy::Mhr => RoutingStrategy::Mhr,
            };
        }
        if let Some(s) = self.sampling {
            spec.sampling = match s {
                Sampling::Random => SamplingMethod::Random,
                Sampling::Monitor => SamplingMethod::Monitor,
            };
        }
        if let Some(r) = self.ratio {
            spec.ratio = r;
        }
        if let Some(m) = self.method {
            spec.method = m;
        }
        if let Some(s) = &self.seed {
            spec.seeds = s.clone();
        }
        let model = &mut spec.model;
        if let Some(e) = self.epochs {
            model.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            model.learning_rate = lr;
        }
        if let Some(b) = &self.batch_size {
            model.batch_size = b.parse::<BatchSize>()?;
        }
        if let Some(g) = self.gamma_factor {
            model.gamma_factor = g;
            model.gamma = None;
        }
        if let Some(k) = self.hidden_layers {
            model.hidden_layers = k;
        }
        if let Some(b) = self.normalize_targets {
            model.normalize_targets = b;
        }
        if let Some(r) = self.rank {
            spec.nmf.rank = r;
        }
        Ok(())
    }
}

struct Ctx {
    grid: GridSpec,
    out: PathBuf,
}

impl Ctx {
    fn spec(&self) -> &neutomo::experiment::ExperimentSpec {
        &self.grid.base
    }

    fn seed(&self) -> Result<u64> {
        self.spec().seeds.first().copied().context("no seed given")
    }

    fn path(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(default))
    }

    fn measurements(&self) -> Result<MeasurementSet> {
        MeasurementSet::load(&self.out, self.spec().sampling)
            .with_context(|| format!("loading measured.csv and heldout.csv from {}", self.out.display()))
    }

    fn metadata(&self, method: &str) -> Result<CellMetadata> {
        let s = self.spec();
        Ok(CellMetadata {
            network: s.topology.network_name(),
            regime: s.regime.short_name().into(),
            semantics: format!("{:?}", s.semantics).to_lowercase(),
            strategy: s.strategy.short_name().into(),
            sampling: s.sampling.short_name().into(),
            ratio: s.ratio,
            method: method.into(),
            seed: self.seed()?,
        })
    }
}

fn examples(rows: &[(Pair, f64)]) -> Result<Vec<TrainingExample>> {
    Ok(rows
        .iter()
        .map(|&(p, m)| TrainingExample::new(p, m))
        .collect::<neutomo::Result<_>>()?)
}

fn execute(cli: &Cli, ctx: &mut Ctx) -> Result<()> {
    let spec = ctx.spec().clone();
    match &cli.command {
        Command::Generate {
            nodes,
            avg_degree,
            topology,
        } => {
            let mut spec = spec;
            if let Some(path) = topology {
                spec.topology = TopologySource::File {
                    path: path.clone(),
                    name: None,
                };
            } else if nodes.is_some() || avg_degree.is_some() {
                let (n0, d0) = match spec.topology {
                    TopologySource::Generate { nodes, avg_degree, .. } => (nodes, avg_degree),
                    TopologySource::File { .. } => (100, 4.0),
                };
                spec.topology = TopologySource::Generate {
                    nodes: nodes.unwrap_or(n0),
                    avg_degree: avg_degree.unwrap_or(d0),
                    seed: None,
                };
            }
            let t = build_network(&spec, ctx.seed()?)?;
            let path = ctx.out.join("topology.txt");
            t.save(&path)?;
            println!(
                "{} nodes, {} links, average degree {:.2} -> {}",
                t.node_count(),
                t.edge_count(),
                t.average_degree(),
                path.display()
            );
        }
        Command::Route { topology } => {
            let t = load_topology(ctx.path(topology, "topology.txt"))?;
            let gt = route_all_pairs(&t, spec.strategy, spec.semantics)?;
            let path = ctx.out.join("ground_truth.csv");
            gt.write_csv(fs::File::create(&path)?)?;
            println!("{} pairs routed -> {}", gt.len(), path.display());
        }
        Command::Sample { ground_truth } => {
            let path = ctx.path(ground_truth, "ground_truth.csv");
            let gt = GroundTruthTable::read_csv(
                fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?,
            )?;
            let ms = sample(
                &gt,
                spec.sampling,
                spec.ratio,
                &mut stage_rng(ctx.seed()?, Stage::Sampling),
            )?;
            ms.save(&ctx.out)?;
            println!(
                "{} measured, {} held out, {} monitors -> {}",
                ms.measured.len(),
                ms.heldout.len(),
                ms.monitors.len(),
                ctx.out.display()
            );
        }
        Command::Train => {
            let ms = ctx.measurements()?;
            let cfg = spec.model.resolve(ms.node_count, ctx.seed()?)?;
            info!("training n={} gamma={} epochs={}", cfg.n, cfg.gamma, cfg.epochs);
            let run = train(&cfg, &examples(&ms.measured)?)?;
            run.model.save(ctx.out.join("model.json"))?;
            save_series(ctx.out.join("losses.csv"), "epoch", "loss", &run.losses)?;
            println!(
                "{} epochs, final loss {:.6} -> {}",
                run.losses.len(),
                run.losses.last().copied().unwrap_or(f64::NAN),
                ctx.out.join("model.json").display()
            );
        }
        Command::Pat => {
            let ms = ctx.measurements()?;
            let cfg = spec.model.resolve(ms.node_count, ctx.seed()?)?;
            let out = pat_train(&ms, &spec.pat, &cfg, spec.semantics)?;
            out.model.save(ctx.out.join("model.json"))?;
            save_series(ctx.out.join("losses.csv"), "epoch", "loss", &out.losses)?;
            out.predictions.save(ctx.out.join("predictions.csv"))?;
            println!(
                "{} iterations, {} unreachable in G' -> {}",
                out.augmented_per_iteration.len(),
                out.initial.unreachable_count(),
                ctx.out.join("predictions.csv").display()
            );
        }
        Command::Predict { model, pairs } => {
            let model = TomographyModel::load(ctx.path(model, "model.json"))?;
            let rows = load_pair_values(ctx.path(pairs, "heldout.csv"))?;
            let query: Vec<Pair> = rows.iter().map(|(p, _)| *p).collect();
            let table = model.predict(&query)?;
            table.save(ctx.out.join("predictions.csv"))?;
            println!(
                "{} predictions -> {}",
                table.len(),
                ctx.out.join("predictions.csv").display()
            );
        }
        Command::Nmf => {
            let ms = ctx.measurements()?;
            let n = ms.node_count;
            if n < 2 {
                bail!("nmf needs at least two nodes");
            }
            let cfg = NmfConfig {
                rank: spec.nmf.rank.min(n - 1),
                max_iters: spec.nmf.max_iters,
                tol: spec.nmf.tol,
                seed: ctx.seed()?,
            };
            let (table, fit) = nmf_complete(&ms.measured, n, &cfg, &ms.heldout_pairs())?;
            table.save(ctx.out.join("predictions.csv"))?;
            save_series(
                ctx.out.join("nmf_objective.csv"),
                "iteration",
                "objective",
                &fit.objective,
            )?;
            println!(
                "rank {}, {} iterations, converged {} -> {}",
                cfg.rank,
                fit.iterations(),
                fit.converged,
                ctx.out.join("predictions.csv").display()
            );
        }
        Command::Reconstruct {
            predictions,
            max_m,
            ground_truth,
        } => {
            let measured = load_pair_values(ctx.out.join("measured.csv"))?;
            let inferred: Vec<(Pair, f64)> = PredictionTable::load(ctx.path(predictions, "predictions.csv"))?
                .rows
                .iter()
                .map(|r| (r.pair, r.value))
                .collect();
            let n = implied_node_count(measured.iter().chain(&inferred));
            let table = merge_metrics(n, &measured, &inferred)?;
            let truth = match ground_truth {
                Some(p) => Some(GroundTruthTable::read_csv(fs::File::open(p)?)?.hop_metrics()),
                None => None,
            };
            let mut scores = Vec::new();
            for m in 1..=*max_m {
                let a = reconstruct(&table, m);
                fs::write(ctx.out.join(format!("a{m}.txt")), a.to_text())?;
                if let Some(t) = &truth {
                    let s = score(&a, &reconstruct(t, m))?;
                    println!(
                        "A^({m}): {} entries, FPR {:?}, FNR {:?}",
                        a.nonzero_count(),
                        s.fpr,
                        s.fnr
                    );
                    scores.push(s);
                } else {
                    println!("A^({m}): {} entries", a.nonzero_count());
                }
            }
            if !scores.is_empty() {
                fs::write(
                    ctx.out.join("reconstruction.json"),
                    serde_json::to_string_pretty(&scores)?,
                )?;
            }
        }
        Command::Evaluate { predictions, truth } => {
            let pred = PredictionTable::load(ctx.path(predictions, "predictions.csv"))?;
            let truth = load_pair_values(ctx.path(truth, "heldout.csv"))?;
            let mut predicted = Vec::with_capacity(truth.len());
            for (p, _) in &truth {
                predicted.push(pred.get(*p).with_context(|| format!("no prediction for pair {p}"))?);
            }
            let values: Vec<f64> = truth.iter().map(|(_, v)| *v).collect();
            let method = pred.rows.first().map(|r| r.source.as_str()).unwrap_or("unknown");
            let report = EvalReport::evaluate(ctx.metadata(method)?, &predicted, &values)?;
            fs::write(ctx.out.join("report.json"), report.to_json()?)?;
            println!(
                "MAPE {:.3}% over {} pairs, histogram L1 {:.4}",
                report.mape,
                values.len(),
                report.histogram_l1
            );
        }
        Command::Run { force } => {
            let mut failed = 0;
            for &seed in &spec.seeds {
                match run_cell(&spec, seed, *force) {
                    Ok(out) => println!(
                        "seed {seed}: MAPE {:.3}%{} -> {}",
                        out.report.mape,
                        if out.reused { " (reused)" } else { "" },
                        out.dir.display()
                    ),
                    Err(e) => {
                        failed += 1;
                        eprintln!(
                            "seed {seed}: cell {} failed: {e}",
                            cell_id(&spec, seed).unwrap_or_default()
                        );
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} cells failed", spec.seeds.len());
            }
        }
        Command::Grid { workers, force } => {
            let out = run_grid(&ctx.grid, *workers, *force)?;
            print!("{}", summary_table(&out.summary));
            let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} rows, {} failed -> {}",
                out.rows.len(),
                failed,
                spec.out_dir.display()
            );
            if failed > 0 {
                bail!("{failed} of {} grid cells failed", out.rows.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut grid = match load_grid(cli.config.as_deref()) {
        Ok(g) => g,
        Err(e) => return fail(&cli, None, &e),
    };
    if let Err(e) = cli.overrides.apply(&mut grid) {
        return fail(&cli, None, &e);
    }
    if let Some(dir) = &cli.out_dir {
        grid.base.out_dir = dir.clone();
    }
    let out = grid.base.out_dir.clone();
    let mut ctx = Ctx { grid, out };
    let result = fs::create_dir_all(&ctx.out)
        .with_context(|| format!("creating {}", ctx.out.display()))
        .and_then(|_| execute(&cli, &mut ctx));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&cli, Some(&ctx.out), &e),
    }
}

/// Prints a failure record and leaves a copy as `failure.json` when there is an output directory.
fn fail(cli: &Cli, out: Option<&Path>, error: &anyhow::Error) -> ExitCode {
    let record = json!({
        "command": cli.command.name(),
        "error": format!("{error:#}"),
    });
    eprintln!("{record}");
    if let Some(dir) = out {
        let _ = fs::write(
            dir.join("failure.json"),
            serde_json::to_string_pretty(&record).unwrap_or_default(),
        );
    }
    ExitCode::FAILURE
}
