//! Experiment cells and grids.
//!
//! A cell is one `(spec, seed)` run of the whole pipeline:
//! topology → link metrics → routing → sampling → inference → evaluation.
//! Each cell writes its artifacts under `<out_dir>/cells/<hash>`, where the
//! hash covers the resolved spec, the seed and (for file topologies) the file
//! bytes, so a finished cell is reused unless forced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{CellMetadata, EvalReport};
use crate::netmodel::{
    assign_link_metrics, generate_topology, parse_edge_list, LinkMetricRegime, MetricSemantics, Topology,
};
use crate::neuralnet::{gamma_for, train, BatchSize, ModelConfig, TrainingExample};
use crate::nmf::{nmf_complete, NmfConfig};
use crate::pairs::{all_pairs, Pair, PairTable};
use crate::pat::{pat_train, PatConfig};
use crate::predictions::PredictionTable;
use crate::reconstruct::{merge_metrics, reconstruct, score, ReconstructionScore};
use crate::routing::{route_all_pairs, GroundTruthTable, RoutingStrategy};
use crate::sampling::{sample, MeasurementSet, SamplingMethod};
use crate::seeds::{stage_rng, stage_seed, Stage};

/// Largest `m` scored by the hop-count reconstruction task.
pub const RECONSTRUCT_MAX_M: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySource {
    /// Edge-list file; `name` defaults to the file stem.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Random connected graph. Without an explicit seed the cell seed is used.
    Generate {
        nodes: usize,
        avg_degree: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl TopologySource {
    pub fn network_name(&self) -> String {
        match self {
            TopologySource::File { path, name } => name.clone().unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "network".into())
            }),
            TopologySource::Generate { nodes, avg_degree, .. } => format!("synthetic-n{nodes}-d{avg_degree}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "neutomo")]
    NeuTomo,
    #[serde(rename = "neutomo+pat")]
    NeuTomoPat,
    #[serde(rename = "nmf")]
    Nmf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::NeuTomo => "neutomo",
            Method::NeuTomoPat => "neutomo+pat",
            Method::Nmf => "nmf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neutomo" => Ok(Method::NeuTomo),
            "neutomo+pat" | "pat" => Ok(Method::NeuTomoPat),
            "nmf" => Ok(Method::Nmf),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }
}

/// Model hyperparameters without the node count and seed, which each cell supplies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// Hidden width as a multiple of `n` (rounded up).
    pub gamma_factor: f64,
    /// Explicit hidden width; overrides `gamma_factor`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub normalize_targets: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let d = ModelConfig::new(2);
        Self {
            gamma_factor: 2.5,
            gamma: None,
            hidden_layers: d.hidden_layers,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            normalize_targets: d.normalize_targets,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, n: usize, seed: u64) -> Result<ModelConfig> {
        if !(self.gamma_factor.is_finite() && self.gamma_factor > 0.0) {
            return Err(Error::invalid(format!(
                "gamma_factor must be positive, got {}",
                self.gamma_factor
            )));
        }
        let cfg = ModelConfig {
            n,
            gamma: self.gamma.unwrap_or_else(|| gamma_for(n, self.gamma_factor)),
            hidden_layers: self.hidden_layers,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            normalize_targets: self.normalize_targets,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// NMF settings; the seed comes from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfSettings {
    /// Clamped to `n − 1` on small networks.
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for NmfSettings {
    fn default() -> Self {
        let d = NmfConfig::default();
        Self {
            rank: d.rank,
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

/// One experiment cell, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub topology: TopologySource,
    #[serde(default = "LinkMetricRegime::uniform_default")]
    pub regime: LinkMetricRegime,
    #[serde(default = "default_semantics")]
    pub semantics: MetricSemantics,
    #[serde(default = "default_strategy")]
    pub strategy: RoutingStrategy,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMethod,
    /// Fraction of pairs measured; `1.0` measures every pair and evaluates on them.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub pat: PatConfig,
    #[serde(default)]
    pub nmf: NmfSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_semantics() -> MetricSemantics {
    MetricSemantics::Additive
}
fn default_strategy() -> RoutingStrategy {
    RoutingStrategy::Bpr
}
fn default_sampling() -> SamplingMethod {
    SamplingMethod::Random
}
fn default_ratio() -> f64 {
    0.3
}
fn default_method() -> Method {
    Method::NeuTomo
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentSpec {
    /// A spec with default settings for `topology`.
    pub fn new(topology: TopologySource) -> Self {
        Self {
            topology,
            regime: LinkMetricRegime::uniform_default(),
            semantics: default_semantics(),
            strategy: default_strategy(),
            sampling: default_sampling(),
            ratio: default_ratio(),
            method: default_method(),
            model: ModelSettings::default(),
            pat: PatConfig::default(),
            nmf: NmfSettings::default(),
            seeds: default_seeds(),
            out_dir: default_out_dir(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::invalid(format!("ratio must lie in (0,1], got {}", self.ratio)));
        }
        if let LinkMetricRegime::UniformRandom { lo, hi } = self.regime {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!(
                    "uniform link metrics need 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        if let TopologySource::Generate { nodes, avg_degree, .. } = self.topology {
            if nodes < 3 || !(avg_degree.is_finite() && avg_degree > 0.0) {
                return Err(Error::invalid("generator needs nodes >= 3 and a positive degree"));
            }
        }
        self.model.resolve(2, 0)?;
        if self.method == Method::NeuTomoPat {
            self.pat.validate()?;
        }
        if self.nmf.rank == 0 || self.nmf.max_iters == 0 || self.nmf.tol.is_nan() || self.nmf.tol < 0.0 {
            return Err(Error::invalid("nmf needs rank >= 1, max_iters >= 1 and tol >= 0"));
        }
        Ok(())
    }

    /// Whether link metrics are unit and additive, so pair metrics are hop counts.
    pub fn is_hop_task(&self) -> bool {
        self.regime == LinkMetricRegime::Unweighted && self.semantics == MetricSemantics::Additive
    }

    /// Everything that determines a cell's outcome (seeds list and output location excluded).
    fn identity(&self, seed: u64) -> Result<serde_json::Value> {
        let mut spec = serde_json::to_value(self)?;
        if let Some(obj) = spec.as_object_mut() {
            obj.remove("seeds");
            obj.remove("out_dir");
        }
        let topology_digest = match &self.topology {
            TopologySource::File { path, .. } => Some(hex_digest(&fs::read(path)?)),
            TopologySource::Generate { .. } => None,
        };
        Ok(json!({
            "spec": spec,
            "seed": seed,
            "topology_sha256": topology_digest,
            "format": 1,
        }))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable short id of a cell.
pub fn cell_id(spec: &ExperimentSpec, seed: u64) -> Result<String> {
    let identity = spec.identity(seed)?;
    Ok(hex_digest(serde_json::to_string(&identity)?.as_bytes())[..16].to_string())
}

pub fn cell_dir(spec: &ExperimentSpec, seed: u64) -> Result<PathBuf> {
    Ok(spec.out_dir.join("cells").join(cell_id(spec, seed)?))
}

/// Topology for a cell, with link metrics assigned.
pub fn build_network(spec: &ExperimentSpec, seed: u64) -> Result<Topology> {
    let base = match &spec.topology {
        TopologySource::File { path, .. } => {
            let text = fs::read_to_string(path)?;
            parse_edge_list(&text, path)?
        }
        TopologySource::Generate {
            nodes,
            avg_degree,
            seed: fixed,
        } => {
            let topo_seed = fixed.unwrap_or_else(|| stage_seed(seed, Stage::Topology));
            generate_topology(*nodes, *avg_degree, topo_seed)?
        }
    };
    assign_link_metrics(&base, spec.regime, stage_seed(seed, Stage::LinkMetrics))
}

/// Measured pairs for a cell; ratio 1 measures everything.
pub fn measure(spec: &ExperimentSpec, gt: &GroundTruthTable, seed: u64) -> Result<MeasurementSet> {
    if spec.ratio >= 1.0 {
        let every: Vec<Pair> = all_pairs(gt.node_count()).collect();
        let mut ms = MeasurementSet::from_measured(gt, &every)?;
        ms.method = spec.sampling;
        return Ok(ms);
    }
    sample(gt, spec.sampling, spec.ratio, &mut stage_rng(seed, Stage::Sampling))
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub report: EvalReport,
    pub dir: PathBuf,
    /// The report was read back from an earlier run.
    pub reused: bool,
}

/// Machine-readable record written when a cell fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub cell: String,
    pub seed: u64,
    pub stage: String,
    pub error: String,
}

struct Staged<'a> {
    stage: &'a str,
    error: Error,
}

trait AtStage<T> {
    fn at(self, stage: &str) -> std::result::Result<T, Staged<'_>>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &str) -> std::result::Result<T, Staged<'_>> {
        self.map_err(|error| Staged { stage, error })
    }
}

/// Runs one cell, or returns the stored report of a completed identical cell
/// unless `force` is set. Failures leave `failure.json` in the cell directory.
pub fn run_cell(spec: &ExperimentSpec, seed: u64, force: bool) -> Result<CellOutcome> {
    spec.validate()?;
    let id = cell_id(spec, seed)?;
    let dir = spec.out_dir.join("cells").join(&id);
    let report_path = dir.join("report.json");
    if !force && report_path.exists() {
        if let Ok(report) = serde_json::from_str::<EvalReport>(&fs::read_to_string(&report_path)?) {
            if report.details.get("cell").and_then(|v| v.as_str()) == Some(id.as_str()) {
                return Ok(CellOutcome {
                    report,
                    dir,
                    reused: true,
                });
            }
        }
    }
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("failure.json"));
    let _ = fs::remove_file(&report_path);
    match execute(spec, seed, &id, &dir) {
        Ok(report) => {
            fs::write(&report_path, report.to_json()?)?;
            Ok(CellOutcome {
                report,
                dir,
                reused: false,
            })
        }
        Err(Staged { stage, error }) => {
            let record = FailureRecord {
                cell: id,
                seed,
                stage: stage.to_string(),
                error: error.to_string(),
            };
            fs::write(dir.join("failure.json"), serde_json::to_string_pretty(&record)?)?;
            Err(error)
        }
    }
}

fn execute<'s>(spec: &ExperimentSpec, seed: u64, id: &str, dir: &Path) -> std::result::Result<EvalReport, Staged<'s>> {
    let topology = build_network(spec, seed).at("topology")?;
    let n = topology.node_count();
    topology.save(dir.join("topology.txt")).at("topology")?;

    let gt = route_all_pairs(&topology, spec.strategy, spec.semantics).at("routing")?;
    gt.write_csv(
        fs::File::create(dir.join("ground_truth.csv"))
            .map_err(Error::from)
            .at("routing")?,
    )
    .at("routing")?;

    let ms = measure(spec, &gt, seed).at("sampling")?;
    ms.save(dir).at("sampling")?;

    // with every pair measured there is nothing held out: score the fit itself
    let on_measured = ms.heldout.is_empty();
    let (eval_pairs, truth): (Vec<Pair>, Vec<f64>) = if on_measured {
        ms.measured.iter().copied().unzip()
    } else {
        ms.heldout.iter().copied().unzip()
    };

    let mut details: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut resolved = json!({});
    let predictions: PredictionTable = match spec.method {
        Method::NeuTomo | Method::NeuTomoPat => {
            let mc = spec.model.resolve(n, seed).at("training")?;
            resolved["model"] = serde_json::to_value(&mc).map_err(Error::from).at("training")?;
            let (model, losses, table) = if spec.method == Method::NeuTomo {
                let examples: Vec<TrainingExample> = ms
                    .measured
                    .iter()
                    .map(|&(p, m)| TrainingExample::new(p, m))
                    .collect::<Result<_>>()
                    .at("training")?;
                let run = train(&mc, &examples).at("training")?;
                let table = run.model.predict(&eval_pairs).at("prediction")?;
                (run.model, run.losses, table)
            } else {
                resolved["pat"] = serde_json::to_value(&spec.pat).map_err(Error::from).at("pat")?;
                let out = pat_train(&ms, &spec.pat, &mc, spec.semantics).at("pat")?;
                details.insert("pat_augmented_per_iteration".into(), json!(out.augmented_per_iteration));
                details.insert("pat_unreachable_pairs".into(), json!(out.initial.unreachable_count()));
                let table = if on_measured {
                    out.model.predict(&eval_pairs).at("prediction")?
                } else {
                    out.predictions
                };
                (out.model, out.losses, table)
            };
            model.save(dir.join("model.json")).at("training")?;
            io::save_series(dir.join("losses.csv"), "epoch", "loss", &losses).at("training")?;
            details.insert("epochs_run".into(), json!(losses.len()));
            details.insert("first_loss".into(), json!(losses.first()));
            details.insert("final_loss".into(), json!(losses.last()));
            table
        }
        Method::Nmf => {
            let cfg = NmfConfig {
                rank: spec.nmf.rank.min(n - 1),
                max_iters: spec.nmf.max_iters,
                tol: spec.nmf.tol,
                seed,
            };
            resolved["nmf"] = serde_json::to_value(&cfg).map_err(Error::from).at("nmf")?;
            let (table, fit) = nmf_complete(&ms.measured, n, &cfg, &eval_pairs).at("nmf")?;
            io::save_series(dir.join("nmf_objective.csv"), "iteration", "objective", &fit.objective).at("nmf")?;
            details.insert("nmf_iterations".into(), json!(fit.iterations()));
            details.insert("nmf_converged".into(), json!(fit.converged));
            details.insert("nmf_final_objective".into(), json!(fit.objective.last()));
            table
        }
    };
    predictions.save(dir.join("predictions.csv")).at("prediction")?;

    let metadata = CellMetadata {
        network: spec.topology.network_name(),
        regime: spec.regime.short_name().into(),
        semantics: serde_json::to_value(spec.semantics)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        strategy: spec.strategy.short_name().into(),
        sampling: spec.sampling.short_name().into(),
        ratio: spec.ratio,
        method: spec.method.as_str().into(),
        seed,
    };
    let mut report = EvalReport::evaluate(metadata, &predictions.values(), &truth).at("evaluation")?;

    if spec.is_hop_task() {
        report.reconstruction = reconstruction_scores(&gt, &ms, &predictions, dir).at("reconstruction")?;
    }

    details.insert("cell".into(), json!(id));
    details.insert("nodes".into(), json!(n));
    details.insert("links".into(), json!(topology.edge_count()));
    details.insert("measured_pairs".into(), json!(ms.measured.len()));
    details.insert("heldout_pairs".into(), json!(ms.heldout.len()));
    details.insert(
        "evaluated_on".into(),
        json!(if on_measured { "measured" } else { "heldout" }),
    );
    if !ms.monitors.is_empty() {
        details.insert("monitors".into(), json!(ms.monitors));
    }
    report.details = details;
    let mut config = spec.identity(seed).at("evaluation")?;
    config["resolved"] = resolved;
    report.config = config;
    Ok(report)
}

/// Scores `A^(1..=5)` rebuilt from measured plus inferred hop counts, writing
/// each predicted matrix as `a<m>.txt`.
fn reconstruction_scores(
    gt: &GroundTruthTable,
    ms: &MeasurementSet,
    predictions: &PredictionTable,
    dir: &Path,
) -> Result<Vec<ReconstructionScore>> {
    let n = gt.node_count();
    let inferred: Vec<(Pair, f64)> = predictions.rows.iter().map(|r| (r.pair, r.value)).collect();
    let merged: PairTable<f64> = merge_metrics(n, &ms.measured, &inferred)?;
    let truth = gt.hop_metrics();
    (1..=RECONSTRUCT_MAX_M)
        .map(|m| {
            let predicted = reconstruct(&merged, m);
            fs::write(dir.join(format!("a{m}.txt")), predicted.to_text())?;
            score(&predicted, &reconstruct(&truth, m))
        })
        .collect()
}

/// Optional axes swept by a grid; missing axes use the base spec's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub topologies: Option<Vec<TopologySource>>,
    pub regimes: Option<Vec<LinkMetricRegime>>,
    pub semantics: Option<Vec<MetricSemantics>>,
    pub strategies: Option<Vec<RoutingStrategy>>,
    pub samplings: Option<Vec<SamplingMethod>>,
    pub ratios: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub gamma_factors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    #[serde(flatten)]
    pub base: ExperimentSpec,
    pub grid: GridAxes,
}

// `flatten` would swallow unknown keys, so split off `grid` and parse the rest strictly
impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        let grid = match map.remove("grid") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => GridAxes::default(),
        };
        let base = serde_json::from_value(serde_json::Value::Object(map)).map_err(D::Error::custom)?;
        Ok(Self { base, grid })
    }
}

fn axis<T: Clone>(values: &Option<Vec<T>>, base: T) -> Vec<T> {
    values.clone().unwrap_or_else(|| vec![base])
}

impl GridSpec {
    /// Every cell spec of the grid, in a fixed nesting order.
    pub fn expand(&self) -> Result<Vec<ExperimentSpec>> {
        let g = &self.grid;
        let b = &self.base;
        let topologies = axis(&g.topologies, b.topology.clone());
        let regimes = axis(&g.regimes, b.regime);
        let semantics = axis(&g.semantics, b.semantics);
        let strategies = axis(&g.strategies, b.strategy);
        let samplings = axis(&g.samplings, b.sampling);
        let ratios = axis(&g.ratios, b.ratio);
        let methods = axis(&g.methods, b.method);
        let gammas = axis(&g.gamma_factors, b.model.gamma_factor);
        let mut out = Vec::new();
        for t in &topologies {
            for &sem in &semantics {
                for &method in &methods {
                    for &gf in &gammas {
                        for &ratio in &ratios {
                            for &sm in &samplings {
                                for &st in &strategies {
                                    for &rg in &regimes {
                                        let mut s = b.clone();
                                        s.topology = t.clone();
                                        s.semantics = sem;
                                        s.method = method;
                                        s.model.gamma_factor = gf;
                                        s.ratio = ratio;
                                        s.sampling = sm;
                                        s.strategy = st;
                                        s.regime = rg;
                                        out.push(s);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() || b.seeds.is_empty() {
            return Err(Error::invalid(
                "empty grid: every axis and the seed list need at least one value",
            ));
        }
        for s in &out {
            s.validate()?;
        }
        Ok(out)
    }
}

/// One `(cell, seed)` line of a grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: String,
    pub seed: u64,
    pub network: String,
    pub semantics: String,
    pub method: String,
    pub gamma_factor: f64,
    pub ratio: f64,
    pub sampling: String,
    pub strategy: String,
    pub regime: String,
    pub mape: Option<f64>,
    pub histogram_l1: Option<f64>,
    pub error: Option<String>,
}

/// Median over seeds of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub network: String,
    pub semantics: String,
    pub method: String,
    pub gamma_factor: f64,
    pub ratio: f64,
    pub sampling: String,
    pub strategy: String,
    pub regime: String,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub median_mape: Option<f64>,
    pub median_histogram_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub summary: Vec<SummaryCell>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

fn label_row(spec: &ExperimentSpec, seed: u64, cell: String) -> GridRow {
    GridRow {
        cell,
        seed,
        network: spec.topology.network_name(),
        semantics: format!("{:?}", spec.semantics).to_lowercase(),
        method: spec.method.as_str().into(),
        gamma_factor: spec.model.gamma_factor,
        ratio: spec.ratio,
        sampling: spec.sampling.short_name().into(),
        strategy: spec.strategy.short_name().into(),
        regime: spec.regime.short_name().into(),
        mape: None,
        histogram_l1: None,
        error: None,
    }
}

/// Runs every `(cell, seed)` of the grid on up to `workers` threads, writes
/// `rows.csv`, `summary.csv` and `summary.txt` to the output directory, and
/// keeps going past failed cells.
pub fn run_grid(grid: &GridSpec, workers: usize, force: bool) -> Result<GridOutcome> {
    let cells = grid.expand()?;
    let jobs: Vec<(&ExperimentSpec, u64)> = cells
        .iter()
        .flat_map(|s| grid.base.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let run_one = |&(spec, seed): &(&ExperimentSpec, u64)| -> GridRow {
        let id = cell_id(spec, seed).unwrap_or_else(|_| "unhashable".into());
        let mut row = label_row(spec, seed, id);
        match run_cell(spec, seed, force) {
            Ok(out) => {
                log::info!(
                    "cell {} seed {seed}: MAPE {:.2}%{}",
                    row.cell,
                    out.report.mape,
                    if out.reused { " (cached)" } else { "" }
                );
                row.mape = Some(out.report.mape);
                row.histogram_l1 = Some(out.report.histogram_l1);
            }
            Err(e) => {
                log::warn!("cell {} seed {seed} failed: {e}", row.cell);
                row.error = Some(e.to_string());
            }
        }
        row
    };
    let rows = run_jobs(&jobs, workers.max(1), run_one)?;
    let summary = summarize(&rows);
    fs::create_dir_all(&grid.base.out_dir)?;
    write_rows(&grid.base.out_dir.join("rows.csv"), &rows)?;
    write_summary(&grid.base.out_dir.join("summary.csv"), &summary)?;
    fs::write(grid.base.out_dir.join("summary.txt"), summary_table(&summary))?;
    Ok(GridOutcome { rows, summary })
}

#[cfg(feature = "parallel")]
fn run_jobs<J: Sync, R: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> R + Sync) -> Result<Vec<R>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<J, R>(jobs: &[J], _workers: usize, f: impl Fn(&J) -> R) -> Result<Vec<R>> {
    Ok(jobs.iter().map(f).collect())
}

fn summary_key(r: &GridRow) -> (String, String, String, String, String, String, String, String) {
    (
        r.network.clone(),
        r.semantics.clone(),
        r.method.clone(),
        r.gamma_factor.to_string(),
        r.ratio.to_string(),
        r.sampling.clone(),
        r.strategy.clone(),
        r.regime.clone(),
    )
}

pub fn summarize(rows: &[GridRow]) -> Vec<SummaryCell> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<_, Vec<&GridRow>> = BTreeMap::new();
    for r in rows {
        let key = summary_key(r);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let first = group[0];
            let mapes: Vec<f64> = group.iter().filter_map(|r| r.mape).collect();
            let l1s: Vec<f64> = group.iter().filter_map(|r| r.histogram_l1).collect();
            SummaryCell {
                network: first.network.clone(),
                semantics: first.semantics.clone(),
                method: first.method.clone(),
                gamma_factor: first.gamma_factor,
                ratio: first.ratio,
                sampling: first.sampling.clone(),
                strategy: first.strategy.clone(),
                regime: first.regime.clone(),
                seeds_ok: mapes.len(),
                seeds_failed: group.len() - mapes.len(),
                median_mape: median(&mapes),
                median_histogram_l1: median(&l1s),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_rows(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "cell",
        "seed",
        "network",
        "semantics",
        "method",
        "gamma_factor",
        "ratio",
        "sampling",
        "strategy",
        "regime",
        "mape",
        "histogram_l1",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.cell.clone(),
            r.seed.to_string(),
            r.network.clone(),
            r.semantics.clone(),
            r.method.clone(),
            r.gamma_factor.to_string(),
            r.ratio.to_string(),
            r.sampling.clone(),
            r.strategy.clone(),
            r.regime.clone(),
            opt(r.mape),
            opt(r.histogram_l1),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, cells: &[SummaryCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "network",
        "semantics",
        "method",
        "gamma_factor",
        "ratio",
        "sampling",
        "strategy",
        "regime",
        "seeds_ok",
        "seeds_failed",
        "median_mape",
        "median_histogram_l1",
    ])?;
    for c in cells {
        w.write_record([
            c.network.clone(),
            c.semantics.clone(),
            c.method.clone(),
            c.gamma_factor.to_string(),
            c.ratio.to_string(),
            c.sampling.clone(),
            c.strategy.clone(),
            c.regime.clone(),
            c.seeds_ok.to_string(),
            c.seeds_failed.to_string(),
            opt(c.median_mape),
            opt(c.median_histogram_l1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text tables of median MAPE (%): one block per network, semantics,
/// method and γ factor; rows are ratio × sampling, columns strategy × regime.
/// Cells without a successful seed print as `gap`.
pub fn summary_table(cells: &[SummaryCell]) -> String {
    use std::fmt::Write as _;
    let mut blocks: Vec<(String, Vec<&SummaryCell>)> = Vec::new();
    for c in cells {
        let title = format!(
            "{} / {} / {} / gamma={}n",
            c.network, c.semantics, c.method, c.gamma_factor
        );
        match blocks.iter_mut().find(|(t, _)| *t == title) {
            Some((_, v)) => v.push(c),
            None => blocks.push((title, vec![c])),
        }
    }
    let mut out = String::new();
    for (title, group) in blocks {
        let mut cols: Vec<String> = Vec::new();
        let mut rows: Vec<String> = Vec::new();
        for c in &group {
            let col = format!("{}-{}", c.strategy, c.regime);
            let row = format!("{:.0}% {}", c.ratio * 100.0, c.sampling);
            if !cols.contains(&col) {
                cols.push(col);
            }
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<14}", "");
        for c in &cols {
            let _ = write!(out, "{c:>10}");
        }
        out.push('\n');
        for r in &rows {
            let _ = write!(out, "{r:<14}");
            for col in &cols {
                let v = group
                    .iter()
                    .find(|c| {
                        format!("{}-{}", c.strategy, c.regime) == *col
                            && format!("{:.0}% {}", c.ratio * 100.0, c.sampling) == *r
                    })
                    .and_then(|c| c.median_mape);
                match v {
                    Some(m) => {
                        let _ = write!(out, "{m:>10.2}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "gap");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_spec(dir: &Path) -> ExperimentSpec {
        let path = dir.join("triangle.txt");
        fs::write(&path, "0 1 2\n1 2 3\n0 2 6\n").unwrap();
        let mut spec = ExperimentSpec::new(TopologySource::File { path, name: None });
        spec.regime = LinkMetricRegime::FromFile;
        spec.ratio = 1.0;
        spec.model.epochs = 1000;
        spec.model.learning_rate = 1e-2;
        spec.out_dir = dir.join("out");
        spec
    }

    #[test]
    fn triangle_memorization_cell() {
        let dir = tempfile::tempdir().unwrap();
        let spec = triangle_spec(dir.path());
        let out = run_cell(&spec, 1, false).unwrap();
        assert!(!out.reused);
        assert_eq!(out.report.metadata.network, "triangle");
        assert_eq!(out.report.details["evaluated_on"], "measured");
        assert!(out.report.mape < 5.0, "{}", out.report.mape);
        for f in [
            "report.json",
            "topology.txt",
            "ground_truth.csv",
            "measured.csv",
            "predictions.csv",
            "model.json",
            "losses.csv",
        ] {
            assert!(out.dir.join(f).exists(), "missing {f}");
        }
        let first = fs::read(out.dir.join("report.json")).unwrap();
        let again = run_cell(&spec, 1, false).unwrap();
        assert!(again.reused);
        let forced = run_cell(&spec, 1, true).unwrap();
        assert!(!forced.reused);
        assert_eq!(fs::read(forced.dir.join("report.json")).unwrap(), first);
    }

    #[test]
    fn nmf_cell_is_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = triangle_spec(dir.path());
        spec.method = Method::Nmf;
        let out = run_cell(&spec, 3, false).unwrap();
        assert_eq!(out.report.metadata.method, "nmf");
        assert_eq!(out.report.config["resolved"]["nmf"]["rank"], 2);
    }

    #[test]
    fn failure_record_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.txt");
        fs::write(&path, "0 1\n2 3\n").unwrap();
        let mut spec = ExperimentSpec::new(TopologySource::File { path, name: None });
        spec.out_dir = dir.path().join("out");
        let err = run_cell(&spec, 1, false).unwrap_err();
        assert!(matches!(err, Error::Disconnected { .. }));
        let record: FailureRecord =
            serde_json::from_str(&fs::read_to_string(cell_dir(&spec, 1).unwrap().join("failure.json")).unwrap())
                .unwrap();
        assert_eq!(record.stage, "routing");
    }

    #[test]
    fn cell_ids_depend_on_seed_and_spec_only() {
        let spec = ExperimentSpec::new(TopologySource::Generate {
            nodes: 10,
            avg_degree: 3.0,
            seed: None,
        });
        let mut moved = spec.clone();
        moved.out_dir = "elsewhere".into();
        moved.seeds = vec![5, 6];
        assert_eq!(cell_id(&spec, 1).unwrap(), cell_id(&moved, 1).unwrap());
        assert_ne!(cell_id(&spec, 1).unwrap(), cell_id(&spec, 2).unwrap());
        let mut other = spec.clone();
        other.ratio = 0.25;
        assert_ne!(cell_id(&spec, 1).unwrap(), cell_id(&other, 1).unwrap());
    }

    #[test]
    fn grid_counts_rows_and_summary_cells() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = ExperimentSpec::new(TopologySource::Generate {
            nodes: 12,
            avg_degree: 3.0,
            seed: None,
        });
        base.model.epochs = 5;
        base.seeds = vec![1, 2, 3];
        base.out_dir = dir.path().to_path_buf();
        let grid = GridSpec {
            base,
            grid: GridAxes {
                ratios: Some(vec![0.3, 0.5]),
                methods: Some(vec![Method::NeuTomo, Method::Nmf]),
                ..GridAxes::default()
            },
        };
        // 12 nodes: NMF rank clamps to 11
        let out = run_grid(&grid, 2, false).unwrap();
        assert_eq!(out.rows.len(), 12);
        assert_eq!(out.summary.len(), 4);
        assert!(out.rows.iter().all(|r| r.error.is_none()), "{:?}", out.rows);
        assert!(dir.path().join("rows.csv").exists());
        let table = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(table.contains("BPR-UD"));

        let mut empty = grid.clone();
        empty.grid.ratios = Some(vec![]);
        assert!(empty.expand().is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn spec_json_defaults() {
        let spec: GridSpec = serde_json::from_str(
            r#"{"topology": {"kind": "generate", "nodes": 20, "avg_degree": 4},
                "method": "neutomo+pat", "model": {"epochs": 10, "batch_size": "full"},
                "grid": {"gamma_factors": [2, 2.5, 3]}}"#,
        )
        .unwrap();
        assert_eq!(spec.base.method, Method::NeuTomoPat);
        assert_eq!(spec.base.model.batch_size, BatchSize::Full);
        assert_eq!(spec.base.ratio, 0.3);
        assert_eq!(spec.expand().unwrap().len(), 3);
        assert!(serde_json::from_str::<ExperimentSpec>(
            r#"{"topology": {"kind": "generate", "nodes": 20, "avg_degree": 4}, "bogus": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<GridSpec>(
            r#"{"topology": {"kind": "generate", "nodes": 20, "avg_degree": 4}, "bogus": 1}"#
        )
        .is_err());
        assert!(serde_json::from_str::<GridSpec>(
            r#"{"topology": {"kind": "generate", "nodes": 20, "avg_degree": 4}, "grid": {"ratio": [0.2]}}"#
        )
        .is_err());
        let round: GridSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(round, spec);
    }
}
