//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes a JSON request and returns a JSON response, so the page
//! stays plain JavaScript. The native functions behind them are plain Rust and
//! tested without a browser.

use neutomo::experiment::{build_network, measure, ExperimentSpec, TopologySource};
use neutomo::metrics::EvalReport;
use neutomo::netmodel::parse_edge_list;
use neutomo::neuralnet::{train, TrainingExample};
use neutomo::nmf::{nmf_complete, NmfConfig};
use neutomo::pat::{pat_train, PatConfig};
use neutomo::reconstruct::{merge_metrics, reconstruct, score};
use neutomo::routing::route_all_pairs;
use neutomo::seeds::{stage_seed, Stage};
use neutomo::{LinkMetricRegime, MetricSemantics, Pair, RoutingStrategy, SamplingMethod, Topology};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Network and measurement settings shared by every request.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct NetworkRequest {
    pub nodes: usize,
    pub avg_degree: f64,
    /// Edge-list text (`u v [w]` per line); replaces the generator when set.
    pub edge_list: Option<String>,
    pub regime: LinkMetricRegime,
    pub semantics: MetricSemantics,
    pub strategy: RoutingStrategy,
    pub sampling: SamplingMethod,
    pub ratio: f64,
    pub seed: u64,
}

impl Default for NetworkRequest {
    fn default() -> Self {
        Self {
            nodes: 30,
            avg_degree: 3.0,
            edge_list: None,
            regime: LinkMetricRegime::uniform_default(),
            semantics: MetricSemantics::Additive,
            strategy: RoutingStrategy::Bpr,
            sampling: SamplingMethod::Random,
            ratio: 0.3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct TrainRequest {
    #[serde(flatten)]
    pub network: NetworkRequest,
    pub epochs: usize,
    pub learning_rate: f64,
    pub gamma_factor: f64,
    pub pat: bool,
}

impl Default for TrainRequest {
    fn default() -> Self {
        Self {
            network: NetworkRequest::default(),
            epochs: 300,
            learning_rate: 1e-2,
            gamma_factor: 2.5,
            pat: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct Link {
    a: usize,
    b: usize,
    metric: f64,
}

fn spec_for(req: &NetworkRequest) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(TopologySource::Generate {
        nodes: req.nodes,
        avg_degree: req.avg_degree,
        seed: None,
    });
    spec.regime = req.regime;
    spec.semantics = req.semantics;
    spec.strategy = req.strategy;
    spec.sampling = req.sampling;
    spec.ratio = req.ratio;
    spec
}

fn network(req: &NetworkRequest) -> Result<(ExperimentSpec, Topology), String> {
    let spec = spec_for(req);
    spec.validate().map_err(|e| e.to_string())?;
    let t = match &req.edge_list {
        Some(text) if !text.trim().is_empty() => {
            let base = parse_edge_list(text, "pasted".as_ref()).map_err(|e| e.to_string())?;
            neutomo::netmodel::assign_link_metrics(&base, req.regime, stage_seed(req.seed, Stage::LinkMetrics))
                .map_err(|e| e.to_string())?
        }
        _ => build_network(&spec, req.seed).map_err(|e| e.to_string())?,
    };
    Ok((spec, t))
}

fn links(t: &Topology) -> Vec<Link> {
    t.edges()
        .iter()
        .zip(t.metrics())
        .map(|(&(a, b), &metric)| Link { a, b, metric })
        .collect()
}

/// Topology, links and the measured/held-out split.
pub fn simulate_json(request: &str) -> Result<String, String> {
    let req: NetworkRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let (spec, t) = network(&req)?;
    let gt = route_all_pairs(&t, req.strategy, req.semantics).map_err(|e| e.to_string())?;
    let ms = measure(&spec, &gt, req.seed).map_err(|e| e.to_string())?;
    let pairs =
        |rows: &[(Pair, f64)]| -> Vec<(usize, usize, f64)> { rows.iter().map(|(p, v)| (p.lo(), p.hi(), *v)).collect() };
    Ok(json!({
        "nodes": t.node_count(),
        "labels": t.labels(),
        "links": links(&t),
        "measured": pairs(&ms.measured),
        "heldout": pairs(&ms.heldout),
        "monitors": ms.monitors,
    })
    .to_string())
}

/// Trains the model (optionally with path augmentation) and compares it with NMF on the held-out pairs.
pub fn train_json(request: &str) -> Result<String, String> {
    let req: TrainRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let (spec, t) = network(&req.network)?;
    let seed = req.network.seed;
    let gt = route_all_pairs(&t, req.network.strategy, req.network.semantics).map_err(|e| e.to_string())?;
    let ms = measure(&spec, &gt, seed).map_err(|e| e.to_string())?;
    let n = t.node_count();

    let mut model = spec.model.clone();
    model.epochs = req.epochs;
    model.learning_rate = req.learning_rate;
    model.gamma_factor = req.gamma_factor;
    model.normalize_targets = true;
    let cfg = model.resolve(n, seed).map_err(|e| e.to_string())?;

    let heldout = ms.heldout_pairs();
    let truth: Vec<f64> = ms.heldout.iter().map(|(_, v)| *v).collect();
    let (predicted, losses) = if req.pat {
        let out = pat_train(&ms, &PatConfig::default(), &cfg, req.network.semantics).map_err(|e| e.to_string())?;
        (out.predictions.values(), out.losses)
    } else {
        let examples: Vec<TrainingExample> = ms
            .measured
            .iter()
            .map(|&(p, m)| TrainingExample::new(p, m))
            .collect::<neutomo::Result<_>>()
            .map_err(|e| e.to_string())?;
        let run = train(&cfg, &examples).map_err(|e| e.to_string())?;
        (
            run.model.predict_values(&heldout).map_err(|e| e.to_string())?,
            run.losses,
        )
    };
    let nmf_cfg = NmfConfig {
        rank: spec.nmf.rank.min(n - 1),
        seed,
        ..NmfConfig::default()
    };
    let (nmf_table, _) = nmf_complete(&ms.measured, n, &nmf_cfg, &heldout).map_err(|e| e.to_string())?;
    let nmf_values = nmf_table.values();

    let metadata = |method: &str| neutomo::metrics::CellMetadata {
        network: "demo".into(),
        regime: req.network.regime.short_name().into(),
        semantics: format!("{:?}", req.network.semantics).to_lowercase(),
        strategy: req.network.strategy.short_name().into(),
        sampling: req.network.sampling.short_name().into(),
        ratio: req.network.ratio,
        method: method.into(),
        seed,
    };
    let method = if req.pat { "neutomo+pat" } else { "neutomo" };
    let ours = EvalReport::evaluate(metadata(method), &predicted, &truth).map_err(|e| e.to_string())?;
    let nmf = EvalReport::evaluate(metadata("nmf"), &nmf_values, &truth).map_err(|e| e.to_string())?;
    Ok(json!({
        "method": method,
        "losses": losses,
        "mape": ours.mape,
        "histogram_l1": ours.histogram_l1,
        "nmf_mape": nmf.mape,
        "nmf_histogram_l1": nmf.histogram_l1,
        "truth_histogram": ours.truth_histogram,
        "predicted_histogram": ours.predicted_histogram,
        "nmf_histogram": nmf.predicted_histogram,
        "truth": truth,
        "predicted": predicted,
        "nmf": nmf_values,
    })
    .to_string())
}

/// Hop-count task: predicts unmeasured hop counts and scores `A^(1..=max_m)`.
pub fn reconstruct_json(request: &str) -> Result<String, String> {
    #[derive(Deserialize)]
    #[serde(default)]
    struct Req {
        #[serde(flatten)]
        train: TrainRequest,
        max_m: u32,
    }
    impl Default for Req {
        fn default() -> Self {
            Self {
                train: TrainRequest::default(),
                max_m: 4,
            }
        }
    }
    let mut req: Req = serde_json::from_str(request).map_err(|e| e.to_string())?;
    req.train.network.regime = LinkMetricRegime::Unweighted;
    req.train.network.semantics = MetricSemantics::Additive;
    let (spec, t) = network(&req.train.network)?;
    let seed = req.train.network.seed;
    let gt = route_all_pairs(&t, req.train.network.strategy, MetricSemantics::Additive).map_err(|e| e.to_string())?;
    let ms = measure(&spec, &gt, seed).map_err(|e| e.to_string())?;
    let n = t.node_count();
    let mut model = spec.model.clone();
    model.epochs = req.train.epochs;
    model.learning_rate = req.train.learning_rate;
    model.gamma_factor = req.train.gamma_factor;
    model.normalize_targets = true;
    let cfg = model.resolve(n, seed).map_err(|e| e.to_string())?;
    let examples: Vec<TrainingExample> = ms
        .measured
        .iter()
        .map(|&(p, m)| TrainingExample::new(p, m))
        .collect::<neutomo::Result<_>>()
        .map_err(|e| e.to_string())?;
    let run = train(&cfg, &examples).map_err(|e| e.to_string())?;
    let heldout = ms.heldout_pairs();
    let predicted = run.model.predict_values(&heldout).map_err(|e| e.to_string())?;
    let inferred: Vec<(Pair, f64)> = heldout.iter().copied().zip(predicted).collect();
    let merged = merge_metrics(n, &ms.measured, &inferred).map_err(|e| e.to_string())?;
    let truth = gt.hop_metrics();
    let mut scores = Vec::new();
    let mut predicted_links = Vec::new();
    for m in 1..=req.max_m.max(1) {
        let a = reconstruct(&merged, m);
        let s = score(&a, &reconstruct(&truth, m)).map_err(|e| e.to_string())?;
        if m == 1 {
            predicted_links = a.nonzero_pairs().iter().map(|p| (p.lo(), p.hi())).collect();
        }
        scores.push(s);
    }
    Ok(json!({
        "nodes": n,
        "links": links(&t),
        "predicted_links": predicted_links,
        "scores": scores,
    })
    .to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(request: &str) -> Result<String, JsValue> {
    to_js(simulate_json(request))
}

#[wasm_bindgen(js_name = trainAndPredict)]
pub fn train_and_predict(request: &str) -> Result<String, JsValue> {
    to_js(train_json(request))
}

#[wasm_bindgen(js_name = reconstructTopology)]
pub fn reconstruct_topology(request: &str) -> Result<String, JsValue> {
    to_js(reconstruct_json(request))
}
