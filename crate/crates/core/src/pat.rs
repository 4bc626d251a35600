//! Path-augmented training.
//!
//! Measured pairs form a weighted graph `G′`. Each unmeasured pair gets an
//! initial estimate from its best path in `G′` (least sum for additive
//! metrics, least bottleneck for congestion). Training then alternates:
//!
//! 1. draw `⌊α·|T∖S|⌋` reachable unmeasured pairs,
//! 2. train on the measured pairs plus the drawn pairs at their current estimates,
//! 3. move every reachable estimate towards the model: `d ← β·d + (1−β)·NT(μ)`.
//!
//! Pairs whose endpoints lie in different components of `G′` are never drawn
//! and simply take the model prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{MetricSemantics, Topology};
use crate::neuralnet::{ModelConfig, TomographyModel, TrainingExample};
use crate::pairs::Pair;
use crate::predictions::{PredictionTable, Provenance};
use crate::routing::best_metrics_from;
use crate::sampling::{choose_distinct, MeasurementSet};
use crate::seeds::{stage_rng, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatConfig {
    /// Fraction of unmeasured pairs added per iteration.
    pub alpha: f64,
    /// Weight kept by the previous estimate in each update.
    pub beta: f64,
    pub iterations: usize,
    /// Re-initialize the model before every iteration instead of warm-starting.
    #[serde(default)]
    pub reset_each_iteration: bool,
}

impl Default for PatConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 0.6,
            iterations: 6,
            reset_each_iteration: false,
        }
    }
}

impl PatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in [0,1), got {}", self.beta)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("PAT needs at least one iteration"));
        }
        Ok(())
    }

    /// Epochs of each iteration: `⌊epochs / iterations⌋`, at least 50.
    pub fn epochs_per_iteration(&self, total_epochs: usize) -> usize {
        (total_epochs / self.iterations).max(50)
    }
}

/// `G′`: one edge per measured pair, weighted by its measured metric.
pub fn build_measurement_graph(ms: &MeasurementSet) -> Result<Topology> {
    let edges = ms.measured.iter().map(|(p, _)| (p.lo(), p.hi())).collect();
    let weights = ms.measured.iter().map(|(_, m)| *m).collect();
    Topology::new(ms.node_count, edges, weights)
}

/// Current estimate for every unmeasured pair (`None` = unreachable in `G′`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub entries: Vec<(Pair, Option<f64>)>,
}

impl EstimateTable {
    pub fn reachable(&self) -> impl Iterator<Item = (Pair, f64)> + '_ {
        self.entries.iter().filter_map(|&(p, v)| v.map(|v| (p, v)))
    }

    pub fn unreachable_count(&self) -> usize {
        self.entries.iter().filter(|(_, v)| v.is_none()).count()
    }
}

/// Best-path value in `G′` for each pair, evaluated from its lower endpoint.
pub fn initial_estimates(g_prime: &Topology, semantics: MetricSemantics, unmeasured: &[Pair]) -> EstimateTable {
    let mut sources: Vec<usize> = unmeasured.iter().map(|p| p.lo()).collect();
    sources.sort_unstable();
    sources.dedup();
    let mut best = vec![Vec::new(); g_prime.node_count()];
    let rows = crate::par::map_range(sources.len(), |k| best_metrics_from(g_prime, sources[k], semantics));
    for (s, row) in sources.into_iter().zip(rows) {
        best[s] = row;
    }
    EstimateTable {
        entries: unmeasured.iter().map(|&p| (p, best[p.lo()][p.hi()])).collect(),
    }
}

/// `β·current + (1−β)·predicted`.
#[inline]
pub fn soft_update(current: f64, predicted: f64, beta: f64) -> f64 {
    beta * current + (1.0 - beta) * predicted
}

#[derive(Debug, Clone)]
pub struct PatOutcome {
    pub model: TomographyModel,
    /// Final inferred metric for every unmeasured pair.
    pub predictions: PredictionTable,
    /// Estimates before the first iteration.
    pub initial: EstimateTable,
    /// Per-epoch training loss across all iterations.
    pub losses: Vec<f64>,
    /// Augmented pairs used by each iteration.
    pub augmented_per_iteration: Vec<usize>,
}

pub fn pat_train(
    ms: &MeasurementSet,
    config: &PatConfig,
    model_config: &ModelConfig,
    semantics: MetricSemantics,
) -> Result<PatOutcome> {
    config.validate()?;
    let unmeasured = ms.heldout_pairs();
    let g_prime = build_measurement_graph(ms)?;
    let initial = initial_estimates(&g_prime, semantics, &unmeasured);

    let measured: Vec<TrainingExample> = ms
        .measured
        .iter()
        .map(|&(p, m)| TrainingExample::new(p, m))
        .collect::<Result<_>>()?;
    let reachable: Vec<usize> = initial
        .entries
        .iter()
        .enumerate()
        .filter(|(_, (_, v))| v.is_some())
        .map(|(i, _)| i)
        .collect();
    let draw = ((config.alpha * unmeasured.len() as f64).floor() as usize).min(reachable.len());
    let epochs = config.epochs_per_iteration(model_config.epochs);

    let mut estimates: Vec<f64> = initial.entries.iter().map(|(_, v)| v.unwrap_or(f64::NAN)).collect();
    let mut rng = stage_rng(model_config.seed, Stage::Augmentation);
    let mut model = TomographyModel::new(model_config.clone())?;
    let mut losses = Vec::new();
    let mut augmented_per_iteration = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let chosen = choose_distinct(&reachable, draw, &mut rng);
        let mut data = measured.clone();
        for &i in &chosen {
            // soft updates can pull an estimate below zero; it is still a valid regression target
            data.push(TrainingExample {
                pair: unmeasured[i],
                target: estimates[i],
            });
        }
        augmented_per_iteration.push(chosen.len());
        if config.reset_each_iteration && iteration > 0 {
            model = TomographyModel::new(model_config.clone())?;
        }
        if iteration == 0 || config.reset_each_iteration {
            model.set_target_scale_for(&data);
        }
        losses.extend(model.fit(&data, epochs)?);

        let latest_prediction = model.predict_values(&unmeasured)?;
        for ((est, &nt), (_, initial)) in estimates.iter_mut().zip(&latest_prediction).zip(&initial.entries) {
            *est = if initial.is_some() {
                soft_update(*est, nt, config.beta)
            } else {
                nt
            };
        }
    }

    let rows = unmeasured
        .iter()
        .zip(&estimates)
        .zip(&initial.entries)
        .map(|((&pair, &value), (_, init))| crate::predictions::Prediction {
            pair,
            value,
            source: if init.is_some() {
                Provenance::Pat
            } else {
                Provenance::Model
            },
        })
        .collect();
    Ok(PatOutcome {
        model,
        predictions: PredictionTable { rows },
        initial,
        losses,
        augmented_per_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::all_pairs;
    use crate::pairs::PairTable;
    use crate::routing::GroundTruthTable;

    fn pair(a: usize, b: usize) -> Pair {
        Pair::new(a, b).unwrap()
    }

    fn set_from(n: usize, measured: &[(usize, usize, f64)]) -> MeasurementSet {
        let mut metrics = PairTable::filled(n, 1.0);
        for &(a, b, m) in measured {
            metrics.set(pair(a, b), m);
        }
        let gt = GroundTruthTable {
            hops: PairTable::filled(n, 1),
            metrics,
        };
        let pairs: Vec<Pair> = measured.iter().map(|&(a, b, _)| pair(a, b)).collect();
        MeasurementSet::from_measured(&gt, &pairs).unwrap()
    }

    #[test]
    fn measurement_graph_is_a_path() {
        let ms = set_from(3, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let g = build_measurement_graph(&ms).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.link_metric(0, 1), Some(2.0));
        assert!(g.is_connected());

        let full = set_from(4, &all_pairs(4).map(|p| (p.lo(), p.hi(), 1.0)).collect::<Vec<_>>());
        assert_eq!(build_measurement_graph(&full).unwrap().edge_count(), 6);
    }

    #[test]
    fn estimates_on_path_and_components() {
        let ms = set_from(3, &[(0, 1, 2.0), (1, 2, 3.0)]);
        let g = build_measurement_graph(&ms).unwrap();
        let add = initial_estimates(&g, MetricSemantics::Additive, &[pair(0, 2)]);
        assert_eq!(add.entries, vec![(pair(0, 2), Some(5.0))]);
        let con = initial_estimates(&g, MetricSemantics::Congestion, &[pair(0, 2)]);
        assert_eq!(con.entries, vec![(pair(0, 2), Some(3.0))]);

        let split = set_from(4, &[(0, 1, 2.0), (2, 3, 3.0)]);
        let g = build_measurement_graph(&split).unwrap();
        let est = initial_estimates(&g, MetricSemantics::Additive, &[pair(0, 2), pair(1, 3)]);
        assert_eq!(est.unreachable_count(), 2);
    }

    #[test]
    fn soft_update_arithmetic() {
        assert_eq!(soft_update(5.0, 10.0, 0.6), 0.6 * 5.0 + 0.4 * 10.0);
        assert!((soft_update(5.0, 10.0, 0.6) - 7.0).abs() < 1e-12);
        assert_eq!(soft_update(5.0, 10.0, 0.0), 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(PatConfig::default().validate().is_ok());
        let bad = |alpha, beta, iterations| PatConfig {
            alpha,
            beta,
            iterations,
            reset_each_iteration: false,
        };
        assert!(bad(0.0, 0.5, 1).validate().is_err());
        assert!(bad(0.1, 1.0, 1).validate().is_err());
        assert!(bad(0.1, 0.5, 0).validate().is_err());
        assert_eq!(PatConfig::default().epochs_per_iteration(1000), 166);
        assert_eq!(PatConfig::default().epochs_per_iteration(120), 50);
    }

    #[test]
    fn tiny_alpha_draws_nothing() {
        // 5-node ring measured, 5 unmeasured pairs: ⌊0.1·5⌋ = 0
        let ms = set_from(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 1.0)]);
        let mut mc = ModelConfig::new(5);
        mc.epochs = 100;
        let cfg = PatConfig {
            alpha: 0.1,
            beta: 0.5,
            iterations: 2,
            reset_each_iteration: false,
        };
        let out = pat_train(&ms, &cfg, &mc, MetricSemantics::Additive).unwrap();
        assert_eq!(out.augmented_per_iteration, vec![0, 0]);
        assert_eq!(out.losses.len(), 100);
        assert_eq!(out.predictions.len(), 5);
        assert!(out.predictions.rows.iter().all(|r| r.source == Provenance::Pat));
    }
}
