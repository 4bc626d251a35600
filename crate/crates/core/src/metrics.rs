//! Prediction accuracy against held-out truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::ReconstructionScore;

/// Absolute percentage error of every prediction.
pub fn per_pair_ape(predicted: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("MAPE over an empty set"));
    }
    predicted
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::invalid(format!("MAPE needs positive truth values, got {t}")));
            }
            Ok(100.0 * (p - t).abs() / t)
        })
        .collect()
}

/// Mean absolute percentage error, in percent.
pub fn mape(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    let ape = per_pair_ape(predicted, truth)?;
    Ok(mean(&ape))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Normalized histogram with unit-width bins `[k, k+1)`, keyed by `k`.
pub fn unit_histogram(values: &[f64]) -> BTreeMap<i64, f64> {
    let mut counts = BTreeMap::new();
    for &v in values {
        *counts.entry(v.floor() as i64).or_insert(0.0) += 1.0;
    }
    let total = values.len() as f64;
    counts.values_mut().for_each(|c| *c /= total);
    counts
}

/// L1 distance between the unit-width histograms of two samples; in `[0, 2]`.
pub fn distribution_distance(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.is_empty() || truth.is_empty() {
        return Err(Error::invalid("distribution distance of an empty sample"));
    }
    Ok(histogram_l1(&unit_histogram(predicted), &unit_histogram(truth)))
}

pub fn histogram_l1(a: &BTreeMap<i64, f64>, b: &BTreeMap<i64, f64>) -> f64 {
    let mut d = 0.0;
    for (k, &pa) in a {
        d += (pa - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &pb) in b {
        if !a.contains_key(k) {
            d += pb;
        }
    }
    d
}

/// Identifies one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetadata {
    pub network: String,
    pub regime: String,
    pub semantics: String,
    pub strategy: String,
    pub sampling: String,
    pub ratio: f64,
    pub method: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: CellMetadata,
    /// Percent, over held-out pairs.
    pub mape: f64,
    pub per_pair_ape: Vec<f64>,
    pub histogram_l1: f64,
    /// Unit-bin histograms `(bin, mass)` of predicted and true held-out values.
    pub predicted_histogram: Vec<(i64, f64)>,
    pub truth_histogram: Vec<(i64, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reconstruction: Vec<ReconstructionScore>,
    /// Full resolved configuration of the cell.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn evaluate(metadata: CellMetadata, predicted: &[f64], truth: &[f64]) -> Result<Self> {
        let per_pair_ape = per_pair_ape(predicted, truth)?;
        let ph = unit_histogram(predicted);
        let th = unit_histogram(truth);
        Ok(Self {
            metadata,
            mape: mean(&per_pair_ape),
            per_pair_ape,
            histogram_l1: histogram_l1(&ph, &th),
            predicted_histogram: ph.into_iter().collect(),
            truth_histogram: th.into_iter().collect(),
            reconstruction: Vec::new(),
            config: serde_json::Value::Null,
            details: BTreeMap::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: [&'static str; 10] = [
        "network",
        "regime",
        "semantics",
        "strategy",
        "sampling",
        "ratio",
        "method",
        "seed",
        "mape",
        "histogram_l1",
    ];

    /// Flat row matching [`EvalReport::CSV_HEADER`].
    pub fn csv_row(&self) -> Vec<String> {
        let m = &self.metadata;
        vec![
            m.network.clone(),
            m.regime.clone(),
            m.semantics.clone(),
            m.strategy.clone(),
            m.sampling.clone(),
            m.ratio.to_string(),
            m.method.clone(),
            m.seed.to_string(),
            self.mape.to_string(),
            self.histogram_l1.to_string(),
        ]
    }
}
