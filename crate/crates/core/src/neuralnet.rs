//! The tomography network: a sigmoid MLP from a two-hot pair encoding to one
//! scalar path metric.
//!
//! Layout for `n` nodes, width `γ` and `k` hidden layers:
//!
//! ```text
//! v0 (n, two ones) → σ(v0·M1 + b1) → σ(v1·M2 + b2) → … → v_k · m
//! ```
//!
//! `M1` is `n×γ`, later `M_j` are `γ×γ`, and the output layer is a single
//! linear neuron with weights `m` and no bias. Training minimizes MSE with Adam.

use std::fs;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::Pair;
use crate::predictions::{PredictionTable, Provenance};
use crate::seeds::{stage_rng, Stage, StageRng};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Mini-batch size: a fixed count or the whole training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Fixed(usize),
    Full,
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Fixed(b) => s.serialize_u64(*b as u64),
            BatchSize::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(b) => Ok(BatchSize::Fixed(b)),
            Raw::Word(w) if w.eq_ignore_ascii_case("full") => Ok(BatchSize::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "batch size must be a positive integer or \"full\", got {w:?}"
            ))),
        }
    }
}

impl std::str::FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(BatchSize::Full);
        }
        s.parse()
            .map(BatchSize::Fixed)
            .map_err(|_| Error::invalid(format!("invalid batch size {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input width: number of nodes.
    pub n: usize,
    /// Neurons per hidden layer.
    pub gamma: usize,
    /// Number of hidden layers.
    pub hidden_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub seed: u64,
    /// Train on `target / max(target)` and scale predictions back.
    #[serde(default)]
    pub normalize_targets: bool,
}

/// Default hidden width, `⌈2.5 n⌉`.
pub fn default_gamma(n: usize) -> usize {
    gamma_for(n, 2.5)
}

/// `⌈factor · n⌉`.
pub fn gamma_for(n: usize, factor: f64) -> usize {
    ((factor * n as f64) - 1e-9).ceil().max(1.0) as usize
}

impl ModelConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            gamma: default_gamma(n),
            hidden_layers: 2,
            epochs: 1000,
            learning_rate: 1e-3,
            batch_size: BatchSize::Fixed(64),
            seed: 0,
            normalize_targets: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("model needs at least two input nodes"));
        }
        if self.gamma == 0 || self.hidden_layers == 0 {
            return Err(Error::invalid("gamma and hidden layer count must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == BatchSize::Fixed(0) {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// One measured (or augmented) pair and its target metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingExample {
    pub pair: Pair,
    pub target: f64,
}

impl TrainingExample {
    pub fn new(pair: Pair, target: f64) -> Result<Self> {
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::invalid(format!(
                "training target for {pair} must be positive, got {target}"
            )));
        }
        Ok(Self { pair, target })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in × fan_out`; inputs are row vectors.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable tensors; also used to hold gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub hidden: Vec<DenseLayer>,
    /// Output weights `m` (length `γ`).
    pub output: Array1<f64>,
}

impl Parameters {
    pub fn zeros(n: usize, gamma: usize, hidden_layers: usize) -> Self {
        let hidden = (0..hidden_layers)
            .map(|j| DenseLayer {
                weights: Array2::zeros((if j == 0 { n } else { gamma }, gamma)),
                bias: Array1::zeros(gamma),
            })
            .collect();
        Self {
            hidden,
            output: Array1::zeros(gamma),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            hidden: self
                .hidden
                .iter()
                .map(|l| DenseLayer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            output: Array1::zeros(self.output.raw_dim()),
        }
    }

    /// Every tensor as a flat slice, in a fixed order: `M1, b1, …, Mk, bk, m`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.hidden.len() + 1);
        for l in &self.hidden {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out.push(self.output.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.hidden.len() + 1);
        for l in &mut self.hidden {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.output.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for j in 1..=self.hidden.len() {
            names.push(format!("M{j}"));
            names.push(format!("b{j}"));
        }
        names.push("m".into());
        names
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Parameters,
    pub second: Parameters,
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct TomographyModel {
    config: ModelConfig,
    params: Parameters,
    adam: AdamState,
    /// Predictions are `network output × target_scale`.
    target_scale: f64,
    batch_rng: StageRng,
}

impl PartialEq for TomographyModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.adam == other.adam
            && self.target_scale == other.target_scale
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Two-hot input vector for a pair: ones at both endpoints.
pub fn encode_pair(i: usize, j: usize, n: usize) -> Result<Array1<f64>> {
    if i == j {
        return Err(Error::invalid(format!("cannot encode pair ({i},{i})")));
    }
    if i >= n || j >= n {
        return Err(Error::Dimension {
            expected: n,
            actual: i.max(j) + 1,
        });
    }
    let mut v = Array1::zeros(n);
    v[i] = 1.0;
    v[j] = 1.0;
    Ok(v)
}

/// Mean squared error.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::invalid("MSE of an empty batch"));
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

/// Activations of one batch, kept for the backward pass.
struct BatchTrace {
    /// `hidden[j]` is `B × γ`, the output of hidden layer `j + 1`.
    hidden: Vec<Array2<f64>>,
    output: Array1<f64>,
}

/// Result of one [`TomographyModel::fit`] call.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: TomographyModel,
    /// Mean training MSE of every epoch, in original target units squared.
    pub losses: Vec<f64>,
}

impl TomographyModel {
    /// Fresh model with Glorot-uniform weights and zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Parameters::zeros(config.n, config.gamma, config.hidden_layers);
        let mut rng = stage_rng(config.seed, Stage::Init);
        for layer in &mut params.hidden {
            let (fan_in, fan_out) = layer.weights.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.gen_range(-limit..=limit));
        }
        let limit = (6.0 / (config.gamma + 1) as f64).sqrt();
        params.output.mapv_inplace(|_| rng.gen_range(-limit..=limit));
        Ok(Self::from_parameters(config, params))
    }

    /// Wraps explicit parameters (fresh Adam state, unit target scale).
    pub fn from_parameters(config: ModelConfig, params: Parameters) -> Self {
        let adam = AdamState {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        };
        let batch_rng = stage_rng(config.seed, Stage::Batching);
        Self {
            config,
            params,
            adam,
            target_scale: 1.0,
            batch_rng,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    /// With `normalize_targets`, scales outputs by the largest target in `examples`.
    pub fn set_target_scale_for(&mut self, examples: &[TrainingExample]) {
        if self.config.normalize_targets {
            let max = examples.iter().map(|e| e.target).fold(0.0, f64::max);
            if max > 0.0 {
                self.target_scale = max;
            }
        }
    }

    fn check_pair(&self, pair: Pair) -> Result<()> {
        if pair.hi() >= self.config.n {
            return Err(Error::Dimension {
                expected: self.config.n,
                actual: pair.hi() + 1,
            });
        }
        Ok(())
    }

    /// Hidden activations and output for an arbitrary input vector.
    pub fn forward_trace(&self, v0: ArrayView1<f64>) -> Result<(Vec<Array1<f64>>, f64)> {
        if v0.len() != self.config.n {
            return Err(Error::Dimension {
                expected: self.config.n,
                actual: v0.len(),
            });
        }
        let mut hidden = Vec::with_capacity(self.params.hidden.len());
        let mut current = v0.to_owned();
        for layer in &self.params.hidden {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            z.mapv_inplace(sigmoid);
            hidden.push(z.clone());
            current = z;
        }
        let out = current.dot(&self.params.output);
        Ok((hidden, out))
    }

    /// Raw network output `v_k · m` for an input vector (no target scaling).
    pub fn forward(&self, v0: ArrayView1<f64>) -> Result<f64> {
        self.forward_trace(v0).map(|(_, out)| out)
    }

    fn forward_batch(&self, pairs: &[Pair]) -> BatchTrace {
        let gamma = self.config.gamma;
        let first = &self.params.hidden[0];
        let mut h = Array2::zeros((pairs.len(), gamma));
        for (mut row, pair) in h.axis_iter_mut(Axis(0)).zip(pairs) {
            let a = first.weights.row(pair.lo());
            let b = first.weights.row(pair.hi());
            for (((r, &x), &y), &c) in row.iter_mut().zip(a).zip(b).zip(&first.bias) {
                *r = sigmoid(x + y + c);
            }
        }
        let mut hidden = Vec::with_capacity(self.params.hidden.len());
        hidden.push(h);
        for layer in &self.params.hidden[1..] {
            let prev = hidden.last().unwrap();
            let mut z = Array2::zeros((pairs.len(), gamma));
            general_mat_mul(1.0, prev, &layer.weights, 0.0, &mut z);
            for mut row in z.axis_iter_mut(Axis(0)) {
                for (r, &c) in row.iter_mut().zip(&layer.bias) {
                    *r = sigmoid(*r + c);
                }
            }
            hidden.push(z);
        }
        let output = hidden.last().unwrap().dot(&self.params.output);
        BatchTrace { hidden, output }
    }

    /// MSE on `batch` (targets divided by the model's target scale) and its
    /// gradient with respect to every parameter.
    pub fn backward(&self, batch: &[TrainingExample]) -> Result<(f64, Parameters)> {
        if batch.is_empty() {
            return Err(Error::invalid("backward pass on an empty batch"));
        }
        for ex in batch {
            self.check_pair(ex.pair)?;
        }
        let pairs: Vec<Pair> = batch.iter().map(|e| e.pair).collect();
        let trace = self.forward_batch(&pairs);
        if !trace.output.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        let bsz = batch.len() as f64;
        let residual: Array1<f64> = trace
            .output
            .iter()
            .zip(batch)
            .map(|(&o, e)| o - e.target / self.target_scale)
            .collect();
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / bsz;
        let d_out = residual.mapv(|r| 2.0 * r / bsz);

        let k = self.params.hidden.len();
        let mut grads = self.params.zeros_like();
        let last = &trace.hidden[k - 1];
        grads.output = last.t().dot(&d_out);

        // dL/dH_k = d_out ⊗ m
        let mut d_h = Array2::zeros(last.raw_dim());
        for (mut row, &d) in d_h.axis_iter_mut(Axis(0)).zip(&d_out) {
            row.scaled_add(d, &self.params.output);
        }
        for j in (0..k).rev() {
            let h = &trace.hidden[j];
            // through the sigmoid: dZ = dH ∘ h(1-h)
            let mut d_z = d_h;
            d_z.zip_mut_with(h, |d, &a| *d *= a * (1.0 - a));
            grads.hidden[j].bias = d_z.sum_axis(Axis(0));
            if j == 0 {
                let dw = &mut grads.hidden[0].weights;
                for (row, pair) in d_z.axis_iter(Axis(0)).zip(&pairs) {
                    dw.row_mut(pair.lo()).scaled_add(1.0, &row);
                    dw.row_mut(pair.hi()).scaled_add(1.0, &row);
                }
                break;
            }
            let prev = &trace.hidden[j - 1];
            general_mat_mul(1.0, &prev.t(), &d_z, 0.0, &mut grads.hidden[j].weights);
            let mut d_prev = Array2::zeros(prev.raw_dim());
            general_mat_mul(1.0, &d_z, &self.params.hidden[j].weights.t(), 0.0, &mut d_prev);
            d_h = d_prev;
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients".into()));
        }
        Ok((loss, grads))
    }

    /// One Adam update with bias-corrected moments.
    pub fn adam_step(&mut self, grads: &Parameters, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients passed to Adam".into()));
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let params = self.params.tensors_mut();
        let firsts = self.adam.first.tensors_mut();
        let seconds = self.adam.second.tensors_mut();
        let gs = grads.tensors();
        for (((p, m), v), g) in params.into_iter().zip(firsts).zip(seconds).zip(gs) {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
        Ok(())
    }

    /// Continues training for `epochs` passes over `examples` (shuffled
    /// mini-batches from the model's batching stream). Returns per-epoch MSE
    /// in original target units.
    pub fn fit(&mut self, examples: &[TrainingExample], epochs: usize) -> Result<Vec<f64>> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        for ex in examples {
            self.check_pair(ex.pair)?;
        }
        let batch = match self.config.batch_size {
            BatchSize::Fixed(b) => b.min(examples.len()),
            BatchSize::Full => examples.len(),
        };
        let lr = self.config.learning_rate;
        let scale2 = self.target_scale * self.target_scale;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut losses = Vec::with_capacity(epochs);
        let mut chunk = Vec::with_capacity(batch);
        for epoch in 1..=epochs {
            order.shuffle(&mut self.batch_rng);
            let mut total = 0.0;
            for idx in order.chunks(batch) {
                chunk.clear();
                chunk.extend(idx.iter().map(|&i| examples[i]));
                let (loss, grads) = match self.backward(&chunk) {
                    Ok(r) => r,
                    Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                    Err(e) => return Err(e),
                };
                total += loss * chunk.len() as f64;
                self.adam_step(&grads, lr)
                    .map_err(|_| Error::Diverged { epoch, loss: f64::NAN })?;
            }
            let epoch_loss = total / examples.len() as f64 * scale2;
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: epoch_loss,
                });
            }
            losses.push(epoch_loss);
        }
        Ok(losses)
    }

    /// Predicted metric (in target units) for each pair.
    pub fn predict_values(&self, pairs: &[Pair]) -> Result<Vec<f64>> {
        for &p in pairs {
            self.check_pair(p)?;
        }
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(512) {
            let trace = self.forward_batch(chunk);
            out.extend(trace.output.iter().map(|o| o * self.target_scale));
        }
        Ok(out)
    }

    pub fn predict(&self, pairs: &[Pair]) -> Result<PredictionTable> {
        let values = self.predict_values(pairs)?;
        Ok(PredictionTable::from_values(pairs, &values, Provenance::Model))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&Checkpoint::from_model(self))?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        ckpt.into_model()
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint::from_model(self))?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        serde_json::from_str::<Checkpoint>(text)?.into_model()
    }
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn train(config: &ModelConfig, examples: &[TrainingExample]) -> Result<TrainingRun> {
    let mut model = TomographyModel::new(config.clone())?;
    model.set_target_scale_for(examples);
    let losses = model.fit(examples, config.epochs)?;
    Ok(TrainingRun { model, losses })
}

pub const CHECKPOINT_FORMAT: &str = "neutomo-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParameterRecord {
    hidden: Vec<(TensorRecord, Vec<f64>)>,
    output: Vec<f64>,
}

impl ParameterRecord {
    fn from_params(p: &Parameters) -> Self {
        Self {
            hidden: p
                .hidden
                .iter()
                .map(|l| {
                    let (rows, cols) = l.weights.dim();
                    (
                        TensorRecord {
                            rows,
                            cols,
                            data: l.weights.iter().copied().collect(),
                        },
                        l.bias.to_vec(),
                    )
                })
                .collect(),
            output: p.output.to_vec(),
        }
    }

    fn into_params(self) -> Result<Parameters> {
        let hidden = self
            .hidden
            .into_iter()
            .map(|(w, b)| {
                let weights = Array2::from_shape_vec((w.rows, w.cols), w.data)
                    .map_err(|e| Error::invalid(format!("bad tensor shape: {e}")))?;
                Ok(DenseLayer {
                    weights,
                    bias: Array1::from(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Parameters {
            hidden,
            output: Array1::from(self.output),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    target_scale: f64,
    parameters: ParameterRecord,
    adam_step: u64,
    adam_first: ParameterRecord,
    adam_second: ParameterRecord,
}

impl Checkpoint {
    fn from_model(m: &TomographyModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: m.config.clone(),
            target_scale: m.target_scale,
            parameters: ParameterRecord::from_params(&m.params),
            adam_step: m.adam.step,
            adam_first: ParameterRecord::from_params(&m.adam.first),
            adam_second: ParameterRecord::from_params(&m.adam.second),
        }
    }

    fn into_model(self) -> Result<TomographyModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let params = self.parameters.into_params()?;
        let expected = Parameters::zeros(self.config.n, self.config.gamma, self.config.hidden_layers);
        let shapes_match = params.hidden.len() == expected.hidden.len()
            && params
                .tensors()
                .iter()
                .zip(expected.tensors())
                .all(|(a, b)| a.len() == b.len());
        if !shapes_match {
            return Err(Error::invalid("checkpoint tensors do not match its config"));
        }
        let mut model = TomographyModel::from_parameters(self.config, params);
        model.target_scale = self.target_scale;
        model.adam = AdamState {
            first: self.adam_first.into_params()?,
            second: self.adam_second.into_params()?,
            step: self.adam_step,
        };
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair(a: usize, b: usize) -> Pair {
        Pair::new(a, b).unwrap()
    }

    fn small_config(n: usize, gamma: usize, k: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            gamma,
            hidden_layers: k,
            seed,
            ..ModelConfig::new(n)
        }
    }

    #[test]
    fn defaults() {
        let c = ModelConfig::new(100);
        assert_eq!(c.gamma, 250);
        assert_eq!(c.hidden_layers, 2);
        assert_eq!(c.epochs, 1000);
        assert_eq!(ModelConfig::new(5).gamma, 13);
        assert_eq!(gamma_for(100, 2.0), 200);
        assert_eq!(gamma_for(100, 3.0), 300);
    }

    #[test]
    fn encoding() {
        assert_eq!(encode_pair(0, 2, 4).unwrap(), array![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(encode_pair(3, 1, 4).unwrap(), array![0.0, 1.0, 0.0, 1.0]);
        assert!(encode_pair(0, 0, 4).is_err());
        assert!(encode_pair(0, 4, 4).is_err());
    }

    #[test]
    fn zero_parameter_model() {
        let config = small_config(3, 1, 1, 0);
        let mut params = Parameters::zeros(3, 1, 1);
        params.output[0] = 2.0;
        let model = TomographyModel::from_parameters(config, params);
        let v0 = encode_pair(0, 1, 3).unwrap();
        assert_eq!(model.forward(v0.view()).unwrap(), 1.0);
    }

    #[test]
    fn output_is_linear_in_m() {
        let model = TomographyModel::new(small_config(6, 5, 2, 3)).unwrap();
        let v0 = encode_pair(1, 4, 6).unwrap();
        let base = model.forward(v0.view()).unwrap();
        let mut scaled = model.clone();
        scaled.parameters_mut().output.mapv_inplace(|x| 3.5 * x);
        let out = scaled.forward(v0.view()).unwrap();
        assert!((out - 3.5 * base).abs() < 1e-12);
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let model = TomographyModel::new(small_config(7, 6, 3, 1)).unwrap();
        let pairs = [pair(0, 1), pair(2, 6), pair(3, 5)];
        let batch = model.predict_values(&pairs).unwrap();
        for (p, b) in pairs.iter().zip(batch) {
            let v0 = encode_pair(p.lo(), p.hi(), 7).unwrap();
            assert!((model.forward(v0.view()).unwrap() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mse() {
        assert_eq!(loss_mse(&[1.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(loss_mse(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(loss_mse(&[], &[]).is_err());
        assert!(loss_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let model = TomographyModel::new(small_config(5, 4, 2, 2)).unwrap();
        let pairs = [pair(0, 1), pair(2, 4)];
        let preds = model.predict_values(&pairs).unwrap();
        let batch: Vec<TrainingExample> = pairs
            .iter()
            .zip(&preds)
            .map(|(&p, &t)| TrainingExample { pair: p, target: t })
            .collect();
        let (loss, grads) = model.backward(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn output_gradient_closed_form() {
        let model = TomographyModel::new(small_config(6, 5, 2, 4)).unwrap();
        let batch = [
            TrainingExample::new(pair(0, 3), 4.0).unwrap(),
            TrainingExample::new(pair(1, 5), 7.5).unwrap(),
        ];
        let (_, grads) = model.backward(&batch).unwrap();
        let mut expected = Array1::<f64>::zeros(5);
        for ex in &batch {
            let v0 = encode_pair(ex.pair.lo(), ex.pair.hi(), 6).unwrap();
            let (hidden, out) = model.forward_trace(v0.view()).unwrap();
            expected.scaled_add(2.0 * (out - ex.target) / 2.0, hidden.last().unwrap());
        }
        for (a, b) in grads.output.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut model = TomographyModel::new(small_config(4, 3, 2, 0)).unwrap();
        let before = model.parameters().clone();
        let zeros = before.zeros_like();
        model.adam_step(&zeros, 1e-3).unwrap();
        assert_eq!(model.parameters(), &before);
        assert_eq!(model.adam_state().step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut model = TomographyModel::new(small_config(4, 3, 1, 0)).unwrap();
        let before = model.parameters().clone();
        let mut grads = before.zeros_like();
        grads.output = array![0.5, -2.0, 1e-3];
        model.adam_step(&grads, 0.01).unwrap();
        let after = &model.parameters().output;
        for i in 0..3 {
            let g = grads.output[i];
            // m̂ = g, v̂ = g², step = lr·g/(|g| + ε)
            let expected = -0.01 * g / (g.abs() + ADAM_EPSILON);
            assert!((after[i] - before.output[i] - expected).abs() < 1e-15);
            assert!((after[i] - before.output[i] + 0.01 * g.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = TomographyModel::new(small_config(4, 3, 2, 9)).unwrap();
        let mut b = a.clone();
        let batch = [TrainingExample::new(pair(0, 2), 3.0).unwrap()];
        let (_, g) = a.backward(&batch).unwrap();
        a.adam_step(&g, 1e-3).unwrap();
        b.adam_step(&g, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = TomographyModel::new(small_config(4, 3, 2, 0)).unwrap();
        assert!(model.forward(Array1::zeros(3).view()).is_err());
        assert!(model.predict_values(&[pair(0, 4)]).is_err());
        assert!(model.backward(&[]).is_err());
        assert!(TrainingExample::new(pair(0, 1), 0.0).is_err());
        let mut bad = ModelConfig::new(4);
        bad.gamma = 0;
        assert!(TomographyModel::new(bad).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let mut config = small_config(4, 3, 1, 0);
        config.learning_rate = 1e300;
        let mut model = TomographyModel::new(config).unwrap();
        model.parameters_mut().output.fill(1e300);
        let ex = [TrainingExample::new(pair(0, 1), 1.0).unwrap()];
        assert!(matches!(model.fit(&ex, 5), Err(Error::Diverged { .. })));
    }

    #[test]
    fn empty_prediction() {
        let model = TomographyModel::new(small_config(4, 3, 2, 0)).unwrap();
        assert!(model.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut config = small_config(5, 4, 2, 1);
        config.epochs = 3;
        let examples = [
            TrainingExample::new(pair(0, 1), 2.0).unwrap(),
            TrainingExample::new(pair(2, 4), 3.0).unwrap(),
        ];
        let run = train(&config, &examples).unwrap();
        let text = run.model.to_checkpoint_json().unwrap();
        let back = TomographyModel::from_checkpoint_json(&text).unwrap();
        assert_eq!(back, run.model);
        assert_eq!(back.to_checkpoint_json().unwrap(), text);
    }

    #[test]
    fn batch_size_parsing() {
        assert_eq!("full".parse::<BatchSize>().unwrap(), BatchSize::Full);
        assert_eq!("32".parse::<BatchSize>().unwrap(), BatchSize::Fixed(32));
        let c: BatchSize = serde_json::from_str("\"full\"").unwrap();
        assert_eq!(c, BatchSize::Full);
        assert_eq!(serde_json::to_string(&BatchSize::Fixed(8)).unwrap(), "8");
    }
}
