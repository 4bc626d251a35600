//! Masked non-negative matrix factorization baseline.
//!
//! The partially observed symmetric pair-metric matrix `X` is approximated as
//! `W·H` (`n×r` and `r×n`, both non-negative) by multiplicative updates that
//! only see observed entries:
//!
//! ```text
//! W ← W ∘ (M∘X)Hᵀ / (M∘WH)Hᵀ
//! H ← H ∘ Wᵀ(M∘X) / Wᵀ(M∘WH)
//! ```
//!
//! Predictions are read from the symmetrized product `(WH + (WH)ᵀ)/2`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::Pair;
use crate::predictions::{PredictionTable, Provenance};
use crate::seeds::{stage_rng, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once an iteration lowers the objective by less than `tol` (relative).
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            max_iters: 2000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmfFit {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Observed-entry squared error before the first update and after each
    /// accepted iteration; never increases.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl NmfFit {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }

    /// Entry `(i, j)` of `W·H`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.w.row(i).dot(&self.h.column(j))
    }

    /// Symmetrized reconstruction for one pair.
    pub fn value(&self, pair: Pair) -> f64 {
        let (i, j) = (pair.lo(), pair.hi());
        let ij = self.w.row(i).dot(&self.h.column(j));
        let ji = self.w.row(j).dot(&self.h.column(i));
        0.5 * (ij + ji)
    }
}

fn masked_objective(x: &Array2<f64>, mask: &Array2<f64>, wh: &Array2<f64>) -> f64 {
    let mut s = 0.0;
    ndarray::Zip::from(x).and(mask).and(wh).for_each(|&x, &m, &p| {
        let r = m * (x - p);
        s += r * r;
    });
    s
}

/// Multiplicative update `f ← f ∘ num / den`; entries with a zero denominator stay put.
fn multiplicative_update(f: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) {
    ndarray::Zip::from(f).and(num).and(den).for_each(|f, &a, &b| {
        if b > 0.0 {
            *f *= a / b;
        }
    });
}

/// Factorizes the observed entries of an `n`-node pair-metric matrix.
/// Both orientations of each pair are observed; the diagonal is not.
pub fn nmf_fit(observed: &[(Pair, f64)], n: usize, config: &NmfConfig) -> Result<NmfFit> {
    if observed.is_empty() {
        return Err(Error::invalid("NMF needs at least one observed entry"));
    }
    let mut x = Array2::<f64>::zeros((n, n));
    let mut mask = Array2::<bool>::from_elem((n, n), false);
    for &(p, v) in observed {
        if p.hi() >= n {
            return Err(Error::Dimension {
                expected: n,
                actual: p.hi() + 1,
            });
        }
        for (a, b) in [(p.lo(), p.hi()), (p.hi(), p.lo())] {
            x[[a, b]] = v;
            mask[[a, b]] = true;
        }
    }
    nmf_fit_matrix(&x, &mask, config)
}

/// Factorizes a general `rows×cols` matrix, fitting only entries where `mask` is set.
pub fn nmf_fit_matrix(x: &Array2<f64>, mask: &Array2<bool>, config: &NmfConfig) -> Result<NmfFit> {
    let (rows, cols) = x.dim();
    if mask.dim() != (rows, cols) {
        return Err(Error::Dimension {
            expected: rows * cols,
            actual: mask.len(),
        });
    }
    if config.rank == 0 || config.rank >= rows.max(cols) {
        return Err(Error::invalid(format!(
            "NMF rank must lie in 1..{}, got {}",
            rows.max(cols),
            config.rank
        )));
    }
    if config.max_iters == 0 || config.tol.is_nan() || config.tol < 0.0 {
        return Err(Error::invalid("NMF needs max_iters >= 1 and tol >= 0"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&v, &m) in x.iter().zip(mask) {
        if m {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("NMF input must be non-negative, got {v}")));
            }
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("NMF needs at least one observed entry"));
    }
    let mask = mask.mapv(|m| if m { 1.0 } else { 0.0 });
    let mean = sum / count as f64;
    let scale = (mean.max(f64::MIN_POSITIVE) / config.rank as f64).sqrt();
    let mut rng = stage_rng(config.seed, Stage::Nmf);
    let mut w = Array2::from_shape_fn((rows, config.rank), |_| scale * rng.gen_range(0.01..1.0));
    let mut h = Array2::from_shape_fn((config.rank, cols), |_| scale * rng.gen_range(0.01..1.0));

    let mx = x * &mask;
    let mut wh = w.dot(&h);
    let mut objective = vec![masked_objective(x, &mask, &wh)];
    let mut converged = false;
    for _ in 0..config.max_iters {
        let (w_prev, h_prev) = (w.clone(), h.clone());
        let masked_wh = &wh * &mask;
        let num = mx.dot(&h.t());
        let den = masked_wh.dot(&h.t());
        multiplicative_update(&mut w, &num, &den);

        wh = w.dot(&h);
        let masked_wh = &wh * &mask;
        let num = w.t().dot(&mx);
        let den = w.t().dot(&masked_wh);
        multiplicative_update(&mut h, &num, &den);

        wh = w.dot(&h);
        let obj = masked_objective(x, &mask, &wh);
        let prev = *objective.last().unwrap();
        if obj > prev {
            // exact arithmetic never gets here; at a numerically exact fit,
            // rounding can. Keep the better factors and stop.
            w = w_prev;
            h = h_prev;
            converged = true;
            break;
        }
        objective.push(obj);
        if prev - obj <= config.tol * prev {
            converged = true;
            break;
        }
    }
    Ok(NmfFit {
        w,
        h,
        objective,
        converged,
    })
}

/// Fits on `observed` and predicts every pair in `query`.
pub fn nmf_complete(
    observed: &[(Pair, f64)],
    n: usize,
    config: &NmfConfig,
    query: &[Pair],
) -> Result<(PredictionTable, NmfFit)> {
    let fit = nmf_fit(observed, n, config)?;
    let values: Vec<f64> = query.iter().map(|&p| fit.value(p)).collect();
    Ok((PredictionTable::from_values(query, &values, Provenance::Nmf), fit))
}
