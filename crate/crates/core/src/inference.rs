//! Langevin inference: valid-set collection, argmax prediction, and the
//! aleatoric / epistemic uncertainty estimates.
//!
//! Given `(s, a)`, chains over the next-state coordinates climb the model
//! score. Every post-update sample scoring above `alpha` joins the valid set
//! unless it lies within the dedup tolerance of an existing member. The
//! prediction is the best-scoring member, AU is the square root of the trace
//! of the members' population covariance, and EU mixes the KDE term with the
//! model's confidence:
//!
//! ```text
//! EU = 1                                              if the valid set is empty
//! EU = (kde_base + (1 - max score) * sd(step maxima)) / 2   otherwise
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CdrmError, Result};
use crate::langevin::{self, ChainTrace, Direction, LangevinConfig};
use crate::model::CdrmModel;

/// Knobs of one inference call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub n_samples: usize,
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: f64,
    /// Validity threshold on the model score.
    pub alpha: f64,
    /// Dedup tolerance as a fraction of each next-state dimension's range.
    pub dedup_fraction: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            n_samples: 512,
            steps: 50,
            step_size: 0.1,
            noise_scale: 0.01,
            alpha: 0.5,
            dedup_fraction: 1e-3,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CdrmError::InvalidConfig(m.to_string()));
        if self.n_samples == 0 || self.steps == 0 {
            return bad("inference needs at least one sample and one step");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.dedup_fraction >= 0.0 && self.dedup_fraction.is_finite()) {
            return bad("dedup_fraction must be non-negative");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step size must be positive");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise scale must be non-negative");
        }
        Ok(())
    }

    pub fn langevin(&self, model: &CdrmModel) -> LangevinConfig {
        LangevinConfig {
            n_samples: self.n_samples,
            steps: self.steps,
            step_size: self.step_size,
            noise_scale: self.noise_scale,
            direction: Direction::Ascent,
            free_dims: model.dims().output_range().collect(),
            bounds: model.output_bounds().to_vec(),
        }
    }

    /// Per-dimension dedup tolerances for `model`'s next-state block.
    pub fn dedup_tolerance(&self, model: &CdrmModel) -> Vec<f64> {
        model
            .output_bounds()
            .iter()
            .map(|&(lo, hi)| self.dedup_fraction * (hi - lo))
            .collect()
    }
}

/// Distinct above-threshold next states with their scores, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidSet {
    samples: Vec<Vec<f64>>,
    scores: Vec<f64>,
    tolerance: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl ValidSet {
    /// Empty set; `tolerance[d]` is the L∞ dedup radius on dimension `d`.
    pub fn new(tolerance: Vec<f64>) -> Self {
        Self {
            samples: Vec::new(),
            scores: Vec::new(),
            tolerance,
            cells: HashMap::new(),
        }
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.tolerance)
            .map(|(&v, &t)| if t > 0.0 { (v / t).floor() as i64 } else { v.to_bits() as i64 })
            .collect()
    }

    fn is_duplicate(&self, x: &[f64], cell: &[i64]) -> bool {
        let within = |idx: &usize| {
            self.samples[*idx]
                .iter()
                .zip(x)
                .zip(&self.tolerance)
                .all(|((a, b), t)| (a - b).abs() <= *t)
        };
        // with cells of width t, any neighbour within t sits in an adjacent cell
        let mut offsets = vec![-1i64; cell.len()];
        let positive: Vec<bool> = self.tolerance.iter().map(|&t| t > 0.0).collect();
        for (o, &p) in offsets.iter_mut().zip(&positive) {
            if !p {
                *o = 0;
            }
        }
        loop {
            let key: Vec<i64> = cell.iter().zip(&offsets).map(|(c, o)| c + o).collect();
            if self.cells.get(&key).is_some_and(|v| v.iter().any(within)) {
                return true;
            }
            // odometer over {-1, 0, 1} per dimension with a positive tolerance
            let mut d = 0;
            loop {
                if d == offsets.len() {
                    return false;
                }
                if positive[d] && offsets[d] < 1 {
                    offsets[d] += 1;
                    break;
                }
                if positive[d] {
                    offsets[d] = -1;
                }
                d += 1;
            }
        }
    }

    /// Insert `x` unless an existing member lies within tolerance. Returns
    /// whether it was added.
    pub fn insert(&mut self, x: &[f64], score: f64) -> bool {
        assert_eq!(x.len(), self.tolerance.len(), "valid-set width");
        let cell = self.cell_of(x);
        if self.is_duplicate(x, &cell) {
            return false;
        }
        self.cells.entry(cell).or_default().push(self.samples.len());
        self.samples.push(x.to_vec());
        self.scores.push(score);
        true
    }
}

/// Scan the post-update batches of `trace` (steps `1..=L`) in `(step,
/// sample)` order and keep the samples scoring above `alpha`.
///
/// `free_dims` selects the next-state coordinates stored in the set.
pub fn collect_valid(
    trace: &ChainTrace,
    free_dims: &[usize],
    alpha: f64,
    tolerance: Vec<f64>,
) -> ValidSet {
    let mut set = ValidSet::new(tolerance);
    let mut x = vec![0.0; free_dims.len()];
    for (batch, scores) in trace.samples.iter().zip(&trace.scores).skip(1) {
        for (row, &score) in batch.rows().into_iter().zip(scores) {
            if score > alpha {
                for (slot, &d) in x.iter_mut().zip(free_dims) {
                    *slot = row[d];
                }
                set.insert(&x, score);
            }
        }
    }
    set
}

/// Highest-scoring member; the earliest one wins ties.
pub fn predict(valid: &ValidSet) -> Result<Vec<f64>> {
    let mut best: Option<usize> = None;
    for (i, &s) in valid.scores.iter().enumerate() {
        if best.is_none_or(|b| s > valid.scores[b]) {
            best = Some(i);
        }
    }
    best.map(|i| valid.samples[i].clone())
        .ok_or(CdrmError::EmptyValidSet)
}

/// Square root of the trace of the population covariance of `points`.
pub fn spread(points: &[Vec<f64>]) -> Option<f64> {
    let first = points.first()?;
    let n = points.len() as f64;
    let mut total = 0.0;
    for d in 0..first.len() {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        total += points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
    }
    Some(total.sqrt())
}

pub fn aleatoric(valid: &ValidSet) -> Result<f64> {
    spread(&valid.samples).ok_or(CdrmError::EmptyValidSet)
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn epistemic(valid: &ValidSet, per_step_max: &[f64], kde_base: f64) -> f64 {
    if valid.is_empty() {
        return 1.0;
    }
    let max_score = valid.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma_phi = population_std(per_step_max);
    (kde_base + (1.0 - max_score) * sigma_phi) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub prediction: Option<Vec<f64>>,
    pub eu: f64,
    pub au: Option<f64>,
    pub valid_count: usize,
    pub per_step_max: Vec<f64>,
}

/// Full inference for one `(s, a)` input (`input` is `s` followed by `a`).
pub fn infer(
    model: &CdrmModel,
    input: &[f64],
    cfg: &InferenceConfig,
    seed: u64,
) -> Result<InferenceResult> {
    cfg.validate()?;
    let dims = model.dims();
    CdrmError::check_dim(dims.input(), input.len())?;
    if input.iter().any(|v| !v.is_finite()) {
        return Err(CdrmError::InvalidInput("non-finite query".into()));
    }
    let kde = model.kde().ok_or(CdrmError::UnpreparedModel)?;

    let lcfg = cfg.langevin(model);
    let mut fixed = input.to_vec();
    fixed.resize(dims.joint(), 0.0);
    let trace = langevin::run(model, &lcfg, &fixed, seed)?;
    let valid = collect_valid(&trace, &lcfg.free_dims, cfg.alpha, cfg.dedup_tolerance(model));

    if valid.is_empty() {
        return Ok(InferenceResult {
            prediction: None,
            eu: 1.0,
            au: None,
            valid_count: 0,
            per_step_max: trace.per_step_max,
        });
    }
    let kde_base = kde.base_eu(input)?;
    Ok(InferenceResult {
        prediction: Some(predict(&valid)?),
        eu: epistemic(&valid, &trace.per_step_max, kde_base),
        au: Some(aleatoric(&valid)?),
        valid_count: valid.len(),
        per_step_max: trace.per_step_max,
    })
}
