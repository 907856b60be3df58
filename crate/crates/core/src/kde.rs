//! RBF kernel density over the `(s, a)` inputs of a dataset and the
//! standardized out-of-distribution term built from it.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdrmError, Result};

/// Reference sets larger than this are subsampled.
pub const MAX_REFERENCES: usize = 4096;
/// Points used by the median bandwidth heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum BandwidthRule {
    /// Median pairwise distance of a subsample divided by `sqrt(2)`.
    Median,
    /// Scott's rule: `sqrt(mean per-dimension variance) * n^(-1/(d+4))`.
    Scott,
    Fixed(f64),
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::Median
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeStats {
    pub references: Vec<Vec<f64>>,
    pub bandwidth: f64,
    pub mu_kde: f64,
    pub sigma_kde: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel_mean(references: &[Vec<f64>], h: f64, query: &[f64]) -> f64 {
    let scale = 1.0 / (2.0 * h * h);
    let sum: f64 = references
        .iter()
        .map(|r| (-squared_distance(query, r) * scale).exp())
        .sum();
    sum / references.len() as f64
}

/// Median heuristic bandwidth over at most [`MEDIAN_SUBSAMPLE`] points.
pub fn median_bandwidth(points: &[Vec<f64>], seed: u64) -> f64 {
    let subset: Vec<&Vec<f64>> = if points.len() > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, points.len(), MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &points[i]).collect()
    } else {
        points.iter().collect()
    };
    let mut dists = Vec::with_capacity(subset.len() * subset.len().saturating_sub(1) / 2);
    for i in 0..subset.len() {
        for j in i + 1..subset.len() {
            dists.push(squared_distance(subset[i], subset[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    median / std::f64::consts::SQRT_2
}

/// Scott's rule of thumb for an isotropic kernel.
pub fn scott_bandwidth(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, Vec::len);
    if d == 0 || n < 2.0 {
        return 0.0;
    }
    let mut var_sum = 0.0;
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        var_sum += points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
    }
    (var_sum / d as f64).sqrt() * n.powf(-1.0 / (d as f64 + 4.0))
}

impl KdeStats {
    /// Fit reference points, bandwidth, and the mean and (population)
    /// standard deviation of the density at every reference point.
    pub fn fit(inputs: &[Vec<f64>], rule: BandwidthRule, seed: u64) -> Result<Self> {
        if inputs.len() < 2 {
            return Err(CdrmError::DegenerateDataset(
                "KDE needs at least two points".into(),
            ));
        }
        let dim = inputs[0].len();
        if dim == 0 || inputs.iter().any(|p| p.len() != dim) {
            return Err(CdrmError::InvalidInput(
                "KDE inputs must share one non-zero width".into(),
            ));
        }
        let references: Vec<Vec<f64>> = if inputs.len() > MAX_REFERENCES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, inputs.len(), MAX_REFERENCES).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| inputs[i].clone()).collect()
        } else {
            inputs.to_vec()
        };
        let bandwidth = match rule {
            BandwidthRule::Median => median_bandwidth(&references, seed.wrapping_add(1)),
            BandwidthRule::Scott => scott_bandwidth(inputs),
            BandwidthRule::Fixed(h) => h,
        };
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(CdrmError::DegenerateDataset(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Self::from_references(references, bandwidth)
    }

    /// Compute the standardization statistics for a fixed reference set.
    pub fn from_references(references: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self> {
        if references.len() < 2 {
            return Err(CdrmError::DegenerateDataset(
                "KDE needs at least two points".into(),
            ));
        }
        let densities: Vec<f64> = references
            .iter()
            .map(|r| kernel_mean(&references, bandwidth, r))
            .collect();
        let n = densities.len() as f64;
        let mu_kde = densities.iter().sum::<f64>() / n;
        let var = densities.iter().map(|d| (d - mu_kde).powi(2)).sum::<f64>() / n;
        let sigma_kde = var.sqrt();
        if !(sigma_kde > 1e-12 * mu_kde) {
            return Err(CdrmError::DegenerateDataset(
                "every reference point has the same density".into(),
            ));
        }
        Ok(Self {
            references,
            bandwidth,
            mu_kde,
            sigma_kde,
        })
    }

    pub fn dim(&self) -> usize {
        self.references[0].len()
    }

    /// `(1/N) * sum_i exp(-|q - x_i|^2 / (2 h^2))`, without the Gaussian
    /// normalizing constant.
    pub fn density(&self, query: &[f64]) -> Result<f64> {
        CdrmError::check_dim(self.dim(), query.len())?;
        Ok(kernel_mean(&self.references, self.bandwidth, query))
    }

    /// `1 / (1 + exp((density - mu) / sigma))`
    pub fn base_eu(&self, query: &[f64]) -> Result<f64> {
        Ok(self.base_eu_from_density(self.density(query)?))
    }

    pub fn base_eu_from_density(&self, density: f64) -> f64 {
        1.0 / (1.0 + ((density - self.mu_kde) / self.sigma_kde).exp())
    }
}
