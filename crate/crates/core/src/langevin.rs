//! Batch-parallel Langevin dynamics over a scalar field.
//!
//! A chain batch is an `(n_samples, dim)` matrix. Only the coordinates listed
//! in [`LangevinConfig::free_dims`] move; the others keep the values they were
//! initialized with. One step is
//!
//! ```text
//! x <- clip(x ± step_size * grad(x) + noise_scale * N(0, I))
//! ```
//!
//! applied to the free coordinates, with `+` for ascent and `-` for descent.
//!
//! Every sample draws from its own ChaCha stream keyed by `(seed, sample
//! index)`, so changing the batch size never perturbs the other chains.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CdrmError, Result};

/// A differentiable scalar field evaluated on batches of points.
pub trait ScoreField {
    /// Width of the points the field accepts.
    fn dim(&self) -> usize;

    fn score_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    /// Scores and per-sample input gradients in one batched pass.
    fn score_and_grad_batch(&self, batch: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascent,
    Descent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangevinConfig {
    pub n_samples: usize,
    pub steps: usize,
    pub step_size: f64,
    pub noise_scale: f64,
    pub direction: Direction,
    /// Coordinates the chains update, ascending.
    pub free_dims: Vec<usize>,
    /// `(low, high)` for each entry of `free_dims`.
    pub bounds: Vec<(f64, f64)>,
}

impl LangevinConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(CdrmError::InvalidConfig(msg.to_string()));
        if self.n_samples == 0 {
            return bad("Langevin sample count must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("Langevin step size must be positive and finite");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("Langevin noise scale must be non-negative and finite");
        }
        if self.free_dims.is_empty() {
            return bad("at least one coordinate must be free");
        }
        if self.free_dims.len() != self.bounds.len() {
            return bad("one (low, high) bound is needed per free coordinate");
        }
        if self.free_dims.windows(2).any(|w| w[0] >= w[1]) {
            return bad("free coordinates must be strictly increasing");
        }
        if self.free_dims.iter().any(|&d| d >= dim) {
            return bad("free coordinate index exceeds the field dimension");
        }
        if self
            .bounds
            .iter()
            .any(|&(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi)
        {
            return bad("bounds must be finite with low <= high");
        }
        Ok(())
    }
}

/// Record of one Langevin run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    /// `steps + 1` batches; entry 0 is the initialization.
    pub samples: Vec<Array2<f64>>,
    /// Field values matching `samples`.
    pub scores: Vec<Array1<f64>>,
    /// Batch maximum of the field after each update step (`steps` entries).
    pub per_step_max: Vec<f64>,
}

impl ChainTrace {
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn last(&self) -> &Array2<f64> {
        self.samples.last().expect("trace holds the initialization")
    }
}

/// Independent per-sample random streams derived from one seed.
#[derive(Debug, Clone)]
pub struct SampleStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl SampleStreams {
    pub fn new(seed: u64, n: usize) -> Self {
        let rngs = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { rngs }
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }
}

/// Uniform initialization of the free coordinates; the rest are copied from
/// `fixed_values` (a full-width point).
pub fn init_uniform(
    cfg: &LangevinConfig,
    fixed_values: &[f64],
    streams: &mut SampleStreams,
) -> Result<Array2<f64>> {
    cfg.validate(fixed_values.len())?;
    CdrmError::check_dim(cfg.n_samples, streams.len())?;
    let mut batch = Array2::zeros((cfg.n_samples, fixed_values.len()));
    for (mut row, rng) in batch.rows_mut().into_iter().zip(&mut streams.rngs) {
        row.assign(&ndarray::aview1(fixed_values));
        for (&d, &(lo, hi)) in cfg.free_dims.iter().zip(&cfg.bounds) {
            row[d] = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
    }
    Ok(batch)
}

/// One Langevin update of the free coordinates using precomputed gradients.
/// Gradients must be finite.
pub fn step_with_grad(
    batch: &mut Array2<f64>,
    grads: ArrayView2<'_, f64>,
    cfg: &LangevinConfig,
    streams: &mut SampleStreams,
) -> Result<()> {
    let sign = cfg.direction.sign();
    for (i, ((mut row, grad), rng)) in batch
        .rows_mut()
        .into_iter()
        .zip(grads.rows())
        .zip(&mut streams.rngs)
        .enumerate()
    {
        if cfg.free_dims.iter().any(|&d| !grad[d].is_finite()) {
            return Err(CdrmError::SamplingFailure { sample: i });
        }
        for (&d, &(lo, hi)) in cfg.free_dims.iter().zip(&cfg.bounds) {
            let mut v = row[d] + sign * cfg.step_size * grad[d];
            if cfg.noise_scale > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += cfg.noise_scale * z;
            }
            row[d] = v.clamp(lo, hi);
        }
    }
    Ok(())
}

/// One Langevin update: evaluates the field gradient at `batch` and moves it.
pub fn step<F: ScoreField + ?Sized>(
    field: &F,
    batch: &mut Array2<f64>,
    cfg: &LangevinConfig,
    streams: &mut SampleStreams,
) -> Result<()> {
    let (_, grads) = field.score_and_grad_batch(batch.view())?;
    step_with_grad(batch, grads.view(), cfg, streams)
}

/// Initialize and run `cfg.steps` updates, recording every batch.
///
/// Each step issues exactly one batched field evaluation (the scores of the
/// new positions come with the gradients for the following step).
pub fn run<F: ScoreField + ?Sized>(
    field: &F,
    cfg: &LangevinConfig,
    fixed_values: &[f64],
    seed: u64,
) -> Result<ChainTrace> {
    CdrmError::check_dim(field.dim(), fixed_values.len())?;
    let mut streams = SampleStreams::new(seed, cfg.n_samples);
    let mut batch = init_uniform(cfg, fixed_values, &mut streams)?;

    let mut samples = Vec::with_capacity(cfg.steps + 1);
    let mut scores = Vec::with_capacity(cfg.steps + 1);
    let mut per_step_max = Vec::with_capacity(cfg.steps);

    let (mut score, mut grads) = field.score_and_grad_batch(batch.view())?;
    samples.push(batch.clone());
    scores.push(score);
    for _ in 0..cfg.steps {
        step_with_grad(&mut batch, grads.view(), cfg, &mut streams)?;
        (score, grads) = field.score_and_grad_batch(batch.view())?;
        per_step_max.push(score.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        samples.push(batch.clone());
        scores.push(score);
    }
    Ok(ChainTrace {
        samples,
        scores,
        per_step_max,
    })
}

/// Evolve a batch for `cfg.steps` updates without recording intermediate
/// states. Returns the final batch.
pub fn evolve<F: ScoreField + ?Sized>(
    field: &F,
    mut batch: Array2<f64>,
    cfg: &LangevinConfig,
    streams: &mut SampleStreams,
) -> Result<Array2<f64>> {
    cfg.validate(batch.ncols())?;
    for _ in 0..cfg.steps {
        step(field, &mut batch, cfg, streams)?;
    }
    Ok(batch)
}

/// Mean of each column; handy for diagnostics.
pub fn column_means(batch: &Array2<f64>) -> Array1<f64> {
    batch.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(batch.ncols()))
}


#[cfg(test)]
mod tests {
    use super::stubs::*;
    use super::*;

    fn cfg(n: usize, steps: usize, free: Vec<usize>, bounds: Vec<(f64, f64)>) -> LangevinConfig {
        LangevinConfig {
            n_samples: n,
            steps,
            step_size: 0.1,
            noise_scale: 0.01,
            direction: Direction::Ascent,
            free_dims: free,
            bounds,
        }
    }

    #[test]
    fn degenerate_bounds_pin_samples() {
        let c = cfg(16, 1, vec![0, 1], vec![(0.0, 0.0), (0.0, 0.0)]);
        let mut streams = SampleStreams::new(1, 16);
        let batch = init_uniform(&c, &[5.0, 5.0], &mut streams).unwrap();
        assert!(batch.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_init_has_the_right_mean() {
        let c = cfg(1000, 1, vec![1, 2], vec![(0.0, 1.0), (0.0, 1.0)]);
        let mut streams = SampleStreams::new(42, 1000);
        let batch = init_uniform(&c, &[0.3, 0.0, 0.0], &mut streams).unwrap();
        let means = column_means(&batch);
        assert!((means[1] - 0.5).abs() < 0.05);
        assert!((means[2] - 0.5).abs() < 0.05);
        // frozen coordinate copied verbatim
        assert!(batch.column(0).iter().all(|&v| v == 0.3));
    }

    #[test]
    fn flat_field_without_noise_is_stationary() {
        let mut c = cfg(32, 5, vec![0, 1], vec![(-1.0, 1.0), (-1.0, 1.0)]);
        c.noise_scale = 0.0;
        let trace = run(&Flat(2), &c, &[0.0, 0.0], 3).unwrap();
        for b in &trace.samples {
            assert_eq!(b, &trace.samples[0]);
        }
    }

    #[test]
    fn quadratic_step_moves_toward_center() {
        let field = Quadratic {
            center: vec![0.2, -0.4],
        };
        let mut c = cfg(8, 1, vec![0, 1], vec![(-5.0, 5.0), (-5.0, 5.0)]);
        c.noise_scale = 0.0;
        let mut streams = SampleStreams::new(7, 8);
        let mut batch = init_uniform(&c, &[0.0, 0.0], &mut streams).unwrap();
        let before = batch.clone();
        step(&field, &mut batch, &c, &mut streams).unwrap();
        for (b, a) in before.rows().into_iter().zip(batch.rows()) {
            for d in 0..2 {
                let want = b[d] + 0.1 * (field.center[d] - b[d]);
                assert!((a[d] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn steps_respect_bounds() {
        let field = Quadratic {
            center: vec![10.0, -10.0],
        };
        let mut c = cfg(64, 20, vec![0, 1], vec![(0.0, 1.0), (0.0, 1.0)]);
        c.step_size = 0.5;
        c.noise_scale = 0.3;
        let trace = run(&field, &c, &[0.0, 0.0], 5).unwrap();
        for b in &trace.samples {
            assert!(b.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn trace_shape_and_determinism() {
        let field = Quadratic {
            center: vec![0.0, 0.0, 0.5],
        };
        let c = cfg(10, 1, vec![2], vec![(-1.0, 1.0)]);
        let trace = run(&field, &c, &[0.1, 0.2, 0.0], 9).unwrap();
        assert_eq!(trace.samples.len(), 2);
        assert_eq!(trace.scores.len(), 2);
        assert_eq!(trace.per_step_max.len(), 1);

        let c = cfg(10, 12, vec![2], vec![(-1.0, 1.0)]);
        let a = run(&field, &c, &[0.1, 0.2, 0.0], 9).unwrap();
        let b = run(&field, &c, &[0.1, 0.2, 0.0], 9).unwrap();
        assert_eq!(a, b);
        // frozen coordinates are untouched through the whole chain
        for batch in &a.samples {
            assert!(batch.column(0).iter().all(|&v| v == 0.1));
            assert!(batch.column(1).iter().all(|&v| v == 0.2));
        }
    }

    #[test]
    fn batch_size_does_not_perturb_other_chains() {
        let field = Quadratic {
            center: vec![0.3],
        };
        let small = run(&field, &cfg(4, 6, vec![0], vec![(-1.0, 1.0)]), &[0.0], 17).unwrap();
        let large = run(&field, &cfg(9, 6, vec![0], vec![(-1.0, 1.0)]), &[0.0], 17).unwrap();
        for (s, l) in small.samples.iter().zip(&large.samples) {
            assert_eq!(s.row(3), l.row(3));
        }
    }

    #[test]
    fn noiseless_ascent_on_concave_field_never_lowers_the_maximum() {
        let field = Quadratic {
            center: vec![0.1, 0.7],
        };
        let mut c = cfg(50, 30, vec![0, 1], vec![(-1.0, 1.0), (-1.0, 1.0)]);
        c.noise_scale = 0.0;
        let trace = run(&field, &c, &[0.0, 0.0], 4).unwrap();
        for w in trace.per_step_max.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_sample() {
        let c = cfg(5, 3, vec![0], vec![(-1.0, 1.0)]);
        match run(&Poisoned, &c, &[0.0], 1) {
            Err(CdrmError::SamplingFailure { sample }) => assert_eq!(sample, 4),
            other => panic!("expected sampling failure, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let good = cfg(4, 2, vec![0], vec![(0.0, 1.0)]);
        assert!(good.validate(1).is_ok());
        assert!(cfg(0, 2, vec![0], vec![(0.0, 1.0)]).validate(1).is_err());
        assert!(cfg(4, 2, vec![], vec![]).validate(1).is_err());
        assert!(cfg(4, 2, vec![1], vec![(0.0, 1.0)]).validate(1).is_err());
        assert!(cfg(4, 2, vec![0], vec![(1.0, 0.0)]).validate(1).is_err());
        let mut bad = good.clone();
        bad.step_size = 0.0;
        assert!(bad.validate(1).is_err());
    }
}
