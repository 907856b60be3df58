//! The CDRM scalar field: `rho = sigmoid(clamp(net(normalize(s, a, s'))))`.
//!
//! The network never sees raw coordinates. Each joint dimension is mapped
//! affinely from its `(low, high)` bound onto `[-1, 1]` first; gradients
//! returned by [`CdrmModel`] are with respect to the raw coordinates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::data::Dims;
use crate::error::{CdrmError, Result};
use crate::kde::KdeStats;
use crate::langevin::ScoreField;
use crate::nnet::{ForwardCache, MlpNetwork};

/// Output clamp `eps` for the sigmoid: scores stay inside `[eps, 1 - eps]`.
pub const OUTPUT_EPS: f64 = 1e-6;

/// Logit half-width that confines the sigmoid to `[OUTPUT_EPS, 1 - OUTPUT_EPS]`.
pub fn default_logit_clip() -> f64 {
    ((1.0 - OUTPUT_EPS) / OUTPUT_EPS).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdrmModel {
    net: MlpNetwork,
    logit_clip: f64,
    input_bounds: Vec<(f64, f64)>,
    dims: Dims,
    kde: Option<KdeStats>,
}

/// Forward pass results kept for backpropagation.
pub(crate) struct ScoredBatch {
    pub cache: ForwardCache,
    pub scores: Array1<f64>,
    /// `d rho / d logit` per sample, zero where the clamp is active.
    pub dscore_dlogit: Array1<f64>,
}

impl CdrmModel {
    pub fn new(net: MlpNetwork, dims: Dims, input_bounds: Vec<(f64, f64)>) -> Result<Self> {
        Self::with_clip(net, dims, input_bounds, default_logit_clip())
    }

    pub fn with_clip(
        net: MlpNetwork,
        dims: Dims,
        input_bounds: Vec<(f64, f64)>,
        logit_clip: f64,
    ) -> Result<Self> {
        CdrmError::check_dim(dims.joint(), net.input_dim())?;
        CdrmError::check_dim(dims.joint(), input_bounds.len())?;
        if dims.d_out == 0 {
            return Err(CdrmError::InvalidInput("next-state block must be non-empty".into()));
        }
        if input_bounds
            .iter()
            .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(CdrmError::InvalidInput(
                "input bounds need finite low < high on every dimension".into(),
            ));
        }
        if !(logit_clip > 0.0 && logit_clip.is_finite()) {
            return Err(CdrmError::InvalidInput("logit clip must be positive".into()));
        }
        Ok(Self {
            net,
            logit_clip,
            input_bounds,
            dims,
            kde: None,
        })
    }

    pub fn net(&self) -> &MlpNetwork {
        &self.net
    }

    pub(crate) fn net_mut(&mut self) -> &mut MlpNetwork {
        &mut self.net
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn logit_clip(&self) -> f64 {
        self.logit_clip
    }

    pub fn input_bounds(&self) -> &[(f64, f64)] {
        &self.input_bounds
    }

    /// Bounds of the next-state block.
    pub fn output_bounds(&self) -> &[(f64, f64)] {
        &self.input_bounds[self.dims.output_range()]
    }

    pub fn kde(&self) -> Option<&KdeStats> {
        self.kde.as_ref()
    }

    pub fn set_kde(&mut self, stats: KdeStats) -> Result<()> {
        CdrmError::check_dim(self.dims.input(), stats.dim())?;
        self.kde = Some(stats);
        Ok(())
    }

    /// Score of one `(s, a, s_next)` tuple.
    pub fn score(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> Result<f64> {
        CdrmError::check_dim(self.dims.d_s, s.len())?;
        CdrmError::check_dim(self.dims.d_a, a.len())?;
        CdrmError::check_dim(self.dims.d_out, s_next.len())?;
        let mut joint = Vec::with_capacity(self.dims.joint());
        joint.extend_from_slice(s);
        joint.extend_from_slice(a);
        joint.extend_from_slice(s_next);
        self.score_joint(&joint)
    }

    pub fn score_joint(&self, joint: &[f64]) -> Result<f64> {
        CdrmError::check_dim(self.dims.joint(), joint.len())?;
        if joint.iter().any(|v| !v.is_finite()) {
            return Err(CdrmError::InvalidInput("non-finite tuple".into()));
        }
        let batch = ndarray::aview1(joint).insert_axis(ndarray::Axis(0));
        Ok(self.score_batch(batch)?[0])
    }

    /// Clamp a logit and map it through the sigmoid.
    pub fn squash(&self, logit: f64) -> f64 {
        sigmoid(logit.clamp(-self.logit_clip, self.logit_clip))
    }

    pub fn score_range(&self) -> (f64, f64) {
        (sigmoid(-self.logit_clip), sigmoid(self.logit_clip))
    }

    pub(crate) fn normalize(&self, batch: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = batch.to_owned();
        for (mut col, &(lo, hi)) in out.columns_mut().into_iter().zip(&self.input_bounds) {
            let scale = 2.0 / (hi - lo);
            col.mapv_inplace(|v| (v - lo) * scale - 1.0);
        }
        out
    }

    fn input_scales(&self) -> Array1<f64> {
        self.input_bounds.iter().map(|&(lo, hi)| 2.0 / (hi - lo)).collect()
    }

    pub(crate) fn forward_scored(&self, batch: ArrayView2<'_, f64>) -> Result<ScoredBatch> {
        CdrmError::check_dim(self.dims.joint(), batch.ncols())?;
        let cache = self.net.forward_cache(self.normalize(batch).view())?;
        let clip = self.logit_clip;
        let logits = cache.logits();
        let mut scores = Array1::zeros(logits.len());
        let mut dscore = Array1::zeros(logits.len());
        Zip::from(&mut scores)
            .and(&mut dscore)
            .and(&logits)
            .for_each(|s, d, &z| {
                let rho = sigmoid(z.clamp(-clip, clip));
                *s = rho;
                *d = if z.abs() <= clip { rho * (1.0 - rho) } else { 0.0 };
            });
        Ok(ScoredBatch {
            cache,
            scores,
            dscore_dlogit: dscore,
        })
    }

    /// Input gradients of `upstream[k] * logit_k` in raw coordinates.
    pub(crate) fn raw_input_grad(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView1<'_, f64>,
    ) -> Array2<f64> {
        let (mut grad, _) = self.net.backward(cache, upstream, false);
        grad *= &self.input_scales();
        grad
    }
}

impl ScoreField for CdrmModel {
    fn dim(&self) -> usize {
        self.dims.joint()
    }

    fn score_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_scored(batch)?.scores)
    }

    fn score_and_grad_batch(&self, batch: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let scored = self.forward_scored(batch)?;
        let grad = self.raw_input_grad(&scored.cache, scored.dscore_dlogit.view());
        Ok((scored.scores, grad))
    }
}

/// `-mean(log(rho_pos + eps)) - mean(log(1 - rho_neg + eps))`
pub fn contrastive_loss(rho_pos: &[f64], rho_neg: &[f64], eps: f64) -> Result<f64> {
    if rho_pos.is_empty() || rho_neg.is_empty() {
        return Err(CdrmError::InvalidInput(
            "contrastive loss needs non-empty positive and negative batches".into(),
        ));
    }
    let pos = rho_pos.iter().map(|r| (r + eps).ln()).sum::<f64>() / rho_pos.len() as f64;
    let neg = rho_neg.iter().map(|r| (1.0 - r + eps).ln()).sum::<f64>() / rho_neg.len() as f64;
    Ok(-pos - neg)
}
