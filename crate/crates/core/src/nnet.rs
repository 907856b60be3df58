//! Dense feed-forward network with a scalar output.
//!
//! Hidden layers use `tanh`; the final layer is affine and produces the
//! pre-sigmoid logit. Every layer stores its weights as an `(out, in)` matrix.
//!
//! Evaluation is batched: rows of the input matrix are samples. The single
//! sample entry points ([`MlpNetwork::forward`], [`MlpNetwork::grad_input`],
//! [`MlpNetwork::grad_params`]) are thin wrappers over the batched path.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{CdrmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Gradient of a scalar with respect to every parameter of an [`MlpNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations recorded by a batched forward pass.
///
/// `activations[0]` is the input batch, `activations[i]` the output of layer
/// `i - 1` (post-`tanh` for hidden layers). The last entry holds the logits as
/// an `(n, 1)` matrix.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> ArrayView1<'_, f64> {
        self.activations
            .last()
            .expect("cache always holds the output layer")
            .column(0)
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(CdrmError::InvalidConfig(
            "a network needs at least an input and an output layer".into(),
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(CdrmError::InvalidConfig(
            "layer widths must be positive".into(),
        ));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(CdrmError::InvalidConfig(
            "the final layer must produce a single logit".into(),
        ));
    }
    Ok(())
}

impl MlpNetwork {
    /// Network with every weight and bias set to zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_dims)?;
        for w in &mut net.weights {
            let (fan_out, fan_in) = w.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(CdrmError::InvalidInput(
                "weights and biases must list the same, non-zero number of layers".into(),
            ));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *layer_dims.last().unwrap() {
                return Err(CdrmError::InvalidInput(format!(
                    "layer {i} expects {} inputs but the previous layer has {} outputs",
                    w.ncols(),
                    layer_dims.last().unwrap()
                )));
            }
            if b.len() != w.nrows() {
                return Err(CdrmError::InvalidInput(format!(
                    "layer {i} has {} rows but {} biases",
                    w.nrows(),
                    b.len()
                )));
            }
            layer_dims.push(w.nrows());
        }
        validate_dims(&layer_dims)?;
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(CdrmError::InvalidInput("non-finite network parameter".into()));
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let batch = self.single_row(x)?;
        Ok(self.forward_batch(batch.view())?[0])
    }

    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = self.single_row(x)?;
        let cache = self.forward_cache(batch.view())?;
        let (grad, _) = self.backward(&cache, Array1::ones(1).view(), false);
        Ok(grad.row(0).to_vec())
    }

    /// Gradient of `upstream * logit(x)` with respect to every parameter.
    pub fn grad_params(&self, x: &[f64], upstream: f64) -> Result<ParamGradient> {
        let batch = self.single_row(x)?;
        let cache = self.forward_cache(batch.view())?;
        let (_, grads) = self.backward(&cache, Array1::from_elem(1, upstream).view(), true);
        Ok(grads.expect("parameter gradients requested"))
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cache(x)?.logits().to_owned())
    }

    pub fn forward_cache(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        CdrmError::check_dim(self.input_dim(), x.ncols())?;
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(x.to_owned());
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[i].dot(&w.t());
            z += b;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse pass for a batch.
    ///
    /// `upstream[k]` is the derivative of the objective with respect to the
    /// logit of sample `k`. Returns the per-sample input gradients (scaled by
    /// `upstream`) and, when requested, parameter gradients summed over the batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView1<'_, f64>,
        want_params: bool,
    ) -> (Array2<f64>, Option<ParamGradient>) {
        assert_eq!(upstream.len(), cache.batch_size(), "upstream length");
        let n_layers = self.weights.len();
        let mut delta = upstream.to_owned().insert_axis(Axis(1));
        let mut grads = want_params.then(|| ParamGradient::zeros_like(self));

        for layer in (0..n_layers).rev() {
            let input = &cache.activations[layer];
            if let Some(g) = grads.as_mut() {
                g.weights[layer] = delta.t().dot(input);
                g.biases[layer] = delta.sum_axis(Axis(0));
            }
            let mut prev = delta.dot(&self.weights[layer]);
            if layer > 0 {
                // input to this layer is a tanh output
                Zip::from(&mut prev)
                    .and(input)
                    .for_each(|d, &a| *d *= 1.0 - a * a);
            }
            delta = prev;
        }
        (delta, grads)
    }

    fn single_row(&self, x: &[f64]) -> Result<Array2<f64>> {
        CdrmError::check_dim(self.input_dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CdrmError::InvalidInput("non-finite network input".into()));
        }
        Ok(Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape matches length"))
    }
}

impl ParamGradient {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flattened view of every entry, weights layer by layer then biases.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }
}

/// Adam hyperparameters and moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ParamGradient,
    v: ParamGradient,
}

impl AdamState {
    pub fn new(net: &MlpNetwork) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ParamGradient::zeros_like(net),
            v: ParamGradient::zeros_like(net),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParamGradient {
        &self.m
    }

    pub fn second_moment(&self) -> &ParamGradient {
        &self.v
    }
}

/// One bias-corrected Adam step. Rejects non-finite gradients without
/// touching the network or the optimizer state.
pub fn adam_update(
    net: &mut MlpNetwork,
    grads: &ParamGradient,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(CdrmError::TrainingDivergence {
            epoch: state.step as usize,
            reason: "non-finite parameter gradient".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let update = |param: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *param -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    };

    for layer in 0..net.weights.len() {
        Zip::from(&mut net.weights[layer])
            .and(&mut state.m.weights[layer])
            .and(&mut state.v.weights[layer])
            .and(&grads.weights[layer])
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut net.biases[layer])
            .and(&mut state.m.biases[layer])
            .and(&mut state.v.biases[layer])
            .and(&grads.biases[layer])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}
