//! Dense layers and the feed-forward model: forward pass with cache,
//! backpropagation, and seeded initialization.

use crate::activation::ActivationKind;
use crate::error::{CoreError, Result};
use crate::matrix::Matrix2D;
use rand::Rng;

/// Fully connected layer. Weights are `[out × in]`, row per output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix2D,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

impl DenseLayer {
    pub fn new(weights: Matrix2D, bias: Vec<f64>, activation: ActivationKind) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(CoreError::ShapeMismatch {
                context: "DenseLayer::new".into(),
                expected: format!("bias of length {}", weights.rows()),
                actual: format!("bias of length {}", bias.len()),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-style uniform initialization in ±√(6 / (fan_in + fan_out)).
    pub fn seeded(
        input_dim: usize,
        output_dim: usize,
        activation: ActivationKind,
        rng: &mut impl Rng,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        let data = (0..output_dim * input_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            weights: Matrix2D::from_vec(output_dim, input_dim, data).expect("sized"),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Per-layer values kept from a forward pass, sufficient for backward.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (first entry is the batch itself).
    pub inputs: Vec<Matrix2D>,
    /// Pre-activation values per layer.
    pub pre: Vec<Matrix2D>,
    /// Post-activation values per layer.
    pub post: Vec<Matrix2D>,
}

/// Parameter gradients in the same shapes as the model parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Matrix2D>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| Matrix2D::zeros(l.output_dim(), l.input_dim()))
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.output_dim()])
                .collect(),
        }
    }

    /// Flat view over all gradient buffers, layer by layer (weights then bias).
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::Empty("MlpModel::new".into()));
        }
        for i in 1..layers.len() {
            if layers[i].input_dim() != layers[i - 1].output_dim() {
                return Err(CoreError::LayerShape {
                    layer: i,
                    expected: layers[i - 1].output_dim(),
                    actual: layers[i].input_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Builds a seeded model from `dims = [in, h1, ..., out]` with one
    /// activation per layer.
    pub fn seeded(dims: &[usize], activations: &[ActivationKind], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(CoreError::ShapeMismatch {
                context: "MlpModel::seeded".into(),
                expected: format!("{} activations", dims.len().saturating_sub(1)),
                actual: format!("{} activations", activations.len()),
            });
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, act)| DenseLayer::seeded(w[0], w[1], *act, rng))
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Forward pass over a batch (rows are samples). Returns the output and a
    /// cache sufficient for `backward`.
    pub fn forward(&self, batch: &Matrix2D) -> Result<(Matrix2D, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(CoreError::LayerShape {
                layer: 0,
                expected: self.input_dim(),
                actual: batch.cols(),
            });
        }
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut current = batch.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            if current.cols() != layer.input_dim() {
                return Err(CoreError::LayerShape {
                    layer: idx,
                    expected: layer.input_dim(),
                    actual: current.cols(),
                });
            }
            let mut pre = current.matmul_bt(&layer.weights)?;
            pre.add_row_vector(&layer.bias)?;
            let post = layer.activation.apply(&pre)?;
            cache.inputs.push(current);
            cache.pre.push(pre);
            cache.post.push(post.clone());
            current = post;
        }
        Ok((current, cache))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, batch: &Matrix2D) -> Result<Matrix2D> {
        Ok(self.forward(batch)?.0)
    }

    /// Backpropagation. `output_gradient` is dL/d(output) for the batch the
    /// cache was produced from; any batch normalization is expected to already
    /// be folded into it by the loss. Returns parameter gradients (summed over
    /// the batch) and the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix2D,
    ) -> Result<(Gradients, Matrix2D)> {
        self.check_cache(cache, output_gradient)?;
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = output_gradient.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let post = &cache.post[idx];
            let delta = match layer.activation {
                ActivationKind::Softmax => softmax_backward(post, &upstream),
                act => {
                    let mut d = upstream.clone();
                    for (dv, pv) in d.data_mut().iter_mut().zip(post.data()) {
                        *dv *= act.derivative_from_output(*pv);
                    }
                    d
                }
            };
            // dW = deltaᵀ · input, db = column sums of delta
            grads.weights[idx] = delta.matmul_at(&cache.inputs[idx])?;
            grads.biases[idx] = delta.col_sums();
            if idx > 0 {
                upstream = delta.matmul(&layer.weights)?;
            } else {
                upstream = delta.matmul(&layer.weights)?;
                return Ok((grads, upstream));
            }
        }
        unreachable!("model has at least one layer")
    }

    fn check_cache(&self, cache: &ForwardCache, output_gradient: &Matrix2D) -> Result<()> {
        if cache.inputs.len() != self.layers.len()
            || cache.pre.len() != self.layers.len()
            || cache.post.len() != self.layers.len()
        {
            return Err(CoreError::StaleCache(format!(
                "cache covers {} layers, model has {}",
                cache.post.len(),
                self.layers.len()
            )));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            if cache.inputs[idx].cols() != layer.input_dim()
                || cache.post[idx].cols() != layer.output_dim()
            {
                return Err(CoreError::StaleCache(format!(
                    "layer {idx} shapes do not match the model"
                )));
            }
        }
        let last = cache.post.last().expect("non-empty");
        if !output_gradient.same_shape(last) {
            return Err(CoreError::StaleCache(format!(
                "output gradient is {}x{}, cached output is {}x{}",
                output_gradient.rows(),
                output_gradient.cols(),
                last.rows(),
                last.cols()
            )));
        }
        Ok(())
    }

    /// Mutable flat views over all parameter buffers, layer by layer
    /// (weights then bias), matching `Gradients::slices` order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

/// Per-row softmax Jacobian product: delta_i = (diag(s) − s sᵀ) u_i.
fn softmax_backward(post: &Matrix2D, upstream: &Matrix2D) -> Matrix2D {
    let mut out = upstream.clone();
    let cols = post.cols();
    for r in 0..post.rows() {
        let s = post.row(r);
        let u = upstream.row(r);
        let dot: f64 = s.iter().zip(u).map(|(a, b)| a * b).sum();
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        for (o, (&sv, &uv)) in row.iter_mut().zip(s.iter().zip(u)) {
            *o = sv * (uv - dot);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(
            Matrix2D::identity(2),
            vec![0.0, 0.0],
            ActivationKind::Identity,
        )
        .unwrap();
        let model = MlpModel::new(vec![layer]).unwrap();
        let x = Matrix2D::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let (y, _) = model.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_weights_with_sigmoid_give_half() {
        let layer = DenseLayer::new(
            Matrix2D::zeros(3, 2),
            vec![0.0; 3],
            ActivationKind::Sigmoid,
        )
        .unwrap();
        let model = MlpModel::new(vec![layer]).unwrap();
        let x = Matrix2D::from_vec(2, 2, vec![5.0, -1.0, 0.3, 9.9]).unwrap();
        let (y, _) = model.forward(&x).unwrap();
        for v in y.data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn forward_matches_hand_rolled_multiply() {
        // random 3x2 layer on a random batch vs a naive per-element oracle
        let mut rng = stream_rng(5, "fwd-test", 0);
        let layer = DenseLayer::seeded(2, 3, ActivationKind::Identity, &mut rng);
        let model = MlpModel::new(vec![layer.clone()]).unwrap();
        let x = crate::rng::uniform_matrix(4, 2, -1.0, 1.0, &mut rng);
        let (y, _) = model.forward(&x).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = layer.bias[j];
                for k in 0..2 {
                    acc += x.get(i, k) * layer.weights.get(j, k);
                }
                assert!((y.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = stream_rng(6, "bwd-test", 0);
        let model = MlpModel::seeded(
            &[3, 4, 2],
            &[ActivationKind::Tanh, ActivationKind::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let x = crate::rng::uniform_matrix(5, 3, -1.0, 1.0, &mut rng);
        let (_, cache) = model.forward(&x).unwrap();
        let zero_grad = Matrix2D::zeros(5, 2);
        let (grads, input_grad) = model.backward(&cache, &zero_grad).unwrap();
        for w in &grads.weights {
            assert!(w.data().iter().all(|v| *v == 0.0));
        }
        for b in &grads.biases {
            assert!(b.iter().all(|v| *v == 0.0));
        }
        assert!(input_grad.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_squared_error_gradient_matches_closed_form() {
        // L = (1/B) Σ (w·x + b − y)², so dL/dW = 2(pred − y)ᵀ x / B.
        let mut rng = stream_rng(7, "closed-form", 0);
        let layer = DenseLayer::seeded(3, 1, ActivationKind::Identity, &mut rng);
        let model = MlpModel::new(vec![layer]).unwrap();
        let x = crate::rng::uniform_matrix(4, 3, -1.0, 1.0, &mut rng);
        let y = crate::rng::uniform_matrix(4, 1, -1.0, 1.0, &mut rng);
        let (pred, cache) = model.forward(&x).unwrap();
        let out_grad = pred.sub(&y).unwrap().scale(2.0 / 4.0);
        let (grads, _) = model.backward(&cache, &out_grad).unwrap();
        let expected = out_grad.matmul_at(&x).unwrap();
        assert!(grads.weights[0].max_abs_diff(&expected).unwrap() < 1e-14);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = stream_rng(8, "stale", 0);
        let model = MlpModel::seeded(&[2, 3], &[ActivationKind::Tanh], &mut rng).unwrap();
        let other = MlpModel::seeded(
            &[2, 4, 3],
            &[ActivationKind::Tanh, ActivationKind::Identity],
            &mut rng,
        )
        .unwrap();
        let x = crate::rng::uniform_matrix(2, 2, -1.0, 1.0, &mut rng);
        let (_, cache) = model.forward(&x).unwrap();
        let grad = Matrix2D::zeros(2, 3);
        assert!(matches!(
            other.backward(&cache, &grad),
            Err(CoreError::StaleCache(_))
        ));
        let wrong_grad = Matrix2D::zeros(3, 3);
        assert!(matches!(
            model.backward(&cache, &wrong_grad),
            Err(CoreError::StaleCache(_))
        ));
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let mut rng = stream_rng(9, "dims", 0);
        let model = MlpModel::seeded(&[4, 2], &[ActivationKind::Identity], &mut rng).unwrap();
        let x = Matrix2D::zeros(1, 3);
        match model.forward(&x) {
            Err(CoreError::LayerShape { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected layer shape error, got {other:?}"),
        }
    }
}
