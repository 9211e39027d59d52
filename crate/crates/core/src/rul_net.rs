//! Feed-forward RUL regressor trained with Adam on mean squared error.
//!
//! The network is a stack of dense layers with ReLU on every layer, including
//! the single output unit, so predictions are never negative. The default
//! architecture is `[d, 70, 6, 1]`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmapss_io::{CycleTable, DataSplit, FeatureRange};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const HIDDEN_LAYERS: [usize; 2] = [70, 6];

/// Layer sizes of the default architecture for `n_features` inputs.
pub fn default_dims(n_features: usize) -> Vec<usize> {
    let mut dims = vec![n_features];
    dims.extend(HIDDEN_LAYERS);
    dims.push(1);
    dims
}

/// Weights (`fan_in x fan_out`, row-major) and biases of one dense layer.
/// The same shape carries gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, o: usize) -> f64 {
        self.weights[i * self.fan_out + o]
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput(
                "batch size and epochs must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return Err(Error::InvalidInput("Adam constants out of range".into()));
        }
        Ok(())
    }
}

/// Network parameters plus Adam accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorState {
    dims: Vec<usize>,
    layers: Vec<LayerParams>,
    adam_m: Vec<LayerParams>,
    adam_v: Vec<LayerParams>,
    step_count: u64,
}

/// Gradient of the loss with respect to every layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<LayerParams>);

/// RMSE on both splits after an epoch; epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRmse {
    pub epoch: usize,
    pub train: f64,
    pub test: Option<f64>,
}

fn zero_like(layers: &[LayerParams]) -> Vec<LayerParams> {
    layers
        .iter()
        .map(|l| LayerParams::zeros(l.fan_in, l.fan_out))
        .collect()
}

impl RegressorState {
    /// Glorot-uniform weights, zero biases, zero Adam moments.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers: Vec<LayerParams> = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut l = LayerParams::zeros(fan_in, fan_out);
                for v in &mut l.weights {
                    *v = rng.random_range(-limit..=limit);
                }
                l
            })
            .collect();
        Self::from_layers(layers)
    }

    /// Wraps explicit parameters; layer shapes must chain.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput(
                "network needs at least one layer".into(),
            ));
        }
        let mut dims = vec![layers[0].fan_in];
        for (k, l) in layers.iter().enumerate() {
            if l.fan_in != *dims.last().unwrap() {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs but previous layer emits {}",
                    l.fan_in,
                    dims.last().unwrap()
                )));
            }
            if l.weights.len() != l.fan_in * l.fan_out || l.biases.len() != l.fan_out {
                return Err(Error::Shape(format!(
                    "layer {k} parameter lengths are inconsistent"
                )));
            }
            dims.push(l.fan_out);
        }
        validate_dims(&dims)?;
        Ok(Self {
            adam_m: zero_like(&layers),
            adam_v: zero_like(&layers),
            dims,
            layers,
            step_count: 0,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn adam_moments(&self) -> (&[LayerParams], &[LayerParams]) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.ncols() != self.n_inputs() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    /// One prediction per batch row.
    pub fn forward(&self, batch: &Matrix) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        Ok(self.forward_unchecked(batch))
    }

    pub(crate) fn forward_unchecked(&self, batch: &Matrix) -> Vec<f64> {
        let mut input = batch.as_slice().to_vec();
        let mut output = Vec::new();
        for layer in &self.layers {
            dense_relu(layer, &input, batch.nrows(), &mut output);
            std::mem::swap(&mut input, &mut output);
        }
        input
    }

    /// Mean-squared-error loss and its exact gradient on one batch.
    pub fn backprop(&self, batch: &Matrix, targets: &[f64]) -> Result<(f64, Gradients)> {
        self.check_batch(batch)?;
        if targets.len() != batch.nrows() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "{} targets for {} rows",
                targets.len(),
                batch.nrows()
            )));
        }
        let n = batch.nrows();
        // activations[k] is the input to layer k (post-ReLU of layer k-1).
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.as_slice().to_vec());
        for layer in &self.layers {
            let mut out = Vec::new();
            dense_relu(layer, activations.last().unwrap(), n, &mut out);
            activations.push(out);
        }
        let preds = activations.last().unwrap();
        let mut loss = 0.0;
        let mut delta: Vec<f64> = preds
            .iter()
            .zip(targets)
            .map(|(p, t)| {
                loss += (p - t) * (p - t);
                2.0 * (p - t) / n as f64
            })
            .collect();
        loss /= n as f64;

        let mut grads = zero_like(&self.layers);
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (fi, fo) = (layer.fan_in, layer.fan_out);
            let out = &activations[k + 1];
            let input = &activations[k];
            // ReLU'(z) is 1 where the post-activation is positive.
            for (d, a) in delta.iter_mut().zip(out) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let g = &mut grads[k];
            for r in 0..n {
                let dr = &delta[r * fo..(r + 1) * fo];
                let xr = &input[r * fi..(r + 1) * fi];
                for (b, d) in g.biases.iter_mut().zip(dr) {
                    *b += d;
                }
                for (i, &x) in xr.iter().enumerate() {
                    if x != 0.0 {
                        for (w, d) in g.weights[i * fo..(i + 1) * fo].iter_mut().zip(dr) {
                            *w += x * d;
                        }
                    }
                }
            }
            if k > 0 {
                let mut next = vec![0.0; n * fi];
                for r in 0..n {
                    let dr = &delta[r * fo..(r + 1) * fo];
                    for (i, slot) in next[r * fi..(r + 1) * fi].iter_mut().enumerate() {
                        let row = &layer.weights[i * fo..(i + 1) * fo];
                        *slot = row.iter().zip(dr).map(|(w, d)| w * d).sum();
                    }
                }
                delta = next;
            }
        }
        Ok((loss, Gradients(grads)))
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &Gradients, config: &TrainConfig) -> Result<()> {
        if grads.0.len() != self.layers.len() {
            return Err(Error::Shape("gradient layer count mismatch".into()));
        }
        for (k, (g, l)) in grads.0.iter().zip(&self.layers).enumerate() {
            if g.fan_in != l.fan_in || g.fan_out != l.fan_out || g.len() != l.len() {
                return Err(Error::Shape(format!(
                    "gradient shape mismatch in layer {k}"
                )));
            }
            if g.values().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: k });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (config.beta1, config.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = config.learning_rate;
        for k in 0..self.layers.len() {
            let params = self.layers[k].values_mut();
            let m = self.adam_m[k].values_mut();
            let v = self.adam_v[k].values_mut();
            for (((p, m), v), g) in params.zip(m).zip(v).zip(grads.0[k].values()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
        Ok(())
    }

    /// Mini-batch training; returns RMSE per epoch (index 0 = before training).
    pub fn train(
        &mut self,
        train: &DataSplit,
        test: Option<&DataSplit>,
        config: &TrainConfig,
    ) -> Result<Vec<EpochRmse>> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        self.check_batch(&train.features)?;
        let d = self.n_inputs();
        let measure = |s: &Self, epoch: usize| -> Result<EpochRmse> {
            let tr = rmse(&s.forward_unchecked(&train.features), &train.targets)?;
            let te = match test {
                Some(t) if !t.is_empty() => {
                    Some(rmse(&s.forward_unchecked(&t.features), &t.targets)?)
                }
                _ => None,
            };
            if !tr.is_finite() || te.is_some_and(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            Ok(EpochRmse {
                epoch,
                train: tr,
                test: te,
            })
        };

        let mut history = vec![measure(self, 0)?];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut batch = Vec::with_capacity(config.batch_size * d);
        let mut targets = Vec::with_capacity(config.batch_size);
        for epoch in 1..=config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                batch.clear();
                targets.clear();
                for &i in chunk {
                    batch.extend_from_slice(train.features.row(i));
                    targets.push(train.targets[i]);
                }
                let m = Matrix::from_vec(chunk.len(), d, std::mem::take(&mut batch))?;
                let (_, grads) = self.backprop(&m, &targets)?;
                batch = m.into_vec();
                self.adam_step(&grads, config).map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => Error::Diverged { epoch },
                    other => other,
                })?;
            }
            history.push(measure(self, epoch)?);
        }
        Ok(history)
    }

    /// Predicted RUL for every row of a table normalized with training statistics.
    pub fn predict_rul(&self, table: &CycleTable) -> Result<Vec<f64>> {
        if !table.is_normalized() {
            return Err(Error::InvalidInput(
                "table must be normalized with the training statistics".into(),
            ));
        }
        self.forward(table.features())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidInput(
            "network needs input and output sizes".into(),
        ));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidInput(format!(
            "layer size at position {i} must be positive"
        )));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::InvalidInput(
            "regressor output layer must have one unit".into(),
        ));
    }
    Ok(())
}

/// `output = relu(input * W + b)` for `n` rows.
fn dense_relu(layer: &LayerParams, input: &[f64], n: usize, output: &mut Vec<f64>) {
    let (fi, fo) = (layer.fan_in, layer.fan_out);
    output.clear();
    output.resize(n * fo, 0.0);
    for (x, y) in input.chunks_exact(fi).zip(output.chunks_exact_mut(fo)) {
        y.copy_from_slice(&layer.biases);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let w = &layer.weights[i * fo..(i + 1) * fo];
                for (yo, wo) in y.iter_mut().zip(w) {
                    *yo += xi * wo;
                }
            }
        }
        for yo in y.iter_mut() {
            if *yo < 0.0 {
                *yo = 0.0;
            }
        }
    }
}

/// Mean of squared residuals.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("mse of an empty sequence".into()));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    mse(pred, target).map(f64::sqrt)
}

/// Everything needed to reuse a trained regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub state: RegressorState,
    pub feature_names: Vec<String>,
    pub normalization: Vec<FeatureRange>,
    pub config: TrainConfig,
    /// Content key of the inputs that produced this model.
    #[serde(default)]
    pub key: String,
}

impl SavedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SavedModel = serde_json::from_str(&text)?;
        if model.feature_names.len() != model.state.n_inputs()
            || model.normalization.len() != model.state.n_inputs()
        {
            return Err(Error::Shape(format!(
                "{}: metadata does not match network input size",
                path.display()
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(fan_in: usize, fan_out: usize, weights: &[f64], biases: &[f64]) -> LayerParams {
        LayerParams {
            fan_in,
            fan_out,
            weights: weights.to_vec(),
            biases: biases.to_vec(),
        }
    }

    #[test]
    fn init_is_seeded_and_shapes_chain() {
        let a = RegressorState::init(&[3, 70, 6, 1], 11).unwrap();
        let b = RegressorState::init(&[3, 70, 6, 1], 11).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<(usize, usize)> =
            a.layers().iter().map(|l| (l.fan_in, l.fan_out)).collect();
        assert_eq!(shapes, vec![(3, 70), (70, 6), (6, 1)]);
        assert_eq!(a.step_count(), 0);
        assert!(a
            .adam_moments()
            .0
            .iter()
            .all(|l| l.values().all(|v| *v == 0.0)));
        assert!(a
            .layers()
            .iter()
            .all(|l| l.biases.iter().all(|b| *b == 0.0)));
        let limit = (6.0f64 / 73.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert_ne!(a, RegressorState::init(&[3, 70, 6, 1], 12).unwrap());
    }

    #[test]
    fn init_rejects_zero_width() {
        assert!(RegressorState::init(&[3, 0, 6, 1], 0).is_err());
        assert!(RegressorState::init(&[0, 70, 6, 1], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let s = RegressorState::from_layers(vec![
            LayerParams::zeros(4, 70),
            LayerParams::zeros(70, 6),
            LayerParams::zeros(6, 1),
        ])
        .unwrap();
        let batch = Matrix::from_rows(&[vec![0.3, -0.2, 1.0, 0.9], vec![-1.0; 4]]).unwrap();
        assert_eq!(s.forward(&batch).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_three_layer_net() {
        // x -> [2x+1, 0.5x] -> relu -> [h1 + h2 - 1, 3 h2] -> relu -> 0.5 a + 2 b + 0.25
        let s = RegressorState::from_layers(vec![
            layer(1, 2, &[2.0, 0.5], &[1.0, 0.0]),
            layer(2, 2, &[1.0, 0.0, 1.0, 3.0], &[-1.0, 0.0]),
            layer(2, 1, &[0.5, 2.0], &[0.25]),
        ])
        .unwrap();
        // x = 2: h = (5, 1); a = 5, b = 3; out = 2.5 + 6 + 0.25
        let out = s
            .forward(&Matrix::from_rows(&[vec![2.0]]).unwrap())
            .unwrap();
        assert_eq!(out, vec![8.75]);
        // x = -1: h = (relu(-1), relu(-0.5)) = (0, 0); a = relu(-1) = 0, b = 0; out = 0.25
        let out = s
            .forward(&Matrix::from_rows(&[vec![-1.0]]).unwrap())
            .unwrap();
        assert_eq!(out, vec![0.25]);
    }

    #[test]
    fn negative_output_preactivation_clamps() {
        let s = RegressorState::from_layers(vec![
            layer(1, 1, &[1.0], &[0.0]),
            layer(1, 1, &[-1.0], &[-0.5]),
        ])
        .unwrap();
        let out = s
            .forward(&Matrix::from_rows(&[vec![3.0]]).unwrap())
            .unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let s = RegressorState::init(&[3, 70, 6, 1], 0).unwrap();
        assert!(s.forward(&Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(mse(&[4.5], &[2.0]).unwrap(), 6.25);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    fn scalar_net(w: f64) -> RegressorState {
        RegressorState::from_layers(vec![layer(1, 1, &[w], &[0.0])]).unwrap()
    }

    #[test]
    fn adam_single_step_moves_by_learning_rate() {
        let mut s = scalar_net(0.5);
        let g = Gradients(vec![layer(1, 1, &[1.0], &[0.0])]);
        s.adam_step(&g, &TrainConfig::default()).unwrap();
        // m = 0.1, v = 0.001, m_hat = v_hat = 1 -> step = 1e-4 / (1 + 1e-8)
        let expected = 0.5 - 1e-4 / (1.0 + 1e-8);
        assert!((s.layers()[0].weights[0] - expected).abs() < 1e-15);
        assert_eq!(s.layers()[0].biases[0], 0.0);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop_on_params() {
        let mut s = RegressorState::init(&[3, 70, 6, 1], 5).unwrap();
        let before = s.layers().to_vec();
        let g = Gradients(zero_like(s.layers()));
        s.adam_step(&g, &TrainConfig::default()).unwrap();
        assert_eq!(s.layers(), &before[..]);
    }

    #[test]
    fn adam_rejects_nan_gradient_naming_layer() {
        let mut s = RegressorState::init(&[2, 3, 1], 5).unwrap();
        let mut g = Gradients(zero_like(s.layers()));
        g.0[1].biases[0] = f64::NAN;
        assert!(matches!(
            s.adam_step(&g, &TrainConfig::default()),
            Err(Error::NonFiniteGradient { layer: 1 })
        ));
    }

    fn toy_split() -> DataSplit {
        DataSplit {
            indices: vec![0, 1],
            features: Matrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap(),
            targets: vec![10.0, 30.0],
        }
    }

    #[test]
    fn one_epoch_reduces_toy_rmse() {
        let mut s = RegressorState::init(&[1, 70, 6, 1], 3).unwrap();
        // Start with positive output bias so the output unit is active.
        s.layers_mut()[2].biases[0] = 1.0;
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 2,
            epochs: 1,
            ..Default::default()
        };
        let h = s.train(&toy_split(), None, &cfg).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h[1].train < h[0].train, "{h:?}");
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut s = RegressorState::init(&[1, 70, 6, 1], 3).unwrap();
        let before = s.layers().to_vec();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..Default::default()
        };
        let h = s.train(&toy_split(), Some(&toy_split()), &cfg).unwrap();
        assert_eq!(s.layers(), &before[..]);
        assert!(h
            .windows(2)
            .all(|w| w[0].train == w[1].train && w[0].test == w[1].test));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let mut s = RegressorState::init(&[1, 70, 6, 1], 3).unwrap();
        s.layers_mut()[2].biases[0] = 1.0;
        let cfg = TrainConfig {
            learning_rate: 1e306,
            epochs: 5,
            batch_size: 1,
            ..Default::default()
        };
        assert!(matches!(
            s.train(&toy_split(), None, &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn saved_model_roundtrips_bit_exactly() {
        let mut s = RegressorState::init(&[3, 70, 6, 1], 9).unwrap();
        let g = Gradients(
            s.layers()
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().map(|w| w.sin() / 3.0).collect(),
                    biases: l.biases.iter().map(|_| 1.0 / 7.0).collect(),
                    ..l.clone()
                })
                .collect(),
        );
        s.adam_step(&g, &TrainConfig::default()).unwrap();
        let model = SavedModel {
            state: s,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            normalization: vec![FeatureRange { min: 0.1, max: 0.7 }; 3],
            config: TrainConfig::default(),
            key: "k".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        model.save(&p).unwrap();
        let back = SavedModel::load(&p).unwrap();
        let bits = |m: &SavedModel| -> Vec<u64> {
            m.state
                .layers()
                .iter()
                .chain(m.state.adam_moments().0)
                .chain(m.state.adam_moments().1)
                .flat_map(|l| l.values().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(&back), bits(&model));
        assert_eq!(back, model);
    }
}
