//! Feed-forward pattern-recognition network trained with scaled conjugate
//! gradient (Møller, 1993).
//!
//! Hidden layers use `tanh`, the output layer is a softmax over classes and
//! the loss is the mean cross-entropy. For the binary churn task the output
//! has two units and class index 1 is churn.
//!
//! Parameters are exposed as one flat vector laid out layer by layer, each
//! layer contributing its weight matrix (row-major, `out x in`) followed by
//! its bias vector. Gradients use the same layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid layer sizes {0:?}: need at least two layers, each of size >= 1")]
    InvalidLayerSizes(Vec<usize>),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, trace: Box<TrainTrace> },
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activations {
    pub hidden: Activation,
    pub output: Activation,
}

impl Default for Activations {
    fn default() -> Self {
        Self {
            hidden: Activation::Tanh,
            output: Activation::Softmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activations: Activations,
    /// `weights[l]` is `layer_sizes[l + 1] x layer_sizes[l]`, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawModel {
    layer_sizes: Vec<usize>,
    #[serde(default)]
    activations: Activations,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl TryFrom<RawModel> for MlpModel {
    type Error = MlpError;

    fn try_from(raw: RawModel) -> Result<Self, Self::Error> {
        check_layer_sizes(&raw.layer_sizes)?;
        let layers = raw.layer_sizes.len() - 1;
        if raw.weights.len() != layers || raw.biases.len() != layers {
            return Err(MlpError::DimensionMismatch(format!(
                "{} weight and {} bias blocks for {layers} layers",
                raw.weights.len(),
                raw.biases.len()
            )));
        }
        for l in 0..layers {
            let (n_in, n_out) = (raw.layer_sizes[l], raw.layer_sizes[l + 1]);
            if raw.weights[l].len() != n_in * n_out || raw.biases[l].len() != n_out {
                return Err(MlpError::DimensionMismatch(format!("layer {l} has wrong shape")));
            }
        }
        Ok(Self {
            layer_sizes: raw.layer_sizes,
            activations: raw.activations,
            weights: raw.weights,
            biases: raw.biases,
        })
    }
}

fn check_layer_sizes(sizes: &[usize]) -> Result<(), MlpError> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(MlpError::InvalidLayerSizes(sizes.to_vec()));
    }
    Ok(())
}

/// Glorot-uniform weights in `[-r, r]`, `r = sqrt(6 / (fan_in + fan_out))`,
/// and zero biases. Weights are drawn layer by layer in row-major order.
pub fn init_model(layer_sizes: &[usize], seed: u64) -> Result<MlpModel, MlpError> {
    check_layer_sizes(layer_sizes)?;
    let mut rng = SplitMix64::new(seed);
    let mut model = MlpModel::zeros(layer_sizes)?;
    for (l, w) in model.weights.iter_mut().enumerate() {
        let r = (6.0 / (layer_sizes[l] + layer_sizes[l + 1]) as f64).sqrt();
        for v in w.iter_mut() {
            *v = rng.uniform(-r, r);
        }
    }
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes `log softmax(z)` into `z` and returns nothing; stable for large logits.
fn log_softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    for v in z.iter_mut() {
        *v -= lse;
    }
}

impl MlpModel {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, MlpError> {
        check_layer_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activations: Activations::default(),
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> Activations {
        self.activations
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// `(rows, cols)` of each weight matrix.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layer_sizes.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), MlpError> {
        if flat.len() != self.n_params() {
            return Err(MlpError::DimensionMismatch(format!(
                "{} parameters given, model has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn batch_rows(&self, x: &[f64]) -> Result<usize, MlpError> {
        let n_in = self.n_inputs();
        if x.is_empty() || !x.len().is_multiple_of(n_in) {
            return Err(MlpError::DimensionMismatch(format!(
                "input of length {} is not a non-empty batch of {n_in}-vectors",
                x.len()
            )));
        }
        Ok(x.len() / n_in)
    }

    /// Activations of every layer for one sample; the last entry holds
    /// log-probabilities.
    fn forward_sample(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let n_in = self.layer_sizes[l];
            let input = &acts[l];
            let mut z: Vec<f64> = self.weights[l]
                .chunks_exact(n_in)
                .zip(&self.biases[l])
                .map(|(row, b)| dot(row, input) + b)
                .collect();
            if l + 1 == layers {
                log_softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for a row-major batch; returns `rows x n_out`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        let n_in = self.n_inputs();
        self.batch_rows(x)?;
        Ok(x.chunks_exact(n_in)
            .flat_map(|row| {
                let mut acts = self.forward_sample(row);
                let mut out = acts.pop().unwrap();
                out.iter_mut().for_each(|v| *v = v.exp());
                out
            })
            .collect())
    }

    fn check_targets(&self, x: &[f64], y: &[f64]) -> Result<usize, MlpError> {
        let rows = self.batch_rows(x)?;
        if y.len() != rows * self.n_outputs() {
            return Err(MlpError::DimensionMismatch(format!(
                "{} target values for {rows} samples of {} classes",
                y.len(),
                self.n_outputs()
            )));
        }
        Ok(rows)
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, x: &[f64], y: &[f64]) -> Result<f64, MlpError> {
        let rows = self.check_targets(x, y)?;
        let n_out = self.n_outputs();
        let total: f64 = x
            .chunks_exact(self.n_inputs())
            .zip(y.chunks_exact(n_out))
            .map(|(xi, yi)| {
                let logp = self.forward_sample(xi).pop().unwrap();
                -dot(yi, &logp)
            })
            .sum();
        Ok(total / rows as f64)
    }

    /// Mean cross-entropy and its gradient by backpropagation, in the flat
    /// parameter layout. Samples are accumulated in stored row order.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>), MlpError> {
        let rows = self.check_targets(x, y)?;
        let n_out = self.n_outputs();
        let layers = self.weights.len();
        let mut grad_w: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut grad_b: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut total = 0.0;
        let scale = 1.0 / rows as f64;

        for (xi, yi) in x.chunks_exact(self.n_inputs()).zip(y.chunks_exact(n_out)) {
            let acts = self.forward_sample(xi);
            let logp = &acts[layers];
            total -= dot(yi, logp);
            // d(-sum y log p)/dz = p * sum(y) - y
            let ysum: f64 = yi.iter().sum();
            let mut delta: Vec<f64> = logp
                .iter()
                .zip(yi)
                .map(|(lp, t)| (lp.exp() * ysum - t) * scale)
                .collect();
            for l in (0..layers).rev() {
                let input = &acts[l];
                let n_in = self.layer_sizes[l];
                for (k, &dk) in delta.iter().enumerate() {
                    let row = &mut grad_w[l][k * n_in..(k + 1) * n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += dk * a;
                    }
                    grad_b[l][k] += dk;
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..n_in)
                        .map(|j| {
                            let back: f64 = delta.iter().enumerate().map(|(k, dk)| w[k * n_in + j] * dk).sum();
                            back * (1.0 - input[j] * input[j])
                        })
                        .collect();
                }
            }
        }

        let mut flat = Vec::with_capacity(self.n_params());
        for (w, b) in grad_w.into_iter().zip(grad_b) {
            flat.extend(w);
            flat.extend(b);
        }
        Ok((total * scale, flat))
    }
}

/// One-hot encoding of binary labels as two-class targets (index 1 = label 1).
pub fn one_hot(labels: &[u8]) -> Vec<f64> {
    labels
        .iter()
        .flat_map(|&l| if l == 1 { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect()
}

/// Inputs and one-hot targets for one partition of the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub rows: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, rows: usize) -> Self {
        Self {
            inputs,
            targets,
            rows,
        }
    }

    pub fn from_labels(inputs: Vec<f64>, labels: &[u8]) -> Self {
        Self::new(inputs, one_hot(labels), labels.len())
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionedData {
    pub train: Batch,
    pub validation: Batch,
    pub test: Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub max_validation_failures: usize,
    pub min_gradient_norm: f64,
    /// Finite-difference scale for the second-order estimate.
    pub sigma: f64,
    /// Initial Levenberg–Marquardt scaling.
    pub lambda_init: f64,
    /// Seed for weight initialization when the caller builds the model.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            max_validation_failures: 6,
            min_gradient_norm: 1e-6,
            sigma: 5.0e-5,
            lambda_init: 5.0e-7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if self.max_validation_failures == 0 {
            return Err(MlpError::InvalidConfig("max_validation_failures must be >= 1".into()));
        }
        for (name, v) in [
            ("min_gradient_norm", self.min_gradient_norm),
            ("sigma", self.sigma),
            ("lambda_init", self.lambda_init),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MlpError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sigma >= 1e-2 {
            return Err(MlpError::InvalidConfig(format!("sigma must be small, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    ValidationFailures,
    MinGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned; `None` without a validation set.
    pub best_validation_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl Default for TrainTrace {
    fn default() -> Self {
        Self::new()
    }
}

impl TrainTrace {
    fn new() -> Self {
        Self {
            epochs: Vec::new(),
            best_validation_epoch: None,
            stop_reason: StopReason::MaxEpochs,
        }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn summary(&self) -> TraceSummary {
        let best = self
            .best_validation_epoch
            .and_then(|e| self.epochs.iter().find(|r| r.epoch == e));
        TraceSummary {
            epochs_run: self.epochs.len(),
            best_validation_epoch: self.best_validation_epoch,
            best_validation_loss: best.and_then(|r| r.validation_loss),
            final_train_loss: self.epochs.last().map(|r| r.train_loss),
            stop_reason: self.stop_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub epochs_run: usize,
    pub best_validation_epoch: Option<usize>,
    pub best_validation_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub stop_reason: StopReason,
}

fn check_batch(model: &MlpModel, b: &Batch, name: &str) -> Result<(), MlpError> {
    if b.inputs.len() != b.rows * model.n_inputs() || b.targets.len() != b.rows * model.n_outputs() {
        return Err(MlpError::DimensionMismatch(format!(
            "{name} batch does not match a {}-input, {}-output model",
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    Ok(())
}

fn optional_loss(model: &MlpModel, b: &Batch) -> Result<Option<f64>, MlpError> {
    if b.is_empty() {
        Ok(None)
    } else {
        model.loss(&b.inputs, &b.targets).map(Some)
    }
}

/// Full-batch scaled conjugate gradient with early stopping.
///
/// One SCG iteration is one epoch. Each iteration estimates the curvature
/// along the search direction from a gradient difference at distance
/// `sigma / |p|`, regularizes it with a Levenberg–Marquardt term `lambda`,
/// and takes the resulting step only if it lowers the training loss.
/// `lambda` grows after poor quadratic agreement and shrinks after good
/// agreement; the direction restarts at steepest descent every `N` iterations
/// (`N` = number of parameters).
///
/// When a validation batch is present, the returned weights are those of the
/// epoch with the lowest validation loss and training stops after
/// `max_validation_failures` consecutive epochs with higher validation loss.
pub fn train_scg(
    model: &MlpModel,
    data: &PartitionedData,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainTrace), MlpError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(MlpError::EmptyTrainingSet);
    }
    check_batch(model, &data.train, "training")?;
    check_batch(model, &data.validation, "validation")?;
    check_batch(model, &data.test, "test")?;

    let mut trace = TrainTrace::new();
    if cfg.max_epochs == 0 {
        return Ok((model.clone(), trace));
    }

    let n_params = model.n_params();
    let mut work = model.clone();
    let train = &data.train;
    let mut eval = |w: &[f64]| -> Result<(f64, Vec<f64>), MlpError> {
        work.set_params(w)?;
        work.loss_and_gradient(&train.inputs, &train.targets)
    };

    let mut w = model.params();
    let (mut loss, mut grad) = eval(&w)?;
    if !loss.is_finite() {
        return Err(MlpError::NonFiniteLoss {
            epoch: 0,
            trace: Box::new(trace),
        });
    }
    if dot(&grad, &grad).sqrt() < cfg.min_gradient_norm {
        trace.stop_reason = StopReason::MinGradient;
        return Ok((model.clone(), trace));
    }

    let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = r.clone();
    let mut success = true;
    let mut lambda = cfg.lambda_init;
    let mut lambda_bar = 0.0;
    let mut delta = 0.0;

    let has_validation = !data.validation.is_empty();
    let mut best_w = w.clone();
    let mut best_val = f64::INFINITY;
    let mut failures = 0usize;
    let mut snapshot = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let p2 = dot(&p, &p);
        if success {
            let sigma_k = cfg.sigma / p2.sqrt();
            let probe: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + sigma_k * pi).collect();
            let (_, g_probe) = eval(&probe)?;
            delta = g_probe
                .iter()
                .zip(&grad)
                .zip(&p)
                .map(|((gp, g), pi)| (gp - g) / sigma_k * pi)
                .sum();
        }

        delta += (lambda - lambda_bar) * p2;
        if delta <= 0.0 {
            // Force a positive-definite curvature estimate.
            lambda_bar = 2.0 * (lambda - delta / p2);
            delta = -delta + lambda * p2;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        let candidate: Vec<f64> = w.iter().zip(&p).map(|(wi, pi)| wi + alpha * pi).collect();
        let (cand_loss, cand_grad) = eval(&candidate)?;
        if !cand_loss.is_finite() {
            return Err(MlpError::NonFiniteLoss {
                epoch,
                trace: Box::new(trace),
            });
        }
        let comparison = 2.0 * delta * (loss - cand_loss) / (mu * mu);

        if comparison.is_finite() && comparison >= 0.0 {
            w = candidate;
            loss = cand_loss;
            let r_new: Vec<f64> = cand_grad.iter().map(|g| -g).collect();
            lambda_bar = 0.0;
            success = true;
            if epoch % n_params == 0 {
                p = r_new.clone();
            } else {
                let beta = (dot(&r_new, &r_new) - dot(&r_new, &r)) / mu;
                p = r_new.iter().zip(&p).map(|(rn, pi)| rn + beta * pi).collect();
            }
            r = r_new;
            grad = cand_grad;
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
        } else if !comparison.is_finite() {
            // mu == 0: the direction carries no descent; restart from the gradient.
            p = r.clone();
            lambda_bar = 0.0;
            success = true;
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison.is_finite() && comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / p2;
        }

        snapshot.set_params(&w)?;
        let validation_loss = optional_loss(&snapshot, &data.validation)?;
        let test_loss = optional_loss(&snapshot, &data.test)?;
        let gradient_norm = dot(&grad, &grad).sqrt();
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: loss,
            validation_loss,
            test_loss,
            gradient_norm,
        });
        if validation_loss.is_some_and(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteLoss {
                epoch,
                trace: Box::new(trace),
            });
        }

        if let Some(v) = validation_loss {
            if v < best_val {
                best_val = v;
                best_w.clone_from(&w);
                trace.best_validation_epoch = Some(epoch);
                failures = 0;
            } else if v > best_val {
                failures += 1;
            }
        }

        if gradient_norm < cfg.min_gradient_norm {
            trace.stop_reason = StopReason::MinGradient;
            break;
        }
        if has_validation && failures >= cfg.max_validation_failures {
            trace.stop_reason = StopReason::ValidationFailures;
            break;
        }
    }

    if !has_validation {
        best_w = w;
    }
    let mut trained = model.clone();
    trained.set_params(&best_w)?;
    Ok((trained, trace))
}

/// Label 1 iff the churn-class probability is at least `threshold`.
pub fn predict(model: &MlpModel, x: &[f64], threshold: f64) -> Result<Vec<u8>, MlpError> {
    let probs = model.forward(x)?;
    labels_from_probabilities(&probs, model.n_outputs(), threshold)
}

/// Applies the threshold rule to `rows x n_out` probabilities (class index 1
/// is the positive class). Exact ties go to label 1.
pub fn labels_from_probabilities(probs: &[f64], n_out: usize, threshold: f64) -> Result<Vec<u8>, MlpError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MlpError::InvalidThreshold(threshold));
    }
    if n_out < 2 || !probs.len().is_multiple_of(n_out) {
        return Err(MlpError::DimensionMismatch(format!(
            "{} probabilities cannot be split into rows of {n_out} classes",
            probs.len()
        )));
    }
    Ok(probs
        .chunks_exact(n_out)
        .map(|row| u8::from(row[1] >= threshold))
        .collect())
}
