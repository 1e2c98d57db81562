//! Losses, stochastic gradient descent with backpropagation, checkpoints,
//! fine-tuning and the gradient-check harness.

pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod templates;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub use checkpoint::{fine_tune_init, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, Record};
pub use network::{sgd_step, sgd_step_masked, Gradients, Mode, Network, NetworkError};

/// Predicted probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before
/// taking logarithms.
pub const PROB_CLIP: f64 = 1e-12;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Binary cross-entropy `-(y ln p + (1-y) ln(1-p))` and its derivative with
/// respect to `p`.
pub fn bce_loss(y: f64, y_hat: f64) -> (f64, f64) {
    let p = clip(y_hat);
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = -y / p + (1.0 - y) / (1.0 - p);
    (loss, grad)
}

/// `-ln probs[class]` and the gradient with respect to `probs`. Composed with
/// the softmax backward pass this yields `probs - onehot(class)` at the logits.
pub fn cross_entropy_loss(true_class: usize, probs: &Tensor) -> Result<(f64, Tensor), NetworkError> {
    if true_class >= probs.len() {
        return Err(NetworkError::InvalidLabel {
            label: true_class,
            outputs: probs.len(),
        });
    }
    let p = clip(probs.data()[true_class]);
    let mut grad = Tensor::zeros(probs.shape())?;
    grad.data_mut()[true_class] = -1.0 / p;
    Ok((-p.ln(), grad))
}

/// Gradient of softmax cross-entropy with respect to the logits.
pub fn softmax_cross_entropy_logit_grad(true_class: usize, probs: &Tensor) -> Tensor {
    let mut g = probs.clone();
    g.data_mut()[true_class] -= 1.0;
    g
}

/// Which loss pairs with the network head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Softmax head, class index labels.
    CrossEntropy,
    /// Single sigmoid output, labels 0 or 1.
    BinaryCrossEntropy,
}

impl Objective {
    pub fn validate_label(&self, label: usize, outputs: usize) -> Result<(), NetworkError> {
        let ok = match self {
            Objective::CrossEntropy => label < outputs,
            Objective::BinaryCrossEntropy => outputs == 1 && label <= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(NetworkError::InvalidLabel { label, outputs })
        }
    }

    pub fn loss_and_grad(&self, output: &Tensor, label: usize) -> Result<(f64, Tensor), NetworkError> {
        self.validate_label(label, output.len())?;
        match self {
            Objective::CrossEntropy => cross_entropy_loss(label, output),
            Objective::BinaryCrossEntropy => {
                let (loss, g) = bce_loss(label as f64, output.data()[0]);
                Ok((loss, Tensor::from_values(output.shape(), vec![g])?))
            }
        }
    }

    pub fn predict_label(&self, output: &Tensor) -> usize {
        match self {
            Objective::CrossEntropy => output.argmax(),
            Objective::BinaryCrossEntropy => usize::from(output.data()[0] >= 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

impl Sample {
    pub fn new(input: Tensor, label: usize) -> Self {
        Self { input, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<(), NetworkError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetworkError::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NetworkError::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// First epoch (1-based) whose training accuracy is at least `threshold`.
    pub fn epochs_to_accuracy(&self, threshold: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.accuracy >= threshold)
            .map(|e| e.epoch)
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }

    /// CSV with header `epoch,mean_loss,train_accuracy`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,mean_loss,train_accuracy")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.mean_loss, e.accuracy)?;
        }
        Ok(())
    }
}

/// Mean loss and accuracy of `net` over `data` without touching its caches.
pub fn evaluate(net: &Network, data: &[Sample], objective: Objective) -> Result<(f64, f64), NetworkError> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in data {
        let out = net.predict(&s.input)?;
        loss += objective.loss_and_grad(&out, s.label)?.0;
        if objective.predict_label(&out) == s.label {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mean gradient of the loss over `batch`.
pub fn batch_gradients(
    net: &mut Network,
    batch: &[&Sample],
    objective: Objective,
) -> Result<(f64, Gradients), NetworkError> {
    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for s in batch {
        let out = net.forward(&s.input)?;
        let (l, g) = objective.loss_and_grad(&out, s.label)?;
        loss += l;
        total.accumulate(&net.backward(&g)?)?;
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss * scale, total))
}

/// Mini-batch SGD. Each epoch shuffles the sample order with a generator
/// seeded from `config.seed`, so identical inputs give identical histories.
/// Per-epoch statistics are measured on the full dataset after the epoch's
/// updates.
pub fn train(
    net: &mut Network,
    data: &[Sample],
    config: &SgdConfig,
    objective: Objective,
) -> Result<History, NetworkError> {
    train_with_frozen(net, data, config, objective, &[])
}

/// [`train`] that never updates the layers named in `frozen`.
pub fn train_with_frozen(
    net: &mut Network,
    data: &[Sample],
    config: &SgdConfig,
    objective: Objective,
    frozen: &[String],
) -> Result<History, NetworkError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    for name in frozen {
        if net.index_of(name).is_none() {
            return Err(NetworkError::UnknownLayer(name.clone()));
        }
    }
    for s in data {
        let outputs = net.output_size(s.input.shape())?;
        objective.validate_label(s.label, outputs)?;
    }
    net.set_mode(Mode::Training);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (_, grads) = batch_gradients(net, &batch, objective)?;
            sgd_step_masked(net, &grads, config.learning_rate, frozen)?;
        }
        let (mean_loss, accuracy) = evaluate(net, data, objective)?;
        history.epochs.push(EpochStats {
            epoch,
            mean_loss,
            accuracy,
        });
    }
    Ok(history)
}
