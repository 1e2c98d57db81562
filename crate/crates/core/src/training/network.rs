use thiserror::Error;

use crate::layers::{Layer, LayerError};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer {index} ({name}): {source}")]
    Layer {
        index: usize,
        name: String,
        #[source]
        source: LayerError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("gradient set does not match the network parameters: {0}")]
    Misaligned(String),
    #[error("network has no layers")]
    Empty,
    #[error("backward requires a training-mode forward pass")]
    NotTraining,
    #[error("label {label} is invalid for an output of size {outputs}")]
    InvalidLabel { label: usize, outputs: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// Ordered stack of layers. Layers are named `<kind><index>`, e.g. `conv0`,
/// `relu1`, `fc3`; names key checkpoint records and fine-tuning filters.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    names: Vec<String>,
    mode: Mode,
}

/// Parameter gradients, one list per layer in [`Layer::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    per_layer: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn new(per_layer: Vec<Vec<Tensor>>) -> Self {
        Self { per_layer }
    }

    /// All-zero gradients shaped like the parameters of `net`.
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            per_layer: net
                .layers
                .iter()
                .map(|l| l.params().iter().map(|p| p.map(|_| 0.0)).collect())
                .collect(),
        }
    }

    pub fn layer(&self, index: usize) -> &[Tensor] {
        &self.per_layer[index]
    }

    pub fn per_layer(&self) -> &[Vec<Tensor>] {
        &self.per_layer
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.per_layer.iter().flatten()
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<(), NetworkError> {
        if self.per_layer.len() != other.per_layer.len() {
            return Err(NetworkError::Misaligned(format!(
                "{} layers vs {}",
                self.per_layer.len(),
                other.per_layer.len()
            )));
        }
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            if a.len() != b.len() {
                return Err(NetworkError::Misaligned("parameter count differs".into()));
            }
            for (ta, tb) in a.iter_mut().zip(b) {
                ta.add_scaled_assign(tb, 1.0)?;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.per_layer.iter_mut().flatten() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }
}

impl Default for Network {
    fn default() -> Self {
        Self::new()
    }
}

impl Network {
    pub fn new() -> Self {
        Self {
            layers: Vec::new(),
            names: Vec::new(),
            mode: Mode::Training,
        }
    }

    pub fn push(&mut self, layer: impl Into<Layer>) -> &mut Self {
        let layer = layer.into();
        let name = format!("{}{}", layer.kind().tag(), self.layers.len());
        self.push_named(name, layer)
    }

    pub fn push_named(&mut self, name: impl Into<String>, layer: impl Into<Layer>) -> &mut Self {
        self.layers.push(layer.into());
        self.names.push(name.into());
        self
    }

    pub fn with(mut self, layer: impl Into<Layer>) -> Self {
        self.push(layer);
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Switching to inference drops every cached activation.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        if mode == Mode::Inference {
            self.layers.iter_mut().for_each(Layer::clear_cache);
        }
    }

    fn wrap(&self, index: usize) -> impl FnOnce(LayerError) -> NetworkError + '_ {
        move |source| NetworkError::Layer {
            index,
            name: self.names[index].clone(),
            source,
        }
    }

    /// Propagates shapes through every layer, failing at the first layer
    /// whose input does not fit. Returns the output shape of each layer.
    pub fn check_shapes(&self, input: &[usize]) -> Result<Vec<Vec<usize>>, NetworkError> {
        if self.layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut shape = input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(self.wrap(i))?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Forward pass without caching; usable on a shared network.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, NetworkError> {
        if self.layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.infer(&x).map_err(self.wrap(i))?;
        }
        Ok(x)
    }

    /// Forward pass. In training mode every layer caches what its backward
    /// pass needs; in inference mode this is [`Network::predict`].
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor, NetworkError> {
        Ok(self
            .forward_trace(input)?
            .pop()
            .expect("network is non-empty"))
    }

    /// Like [`Network::forward`] but returns the output of every layer.
    pub fn forward_trace(&mut self, input: &Tensor) -> Result<Vec<Tensor>, NetworkError> {
        if self.layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for i in 0..self.layers.len() {
            let x = outputs.last().unwrap_or(input);
            let y = match self.mode {
                Mode::Training => self.layers[i].forward(x),
                Mode::Inference => self.layers[i].infer(x),
            }
            .map_err(|source| NetworkError::Layer {
                index: i,
                name: self.names[i].clone(),
                source,
            })?;
            outputs.push(y);
        }
        Ok(outputs)
    }

    /// Reverse traversal from `loss_grad` (the gradient with respect to the
    /// final output).
    pub fn backward(&self, loss_grad: &Tensor) -> Result<Gradients, NetworkError> {
        Ok(self.backward_trace(loss_grad)?.0)
    }

    /// Parameter gradients plus the gradient with respect to each layer's
    /// input (index `i` holds `dL/d(input of layer i)`).
    pub fn backward_trace(
        &self,
        loss_grad: &Tensor,
    ) -> Result<(Gradients, Vec<Tensor>), NetworkError> {
        if self.mode != Mode::Training {
            return Err(NetworkError::NotTraining);
        }
        if self.layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let n = self.layers.len();
        let mut per_layer = vec![Vec::new(); n];
        let mut input_grads = vec![None; n];
        let mut g = loss_grad.clone();
        for i in (0..n).rev() {
            let (gx, gp) = self.layers[i].backward(&g).map_err(self.wrap(i))?;
            per_layer[i] = gp;
            input_grads[i] = Some(gx.clone());
            g = gx;
        }
        Ok((
            Gradients { per_layer },
            input_grads.into_iter().map(|g| g.expect("filled")).collect(),
        ))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.len())
            .sum()
    }

    pub fn output_size(&self, input: &[usize]) -> Result<usize, NetworkError> {
        Ok(self
            .check_shapes(input)?
            .last()
            .map(|s| s.iter().product())
            .unwrap_or(0))
    }
}

/// `p <- p - lr * g` for every parameter.
pub fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) -> Result<(), NetworkError> {
    sgd_step_masked(net, grads, lr, &[])
}

/// SGD update that leaves the named layers untouched.
pub fn sgd_step_masked(
    net: &mut Network,
    grads: &Gradients,
    lr: f64,
    frozen: &[String],
) -> Result<(), NetworkError> {
    if grads.per_layer.len() != net.layers.len() {
        return Err(NetworkError::Misaligned(format!(
            "{} gradient groups for {} layers",
            grads.per_layer.len(),
            net.layers.len()
        )));
    }
    for (li, (layer, g)) in net.layers.iter().zip(&grads.per_layer).enumerate() {
        let params = layer.params();
        if params.len() != g.len() || params.iter().zip(g).any(|(p, g)| !p.same_shape(g)) {
            return Err(NetworkError::Misaligned(format!(
                "layer {li} ({})",
                net.names[li]
            )));
        }
    }
    for ((layer, g), name) in net.layers.iter_mut().zip(&grads.per_layer).zip(&net.names) {
        if frozen.contains(name) {
            continue;
        }
        for (p, gp) in layer.params_mut().into_iter().zip(g) {
            p.add_scaled_assign(gp, -lr)?;
        }
    }
    Ok(())
}
