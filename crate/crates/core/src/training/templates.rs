//! Ready-made architectures used by the CLI and the test suites.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{Conv2D, FullyConnected, Layer, MaxPool, Relu, Sigmoid, Softmax};

use super::network::{Network, NetworkError};

/// Number of feature maps in the first convolution of every template.
pub const CONV_FILTERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// conv3x3 -> relu -> maxpool2 -> fc -> softmax
    Cnn,
    /// conv3x3 -> relu -> maxpool2 -> fc(1) -> sigmoid
    BinaryCnn,
    /// conv3x3 -> relu -> conv3x3 -> relu -> maxpool2 -> fc -> softmax
    DeepCnn,
    /// fc -> relu -> fc -> softmax on the flattened input
    Mlp,
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn" => Ok(Architecture::Cnn),
            "binary-cnn" => Ok(Architecture::BinaryCnn),
            "deep-cnn" => Ok(Architecture::DeepCnn),
            "mlp" => Ok(Architecture::Mlp),
            other => Err(format!(
                "unknown architecture {other:?} (expected cnn, binary-cnn, deep-cnn or mlp)"
            )),
        }
    }
}

impl Architecture {
    /// Builds a freshly initialized network for `(channels, height, width)`
    /// inputs. `classes` is ignored by [`Architecture::BinaryCnn`].
    pub fn build(
        self,
        input: (usize, usize, usize),
        classes: usize,
        seed: u64,
    ) -> Result<Network, NetworkError> {
        match self {
            Architecture::Cnn => small_cnn(input, classes, seed),
            Architecture::BinaryCnn => binary_cnn(input, seed),
            Architecture::DeepCnn => deep_cnn(input, classes, seed),
            Architecture::Mlp => mlp(input.0 * input.1 * input.2, 8, classes, seed),
        }
    }
}

fn config(e: crate::layers::LayerError) -> NetworkError {
    NetworkError::Config(e.to_string())
}

/// Convolution stack shared by the CNN templates; pooling is added only when
/// the feature map divides evenly.
fn conv_trunk(
    net: &mut Network,
    input: (usize, usize, usize),
    depth: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize, NetworkError> {
    let (mut c, mut h, mut w) = input;
    for _ in 0..depth {
        if h < 3 || w < 3 {
            return Err(NetworkError::Config(format!("input {input:?} too small")));
        }
        net.push(Conv2D::init(c, CONV_FILTERS, 3, 1, rng).map_err(config)?);
        net.push(Layer::Relu(Relu::default()));
        c = CONV_FILTERS;
        h -= 2;
        w -= 2;
    }
    if h % 2 == 0 && w % 2 == 0 {
        net.push(MaxPool::new(2).map_err(config)?);
        h /= 2;
        w /= 2;
    }
    Ok(c * h * w)
}

pub fn small_cnn(input: (usize, usize, usize), classes: usize, seed: u64) -> Result<Network, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new();
    let flat = conv_trunk(&mut net, input, 1, &mut rng)?;
    net.push(FullyConnected::init(flat, classes, &mut rng).map_err(config)?);
    net.push(Layer::Softmax(Softmax::default()));
    Ok(net)
}

pub fn binary_cnn(input: (usize, usize, usize), seed: u64) -> Result<Network, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new();
    let flat = conv_trunk(&mut net, input, 1, &mut rng)?;
    net.push(FullyConnected::init(flat, 1, &mut rng).map_err(config)?);
    net.push(Layer::Sigmoid(Sigmoid::default()));
    Ok(net)
}

pub fn deep_cnn(input: (usize, usize, usize), classes: usize, seed: u64) -> Result<Network, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new();
    let flat = conv_trunk(&mut net, input, 2, &mut rng)?;
    net.push(FullyConnected::init(flat, classes, &mut rng).map_err(config)?);
    net.push(Layer::Softmax(Softmax::default()));
    Ok(net)
}

pub fn mlp(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Result<Network, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new();
    net.push(FullyConnected::init(inputs, hidden, &mut rng).map_err(config)?);
    net.push(Layer::Relu(Relu::default()));
    net.push(FullyConnected::init(hidden, classes, &mut rng).map_err(config)?);
    net.push(Layer::Softmax(Softmax::default()));
    Ok(net)
}
