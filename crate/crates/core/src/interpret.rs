//! Gradient-weighted class activation maps.
//!
//! The importance of each channel of a convolutional feature map is the
//! spatial mean of the gradient of the target score with respect to it; the
//! map is the rectified weighted sum of channels, resampled to the input
//! size and divided by its maximum.

use std::path::Path;

use thiserror::Error;

use crate::imageops::{grayscale, resize_bilinear, resize_nearest};
use crate::io::{write_image, PnmError};
use crate::layers::{Layer, LayerKind};
use crate::tensor::{Tensor, TensorError};
use crate::training::{Mode, Network, NetworkError};

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("network has no convolutional layer")]
    NoConvLayer,
    #[error("target class {class} out of range for {outputs} outputs")]
    BadTarget { class: usize, outputs: usize },
    #[error("map is {map:?} but the image is {image:?}")]
    Misaligned { map: Vec<usize>, image: Vec<usize> },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] PnmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upsample {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GradCamOptions {
    pub upsample: Upsample,
    /// Average the normalized maps of every convolutional layer instead of
    /// using only the last one.
    pub all_layers: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    /// `[1, H, W]`, values in `[0, 1]`; the maximum is 1 unless all are 0.
    pub values: Tensor,
    pub source_class: usize,
}

/// Low-resolution map for the convolutional layer at `layer`: rectified
/// gradient-weighted channel sum, before resampling and normalization.
fn layer_cam(features: &Tensor, grad: &Tensor) -> Result<Tensor, InterpretError> {
    let (c, h, w) = features.chw()?;
    let plane = h * w;
    let (f, g) = (features.data(), grad.data());
    let weights: Vec<f64> = (0..c)
        .map(|k| g[k * plane..(k + 1) * plane].iter().sum::<f64>() / plane as f64)
        .collect();
    Ok(Tensor::from_fn(&[1, h, w], |p| {
        let s: f64 = (0..c).map(|k| weights[k] * f[k * plane + p]).sum();
        s.max(0.0)
    })?)
}

fn normalize(t: &mut Tensor) {
    let m = t.max();
    if m > 0.0 {
        t.data_mut().iter_mut().for_each(|v| *v /= m);
    }
}

/// Raw maps (conv-grid resolution, unnormalized) for every convolutional
/// layer, in network order.
pub fn gradcam_layers(net: &mut Network, input: &Tensor, target_class: usize) -> Result<Vec<(usize, Tensor)>, InterpretError> {
    let convs: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind() == LayerKind::Conv)
        .map(|(i, _)| i)
        .collect();
    if convs.is_empty() {
        return Err(InterpretError::NoConvLayer);
    }
    let previous = net.mode();
    net.set_mode(Mode::Training);
    let result = (|| {
        let outputs = net.forward_trace(input)?;
        let layers = net.layers();
        // score the pre-activation logit when the head ends in softmax or sigmoid
        let top = match layers.last().map(Layer::kind) {
            Some(LayerKind::Softmax | LayerKind::Sigmoid) if layers.len() > 1 => layers.len() - 1,
            _ => layers.len(),
        };
        let score = &outputs[top - 1];
        if target_class >= score.len() {
            return Err(InterpretError::BadTarget {
                class: target_class,
                outputs: score.len(),
            });
        }
        let mut seed = Tensor::zeros(score.shape())?;
        seed.data_mut()[target_class] = 1.0;
        // grads[i] = d score / d output of layer i
        let mut grads: Vec<Option<Tensor>> = vec![None; top];
        let mut g = seed;
        let first = convs[0];
        for i in (first..top).rev() {
            grads[i] = Some(g.clone());
            if i > first {
                g = layers[i].backward(&g).map_err(|e| NetworkError::Layer { index: i, name: net.names()[i].clone(), source: e })?.0;
            }
        }
        convs
            .iter()
            .map(|&i| {
                let grad = grads[i].as_ref().expect("filled above");
                Ok((i, layer_cam(&outputs[i], grad)?))
            })
            .collect()
    })();
    net.set_mode(previous);
    result
}

/// Importance map of `input` for the score `target_class` of the network's
/// final output.
pub fn gradcam(net: &mut Network, input: &Tensor, target_class: usize, opts: GradCamOptions) -> Result<ImportanceMap, InterpretError> {
    let maps = gradcam_layers(net, input, target_class)?;
    let (_, h, w) = input.chw()?;
    let chosen: Vec<&Tensor> = if opts.all_layers {
        maps.iter().map(|(_, m)| m).collect()
    } else {
        vec![&maps.last().expect("at least one conv").1]
    };
    let mut acc = Tensor::zeros(&[1, h, w])?;
    for m in &chosen {
        let mut up = match opts.upsample {
            Upsample::Bilinear => resize_bilinear(m, h, w)?,
            Upsample::Nearest => resize_nearest(m, h, w)?,
        };
        normalize(&mut up);
        acc.add_scaled_assign(&up, 1.0 / chosen.len() as f64)?;
    }
    normalize(&mut acc);
    Ok(ImportanceMap {
        values: acc,
        source_class: target_class,
    })
}

/// RGB rendering: `(1 - m) * gray + m * red` per pixel.
pub fn overlay(img: &Tensor, map: &ImportanceMap) -> Result<Tensor, InterpretError> {
    let gray = grayscale(img)?;
    if gray.shape() != map.values.shape() {
        return Err(InterpretError::Misaligned {
            map: map.values.shape().to_vec(),
            image: gray.shape().to_vec(),
        });
    }
    let (_, h, w) = gray.chw()?;
    let plane = h * w;
    let (g, m) = (gray.data(), map.values.data());
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (ch, p) = (i / plane, i % plane);
        let base = (1.0 - m[p]) * g[p];
        if ch == 0 {
            base + m[p]
        } else {
            base
        }
    })?)
}

/// Writes [`overlay`] as a binary PPM.
pub fn render_overlay(img: &Tensor, map: &ImportanceMap, path: impl AsRef<Path>) -> Result<(), InterpretError> {
    write_image(&overlay(img, map)?, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_pnm, ImageFile};
    use crate::layers::{Conv2D, FullyConnected};
    use crate::training::templates::{deep_cnn, small_cnn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[c, h, w], |_| rng.random_range(0.0..1.0)).unwrap()
    }

    /// Weight and bias of the last dense layer.
    fn head(net: &mut Network) -> Vec<&mut Tensor> {
        let i = net.layers().iter().rposition(|l| l.kind() == LayerKind::Dense).unwrap();
        net.layers_mut()[i].params_mut()
    }

    #[test]
    fn no_conv_layer() {
        let mut net = crate::training::templates::mlp(4, 3, 2, 0).unwrap();
        let x = Tensor::ones(&[4]).unwrap();
        assert!(matches!(gradcam(&mut net, &x, 0, GradCamOptions::default()), Err(InterpretError::NoConvLayer)));
    }

    #[test]
    fn constant_head_gives_zero_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = small_cnn((1, 8, 8), 3, 1).unwrap();
        // freeze the head to a constant: zero weights
        head(&mut net)[0].fill(0.0);
        let map = gradcam(&mut net, &random_image(&mut rng, 1, 8, 8), 1, GradCamOptions::default()).unwrap();
        assert!(map.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_conv_peaks_at_bright_pixel() {
        let conv = Conv2D::new(Tensor::ones(&[1, 1, 1, 1]).unwrap(), Tensor::zeros(&[1]).unwrap(), 1).unwrap();
        let sum = FullyConnected::new(Tensor::ones(&[1, 36]).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap();
        let mut net = Network::new().with(conv).with(sum);
        let mut img = Tensor::full(&[1, 6, 6], 0.1).unwrap();
        img.set(&[0, 2, 4], 1.0).unwrap();
        for upsample in [Upsample::Nearest, Upsample::Bilinear] {
            let map = gradcam(&mut net, &img, 0, GradCamOptions { upsample, all_layers: false }).unwrap();
            assert_eq!(map.values.argmax(), 2 * 6 + 4);
            assert_eq!(map.values.max(), 1.0);
        }
    }

    #[test]
    fn linear_network_matches_hand_saliency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut lrng = ChaCha8Rng::seed_from_u64(rng.random());
            let conv = Conv2D::init(1, 3, 3, 1, &mut lrng).unwrap();
            let fc = FullyConnected::init(3 * 5 * 5, 1, &mut lrng).unwrap();
            let (k, b, wfc) = (conv.kernels().clone(), conv.bias().clone(), fc.weights().clone());
            let mut net = Network::new().with(conv).with(fc);
            let img = random_image(&mut rng, 1, 7, 7);
            // hand computation: feature maps by direct loops, weights = mean of fc rows
            let mut best = (f64::NEG_INFINITY, 0);
            for p in 0..25 {
                let (y, x) = (p / 5, p % 5);
                let mut s = 0.0;
                for c in 0..3 {
                    let mut a = b.data()[c];
                    for i in 0..3 {
                        for j in 0..3 {
                            a += img.get(&[0, y + i, x + j]).unwrap() * k.get(&[c, 0, i, j]).unwrap();
                        }
                    }
                    let alpha = wfc.data()[c * 25..(c + 1) * 25].iter().sum::<f64>() / 25.0;
                    s += alpha * a;
                }
                if s > best.0 {
                    best = (s, p);
                }
            }
            let raw = gradcam_layers(&mut net, &img, 0).unwrap();
            let cam = &raw[0].1;
            if best.0 > 0.0 {
                assert_eq!(cam.argmax(), best.1);
            } else {
                assert_eq!(cam.max(), 0.0);
            }
        }
    }

    #[test]
    fn contract_on_random_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..10 {
            let mut net = if seed % 2 == 0 {
                small_cnn((3, 10, 10), 4, seed).unwrap()
            } else {
                deep_cnn((3, 12, 12), 4, seed).unwrap()
            };
            let (h, w) = if seed % 2 == 0 { (10, 10) } else { (12, 12) };
            let img = random_image(&mut rng, 3, h, w);
            for all_layers in [false, true] {
                let map = gradcam(&mut net, &img, (seed % 4) as usize, GradCamOptions { all_layers, ..Default::default() }).unwrap();
                assert_eq!(map.values.shape(), &[1, h, w]);
                assert!(map.values.data().iter().all(|v| (0.0..=1.0).contains(v)));
                let m = map.values.max();
                assert!(m == 0.0 || (m - 1.0).abs() < 1e-12);
            }
            assert_eq!(net.mode(), Mode::Training);
        }
    }

    #[test]
    fn logit_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for seed in 0..10 {
            let mut net = small_cnn((1, 8, 8), 3, seed).unwrap();
            let img = random_image(&mut rng, 1, 8, 8);
            let a = gradcam(&mut net, &img, 2, GradCamOptions::default()).unwrap();
            head(&mut net)[1].data_mut().iter_mut().for_each(|v| *v += 17.5);
            let b = gradcam(&mut net, &img, 2, GradCamOptions::default()).unwrap();
            for (x, y) in a.values.data().iter().zip(b.values.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn overlay_rendering() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 1, 5, 4);
        let zero = ImportanceMap {
            values: Tensor::zeros(&[1, 5, 4]).unwrap(),
            source_class: 0,
        };
        let rgb = overlay(&img, &zero).unwrap();
        for ch in 0..3 {
            assert_eq!(&rgb.data()[ch * 20..(ch + 1) * 20], img.data());
        }
        let mut spot = zero.clone();
        spot.values.set(&[0, 1, 2], 1.0).unwrap();
        let rgb = overlay(&img, &spot).unwrap();
        assert_eq!(
            [rgb.get(&[0, 1, 2]).unwrap(), rgb.get(&[1, 1, 2]).unwrap(), rgb.get(&[2, 1, 2]).unwrap()],
            [1.0, 0.0, 0.0]
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.ppm");
        render_overlay(&img, &spot, &path).unwrap();
        assert_eq!(read_pnm(&path).unwrap(), ImageFile::from_tensor(&rgb).unwrap());
        assert!(overlay(&Tensor::zeros(&[1, 4, 4]).unwrap(), &spot).is_err());
    }
}
