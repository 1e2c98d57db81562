//! Seeded generators for synthetic images and datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::training::Sample;

/// Single-channel `size x size` images whose left (label 0) or right
/// (label 1) half is brighter. Labels alternate so both classes are balanced.
pub fn bright_side_dataset(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let img = Tensor::from_fn(&[1, size, size], |idx| {
                let col = idx % size;
                let bright = (col < size / 2) == (label == 0);
                let base = if bright { 0.6 } else { 0.1 };
                base + rng.random_range(0.0..0.3)
            })
            .expect("positive size");
            Sample::new(img, label)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stripes {
    Horizontal,
    Vertical,
    /// No stripes: background noise only.
    None,
}

/// `size x size` image with period-`period` stripes of random phase and
/// contrast over uniform noise.
pub fn stripe_image(size: usize, orientation: Stripes, rng: &mut impl Rng) -> Tensor {
    let period = rng.random_range(2..=3usize);
    let phase = rng.random_range(0..period);
    let contrast = rng.random_range(0.35..0.6);
    let base = rng.random_range(0.1..0.3);
    Tensor::from_fn(&[1, size, size], |idx| {
        let (r, c) = (idx / size, idx % size);
        let on = match orientation {
            Stripes::Horizontal => (r + phase) % period == 0,
            Stripes::Vertical => (c + phase) % period == 0,
            Stripes::None => false,
        };
        base + if on { contrast } else { 0.0 } + rng.random_range(0.0..0.3)
    })
    .expect("positive size")
}

/// Balanced two-class stripe dataset: label 1 images carry `positive`
/// stripes, label 0 images cycle through `negatives`.
pub fn stripe_dataset(n: usize, size: usize, positive: Stripes, negatives: &[Stripes], seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let kind = if label == 1 { positive } else { negatives[(i / 2) % negatives.len()] };
            Sample::new(stripe_image(size, kind, &mut rng), label)
        })
        .collect()
}
