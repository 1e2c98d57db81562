//! Small image helpers shared by detection and visualization.

use crate::tensor::{Result, Tensor, TensorError};

pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel `[1, H, W]` luminance of a 1- or 3-channel image.
pub fn grayscale(img: &Tensor) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    match c {
        1 => img.reshape(&[1, h, w]),
        3 => {
            let d = img.data();
            let plane = h * w;
            Tensor::from_fn(&[1, h, w], |i| {
                LUMA[0] * d[i] + LUMA[1] * d[plane + i] + LUMA[2] * d[2 * plane + i]
            })
        }
        _ => Err(TensorError::Rank {
            expected: 3,
            shape: img.shape().to_vec(),
        }),
    }
}

/// Bilinear resampling of every channel to `out_h x out_w`, sampling at
/// pixel centres.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    let d = img.data();
    let src = |o: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let pos = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    Tensor::from_fn(&[c, out_h, out_w], |idx| {
        let ch = idx / (out_h * out_w);
        let (r, col) = ((idx / out_w) % out_h, idx % out_w);
        let (r0, r1, fr) = src(r, out_h, h);
        let (c0, c1, fc) = src(col, out_w, w);
        let at = |y: usize, x: usize| d[ch * h * w + y * w + x];
        let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
        let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Nearest-neighbour resampling of every channel to `out_h x out_w`.
pub fn resize_nearest(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    let d = img.data();
    Tensor::from_fn(&[c, out_h, out_w], |idx| {
        let ch = idx / (out_h * out_w);
        let (r, col) = ((idx / out_w) % out_h, idx % out_w);
        let sr = r * h / out_h;
        let sc = col * w / out_w;
        d[ch * h * w + sr * w + sc]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_weights() {
        let rgb = Tensor::from_values(&[3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap();
        assert!((grayscale(&rgb).unwrap().data()[0] - 0.299).abs() < 1e-15);
        let white = Tensor::ones(&[3, 2, 2]).unwrap();
        assert!(grayscale(&white).unwrap().data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(grayscale(&Tensor::zeros(&[2, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = Tensor::from_fn(&[2, 3, 4], |i| i as f64).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 4).unwrap(), img);
        assert_eq!(resize_nearest(&img, 3, 4).unwrap(), img);
        let c = Tensor::full(&[1, 5, 5], 0.4).unwrap();
        let up = resize_bilinear(&c, 11, 7).unwrap();
        assert!(up.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        let down = resize_nearest(&Tensor::from_fn(&[1, 4, 4], |i| i as f64).unwrap(), 2, 2).unwrap();
        assert_eq!(down.data(), &[0.0, 2.0, 8.0, 10.0]);
    }
}
