//! Haar-like local contrast features.
//!
//! A feature is defined on a square base window of `base` pixels and is
//! rescaled to whatever window it is evaluated on. Values are the signed
//! difference of rectangle sums divided by the window area, so a uniform
//! patch always scores zero.

use super::integral::IntegralImage;
use super::{BoundingBox, DetectionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HaarKind {
    /// Left half minus right half.
    TwoRectHorizontal,
    /// Top half minus bottom half.
    TwoRectVertical,
    /// Outer thirds minus twice the middle third, side by side.
    ThreeRect,
    /// Top-left plus bottom-right minus top-right and bottom-left quadrants.
    FourRect,
}

impl HaarKind {
    pub const ALL: [HaarKind; 4] = [
        HaarKind::TwoRectHorizontal,
        HaarKind::TwoRectVertical,
        HaarKind::ThreeRect,
        HaarKind::FourRect,
    ];

    pub fn code(self) -> u8 {
        match self {
            HaarKind::TwoRectHorizontal => 0,
            HaarKind::TwoRectVertical => 1,
            HaarKind::ThreeRect => 2,
            HaarKind::FourRect => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        HaarKind::ALL.get(code as usize).copied()
    }

    /// Number of equal cells along `(x, y)`.
    fn cells(self) -> (usize, usize) {
        match self {
            HaarKind::TwoRectHorizontal => (2, 1),
            HaarKind::TwoRectVertical => (1, 2),
            HaarKind::ThreeRect => (3, 1),
            HaarKind::FourRect => (2, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HaarFeature {
    pub kind: HaarKind,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl HaarFeature {
    /// Fails unless the rectangles tile exactly and fit the base window.
    pub fn new(kind: HaarKind, x: usize, y: usize, w: usize, h: usize, base: usize) -> Result<Self, DetectionError> {
        let (cx, cy) = kind.cells();
        if w == 0 || h == 0 || w % cx != 0 || h % cy != 0 || x + w > base || y + h > base {
            return Err(DetectionError::InvalidFeature(format!(
                "{kind:?} at ({x},{y}) size {w}x{h} in a {base}px window"
            )));
        }
        Ok(Self { kind, x, y, w, h })
    }

    /// Every feature of every kind whose position and cell size are
    /// multiples of `step` inside a `base x base` window.
    pub fn enumerate(base: usize, step: usize) -> Vec<HaarFeature> {
        let step = step.max(1);
        let mut out = Vec::new();
        for kind in HaarKind::ALL {
            let (cx, cy) = kind.cells();
            let mut cw = step;
            while cw * cx <= base {
                let mut ch = step;
                while ch * cy <= base {
                    let (w, h) = (cw * cx, ch * cy);
                    for y in (0..=base - h).step_by(step) {
                        for x in (0..=base - w).step_by(step) {
                            out.push(HaarFeature { kind, x, y, w, h });
                        }
                    }
                    ch += step;
                }
                cw += step;
            }
        }
        out
    }

    /// Feature value on `window` of the image behind `ii`, with the feature
    /// geometry scaled from a `base`-pixel window.
    pub fn value(&self, ii: &IntegralImage, window: &BoundingBox, base: usize) -> Result<f64, DetectionError> {
        if window.w == 0 || window.h == 0 || base == 0 {
            return Err(DetectionError::DegenerateWindow(*window));
        }
        if window.x + window.w > ii.width() || window.y + window.h > ii.height() {
            return Err(DetectionError::WindowOutside {
                window: *window,
                width: ii.width(),
                height: ii.height(),
            });
        }
        Ok(self.value_unchecked(ii, window, base))
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, ii: &IntegralImage, window: &BoundingBox, base: usize) -> f64 {
        let sx = window.w as f64 / base as f64;
        let sy = window.h as f64 / base as f64;
        let (cx, cy) = self.kind.cells();
        // scale the cell, not the whole feature, so every cell keeps the same area
        let cell_w = (((self.w / cx) as f64 * sx).round() as usize).clamp(1, (window.w / cx).max(1));
        let cell_h = (((self.h / cy) as f64 * sy).round() as usize).clamp(1, (window.h / cy).max(1));
        let max_x = window.w.saturating_sub(cell_w * cx);
        let max_y = window.h.saturating_sub(cell_h * cy);
        let x0 = window.x + ((self.x as f64 * sx).round() as usize).min(max_x);
        let y0 = window.y + ((self.y as f64 * sy).round() as usize).min(max_y);
        let cell = |i: usize, j: usize| ii.rect_sum(x0 + i * cell_w, y0 + j * cell_h, cell_w, cell_h);
        let raw = match self.kind {
            HaarKind::TwoRectHorizontal => cell(0, 0) - cell(1, 0),
            HaarKind::TwoRectVertical => cell(0, 0) - cell(0, 1),
            HaarKind::ThreeRect => cell(0, 0) + cell(2, 0) - 2.0 * cell(1, 0),
            HaarKind::FourRect => cell(0, 0) + cell(1, 1) - cell(1, 0) - cell(0, 1),
        };
        raw / (window.w * window.h) as f64
    }
}

/// Convenience wrapper matching the free-function form used elsewhere.
pub fn haar_value(
    feature: &HaarFeature,
    ii: &IntegralImage,
    window: &BoundingBox,
    base: usize,
) -> Result<f64, DetectionError> {
    feature.value(ii, window, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bbox(x: usize, y: usize, w: usize, h: usize) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn uniform_image_scores_zero() {
        let ii = IntegralImage::new(&Tensor::full(&[1, 40, 40], 0.6).unwrap()).unwrap();
        for f in HaarFeature::enumerate(24, 4) {
            for win in [bbox(0, 0, 24, 24), bbox(3, 5, 30, 30), bbox(1, 1, 37, 37)] {
                assert!(f.value(&ii, &win, 24).unwrap().abs() < 1e-12, "{f:?}");
            }
        }
    }

    #[test]
    fn left_bright_positive_for_horizontal_pair() {
        let img = Tensor::from_fn(&[1, 24, 24], |i| if i % 24 < 12 { 1.0 } else { 0.0 }).unwrap();
        let ii = IntegralImage::new(&img).unwrap();
        let f = HaarFeature::new(HaarKind::TwoRectHorizontal, 0, 0, 24, 24, 24).unwrap();
        let v = f.value(&ii, &bbox(0, 0, 24, 24), 24).unwrap();
        assert!(v > 0.0);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negation_negates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Tensor::from_fn(&[1, 30, 30], |_| rng.random_range(-1.0..1.0)).unwrap();
        let neg = img.mul_scalar(-1.0);
        let (a, b) = (IntegralImage::new(&img).unwrap(), IntegralImage::new(&neg).unwrap());
        for f in HaarFeature::enumerate(24, 6) {
            let win = bbox(2, 3, 26, 26);
            let (va, vb) = (f.value(&a, &win, 24).unwrap(), f.value(&b, &win, 24).unwrap());
            assert!((va + vb).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_geometry() {
        assert!(HaarFeature::new(HaarKind::TwoRectHorizontal, 0, 0, 3, 4, 24).is_err());
        assert!(HaarFeature::new(HaarKind::ThreeRect, 0, 0, 6, 4, 24).is_ok());
        assert!(HaarFeature::new(HaarKind::FourRect, 20, 0, 6, 4, 24).is_err());
        let ii = IntegralImage::new(&Tensor::zeros(&[1, 10, 10]).unwrap()).unwrap();
        let f = HaarFeature::new(HaarKind::FourRect, 0, 0, 4, 4, 24).unwrap();
        assert!(matches!(
            f.value(&ii, &BoundingBox { x: 0, y: 0, w: 0, h: 4 }, 24),
            Err(DetectionError::DegenerateWindow(_))
        ));
        assert!(matches!(
            f.value(&ii, &bbox(5, 5, 8, 8), 24),
            Err(DetectionError::WindowOutside { .. })
        ));
    }

    #[test]
    fn enumeration_respects_tiling() {
        let feats = HaarFeature::enumerate(12, 2);
        assert!(!feats.is_empty());
        for f in feats {
            assert!(HaarFeature::new(f.kind, f.x, f.y, f.w, f.h, 12).is_ok());
        }
    }
}
