use crate::tensor::Tensor;

use super::DetectionError;

/// Summed-area table of a single-channel image: entry `(y, x)` of the
/// `[1, H+1, W+1]` result is the sum of all pixels above and to the left of
/// `(y, x)`, with a zero first row and column.
pub fn integral_image(img: &Tensor) -> Result<Tensor, DetectionError> {
    let (c, h, w) = img.chw()?;
    if c != 1 {
        return Err(DetectionError::NotGrayscale(c));
    }
    let src = img.data();
    let stride = w + 1;
    let mut ii = vec![0.0; (h + 1) * stride];
    for y in 0..h {
        let mut row_sum = 0.0;
        for x in 0..w {
            row_sum += src[y * w + x];
            ii[(y + 1) * stride + x + 1] = ii[y * stride + x + 1] + row_sum;
        }
    }
    Ok(Tensor::from_values(&[1, h + 1, w + 1], ii)?)
}

/// Integral image with constant-time rectangle sums.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    table: Tensor,
    height: usize,
    width: usize,
}

impl IntegralImage {
    pub fn new(img: &Tensor) -> Result<Self, DetectionError> {
        let table = integral_image(img)?;
        let (_, h, w) = img.chw()?;
        Ok(Self {
            table,
            height: h,
            width: w,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Sum of the `w x h` rectangle with top-left corner column `x`, row `y`.
    /// The caller guarantees the rectangle lies inside the image.
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let s = self.width + 1;
        let t = self.table.data();
        t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x]
    }
}
