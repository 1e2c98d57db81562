//! Sliding-window object detection: integral images, Haar-like features,
//! a boosted stump ensemble, exhaustive window scanning and greedy
//! non-maximum suppression. [`faces`] builds face counting and per-face
//! attribute tallies on top.

pub mod adaboost;
pub mod faces;
pub mod haar;
pub mod integral;

use rayon::prelude::*;
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};
use crate::training::{Checkpoint, CheckpointError, Record};

pub use adaboost::{adaboost_train, adaboost_train_traced, BoostTrace, BoostedClassifier, Stump};
pub use haar::{haar_value, HaarFeature, HaarKind};
pub use integral::{integral_image, IntegralImage};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected a single-channel image, got {0} channels")]
    NotGrayscale(usize),
    #[error("degenerate window {0:?}")]
    DegenerateWindow(BoundingBox),
    #[error("window {window:?} lies outside a {width}x{height} image")]
    WindowOutside {
        window: BoundingBox,
        width: usize,
        height: usize,
    },
    #[error("invalid haar feature: {0}")]
    InvalidFeature(String),
    #[error("boosting: {0}")]
    Boost(String),
    #[error("no window size fits a {width}x{height} image")]
    NoWindowFits { width: usize, height: usize },
    #[error("IoU threshold must lie in (0, 1), got {0}")]
    IouThreshold(f64),
    #[error("no face detector configured")]
    NoDetector,
    #[error("attribute network: {0}")]
    Attribute(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Axis-aligned box: `x` is the left column, `y` the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Result<Self, DetectionError> {
        let b = Self { x, y, w, h };
        if w == 0 || h == 0 {
            return Err(DetectionError::DegenerateWindow(b));
        }
        Ok(b)
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }

    pub fn intersection(&self, other: &BoundingBox) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn translate(&self, dx: usize, dy: usize) -> BoundingBox {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub category: String,
}

/// Greedy suppression: repeatedly keep the highest-scoring detection and drop
/// everything overlapping it by more than `iou_threshold`. The sort is stable,
/// so equal scores keep their input order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>, DetectionError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(DetectionError::IouThreshold(iou_threshold));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = &dets[i];
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou_threshold) {
            kept.push(d.clone());
        }
    }
    Ok(kept)
}

/// Window sizes growing by a factor 1.25 from `min` up to `max_side`.
pub fn window_pyramid(min: usize, max_side: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut s = min as f64;
    while s.round() as usize <= max_side {
        let w = s.round() as usize;
        if sizes.last() != Some(&w) {
            sizes.push(w);
        }
        s *= 1.25;
    }
    sizes
}

/// Stride rule used when none is given: an eighth of the window, at least 2.
pub fn default_stride(window: usize) -> usize {
    (window / 8).max(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Square window sides; `None` means the full pyramid from the base size.
    pub window_sizes: Option<Vec<usize>>,
    /// Fixed stride; `None` applies [`default_stride`] per window size.
    pub stride: Option<usize>,
    pub iou_threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            window_sizes: None,
            stride: None,
            iou_threshold: 0.3,
        }
    }
}

/// Boosted Haar-feature window classifier. Each stump's `feature` indexes
/// into `features`; feature geometry is defined on a `base x base` window.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarDetector {
    pub base: usize,
    pub features: Vec<HaarFeature>,
    pub classifier: BoostedClassifier,
    pub category: String,
}

/// Number of packed `f64` fields per boosting round in a `BOOST` record:
/// kind, x, y, w, h, threshold, polarity, alpha.
pub const BOOST_FIELDS: usize = 8;

impl HaarDetector {
    /// Wraps a classifier trained on the feature vectors produced by `pool`,
    /// keeping only the features the rounds reference.
    pub fn from_pool(base: usize, pool: &[HaarFeature], classifier: BoostedClassifier) -> Self {
        let mut features = Vec::new();
        let mut rounds = Vec::with_capacity(classifier.rounds.len());
        for r in &classifier.rounds {
            let f = pool[r.feature];
            let idx = match features.iter().position(|g| *g == f) {
                Some(i) => i,
                None => {
                    features.push(f);
                    features.len() - 1
                }
            };
            rounds.push(Stump { feature: idx, ..*r });
        }
        Self {
            base,
            features,
            classifier: BoostedClassifier { rounds },
            category: "face".into(),
        }
    }

    pub fn margin(&self, ii: &IntegralImage, window: &BoundingBox) -> f64 {
        self.classifier
            .margin_with(|f| self.features[f].value_unchecked(ii, window, self.base))
    }

    /// Every feature of `pool` evaluated on one window.
    pub fn feature_vector(pool: &[HaarFeature], ii: &IntegralImage, window: &BoundingBox, base: usize) -> Vec<f64> {
        pool.iter().map(|f| f.value_unchecked(ii, window, base)).collect()
    }

    pub fn to_records(&self) -> Vec<Record> {
        let mut data = Vec::with_capacity(self.classifier.rounds.len() * BOOST_FIELDS);
        for r in &self.classifier.rounds {
            let f = &self.features[r.feature];
            data.extend_from_slice(&[
                f.kind.code() as f64,
                f.x as f64,
                f.y as f64,
                f.w as f64,
                f.h as f64,
                r.threshold,
                r.polarity,
                r.alpha,
            ]);
        }
        vec![
            Record::new("BOOST", vec![self.classifier.rounds.len(), BOOST_FIELDS], data),
            Record::new("BOOST.window", vec![1], vec![self.base as f64]),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DetectionError> {
        let corrupt = |m: &str| DetectionError::Checkpoint(CheckpointError::Corrupt(m.to_string()));
        let rec = ck
            .get("BOOST")
            .ok_or_else(|| DetectionError::Checkpoint(CheckpointError::Missing("BOOST".into())))?;
        let base = ck
            .get("BOOST.window")
            .and_then(|r| r.data.first().copied())
            .filter(|v| v.fract() == 0.0 && *v >= 1.0 && *v <= 4096.0)
            .ok_or_else(|| corrupt("BOOST.window missing or invalid"))? as usize;
        if rec.shape.len() != 2 || rec.shape[1] != BOOST_FIELDS {
            return Err(corrupt("BOOST record must be rounds x 8"));
        }
        let as_usize = |v: f64| -> Result<usize, DetectionError> {
            if v.fract() == 0.0 && (0.0..=4096.0).contains(&v) {
                Ok(v as usize)
            } else {
                Err(corrupt("BOOST feature geometry is not a small integer"))
            }
        };
        let mut features = Vec::new();
        let mut rounds = Vec::new();
        for row in rec.data.chunks_exact(BOOST_FIELDS) {
            let kind = HaarKind::from_code(as_usize(row[0])? as u8).ok_or_else(|| corrupt("unknown haar kind"))?;
            let f = HaarFeature::new(kind, as_usize(row[1])?, as_usize(row[2])?, as_usize(row[3])?, as_usize(row[4])?, base)?;
            if row[6] != 1.0 && row[6] != -1.0 {
                return Err(corrupt("polarity must be +1 or -1"));
            }
            features.push(f);
            rounds.push(Stump {
                feature: features.len() - 1,
                threshold: row[5],
                polarity: row[6],
                alpha: row[7],
            });
        }
        Ok(Self {
            base,
            features,
            classifier: BoostedClassifier::new(rounds)?,
            category: "face".into(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.records.extend(self.to_records());
        ck
    }
}

/// Scores every grid placement of every window size and returns the windows
/// with a positive ensemble margin, in scan order (size, row, column).
pub fn sliding_window_detect(
    img: &Tensor,
    detector: &HaarDetector,
    window_sizes: &[usize],
    stride: Option<usize>,
) -> Result<Vec<Detection>, DetectionError> {
    let gray = crate::imageops::grayscale(img)?;
    let ii = IntegralImage::new(&gray)?;
    let (h, w) = (ii.height(), ii.width());
    let sizes: Vec<usize> = window_sizes
        .iter()
        .copied()
        .filter(|&s| s > 0 && s <= h && s <= w)
        .collect();
    if sizes.is_empty() {
        return Err(DetectionError::NoWindowFits { width: w, height: h });
    }
    let mut dets = Vec::new();
    for s in sizes {
        let step = stride.unwrap_or_else(|| default_stride(s)).max(1);
        for y in (0..=h - s).step_by(step) {
            for x in (0..=w - s).step_by(step) {
                let bbox = BoundingBox { x, y, w: s, h: s };
                let score = detector.margin(&ii, &bbox);
                if score > 0.0 {
                    dets.push(Detection {
                        bbox,
                        score,
                        category: detector.category.clone(),
                    });
                }
            }
        }
    }
    Ok(dets)
}

/// Scan followed by NMS under `config`.
pub fn detect(img: &Tensor, detector: &HaarDetector, config: &ScanConfig) -> Result<Vec<Detection>, DetectionError> {
    let (_, h, w) = img.chw()?;
    let sizes = config
        .window_sizes
        .clone()
        .unwrap_or_else(|| window_pyramid(detector.base, h.min(w)));
    let raw = sliding_window_detect(img, detector, &sizes, config.stride)?;
    nms(&raw, config.iou_threshold)
}

/// Labelled windows for training a detector from images with known boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSampling {
    /// Windows at least this close to a true box are positives.
    pub positive_iou: f64,
    /// Windows at most this close to every true box are negatives.
    pub negative_iou: f64,
    /// Pixel jitter applied around each true box for extra positives.
    pub jitter: usize,
    pub negatives_per_image: usize,
    /// Retraining passes that add the current detector's false positives on
    /// the training images as extra negatives.
    pub mining_passes: usize,
}

impl Default for WindowSampling {
    fn default() -> Self {
        Self {
            positive_iou: 0.7,
            negative_iou: 0.3,
            jitter: 1,
            negatives_per_image: 40,
            mining_passes: 1,
        }
    }
}

/// Trains a [`HaarDetector`] from grayscale images and their true boxes.
/// Negatives are drawn from the scan grid (all pyramid sizes) of each image,
/// keeping only windows that overlap no true box by more than
/// `sampling.negative_iou`; hard negatives partially overlapping a box are
/// included first.
pub fn train_detector(
    images: &[(Tensor, Vec<BoundingBox>)],
    base: usize,
    feature_step: usize,
    rounds: usize,
    sampling: &WindowSampling,
) -> Result<(HaarDetector, BoostTrace), DetectionError> {
    let pool = HaarFeature::enumerate(base, feature_step);
    let per_image: Vec<Vec<(Vec<f64>, i8)>> = images
        .par_iter()
        .map(|(img, boxes)| -> Result<Vec<(Vec<f64>, i8)>, DetectionError> {
            let gray = crate::imageops::grayscale(img)?;
            let ii = IntegralImage::new(&gray)?;
            let (h, w) = (ii.height(), ii.width());
            let mut out = Vec::new();
            for b in boxes {
                let j = sampling.jitter as isize;
                for dy in -j..=j {
                    for dx in -j..=j {
                        let (x, y) = (b.x as isize + dx, b.y as isize + dy);
                        if x < 0 || y < 0 {
                            continue;
                        }
                        let win = BoundingBox { x: x as usize, y: y as usize, ..*b };
                        if win.fits(w, h) && win.iou(b) >= sampling.positive_iou {
                            out.push((HaarDetector::feature_vector(&pool, &ii, &win, base), 1));
                        }
                    }
                }
            }
            let mut hard = Vec::new();
            let mut easy = Vec::new();
            for s in window_pyramid(base, h.min(w)) {
                let step = default_stride(s);
                for y in (0..=h - s).step_by(step) {
                    for x in (0..=w - s).step_by(step) {
                        let win = BoundingBox { x, y, w: s, h: s };
                        let best = boxes.iter().map(|b| b.iou(&win)).fold(0.0, f64::max);
                        if best <= sampling.negative_iou {
                            if best > 0.0 {
                                hard.push(win);
                            } else {
                                easy.push(win);
                            }
                        }
                    }
                }
            }
            // deterministic subsample: evenly spaced picks from each pool
            let pick = |pool_w: &[BoundingBox], n: usize| -> Vec<BoundingBox> {
                if pool_w.len() <= n {
                    return pool_w.to_vec();
                }
                (0..n).map(|k| pool_w[k * pool_w.len() / n]).collect()
            };
            let n_hard = sampling.negatives_per_image / 2;
            let mut negs = pick(&hard, n_hard);
            negs.extend(pick(&easy, sampling.negatives_per_image - negs.len()));
            for win in negs {
                out.push((HaarDetector::feature_vector(&pool, &ii, &win, base), -1));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let mut samples: Vec<(Vec<f64>, i8)> = per_image.into_iter().flatten().collect();
    let (clf, mut trace) = adaboost_train_traced(&samples, rounds)?;
    let mut det = HaarDetector::from_pool(base, &pool, clf);
    for _ in 0..sampling.mining_passes {
        let mined: Vec<Vec<(Vec<f64>, i8)>> = images
            .par_iter()
            .map(|(img, boxes)| -> Result<Vec<(Vec<f64>, i8)>, DetectionError> {
                let gray = crate::imageops::grayscale(img)?;
                let ii = IntegralImage::new(&gray)?;
                let (h, w) = (ii.height(), ii.width());
                let mut fps = sliding_window_detect(&gray, &det, &window_pyramid(base, h.min(w)), None)?;
                fps.retain(|d| boxes.iter().all(|b| b.iou(&d.bbox) <= sampling.negative_iou));
                fps.sort_by(|a, b| b.score.total_cmp(&a.score));
                fps.truncate(sampling.negatives_per_image);
                Ok(fps
                    .iter()
                    .map(|d| (HaarDetector::feature_vector(&pool, &ii, &d.bbox, base), -1))
                    .collect())
            })
            .collect::<Result<_, _>>()?;
        let before = samples.len();
        samples.extend(mined.into_iter().flatten());
        if samples.len() == before {
            break;
        }
        let (clf, t) = adaboost_train_traced(&samples, rounds)?;
        det = HaarDetector::from_pool(base, &pool, clf);
        trace = t;
    }
    Ok((det, trace))
}
