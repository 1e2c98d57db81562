//! Synthetic faces, face counting and per-face attribute tallies.
//!
//! No real face corpus ships with the crate, so detectors and attribute
//! networks are trained on a drawn face pattern: a bright square with two
//! dark eye bars and a dark mouth bar. Two optional markers carry the
//! attributes: dark side hair (female) and a bright forehead patch (child).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{detect, train_detector, BoundingBox, Detection, DetectionError, HaarDetector, ScanConfig, WindowSampling};
use crate::imageops::{grayscale, resize_bilinear};
use crate::tensor::Tensor;
use crate::training::templates::binary_cnn;
use crate::training::{train, Network, Objective, Sample, SgdConfig};

/// Side of the square window the face pattern is drawn on.
pub const FACE_BASE: usize = 24;
/// Side that face crops are resampled to before attribute classification.
pub const CROP_SIZE: usize = 16;
pub const ATTRIBUTE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FaceAttributes {
    pub female: bool,
    pub child: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedFace {
    pub bbox: BoundingBox,
    pub attributes: FaceAttributes,
}

fn in_rect(u: usize, v: usize, cols: (usize, usize), rows: (usize, usize)) -> bool {
    (cols.0..cols.1).contains(&u) && (rows.0..rows.1).contains(&v)
}

/// Intensity of the face pattern at base-grid cell `(u, v)`.
pub fn face_pattern(u: usize, v: usize, attrs: FaceAttributes) -> f64 {
    if attrs.female && (u < 3 || u >= 21) {
        return 0.1;
    }
    if attrs.child && in_rect(u, v, (8, 16), (1, 5)) {
        return 1.0;
    }
    if in_rect(u, v, (4, 10), (6, 10)) || in_rect(u, v, (14, 20), (6, 10)) {
        return 0.15;
    }
    if in_rect(u, v, (7, 17), (16, 19)) {
        return 0.25;
    }
    0.75
}

/// Draws the face pattern scaled into `bbox` on a single-channel image, with
/// uniform pixel noise of amplitude `noise`.
pub fn draw_face(
    img: &mut Tensor,
    bbox: &BoundingBox,
    attrs: FaceAttributes,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<(), DetectionError> {
    let (c, h, w) = img.chw()?;
    if c != 1 {
        return Err(DetectionError::NotGrayscale(c));
    }
    if !bbox.fits(w, h) {
        return Err(DetectionError::WindowOutside {
            window: *bbox,
            width: w,
            height: h,
        });
    }
    let data = img.data_mut();
    for py in 0..bbox.h {
        let v = py * FACE_BASE / bbox.h;
        for px in 0..bbox.w {
            let u = px * FACE_BASE / bbox.w;
            let jitter = if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 };
            data[(bbox.y + py) * w + bbox.x + px] = (face_pattern(u, v, attrs) + jitter).clamp(0.0, 1.0);
        }
    }
    Ok(())
}

/// Textured background: a random base level, pixel noise, and a few random
/// rectangles so that plain contrast alone does not identify faces.
pub fn background(size: usize, rng: &mut impl Rng) -> Tensor {
    let base = rng.random_range(0.25..0.45);
    let mut img = Tensor::from_fn(&[1, size, size], |_| base + rng.random_range(-0.08..0.08)).expect("positive size");
    let blobs = rng.random_range(1..=4usize);
    let data = img.data_mut();
    for _ in 0..blobs {
        let bw = rng.random_range(3..=size / 3);
        let bh = rng.random_range(3..=size / 3);
        let x = rng.random_range(0..=size - bw);
        let y = rng.random_range(0..=size - bh);
        let level = rng.random_range(0.0..1.0);
        for r in y..y + bh {
            for c in x..x + bw {
                data[r * size + c] = level;
            }
        }
    }
    img
}

/// Per-face attribute probabilities used when drawing scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeRates {
    pub female: f64,
    pub child: f64,
}

impl Default for AttributeRates {
    fn default() -> Self {
        Self { female: 0.5, child: 0.3 }
    }
}

/// A `size x size` scene with `n_faces` faces on the coarsest square grid
/// that has enough cells, one face per cell, sides between `FACE_BASE` and the cell size.
pub fn random_scene(
    size: usize,
    n_faces: usize,
    rates: AttributeRates,
    rng: &mut impl Rng,
) -> Result<(Tensor, Vec<PlantedFace>), DetectionError> {
    let grid = (1..=size / FACE_BASE).find(|g| g * g >= n_faces).unwrap_or(0);
    if grid == 0 {
        return Err(DetectionError::NoWindowFits { width: size, height: size });
    }
    let cell = size / grid;
    let mut img = background(size, rng);
    let mut cells: Vec<usize> = (0..grid * grid).collect();
    // partial Fisher-Yates: first n_faces cells are a uniform choice
    for i in 0..n_faces {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }
    let mut faces = Vec::with_capacity(n_faces);
    for &k in &cells[..n_faces] {
        let side = rng.random_range(FACE_BASE..=cell.min(FACE_BASE + 6));
        let x = (k % grid) * cell + rng.random_range(0..=cell - side);
        let y = (k / grid) * cell + rng.random_range(0..=cell - side);
        let bbox = BoundingBox::new(x, y, side, side)?;
        let attributes = FaceAttributes {
            female: rng.random_bool(rates.female),
            child: rng.random_bool(rates.child),
        };
        draw_face(&mut img, &bbox, attributes, 0.05, rng)?;
        faces.push(PlantedFace { bbox, attributes });
    }
    Ok((img, faces))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceTrainingConfig {
    pub images: usize,
    pub image_size: usize,
    pub rounds: usize,
    pub feature_step: usize,
    pub seed: u64,
}

impl Default for FaceTrainingConfig {
    fn default() -> Self {
        Self {
            images: 60,
            image_size: 64,
            rounds: 100,
            feature_step: 4,
            seed: 0,
        }
    }
}

/// Trains a face detector on seeded synthetic scenes.
pub fn train_face_detector(config: &FaceTrainingConfig) -> Result<HaarDetector, DetectionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let max_faces = (config.image_size / FACE_BASE).pow(2).max(1);
    let mut images = Vec::with_capacity(config.images);
    for _ in 0..config.images {
        let n = rng.random_range(1..=max_faces.min(9));
        let (img, faces) = random_scene(config.image_size, n, AttributeRates::default(), &mut rng)?;
        images.push((img, faces.iter().map(|f| f.bbox).collect()));
    }
    let (det, _) = train_detector(
        &images,
        FACE_BASE,
        config.feature_step,
        config.rounds,
        &WindowSampling::default(),
    )?;
    Ok(det)
}

/// Binary sigmoid-head networks, one per attribute, over `CROP_SIZE` crops.
#[derive(Debug, Clone)]
pub struct AttributeNets {
    pub female: Network,
    pub child: Network,
}

/// Crop `bbox` from a grayscale image and resample it to `CROP_SIZE`.
pub fn face_crop(gray: &Tensor, bbox: &BoundingBox) -> Result<Tensor, DetectionError> {
    let crop = gray.slice_window(bbox.x, bbox.y, bbox.h, bbox.w)?;
    Ok(resize_bilinear(&crop, CROP_SIZE, CROP_SIZE)?)
}

fn probability(net: &Network, crop: &Tensor) -> Result<f64, DetectionError> {
    let out = net
        .predict(crop)
        .map_err(|e| DetectionError::Attribute(e.to_string()))?;
    if out.len() != 1 {
        return Err(DetectionError::Attribute(format!(
            "expected a single sigmoid output, got {}",
            out.len()
        )));
    }
    Ok(out.data()[0])
}

impl AttributeNets {
    pub fn classify(&self, crop: &Tensor) -> Result<FaceAttributes, DetectionError> {
        Ok(FaceAttributes {
            female: probability(&self.female, crop)? >= ATTRIBUTE_THRESHOLD,
            child: probability(&self.child, crop)? >= ATTRIBUTE_THRESHOLD,
        })
    }

    /// Trains both networks on crops of seeded synthetic faces. Crops are
    /// jittered by up to two pixels to mimic detector box placement.
    pub fn train_synthetic(n: usize, epochs: usize, seed: u64) -> Result<Self, DetectionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut female = Vec::with_capacity(n);
        let mut child = Vec::with_capacity(n);
        for i in 0..n {
            let attrs = FaceAttributes {
                female: i % 2 == 0,
                child: (i / 2) % 2 == 0,
            };
            let side = rng.random_range(FACE_BASE..=FACE_BASE + 8);
            let canvas = side + 4;
            let mut img = background(canvas, &mut rng);
            let bbox = BoundingBox::new(2, 2, side, side)?;
            draw_face(&mut img, &bbox, attrs, 0.05, &mut rng)?;
            let shifted = bbox.translate(rng.random_range(0..=4), rng.random_range(0..=4));
            let shifted = BoundingBox {
                x: shifted.x - 2,
                y: shifted.y - 2,
                ..shifted
            };
            let crop = face_crop(&img, &shifted)?;
            female.push(Sample::new(crop.clone(), attrs.female as usize));
            child.push(Sample::new(crop, attrs.child as usize));
        }
        let fit = |data: &[Sample], s: u64| -> Result<Network, DetectionError> {
            let mut net = binary_cnn((1, CROP_SIZE, CROP_SIZE), s).map_err(|e| DetectionError::Attribute(e.to_string()))?;
            let cfg = SgdConfig {
                learning_rate: 0.1,
                epochs,
                batch_size: 4,
                seed: s,
            };
            train(&mut net, data, &cfg, Objective::BinaryCrossEntropy)
                .map_err(|e| DetectionError::Attribute(e.to_string()))?;
            Ok(net)
        };
        Ok(Self {
            female: fit(&female, seed.wrapping_add(1))?,
            child: fit(&child, seed.wrapping_add(2))?,
        })
    }
}

/// Detections for one image plus attribute tallies over the detected faces.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnnotation {
    pub faces: Vec<Detection>,
    pub attributes: Vec<FaceAttributes>,
}

impl ImageAnnotation {
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn female_faces(&self) -> usize {
        self.attributes.iter().filter(|a| a.female).count()
    }

    pub fn has_child(&self) -> bool {
        self.attributes.iter().any(|a| a.child)
    }
}

/// Number of faces surviving the scan and suppression.
pub fn count_faces(img: &Tensor, detector: Option<&HaarDetector>, config: &ScanConfig) -> Result<usize, DetectionError> {
    let detector = detector.ok_or(DetectionError::NoDetector)?;
    Ok(detect(img, detector, config)?.len())
}

/// Detects faces and, when attribute networks are supplied, classifies a
/// resampled crop of every detection. No network is run when nothing is
/// detected.
pub fn annotate(
    img: &Tensor,
    detector: Option<&HaarDetector>,
    attributes: Option<&AttributeNets>,
    config: &ScanConfig,
) -> Result<ImageAnnotation, DetectionError> {
    let detector = detector.ok_or(DetectionError::NoDetector)?;
    let faces = detect(img, detector, config)?;
    let mut attrs = Vec::with_capacity(faces.len());
    if let Some(nets) = attributes {
        if !faces.is_empty() {
            let gray = grayscale(img)?;
            for d in &faces {
                attrs.push(nets.classify(&face_crop(&gray, &d.bbox)?)?);
            }
        }
    }
    Ok(ImageAnnotation { faces, attributes: attrs })
}
