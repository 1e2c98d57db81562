//! Fully synthetic protest corpus with known ground truth.
//!
//! Each location gets a run of consecutive days. On day `t` the number of
//! photos `n_t` is uniform on a range, and the crowd (total faces over the
//! day's photos) follows
//!
//! `log10 F_t = intercept + slope * (n_{t-1} - centre) + e_t`
//!
//! with Gaussian `e_t`, rounded to an integer and kept within the photos'
//! capacity. External reference sizes are `10^(offset + log10 F_t + u_t)`.
//! Images carry a latent per-day violence level that only drives the
//! generated pairwise judgments; it has no effect on the crowd.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analytics::{AnalyticsError, ComparisonRecord, ReferenceSize, Winner};
use crate::detection::faces::{random_scene, AttributeRates, FACE_BASE};
use crate::detection::DetectionError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub locations: usize,
    pub days: usize,
    pub start: NaiveDate,
    pub image_size: usize,
    pub max_faces_per_photo: usize,
    /// Inclusive range of photos per day.
    pub photos: (usize, usize),
    pub intercept: f64,
    /// Change in `log10` faces per extra photo on the previous day.
    pub slope: f64,
    pub noise_sd: f64,
    pub reference_offset: f64,
    pub reference_noise_sd: f64,
    /// Comparisons each image takes part in; even.
    pub comparisons_per_image: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            locations: 1,
            days: 30,
            start: NaiveDate::from_ymd_opt(2019, 6, 1).expect("valid date"),
            image_size: 64,
            max_faces_per_photo: 4,
            photos: (5, 8),
            intercept: 0.9,
            slope: 0.08,
            noise_sd: 0.08,
            reference_offset: 1.5,
            reference_noise_sd: 0.06,
            comparisons_per_image: 4,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::Attribute(format!("corpus: {m}")));
        let (lo, hi) = self.photos;
        if self.days < 2 || self.locations == 0 {
            return bad("need at least one location and two days");
        }
        if lo == 0 || lo > hi {
            return bad("photo range must be non-empty and positive");
        }
        let grid = self.image_size / FACE_BASE;
        if self.max_faces_per_photo == 0 || self.max_faces_per_photo > grid * grid {
            return bad("faces per photo do not fit the image");
        }
        if self.comparisons_per_image % 2 != 0 || lo * self.days <= self.comparisons_per_image {
            return bad("comparisons per image must be even and below the image count");
        }
        if !(self.noise_sd >= 0.0 && self.reference_noise_sd >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }

    pub fn location_name(&self, index: usize) -> String {
        format!("loc{index:03}")
    }
}

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub image_id: String,
    pub date: NaiveDate,
    pub location: String,
    pub image: Tensor,
    pub planted_faces: usize,
    pub violence_merit: f64,
}

/// One location's images, judgments, references and the latent values.
#[derive(Debug, Clone)]
pub struct LocationCorpus {
    pub location: String,
    pub images: Vec<CorpusImage>,
    pub comparisons: Vec<ComparisonRecord>,
    pub references: Vec<ReferenceSize>,
    /// Photos per day.
    pub photos: Vec<usize>,
    /// Planted faces per day.
    pub faces: Vec<usize>,
}

impl LocationCorpus {
    /// Standardized coefficient of the previous day's photo count in a
    /// regression of `log10` faces on it: the raw slope times the sample
    /// standard deviation of the regressor over the estimation rows.
    pub fn planted_coefficient(&self, slope: f64) -> f64 {
        let x: Vec<f64> = self.photos[..self.photos.len() - 1].iter().map(|&n| n as f64).collect();
        slope * sample_sd(&x)
    }

    pub fn planted_log_counts(&self) -> Vec<f64> {
        self.faces.iter().map(|&f| (f as f64).log10()).collect()
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Correlation between planted `log10` crowds and `log10` references
/// implied by the reference noise: `s / sqrt(s^2 + sd^2)` with `s` the sample
/// standard deviation of the planted log counts.
pub fn analytic_log_correlation(planted_log_counts: &[f64], reference_noise_sd: f64) -> f64 {
    let s = sample_sd(planted_log_counts);
    s / (s * s + reference_noise_sd * reference_noise_sd).sqrt()
}

/// Generates location `index`; each location draws from its own stream so
/// locations can be produced independently and in any order.
pub fn generate_location(cfg: &CorpusConfig, index: usize) -> Result<LocationCorpus, DetectionError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let location = cfg.location_name(index);
    let (lo, hi) = cfg.photos;
    let centre = (lo + hi) as f64 / 2.0;
    let noise = Normal::new(0.0, cfg.noise_sd).expect("validated sd");
    let ref_noise = Normal::new(0.0, cfg.reference_noise_sd).expect("validated sd");
    let merit_noise = Normal::new(0.0, 0.3).expect("positive sd");

    let photos: Vec<usize> = (0..cfg.days).map(|_| rng.random_range(lo..=hi)).collect();
    let mut faces = Vec::with_capacity(cfg.days);
    let mut images = Vec::new();
    let mut references = Vec::with_capacity(cfg.days);
    for (t, &n) in photos.iter().enumerate() {
        let date = cfg.start + Duration::days(t as i64);
        let lagged = if t == 0 { centre } else { photos[t - 1] as f64 };
        let log_f = cfg.intercept + cfg.slope * (lagged - centre) + noise.sample(&mut rng);
        let f = (10f64.powf(log_f).round() as usize).clamp(1, n * cfg.max_faces_per_photo);
        faces.push(f);
        references.push(ReferenceSize {
            date,
            location: location.clone(),
            source: "synthetic".into(),
            estimate: 10f64.powf(cfg.reference_offset + (f as f64).log10() + ref_noise.sample(&mut rng)),
        });
        // spread f faces over n photos without exceeding any photo's capacity
        let mut per_photo = vec![0usize; n];
        for _ in 0..f {
            let open: Vec<usize> = (0..n).filter(|&k| per_photo[k] < cfg.max_faces_per_photo).collect();
            per_photo[open[rng.random_range(0..open.len())]] += 1;
        }
        let violence: f64 = rng.random_range(0.0..1.0);
        for (k, &count) in per_photo.iter().enumerate() {
            let (image, _) = random_scene(cfg.image_size, count, AttributeRates::default(), &mut rng)?;
            images.push(CorpusImage {
                image_id: format!("{location}-d{t:03}-p{k}"),
                date,
                location: location.clone(),
                image,
                planted_faces: count,
                violence_merit: (3.0 * violence + merit_noise.sample(&mut rng)).exp(),
            });
        }
    }
    let comparisons = judgments(&images, cfg.comparisons_per_image, &mut rng)
        .map_err(|e| DetectionError::Attribute(format!("corpus: {e}")))?;
    Ok(LocationCorpus {
        location,
        images,
        comparisons,
        references,
        photos,
        faces,
    })
}

/// Pairwise "which is more violent" judgments: a ring over a random order
/// of the images, winners drawn from their merits.
fn judgments(images: &[CorpusImage], per_item: usize, rng: &mut impl Rng) -> Result<Vec<ComparisonRecord>, AnalyticsError> {
    let n = images.len();
    if per_item % 2 != 0 || n <= per_item {
        return Err(AnalyticsError::Invalid("too few images for the comparison design".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(n * per_item / 2);
    for i in 0..n {
        for d in 1..=per_item / 2 {
            let (a, b) = (&images[order[i]], &images[order[(i + d) % n]]);
            let p = a.violence_merit / (a.violence_merit + b.violence_merit);
            let winner = if rng.random_bool(p) { Winner::A } else { Winner::B };
            out.push(ComparisonRecord::new(a.image_id.clone(), b.image_id.clone(), winner)?);
        }
    }
    Ok(out)
}
