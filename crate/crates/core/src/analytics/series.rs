//! Per-day, per-location aggregates of image annotations.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::AnalyticsError;

/// One annotated photo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub date: NaiveDate,
    pub location: String,
    pub faces: usize,
    pub female_faces: usize,
    pub has_child: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDay {
    pub date: NaiveDate,
    pub location: String,
    pub face_count: usize,
    pub pct_female: f64,
    pub pct_child_photos: f64,
    /// Mean score of the day's scored images; absent when none is scored.
    pub violence: Option<f64>,
    pub n_tweets: usize,
    /// Set when the day has no faces and `pct_female` is defined as 0.
    pub no_faces: bool,
}

impl EventDay {
    pub fn is_saturday(&self) -> bool {
        self.date.weekday() == Weekday::Sat
    }

    pub fn get(&self, field: Field) -> Option<f64> {
        match field {
            Field::FaceCount => Some(self.face_count as f64),
            Field::PctFemale => Some(self.pct_female),
            Field::PctChildPhotos => Some(self.pct_child_photos),
            Field::Violence => self.violence,
            Field::NTweets => Some(self.n_tweets as f64),
        }
    }
}

/// Numeric columns of an [`EventDay`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    FaceCount,
    PctFemale,
    PctChildPhotos,
    Violence,
    NTweets,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::FaceCount,
        Field::PctFemale,
        Field::PctChildPhotos,
        Field::Violence,
        Field::NTweets,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::FaceCount => "face_count",
            Field::PctFemale => "pct_female",
            Field::PctChildPhotos => "pct_child_photos",
            Field::Violence => "violence",
            Field::NTweets => "n_tweets",
        }
    }
}

impl FromStr for Field {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| AnalyticsError::Invalid(format!("unknown field {s:?}")))
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Default)]
struct Acc {
    faces: usize,
    female: usize,
    child_photos: usize,
    photos: usize,
    violence_sum: f64,
    violence_n: usize,
}

/// Aggregates photos into one [`EventDay`] per `(location, date)`, sorted by
/// location then date. `violence` maps image ids to scores; images without
/// a score do not enter the day's mean.
pub fn crowd_size_series(images: &[ImageRecord], violence: &HashMap<String, f64>) -> Result<Vec<EventDay>, AnalyticsError> {
    let mut days: BTreeMap<(&str, NaiveDate), Acc> = BTreeMap::new();
    for img in images {
        if img.location.trim().is_empty() {
            return Err(AnalyticsError::Invalid(format!("image {} has an empty location", img.image_id)));
        }
        if img.female_faces > img.faces {
            return Err(AnalyticsError::Invalid(format!(
                "image {} has more female faces than faces",
                img.image_id
            )));
        }
        let acc = days.entry((&img.location, img.date)).or_default();
        acc.faces += img.faces;
        acc.female += img.female_faces;
        acc.photos += 1;
        acc.child_photos += usize::from(img.has_child);
        if let Some(&v) = violence.get(&img.image_id) {
            acc.violence_sum += v;
            acc.violence_n += 1;
        }
    }
    Ok(days
        .into_iter()
        .map(|((location, date), a)| EventDay {
            date,
            location: location.to_string(),
            face_count: a.faces,
            pct_female: if a.faces > 0 { a.female as f64 / a.faces as f64 } else { 0.0 },
            pct_child_photos: a.child_photos as f64 / a.photos as f64,
            violence: (a.violence_n > 0).then(|| a.violence_sum / a.violence_n as f64),
            n_tweets: a.photos,
            no_faces: a.faces == 0,
        })
        .collect())
}
