//! Joining event series with external crowd-size estimates.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::series::{EventDay, Field};
use super::stats::pearson;
use super::{AnalyticsError, Result};

/// An external crowd-size estimate for one day and place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSize {
    pub date: NaiveDate,
    pub location: String,
    pub source: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub n: usize,
    pub raw: f64,
    pub logged: f64,
}

/// `(series value, estimate)` for every reference whose day exists in the
/// series, in reference order. `source` restricts to one estimator.
pub fn reference_pairs(days: &[EventDay], refs: &[ReferenceSize], field: Field, source: Option<&str>) -> Vec<(f64, f64)> {
    let by_key: HashMap<(&str, NaiveDate), &EventDay> = days.iter().map(|d| ((d.location.as_str(), d.date), d)).collect();
    refs.iter()
        .filter(|r| source.is_none_or(|s| r.source == s))
        .filter_map(|r| {
            let day = by_key.get(&(r.location.as_str(), r.date))?;
            Some((day.get(field)?, r.estimate))
        })
        .collect()
}

/// Raw and `log10` Pearson correlation of `field` against the estimates.
pub fn correlate_reference(days: &[EventDay], refs: &[ReferenceSize], field: Field, source: Option<&str>) -> Result<Correlation> {
    let pairs = reference_pairs(days, refs, field, source);
    if pairs.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(Correlation {
        n: x.len(),
        raw: pearson(&x, &y, false)?,
        logged: pearson(&x, &y, true)?,
    })
}
