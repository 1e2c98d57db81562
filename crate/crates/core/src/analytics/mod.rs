//! Turning per-image annotations into event data: Bradley-Terry scoring of
//! pairwise judgments, per-day crowd series, correlation, Welch t-tests and
//! lagged standardized regression.

pub mod bt;
pub mod ols;
pub mod reference;
pub mod series;
pub mod stats;

use thiserror::Error;

pub use bt::{bt_fit, BtOptions, BtScores, ComparisonRecord, Winner};
pub use ols::{lagged_regression, ols, Coefficient, DvTransform, LagSpec, RegressionResult};
pub use reference::{correlate_reference, reference_pairs, Correlation, ReferenceSize};
pub use series::{crowd_size_series, EventDay, Field, ImageRecord};
pub use stats::{log10_zero_rule, pearson, student_t_cdf, student_t_quantile, welch_t_test, WelchResult};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("comparison of item {0:?} with itself")]
    SelfComparison(String),
    #[error("no input records")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("negative value {0} cannot be log-transformed")]
    Negative(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("rank-deficient design: {} is a linear combination of the other columns", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;
