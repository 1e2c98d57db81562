//! Ordinary least squares by Householder QR, and the lagged standardized
//! regression built on it.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use super::series::{EventDay, Field};
use super::stats::{log10_zero_rule, student_t_quantile};
use super::{AnalyticsError, Result};

/// One row of a regression table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub variable: String,
    pub coef: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Coefficient {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Intercept first, then the regressors in the order given.
    pub coefficients: Vec<Coefficient>,
    pub residual_variance: f64,
    pub n: usize,
    pub df: usize,
    /// Dependent-variable rows where `log10(0)` was replaced by 0.
    pub log_zero_rows: usize,
}

impl RegressionResult {
    pub fn get(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.variable == name)
    }
}

/// Relative pivot size below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// OLS of `y` on an intercept plus the named columns, with 95% confidence
/// intervals from the t distribution on `n - k` degrees of freedom.
pub fn ols(y: &[f64], columns: &[(String, Vec<f64>)]) -> Result<RegressionResult> {
    let n = y.len();
    let k = columns.len() + 1;
    for (name, c) in columns {
        if c.len() != n {
            return Err(AnalyticsError::LengthMismatch(n, c.len()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticsError::NonFinite(name.clone()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite("dependent variable".into()));
    }
    if n <= k {
        return Err(AnalyticsError::TooFew { needed: k + 1, got: n });
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(columns.iter().map(|(n, _)| n.clone()));
    // column-major copy of the design, overwritten by R above the diagonal
    let mut a: Vec<Vec<f64>> = std::iter::once(vec![1.0; n])
        .chain(columns.iter().map(|(_, c)| c.clone()))
        .collect();
    let orig = a.clone();
    let mut qty = y.to_vec();
    let scale: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * scale[j].max(f64::MIN_POSITIVE) {
            return Err(rank_error(&orig, &names, j));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            col.iter_mut().zip(&v).for_each(|(c, p)| *c -= f * p);
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
    }
    let r = |i: usize, j: usize| a[j][i];

    // back substitution for the coefficients
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }
    let df = n - k;
    let rss: f64 = qty[k..].iter().map(|v| v * v).sum();
    let sigma2 = rss / df as f64;
    // R^-1 (upper triangular); cov = sigma2 * R^-1 R^-T
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        rinv[c][c] = 1.0 / r(c, c);
        for i in (0..c).rev() {
            let s: f64 = (i + 1..=c).map(|j| r(i, j) * rinv[j][c]).sum();
            rinv[i][c] = -s / r(i, i);
        }
    }
    let tq = student_t_quantile(0.975, df as f64);
    let coefficients = (0..k)
        .map(|i| {
            let var: f64 = (i..k).map(|j| rinv[i][j] * rinv[i][j]).sum::<f64>() * sigma2;
            let se = var.sqrt();
            Coefficient {
                variable: names[i].clone(),
                coef: beta[i],
                se,
                ci_lo: beta[i] - tq * se,
                ci_hi: beta[i] + tq * se,
            }
        })
        .collect();
    Ok(RegressionResult {
        coefficients,
        residual_variance: sigma2,
        n,
        df,
        log_zero_rows: 0,
    })
}

/// Names column `j` plus the earlier columns it is a combination of.
fn rank_error(cols: &[Vec<f64>], names: &[String], j: usize) -> AnalyticsError {
    // least squares of column j on columns 0..j via normal equations; the
    // earlier columns are independent, so this system is solvable
    let m = j;
    let mut g = vec![vec![0.0; m + 1]; m];
    for p in 0..m {
        for q in 0..m {
            g[p][q] = dot(&cols[p], &cols[q]);
        }
        g[p][m] = dot(&cols[p], &cols[j]);
    }
    let coef = solve(g).unwrap_or_else(|| vec![1.0; m]);
    let mut columns: Vec<String> = (0..m)
        .filter(|&p| coef[p].abs() > 1e-8)
        .map(|p| names[p].clone())
        .collect();
    columns.push(names[j].clone());
    AnalyticsError::RankDeficient { columns }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
pub(crate) fn solve(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = m.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

/// Standardizes to zero mean and unit (sample) variance.
pub fn standardize(x: &[f64], name: &str) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(AnalyticsError::ZeroVariance(name.into()));
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvTransform {
    /// `log10`, with zero counts mapped to `log10(0 + 1)`.
    Log10,
    Raw,
}

/// Which variables to pair and how.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSpec {
    pub dv: Field,
    pub ivs: Vec<Field>,
    /// Calendar-day lag between a regressor row and its outcome row.
    pub lag_days: i64,
    pub transform: DvTransform,
}

impl LagSpec {
    pub fn new(dv: Field, ivs: Vec<Field>) -> Self {
        Self {
            dv,
            ivs,
            lag_days: 1,
            transform: DvTransform::Log10,
        }
    }
}

/// Regresses the outcome on day `t` on the regressors from day
/// `t - lag_days` at the same location. Only pairs whose outcome row passes
/// `keep` are used (e.g. a weekday filter for one location). Regressors are
/// standardized over the pooled estimation sample; rows with a missing value
/// in any used field are dropped.
pub fn lagged_regression(days: &[EventDay], spec: &LagSpec, keep: impl Fn(&EventDay) -> bool) -> Result<RegressionResult> {
    if spec.ivs.is_empty() {
        return Err(AnalyticsError::Invalid("at least one regressor is required".into()));
    }
    if spec.lag_days < 0 {
        return Err(AnalyticsError::Invalid("lag must be non-negative".into()));
    }
    let by_key: HashMap<(&str, NaiveDate), &EventDay> = days.iter().map(|d| ((d.location.as_str(), d.date), d)).collect();
    let mut y_raw = Vec::new();
    let mut x_raw: Vec<Vec<f64>> = vec![Vec::new(); spec.ivs.len()];
    for d in days {
        if !keep(d) {
            continue;
        }
        let Some(prev) = by_key.get(&(d.location.as_str(), d.date - Duration::days(spec.lag_days))) else {
            continue;
        };
        let Some(y) = d.get(spec.dv) else { continue };
        let xs: Option<Vec<f64>> = spec.ivs.iter().map(|&f| prev.get(f)).collect();
        let Some(xs) = xs else { continue };
        y_raw.push(y);
        for (col, v) in x_raw.iter_mut().zip(xs) {
            col.push(v);
        }
    }
    let needed = spec.ivs.len() + 3;
    if y_raw.len() < needed {
        return Err(AnalyticsError::TooFew {
            needed,
            got: y_raw.len(),
        });
    }
    let (y, zeros) = match spec.transform {
        DvTransform::Log10 => log10_zero_rule(&y_raw)?,
        DvTransform::Raw => (y_raw, 0),
    };
    let columns = spec
        .ivs
        .iter()
        .zip(&x_raw)
        .map(|(f, x)| Ok((f.name().to_string(), standardize(x, f.name())?)))
        .collect::<Result<Vec<_>>>()?;
    let mut res = ols(&y, &columns)?;
    res.log_zero_rows = zeros;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Closed form `(X'X)^-1 X'y` with the textbook covariance.
    fn normal_equations(y: &[f64], cols: &[(String, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
        let n = y.len();
        let x: Vec<Vec<f64>> = std::iter::once(vec![1.0; n]).chain(cols.iter().map(|c| c.1.clone())).collect();
        let k = x.len();
        let mut xtx = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                xtx[i][j] = dot(&x[i], &x[j]);
            }
        }
        let beta = solve((0..k).map(|i| {
            let mut row = xtx[i].clone();
            row.push(dot(&x[i], y));
            row
        }).collect()).unwrap();
        let resid: Vec<f64> = (0..n).map(|r| y[r] - (0..k).map(|j| x[j][r] * beta[j]).sum::<f64>()).collect();
        let s2 = dot(&resid, &resid) / (n - k) as f64;
        let se = (0..k)
            .map(|i| {
                let mut aug: Vec<Vec<f64>> = xtx.clone();
                for (r, row) in aug.iter_mut().enumerate() {
                    row.push(if r == i { 1.0 } else { 0.0 });
                }
                (solve(aug).unwrap()[i] * s2).sqrt()
            })
            .collect();
        (beta, se)
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn exact_fit() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 5.0 + i as f64).collect();
        let z = standardize(&x, "x").unwrap();
        let y: Vec<f64> = z.iter().map(|v| 2.0 * v + 3.0).collect();
        let r = ols(&y, &[("x".into(), z)]).unwrap();
        assert!((r.coefficients[0].coef - 3.0).abs() < 1e-12);
        assert!((r.coefficients[1].coef - 2.0).abs() < 1e-12);
        assert!(r.coefficients.iter().all(|c| c.se < 1e-12));
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| ((i * i) % 7) as f64).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 2.0 * p - q).collect();
        let err = ols(&[1.0; 10], &[("a".into(), a.clone()), ("b".into(), b), ("c".into(), c)]).unwrap_err();
        assert_eq!(
            err,
            AnalyticsError::RankDeficient {
                columns: vec!["a".into(), "b".into(), "c".into()]
            }
        );
        let konst = ols(&[1.0; 10], &[("a".into(), a), ("k".into(), vec![4.0; 10])]).unwrap_err();
        assert_eq!(
            konst,
            AnalyticsError::RankDeficient {
                columns: vec!["intercept".into(), "k".into()]
            }
        );
    }

    #[test]
    fn too_few_rows() {
        assert!(ols(&[1.0, 2.0], &[("a".into(), vec![0.0, 1.0])]).is_err());
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, k) in [(12, 1), (50, 3), (200, 8), (120, 5)] {
            let cols: Vec<(String, Vec<f64>)> = (0..k)
                .map(|j| (format!("x{j}"), (0..n).map(|_| normal(&mut rng) + j as f64).collect()))
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|r| 1.0 + cols.iter().enumerate().map(|(j, c)| (j as f64 - 1.5) * c.1[r]).sum::<f64>() + normal(&mut rng))
                .collect();
            let res = ols(&y, &cols).unwrap();
            let (beta, se) = normal_equations(&y, &cols);
            for (c, (b, s)) in res.coefficients.iter().zip(beta.iter().zip(&se)) {
                assert!((c.coef - b).abs() < 1e-8, "{} {} {}", c.variable, c.coef, b);
                assert!((c.se - s).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn noise_only_intervals_straddle_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut covered = 0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..50).map(|_| normal(&mut rng)).collect();
            let y: Vec<f64> = (0..50).map(|_| normal(&mut rng)).collect();
            let r = ols(&y, &[("x".into(), standardize(&x, "x").unwrap())]).unwrap();
            covered += usize::from(r.coefficients[1].covers(0.0));
        }
        assert!(covered >= 90, "{covered}");
    }

    fn day(date: NaiveDate, loc: &str, faces: usize, tweets: usize) -> EventDay {
        EventDay {
            date,
            location: loc.into(),
            face_count: faces,
            pct_female: 0.5,
            pct_child_photos: 0.1,
            violence: Some(0.3),
            n_tweets: tweets,
            no_faces: faces == 0,
        }
    }

    #[test]
    fn lag_pairs_calendar_days_within_location() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let mut days = Vec::new();
        // faces on day t are 10^(1 + 0.1 * tweets on day t-1) exactly
        let tweets = [3usize, 7, 1, 9, 4, 6, 2, 8, 5, 10];
        for (i, &tw) in tweets.iter().enumerate() {
            let prev = if i == 0 { 5 } else { tweets[i - 1] };
            let faces = 10f64.powf(1.0 + 0.1 * prev as f64).round() as usize;
            days.push(day(d0 + Duration::days(i as i64), "A", faces, tw));
        }
        // a second location whose pairs must not mix with the first
        for (i, &tw) in tweets.iter().enumerate().skip(3) {
            days.push(day(d0 + Duration::days(i as i64 + 30), "B", 1, tw));
        }
        let spec = LagSpec {
            transform: DvTransform::Raw,
            ..LagSpec::new(Field::FaceCount, vec![Field::NTweets])
        };
        let only_a = lagged_regression(&days, &spec, |d| d.location == "A").unwrap();
        assert_eq!(only_a.n, 9);
        let logged = lagged_regression(&days, &LagSpec::new(Field::FaceCount, vec![Field::NTweets]), |d| d.location == "A").unwrap();
        // slope per standard deviation of lagged tweets
        let prev: Vec<f64> = tweets[..9].iter().map(|&t| t as f64).collect();
        let m = prev.iter().sum::<f64>() / 9.0;
        let sd = (prev.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 8.0).sqrt();
        assert!((logged.coefficients[1].coef - 0.1 * sd).abs() < 0.01);
        let pooled = lagged_regression(&days, &spec, |_| true).unwrap();
        assert_eq!(pooled.n, 9 + 6);
        // a gap in dates breaks pairing
        let gapped: Vec<EventDay> = days.iter().filter(|d| d.date != d0 + Duration::days(4)).cloned().collect();
        assert_eq!(lagged_regression(&gapped, &spec, |d| d.location == "A").unwrap().n, 7);
    }

    #[test]
    fn zero_dv_rows_are_flagged() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let days: Vec<EventDay> = (0..8).map(|i| day(d0 + Duration::days(i), "A", (i as usize * 3) % 5, i as usize + 1)).collect();
        let r = lagged_regression(&days, &LagSpec::new(Field::FaceCount, vec![Field::NTweets]), |_| true).unwrap();
        assert_eq!(r.log_zero_rows, days[1..].iter().filter(|d| d.face_count == 0).count());
    }

    proptest! {
        #[test]
        fn standardized_coefficient_ignores_scale(seed in any::<u64>(), scale in 0.001f64..1000.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..30).map(|_| normal(&mut rng)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.5 * v + normal(&mut rng)).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let a = ols(&y, &[("x".into(), standardize(&x, "x").unwrap())]).unwrap();
            let b = ols(&y, &[("x".into(), standardize(&xs, "x").unwrap())]).unwrap();
            prop_assert!((a.coefficients[1].coef - b.coefficients[1].coef).abs() < 1e-9);
        }
    }
}
