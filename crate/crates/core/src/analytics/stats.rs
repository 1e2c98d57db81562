//! Correlation, Welch's t-test and the Student-t distribution.

use super::{AnalyticsError, Result};

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms; ~1e-15 relative).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the fraction converges fast on this side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df > 0` degrees of freedom (real-valued).
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value `P(|T| >= |t|)`; computed directly to avoid cancellation.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(0.5 * df, 0.5, df / (df + t * t)).min(1.0)
}

/// Quantile of Student's t by bisection on the CDF, to about 1e-12.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0 && df > 0.0, "quantile needs 0 < p < 1 and df > 0");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    let mut hi = 1.0;
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AnalyticsError::NonFinite(what.into()))
    }
}

/// `log10` of non-negative counts, mapping zero to `log10(0 + 1) = 0`.
/// Returns the transformed values and the number of zeros substituted.
pub fn log10_zero_rule(x: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut zeros = 0;
    let out = x
        .iter()
        .map(|&v| {
            if v < 0.0 || v.is_nan() {
                Err(AnalyticsError::Negative(v))
            } else if v == 0.0 {
                zeros += 1;
                Ok(0.0)
            } else {
                Ok(v.log10())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, zeros))
}

/// Pearson correlation, optionally of the `log10` values (zeros mapped by
/// [`log10_zero_rule`]).
pub fn pearson(x: &[f64], y: &[f64], logged: bool) -> Result<f64> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalyticsError::TooFew { needed: 3, got: x.len() });
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let (x, y) = if logged {
        (log10_zero_rule(x)?.0, log10_zero_rule(y)?.0)
    } else {
        (x.to_vec(), y.to_vec())
    };
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return Err(AnalyticsError::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(AnalyticsError::ZeroVariance("y".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for (x, name) in [(a, "a"), (b, "b")] {
        if x.len() < 2 {
            return Err(AnalyticsError::TooFew { needed: 2, got: x.len() });
        }
        check_finite(x, name)?;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(AnalyticsError::ZeroVariance("both samples".into()));
    }
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
        mean_a: ma,
        mean_b: mb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::gamma::ln_gamma as ref_ln_gamma;

    #[test]
    fn ln_gamma_against_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5, 170.0] {
            let (a, b) = (ln_gamma(x), ref_ln_gamma(x));
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn t_cdf_against_reference() {
        for &df in &[1.0, 2.0, 3.5, 7.0, 30.0, 120.0, 1000.0] {
            let d = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[-40.0, -6.0, -2.0, -0.3, 0.0, 0.7, 1.96, 4.0, 12.0] {
                let (ours, theirs) = (student_t_cdf(t, df), d.cdf(t));
                assert!((ours - theirs).abs() < 1e-8, "df {df} t {t}: {ours} vs {theirs}");
            }
        }
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for &df in &[1.0, 4.0, 10.0, 47.0, 300.0] {
            let d = StudentsT::new(0.0, 1.0, df).unwrap();
            for &p in &[0.025, 0.5, 0.9, 0.975, 0.999] {
                let q = student_t_quantile(p, df);
                assert!((q - d.inverse_cdf(p)).abs() < 1e-7, "df {df} p {p}");
                assert!((student_t_cdf(q, df) - p).abs() < 1e-11);
            }
        }
        // the familiar large-sample value
        assert!((student_t_quantile(0.975, 1e7) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y, false).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg, false).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 5], false).is_err());
        assert!(pearson(&x[..2], &y[..2], false).is_err());
        assert!(pearson(&x, &y[..4], false).is_err());
        assert!(pearson(&[-1.0, 2.0, 3.0], &x[..3], true).is_err());
        // zeros become log10(1) = 0
        let r = pearson(&[0.0, 10.0, 100.0], &[1.0, 10.0, 100.0], true).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let same = welch_t_test(&a, &a).unwrap();
        assert_eq!(same.t, 0.0);
        assert!((same.p - 1.0).abs() < 1e-15);
        let b: Vec<f64> = a.iter().map(|v| v * 0.01 + 100.0).collect();
        let sep = welch_t_test(&a.map(|v| v * 0.01), &b).unwrap();
        assert!(sep.p < 0.001);
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn welch_matches_permutation_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..4 {
            let shift = [0.0, 0.4, 0.8, 1.2][case];
            let a: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
            let b: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let res = welch_t_test(&a, &b).unwrap();
            let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let perms = 20_000;
            let mut extreme = 0;
            for _ in 0..perms {
                pooled.shuffle(&mut rng);
                let t = welch_t_test(&pooled[..12], &pooled[12..]).unwrap().t;
                if t.abs() >= res.t.abs() {
                    extreme += 1;
                }
            }
            let perm_p = extreme as f64 / perms as f64;
            assert!((perm_p - res.p).abs() < 0.02, "case {case}: perm {perm_p} vs t {}", res.p);
        }
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            a in 0.01f64..50.0, b in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y, false) {
                prop_assert!((r - pearson(&y, &x, false).unwrap()).abs() < 1e-12);
                let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((r - pearson(&xs, &y, false).unwrap()).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
