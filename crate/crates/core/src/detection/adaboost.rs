//! Discrete AdaBoost over decision stumps.

use rayon::prelude::*;

use super::DetectionError;

/// Error floor used when a stump separates the weighted sample perfectly.
pub const MIN_WEIGHTED_ERROR: f64 = 1e-10;

/// One boosting round: `h(x) = +1` when `polarity * x[feature] > polarity * threshold`,
/// otherwise `-1`, weighted by `alpha` in the ensemble vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: f64,
    pub alpha: f64,
}

impl Stump {
    #[inline]
    pub fn vote(&self, value: f64) -> f64 {
        if self.polarity * value > self.polarity * self.threshold {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedClassifier {
    pub rounds: Vec<Stump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    /// Weighted error of the stump picked in each round.
    pub weighted_errors: Vec<f64>,
    /// Unweighted training error of the ensemble after each round.
    pub training_errors: Vec<f64>,
}

impl BoostedClassifier {
    pub fn new(rounds: Vec<Stump>) -> Result<Self, DetectionError> {
        if rounds.is_empty() {
            return Err(DetectionError::Boost("classifier needs at least one round".into()));
        }
        if rounds.iter().any(|r| !r.alpha.is_finite() || !r.threshold.is_finite()) {
            return Err(DetectionError::Boost("non-finite round parameters".into()));
        }
        Ok(Self { rounds })
    }

    /// `sum_t alpha_t * h_t(x)` over the stored rounds.
    pub fn margin(&self, features: &[f64]) -> f64 {
        self.margin_with(|i| features[i])
    }

    /// Margin with features computed on demand.
    pub fn margin_with(&self, mut feature: impl FnMut(usize) -> f64) -> f64 {
        self.rounds
            .iter()
            .map(|r| r.alpha * r.vote(feature(r.feature)))
            .sum()
    }

    /// `+1` for a positive margin, `-1` otherwise.
    pub fn predict(&self, features: &[f64]) -> i8 {
        if self.margin(features) > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn training_error(&self, samples: &[(Vec<f64>, i8)]) -> f64 {
        let wrong = samples.iter().filter(|(x, y)| self.predict(x) != *y).count();
        wrong as f64 / samples.len() as f64
    }
}

struct Best {
    feature: usize,
    threshold: f64,
    polarity: f64,
    error: f64,
}

/// Trains up to `rounds` stumps. Initial weights give each class half of the
/// total mass. Training stops early once a stump is perfect on the weighted
/// sample or no stump beats chance; at least one round is always kept.
pub fn adaboost_train(samples: &[(Vec<f64>, i8)], rounds: usize) -> Result<BoostedClassifier, DetectionError> {
    Ok(adaboost_train_traced(samples, rounds)?.0)
}

pub fn adaboost_train_traced(
    samples: &[(Vec<f64>, i8)],
    rounds: usize,
) -> Result<(BoostedClassifier, BoostTrace), DetectionError> {
    if rounds == 0 {
        return Err(DetectionError::Boost("rounds must be at least 1".into()));
    }
    if samples.iter().any(|(_, y)| *y != 1 && *y != -1) {
        return Err(DetectionError::Boost("labels must be +1 or -1".into()));
    }
    let n_pos = samples.iter().filter(|(_, y)| *y == 1).count();
    let n_neg = samples.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DetectionError::Boost("both classes must be present".into()));
    }
    let dim = samples[0].0.len();
    if dim == 0 || samples.iter().any(|(x, _)| x.len() != dim) {
        return Err(DetectionError::Boost("feature vectors must share a non-zero length".into()));
    }
    if samples.iter().any(|(x, _)| x.iter().any(|v| !v.is_finite())) {
        return Err(DetectionError::Boost("non-finite feature value".into()));
    }

    let labels: Vec<f64> = samples.iter().map(|(_, y)| *y as f64).collect();
    let mut weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.0 { 0.5 / n_pos as f64 } else { 0.5 / n_neg as f64 })
        .collect();
    // sample order along each feature never changes; sort once
    let orders: Vec<(Vec<usize>, Vec<f64>)> = (0..dim)
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<usize> = (0..samples.len()).collect();
            idx.sort_by(|&a, &b| samples[a].0[f].total_cmp(&samples[b].0[f]));
            let vals = idx.iter().map(|&i| samples[i].0[f]).collect();
            (idx, vals)
        })
        .collect();

    let mut stumps = Vec::new();
    let mut margins = vec![0.0; samples.len()];
    let mut trace = BoostTrace {
        weighted_errors: Vec::new(),
        training_errors: Vec::new(),
    };
    for _ in 0..rounds {
        let best = best_stump(&labels, &weights, &orders);
        if best.error >= 0.5 - 1e-12 && !stumps.is_empty() {
            break;
        }
        let eps = best.error.max(MIN_WEIGHTED_ERROR);
        let alpha = 0.5 * ((1.0 - eps) / eps).ln();
        let stump = Stump {
            feature: best.feature,
            threshold: best.threshold,
            polarity: best.polarity,
            alpha,
        };
        let mut total = 0.0;
        for (i, (x, _)) in samples.iter().enumerate() {
            let h = stump.vote(x[stump.feature]);
            margins[i] += alpha * h;
            weights[i] *= (-alpha * labels[i] * h).exp();
            total += weights[i];
        }
        weights.iter_mut().for_each(|w| *w /= total);
        stumps.push(stump);

        let wrong = margins
            .iter()
            .zip(&labels)
            .filter(|(m, y)| (**m > 0.0) != (**y > 0.0))
            .count();
        trace.weighted_errors.push(best.error);
        trace.training_errors.push(wrong as f64 / samples.len() as f64);
        if best.error <= 0.0 || best.error >= 0.5 - 1e-12 {
            break;
        }
    }
    Ok((BoostedClassifier { rounds: stumps }, trace))
}

fn best_stump(labels: &[f64], weights: &[f64], orders: &[(Vec<usize>, Vec<f64>)]) -> Best {
    let (w_pos, w_neg) = labels.iter().zip(weights).fold((0.0, 0.0), |(p, n), (&y, &w)| {
        if y > 0.0 {
            (p + w, n)
        } else {
            (p, n + w)
        }
    });
    // features are scanned in parallel; ties go to the lowest feature index
    let mut best = orders
        .par_iter()
        .enumerate()
        .map(|(f, (order, vals))| feature_stump(f, order, vals, labels, weights, w_pos, w_neg))
        .reduce(
            || Best {
                feature: usize::MAX,
                threshold: f64::NEG_INFINITY,
                polarity: 1.0,
                error: f64::INFINITY,
            },
            |a, b| {
                if b.error < a.error || (b.error == a.error && b.feature < a.feature) {
                    b
                } else {
                    a
                }
            },
        );
    best.error = best.error.clamp(0.0, 1.0);
    best
}

fn feature_stump(
    f: usize,
    order: &[usize],
    vals: &[f64],
    labels: &[f64],
    weights: &[f64],
    w_pos: f64,
    w_neg: f64,
) -> Best {
    let mut best = Best {
        feature: f,
        threshold: f64::NEG_INFINITY,
        polarity: 1.0,
        error: f64::INFINITY,
    };
    // weights of positives / negatives at or below the candidate threshold
    let (mut s_pos, mut s_neg) = (0.0, 0.0);
    let consider = |threshold: f64, s_pos: f64, s_neg: f64, best: &mut Best| {
        // polarity +1 predicts positive above the threshold
        let err_up = s_pos + (w_neg - s_neg);
        let err_down = s_neg + (w_pos - s_pos);
        if err_up < best.error {
            *best = Best {
                feature: f,
                threshold,
                polarity: 1.0,
                error: err_up,
            };
        }
        if err_down < best.error {
            *best = Best {
                feature: f,
                threshold,
                polarity: -1.0,
                error: err_down,
            };
        }
    };
    consider(vals[0] - 1.0, 0.0, 0.0, &mut best);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] > 0.0 {
            s_pos += weights[i];
        } else {
            s_neg += weights[i];
        }
        let v = vals[k];
        let threshold = match vals.get(k + 1) {
            Some(&nv) => {
                if nv == v {
                    continue;
                }
                0.5 * (v + nv)
            }
            None => v + 1.0,
        };
        consider(threshold, s_pos, s_neg, &mut best);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d(points: &[(f64, i8)]) -> Vec<(Vec<f64>, i8)> {
        points.iter().map(|&(x, y)| (vec![x], y)).collect()
    }

    #[test]
    fn separable_needs_one_round() {
        let data = one_d(&[(0.1, -1), (0.4, -1), (0.5, -1), (1.2, 1), (1.9, 1), (3.0, 1)]);
        let (clf, trace) = adaboost_train_traced(&data, 10).unwrap();
        assert_eq!(clf.rounds.len(), 1);
        assert_eq!(clf.training_error(&data), 0.0);
        assert_eq!(trace.training_errors, vec![0.0]);
        let expected_alpha = 0.5 * ((1.0 - MIN_WEIGHTED_ERROR) / MIN_WEIGHTED_ERROR).ln();
        assert!((clf.rounds[0].alpha - expected_alpha).abs() < 1e-12);
        assert!(clf.rounds[0].threshold > 0.5 && clf.rounds[0].threshold < 1.2);
    }

    #[test]
    fn interval_pattern_improves_with_rounds() {
        // -,+,- along one axis: no single stump gets it right
        let mut pts = Vec::new();
        for i in 0..30 {
            let x = i as f64 / 10.0;
            let y = if (1.0..2.0).contains(&x) { 1 } else { -1 };
            pts.push((x, y));
        }
        let data = one_d(&pts);
        let one = adaboost_train(&data, 1).unwrap();
        let many = adaboost_train(&data, 20).unwrap();
        assert!(one.training_error(&data) > 0.0);
        assert!(many.training_error(&data) < one.training_error(&data));
        assert_eq!(many.training_error(&data), 0.0);
    }

    #[test]
    fn xor_gains_from_more_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<(Vec<f64>, i8)> = (0..80)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                // XOR quadrants with an unequal split so stumps have something to find
                let y = if (a > 0.3) != (b > -0.2) { 1 } else { -1 };
                (vec![a, b], y)
            })
            .collect();
        let one = adaboost_train(&data, 1).unwrap().training_error(&data);
        let more = adaboost_train(&data, 30).unwrap().training_error(&data);
        assert!(one > 0.1);
        assert!(more < one);
    }

    #[test]
    fn stored_rounds_reproduce_votes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<(Vec<f64>, i8)> = (0..60)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = if x[0] + 0.5 * x[2] > 0.1 { 1 } else { -1 };
                (x, y)
            })
            .collect();
        let (clf, trace) = adaboost_train_traced(&data, 15).unwrap();
        for (x, _) in &data {
            let mut m = 0.0;
            for r in &clf.rounds {
                let h = if r.polarity * x[r.feature] > r.polarity * r.threshold { 1.0 } else { -1.0 };
                m += r.alpha * h;
            }
            assert_eq!(clf.predict(x), if m > 0.0 { 1 } else { -1 });
        }
        assert_eq!(*trace.training_errors.last().unwrap(), clf.training_error(&data));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(adaboost_train(&one_d(&[(0.0, 1), (1.0, 1)]), 3).is_err());
        assert!(adaboost_train(&one_d(&[(0.0, 1), (1.0, -1)]), 0).is_err());
        assert!(adaboost_train(&[(vec![0.0], 1), (vec![1.0, 2.0], -1)], 1).is_err());
        assert!(adaboost_train(&one_d(&[(0.0, 2), (1.0, -1)]), 1).is_err());
        assert!(BoostedClassifier::new(vec![]).is_err());
    }
}
