//! Masked ROC-AUC, per-run scores and median/MAD aggregation over reruns.

use std::cmp::Ordering;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Endpoint, LabelMatrix, ENDPOINT_COUNT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {scores} scores, {labels} labels, {mask} mask entries")]
    LengthMismatch { scores: usize, labels: usize, mask: usize },
    #[error("AUC undefined with {n_pos} positives and {n_neg} negatives")]
    UndefinedAuc { n_pos: usize, n_neg: usize },
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
    #[error("{endpoint}: {source}")]
    Endpoint { endpoint: Endpoint, source: Box<MetricsError> },
    #[error("predictions cover {found} rows, truth has {expected}")]
    RowCount { found: usize, expected: usize },
    #[error("prediction for row {row}, {endpoint} is {value}, outside [0, 1]")]
    Coverage { row: usize, endpoint: Endpoint, value: f64 },
    #[error("no runs to aggregate")]
    EmptyRuns,
    #[error("run value {0} is not finite")]
    NonFiniteRun(f64),
}

/// Mann-Whitney ROC-AUC over unmasked entries, ties credited one half.
/// `mask[i] == true` means entry `i` takes part.
pub fn roc_auc(scores: &[f64], labels: &[bool], mask: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() || scores.len() != mask.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len(), mask: mask.len() });
    }
    let mut items: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (i, ((&s, &y), &m)) in scores.iter().zip(labels).zip(mask).enumerate() {
        if !m {
            continue;
        }
        if !s.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
        // +0.0 folds -0.0 into 0.0 so both rank as ties
        items.push((s + 0.0, y));
    }
    let n_pos = items.iter().filter(|(_, y)| *y).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::UndefinedAuc { n_pos, n_neg });
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the midrank sum of positives, kept integral
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i + 1;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        let positives = items[i..j].iter().filter(|(_, y)| *y).count() as u128;
        // ranks i+1..=j average to (i+1+j)/2
        twice_rank_sum += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointScore {
    pub endpoint: Endpoint,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub per_endpoint: Vec<EndpointScore>,
    pub mean_auc: f64,
}

impl RunScore {
    pub fn auc(&self, endpoint: Endpoint) -> Option<f64> {
        self.per_endpoint.iter().find(|s| s.endpoint == endpoint).map(|s| s.auc)
    }
}

/// Scores one prediction matrix (rows aligned with `truth`) against the
/// truth mask, one AUC per endpoint, then the plain mean over all twelve.
pub fn score_run(predictions: &[[f64; ENDPOINT_COUNT]], truth: &LabelMatrix) -> Result<RunScore, MetricsError> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::RowCount { found: predictions.len(), expected: truth.len() });
    }
    for (row, p) in predictions.iter().enumerate() {
        for e in Endpoint::ALL {
            let v = p[e.index()];
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::Coverage { row, endpoint: e, value: v });
            }
        }
    }
    let mut per_endpoint = Vec::with_capacity(ENDPOINT_COUNT);
    for e in Endpoint::ALL {
        let k = e.index();
        let scores: Vec<f64> = predictions.iter().map(|p| p[k]).collect();
        let labels: Vec<bool> = truth.column(e).map(|c| c == Some(true)).collect();
        let mask: Vec<bool> = truth.column(e).map(|c| c.is_some()).collect();
        let auc = roc_auc(&scores, &labels, &mask)
            .map_err(|source| MetricsError::Endpoint { endpoint: e, source: Box::new(source) })?;
        let n_pos = labels.iter().zip(&mask).filter(|(y, m)| **y && **m).count();
        let n_neg = mask.iter().filter(|m| **m).count() - n_pos;
        per_endpoint.push(EndpointScore { endpoint: e, auc, n_pos, n_neg });
    }
    let mean_auc = per_endpoint.iter().map(|s| s.auc).sum::<f64>() / ENDPOINT_COUNT as f64;
    Ok(RunScore { per_endpoint, mean_auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub run_means: Vec<f64>,
    pub median: f64,
    pub mad: f64,
}

/// Median and median absolute deviation of per-run mean AUCs.
///
/// Each input is taken at its shortest round-trip decimal value and the
/// statistics are computed exactly in decimal before rounding back to the
/// nearest double, so reported values such as 0.84 and 0.85 give a MAD of
/// exactly 0.01 rather than a binary artifact of the subtraction.
pub fn aggregate_runs(run_means: &[f64]) -> Result<AggregateScore, MetricsError> {
    if run_means.is_empty() {
        return Err(MetricsError::EmptyRuns);
    }
    if let Some(&bad) = run_means.iter().find(|x| !x.is_finite()) {
        return Err(MetricsError::NonFiniteRun(bad));
    }
    let values: Vec<Decimal> = run_means.iter().map(|&x| Decimal::from_f64(x)).collect();
    let median = Decimal::median(values.clone());
    let deviations: Vec<Decimal> = values.iter().map(|v| v.sub(&median).abs()).collect();
    let mad = Decimal::median(deviations);
    Ok(AggregateScore { run_means: run_means.to_vec(), median: median.to_f64(), mad: mad.to_f64() })
}

/// Three-decimal rendering used in reports.
pub fn format_score(x: f64) -> String {
    format!("{x:.3}")
}

/// Exact decimal `mantissa / 10^scale`.
#[derive(Debug, Clone)]
struct Decimal {
    mantissa: BigInt,
    scale: u32,
}

impl Decimal {
    fn from_f64(x: f64) -> Decimal {
        // `{:e}` renders the shortest digits that round-trip
        let text = format!("{x:e}");
        let (digits, exp) = text.split_once('e').expect("exponent form");
        let exp: i64 = exp.parse().expect("integer exponent");
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        let mantissa: BigInt = format!("{int_part}{frac_part}").parse().expect("decimal digits");
        let power = exp - frac_part.len() as i64;
        if power >= 0 {
            Decimal { mantissa: mantissa * BigInt::from(10).pow(power as u32), scale: 0 }
        } else {
            Decimal { mantissa, scale: (-power) as u32 }
        }
    }

    fn rescaled(&self, scale: u32) -> BigInt {
        &self.mantissa * BigInt::from(10).pow(scale - self.scale)
    }

    fn aligned(a: &Decimal, b: &Decimal) -> (BigInt, BigInt, u32) {
        let scale = a.scale.max(b.scale);
        (a.rescaled(scale), b.rescaled(scale), scale)
    }

    fn cmp(&self, other: &Decimal) -> Ordering {
        let (a, b, _) = Decimal::aligned(self, other);
        a.cmp(&b)
    }

    fn sub(&self, other: &Decimal) -> Decimal {
        let (a, b, scale) = Decimal::aligned(self, other);
        Decimal { mantissa: a - b, scale }
    }

    fn abs(&self) -> Decimal {
        Decimal { mantissa: self.mantissa.magnitude().clone().into(), scale: self.scale }
    }

    /// Lower and upper middle averaged for even counts.
    fn median(mut values: Vec<Decimal>) -> Decimal {
        values.sort_by(|a, b| a.cmp(b));
        let n = values.len();
        if n % 2 == 1 {
            values.swap_remove(n / 2)
        } else {
            let (a, b, scale) = Decimal::aligned(&values[n / 2 - 1], &values[n / 2]);
            // (a + b) / 2 == (a + b) * 5 / 10
            Decimal { mantissa: (a + b) * 5, scale: scale + 1 }
        }
    }

    fn to_f64(&self) -> f64 {
        let digits = self.mantissa.magnitude().to_string();
        let sign = if self.mantissa < BigInt::from(0) { "-" } else { "" };
        // the standard parser rounds decimal text correctly
        format!("{sign}{digits}e-{}", self.scale).parse().expect("decimal text parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn auc(labels: &[u8], scores: &[f64]) -> Result<f64, MetricsError> {
        let y: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        roc_auc(scores, &y, &vec![true; y.len()])
    }

    #[test]
    fn hand_checked_values() {
        assert_eq!(auc(&[1, 0], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[1, 0, 1, 0], &[0.8, 0.8, 0.6, 0.2]).unwrap(), 0.625);
        assert_eq!(auc(&[1, 0, 1, 0, 0], &[0.3; 5]).unwrap(), 0.5);
        assert!(matches!(auc(&[1, 1], &[0.1, 0.2]), Err(MetricsError::UndefinedAuc { n_pos: 2, n_neg: 0 })));
    }

    #[test]
    fn mask_excludes_entries() {
        let y = [true, false, true, false];
        let s = [0.9, 0.1, 0.0, 0.95];
        assert_eq!(roc_auc(&s, &y, &[true, true, false, false]).unwrap(), 1.0);
        assert!(roc_auc(&s, &y, &[true, false, true, false]).is_err());
        assert!(matches!(roc_auc(&s, &y, &[true]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn signed_zero_ties() {
        assert_eq!(auc(&[1, 0], &[-0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn aggregation() {
        let a = aggregate_runs(&[0.84, 0.85, 0.83, 0.86, 0.82]).unwrap();
        assert_eq!(a.median, 0.84);
        assert_eq!(a.mad, 0.01);
        let a = aggregate_runs(&[0.5]).unwrap();
        assert_eq!((a.median, a.mad), (0.5, 0.0));
        let a = aggregate_runs(&[0.7; 4]).unwrap();
        assert_eq!((a.median, a.mad), (0.7, 0.0));
        let a = aggregate_runs(&[0.1, 0.2, 0.4, 0.3]).unwrap();
        assert_eq!(a.median, 0.25);
        assert_eq!(a.mad, 0.1);
        assert_eq!(aggregate_runs(&[]), Err(MetricsError::EmptyRuns));
    }

    #[test]
    fn decimal_roundtrip() {
        for x in [0.0, -0.0, 1.0, 0.1, 1e-300, 5e-324, 123456.789, -2.5e10, f64::MAX] {
            assert_eq!(Decimal::from_f64(x).to_f64(), x);
        }
    }

    #[test]
    fn three_decimals() {
        assert_eq!(format_score(0.84), "0.840");
        assert_eq!(format_score(0.8456), "0.846");
    }
}
