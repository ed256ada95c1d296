use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Standard confusion-matrix metrics. Undefined ratios are reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision,
            recall,
            f1,
            confusion: c,
        }
    }
}

/// Query-level metrics: one yes/no verdict per query against its label.
pub fn evaluate(verdicts: &[bool], truth: &[bool]) -> Result<MetricsReport, EvalError> {
    if verdicts.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            verdicts: verdicts.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (&v, &t) in verdicts.iter().zip(truth) {
        match (v, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(MetricsReport::from_confusion(c))
}

/// Pair-level metrics over all `(query, record)` pairs: `predicted[q]`
/// lists the records reported as matches of query `q`, `truth[q]` is the
/// record it was derived from.
pub fn evaluate_pairs(predicted: &[Vec<u32>], truth: &[Option<u32>], records: usize) -> Result<MetricsReport, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            verdicts: predicted.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (p, &t) in predicted.iter().zip(truth) {
        let hit = t.is_some_and(|t| p.contains(&t));
        let tp = u64::from(hit);
        c.tp += tp;
        c.fp += p.len() as u64 - tp;
        c.fn_ += u64::from(t.is_some() && !hit);
    }
    c.tn = (predicted.len() as u64 * records as u64) - c.tp - c.fp - c.fn_;
    Ok(MetricsReport::from_confusion(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_verdicts() {
        let t = [true, false, true, false];
        let m = evaluate(&t, &t).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn all_negative_on_balanced_set() {
        let m = evaluate(&[false; 4], &[true, true, false, false]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 0.5));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate(&[true], &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn pair_counts() {
        let m = evaluate_pairs(&[vec![3, 4], vec![], vec![1]], &[Some(3), Some(2), None], 10).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 1, fp: 2, fn_: 1, tn: 26 });
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean_and_counts_sum(v in prop::collection::vec(any::<(bool, bool)>(), 1..200)) {
            let (p, t): (Vec<bool>, Vec<bool>) = v.iter().copied().unzip();
            let m = evaluate(&p, &t).unwrap();
            prop_assert_eq!(m.confusion.total() as usize, v.len());
            if m.precision + m.recall > 0.0 {
                let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                prop_assert!((m.f1 - h).abs() < 1e-12 || m.precision == 0.0 || m.recall == 0.0);
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
            for x in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }
}
