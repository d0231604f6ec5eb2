use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification quality on one split. `confusion[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Data("no samples to score".into()));
        }
        let correct: usize = (0..confusion.len()).map(|c| confusion[c][c]).sum();
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            balanced_accuracy: balanced_accuracy(&confusion)?,
            confusion,
        })
    }

    pub fn from_predictions(labels: &[usize], predictions: &[usize], num_classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Shape {
                op: "metrics",
                lhs: vec![labels.len()],
                rhs: vec![predictions.len()],
            });
        }
        let mut confusion = vec![vec![0; num_classes]; num_classes];
        for (&l, &p) in labels.iter().zip(predictions) {
            if l >= num_classes || p >= num_classes {
                return Err(Error::Data(format!(
                    "class index out of range for {num_classes} classes"
                )));
            }
            confusion[l][p] += 1;
        }
        Self::from_confusion(confusion)
    }
}

/// Mean per-class recall over classes that have at least one sample.
pub fn balanced_accuracy(confusion: &[Vec<usize>]) -> Result<f64> {
    let recalls: Vec<f64> = confusion
        .iter()
        .enumerate()
        .filter_map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    if recalls.is_empty() {
        return Err(Error::Data("balanced accuracy of an empty confusion matrix".into()));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean and population standard deviation of per-fold results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot summarize zero values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

/// Percent form, e.g. `90.86 ± 0.36`.
impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let m = Metrics::from_confusion(vec![vec![10, 0], vec![5, 5]]).unwrap();
        assert_eq!((m.accuracy, m.balanced_accuracy), (0.75, 0.75));
        let m = Metrics::from_confusion(vec![vec![9, 1], vec![0, 90]]).unwrap();
        assert!((m.accuracy - 0.99).abs() < 1e-12);
        assert!((m.balanced_accuracy - 0.95).abs() < 1e-12);
    }

    #[test]
    fn balanced_examples() {
        assert_eq!(balanced_accuracy(&[vec![3, 0], vec![0, 4]]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[vec![3, 0], vec![4, 0]]).unwrap(), 0.5);
        let three = [vec![2, 0, 0], vec![1, 1, 0], vec![0, 5, 0]];
        assert_eq!(balanced_accuracy(&three).unwrap(), 0.5);
        // empty classes are skipped
        assert_eq!(balanced_accuracy(&[vec![2, 0], vec![0, 0]]).unwrap(), 1.0);
        assert!(balanced_accuracy(&[vec![0, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn summary_format() {
        let s = Summary::of(&[0.9, 0.92]).unwrap();
        assert!((s.mean - 0.91).abs() < 1e-12 && (s.std - 0.01).abs() < 1e-12);
        assert_eq!(s.to_string(), "91.00 ± 1.00");
    }
}
