use serde::{Deserialize, Serialize};

use super::MetricsError;

/// `K×K` count matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<Vec<u64>>,
}

/// A ratio of integer counts whose value is undefined when the denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        Self { numerator, denominator }
    }

    pub fn value(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        Self {
            class_names,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = class_names.len();
        if k == 0 {
            return Err(MetricsError::NoClasses);
        }
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(MetricsError::Shape(format!("counts must be {k}x{k}")));
        }
        Ok(Self { class_names, counts })
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_total(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn binary(&self, class: usize) -> BinaryCounts {
        let tp = self.counts[class][class];
        let fn_ = self.row_total(class) - tp;
        let fp = self.col_total(class) - tp;
        let tn = self.total() - tp - fn_ - fp;
        BinaryCounts { tp, fp, fn_, tn }
    }

    pub fn accuracy(&self) -> Ratio {
        Ratio::new(self.trace(), self.total())
    }

    /// Σ TP / Σ (TP + FN) over all classes, kept as integer counts.
    pub fn micro_recall(&self) -> Ratio {
        let (tp, pos) = (0..self.num_classes()).fold((0, 0), |(tp, pos), c| {
            let b = self.binary(c);
            (tp + b.tp, pos + b.tp + b.fn_)
        });
        Ratio::new(tp, pos)
    }

    /// Elementwise sum of two matrices over the same class list.
    pub fn merge(&self, other: &Self) -> Result<Self, MetricsError> {
        if self.class_names != other.class_names {
            return Err(MetricsError::Shape("cannot merge matrices over different class lists".into()));
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self {
            class_names: self.class_names.clone(),
            counts,
        })
    }

    /// Reorders classes: new class `i` is old class `order[i]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self, MetricsError> {
        let k = self.num_classes();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&o| o >= k || std::mem::replace(&mut seen[o], true)) {
            return Err(MetricsError::Shape(format!("{order:?} is not a permutation of 0..{k}")));
        }
        let class_names = order.iter().map(|&o| self.class_names[o].clone()).collect();
        let counts = order
            .iter()
            .map(|&r| order.iter().map(|&c| self.counts[r][c]).collect())
            .collect();
        Ok(Self { class_names, counts })
    }
}

/// Tallies paired label indices into a confusion matrix.
pub fn confusion(class_names: &[String], truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::from_counts(
        class_names.to_vec(),
        vec![vec![0; class_names.len()]; class_names.len()],
    )?;
    let k = class_names.len();
    for (position, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= k) {
            return Err(MetricsError::LabelOutOfRange { position, label });
        }
        cm.record(t, p);
    }
    Ok(cm)
}

/// Same as [`confusion`] but over class names.
pub fn confusion_by_name<S: AsRef<str>>(
    class_names: &[String],
    truth: &[S],
    predicted: &[S],
) -> Result<ConfusionMatrix, MetricsError> {
    let index = |labels: &[S]| -> Result<Vec<usize>, MetricsError> {
        labels
            .iter()
            .enumerate()
            .map(|(position, l)| {
                class_names
                    .iter()
                    .position(|c| c == l.as_ref())
                    .ok_or_else(|| MetricsError::UnknownLabel {
                        position,
                        label: l.as_ref().to_string(),
                    })
            })
            .collect()
    };
    confusion(class_names, &index(truth)?, &index(predicted)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["m", "o", "n"].map(String::from).to_vec()
    }

    #[test]
    fn hand_count() {
        let cm = confusion_by_name(&names(), &["m", "m", "o"], &["m", "o", "o"]).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 0]]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [0, 1, 2, 2, 1, 0, 0];
        let cm = confusion(&names(), &labels, &labels).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cm.get(i, j) > 0, i == j);
            }
        }
    }

    #[test]
    fn rejects_unknown_labels() {
        assert_eq!(
            confusion(&names(), &[0, 3], &[0, 0]),
            Err(MetricsError::LabelOutOfRange { position: 1, label: 3 })
        );
        assert!(matches!(
            confusion_by_name(&names(), &["x"], &["m"]),
            Err(MetricsError::UnknownLabel { position: 0, .. })
        ));
        assert!(matches!(
            confusion(&names(), &[0], &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn merge_and_permute() {
        let a = confusion(&names(), &[0, 1], &[1, 1]).unwrap();
        let b = confusion(&names(), &[2], &[0]).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.total(), 3);
        let p = m.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.class_names(), &["n", "m", "o"]);
        assert_eq!(p.get(0, 1), m.get(2, 0));
        assert!(m.permute(&[0, 0, 1]).is_err());
    }
}
