use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Regime;
use crate::error::{Error, Result};

/// Predicted-by-actual counts: `counts[predicted][actual]`.
///
/// Classifications that found no admissible class are kept apart in
/// `rejected` (per actual class). They count as errors: they enter the
/// total, accuracy and recall denominators, but no row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
    rejected: Vec<u64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
            rejected: vec![0; n],
        }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = classes.len();
        if counts.len() != n || counts.iter().any(|row| row.len() != n) {
            return Err(Error::Evaluation(format!("counts must be {n}x{n}")));
        }
        Ok(ConfusionMatrix {
            classes,
            counts,
            rejected: vec![0; n],
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn rejected(&self) -> &[u64] {
        &self.rejected
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn record(&mut self, actual: usize, predicted: Option<usize>) {
        match predicted {
            Some(p) => self.counts[p][actual] += 1,
            None => self.rejected[actual] += 1,
        }
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::Evaluation("cannot add matrices over different classes".into()));
        }
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a += b;
            }
        }
        for (a, b) in self.rejected.iter_mut().zip(&other.rejected) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.rejected.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, predicted: usize) -> u64 {
        self.counts[predicted].iter().sum()
    }

    pub fn column_sum(&self, actual: usize) -> u64 {
        self.counts.iter().map(|row| row[actual]).sum()
    }

    /// Number of tested images of class `actual`, rejected ones included.
    pub fn support(&self, actual: usize) -> u64 {
        self.column_sum(actual) + self.rejected[actual]
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        ratio(self.counts[class][class], self.support(class))
    }

    pub fn precision(&self, class: usize) -> Option<f64> {
        ratio(self.counts[class][class], self.row_sum(class))
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.trace(), self.total())
    }

    fn check_members(&self, members: &[usize]) -> Result<()> {
        let n = self.classes.len();
        if members.is_empty() || members.len() >= n {
            return Err(Error::Evaluation(
                "superclass members must be a non-empty proper subset of the classes".into(),
            ));
        }
        for (i, &m) in members.iter().enumerate() {
            if m >= n || members[..i].contains(&m) {
                return Err(Error::Evaluation(format!(
                    "invalid or repeated superclass member index {m}"
                )));
            }
        }
        Ok(())
    }

    /// Recall and precision of the union of `members` treated as one class:
    /// true positives are member images predicted as any member, false
    /// negatives member images predicted outside (or rejected), false
    /// positives non-member images predicted as a member.
    pub fn aggregate_superclass(&self, members: &[usize]) -> Result<(Option<f64>, Option<f64>)> {
        self.check_members(members)?;
        let n = self.classes.len();
        let is_member = |k: usize| members.contains(&k);
        let (mut tp, mut fn_, mut fp) = (0u64, 0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                let m = self.counts[i][j];
                match (is_member(i), is_member(j)) {
                    (true, true) => tp += m,
                    (false, true) => fn_ += m,
                    (true, false) => fp += m,
                    (false, false) => {}
                }
            }
        }
        fn_ += members.iter().map(|&j| self.rejected[j]).sum::<u64>();
        Ok((ratio(tp, tp + fn_), ratio(tp, tp + fp)))
    }

    /// Physically merges `members` into one class called `name`, placed
    /// first; the other classes keep their relative order.
    pub fn merge_classes(&self, members: &[usize], name: &str) -> Result<ConfusionMatrix> {
        self.check_members(members)?;
        let n = self.classes.len();
        let mut map = vec![0usize; n];
        let mut classes = vec![name.to_string()];
        for (k, slot) in map.iter_mut().enumerate() {
            if !members.contains(&k) {
                *slot = classes.len();
                classes.push(self.classes[k].clone());
            }
        }
        let mut merged = ConfusionMatrix::new(classes);
        for i in 0..n {
            for j in 0..n {
                merged.counts[map[i]][map[j]] += self.counts[i][j];
            }
            merged.rejected[map[i]] += self.rejected[i];
        }
        Ok(merged)
    }

    /// Plain-text rendering: rows predicted, columns actual, precision in the
    /// last column, recall in the last row, accuracy bottom-right.
    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}%", v * 100.0));
        let n = self.classes.len();
        let width = self
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("predicted \\ actual".len());
        let cell = self.classes.iter().map(String::len).max().unwrap_or(0).max(9);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "predicted \\ actual");
        for c in &self.classes {
            let _ = write!(out, " | {c:>cell$}");
        }
        let _ = writeln!(out, " | {:>cell$}", "precision");
        for i in 0..n {
            let _ = write!(out, "{:width$}", self.classes[i]);
            for j in 0..n {
                let _ = write!(out, " | {:>cell$}", self.counts[i][j]);
            }
            let _ = writeln!(out, " | {:>cell$}", pct(self.precision(i)));
        }
        if self.rejected.iter().any(|&r| r > 0) {
            let _ = write!(out, "{:width$}", "(no admissible class)");
            for r in &self.rejected {
                let _ = write!(out, " | {r:>cell$}");
            }
            let _ = writeln!(out, " | {:>cell$}", "");
        }
        let _ = write!(out, "{:width$}", "recall");
        for j in 0..n {
            let _ = write!(out, " | {:>cell$}", pct(self.recall(j)));
        }
        let _ = writeln!(out, " | {:>cell$}", pct(self.accuracy()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperclassMetrics {
    pub name: String,
    pub member_classes: Vec<String>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

/// Per-class and aggregate metrics of one regime. Undefined ratios (0/0)
/// are `None`, serialized as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regime: Regime,
    pub per_class: Vec<ClassMetrics>,
    pub overall_accuracy: Option<f64>,
    /// Unweighted mean of the defined per-class recalls.
    pub macro_recall: Option<f64>,
    /// Unweighted mean of the defined per-class precisions.
    pub macro_precision: Option<f64>,
    pub superclasses: Vec<SuperclassMetrics>,
    pub total: u64,
    pub rejected: u64,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl MetricsReport {
    /// `superclasses` maps a parent name to its member classes; parents whose
    /// members are not all (or not only) classes of the matrix are skipped.
    pub fn from_matrix(
        regime: Regime,
        matrix: &ConfusionMatrix,
        superclasses: &BTreeMap<String, Vec<String>>,
    ) -> Self {
        let n = matrix.classes().len();
        let per_class: Vec<ClassMetrics> = (0..n)
            .map(|i| ClassMetrics {
                class: matrix.classes()[i].clone(),
                recall: matrix.recall(i),
                precision: matrix.precision(i),
                support: matrix.support(i),
            })
            .collect();
        let superclasses = superclasses
            .iter()
            .filter_map(|(name, members)| {
                let idx: Option<Vec<usize>> = members.iter().map(|m| matrix.index_of(m)).collect();
                let idx = idx?;
                let (recall, precision) = matrix.aggregate_superclass(&idx).ok()?;
                Some(SuperclassMetrics {
                    name: name.clone(),
                    member_classes: members.clone(),
                    recall,
                    precision,
                })
            })
            .collect();
        MetricsReport {
            regime,
            overall_accuracy: matrix.accuracy(),
            macro_recall: mean(per_class.iter().map(|c| c.recall)),
            macro_precision: mean(per_class.iter().map(|c| c.precision)),
            per_class,
            superclasses,
            total: matrix.total(),
            rejected: matrix.rejected().iter().sum(),
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }
}
