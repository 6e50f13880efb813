use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::experiment::{ExperimentResult, LogEntry};
use super::matrix::MetricsReport;
use crate::dataset::Regime;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallPrecision {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

/// Image-by-image comparison of two regimes tested on the same folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub baseline: Regime,
    pub candidate: Regime,
    pub classifications: usize,
    /// Wrong under the baseline, right under the candidate.
    pub corrected: usize,
    /// Right under the baseline, wrong under the candidate.
    pub regressed: usize,
    pub both_misclassified: usize,
    /// Mean confidence over images misclassified by both (and with a
    /// confidence under both).
    pub mean_confidence_baseline: Option<f64>,
    pub mean_confidence_candidate: Option<f64>,
    /// `candidate - baseline`, averaged over the same images.
    pub mean_confidence_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub regimes: Vec<Regime>,
    pub overall_accuracy: BTreeMap<Regime, Option<f64>>,
    /// Class (or superclass) name → regime → recall/precision. Superclass
    /// rows line up with the collapsed class of the same name under `CU`.
    pub per_class: BTreeMap<String, BTreeMap<Regime, RecallPrecision>>,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Compares two logs keyed by (image, fold); both must cover the same
/// classifications.
pub fn compare_logs(
    baseline: (Regime, &[LogEntry]),
    candidate: (Regime, &[LogEntry]),
) -> Result<PairwiseComparison> {
    let index = |log: &[LogEntry]| -> Result<BTreeMap<(String, usize), LogEntry>> {
        let mut map = BTreeMap::new();
        for e in log {
            if map.insert((e.image_id.clone(), e.fold), e.clone()).is_some() {
                return Err(Error::Evaluation(format!(
                    "image `{}` logged twice in fold {}",
                    e.image_id, e.fold
                )));
            }
        }
        Ok(map)
    };
    let base = index(baseline.1)?;
    let cand = index(candidate.1)?;
    let base_keys: BTreeSet<_> = base.keys().collect();
    let cand_keys: BTreeSet<_> = cand.keys().collect();
    if base_keys != cand_keys {
        return Err(Error::Evaluation(format!(
            "{} and {} logs cover different images ({} vs {} classifications)",
            baseline.0,
            candidate.0,
            base.len(),
            cand.len()
        )));
    }

    let (mut corrected, mut regressed, mut both) = (0, 0, 0);
    let (mut sum_b, mut sum_c, mut sum_d, mut n_conf) = (0.0, 0.0, 0.0, 0usize);
    for (key, b) in &base {
        let c = &cand[key];
        if b.actual != c.actual {
            return Err(Error::Evaluation(format!(
                "image `{}` has actual class `{}` in {} but `{}` in {}",
                b.image_id, b.actual, baseline.0, c.actual, candidate.0
            )));
        }
        match (b.is_correct(), c.is_correct()) {
            (false, true) => corrected += 1,
            (true, false) => regressed += 1,
            (false, false) => {
                both += 1;
                if let (Some(cb), Some(cc)) = (b.confidence, c.confidence) {
                    sum_b += cb;
                    sum_c += cc;
                    sum_d += cc - cb;
                    n_conf += 1;
                }
            }
            (true, true) => {}
        }
    }
    let avg = |s: f64| (n_conf > 0).then(|| s / n_conf as f64);
    Ok(PairwiseComparison {
        baseline: baseline.0,
        candidate: candidate.0,
        classifications: base.len(),
        corrected,
        regressed,
        both_misclassified: both,
        mean_confidence_baseline: avg(sum_b),
        mean_confidence_candidate: avg(sum_c),
        mean_confidence_delta: avg(sum_d),
    })
}

/// Side-by-side metrics of several regimes plus, when both are present, the
/// image-level comparison of `CAT` (baseline) against `CATT`.
pub fn compare_regimes(
    results: &[&ExperimentResult],
    superclasses: &BTreeMap<String, Vec<String>>,
) -> Result<ComparisonReport> {
    let first = results
        .first()
        .ok_or_else(|| Error::Evaluation("nothing to compare".into()))?;
    if let Some(r) = results.iter().find(|r| r.seed != first.seed) {
        return Err(Error::Evaluation(format!(
            "regimes were evaluated with different seeds ({} used {}, {} used {})",
            first.regime, first.seed, r.regime, r.seed
        )));
    }
    let mut regimes: Vec<Regime> = results.iter().map(|r| r.regime).collect();
    regimes.sort();
    if regimes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Evaluation("each regime may appear only once".into()));
    }

    let mut overall_accuracy = BTreeMap::new();
    let mut per_class: BTreeMap<String, BTreeMap<Regime, RecallPrecision>> = BTreeMap::new();
    for r in results {
        let metrics: MetricsReport = r.metrics(superclasses);
        overall_accuracy.insert(r.regime, metrics.overall_accuracy);
        for c in &metrics.per_class {
            per_class.entry(c.class.clone()).or_default().insert(
                r.regime,
                RecallPrecision {
                    recall: c.recall,
                    precision: c.precision,
                },
            );
        }
        for s in &metrics.superclasses {
            per_class.entry(s.name.clone()).or_default().insert(
                r.regime,
                RecallPrecision {
                    recall: s.recall,
                    precision: s.precision,
                },
            );
        }
    }

    let find = |regime| results.iter().find(|r| r.regime == regime);
    let mut pairwise = Vec::new();
    if let (Some(cat), Some(catt)) = (
        find(Regime::CultureAwareTraining),
        find(Regime::CultureAwareTrainingTesting),
    ) {
        pairwise.push(compare_logs((cat.regime, &cat.log), (catt.regime, &catt.log))?);
    }
    Ok(ComparisonReport {
        seed: first.seed,
        regimes,
        overall_accuracy,
        per_class,
        pairwise,
    })
}
