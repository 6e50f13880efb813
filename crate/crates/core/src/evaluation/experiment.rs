use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::matrix::{ConfusionMatrix, MetricsReport};
use crate::dataset::{DatasetManifest, Regime};
use crate::error::{Error, Result};
use crate::model::{ActivityModel, TrainingConfig, TrainingExample};
use crate::tag::TagSet;

/// Tag sets keyed by image id.
pub type TagTable = BTreeMap<String, TagSet>;

/// One test classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub image_id: String,
    pub fold: usize,
    pub actual: String,
    /// `None` when no class was admissible.
    pub predicted: Option<String>,
    pub confidence: Option<f64>,
}

impl LogEntry {
    pub fn is_correct(&self) -> bool {
        self.predicted.as_deref() == Some(self.actual.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub regime: Regime,
    pub seed: u64,
    pub config: TrainingConfig,
    pub matrix: ConfusionMatrix,
    pub log: Vec<LogEntry>,
}

/// The training configuration a regime actually uses: cultural injection on
/// exactly for `CATT`, with the manifest's culture registry.
pub fn regime_config(base: &TrainingConfig, regime: Regime, manifest: &DatasetManifest) -> TrainingConfig {
    TrainingConfig {
        cultural_injection: regime.uses_cultural_tags(),
        culture_registry: if regime.uses_cultural_tags() {
            manifest.culture_registry().to_vec()
        } else {
            base.culture_registry.clone()
        },
        ..base.clone()
    }
}

/// Trains and tests every fold of `plan`, accumulating one confusion matrix.
///
/// Folds run in parallel; the log is ordered by fold, then class, then
/// subset order, so the result does not depend on scheduling.
pub fn run_experiment(
    manifest: &DatasetManifest,
    regime: Regime,
    config: &TrainingConfig,
    plan: &FoldPlan,
    tags: &TagTable,
) -> Result<ExperimentResult> {
    let config = regime_config(config, regime, manifest);
    config.validate()?;
    let classes = plan.classes();
    if classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Evaluation("fold plan classes must be sorted and distinct".into()));
    }
    let seed = plan
        .seed()
        .ok_or_else(|| Error::Evaluation("empty fold plan".into()))?;

    let projected: HashMap<String, (String, Option<String>)> = manifest
        .project(regime)?
        .into_iter()
        .map(|p| (p.image_id, (p.class, p.cultural_label)))
        .collect();
    for (partition, class) in plan.partitions.iter().zip(&classes) {
        for id in partition.subsets.iter().flatten() {
            match projected.get(id) {
                Some((c, _)) if c == class => {}
                Some((c, _)) => {
                    return Err(Error::Evaluation(format!(
                        "image `{id}` is class `{c}` under {regime}, but the plan files it under `{class}`"
                    )))
                }
                None => return Err(Error::Evaluation(format!("image `{id}` is not in the manifest"))),
            }
            if !tags.contains_key(id) {
                return Err(Error::Evaluation(format!("no tag set for image `{id}`")));
            }
        }
    }

    let registry = manifest.culture_registry();
    let per_fold: Vec<Result<Vec<LogEntry>>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            let mut examples = Vec::new();
            for (ci, partition) in plan.partitions.iter().enumerate() {
                for &si in &fold.train[ci] {
                    for id in &partition.subsets[si] {
                        let (_, culture) = &projected[id];
                        examples.push(TrainingExample::new(
                            tags[id].clone(),
                            classes[ci].clone(),
                            culture.clone(),
                        ));
                    }
                }
            }
            let model = ActivityModel::train_with_classes(&examples, Some(&classes), &config)?;

            let mut entries = Vec::new();
            for (ci, partition) in plan.partitions.iter().enumerate() {
                for id in &partition.subsets[fold.test[ci]] {
                    let tagset = &tags[id];
                    let outcome = if regime.uses_cultural_tags() {
                        let culture = projected[id].1.as_deref().ok_or_else(|| {
                            Error::Evaluation(format!("image `{id}` has no cultural label"))
                        })?;
                        model.classify(&tagset.inject_cultural_tag(culture, registry)?)
                    } else {
                        model.classify(tagset)
                    };
                    let (predicted, confidence) = match outcome {
                        Ok(c) => (Some(c.predicted_class), Some(c.confidence)),
                        Err(Error::NoAdmissibleClass) => (None, None),
                        Err(e) => return Err(e),
                    };
                    entries.push(LogEntry {
                        image_id: id.clone(),
                        fold: fold.index,
                        actual: classes[ci].clone(),
                        predicted,
                        confidence,
                    });
                }
            }
            Ok(entries)
        })
        .collect();

    let mut matrix = ConfusionMatrix::new(classes.clone());
    let mut log = Vec::new();
    for entries in per_fold {
        for entry in entries? {
            let actual = matrix.index_of(&entry.actual).expect("plan class");
            let predicted = entry.predicted.as_deref().and_then(|p| matrix.index_of(p));
            matrix.record(actual, predicted);
            log.push(entry);
        }
    }
    Ok(ExperimentResult {
        regime,
        seed,
        config,
        matrix,
        log,
    })
}

/// Machine-readable report of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub regime: Regime,
    pub seed: u64,
    pub config: TrainingConfig,
    pub folds: usize,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricsReport,
}

impl ExperimentResult {
    pub fn metrics(&self, superclasses: &BTreeMap<String, Vec<String>>) -> MetricsReport {
        MetricsReport::from_matrix(self.regime, &self.matrix, superclasses)
    }

    pub fn report(&self, plan: &FoldPlan, superclasses: &BTreeMap<String, Vec<String>>) -> ExperimentReport {
        ExperimentReport {
            regime: self.regime,
            seed: self.seed,
            config: self.config.clone(),
            folds: plan.folds.len(),
            matrix: self.matrix.clone(),
            metrics: self.metrics(superclasses),
        }
    }

    /// Writes the per-image log as CSV: image_id, fold, actual, predicted,
    /// confidence. Rejected classifications leave the last two empty.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image_id", "fold", "actual", "predicted", "confidence"])?;
        for e in &self.log {
            w.write_record([
                e.image_id.clone(),
                e.fold.to_string(),
                e.actual.clone(),
                e.predicted.clone().unwrap_or_default(),
                e.confidence.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
