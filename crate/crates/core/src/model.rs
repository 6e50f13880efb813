//! Bernoulli Naive Bayes over tag presence, with cultural tags.
//!
//! The activity is the parent node and every vocabulary tag is a binary child
//! node. A tag contributes `p(t|c)` when it is present in the tested tag set
//! and `1 - p(t|c)` when it is absent, so absent tags carry evidence too.
//!
//! Semantic tags use additive smoothing,
//! `p(t|c) = (n_tc + alpha) / (n_c + 2 alpha)`.
//! Cultural tags are never smoothed: their conditionals are the plain
//! fractions of the class's training examples labeled with each culture, so a
//! culture-specific class holds exactly 1 for its culture and exactly 0 for
//! every other one. A zero there vetoes the class outright whenever the other
//! culture's tag is observed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tag::{normalize, Tag, TagKind, TagSet};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Posteriors closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

const PRIOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    #[default]
    Uniform,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_alpha")]
    pub smoothing_alpha: f64,
    #[serde(default)]
    pub prior_mode: PriorMode,
    /// Attach cultural tags at training time (and require them at test time).
    #[serde(default)]
    pub cultural_injection: bool,
    #[serde(default)]
    pub culture_registry: Vec<String>,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            smoothing_alpha: default_alpha(),
            prior_mode: PriorMode::Uniform,
            cultural_injection: false,
            culture_registry: Vec::new(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_alpha.is_finite() && self.smoothing_alpha >= 0.0) {
            return Err(Error::Config(format!(
                "smoothing_alpha must be a finite non-negative number, got {}",
                self.smoothing_alpha
            )));
        }
        if self.cultural_injection && self.culture_registry.is_empty() {
            return Err(Error::Config(
                "culture_registry must be non-empty when cultural_injection is on".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for culture in &self.culture_registry {
            let norm = normalize(culture);
            if norm.is_empty() || norm != *culture {
                return Err(Error::Config(format!(
                    "culture_registry entry {culture:?} is not a normalized name"
                )));
            }
            if !seen.insert(norm) {
                return Err(Error::Config(format!(
                    "culture_registry lists `{culture}` twice"
                )));
            }
        }
        Ok(())
    }
}

/// Ordered, duplicate-free list of tags; index `i` is child node `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<Tag>,
    index: HashMap<Tag, usize>,
}

impl Vocabulary {
    /// Union of all tags in `tagsets`, plus one cultural tag per registry
    /// culture when cultural injection is on.
    pub fn build<'a, I>(tagsets: I, config: &TrainingConfig) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a TagSet>,
    {
        let mut tags = BTreeSet::new();
        let mut any = false;
        for set in tagsets {
            any = true;
            tags.extend(set.tags().cloned());
        }
        if !any {
            return Err(Error::EmptyTrainingSet);
        }
        if config.cultural_injection {
            for culture in &config.culture_registry {
                tags.insert(Tag::new(culture, TagKind::Cultural)?);
            }
        }
        Ok(Self::from_sorted(tags.into_iter().collect()))
    }

    fn from_sorted(entries: Vec<Tag>) -> Vocabulary {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { entries, index }
    }

    fn from_entries(entries: Vec<Tag>) -> Result<Vocabulary> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(
                "vocabulary must be strictly ordered by kind then text".into(),
            ));
        }
        Ok(Self::from_sorted(entries))
    }

    pub fn entries(&self) -> &[Tag] {
        &self.entries
    }

    pub fn position(&self, tag: &Tag) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-class presence probabilities, aligned with the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConditional {
    pub p_present: Vec<f64>,
    pub smoothing_applied: Vec<bool>,
}

/// Fraction of `examples` carrying each registry culture, in registry order.
pub fn cultural_tag_distribution<S: AsRef<str>>(
    examples: &[(S, S)],
    registry: &[String],
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut counts = vec![0usize; registry.len()];
    for (_, label) in examples {
        let label = normalize(label.as_ref());
        let pos = registry
            .iter()
            .position(|c| *c == label)
            .ok_or_else(|| Error::UnknownCulture(label.clone()))?;
        counts[pos] += 1;
    }
    let n = examples.len() as f64;
    Ok(counts.into_iter().map(|k| k as f64 / n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub tags: TagSet,
    pub class_label: String,
    pub cultural_label: Option<String>,
}

impl TrainingExample {
    pub fn new(tags: TagSet, class_label: impl Into<String>, cultural_label: Option<String>) -> Self {
        TrainingExample {
            tags,
            class_label: class_label.into(),
            cultural_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityModel {
    classes: Vec<String>,
    priors: Vec<f64>,
    conditionals: Vec<ClassConditional>,
    vocabulary: Vocabulary,
    config: TrainingConfig,
}

/// Result of classifying one tag set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub predicted_class: String,
    pub confidence: f64,
    pub classes: Vec<String>,
    pub posteriors: Vec<f64>,
    /// Log joint scores; `-inf` (serialized as `null`) marks a vetoed class.
    pub log_scores: Vec<f64>,
}

impl Classification {
    pub fn posterior(&self, class: &str) -> Option<f64> {
        self.classes
            .iter()
            .position(|c| c == class)
            .map(|i| self.posteriors[i])
    }
}

impl ActivityModel {
    /// Trains on `examples`; the class set is whatever labels they carry.
    pub fn train(examples: &[TrainingExample], config: &TrainingConfig) -> Result<ActivityModel> {
        Self::train_with_classes(examples, None, config)
    }

    /// Trains with an explicit class list; every declared class must have at
    /// least one example, and no example may use an undeclared class.
    pub fn train_with_classes(
        examples: &[TrainingExample],
        declared: Option<&[String]>,
        config: &TrainingConfig,
    ) -> Result<ActivityModel> {
        config.validate()?;
        if examples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        for ex in examples {
            if ex.tags.has_cultural() {
                return Err(Error::CulturalTagInTraining(ex.tags.image_id().to_string()));
            }
            if config.cultural_injection && ex.cultural_label.is_none() {
                return Err(Error::MissingCulturalLabel(ex.tags.image_id().to_string()));
            }
        }

        let mut by_class: BTreeMap<&str, Vec<&TrainingExample>> = BTreeMap::new();
        if let Some(declared) = declared {
            for c in declared {
                by_class.entry(c.as_str()).or_default();
            }
        }
        for ex in examples {
            if declared.is_some() && !by_class.contains_key(ex.class_label.as_str()) {
                return Err(Error::InvalidModel(format!(
                    "example `{}` has undeclared class `{}`",
                    ex.tags.image_id(),
                    ex.class_label
                )));
            }
            by_class.entry(ex.class_label.as_str()).or_default().push(ex);
        }
        if let Some((name, _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::EmptyClass(name.to_string()));
        }
        if let Some(name) = by_class.keys().find(|c| c.is_empty()) {
            return Err(Error::EmptyClass(name.to_string()));
        }

        let vocabulary = Vocabulary::build(examples.iter().map(|e| &e.tags), config)?;
        let alpha = config.smoothing_alpha;
        let total = examples.len() as f64;
        let n_classes = by_class.len() as f64;

        let mut classes = Vec::with_capacity(by_class.len());
        let mut priors = Vec::with_capacity(by_class.len());
        let mut conditionals = Vec::with_capacity(by_class.len());
        for (name, members) in &by_class {
            let n_c = members.len() as f64;
            let mut counts = vec![0usize; vocabulary.len()];
            for ex in members {
                for tag in ex.tags.tags() {
                    if let Some(i) = vocabulary.position(tag) {
                        counts[i] += 1;
                    }
                }
            }
            let cultural = if config.cultural_injection {
                let labels: Vec<(&str, &str)> = members
                    .iter()
                    .map(|ex| {
                        (
                            ex.tags.image_id(),
                            ex.cultural_label.as_deref().unwrap_or_default(),
                        )
                    })
                    .collect();
                cultural_tag_distribution(&labels, &config.culture_registry)?
            } else {
                Vec::new()
            };

            let mut p_present = Vec::with_capacity(vocabulary.len());
            let mut smoothing_applied = Vec::with_capacity(vocabulary.len());
            for (i, tag) in vocabulary.entries().iter().enumerate() {
                match tag.kind() {
                    TagKind::Semantic => {
                        p_present.push((counts[i] as f64 + alpha) / (n_c + 2.0 * alpha));
                        smoothing_applied.push(alpha > 0.0);
                    }
                    TagKind::Cultural => {
                        let pos = config
                            .culture_registry
                            .iter()
                            .position(|c| c == tag.text())
                            .expect("cultural vocabulary entries come from the registry");
                        p_present.push(cultural[pos]);
                        smoothing_applied.push(false);
                    }
                }
            }

            classes.push(name.to_string());
            priors.push(match config.prior_mode {
                PriorMode::Uniform => 1.0 / n_classes,
                PriorMode::Empirical => n_c / total,
            });
            conditionals.push(ClassConditional {
                p_present,
                smoothing_applied,
            });
        }

        ActivityModel::from_parts(classes, priors, vocabulary.entries, conditionals, config.clone())
    }

    /// Assembles a model from raw parameters, checking every invariant.
    pub fn from_parts(
        classes: Vec<String>,
        priors: Vec<f64>,
        vocabulary: Vec<Tag>,
        conditionals: Vec<ClassConditional>,
        config: TrainingConfig,
    ) -> Result<ActivityModel> {
        config.validate()?;
        if classes.is_empty() {
            return Err(Error::InvalidModel("model has no classes".into()));
        }
        if classes.iter().any(String::is_empty) {
            return Err(Error::InvalidModel("class names must be non-empty".into()));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel(
                "classes must be distinct and in lexicographic order".into(),
            ));
        }
        if priors.len() != classes.len() || conditionals.len() != classes.len() {
            return Err(Error::InvalidModel(
                "priors and conditionals must have one entry per class".into(),
            ));
        }
        if priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidModel("priors must lie in [0, 1]".into()));
        }
        let sum: f64 = priors.iter().sum();
        if (sum - 1.0).abs() > PRIOR_TOLERANCE {
            return Err(Error::InvalidModel(format!("priors sum to {sum}, not 1")));
        }
        let vocabulary = Vocabulary::from_entries(vocabulary)?;
        for (class, cond) in classes.iter().zip(&conditionals) {
            if cond.p_present.len() != vocabulary.len()
                || cond.smoothing_applied.len() != vocabulary.len()
            {
                return Err(Error::InvalidModel(format!(
                    "conditionals of `{class}` do not match the vocabulary size"
                )));
            }
            if cond.p_present.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidModel(format!(
                    "conditionals of `{class}` must lie in [0, 1]"
                )));
            }
        }
        for tag in vocabulary.entries().iter().filter(|t| t.is_cultural()) {
            if !config.culture_registry.iter().any(|c| c == tag.text()) {
                return Err(Error::UnknownCulture(tag.text().to_string()));
            }
        }
        Ok(ActivityModel {
            classes,
            priors,
            conditionals,
            vocabulary,
            config,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn conditionals(&self) -> &[ClassConditional] {
        &self.conditionals
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn uses_cultural_tags(&self) -> bool {
        self.config.cultural_injection
    }

    /// `p(tag present | class)`, if both are known to the model.
    pub fn p_present(&self, class: &str, tag: &Tag) -> Option<f64> {
        let c = self.classes.iter().position(|x| x == class)?;
        let t = self.vocabulary.position(tag)?;
        Some(self.conditionals[c].p_present[t])
    }

    /// Log joint score per class. Tags outside the vocabulary are ignored.
    pub fn log_scores(&self, tagset: &TagSet) -> Vec<f64> {
        let present: Vec<bool> = self
            .vocabulary
            .entries()
            .iter()
            .map(|t| tagset.contains(t))
            .collect();
        self.priors
            .iter()
            .zip(&self.conditionals)
            .map(|(prior, cond)| {
                let mut score = prior.ln();
                for (&p, &is_present) in cond.p_present.iter().zip(&present) {
                    score += if is_present { p.ln() } else { (-p).ln_1p() };
                    if score == f64::NEG_INFINITY {
                        break;
                    }
                }
                score
            })
            .collect()
    }

    pub fn classify(&self, tagset: &TagSet) -> Result<Classification> {
        let log_scores = self.log_scores(tagset);
        let max = log_scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::NoAdmissibleClass);
        }
        let weights: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let posteriors: Vec<f64> = weights.iter().map(|w| w / total).collect();

        // classes are sorted, so keeping the first maximum breaks ties by name;
        // equal products summed in a different order may differ in the last bits
        let mut best = 0;
        for (i, p) in posteriors.iter().enumerate() {
            if *p > posteriors[best] + TIE_TOLERANCE {
                best = i;
            }
        }
        Ok(Classification {
            predicted_class: self.classes[best].clone(),
            confidence: posteriors[best],
            classes: self.classes.clone(),
            posteriors,
            log_scores,
        })
    }

    /// Classifies with an optional cultural profile, which must be given
    /// exactly when the model was trained with cultural tags.
    pub fn classify_with_profile(
        &self,
        tagset: &TagSet,
        profile: Option<&str>,
    ) -> Result<Classification> {
        match (self.uses_cultural_tags(), profile) {
            (true, Some(culture)) => {
                let injected = tagset.inject_cultural_tag(culture, &self.config.culture_registry)?;
                self.classify(&injected)
            }
            (true, None) => Err(Error::Config("cultural profile required".into())),
            (false, Some(_)) => Err(Error::Config(
                "model was not trained with cultural injection".into(),
            )),
            (false, None) => self.classify(tagset),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<ActivityModel> {
        let doc: ModelDocument = serde_json::from_str(json)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    schema_version: u32,
    classes: Vec<String>,
    priors: Vec<f64>,
    vocabulary: Vec<Tag>,
    conditionals: Vec<ClassConditional>,
    config: TrainingConfig,
}

impl From<&ActivityModel> for ModelDocument {
    fn from(m: &ActivityModel) -> Self {
        ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            classes: m.classes.clone(),
            priors: m.priors.clone(),
            vocabulary: m.vocabulary.entries.clone(),
            conditionals: m.conditionals.clone(),
            config: m.config.clone(),
        }
    }
}

impl TryFrom<ModelDocument> for ActivityModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        ActivityModel::from_parts(
            doc.classes,
            doc.priors,
            doc.vocabulary,
            doc.conditionals,
            doc.config,
        )
    }
}
