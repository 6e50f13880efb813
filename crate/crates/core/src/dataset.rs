//! Labeled dataset manifests and their per-regime class projections.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Experimental regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Culture-unaware: subclasses collapsed into their parent class.
    #[serde(rename = "CU")]
    CultureUnaware,
    /// Culture-aware training: subclasses become classes of their own.
    #[serde(rename = "CAT")]
    CultureAwareTraining,
    /// Culture-aware training and testing: as `CAT`, plus cultural tags.
    #[serde(rename = "CATT")]
    CultureAwareTrainingTesting,
}

impl Regime {
    pub const ALL: [Regime; 3] = [
        Regime::CultureUnaware,
        Regime::CultureAwareTraining,
        Regime::CultureAwareTrainingTesting,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Regime::CultureUnaware => "CU",
            Regime::CultureAwareTraining => "CAT",
            Regime::CultureAwareTrainingTesting => "CATT",
        }
    }

    pub fn splits_subclasses(self) -> bool {
        self != Regime::CultureUnaware
    }

    pub fn uses_cultural_tags(self) -> bool {
        self == Regime::CultureAwareTrainingTesting
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CU" => Ok(Regime::CultureUnaware),
            "CAT" => Ok(Regime::CultureAwareTraining),
            "CATT" => Ok(Regime::CultureAwareTrainingTesting),
            _ => Err(Error::Config(format!(
                "unknown regime `{s}` (expected CU, CAT or CATT)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    /// Local path, URL, or tag-fixture file; relative paths resolve against
    /// the manifest's directory.
    pub path_or_uri: String,
    pub class_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclass_label: Option<String>,
    /// Culture of the depicted person.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cultural_label: Option<String>,
    /// Culture of the scene's background.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_culture: Option<String>,
}

impl ImageRecord {
    /// The person's culture if known, otherwise the background's.
    pub fn effective_culture(&self) -> Option<&str> {
        self.cultural_label
            .as_deref()
            .or(self.background_culture.as_deref())
    }

    pub fn effective_class(&self, regime: Regime) -> &str {
        match (&self.subclass_label, regime.splits_subclasses()) {
            (Some(sub), true) => sub,
            _ => &self.class_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawManifest")]
pub struct DatasetManifest {
    schema_version: u32,
    culture_registry: Vec<String>,
    class_tree: BTreeMap<String, Vec<String>>,
    records: Vec<ImageRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    schema_version: u32,
    culture_registry: Vec<String>,
    class_tree: BTreeMap<String, Vec<String>>,
    records: Vec<ImageRecord>,
}

impl TryFrom<RawManifest> for DatasetManifest {
    type Error = Error;

    fn try_from(raw: RawManifest) -> Result<Self> {
        if raw.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        DatasetManifest::new(raw.culture_registry, raw.class_tree, raw.records)
    }
}

/// One record as seen by a regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProjectedRecord {
    pub image_id: String,
    pub class: String,
    pub cultural_label: Option<String>,
}

impl DatasetManifest {
    pub fn new(
        culture_registry: Vec<String>,
        class_tree: BTreeMap<String, Vec<String>>,
        records: Vec<ImageRecord>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            culture_registry,
            class_tree,
            records,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    fn validate(&self) -> Result<()> {
        let mut cultures = BTreeSet::new();
        for c in &self.culture_registry {
            if c.is_empty() || crate::tag::normalize(c) != *c {
                return Err(Error::Manifest(format!(
                    "culture {c:?} is not a normalized name"
                )));
            }
            if !cultures.insert(c.as_str()) {
                return Err(Error::Manifest(format!("culture `{c}` registered twice")));
            }
        }

        let mut names = BTreeSet::new();
        for class in self.class_tree.keys() {
            if class.is_empty() {
                return Err(Error::Manifest("empty class name in class_tree".into()));
            }
            names.insert(class.as_str());
        }
        for (class, subs) in &self.class_tree {
            for sub in subs {
                if sub.is_empty() || !names.insert(sub.as_str()) {
                    return Err(Error::Manifest(format!(
                        "subclass `{sub}` of `{class}` is empty or clashes with another class name"
                    )));
                }
            }
        }

        let mut ids = BTreeSet::new();
        for rec in &self.records {
            let id = &rec.image_id;
            if id.is_empty() {
                return Err(Error::Manifest("record with empty image_id".into()));
            }
            if !ids.insert(id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image_id `{id}`")));
            }
            let subs = self.class_tree.get(&rec.class_label).ok_or_else(|| {
                Error::Manifest(format!("record `{id}`: unknown class `{}`", rec.class_label))
            })?;
            if let Some(sub) = &rec.subclass_label {
                if !subs.contains(sub) {
                    return Err(Error::Manifest(format!(
                        "record `{id}`: subclass `{sub}` is not registered under class `{}`",
                        rec.class_label
                    )));
                }
            }
            for label in [&rec.cultural_label, &rec.background_culture]
                .into_iter()
                .flatten()
            {
                if !cultures.contains(label.as_str()) {
                    return Err(Error::Manifest(format!(
                        "record `{id}`: unknown culture `{label}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(document: &str) -> Result<Self> {
        serde_json::from_str(document).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn culture_registry(&self) -> &[String] {
        &self.culture_registry
    }

    pub fn class_tree(&self) -> &BTreeMap<String, Vec<String>> {
        &self.class_tree
    }

    /// Record counts per top-level class; classes without records count 0.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.class_tree.keys().map(|c| (c.clone(), 0)).collect();
        for rec in &self.records {
            *counts.entry(rec.class_label.clone()).or_default() += 1;
        }
        counts
    }

    /// Relabels every record for `regime`. Under `CATT` each record must
    /// expose a culture, either the person's or the background's.
    pub fn project(&self, regime: Regime) -> Result<Vec<ProjectedRecord>> {
        self.records
            .iter()
            .map(|rec| {
                let culture = rec.effective_culture().map(String::from);
                if regime.uses_cultural_tags() && culture.is_none() {
                    return Err(Error::Manifest(format!(
                        "record `{}` has neither cultural_label nor background_culture, required under CATT",
                        rec.image_id
                    )));
                }
                Ok(ProjectedRecord {
                    image_id: rec.image_id.clone(),
                    class: rec.effective_class(regime).to_string(),
                    cultural_label: culture,
                })
            })
            .collect()
    }

    /// Parent class name → subclasses, for parents with at least two
    /// subclasses present in the manifest.
    pub fn superclasses(&self) -> BTreeMap<String, Vec<String>> {
        self.class_tree
            .iter()
            .filter(|(_, subs)| subs.len() >= 2)
            .map(|(c, subs)| {
                let mut subs = subs.clone();
                subs.sort();
                (c.clone(), subs)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, class: &str, sub: Option<&str>, cult: Option<&str>, bg: Option<&str>) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            path_or_uri: format!("fixtures/{id}.json"),
            class_label: class.into(),
            subclass_label: sub.map(String::from),
            cultural_label: cult.map(String::from),
            background_culture: bg.map(String::from),
        }
    }

    fn tree() -> BTreeMap<String, Vec<String>> {
        BTreeMap::from([
            ("sleeping".to_string(), vec!["sleeping-bed".to_string(), "sleeping-futon".to_string()]),
            ("lying-on-floor".to_string(), vec![]),
        ])
    }

    fn registry() -> Vec<String> {
        vec!["european".into(), "japanese".into()]
    }

    #[test]
    fn empty_manifest_is_valid() {
        let m = DatasetManifest::from_json(
            r#"{"schema_version":1,"culture_registry":[],"class_tree":{},"records":[]}"#,
        )
        .unwrap();
        assert!(m.records().is_empty());
    }

    #[test]
    fn subclass_under_wrong_parent_is_rejected() {
        let err = DatasetManifest::new(
            registry(),
            tree(),
            vec![record("x1", "lying-on-floor", Some("sleeping-bed"), None, None)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("x1"), "{err}");
    }

    #[test]
    fn duplicate_ids_and_unknown_labels_are_rejected() {
        let dup = DatasetManifest::new(
            registry(),
            tree(),
            vec![
                record("a", "lying-on-floor", None, None, None),
                record("a", "lying-on-floor", None, None, None),
            ],
        );
        assert!(dup.unwrap_err().to_string().contains("duplicate image_id `a`"));
        let unknown_class =
            DatasetManifest::new(registry(), tree(), vec![record("b", "running", None, None, None)]);
        assert!(unknown_class.unwrap_err().to_string().contains("`b`"));
        let unknown_culture = DatasetManifest::new(
            registry(),
            tree(),
            vec![record("c", "lying-on-floor", None, None, Some("martian"))],
        );
        assert!(unknown_culture.unwrap_err().to_string().contains("martian"));
    }

    #[test]
    fn schema_version_and_unknown_fields_are_checked() {
        let v2 = r#"{"schema_version":2,"culture_registry":[],"class_tree":{},"records":[]}"#;
        assert!(DatasetManifest::from_json(v2).is_err());
        let typo = r#"{"schema_version":1,"culture_registry":[],"class_tree":{},"records":[],"recrods":[]}"#;
        assert!(DatasetManifest::from_json(typo).is_err());
        let record_typo = r#"{"schema_version":1,"culture_registry":[],"class_tree":{"a":[]},
            "records":[{"image_id":"1","path_or_uri":"p","class_label":"a","subclas_label":"x"}]}"#;
        assert!(DatasetManifest::from_json(record_typo).is_err());
    }

    #[test]
    fn catt_needs_some_culture() {
        let m = DatasetManifest::new(
            registry(),
            tree(),
            vec![record("f", "lying-on-floor", None, None, None)],
        )
        .unwrap();
        assert!(m.project(Regime::CultureAwareTraining).is_ok());
        assert!(m.project(Regime::CultureAwareTrainingTesting).is_err());
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("catt".parse::<Regime>().unwrap(), Regime::CultureAwareTrainingTesting);
        assert_eq!(Regime::CultureUnaware.to_string(), "CU");
        assert!("XYZ".parse::<Regime>().is_err());
    }
}
