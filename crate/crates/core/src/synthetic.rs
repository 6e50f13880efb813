//! Tag-level synthetic datasets.
//!
//! Every image draws each pool entry independently (a Bernoulli trial with
//! the entry's probability) from three kinds of pools: its class's own pool,
//! a pool shared by a group of deliberately confusable classes, and the
//! background pool of the image's culture. This is exactly the Naive Bayes
//! generative assumption, so regime differences stem from the structure of
//! the data rather than from model misspecification inside a class.
//!
//! Draws for image `k` use a ChaCha8 stream seeded by `(seed, k)`, so output
//! does not depend on generation order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, ImageRecord};
use crate::error::{Error, Result};
use crate::evaluation::TagTable;
use crate::providers::{RawTag, TagFixture};
use crate::tag::{normalize, Tag, TagSet};

pub const SPEC_SCHEMA_VERSION: u32 = 1;

/// Provider name attributed to synthetic tags.
pub const SYNTHETIC_SOURCE: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub tag: String,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CultureLabel {
    /// The culture describes the depicted person (`cultural_label`).
    #[default]
    Person,
    /// The culture describes the scene's background (`background_culture`).
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CultureWeight {
    pub culture: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Parent class when this class is a subclass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Culture mixture; images are assigned cultures in exact proportion
    /// (largest remainder). Empty means no culture at all.
    #[serde(default)]
    pub profile: Vec<CultureWeight>,
    #[serde(default)]
    pub label: CultureLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedPool {
    pub classes: Vec<String>,
    pub tags: Vec<PoolEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "spec_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seed: u64,
    pub images_per_class: usize,
    /// When set, `images_per_class` must split evenly into this many subsets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsets_per_class: Option<usize>,
    pub cultures: Vec<String>,
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub tag_pools: BTreeMap<String, Vec<PoolEntry>>,
    #[serde(default)]
    pub shared_ambiguity_pool: Vec<SharedPool>,
    #[serde(default)]
    pub background_pools: BTreeMap<String, Vec<PoolEntry>>,
}

fn spec_version() -> u32 {
    SPEC_SCHEMA_VERSION
}

impl GeneratorSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: GeneratorSpec =
            serde_json::from_str(json).map_err(|e| Error::Synthetic(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synthetic(m));
        if self.schema_version != SPEC_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.images_per_class == 0 {
            return bad("images_per_class must be positive".into());
        }
        if let Some(s) = self.subsets_per_class {
            if s == 0 || self.images_per_class < s || !self.images_per_class.is_multiple_of(s) {
                return bad(format!(
                    "images_per_class {} cannot be split into {s} equal subsets",
                    self.images_per_class
                ));
            }
        }
        let cultures: BTreeSet<&str> = self.cultures.iter().map(String::as_str).collect();
        if cultures.len() != self.cultures.len() || self.cultures.iter().any(|c| normalize(c) != *c || c.is_empty()) {
            return bad("cultures must be distinct normalized names".into());
        }
        let mut names = BTreeSet::new();
        for class in &self.classes {
            if class.name.is_empty() || !names.insert(class.name.as_str()) {
                return bad(format!("class name `{}` is empty or repeated", class.name));
            }
            let mut total = 0.0;
            for w in &class.profile {
                if !cultures.contains(w.culture.as_str()) {
                    return bad(format!("class `{}`: unknown culture `{}`", class.name, w.culture));
                }
                if !(w.weight.is_finite() && w.weight >= 0.0) {
                    return bad(format!("class `{}`: weights must be non-negative", class.name));
                }
                total += w.weight;
            }
            if !class.profile.is_empty() && total <= 0.0 {
                return bad(format!("class `{}`: profile weights sum to zero", class.name));
            }
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        for class in &self.classes {
            if let Some(parent) = &class.parent {
                if names.contains(parent.as_str()) {
                    return bad(format!("parent `{parent}` clashes with a class name"));
                }
            }
        }
        let check_pool = |owner: &str, pool: &[PoolEntry]| -> Result<()> {
            for e in pool {
                if normalize(&e.tag).is_empty() {
                    return Err(Error::Synthetic(format!("{owner}: empty tag")));
                }
                if !(0.0..=1.0).contains(&e.p) {
                    return Err(Error::Synthetic(format!(
                        "{owner}: probability {} of `{}` outside [0, 1]",
                        e.p, e.tag
                    )));
                }
            }
            Ok(())
        };
        for (class, pool) in &self.tag_pools {
            if !names.contains(class.as_str()) {
                return bad(format!("tag_pools: unknown class `{class}`"));
            }
            check_pool(class, pool)?;
        }
        for shared in &self.shared_ambiguity_pool {
            if let Some(c) = shared.classes.iter().find(|c| !names.contains(c.as_str())) {
                return bad(format!("shared_ambiguity_pool: unknown class `{c}`"));
            }
            check_pool("shared_ambiguity_pool", &shared.tags)?;
        }
        for (culture, pool) in &self.background_pools {
            if !cultures.contains(culture.as_str()) {
                return bad(format!("background_pools: unknown culture `{culture}`"));
            }
            check_pool(culture, pool)?;
        }
        Ok(())
    }
}

/// Splits `n` images over `profile` in proportion to the weights, using the
/// largest-remainder method (ties go to the earlier culture).
fn culture_counts(profile: &[CultureWeight], n: usize) -> Vec<usize> {
    let total: f64 = profile.iter().map(|w| w.weight).sum();
    let exact: Vec<f64> = profile.iter().map(|w| w.weight / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub fixtures: Vec<TagFixture>,
}

impl SyntheticDataset {
    /// Tag sets as a fixture provider would produce them.
    pub fn tag_table(&self) -> Result<TagTable> {
        self.fixtures
            .iter()
            .map(|f| {
                let mut set = TagSet::new(f.image_id.clone());
                for raw in &f.raw_tags {
                    set.insert(Tag::semantic(&raw.text)?, SYNTHETIC_SOURCE);
                }
                Ok((f.image_id.clone(), set))
            })
            .collect()
    }

    /// Writes `manifest.json` and `fixtures/<image_id>.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let fixtures = dir.join("fixtures");
        std::fs::create_dir_all(&fixtures)?;
        std::fs::write(dir.join("manifest.json"), self.manifest.to_json()? + "\n")?;
        for f in &self.fixtures {
            let mut bytes = serde_json::to_vec_pretty(f)?;
            bytes.push(b'\n');
            std::fs::write(fixtures.join(format!("{}.json", f.image_id)), bytes)?;
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, pool: &[PoolEntry], seen: &mut BTreeSet<String>, out: &mut Vec<RawTag>) {
    for entry in pool {
        // always consume one draw per entry so streams stay aligned
        let hit = rng.gen::<f64>() < entry.p;
        if hit && seen.insert(normalize(&entry.tag)) {
            out.push(RawTag::new(entry.tag.clone(), None));
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut class_tree: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for class in &spec.classes {
        match &class.parent {
            Some(parent) => class_tree.entry(parent.clone()).or_default().push(class.name.clone()),
            None => {
                class_tree.entry(class.name.clone()).or_default();
            }
        }
    }

    let width = (spec.images_per_class.max(1) - 1).to_string().len().max(2);
    let mut records = Vec::new();
    let mut fixtures = Vec::new();
    let empty = Vec::new();
    for (ci, class) in spec.classes.iter().enumerate() {
        let mut cultures: Vec<Option<&str>> = Vec::with_capacity(spec.images_per_class);
        if class.profile.is_empty() {
            cultures.resize(spec.images_per_class, None);
        } else {
            for (w, k) in class.profile.iter().zip(culture_counts(&class.profile, spec.images_per_class)) {
                cultures.extend(std::iter::repeat_n(Some(w.culture.as_str()), k));
            }
        }
        let own = spec.tag_pools.get(&class.name).unwrap_or(&empty);
        let shared: Vec<&SharedPool> = spec
            .shared_ambiguity_pool
            .iter()
            .filter(|s| s.classes.contains(&class.name))
            .collect();

        for (k, culture) in cultures.into_iter().enumerate() {
            let image_id = format!("{}-{k:0width$}", class.name);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((ci * spec.images_per_class + k) as u64);
            let mut seen = BTreeSet::new();
            let mut raw_tags = Vec::new();
            draw(&mut rng, own, &mut seen, &mut raw_tags);
            for pool in &shared {
                draw(&mut rng, &pool.tags, &mut seen, &mut raw_tags);
            }
            if let Some(c) = culture {
                draw(&mut rng, spec.background_pools.get(c).unwrap_or(&empty), &mut seen, &mut raw_tags);
            }

            let (class_label, subclass_label) = match &class.parent {
                Some(parent) => (parent.clone(), Some(class.name.clone())),
                None => (class.name.clone(), None),
            };
            let (cultural_label, background_culture) = match class.label {
                CultureLabel::Person => (culture.map(String::from), None),
                CultureLabel::Background => (None, culture.map(String::from)),
            };
            records.push(ImageRecord {
                image_id: image_id.clone(),
                path_or_uri: format!("fixtures/{image_id}.json"),
                class_label,
                subclass_label,
                cultural_label,
                background_culture,
            });
            fixtures.push(TagFixture { image_id, raw_tags });
        }
    }
    let manifest = DatasetManifest::new(spec.cultures.clone(), class_tree, records)?;
    Ok(SyntheticDataset { manifest, fixtures })
}
