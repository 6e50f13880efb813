//! Tags and tag sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Normalizes raw tag text: Unicode NFC, lowercase, trimmed.
pub fn normalize(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    lowered.nfc().collect::<String>().trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKind {
    Semantic,
    Cultural,
}

/// A normalized tag. Ordering is by kind first, then text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTag")]
pub struct Tag {
    kind: TagKind,
    text: String,
}

impl Tag {
    pub fn new(text: &str, kind: TagKind) -> Result<Self> {
        let text = normalize(text);
        if text.is_empty() {
            return Err(Error::InvalidTag(text));
        }
        Ok(Tag { kind, text })
    }

    pub fn semantic(text: &str) -> Result<Self> {
        Self::new(text, TagKind::Semantic)
    }

    /// A cultural tag; `culture` must appear in `registry`.
    pub fn cultural(culture: &str, registry: &[String]) -> Result<Self> {
        let tag = Self::new(culture, TagKind::Cultural)?;
        if !registry.iter().any(|c| normalize(c) == tag.text) {
            return Err(Error::UnknownCulture(culture.to_string()));
        }
        Ok(tag)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> TagKind {
        self.kind
    }

    pub fn is_cultural(&self) -> bool {
        self.kind == TagKind::Cultural
    }
}

#[derive(Deserialize)]
struct RawTag {
    kind: TagKind,
    text: String,
}

impl TryFrom<RawTag> for Tag {
    type Error = Error;

    fn try_from(raw: RawTag) -> Result<Self> {
        Tag::new(&raw.text, raw.kind)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TagKind::Semantic => f.write_str(&self.text),
            TagKind::Cultural => write!(f, "cultural:{}", self.text),
        }
    }
}

/// Provider name used for tags added by hand or by cultural injection.
pub const MANUAL_SOURCE: &str = "manual";

/// The normalized tags observed for one image, with the providers that
/// reported each tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TagSetRepr", into = "TagSetRepr")]
pub struct TagSet {
    image_id: String,
    sources: BTreeMap<Tag, BTreeSet<String>>,
}

impl TagSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        TagSet {
            image_id: image_id.into(),
            sources: BTreeMap::new(),
        }
    }

    /// Builds a tag set of semantic tags attributed to the manual source.
    pub fn from_texts<S: AsRef<str>>(image_id: impl Into<String>, texts: &[S]) -> Result<Self> {
        let mut set = TagSet::new(image_id);
        for t in texts {
            set.insert(Tag::semantic(t.as_ref())?, MANUAL_SOURCE);
        }
        Ok(set)
    }

    pub fn insert(&mut self, tag: Tag, source: &str) {
        self.sources
            .entry(tag)
            .or_default()
            .insert(source.to_string());
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.sources.contains_key(tag)
    }

    pub fn tags(&self) -> impl Iterator<Item = &Tag> {
        self.sources.keys()
    }

    pub fn sources(&self, tag: &Tag) -> Option<&BTreeSet<String>> {
        self.sources.get(tag)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn has_cultural(&self) -> bool {
        self.sources.keys().any(Tag::is_cultural)
    }

    /// Adds every tag of `other`, merging source attribution.
    pub fn union_with(&mut self, other: &TagSet) {
        for (tag, srcs) in &other.sources {
            let entry = self.sources.entry(tag.clone()).or_default();
            entry.extend(srcs.iter().cloned());
        }
    }

    /// Returns a copy carrying the cultural tag for `culture`. The other
    /// registry cultures stay absent, which the classifier scores through
    /// their absence probabilities.
    pub fn inject_cultural_tag(&self, culture: &str, registry: &[String]) -> Result<TagSet> {
        let tag = Tag::cultural(culture, registry)?;
        if self.has_cultural() {
            return Err(Error::DoubleInjection(self.image_id.clone()));
        }
        let mut out = self.clone();
        out.insert(tag, MANUAL_SOURCE);
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagSetRepr {
    image_id: String,
    tags: Vec<TagEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagEntry {
    text: String,
    kind: TagKind,
    sources: BTreeSet<String>,
}

impl From<TagSet> for TagSetRepr {
    fn from(set: TagSet) -> Self {
        TagSetRepr {
            image_id: set.image_id,
            tags: set
                .sources
                .into_iter()
                .map(|(tag, sources)| TagEntry {
                    text: tag.text,
                    kind: tag.kind,
                    sources,
                })
                .collect(),
        }
    }
}

impl TryFrom<TagSetRepr> for TagSet {
    type Error = Error;

    fn try_from(repr: TagSetRepr) -> Result<Self> {
        let mut set = TagSet::new(repr.image_id);
        for entry in repr.tags {
            let tag = Tag::new(&entry.text, entry.kind)?;
            if entry.sources.is_empty() {
                return Err(Error::InvalidTag(format!("{tag} has no source")));
            }
            for src in &entry.sources {
                set.insert(tag.clone(), src);
            }
        }
        Ok(set)
    }
}
