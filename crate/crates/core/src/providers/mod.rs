//! Tag providers: live vision services and offline fixtures behind one
//! interface, plus a content-addressed response cache.
//!
//! Every provider turns an image into a list of raw tags. [`extract_tags`]
//! asks each configured provider (cache first), normalizes the tags and
//! unions them into one [`TagSet`], remembering which providers reported
//! each tag. Provider scores are kept in the cached responses but dropped
//! from the tag set.

mod cache;
pub mod http;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tag::{Tag, TagSet};

pub use cache::{cache_key, content_digest, CacheEntry, CacheKey, TagCache};
pub use http::{HttpProvider, ServiceApi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpService,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderDescriptor {
    pub name: String,
    pub kind: ProviderKind,
    /// Request/response dialect of an HTTP service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api: Option<ServiceApi>,
    /// Service URL, or for fixtures an optional directory of
    /// `<image_id>.json` files used instead of the record's locator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the credential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_ref: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    3
}

impl ProviderDescriptor {
    pub fn fixture(name: impl Into<String>) -> Self {
        ProviderDescriptor {
            name: name.into(),
            kind: ProviderKind::Fixture,
            api: None,
            endpoint: None,
            credential_ref: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("provider `{}`: {what}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Config("provider name must be non-empty".into()));
        }
        match self.kind {
            ProviderKind::HttpService => {
                if self.endpoint.is_none() {
                    return bad("http_service requires `endpoint`");
                }
                if self.credential_ref.is_none() {
                    return bad("http_service requires `credential_ref`");
                }
                if self.api.is_none() {
                    return bad("http_service requires `api`");
                }
            }
            ProviderKind::Fixture => {
                if self.credential_ref.is_some() || self.api.is_some() {
                    return bad("fixture providers take no `credential_ref` or `api`");
                }
            }
        }
        if self.timeout_secs == 0 {
            return bad("`timeout_secs` must be positive");
        }
        Ok(())
    }
}

/// One tag as returned by a provider, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTag {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl RawTag {
    pub fn new(text: impl Into<String>, score: Option<f64>) -> Self {
        RawTag {
            text: text.into(),
            score,
        }
    }
}

pub(crate) fn check_raw_tags(provider: &str, tags: &[RawTag]) -> Result<()> {
    for t in tags {
        if t.text.trim().is_empty() {
            return Err(Error::Provider {
                provider: provider.into(),
                message: "empty tag text".into(),
            });
        }
        if let Some(s) = t.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Provider {
                    provider: provider.into(),
                    message: format!("score {s} for `{}` outside [0, 1]", t.text),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResponse {
    pub provider: String,
    pub image_id: String,
    pub raw_tags: Vec<RawTag>,
    pub fetched_at: String,
}

/// Offline tag fixture: the file format read by fixture providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagFixture {
    pub image_id: String,
    pub raw_tags: Vec<RawTag>,
}

/// Counts outbound network requests. Shared by every HTTP-capable component
/// so tests can assert that an offline run made none.
#[derive(Debug, Clone, Default)]
pub struct NetworkCounter(Arc<AtomicU64>);

impl NetworkCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// An image to be tagged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub image_id: String,
    pub locator: Locator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locator {
    Path(PathBuf),
    Url(String),
}

impl Locator {
    /// Parses a manifest locator; relative paths resolve against `base`.
    pub fn parse(raw: &str, base: &Path) -> Locator {
        if raw.starts_with("http://") || raw.starts_with("https://") {
            Locator::Url(raw.to_string())
        } else {
            let path = Path::new(raw.strip_prefix("file://").unwrap_or(raw));
            Locator::Path(if path.is_absolute() {
                path.to_path_buf()
            } else {
                base.join(path)
            })
        }
    }
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Path(p) => write!(f, "{}", p.display()),
            Locator::Url(u) => f.write_str(u),
        }
    }
}

impl ImageRef {
    pub fn new(image_id: impl Into<String>, locator: Locator) -> Self {
        ImageRef {
            image_id: image_id.into(),
            locator,
        }
    }

    /// Reads the bytes behind the locator. URLs count as network requests.
    pub fn load(&self, network: &NetworkCounter) -> Result<Vec<u8>> {
        match &self.locator {
            Locator::Path(p) => std::fs::read(p).map_err(|e| {
                Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
            }),
            Locator::Url(url) => {
                network.record();
                let resp = ureq::get(url).call().map_err(|e| Error::Provider {
                    provider: "image-download".into(),
                    message: e.to_string(),
                })?;
                let mut bytes = Vec::new();
                std::io::Read::read_to_end(&mut resp.into_reader(), &mut bytes)?;
                Ok(bytes)
            }
        }
    }
}

/// A source of raw tags for images.
pub trait TagProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Bytes this provider analyses for `image`. Cache keys digest these.
    fn content(&self, image: &ImageRef) -> Result<Vec<u8>>;

    /// Returns raw tags for `content`, contacting the service if needed.
    fn fetch(&self, image: &ImageRef, content: &[u8]) -> Result<Vec<RawTag>>;
}

/// Replays tag fixtures from disk; never touches the network.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    name: String,
    dir: Option<PathBuf>,
}

impl FixtureProvider {
    /// Reads each image's fixture from its own locator.
    pub fn new(name: impl Into<String>) -> Self {
        FixtureProvider {
            name: name.into(),
            dir: None,
        }
    }

    /// Reads fixtures from `<dir>/<image_id>.json` instead of the locator.
    pub fn with_dir(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        FixtureProvider {
            name: name.into(),
            dir: Some(dir.into()),
        }
    }
}

impl TagProvider for FixtureProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn content(&self, image: &ImageRef) -> Result<Vec<u8>> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(format!("{}.json", image.image_id));
                std::fs::read(&path).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
                })
            }
            None => match &image.locator {
                Locator::Path(p) => std::fs::read(p).map_err(|e| {
                    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
                }),
                Locator::Url(u) => Err(Error::Provider {
                    provider: self.name.clone(),
                    message: format!("fixture providers cannot read URL `{u}`"),
                }),
            },
        }
    }

    fn fetch(&self, _image: &ImageRef, content: &[u8]) -> Result<Vec<RawTag>> {
        let fixture: TagFixture =
            serde_json::from_slice(content).map_err(|e| Error::Provider {
                provider: self.name.clone(),
                message: format!("malformed tag fixture: {e}"),
            })?;
        check_raw_tags(&self.name, &fixture.raw_tags)?;
        Ok(fixture.raw_tags)
    }
}

/// Stands in for a provider that could not be set up; every query fails
/// with the recorded reason.
#[derive(Debug, Clone)]
pub struct UnavailableProvider {
    name: String,
    reason: String,
}

impl UnavailableProvider {
    pub fn new(name: impl Into<String>, reason: impl Into<String>) -> Self {
        UnavailableProvider {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn reason(&self) -> &str {
        &self.reason
    }

    fn error(&self) -> Error {
        Error::Provider {
            provider: self.name.clone(),
            message: format!("unavailable: {}", self.reason),
        }
    }
}

impl TagProvider for UnavailableProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn content(&self, _image: &ImageRef) -> Result<Vec<u8>> {
        Err(self.error())
    }

    fn fetch(&self, _image: &ImageRef, _content: &[u8]) -> Result<Vec<RawTag>> {
        Err(self.error())
    }
}

/// Instantiates the provider described by `desc`.
pub fn build_provider(
    desc: &ProviderDescriptor,
    network: &NetworkCounter,
) -> Result<Box<dyn TagProvider>> {
    desc.validate()?;
    Ok(match desc.kind {
        ProviderKind::Fixture => match &desc.endpoint {
            Some(dir) => Box::new(FixtureProvider::with_dir(&desc.name, dir)),
            None => Box::new(FixtureProvider::new(&desc.name)),
        },
        ProviderKind::HttpService => Box::new(HttpProvider::from_descriptor(desc, network.clone())?),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderOutcome {
    CacheHit,
    Fetched,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub tagset: TagSet,
    pub responses: Vec<TagResponse>,
    /// One outcome per provider, in the order the providers were given.
    pub outcomes: Vec<(String, ProviderOutcome)>,
}

impl Extraction {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.outcomes.iter().filter_map(|(p, o)| match o {
            ProviderOutcome::Failed(msg) => Some((p.as_str(), msg.as_str())),
            _ => None,
        })
    }
}

fn query_provider(
    provider: &dyn TagProvider,
    image: &ImageRef,
    cache: Option<&TagCache>,
) -> Result<(TagResponse, bool)> {
    let content = provider.content(image)?;
    let digest = content_digest(&content);
    let key = cache_key(provider.name(), &digest);
    if let Some(cache) = cache {
        if let Some(entry) = cache.get(&key)? {
            return Ok((entry.into_response(&image.image_id), true));
        }
    }
    let raw_tags = provider.fetch(image, &content)?;
    check_raw_tags(provider.name(), &raw_tags)?;
    let entry = CacheEntry {
        provider: provider.name().to_string(),
        image_digest: digest,
        raw_tags,
        fetched_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    if let Some(cache) = cache {
        cache.put(&key, &entry)?;
    }
    Ok((entry.into_response(&image.image_id), false))
}

/// Queries every provider (cache first, concurrently) and unions the
/// normalized tags. Fails only when every provider fails.
pub fn extract_tags(
    image: &ImageRef,
    providers: &[Box<dyn TagProvider>],
    cache: Option<&TagCache>,
) -> Result<Extraction> {
    if providers.is_empty() {
        return Err(Error::Config("at least one tag provider is required".into()));
    }
    let results: Vec<Result<(TagResponse, bool)>> = providers
        .par_iter()
        .map(|p| query_provider(p.as_ref(), image, cache))
        .collect();

    let mut tagset = TagSet::new(image.image_id.clone());
    let mut responses = Vec::new();
    let mut outcomes = Vec::new();
    let mut causes = Vec::new();
    for (provider, result) in providers.iter().zip(results) {
        match result {
            Ok((resp, hit)) => {
                for raw in &resp.raw_tags {
                    tagset.insert(Tag::semantic(&raw.text)?, &resp.provider);
                }
                outcomes.push((
                    provider.name().to_string(),
                    if hit {
                        ProviderOutcome::CacheHit
                    } else {
                        ProviderOutcome::Fetched
                    },
                ));
                responses.push(resp);
            }
            Err(e) => {
                causes.push(format!("{}: {e}", provider.name()));
                outcomes.push((provider.name().to_string(), ProviderOutcome::Failed(e.to_string())));
            }
        }
    }
    if responses.is_empty() {
        return Err(Error::AllProvidersFailed {
            image_id: image.image_id.clone(),
            causes,
        });
    }
    Ok(Extraction {
        tagset,
        responses,
        outcomes,
    })
}
