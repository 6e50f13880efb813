//! Live vision-service clients.
//!
//! Each supported service has one translation layer: [`build_request`] maps
//! image bytes to the service's request and [`parse_response`] maps the
//! service's JSON reply to raw tags. The transport ([`HttpProvider`]) only
//! adds timeouts, retries with exponential backoff and request counting.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_raw_tags, ImageRef, NetworkCounter, ProviderDescriptor, RawTag, TagProvider};
use crate::error::{Error, Result};

const MAX_LABELS: u32 = 50;
const MAX_BACKOFF: Duration = Duration::from_secs(8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceApi {
    /// Clarifai v2 model outputs (`Authorization: Key ...`).
    Clarifai,
    /// Azure Computer Vision `analyze` with `visualFeatures=Tags`.
    Azure,
    /// Google Cloud Vision `images:annotate` with label detection.
    Google,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

pub fn build_request(
    api: ServiceApi,
    endpoint: &str,
    credential: &str,
    content: &[u8],
) -> PreparedRequest {
    let json_body = |v: Value| serde_json::to_vec(&v).expect("json values serialize");
    match api {
        ServiceApi::Clarifai => PreparedRequest {
            url: endpoint.to_string(),
            headers: vec![
                ("Authorization".into(), format!("Key {credential}")),
                ("Content-Type".into(), "application/json".into()),
            ],
            body: json_body(json!({
                "inputs": [{ "data": { "image": { "base64": BASE64.encode(content) } } }]
            })),
        },
        ServiceApi::Azure => {
            let base = endpoint.trim_end_matches('/');
            let url = if base.contains("/analyze") {
                base.to_string()
            } else {
                format!("{base}/vision/v3.2/analyze?visualFeatures=Tags")
            };
            PreparedRequest {
                url,
                headers: vec![
                    ("Ocp-Apim-Subscription-Key".into(), credential.to_string()),
                    ("Content-Type".into(), "application/octet-stream".into()),
                ],
                body: content.to_vec(),
            }
        }
        ServiceApi::Google => PreparedRequest {
            url: endpoint.to_string(),
            headers: vec![
                ("X-Goog-Api-Key".into(), credential.to_string()),
                ("Content-Type".into(), "application/json".into()),
            ],
            body: json_body(json!({
                "requests": [{
                    "image": { "content": BASE64.encode(content) },
                    "features": [{ "type": "LABEL_DETECTION", "maxResults": MAX_LABELS }]
                }]
            })),
        },
    }
}

fn malformed(provider: &str, what: &str) -> Error {
    Error::Provider {
        provider: provider.into(),
        message: format!("unexpected response: {what}"),
    }
}

/// Extracts `(text, score)` pairs from a service reply. Empty tag texts are
/// dropped; an error payload becomes an error.
pub fn parse_response(api: ServiceApi, provider: &str, body: &str) -> Result<Vec<RawTag>> {
    let v: Value = serde_json::from_str(body).map_err(|e| malformed(provider, &e.to_string()))?;
    let pairs: Vec<(Option<&str>, Option<f64>)> = match api {
        ServiceApi::Clarifai => {
            if let Some(code) = v.pointer("/status/code").and_then(Value::as_u64) {
                if code != 10000 {
                    let desc = v
                        .pointer("/status/description")
                        .and_then(Value::as_str)
                        .unwrap_or("unknown error");
                    return Err(Error::Provider {
                        provider: provider.into(),
                        message: format!("status {code}: {desc}"),
                    });
                }
            }
            v.pointer("/outputs/0/data/concepts")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(provider, "missing outputs[0].data.concepts"))?
                .iter()
                .map(|c| (c["name"].as_str(), c["value"].as_f64()))
                .collect()
        }
        ServiceApi::Azure => {
            if let Some(err) = v.get("error") {
                return Err(Error::Provider {
                    provider: provider.into(),
                    message: err["message"].as_str().unwrap_or("unknown error").to_string(),
                });
            }
            v.get("tags")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(provider, "missing tags"))?
                .iter()
                .map(|t| (t["name"].as_str(), t["confidence"].as_f64()))
                .collect()
        }
        ServiceApi::Google => {
            let first = v
                .pointer("/responses/0")
                .ok_or_else(|| malformed(provider, "missing responses[0]"))?;
            if let Some(err) = first.get("error") {
                return Err(Error::Provider {
                    provider: provider.into(),
                    message: err["message"].as_str().unwrap_or("unknown error").to_string(),
                });
            }
            // no labels at all is reported by omitting the field
            match first.get("labelAnnotations").and_then(Value::as_array) {
                Some(labels) => labels
                    .iter()
                    .map(|l| (l["description"].as_str(), l["score"].as_f64()))
                    .collect(),
                None => Vec::new(),
            }
        }
    };
    let tags: Vec<RawTag> = pairs
        .into_iter()
        .filter_map(|(text, score)| {
            let text = text?.trim();
            (!text.is_empty()).then(|| RawTag::new(text, score))
        })
        .collect();
    check_raw_tags(provider, &tags)?;
    Ok(tags)
}

pub struct HttpProvider {
    name: String,
    api: ServiceApi,
    endpoint: String,
    credential: String,
    agent: ureq::Agent,
    max_retries: u32,
    backoff_base: Duration,
    network: NetworkCounter,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // credential deliberately omitted
        f.debug_struct("HttpProvider")
            .field("name", &self.name)
            .field("api", &self.api)
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    /// Builds a client, reading the credential from the environment variable
    /// named by `credential_ref`.
    pub fn from_descriptor(desc: &ProviderDescriptor, network: NetworkCounter) -> Result<Self> {
        desc.validate()?;
        let var = desc.credential_ref.as_deref().unwrap_or_default();
        let credential = std::env::var(var).map_err(|_| Error::Provider {
            provider: desc.name.clone(),
            message: format!("credential environment variable `{var}` is not set"),
        })?;
        Ok(Self::new(
            &desc.name,
            desc.api.expect("validated"),
            desc.endpoint.as_deref().unwrap_or_default(),
            credential,
            desc.timeout(),
            desc.max_retries,
            network,
        ))
    }

    pub fn new(
        name: &str,
        api: ServiceApi,
        endpoint: &str,
        credential: String,
        timeout: Duration,
        max_retries: u32,
        network: NetworkCounter,
    ) -> Self {
        HttpProvider {
            name: name.to_string(),
            api,
            endpoint: endpoint.to_string(),
            credential,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            max_retries,
            backoff_base: Duration::from_millis(250),
            network,
        }
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base
            .saturating_mul(1u32 << attempt.min(16))
            .min(MAX_BACKOFF)
    }

    fn send_once(&self, req: &PreparedRequest) -> std::result::Result<String, (bool, String)> {
        self.network.record();
        let mut call = self.agent.post(&req.url);
        for (k, v) in &req.headers {
            call = call.set(k, v);
        }
        match call.send_bytes(&req.body) {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| (true, format!("reading body: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let retryable = code == 429 || code >= 500;
                let body = resp.into_string().unwrap_or_default();
                // service error bodies often explain auth/quota problems
                let detail = parse_response(self.api, &self.name, &body)
                    .err()
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                Err((retryable, format!("HTTP {code} {detail}").trim_end().to_string()))
            }
            Err(ureq::Error::Transport(t)) => Err((true, format!("transport: {}", t.kind()))),
        }
    }
}

impl TagProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn content(&self, image: &ImageRef) -> Result<Vec<u8>> {
        image.load(&self.network)
    }

    fn fetch(&self, _image: &ImageRef, content: &[u8]) -> Result<Vec<RawTag>> {
        let req = build_request(self.api, &self.endpoint, &self.credential, content);
        let mut attempt = 0;
        loop {
            match self.send_once(&req) {
                Ok(body) => return parse_response(self.api, &self.name, &body),
                Err((retryable, message)) => {
                    if !retryable || attempt >= self.max_retries {
                        return Err(Error::Provider {
                            provider: self.name.clone(),
                            message: format!("{message} (after {} attempt(s))", attempt + 1),
                        });
                    }
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }
}
