//! Clients for the visual specialists and composer models.
//!
//! Every specialist speaks the same wire protocol: `POST /v1/{kind}` with a
//! JSON [`SpecialistRequest`], answered by a kind-specific JSON document. A
//! client is backed either by a remote HTTP service or by an in-process
//! [`FixtureStore`]; both go through the same response validation.

mod fixture;
mod routing;
mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::model::{BoundingBox, Detection, DetectionSource, HoiTriple, OcrItem};

pub use fixture::{FixtureEntry, FixtureError, FixtureKey, FixtureStore};
pub use routing::{gate_emotion, route_fine_grained, RoutingTable};
pub use server::{serve_fixtures, FixtureServer};

/// Minimum confidence for fine-grained labels and OCR items to be used.
pub const RESPONSE_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialistKind {
    DetectorInDomain,
    DetectorOpenWorld,
    Depth,
    Emotion,
    Ocr,
    FgAnimal,
    FgPlant,
    FgAircraft,
    FgLogo,
    FgLandmark,
    FgFood,
    FgCelebrity,
    Hoi,
    VlmRegion,
    LlmCompose,
}

impl SpecialistKind {
    pub const ALL: [SpecialistKind; 15] = [
        SpecialistKind::DetectorInDomain,
        SpecialistKind::DetectorOpenWorld,
        SpecialistKind::Depth,
        SpecialistKind::Emotion,
        SpecialistKind::Ocr,
        SpecialistKind::FgAnimal,
        SpecialistKind::FgPlant,
        SpecialistKind::FgAircraft,
        SpecialistKind::FgLogo,
        SpecialistKind::FgLandmark,
        SpecialistKind::FgFood,
        SpecialistKind::FgCelebrity,
        SpecialistKind::Hoi,
        SpecialistKind::VlmRegion,
        SpecialistKind::LlmCompose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecialistKind::DetectorInDomain => "detector_in_domain",
            SpecialistKind::DetectorOpenWorld => "detector_open_world",
            SpecialistKind::Depth => "depth",
            SpecialistKind::Emotion => "emotion",
            SpecialistKind::Ocr => "ocr",
            SpecialistKind::FgAnimal => "fg_animal",
            SpecialistKind::FgPlant => "fg_plant",
            SpecialistKind::FgAircraft => "fg_aircraft",
            SpecialistKind::FgLogo => "fg_logo",
            SpecialistKind::FgLandmark => "fg_landmark",
            SpecialistKind::FgFood => "fg_food",
            SpecialistKind::FgCelebrity => "fg_celebrity",
            SpecialistKind::Hoi => "hoi",
            SpecialistKind::VlmRegion => "vlm_region",
            SpecialistKind::LlmCompose => "llm_compose",
        }
    }

    pub fn is_fine_grained(self) -> bool {
        matches!(
            self,
            SpecialistKind::FgAnimal
                | SpecialistKind::FgPlant
                | SpecialistKind::FgAircraft
                | SpecialistKind::FgLogo
                | SpecialistKind::FgLandmark
                | SpecialistKind::FgFood
                | SpecialistKind::FgCelebrity
        )
    }
}

impl fmt::Display for SpecialistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown specialist kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for SpecialistKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpecialistKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Remote,
    Fixture,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_base_ms() -> u64 {
    500
}

/// How to reach one specialist. The model name is recorded for provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecialistEndpoint {
    pub kind: SpecialistKind,
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; each further retry doubles it.
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
}

impl SpecialistEndpoint {
    pub fn fixture(kind: SpecialistKind) -> Self {
        SpecialistEndpoint {
            kind,
            backend: Backend::Fixture,
            base_url: None,
            model_name: "fixture".into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
        }
    }

    pub fn remote(kind: SpecialistKind, base_url: impl Into<String>) -> Self {
        SpecialistEndpoint {
            backend: Backend::Remote,
            base_url: Some(base_url.into()),
            model_name: String::new(),
            ..SpecialistEndpoint::fixture(kind)
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << retry.min(20)))
    }
}

/// Request body shared by every specialist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialistRequest {
    pub image_id: u64,
    pub image_path: String,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl SpecialistRequest {
    pub fn new(image_id: u64, image_path: impl Into<String>) -> Self {
        SpecialistRequest {
            image_id,
            image_path: image_path.into(),
            bbox: None,
            category: None,
            prompt: None,
        }
    }

    pub fn with_box(mut self, bbox: BoundingBox) -> Self {
        self.bbox = Some(bbox);
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.prompt = Some(prompt.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecialistError {
    #[error("{kind} unavailable after {attempts} attempt(s): {detail}")]
    Unavailable {
        kind: SpecialistKind,
        attempts: u32,
        detail: String,
    },
    #[error("{kind} protocol error: {detail}")]
    Protocol { kind: SpecialistKind, detail: String },
    #[error("{kind} fixture miss: {key}")]
    FixtureMiss { kind: SpecialistKind, key: String },
    #[error("{kind} misconfigured: {detail}")]
    Misconfigured { kind: SpecialistKind, detail: String },
}

impl SpecialistError {
    /// Coarse class used when comparing backends.
    pub fn class(&self) -> &'static str {
        match self {
            SpecialistError::Unavailable { .. } => "unavailable",
            SpecialistError::Protocol { .. } => "protocol",
            SpecialistError::FixtureMiss { .. } => "fixture_miss",
            SpecialistError::Misconfigured { .. } => "misconfigured",
        }
    }

    fn protocol(kind: SpecialistKind, detail: impl Into<String>) -> Self {
        SpecialistError::Protocol {
            kind,
            detail: detail.into(),
        }
    }
}

fn check_unit(kind: SpecialistKind, what: &str, v: f64) -> Result<(), SpecialistError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SpecialistError::protocol(kind, format!("{what} confidence {v} outside [0,1]")))
    }
}

fn check_text(kind: SpecialistKind, what: &str, v: &str) -> Result<(), SpecialistError> {
    if v.trim().is_empty() {
        Err(SpecialistError::protocol(kind, format!("empty {what}")))
    } else {
        Ok(())
    }
}

/// A response document that can check its own content.
pub trait Response: DeserializeOwned {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub category: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorResponse {
    pub detections: Vec<WireDetection>,
}

impl Response for DetectorResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        self.detections.iter().try_for_each(|d| {
            check_unit(kind, "detection", d.confidence)?;
            check_text(kind, "category", &d.category)
        })
    }
}

impl DetectorResponse {
    pub fn into_detections(self, source: DetectionSource) -> Vec<Detection> {
        self.detections
            .into_iter()
            .map(|d| Detection::new(d.bbox, d.category, d.confidence, source))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthResponse {
    pub width: u32,
    pub height: u32,
    /// Path of a binary depth-map file; relative paths resolve against the image root.
    pub depth_uri: String,
}

impl Response for DepthResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        check_text(kind, "depth_uri", &self.depth_uri)
    }
}

/// Emotion and fine-grained answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub label: String,
    pub confidence: f64,
}

impl Response for LabelResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        check_unit(kind, "label", self.confidence)?;
        check_text(kind, "label", &self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireOcrItem {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrResponse {
    pub items: Vec<WireOcrItem>,
}

impl Response for OcrResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        self.items.iter().try_for_each(|i| check_unit(kind, "ocr", i.confidence))
    }
}

impl OcrResponse {
    /// Items at or above the confidence threshold with non-blank text.
    pub fn accepted(self) -> Vec<OcrItem> {
        self.items
            .into_iter()
            .filter(|i| i.confidence >= RESPONSE_CONFIDENCE_THRESHOLD && !i.text.trim().is_empty())
            .map(|i| OcrItem {
                text: i.text,
                bbox: i.bbox,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiResponse {
    pub triples: Vec<HoiTriple>,
}

impl Response for HoiResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        self.triples.iter().try_for_each(|t| {
            check_unit(kind, "hoi", t.confidence)?;
            check_text(kind, "verb", &t.verb)
        })
    }
}

/// Captioner and composer answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

impl Response for TextResponse {
    fn check(&self, kind: SpecialistKind) -> Result<(), SpecialistError> {
        check_text(kind, "text", &self.text)
    }
}

/// Parses and checks a raw response document.
pub fn parse_response<T: Response>(kind: SpecialistKind, doc: serde_json::Value) -> Result<T, SpecialistError> {
    let parsed: T = serde_json::from_value(doc).map_err(|e| SpecialistError::protocol(kind, e.to_string()))?;
    parsed.check(kind)?;
    Ok(parsed)
}

/// Transport behind a client: returns the raw response document.
#[async_trait]
pub trait SpecialistBackend: Send + Sync {
    async fn post(
        &self,
        endpoint: &SpecialistEndpoint,
        request: &SpecialistRequest,
    ) -> Result<serde_json::Value, SpecialistError>;
}

#[async_trait]
impl SpecialistBackend for FixtureStore {
    async fn post(
        &self,
        endpoint: &SpecialistEndpoint,
        request: &SpecialistRequest,
    ) -> Result<serde_json::Value, SpecialistError> {
        self.lookup(endpoint.kind, request).cloned()
    }
}

/// HTTP backend with retry on transport failure.
///
/// Only transport failures (connect errors, timeouts, broken bodies) are
/// retried. Any HTTP response, whatever its status, is final.
pub struct RemoteBackend {
    http: reqwest::Client,
    attempts: AtomicU32,
}

impl RemoteBackend {
    pub fn new(timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(RemoteBackend {
            http: reqwest::Client::builder().timeout(timeout).build()?,
            attempts: AtomicU32::new(0),
        })
    }

    /// Total HTTP attempts made through this backend.
    pub fn attempts(&self) -> u32 {
        self.attempts.load(Ordering::Relaxed)
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    detail: String,
}

enum Attempt {
    Transport(String),
    Done(Result<serde_json::Value, SpecialistError>),
}

impl RemoteBackend {
    async fn attempt(&self, url: &str, kind: SpecialistKind, request: &SpecialistRequest) -> Attempt {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let resp = match self.http.post(url).json(request).send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Transport(e.to_string()),
        };
        let status = resp.status();
        let body = match resp.bytes().await {
            Ok(b) => b,
            Err(e) => return Attempt::Transport(e.to_string()),
        };
        if status.is_success() {
            return Attempt::Done(
                serde_json::from_slice(&body).map_err(|e| SpecialistError::protocol(kind, format!("bad JSON: {e}"))),
            );
        }
        let err = match serde_json::from_slice::<ErrorBody>(&body) {
            Ok(b) if status == reqwest::StatusCode::NOT_FOUND && b.error == "fixture_miss" => {
                SpecialistError::FixtureMiss { kind, key: b.detail }
            }
            _ => SpecialistError::protocol(
                kind,
                format!("HTTP {status}: {}", String::from_utf8_lossy(&body).chars().take(200).collect::<String>()),
            ),
        };
        Attempt::Done(Err(err))
    }
}

#[async_trait]
impl SpecialistBackend for RemoteBackend {
    async fn post(
        &self,
        endpoint: &SpecialistEndpoint,
        request: &SpecialistRequest,
    ) -> Result<serde_json::Value, SpecialistError> {
        let kind = endpoint.kind;
        let base = endpoint.base_url.as_deref().ok_or_else(|| SpecialistError::Misconfigured {
            kind,
            detail: "remote backend without base_url".into(),
        })?;
        let url = format!("{}/v1/{}", base.trim_end_matches('/'), kind);
        let mut retry = 0;
        loop {
            match self.attempt(&url, kind, request).await {
                Attempt::Done(result) => return result,
                Attempt::Transport(detail) if retry >= endpoint.max_retries => {
                    return Err(SpecialistError::Unavailable {
                        kind,
                        attempts: retry + 1,
                        detail,
                    })
                }
                Attempt::Transport(detail) => {
                    tracing::debug!(%kind, retry, %detail, "transport failure, backing off");
                    tokio::time::sleep(endpoint.backoff(retry)).await;
                    retry += 1;
                }
            }
        }
    }
}

/// A configured client for one specialist kind. Cheap to clone and share.
#[derive(Clone)]
pub struct SpecialistClient {
    endpoint: SpecialistEndpoint,
    backend: Arc<dyn SpecialistBackend>,
}

impl fmt::Debug for SpecialistClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpecialistClient")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

impl SpecialistClient {
    pub fn new(endpoint: SpecialistEndpoint, backend: Arc<dyn SpecialistBackend>) -> Self {
        SpecialistClient { endpoint, backend }
    }

    /// Builds the backend the endpoint asks for. Fixture endpoints need a store.
    pub fn from_endpoint(
        endpoint: SpecialistEndpoint,
        fixtures: Option<&Arc<FixtureStore>>,
    ) -> Result<Self, SpecialistError> {
        let kind = endpoint.kind;
        let backend: Arc<dyn SpecialistBackend> = match endpoint.backend {
            Backend::Fixture => fixtures.cloned().ok_or_else(|| SpecialistError::Misconfigured {
                kind,
                detail: "fixture backend but no fixture store loaded".into(),
            })?,
            Backend::Remote => {
                if endpoint.base_url.is_none() {
                    return Err(SpecialistError::Misconfigured {
                        kind,
                        detail: "remote backend requires base_url".into(),
                    });
                }
                let remote = RemoteBackend::new(Duration::from_millis(endpoint.timeout_ms))
                    .map_err(|e| SpecialistError::Misconfigured { kind, detail: e.to_string() })?;
                Arc::new(remote)
            }
        };
        Ok(SpecialistClient::new(endpoint, backend))
    }

    pub fn endpoint(&self) -> &SpecialistEndpoint {
        &self.endpoint
    }

    pub fn kind(&self) -> SpecialistKind {
        self.endpoint.kind
    }

    pub async fn call_raw(&self, request: &SpecialistRequest) -> Result<serde_json::Value, SpecialistError> {
        self.backend.post(&self.endpoint, request).await
    }

    /// Calls the specialist and validates the answer as `T`.
    pub async fn call<T: Response>(&self, request: &SpecialistRequest) -> Result<T, SpecialistError> {
        let doc = self.call_raw(request).await?;
        parse_response(self.kind(), doc)
    }
}

/// One client per specialist kind.
#[derive(Debug, Clone, Default)]
pub struct Specialists {
    clients: BTreeMap<SpecialistKind, SpecialistClient>,
}

impl Specialists {
    pub fn new() -> Self {
        Specialists::default()
    }

    pub fn from_endpoints<'a>(
        endpoints: impl IntoIterator<Item = &'a SpecialistEndpoint>,
        fixtures: Option<&Arc<FixtureStore>>,
    ) -> Result<Self, SpecialistError> {
        let mut s = Specialists::new();
        for ep in endpoints {
            s.insert(SpecialistClient::from_endpoint(ep.clone(), fixtures)?);
        }
        Ok(s)
    }

    /// Every kind served by the same backend.
    pub fn uniform(backend: Arc<dyn SpecialistBackend>) -> Self {
        let mut s = Specialists::new();
        for kind in SpecialistKind::ALL {
            s.insert(SpecialistClient::new(SpecialistEndpoint::fixture(kind), backend.clone()));
        }
        s
    }

    pub fn insert(&mut self, client: SpecialistClient) -> Option<SpecialistClient> {
        self.clients.insert(client.kind(), client)
    }

    pub fn get(&self, kind: SpecialistKind) -> Option<&SpecialistClient> {
        self.clients.get(&kind)
    }

    pub fn missing(&self) -> Vec<SpecialistKind> {
        SpecialistKind::ALL
            .into_iter()
            .filter(|k| !self.clients.contains_key(k))
            .collect()
    }

    /// Calls `kind`, treating an absent client as misconfiguration.
    pub async fn call<T: Response>(&self, kind: SpecialistKind, request: &SpecialistRequest) -> Result<T, SpecialistError> {
        match self.get(kind) {
            Some(c) => c.call(request).await,
            None => Err(SpecialistError::Misconfigured {
                kind,
                detail: "no endpoint configured".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn kind_names_round_trip() {
        assert_eq!(SpecialistKind::ALL.len(), 15);
        for k in SpecialistKind::ALL {
            assert_eq!(k.as_str().parse::<SpecialistKind>().unwrap(), k);
            assert_eq!(serde_json::to_value(k).unwrap(), json!(k.as_str()));
        }
        assert!("fg_unicorn".parse::<SpecialistKind>().is_err());
    }

    #[test]
    fn request_omits_absent_fields() {
        let r = SpecialistRequest::new(7, "a.jpg");
        assert_eq!(serde_json::to_value(&r).unwrap(), json!({"image_id": 7, "image_path": "a.jpg"}));
        let r = r.with_box(BoundingBox::new(0, 0, 10, 10).unwrap()).with_category("person");
        assert_eq!(serde_json::to_value(&r).unwrap()["box"], json!([0, 0, 10, 10]));
    }

    #[test]
    fn response_validation() {
        let k = SpecialistKind::Emotion;
        let ok: LabelResponse = parse_response(k, json!({"label": "happy", "confidence": 0.8})).unwrap();
        assert_eq!(ok.label, "happy");
        let missing = parse_response::<LabelResponse>(k, json!({"confidence": 0.8})).unwrap_err();
        assert_eq!(missing.class(), "protocol");
        let range = parse_response::<LabelResponse>(k, json!({"label": "x", "confidence": 2.0})).unwrap_err();
        assert_eq!(range.class(), "protocol");
        let bad_box = parse_response::<DetectorResponse>(
            SpecialistKind::DetectorInDomain,
            json!({"detections": [{"box": [5, 0, 1, 1], "category": "dog", "confidence": 0.9}]}),
        );
        assert!(bad_box.is_err());
    }

    #[test]
    fn ocr_threshold_filters_items() {
        let r: OcrResponse = parse_response(
            SpecialistKind::Ocr,
            json!({"items": [
                {"text": "STOP", "box": [0, 0, 5, 5], "confidence": 0.5},
                {"text": "faint", "box": [0, 0, 5, 5], "confidence": 0.49},
                {"text": "  ", "box": [0, 0, 5, 5], "confidence": 0.9}
            ]}),
        )
        .unwrap();
        let items = r.accepted();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].text, "STOP");
    }

    #[test]
    fn backoff_doubles_from_base() {
        let ep = SpecialistEndpoint::remote(SpecialistKind::Ocr, "http://x");
        assert_eq!(ep.backoff(0), Duration::from_millis(500));
        assert_eq!(ep.backoff(1), Duration::from_millis(1000));
        assert_eq!(ep.backoff(2), Duration::from_millis(2000));
    }

    #[test]
    fn endpoint_toml_defaults() {
        let ep: SpecialistEndpoint = toml::from_str(
            r#"
            kind = "llm_compose"
            backend = "remote"
            base_url = "http://composer:8000"
            model_name = "Qwen2-72B-AWQ"
            "#,
        )
        .unwrap();
        assert_eq!(ep.max_retries, 3);
        assert_eq!(ep.backoff_base_ms, 500);
        assert_eq!(ep.model_name, "Qwen2-72B-AWQ");
    }

    #[test]
    fn remote_without_url_is_misconfigured() {
        let mut ep = SpecialistEndpoint::remote(SpecialistKind::Hoi, "http://x");
        ep.base_url = None;
        let err = SpecialistClient::from_endpoint(ep, None).unwrap_err();
        assert_eq!(err.class(), "misconfigured");
        let err = SpecialistClient::from_endpoint(SpecialistEndpoint::fixture(SpecialistKind::Hoi), None).unwrap_err();
        assert_eq!(err.class(), "misconfigured");
    }
}
