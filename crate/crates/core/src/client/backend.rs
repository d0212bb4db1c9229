use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::features::heuristic_classify;
use super::{BackendConfig, ClientError, ComponentInput, Label, TransportError, API_BASE_ENV};

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Raw reply text for one batch and, when the backend reports it, the
/// metered cost of the request.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReply {
    pub raw: String,
    pub usd_cost: Option<f64>,
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    async fn classify_batch(&self, batch: &[ComponentInput], prompt: &str) -> Result<BatchReply, TransportError>;
}

#[async_trait]
impl Backend for Box<dyn Backend> {
    fn id(&self) -> String {
        (**self).id()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], prompt: &str) -> Result<BatchReply, TransportError> {
        (**self).classify_batch(batch, prompt).await
    }
}

fn reply_json(items: Vec<Value>) -> String {
    serde_json::to_string(&Value::Array(items)).expect("plain JSON values serialize")
}

/// Chat-completions style endpoint with inline base64 PNGs.
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: String,
}

impl HttpBackend {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, ClientError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ClientError::Config(format!("environment variable {} is not set", cfg.api_key_env)))?;
        let base = if cfg.base_url.is_empty() {
            std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string())
        } else {
            cfg.base_url.clone()
        };
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| ClientError::Config(format!("HTTP client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: cfg.model_name.clone(),
            api_key,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Request body for one batch.
    pub fn request_body(&self, batch: &[ComponentInput], prompt: &str) -> Result<Value, TransportError> {
        let mut content = vec![json!({"type": "text", "text": prompt})];
        for c in batch {
            let png = c
                .png
                .as_ref()
                .ok_or_else(|| TransportError::Backend(format!("component {} has no rendered image", c.component_index)))?;
            let b64 = base64::engine::general_purpose::STANDARD.encode(png.as_slice());
            content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
        }
        Ok(json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        }))
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    async fn classify_batch(&self, batch: &[ComponentInput], prompt: &str) -> Result<BatchReply, TransportError> {
        let body = self.request_body(batch, prompt)?;
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .await
            .map_err(|e| if e.is_timeout() { TransportError::Timeout } else { TransportError::Network(e.to_string()) })?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(500);
            return Err(TransportError::Status { code: status.as_u16(), body });
        }
        let raw = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string))
            .unwrap_or(text);
        Ok(BatchReply { raw, usd_cost: None })
    }
}

fn oracle_reason(label: Label) -> &'static str {
    match label {
        Label::Brain => "The topography shows a smooth dipolar field, the spectrum has a clear alpha peak near 10 Hz and the ERP image shows consistent oscillatory banding across epochs without sharp transients, which together indicate a neural source rather than an artifact.",
        Label::Eye => "The topography is concentrated over the frontal pole, the time series shows large slow monophasic deflections typical of blinks and the spectrum is dominated by power below 4 Hz, which together indicate an ocular artifact.",
        Label::Muscle => "The topography is focal over temporal sites, the time series shows bursts of dense high frequency activity and the spectrum rises or stays flat above 20 Hz, which together indicate electromyographic contamination from scalp or jaw muscles.",
        Label::Heart => "The time series shows sharp repetitive QRS-like spikes at a regular interval near one second, the ERP image shows aligned vertical stripes and the topography is a broad lateral gradient, which together indicate a cardiac artifact.",
        Label::LineNoise => "The spectrum is dominated by a narrow peak at the mains frequency, the time series shows a constant fast sinusoid of stable amplitude and the topography is broad, which together indicate electrical line interference.",
        Label::ChannelNoise => "The topography is concentrated on a single electrode with near zero weight elsewhere, the time series is irregular and spiky and the spectrum is broadband, which together indicate noise confined to one faulty channel.",
        Label::OtherArtifact => "The component does not match a neural pattern or any specific artifact class, with an unstructured topography, an irregular time course and a spectrum without distinctive peaks, so it is treated as a residual non-neural artifact.",
    }
}

/// Returns the ground-truth label with confidence 0.99.
pub struct OracleBackend {
    truth: BTreeMap<usize, Label>,
}

impl OracleBackend {
    pub fn new(truth: BTreeMap<usize, Label>) -> Self {
        Self { truth }
    }

    pub fn classify_one(&self, component_index: usize) -> Result<(Label, f64, String), ClientError> {
        let label = *self.truth.get(&component_index).ok_or(ClientError::Lookup(component_index))?;
        Ok((label, 0.99, oracle_reason(label).to_string()))
    }
}

#[async_trait]
impl Backend for OracleBackend {
    fn id(&self) -> String {
        "oracle".into()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], _prompt: &str) -> Result<BatchReply, TransportError> {
        let mut items = Vec::with_capacity(batch.len());
        for c in batch {
            let (label, confidence, reason) = self
                .classify_one(c.component_index)
                .map_err(|e| TransportError::Backend(e.to_string()))?;
            items.push(json!({"label": label.as_str(), "confidence": confidence, "reason": reason}));
        }
        Ok(BatchReply { raw: reply_json(items), usd_cost: Some(0.0) })
    }
}

/// Rule-based classifier over precomputed features.
pub struct HeuristicBackend;

#[async_trait]
impl Backend for HeuristicBackend {
    fn id(&self) -> String {
        "heuristic".into()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], _prompt: &str) -> Result<BatchReply, TransportError> {
        let mut items = Vec::with_capacity(batch.len());
        for c in batch {
            let f = c
                .features
                .as_ref()
                .ok_or_else(|| TransportError::Backend(format!("component {} has no features", c.component_index)))?;
            let (label, confidence, reason) = heuristic_classify(f);
            items.push(json!({"label": label.as_str(), "confidence": confidence, "reason": reason}));
        }
        Ok(BatchReply { raw: reply_json(items), usd_cost: Some(0.0) })
    }
}

/// One request/response pair in a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub components: Vec<usize>,
    pub response: String,
    pub usd_cost: Option<f64>,
}

/// Content hash of a request: prompt, component indices and image bytes.
pub fn request_hash(batch: &[ComponentInput], prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    for c in batch {
        h.update((c.component_index as u64).to_le_bytes());
        if let Some(png) = &c.png {
            h.update(Sha256::digest(png.as_slice()));
        }
    }
    hex::encode(h.finalize())
}

/// Forwards to an inner backend and appends each successful exchange to a
/// newline-delimited transcript.
pub struct RecordingBackend<B> {
    inner: B,
    out: Mutex<std::fs::File>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, path: &Path) -> std::io::Result<Self> {
        let out = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner, out: Mutex::new(out) })
    }
}

#[async_trait]
impl<B: Backend> Backend for RecordingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], prompt: &str) -> Result<BatchReply, TransportError> {
        let reply = self.inner.classify_batch(batch, prompt).await?;
        let entry = TranscriptEntry {
            request_hash: request_hash(batch, prompt),
            components: batch.iter().map(|c| c.component_index).collect(),
            response: reply.raw.clone(),
            usd_cost: reply.usd_cost,
        };
        let line = serde_json::to_string(&entry).expect("transcript entry serializes");
        let mut f = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(f, "{line}").map_err(|e| TransportError::Backend(format!("transcript write: {e}")))?;
        Ok(reply)
    }
}

/// Serves responses from a recorded transcript, keyed by request hash.
pub struct ReplayBackend {
    id: String,
    entries: HashMap<String, TranscriptEntry>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| ClientError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            entries.insert(e.request_hash.clone(), e);
        }
        Ok(Self { id: format!("replay:{}", path.display()), entries })
    }
}

#[async_trait]
impl Backend for ReplayBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], prompt: &str) -> Result<BatchReply, TransportError> {
        let key = request_hash(batch, prompt);
        self.entries
            .get(&key)
            .map(|e| BatchReply { raw: e.response.clone(), usd_cost: e.usd_cost })
            .ok_or_else(|| TransportError::Backend(format!("request {key} not in transcript")))
    }
}
