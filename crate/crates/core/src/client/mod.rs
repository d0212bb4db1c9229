//! Vision-language classification client: prompt construction, batched
//! dispatch with bounded concurrency and retries, reply parsing and cost
//! metering. Backends are pluggable: a real HTTP chat-completions endpoint,
//! a ground-truth oracle and a rule-based heuristic, plus transcript
//! record/replay for offline regression.

mod backend;
mod features;
mod label;
mod parse;
mod prompt;

pub use backend::{
    Backend, BatchReply, HeuristicBackend, HttpBackend, OracleBackend, RecordingBackend, ReplayBackend, TranscriptEntry,
};
pub use features::{compute_features, heuristic_classify, thresholds, ComponentFeatures};
pub use label::{Label, UnknownLabel};
pub use parse::{extract_first_json, parse_batch_response, parse_object, parse_response, word_count, ParseError, ParsedReply};
pub use prompt::{build_prompt, NEUROLOGIST_INSTRUCTION};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_API_KEY_ENV: &str = "ICVISION_API_KEY";
pub const API_BASE_ENV: &str = "ICVISION_API_BASE";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no ground-truth entry for component {0}")]
    Lookup(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Failure of one request attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("backend error: {0}")]
    Backend(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Network(_) => true,
            TransportError::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportError::Backend(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpApi,
    OracleMock,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    /// Adds up to a quarter of the current delay, drawn from a seeded generator.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base_delay_ms: 1000, jitter: true }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based). Strictly increasing in
    /// `attempt` for any jitter draw.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let base = self.base_delay_ms as f64 * 2f64.powi(attempt.min(30) as i32);
        let jitter = if self.jitter { rng.random::<f64>() * 0.25 * base } else { 0.0 };
        Duration::from_secs_f64((base + jitter) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Empty means `$ICVISION_API_BASE`, falling back to the public endpoint.
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub per_component_usd: f64,
    pub retry: RetryPolicy,
    pub timeout_secs: f64,
    pub prompt_template: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Heuristic,
            base_url: String::new(),
            model_name: "gpt-4.1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            batch_size: 10,
            max_in_flight: 4,
            per_component_usd: 0.002,
            retry: RetryPolicy::default(),
            timeout_secs: 120.0,
            prompt_template: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(ClientError::Config("batch_size and max_in_flight must be at least 1".into()));
        }
        if !(self.per_component_usd >= 0.0 && self.per_component_usd.is_finite()) {
            return Err(ClientError::Config("per_component_usd must be a non-negative number".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(ClientError::Config("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn prompt(&self, n_images: usize) -> String {
        build_prompt(self.prompt_template.as_deref(), n_images)
    }
}

/// One dashboard handed to a backend.
#[derive(Debug, Clone, Default)]
pub struct ComponentInput {
    pub component_index: usize,
    pub png: Option<Arc<Vec<u8>>>,
    pub features: Option<ComponentFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentClassification {
    pub component_index: usize,
    pub label: Label,
    pub confidence: f64,
    pub reasoning: String,
    pub backend_id: String,
    pub usd_cost: f64,
    pub raw_response: String,
}

impl ComponentClassification {
    /// Soft check on the 30-70 word reasoning length.
    pub fn reasoning_length_flagged(&self) -> bool {
        !(30..=70).contains(&word_count(&self.reasoning))
    }
}

/// A component whose classification could not be obtained. Never dropped:
/// triage routes it to manual review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedComponent {
    pub component_index: usize,
    pub error: String,
    pub raw_response: Option<String>,
    pub backend_id: String,
    pub usd_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClassifyOutcome {
    Classified(ComponentClassification),
    Flagged(FlaggedComponent),
}

impl ClassifyOutcome {
    pub fn component_index(&self) -> usize {
        match self {
            ClassifyOutcome::Classified(c) => c.component_index,
            ClassifyOutcome::Flagged(f) => f.component_index,
        }
    }

    pub fn usd_cost(&self) -> f64 {
        match self {
            ClassifyOutcome::Classified(c) => c.usd_cost,
            ClassifyOutcome::Flagged(f) => f.usd_cost,
        }
    }

    pub fn classification(&self) -> Option<&ComponentClassification> {
        match self {
            ClassifyOutcome::Classified(c) => Some(c),
            ClassifyOutcome::Flagged(_) => None,
        }
    }
}

/// Nominal spend for `n_components` at a flat per-component rate.
pub fn estimate_cost(n_components: usize, per_component_usd: f64) -> f64 {
    n_components as f64 * per_component_usd
}

/// Sum of metered costs across outcomes.
pub fn metered_cost(outcomes: &[ClassifyOutcome]) -> f64 {
    outcomes.iter().map(ClassifyOutcome::usd_cost).sum()
}

/// Request count for `n` inputs at `batch_size`.
pub fn batch_sizes(n: usize, batch_size: usize) -> Vec<usize> {
    let b = batch_size.max(1);
    (0..n.div_ceil(b)).map(|i| b.min(n - i * b)).collect()
}

async fn send_with_retry(
    backend: &dyn Backend,
    batch: &[ComponentInput],
    prompt: &str,
    cfg: &BackendConfig,
    batch_no: usize,
) -> Result<BatchReply, TransportError> {
    let mut rng = ChaCha8Rng::seed_from_u64(batch_no as u64);
    let timeout = Duration::from_secs_f64(cfg.timeout_secs);
    let mut attempt = 0u32;
    loop {
        let res = match tokio::time::timeout(timeout, backend.classify_batch(batch, prompt)).await {
            Ok(r) => r,
            Err(_) => Err(TransportError::Timeout),
        };
        match res {
            Ok(reply) => return Ok(reply),
            Err(e) if e.is_retryable() && attempt < cfg.retry.max_retries => {
                let wait = cfg.retry.delay(attempt, &mut rng);
                log::warn!("batch {batch_no} attempt {} failed ({e}); retrying in {wait:?}", attempt + 1);
                tokio::time::sleep(wait).await;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn outcomes_for_batch(
    batch: &[ComponentInput],
    reply: Result<BatchReply, TransportError>,
    backend_id: &str,
    cfg: &BackendConfig,
) -> Vec<ClassifyOutcome> {
    match reply {
        Err(e) => batch
            .iter()
            .map(|c| {
                ClassifyOutcome::Flagged(FlaggedComponent {
                    component_index: c.component_index,
                    error: format!("transport: {e}"),
                    raw_response: None,
                    backend_id: backend_id.to_string(),
                    usd_cost: 0.0,
                })
            })
            .collect(),
        Ok(reply) => {
            let per = reply.usd_cost.map_or(cfg.per_component_usd, |u| u / batch.len() as f64);
            parse_batch_response(&reply.raw, batch.len())
                .into_iter()
                .zip(batch)
                .map(|(parsed, c)| match parsed {
                    Ok(p) => ClassifyOutcome::Classified(ComponentClassification {
                        component_index: c.component_index,
                        label: p.label,
                        confidence: p.confidence,
                        reasoning: p.reasoning,
                        backend_id: backend_id.to_string(),
                        usd_cost: per,
                        raw_response: reply.raw.clone(),
                    }),
                    Err(e) => ClassifyOutcome::Flagged(FlaggedComponent {
                        component_index: c.component_index,
                        error: format!("parse: {}", e.message),
                        raw_response: Some(e.raw),
                        backend_id: backend_id.to_string(),
                        usd_cost: per,
                    }),
                })
                .collect()
        }
    }
}

/// Classifies every input, `batch_size` per request with at most
/// `max_in_flight` requests outstanding. Output order equals input order and
/// every input yields exactly one outcome.
pub async fn classify_all(
    inputs: &[ComponentInput],
    backend: &dyn Backend,
    cfg: &BackendConfig,
) -> Result<Vec<ClassifyOutcome>, ClientError> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(ClientError::Config("nothing to classify".into()));
    }
    let backend_id = backend.id();
    let batches: Vec<&[ComponentInput]> = inputs.chunks(cfg.batch_size).collect();
    let mut done: Vec<(usize, Vec<ClassifyOutcome>)> = stream::iter(batches.into_iter().enumerate())
        .map(|(no, batch)| {
            let backend_id = backend_id.clone();
            async move {
                let prompt = cfg.prompt(batch.len());
                let reply = send_with_retry(backend, batch, &prompt, cfg, no).await;
                (no, outcomes_for_batch(batch, reply, &backend_id, cfg))
            }
        })
        .buffer_unordered(cfg.max_in_flight)
        .collect()
        .await;
    done.sort_by_key(|(no, _)| *no);
    Ok(done.into_iter().flat_map(|(_, o)| o).collect())
}

/// Blocking wrapper around [`classify_all`] on a private runtime.
pub fn classify_all_blocking(
    inputs: &[ComponentInput],
    backend: &dyn Backend,
    cfg: &BackendConfig,
) -> Result<Vec<ClassifyOutcome>, ClientError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(cfg.max_in_flight.clamp(1, 8))
        .enable_all()
        .build()?;
    rt.block_on(classify_all(inputs, backend, cfg))
}

/// Builds the backend named by `cfg.kind`. HTTP needs its key present now;
/// the oracle needs `truth`.
pub fn make_backend(cfg: &BackendConfig, truth: Option<BTreeMap<usize, Label>>) -> Result<Box<dyn Backend>, ClientError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::HttpApi => Box::new(HttpBackend::from_config(cfg)?),
        BackendKind::Heuristic => Box::new(HeuristicBackend),
        BackendKind::OracleMock => {
            let truth = truth.ok_or_else(|| ClientError::Config("oracle backend needs ground truth".into()))?;
            Box::new(OracleBackend::new(truth))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        assert!((estimate_cost(128, 0.002) - 0.256).abs() < 1e-12);
        assert_eq!(estimate_cost(0, 0.002), 0.0);
        assert!((estimate_cost(3168, 0.002) - 6.336).abs() < 1e-12);
    }

    #[test]
    fn batching_arithmetic() {
        assert_eq!(batch_sizes(25, 10), vec![10, 10, 5]);
        assert_eq!(batch_sizes(0, 10), Vec::<usize>::new());
        assert_eq!(batch_sizes(10, 10), vec![10]);
    }

    #[test]
    fn backoff_monotone_with_jitter() {
        let p = RetryPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<Duration> = (0..5).map(|a| p.delay(a, &mut rng)).collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
        assert!(d[0] >= Duration::from_secs(1));
    }

    #[test]
    fn retry_classes() {
        assert!(TransportError::Status { code: 429, body: String::new() }.is_retryable());
        assert!(TransportError::Status { code: 503, body: String::new() }.is_retryable());
        assert!(!TransportError::Status { code: 400, body: String::new() }.is_retryable());
        assert!(TransportError::Timeout.is_retryable());
    }

    #[test]
    fn invalid_config() {
        let cfg = BackendConfig { batch_size: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
