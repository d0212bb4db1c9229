//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod edf;
pub mod http;
pub mod signals;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use eegvl::client::{Backend, BatchReply, ComponentInput, Label, TransportError};

/// Kappa from a full contingency table in exact integer arithmetic, with a
/// single division at the end. Independent of the library's formula.
pub fn brute_force_kappa(a: &[Label], b: &[Label]) -> f64 {
    let n = a.len() as i128;
    let mut table = [[0i128; 7]; 7];
    for (x, y) in a.iter().zip(b) {
        table[*x as usize][*y as usize] += 1;
    }
    let diag: i128 = (0..7).map(|k| table[k][k]).sum();
    let chance: i128 = (0..7)
        .map(|k| {
            let row: i128 = table[k].iter().sum();
            let col: i128 = (0..7).map(|r| table[r][k]).sum();
            row * col
        })
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return if diag == n { 1.0 } else { 0.0 };
    }
    (n * diag - chance) as f64 / denom as f64
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Vec<Label> {
    (0..n).map(|_| Label::ALL[rng.random_range(0..k)]).collect()
}

/// Label the instrumented backend assigns to a component.
pub fn scripted_label(component_index: usize) -> Label {
    Label::ALL[(component_index * 5 + 3) % 7]
}

pub fn scripted_confidence(component_index: usize) -> f64 {
    0.5 + (component_index % 50) as f64 / 100.0
}

pub fn well_formed_reply(batch: &[ComponentInput]) -> String {
    let items: Vec<_> = batch
        .iter()
        .map(|c| {
            json!({
                "label": scripted_label(c.component_index).as_str(),
                "confidence": scripted_confidence(c.component_index),
                "reason": format!("component {} scripted reply", c.component_index),
            })
        })
        .collect();
    serde_json::to_string(&items).unwrap()
}

pub fn inputs(n: usize) -> Vec<ComponentInput> {
    (0..n)
        .map(|i| ComponentInput { component_index: i, png: Some(Arc::new(vec![0x89, b'P', b'N', b'G', i as u8])), features: None })
        .collect()
}

/// What the instrumented backend saw.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    pub batch_sizes: Vec<usize>,
    /// (first component index, attempt number, time since start)
    pub attempts: Vec<(usize, usize, Duration)>,
    pub max_in_flight: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum Fault {
    /// Answer `429` for the first `n` attempts of every batch.
    RateLimited(usize),
    /// Hang past any sensible timeout on the first `n` attempts.
    Hang(usize),
}

/// Mock backend counting concurrency, recording batch shapes and attempt
/// times, sleeping a seeded random latency and injecting faults.
pub struct InstrumentedBackend {
    in_flight: AtomicUsize,
    max_latency_ms: u64,
    seed: u64,
    fault: Option<Fault>,
    start: tokio::time::Instant,
    trace: Mutex<Trace>,
}

impl InstrumentedBackend {
    pub fn new(max_latency_ms: u64, seed: u64, fault: Option<Fault>) -> Self {
        Self {
            in_flight: AtomicUsize::new(0),
            max_latency_ms,
            seed,
            fault,
            start: tokio::time::Instant::now(),
            trace: Mutex::new(Trace::default()),
        }
    }

    pub fn trace(&self) -> Trace {
        self.trace.lock().unwrap().clone()
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl Backend for InstrumentedBackend {
    fn id(&self) -> String {
        "instrumented".into()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], _prompt: &str) -> Result<BatchReply, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.in_flight);
        let first = batch[0].component_index;
        let attempt = {
            let mut t = self.trace.lock().unwrap();
            t.max_in_flight = t.max_in_flight.max(now);
            let attempt = t.attempts.iter().filter(|a| a.0 == first).count();
            t.attempts.push((first, attempt, self.start.elapsed()));
            if attempt == 0 {
                t.batch_sizes.push(batch.len());
            }
            attempt
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (first as u64) << 8 ^ attempt as u64);
        let latency = rng.random_range(0..=self.max_latency_ms);
        tokio::time::sleep(Duration::from_millis(latency)).await;
        match self.fault {
            Some(Fault::RateLimited(n)) if attempt < n => {
                return Err(TransportError::Status { code: 429, body: "slow down".into() })
            }
            Some(Fault::Hang(n)) if attempt < n => tokio::time::sleep(Duration::from_secs(3600)).await,
            _ => {}
        }
        Ok(BatchReply { raw: well_formed_reply(batch), usd_cost: None })
    }
}

/// Replies that can never yield a valid classification for any component of
/// a batch of `n`.
pub fn malformed_reply(rng: &mut impl Rng, n: usize) -> String {
    let valid_item = |rng: &mut ChaCha8Rng| {
        json!({"label": Label::ALL[rng.random_range(0..7)].as_str(), "confidence": rng.random::<f64>(), "reason": "looks fine"})
    };
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    let items = |r: &mut ChaCha8Rng, f: &dyn Fn(&mut ChaCha8Rng, serde_json::Value) -> serde_json::Value| {
        let v: Vec<_> = (0..n).map(|_| {
            let item = valid_item(r);
            f(r, item)
        }).collect();
        serde_json::to_string(&v).unwrap()
    };
    match rng.random_range(0..12) {
        0 => String::new(),
        // free text without any bracket
        1 => {
            let alphabet = b"abcdefghij klmnop:\"',.0123456789\n\t";
            (0..rng.random_range(0..200)).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
        }
        2 => items(&mut r, &|_, mut v| {
            v.as_object_mut().unwrap().remove("label");
            v
        }),
        3 => items(&mut r, &|r, mut v| {
            let junk = ["brainy", "eyes!", "", "artifact", "noise", "unknown", "n/a"][r.random_range(0..7)];
            v["label"] = json!(junk);
            v
        }),
        4 => items(&mut r, &|r, mut v| {
            v["confidence"] = [json!(null), json!("high"), json!("NaN"), json!([0.5]), json!({"p": 0.5})][r.random_range(0..5)].clone();
            v
        }),
        5 => items(&mut r, &|_, mut v| {
            v.as_object_mut().unwrap().remove("confidence");
            v
        }),
        6 => items(&mut r, &|r, mut v| {
            v["reason"] = [json!(""), json!("   "), json!(null), json!(7)][r.random_range(0..4)].clone();
            v
        }),
        7 => items(&mut r, &|r, mut v| {
            v["label"] = [json!(1), json!(null), json!(["brain"]), json!({"name": "brain"})][r.random_range(0..4)].clone();
            v
        }),
        // first object cut before it closes; nothing after it
        8 => {
            let s = serde_json::to_string(&valid_item(&mut r)).unwrap();
            let cut = rng.random_range(1..s.len() - 1);
            format!("Here you go: [{}", &s[..cut])
        }
        // scalars and arrays of non-objects
        9 => ["null", "42", "\"brain\"", "[]", "[1, 2, 3]", "[\"brain\", 0.9, \"ok\"]", "{}", "[[]]"][rng.random_range(0..8)].into(),
        // an object lacking every expected key
        10 => json!({"classification": "brain", "score": 0.9, "why": "alpha"}).to_string(),
        // prose wrapping a reply whose items are all missing the reason
        _ => format!(
            "```json\n{}\n```",
            items(&mut r, &|_, mut v| {
                v.as_object_mut().unwrap().remove("reason");
                v
            })
        ),
    }
}

/// Backend that answers every batch with a fresh malformed reply.
pub struct FuzzBackend {
    rng: Mutex<ChaCha8Rng>,
    pub replies: AtomicUsize,
}

impl FuzzBackend {
    pub fn new(seed: u64) -> Self {
        Self { rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)), replies: AtomicUsize::new(0) }
    }
}

#[async_trait]
impl Backend for FuzzBackend {
    fn id(&self) -> String {
        "fuzz".into()
    }

    async fn classify_batch(&self, batch: &[ComponentInput], _prompt: &str) -> Result<BatchReply, TransportError> {
        let raw = malformed_reply(&mut *self.rng.lock().unwrap(), batch.len());
        self.replies.fetch_add(1, Ordering::SeqCst);
        Ok(BatchReply { raw, usd_cost: None })
    }
}
