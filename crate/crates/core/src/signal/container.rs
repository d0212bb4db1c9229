//! Native container: `ICVREC01`, a u32-LE length-prefixed JSON header, then
//! float32 LE samples in channel-major order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Montage, Recording, Result, SignalError};

pub const MAGIC: &[u8; 8] = b"ICVREC01";

#[derive(Serialize, Deserialize)]
struct Header {
    sfreq: f64,
    n_samples: u64,
    channel_names: Vec<String>,
    positions: Vec<[f64; 3]>,
    meta: BTreeMap<String, String>,
}

/// Serializes a recording. Samples are narrowed to f32.
pub fn encode_container(rec: &Recording) -> Vec<u8> {
    let header = Header {
        sfreq: rec.sfreq(),
        n_samples: rec.n_samples() as u64,
        channel_names: rec.channel_names().to_vec(),
        positions: rec.montage().positions().to_vec(),
        meta: rec.meta.clone(),
    };
    let doc = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + doc.len() + rec.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(doc.len() as u32).to_le_bytes());
    out.extend_from_slice(&doc);
    for &v in rec.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(SignalError::Format("missing ICVREC01 magic header".into()));
    }
    let doc_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < doc_len {
        return Err(SignalError::Format(format!(
            "header declares {doc_len} bytes but only {} remain",
            body.len()
        )));
    }
    let header: Header = serde_json::from_slice(&body[..doc_len])
        .map_err(|e| SignalError::Format(format!("malformed header document: {e}")))?;
    let n_channels = header.channel_names.len();
    if header.positions.len() != n_channels {
        return Err(SignalError::Integrity(format!(
            "{} channel names but {} montage positions",
            n_channels,
            header.positions.len()
        )));
    }
    let samples = &body[doc_len..];
    let expected = n_channels as u64 * header.n_samples * 4;
    if samples.len() as u64 != expected {
        return Err(SignalError::Integrity(format!(
            "data section holds {} bytes, expected {expected} ({n_channels} channels x {} samples x 4)",
            samples.len(),
            header.n_samples
        )));
    }
    let data = samples
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let montage = Montage::new(header.channel_names.clone(), header.positions)?;
    let mut rec = Recording::new(data, n_channels, header.sfreq, header.channel_names, montage)?;
    rec.meta = header.meta;
    Ok(rec)
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Recording> {
    decode_container(&std::fs::read(path)?)
}

pub fn save_container(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_container(rec))?;
    Ok(())
}
