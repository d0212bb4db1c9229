//! Synthetic EEG with planted sources and known labels, used as ground truth
//! for every stage of the pipeline.

mod corpus;
mod matching;
mod sources;

pub use corpus::{desk_corpus, e2e_corpus, e2e_specs, ica_corpus, ica_corpus_specs, CorpusEntry, NOISE_FLOOR_UV};
pub use matching::{assign_max_abs, match_components, ComponentMatch, MATCH_THRESHOLD};
pub use sources::{spatial_pattern, synthesize_source, SourceKind, SourceSpec};

use std::collections::BTreeMap;

use base64::Engine;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Label;
use crate::signal::{Montage, Recording, SignalError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("capacity error: {requested} sources need at least {needed} channels, montage has {available}")]
    Capacity { requested: usize, needed: usize, available: usize },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("sidecar error: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Everything needed to score a decomposition of a generated recording.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub kinds: Vec<SourceKind>,
    /// Source waveforms, one row per source.
    pub sources: Vec<Vec<f64>>,
    /// Channels × sources.
    pub mixing: DMatrix<f64>,
    pub sfreq: f64,
    pub seed: u64,
    /// Filled in after matching against a fitted model.
    pub component_labels: BTreeMap<usize, Label>,
}

impl GroundTruth {
    pub fn labels(&self) -> Vec<Label> {
        self.kinds.iter().map(|k| k.label()).collect()
    }

    pub fn label_map() -> BTreeMap<SourceKind, Label> {
        SourceKind::ALL.iter().map(|k| (*k, k.label())).collect()
    }

    pub fn n_sources(&self) -> usize {
        self.kinds.len()
    }

    pub fn to_json(&self) -> String {
        let enc = |v: &[f64]| {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            base64::engine::general_purpose::STANDARD.encode(bytes)
        };
        let mixing_rows: Vec<Vec<f64>> = self.mixing.row_iter().map(|r| r.iter().copied().collect()).collect();
        let doc = TruthDoc {
            format: TRUTH_FORMAT.into(),
            sfreq: self.sfreq,
            seed: self.seed,
            kinds: self.kinds.clone(),
            labels: self.labels(),
            label_map: Self::label_map().into_iter().map(|(k, l)| (k.as_str().to_string(), l)).collect(),
            mixing: mixing_rows,
            n_samples: self.sources.first().map_or(0, Vec::len),
            sources_f64le_b64: self.sources.iter().map(|s| enc(s)).collect(),
            component_labels: self.component_labels.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("truth document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TruthDoc = serde_json::from_str(text).map_err(|e| SynthError::Sidecar(e.to_string()))?;
        if doc.format != TRUTH_FORMAT {
            return Err(SynthError::Sidecar(format!("unsupported format {:?}", doc.format)));
        }
        let n_src = doc.kinds.len();
        if doc.sources_f64le_b64.len() != n_src || doc.mixing.iter().any(|r| r.len() != n_src) {
            return Err(SynthError::Sidecar("source count disagrees between fields".into()));
        }
        let mut sources = Vec::with_capacity(n_src);
        for s in &doc.sources_f64le_b64 {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(s)
                .map_err(|e| SynthError::Sidecar(e.to_string()))?;
            if bytes.len() != doc.n_samples * 8 {
                return Err(SynthError::Sidecar("source length mismatch".into()));
            }
            sources.push(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        let n_ch = doc.mixing.len();
        let mixing = DMatrix::from_row_iterator(n_ch, n_src, doc.mixing.into_iter().flatten());
        Ok(Self {
            kinds: doc.kinds,
            sources,
            mixing,
            sfreq: doc.sfreq,
            seed: doc.seed,
            component_labels: doc.component_labels,
        })
    }
}

const TRUTH_FORMAT: &str = "eegvl-ground-truth/1";

#[derive(Serialize, Deserialize)]
struct TruthDoc {
    format: String,
    sfreq: f64,
    seed: u64,
    kinds: Vec<SourceKind>,
    labels: Vec<Label>,
    label_map: BTreeMap<String, Label>,
    mixing: Vec<Vec<f64>>,
    n_samples: usize,
    sources_f64le_b64: Vec<String>,
    component_labels: BTreeMap<usize, Label>,
}

/// Mixes the requested sources through smooth scalp patterns and adds
/// Gaussian sensor noise of `noise_floor_uv` RMS.
pub fn generate_dataset(
    specs: &[SourceSpec],
    montage: &Montage,
    sfreq: f64,
    duration: f64,
    noise_floor_uv: f64,
    seed: u64,
) -> Result<(Recording, GroundTruth)> {
    let n_ch = montage.len();
    if specs.len() + 1 > n_ch {
        return Err(SynthError::Capacity { requested: specs.len(), needed: specs.len() + 1, available: n_ch });
    }
    if specs.is_empty() {
        return Err(SynthError::Parameter("at least one source is required".into()));
    }
    if !(duration >= 10.0) {
        return Err(SynthError::Parameter(format!("duration must be at least 10 s, got {duration}")));
    }
    if !(sfreq > 0.0 && sfreq.is_finite()) {
        return Err(SynthError::Parameter(format!("invalid sampling rate {sfreq}")));
    }
    if !(noise_floor_uv >= 0.0 && noise_floor_uv.is_finite()) {
        return Err(SynthError::Parameter(format!("invalid noise floor {noise_floor_uv}")));
    }
    for s in specs {
        s.validate(sfreq)?;
    }
    let n = (duration * sfreq).round() as usize;
    let mut mixing = DMatrix::zeros(n_ch, specs.len());
    for (j, s) in specs.iter().enumerate() {
        let col = spatial_pattern(s, montage)?;
        mixing.set_column(j, &nalgebra::DVector::from_vec(col));
    }
    let sv = mixing.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-6 * smax) {
        return Err(SynthError::Rank(format!("spatial patterns are not linearly independent (condition {:.3e})", smax / smin)));
    }
    let sources: Vec<Vec<f64>> = specs
        .iter()
        .enumerate()
        .map(|(j, s)| synthesize_source(s, n, sfreq, source_seed(seed, j)))
        .collect::<Result<_>>()?;

    let mut data = vec![0.0; n_ch * n];
    for (j, src) in sources.iter().enumerate() {
        for ch in 0..n_ch {
            let w = mixing[(ch, j)];
            if w == 0.0 {
                continue;
            }
            for (d, s) in data[ch * n..(ch + 1) * n].iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    if noise_floor_uv > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_6500_0000);
        let normal = Normal::new(0.0, noise_floor_uv).expect("valid noise floor");
        for d in data.iter_mut() {
            *d += normal.sample(&mut rng);
        }
    }
    let mut rec = Recording::new(data, n_ch, sfreq, montage.labels().to_vec(), montage.clone())?;
    rec.meta.insert("generator".into(), "synth".into());
    rec.meta.insert("seed".into(), seed.to_string());
    rec.meta.insert(
        "sources".into(),
        specs.iter().map(|s| s.kind.as_str()).collect::<Vec<_>>().join(","),
    );
    let truth = GroundTruth {
        kinds: specs.iter().map(|s| s.kind).collect(),
        sources,
        mixing,
        sfreq,
        seed,
        component_labels: BTreeMap::new(),
    };
    Ok((rec, truth))
}

fn source_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(j as u64 + 1)
}
