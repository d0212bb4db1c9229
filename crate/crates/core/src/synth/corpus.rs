//! Seeded dataset recipes used by the test suites and the `synth` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SourceKind, SourceSpec};

pub const NOISE_FLOOR_UV: f64 = 1.0;
const DEAD_CANDIDATES: [&str; 6] = ["C3", "P4", "F4", "P3", "C4", "F3"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub dataset_id: String,
    pub specs: Vec<SourceSpec>,
    pub seed: u64,
    pub sfreq: f64,
    pub duration: f64,
    pub noise_floor_uv: f64,
}

fn specs(n_sources: usize, seed: u64, with_line: bool) -> Vec<SourceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(0..DEAD_CANDIDATES.len());
    let dead = DEAD_CANDIDATES[d];
    let dead2 = DEAD_CANDIDATES[(d + 1 + rng.random_range(0..DEAD_CANDIDATES.len() - 1)) % DEAD_CANDIDATES.len()];
    let mut amp = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut pool = vec![
        SourceSpec::new(SourceKind::AlphaBrain, amp(8.0, 15.0)),
        SourceSpec::new(SourceKind::BlinkEye, amp(40.0, 80.0)),
        SourceSpec::new(SourceKind::EcgHeart, amp(6.0, 15.0)),
        SourceSpec::new(SourceKind::EmgMuscle, amp(8.0, 15.0)).at("T7"),
        SourceSpec::new(SourceKind::DeadChannelNoise, amp(10.0, 25.0)).at(dead),
        SourceSpec::new(SourceKind::EmgMuscle, amp(8.0, 15.0)).at("T8"),
    ];
    if with_line {
        pool.push(SourceSpec::new(SourceKind::LineNoise, amp(5.0, 10.0)));
    } else {
        pool.push(SourceSpec::new(SourceKind::DeadChannelNoise, amp(10.0, 25.0)).at(dead2));
    }
    pool.push(SourceSpec::new(SourceKind::AlphaBrain, amp(5.0, 10.0)).at("Pz").with_freq(11.5));
    pool.truncate(n_sources);
    pool
}

/// Source recipe for the ICA recovery corpus; includes a line-noise source
/// from six sources up.
pub fn ica_corpus_specs(n_sources: usize, seed: u64) -> Vec<SourceSpec> {
    specs(n_sources, seed, true)
}

/// Source recipe for full-pipeline runs. No line-noise source: the notch
/// stage removes it before decomposition.
pub fn e2e_specs(n_sources: usize, seed: u64) -> Vec<SourceSpec> {
    specs(n_sources, seed, false)
}

fn entry(id: String, specs: Vec<SourceSpec>, seed: u64) -> CorpusEntry {
    CorpusEntry { dataset_id: id, specs, seed, sfreq: 250.0, duration: 120.0, noise_floor_uv: NOISE_FLOOR_UV }
}

/// Twenty 19-channel, 120 s, 250 Hz datasets with 4 to 8 sources.
pub fn ica_corpus() -> Vec<CorpusEntry> {
    (0..20)
        .map(|i| {
            let seed = 1000 + i as u64;
            entry(format!("ica{i:02}"), ica_corpus_specs(4 + i % 5, seed), seed)
        })
        .collect()
}

/// Five datasets with 6 to 8 sources each, for desk-scale pipeline runs.
pub fn desk_corpus() -> Vec<CorpusEntry> {
    (0..5)
        .map(|i| {
            let seed = 2000 + i as u64;
            entry(format!("sub{:02}", i + 1), e2e_specs(6 + i % 3, seed), seed)
        })
        .collect()
}

/// Twenty datasets with 4 to 8 non-line sources, for end-to-end scoring of
/// classifier backends.
pub fn e2e_corpus() -> Vec<CorpusEntry> {
    (0..20)
        .map(|i| {
            let seed = 3000 + i as u64;
            entry(format!("e2e{i:02}"), e2e_specs(4 + i % 5, seed), seed)
        })
        .collect()
}
