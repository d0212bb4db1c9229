//! EEG artifact triage: ICA decomposition, per-component diagnostic
//! dashboards, vision-language classification, confidence-gated rejection and
//! reconstruction, with a synthetic ground-truth generator and agreement
//! metrics for offline verification.

pub mod signal;
pub mod ica;
pub mod render;
pub mod client;
pub mod eval;
pub mod pipeline;
pub mod synth;
pub mod triage;
