//! Per-component summary features and the rule-based offline classifier.

use serde::{Deserialize, Serialize};

use super::Label;
use crate::render::welch_psd;

/// Decision thresholds for [`heuristic_classify`]. Frozen after calibration on
/// synthetic components (see tests/heuristic_calibration.rs).
pub mod thresholds {
    /// Largest squared mixing weight over the sum of squares.
    pub const DOMINANCE: f64 = 0.8;
    /// Power within ±2 Hz of the line frequency and its first harmonic.
    pub const LINE_FRACTION: f64 = 0.5;
    /// Power above 20 Hz over power above 1 Hz.
    pub const HIGH_FREQ_FRACTION: f64 = 0.6;
    /// Peak normalized autocorrelation over 0.6-1.5 s lags.
    pub const QRS_AUTOCORR: f64 = 0.5;
    /// Excess kurtosis required alongside the autocorrelation peak.
    pub const QRS_KURTOSIS: f64 = 3.0;
    /// Mean squared weight over frontal sites relative to the whole scalp.
    pub const FRONTAL_SCORE: f64 = 1.5;
    /// Power in 1-4 Hz over power above 1 Hz.
    pub const LOW_FREQ_FRACTION: f64 = 0.5;
    /// 8-12 Hz peak over the median 2-30 Hz density.
    pub const ALPHA_PROMINENCE: f64 = 5.0;
    /// Mean squared weight over posterior sites relative to the whole scalp.
    pub const POSTERIOR_SCORE: f64 = 1.0;
    pub const FALLBACK_CONFIDENCE: f64 = 0.3;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFeatures {
    /// Relative power in delta, theta, alpha, beta and gamma (30 Hz up).
    pub band_fractions: [f64; 5],
    pub alpha_prominence: f64,
    pub high_freq_fraction: f64,
    pub low_freq_fraction: f64,
    pub line_fraction: f64,
    pub frontal_score: f64,
    pub posterior_score: f64,
    pub qrs_autocorr: f64,
    pub kurtosis: f64,
    pub dominance: f64,
}

impl Default for ComponentFeatures {
    fn default() -> Self {
        Self {
            band_fractions: [0.0; 5],
            alpha_prominence: 0.0,
            high_freq_fraction: 0.0,
            low_freq_fraction: 0.0,
            line_fraction: 0.0,
            frontal_score: 1.0,
            posterior_score: 1.0,
            qrs_autocorr: 0.0,
            kurtosis: 0.0,
            dominance: 0.0,
        }
    }
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    (mean, m2 / n, m4 / n)
}

/// Largest normalized autocorrelation over lags in `[lo, hi]` seconds.
fn autocorr_peak(x: &[f64], sfreq: f64, lo: f64, hi: f64) -> f64 {
    let (mean, var, _) = moments(x);
    if var <= 0.0 {
        return 0.0;
    }
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let n = c.len();
    let l0 = (lo * sfreq).round() as usize;
    let l1 = ((hi * sfreq).round() as usize).min(n.saturating_sub(2));
    let mut best = 0.0f64;
    for lag in l0..=l1 {
        let m = n - lag;
        let s: f64 = c[..m].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
        best = best.max(s / (m as f64 * var));
    }
    best
}

fn region_score(weights: &[f64], positions: &[[f64; 3]], pick: impl Fn(&[f64; 3]) -> bool) -> f64 {
    let total: f64 = weights.iter().map(|w| w * w).sum::<f64>() / weights.len().max(1) as f64;
    let sel: Vec<f64> = weights.iter().zip(positions).filter(|(_, p)| pick(p)).map(|(w, _)| w * w).collect();
    if sel.is_empty() || total <= 0.0 {
        return 0.0;
    }
    sel.iter().sum::<f64>() / sel.len() as f64 / total
}

/// Features from a component's activation and scalp weights.
pub fn compute_features(activation: &[f64], sfreq: f64, weights: &[f64], positions: &[[f64; 3]], line_freq: f64) -> ComponentFeatures {
    let mut f = ComponentFeatures::default();
    let seg = ((2.0 * sfreq).round() as usize).min(activation.len());
    if let Ok(spec) = welch_psd(activation, sfreq, seg.max(2), 0.5) {
        let nyq = sfreq / 2.0;
        let total = spec.band_power(1.0, nyq);
        if total > 0.0 {
            let edges = [1.0, 4.0, 8.0, 13.0, 30.0, nyq];
            for b in 0..5 {
                f.band_fractions[b] = spec.band_power(edges[b], edges[b + 1].min(nyq)) / total;
            }
            f.high_freq_fraction = spec.band_power(20.0, nyq) / total;
            f.low_freq_fraction = spec.band_power(1.0, 4.0) / total;
            let mut line = 0.0;
            for h in [1.0, 2.0] {
                let c = line_freq * h;
                if c + 2.0 < nyq {
                    line += spec.band_power(c - 2.0, c + 2.0);
                }
            }
            f.line_fraction = line / total;
        }
        let in_band = |lo: f64, hi: f64| {
            spec.freqs
                .iter()
                .zip(&spec.psd)
                .filter(move |(fr, _)| **fr >= lo && **fr <= hi)
                .map(|(_, p)| *p)
        };
        let peak = in_band(8.0, 12.0).fold(0.0f64, f64::max);
        let mut ref_band: Vec<f64> = in_band(2.0, 30.0).collect();
        ref_band.sort_by(f64::total_cmp);
        if let Some(&median) = ref_band.get(ref_band.len() / 2) {
            f.alpha_prominence = if median > 0.0 { peak / median } else { 0.0 };
        }
    }
    let (_, var, m4) = moments(activation);
    f.kurtosis = if var > 0.0 { m4 / (var * var) - 3.0 } else { 0.0 };
    f.qrs_autocorr = autocorr_peak(activation, sfreq, 0.6, 1.5);
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    f.dominance = if sq > 0.0 { weights.iter().fold(0.0f64, |m, w| m.max(w * w)) / sq } else { 0.0 };
    f.frontal_score = region_score(weights, positions, |p| p[1] > 0.5);
    f.posterior_score = region_score(weights, positions, |p| p[1] < -0.5);
    f
}

/// Confidence growing from 0.6 at the threshold towards 0.95 with margin.
fn graded(value: f64, threshold: f64, span: f64) -> f64 {
    0.6 + 0.35 * ((value - threshold) / span).clamp(0.0, 1.0)
}

/// Fixed decision list over the feature record. Deterministic.
pub fn heuristic_classify(f: &ComponentFeatures) -> (Label, f64, String) {
    use thresholds::*;
    let (label, conf, why) = if f.dominance > DOMINANCE {
        (
            Label::ChannelNoise,
            graded(f.dominance, DOMINANCE, 0.1),
            format!("the scalp map is concentrated on a single electrode, which carries {:.0}% of the squared weight", 100.0 * f.dominance),
        )
    } else if f.line_fraction > LINE_FRACTION {
        (
            Label::LineNoise,
            graded(f.line_fraction, LINE_FRACTION, 0.3),
            format!("{:.0}% of the spectral power sits in a narrow peak at the mains frequency", 100.0 * f.line_fraction),
        )
    } else if f.high_freq_fraction > HIGH_FREQ_FRACTION {
        (
            Label::Muscle,
            graded(f.high_freq_fraction, HIGH_FREQ_FRACTION, 0.3),
            format!("{:.0}% of the power lies above 20 Hz with a broad, rising spectrum typical of muscle activity", 100.0 * f.high_freq_fraction),
        )
    } else if f.qrs_autocorr > QRS_AUTOCORR && f.kurtosis > QRS_KURTOSIS {
        (
            Label::Heart,
            graded(f.qrs_autocorr, QRS_AUTOCORR, 0.4),
            format!("sharp periodic deflections repeat with autocorrelation {:.2} at a cardiac interval", f.qrs_autocorr),
        )
    } else if f.frontal_score > FRONTAL_SCORE && f.low_freq_fraction > LOW_FREQ_FRACTION {
        (
            Label::Eye,
            graded(f.frontal_score, FRONTAL_SCORE, 1.5),
            format!("weights peak over frontal sites (score {:.1}) and {:.0}% of the power is below 4 Hz, as in blinks", f.frontal_score, 100.0 * f.low_freq_fraction),
        )
    } else if f.alpha_prominence > ALPHA_PROMINENCE && f.posterior_score > POSTERIOR_SCORE {
        (
            Label::Brain,
            graded(f.alpha_prominence, ALPHA_PROMINENCE, 20.0),
            format!("a clear 8-12 Hz peak stands {:.0} times above the background over a posterior scalp distribution", f.alpha_prominence),
        )
    } else if f.alpha_prominence > ALPHA_PROMINENCE {
        (
            Label::Brain,
            0.5,
            format!("an 8-12 Hz peak stands {:.0} times above the background but the scalp distribution is not posterior", f.alpha_prominence),
        )
    } else {
        (
            Label::OtherArtifact,
            FALLBACK_CONFIDENCE,
            "no rule matched the spectral, temporal or spatial features with enough margin".to_string(),
        )
    };
    let reasoning = format!(
        "Rule-based assessment of the component dashboard features: {why}. The label {label} was chosen from a fixed decision list \
         ordered by specificity, so earlier rules take precedence over later ones."
    );
    (label, conf, reasoning)
}
