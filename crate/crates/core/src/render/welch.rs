//! Welch power spectral density: Hann-windowed, mean-detrended segments,
//! one-sided density scaling (µV²/Hz).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{RenderError, Result};

/// Floor applied before the dB conversion.
pub const DB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub freqs: Vec<f64>,
    /// Linear density.
    pub psd: Vec<f64>,
    pub psd_db: Vec<f64>,
    pub seg_len: usize,
    pub overlap: f64,
    pub n_segments: usize,
    pub window: &'static str,
}

impl SpectrumEstimate {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Integral of the linear density over `[lo, hi]` (inclusive bins).
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.bin_width();
        self.freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * df)
            .sum()
    }

    pub fn argmax_freq(&self) -> f64 {
        let i = self
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        self.freqs[i]
    }
}

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn welch_psd(signal: &[f64], sfreq: f64, seg_len: usize, overlap: f64) -> Result<SpectrumEstimate> {
    if seg_len < 2 {
        return Err(RenderError::Parameter(format!("segment length must be at least 2, got {seg_len}")));
    }
    if seg_len > signal.len() {
        return Err(RenderError::Parameter(format!(
            "segment length {seg_len} exceeds signal length {}",
            signal.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(RenderError::Parameter(format!("overlap must be in [0, 1), got {overlap}")));
    }
    if !(sfreq > 0.0) {
        return Err(RenderError::Parameter("sampling rate must be positive".into()));
    }
    let noverlap = (overlap * seg_len as f64).floor() as usize;
    let step = (seg_len - noverlap).max(1);
    let window = hann(seg_len);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg_len);
    let n_bins = seg_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut n_segments = 0;
    let mut start = 0;
    while start + seg_len <= signal.len() {
        let seg = &signal[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        n_segments += 1;
        start += step;
    }
    let scale = 1.0 / (sfreq * win_power * n_segments as f64);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = k != 0 && !(seg_len % 2 == 0 && k == n_bins - 1);
            p * scale * if one_sided { 2.0 } else { 1.0 }
        })
        .collect();
    let psd_db = psd.iter().map(|p| 10.0 * p.max(DB_FLOOR).log10()).collect();
    let freqs = (0..n_bins).map(|k| k as f64 * sfreq / seg_len as f64).collect();
    Ok(SpectrumEstimate { freqs, psd, psd_db, seg_len, overlap, n_segments, window: "hann" })
}
