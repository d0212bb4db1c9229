//! EEG data model, ingestion (native container and EDF), zero-phase
//! filtering and fixed-length epoching.

mod container;
mod edf;
mod epochs;
mod filter;
mod montage;

pub use container::{decode_container, encode_container, load_container, save_container, MAGIC};
pub use edf::{load_edf, load_edf_with_montage, parse_edf};
pub use epochs::{make_epochs, samples_per_epoch, Epochs};
pub use filter::{bandpass_design, notch_design, bandpass_filter, butterworth_highpass, butterworth_lowpass, filtfilt, notch_filter, notch_section, Biquad, Sos, BUTTER_ORDER, NOTCH_BANDWIDTH_HZ};
pub use montage::{standard_1020_position, Montage, STANDARD_1020_19};

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("montage error: {0}")]
    Montage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// A multichannel recording in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    data: Vec<f64>,
    n_channels: usize,
    n_samples: usize,
    sfreq: f64,
    channel_names: Vec<String>,
    montage: Montage,
    pub meta: BTreeMap<String, String>,
}

impl Recording {
    /// Builds a recording from channel-major samples.
    ///
    /// Channel names must be unique and match the montage labels one to one,
    /// and every sample must be finite.
    pub fn new(
        data: Vec<f64>,
        n_channels: usize,
        sfreq: f64,
        channel_names: Vec<String>,
        montage: Montage,
    ) -> Result<Self> {
        if !(sfreq.is_finite() && sfreq > 0.0) {
            return Err(SignalError::Parameter(format!("sampling rate must be positive, got {sfreq}")));
        }
        if n_channels == 0 {
            return Err(SignalError::Integrity("recording has no channels".into()));
        }
        if channel_names.len() != n_channels || montage.len() != n_channels {
            return Err(SignalError::Integrity(format!(
                "channel count mismatch: {} data rows, {} names, {} montage positions",
                n_channels,
                channel_names.len(),
                montage.len()
            )));
        }
        if data.len() % n_channels != 0 {
            return Err(SignalError::Integrity(format!(
                "{} samples do not divide into {} channels",
                data.len(),
                n_channels
            )));
        }
        for (name, label) in channel_names.iter().zip(montage.labels()) {
            if name != label {
                return Err(SignalError::Integrity(format!(
                    "channel '{name}' does not match montage label '{label}'"
                )));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let n_samples = data.len() / n_channels;
            return Err(SignalError::Integrity(format!(
                "non-finite sample at channel {}, sample {}",
                pos / n_samples.max(1),
                pos % n_samples.max(1)
            )));
        }
        let n_samples = data.len() / n_channels;
        Ok(Self {
            data,
            n_channels,
            n_samples,
            sfreq,
            channel_names,
            montage,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a recording from per-channel rows.
    pub fn from_rows(rows: Vec<Vec<f64>>, sfreq: f64, montage: Montage) -> Result<Self> {
        let n_channels = rows.len();
        let n_samples = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_samples) {
            return Err(SignalError::Integrity("ragged channel rows".into()));
        }
        let names = montage.labels().to_vec();
        Self::new(rows.concat(), n_channels, sfreq, names, montage)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sfreq(&self) -> f64 {
        self.sfreq
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sfreq
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    /// Channel-major sample buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.n_samples..(idx + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_samples.max(1))
    }

    /// Returns a copy with the samples replaced, keeping names, montage and metadata.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(SignalError::Integrity(format!(
                "replacement buffer has {} samples, expected {}",
                data.len(),
                self.data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::Integrity("replacement buffer contains non-finite samples".into()));
        }
        Ok(Self { data, ..self.clone() })
    }

    pub fn channel_means(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64)
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn montage(n: usize) -> Montage {
        let labels: Vec<String> = STANDARD_1020_19.iter().take(n).map(|s| s.to_string()).collect();
        Montage::standard_1020(&labels).unwrap()
    }

    pub fn recording(rows: Vec<Vec<f64>>, sfreq: f64) -> Recording {
        let m = montage(rows.len());
        Recording::from_rows(rows, sfreq, m).unwrap()
    }
}
