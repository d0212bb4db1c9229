//! European Data Format reader: ASCII headers, 16-bit LE two's-complement samples.

use std::path::Path;

use super::{Montage, Recording, Result, SignalError};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

struct SignalHeader {
    label: String,
    physical_min: f64,
    physical_max: f64,
    digital_min: f64,
    digital_max: f64,
    samples_per_record: usize,
}

impl SignalHeader {
    fn to_physical(&self, digital: i16) -> f64 {
        self.physical_min
            + (digital as f64 - self.digital_min) * (self.physical_max - self.physical_min)
                / (self.digital_max - self.digital_min)
    }
}

fn ascii(bytes: &[u8], what: &str) -> Result<String> {
    std::str::from_utf8(bytes)
        .map(|s| s.trim().to_string())
        .map_err(|_| SignalError::Parse(format!("{what}: non-ASCII header bytes")))
}

fn number<T: std::str::FromStr>(bytes: &[u8], what: &str) -> Result<T> {
    let s = ascii(bytes, what)?;
    s.parse::<T>()
        .map_err(|_| SignalError::Parse(format!("{what}: expected a number, found '{s}'")))
}

/// Strips the usual reference decorations ("EEG Fp1-REF" -> "Fp1").
fn clean_label(label: &str) -> String {
    let mut l = label.trim();
    for prefix in ["EEG ", "EEG-"] {
        if let Some(rest) = l.strip_prefix(prefix) {
            l = rest.trim();
        }
    }
    for suffix in ["-REF", "-Ref", "-ref", "-LE", "-AVG"] {
        if let Some(rest) = l.strip_suffix(suffix) {
            l = rest.trim();
        }
    }
    l.to_string()
}

/// Decodes an EDF byte buffer into physical units. Returns the cleaned labels,
/// the common sampling rate and channel-major samples. EDF+ annotation signals
/// are skipped.
fn decode(bytes: &[u8]) -> Result<(Vec<String>, f64, Vec<f64>)> {
    if bytes.len() < FIXED_HEADER {
        return Err(SignalError::Parse(format!(
            "file is {} bytes, shorter than the 256-byte fixed header",
            bytes.len()
        )));
    }
    let header_bytes: usize = number(&bytes[184..192], "header byte count")?;
    let n_records: i64 = number(&bytes[236..244], "number of data records")?;
    let record_duration: f64 = number(&bytes[244..252], "data record duration")?;
    let ns: usize = number(&bytes[252..256], "number of signals")?;
    if ns == 0 {
        return Err(SignalError::Parse("file declares zero signals".into()));
    }
    if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
        return Err(SignalError::Parse(format!(
            "header byte count {header_bytes} inconsistent with {ns} signals"
        )));
    }
    if bytes.len() < header_bytes {
        return Err(SignalError::Parse(format!(
            "signal headers truncated: {} of {header_bytes} header bytes present",
            bytes.len()
        )));
    }
    if !(record_duration > 0.0) {
        return Err(SignalError::Parse(format!("record duration must be positive, got {record_duration}")));
    }

    // Signal header fields are stored field-by-field across all signals.
    let field = |offset: usize, width: usize, i: usize| {
        let start = FIXED_HEADER + offset * ns + i * width;
        &bytes[start..start + width]
    };
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = ascii(field(0, 16, i), "signal label")?;
        let sig = SignalHeader {
            physical_min: number(field(104, 8, i), "physical minimum")?,
            physical_max: number(field(112, 8, i), "physical maximum")?,
            digital_min: number(field(120, 8, i), "digital minimum")?,
            digital_max: number(field(128, 8, i), "digital maximum")?,
            samples_per_record: number(field(216, 8, i), "samples per record")?,
            label,
        };
        if sig.physical_max == sig.physical_min {
            return Err(SignalError::Calibration(format!(
                "signal '{}' has physical_max == physical_min ({})",
                sig.label, sig.physical_min
            )));
        }
        if sig.digital_max <= sig.digital_min {
            return Err(SignalError::Calibration(format!(
                "signal '{}' has digital_max <= digital_min",
                sig.label
            )));
        }
        signals.push(sig);
    }

    let record_samples: usize = signals.iter().map(|s| s.samples_per_record).sum();
    let record_bytes = record_samples * 2;
    let data = &bytes[header_bytes..];
    let n_records = if n_records < 0 {
        if record_bytes == 0 || data.len() % record_bytes != 0 {
            return Err(SignalError::Parse("cannot infer record count from data size".into()));
        }
        data.len() / record_bytes
    } else {
        n_records as usize
    };
    if data.len() != n_records * record_bytes {
        return Err(SignalError::Parse(format!(
            "data section holds {} bytes, header implies {} ({n_records} records x {record_bytes} bytes)",
            data.len(),
            n_records * record_bytes
        )));
    }

    let keep: Vec<usize> = (0..ns)
        .filter(|&i| !signals[i].label.contains("Annotations"))
        .collect();
    if keep.is_empty() {
        return Err(SignalError::Parse("no ordinary signals (annotations only)".into()));
    }
    let spr = signals[keep[0]].samples_per_record;
    if keep.iter().any(|&i| signals[i].samples_per_record != spr) {
        return Err(SignalError::Parse("signals with differing sampling rates are not supported".into()));
    }
    let sfreq = spr as f64 / record_duration;

    let n_samples = n_records * spr;
    let mut out = vec![0.0; keep.len() * n_samples];
    let offsets: Vec<usize> = signals
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.samples_per_record;
            Some(o)
        })
        .collect();
    for r in 0..n_records {
        let rec = &data[r * record_bytes..(r + 1) * record_bytes];
        for (ch, &i) in keep.iter().enumerate() {
            let sig = &signals[i];
            for k in 0..spr {
                let b = (offsets[i] + k) * 2;
                let d = i16::from_le_bytes([rec[b], rec[b + 1]]);
                out[ch * n_samples + r * spr + k] = sig.to_physical(d);
            }
        }
    }
    let labels = keep.iter().map(|&i| clean_label(&signals[i].label)).collect();
    Ok((labels, sfreq, out))
}

/// Parses EDF bytes, placing electrodes from the built-in 10-20 table.
pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    let (labels, sfreq, data) = decode(bytes)?;
    let montage = Montage::standard_1020(&labels)?;
    let n = labels.len();
    Recording::new(data, n, sfreq, labels, montage)
}

pub fn load_edf(path: impl AsRef<Path>) -> Result<Recording> {
    parse_edf(&std::fs::read(path)?)
}

/// Like [`load_edf`] but with caller-supplied electrode positions, matched by label.
pub fn load_edf_with_montage(path: impl AsRef<Path>, montage: &Montage) -> Result<Recording> {
    let (labels, sfreq, data) = decode(&std::fs::read(path)?)?;
    let mut positions = Vec::with_capacity(labels.len());
    for l in &labels {
        let i = montage
            .index_of(l)
            .ok_or_else(|| SignalError::Montage(format!("no position supplied for '{l}'")))?;
        positions.push(montage.positions()[i]);
    }
    let m = Montage::new(labels.clone(), positions)?;
    Recording::new(data, labels.len(), sfreq, labels, m)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub struct EdfSignal<'a> {
        pub label: &'a str,
        pub physical: (f64, f64),
        pub digital: (i32, i32),
        pub samples: Vec<i16>,
    }

    fn pad(s: &str, w: usize) -> Vec<u8> {
        let mut v = s.as_bytes().to_vec();
        v.resize(w, b' ');
        v
    }

    /// One-record-per-second EDF writer; `declared` overrides the signal count field.
    pub fn build_edf(signals: &[EdfSignal], spr: usize, declared: Option<usize>) -> Vec<u8> {
        let ns = declared.unwrap_or(signals.len());
        let n_records = signals[0].samples.len() / spr;
        let mut h = Vec::new();
        h.extend(pad("0", 8));
        h.extend(pad("X X X X", 80));
        h.extend(pad("Startdate X X X X", 80));
        h.extend(pad("01.01.26", 8));
        h.extend(pad("00.00.00", 8));
        h.extend(pad(&(256 + 256 * ns).to_string(), 8));
        h.extend(pad("", 44));
        h.extend(pad(&n_records.to_string(), 8));
        h.extend(pad("1", 8));
        h.extend(pad(&ns.to_string(), 4));
        let sigs: Vec<&EdfSignal> = (0..ns).map(|i| &signals[i.min(signals.len() - 1)]).collect();
        for s in &sigs { h.extend(pad(s.label, 16)); }
        for _ in &sigs { h.extend(pad("AgAgCl", 80)); }
        for _ in &sigs { h.extend(pad("uV", 8)); }
        for s in &sigs { h.extend(pad(&s.physical.0.to_string(), 8)); }
        for s in &sigs { h.extend(pad(&s.physical.1.to_string(), 8)); }
        for s in &sigs { h.extend(pad(&s.digital.0.to_string(), 8)); }
        for s in &sigs { h.extend(pad(&s.digital.1.to_string(), 8)); }
        for _ in &sigs { h.extend(pad("HP:0.1Hz", 80)); }
        for _ in &sigs { h.extend(pad(&spr.to_string(), 8)); }
        for _ in &sigs { h.extend(pad("", 32)); }
        for r in 0..n_records {
            for s in signals {
                for &d in &s.samples[r * spr..(r + 1) * spr] {
                    h.extend_from_slice(&d.to_le_bytes());
                }
            }
        }
        h
    }

    fn full_range(label: &str, samples: Vec<i16>) -> EdfSignal<'_> {
        EdfSignal { label, physical: (-100.0, 100.0), digital: (-32768, 32767), samples }
    }

    #[test]
    fn digital_zero_maps_to_formula() {
        let bytes = build_edf(&[full_range("EEG Cz-REF", vec![0, -32768, 32767, 0])], 4, None);
        let rec = parse_edf(&bytes).unwrap();
        assert_eq!(rec.channel_names(), &["Cz".to_string()]);
        assert_eq!(rec.sfreq(), 4.0);
        let expected = -100.0 + 32768.0 * 200.0 / 65535.0;
        assert!((rec.channel(0)[0] - expected).abs() < 1e-12);
        assert!((rec.channel(0)[0] - 0.0015).abs() < 1e-4);
        assert_eq!(rec.channel(0)[1], -100.0);
        assert_eq!(rec.channel(0)[2], 100.0);
    }

    #[test]
    fn missing_signal_data_is_parse_error() {
        let sigs = [full_range("Cz", vec![1, 2]), full_range("Pz", vec![3, 4])];
        let bytes = build_edf(&sigs, 2, Some(3));
        // header claims 3 signals; rebuild data for only 2
        let header_len = 256 + 3 * 256;
        let mut trimmed = bytes[..header_len].to_vec();
        for s in &sigs {
            for d in &s.samples {
                trimmed.extend_from_slice(&d.to_le_bytes());
            }
        }
        assert!(matches!(parse_edf(&trimmed), Err(SignalError::Parse(_))));
    }

    #[test]
    fn flat_calibration_rejected() {
        let s = EdfSignal { label: "Cz", physical: (5.0, 5.0), digital: (-10, 10), samples: vec![0, 0] };
        assert!(matches!(parse_edf(&build_edf(&[s], 2, None)), Err(SignalError::Calibration(_))));
    }

    #[test]
    fn non_numeric_field() {
        let mut bytes = build_edf(&[full_range("Cz", vec![0, 0])], 2, None);
        bytes[236..244].copy_from_slice(b"abc     ");
        assert!(matches!(parse_edf(&bytes), Err(SignalError::Parse(_))));
    }

    #[test]
    fn multi_record_layout() {
        let sigs = [full_range("Fp1", vec![0, 1, 2, 3]), full_range("Fp2", vec![10, 11, 12, 13])];
        let rec = parse_edf(&build_edf(&sigs, 2, None)).unwrap();
        let phys = |d: f64| -100.0 + (d + 32768.0) * 200.0 / 65535.0;
        assert_eq!(rec.n_samples(), 4);
        for k in 0..4 {
            assert!((rec.channel(1)[k] - phys(10.0 + k as f64)).abs() < 1e-12);
        }
    }
}
