//! Butterworth band-pass and IIR notch filters in second-order sections,
//! applied forward and backward for zero phase.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::{Recording, Result, SignalError};

/// Butterworth order for each band edge (one pass).
pub const BUTTER_ORDER: usize = 6;

/// -3 dB width of each line-noise notch, one pass.
pub const NOTCH_BANDWIDTH_HZ: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator without the leading 1.
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state for a unit step already at steady state.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * y;
        let z1 = self.b[1] - self.a[0] * y + z2;
        [z1, z2]
    }
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn then(mut self, other: Sos) -> Sos {
        self.sections.extend(other.sections);
        self
    }

    /// One-pass magnitude response at `freq`.
    pub fn magnitude(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / fs;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
                let den = 1.0 + s.a[0] * z1 + s.a[1] * z2;
                (num / den).norm()
            })
            .product()
    }

    /// Single forward pass with initial state scaled to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let mut gain = 1.0;
        for s in &self.sections {
            let st = s.step_state();
            let (mut z1, mut z2) = (st[0] * x0 * gain, st[1] * x0 * gain);
            gain *= s.dc_gain();
            for v in x.iter_mut() {
                let xin = *v;
                let y = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * y + z2;
                z2 = s.b[2] * xin - s.a[1] * y;
                *v = y;
            }
        }
    }

    /// Zero-phase filtering with odd reflection padding of `3 × order` samples.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        filtfilt(self, x)
    }
}

pub fn filtfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 || sos.sections.is_empty() {
        return x.to_vec();
    }
    let pad = (3 * sos.order()).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    sos.run(&mut ext);
    ext.reverse();
    sos.run(&mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    (2.0 * fs + s) / (2.0 * fs - s)
}

fn prewarp(fc: f64, fs: f64) -> f64 {
    2.0 * fs * (std::f64::consts::PI * fc / fs).tan()
}

fn butterworth(order: usize, fc: f64, fs: f64, highpass: bool) -> Sos {
    let wc = prewarp(fc, fs);
    let mut sections = Vec::new();
    for k in 0..order / 2 {
        let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        let s = if highpass { wc / proto } else { proto * wc };
        let z = bilinear(s, fs);
        let a = [-2.0 * z.re, z.norm_sqr()];
        let (b, g) = if highpass {
            ([1.0, -2.0, 1.0], (1.0 - a[0] + a[1]) / 4.0)
        } else {
            ([1.0, 2.0, 1.0], (1.0 + a[0] + a[1]) / 4.0)
        };
        sections.push(Biquad { b: b.map(|v| v * g), a });
    }
    if order % 2 == 1 {
        let z = bilinear(Complex64::new(-wc, 0.0), fs).re;
        let (b, g) = if highpass { ([1.0, -1.0, 0.0], (1.0 + z) / 2.0) } else { ([1.0, 1.0, 0.0], (1.0 - z) / 2.0) };
        sections.push(Biquad { b: b.map(|v| v * g), a: [-z, 0.0] });
    }
    Sos { sections }
}

pub fn butterworth_lowpass(order: usize, fc: f64, fs: f64) -> Sos {
    butterworth(order, fc, fs, false)
}

pub fn butterworth_highpass(order: usize, fc: f64, fs: f64) -> Sos {
    butterworth(order, fc, fs, true)
}

/// Second-order IIR notch at `f0` with quality factor `q`.
pub fn notch_section(f0: f64, q: f64, fs: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let beta = (w0 / q / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Biquad {
        b: [gain, -2.0 * gain * c, gain],
        a: [-2.0 * gain * c, 2.0 * gain - 1.0],
    }
}

fn map_channels(rec: &Recording, sos: &Sos) -> Result<Recording> {
    let n = rec.n_samples();
    let data: Vec<f64> = rec
        .data()
        .par_chunks(n.max(1))
        .flat_map_iter(|ch| sos.filtfilt(ch))
        .collect();
    rec.with_data(data)
}

pub fn bandpass_design(lo: f64, hi: f64, fs: f64) -> Result<Sos> {
    if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(SignalError::Parameter(format!(
            "band edges must satisfy 0 < lo < hi < sfreq/2 (got {lo}, {hi} at {fs} Hz)"
        )));
    }
    Ok(butterworth_highpass(BUTTER_ORDER, lo, fs).then(butterworth_lowpass(BUTTER_ORDER, hi, fs)))
}

pub fn bandpass_filter(rec: &Recording, lo: f64, hi: f64) -> Result<Recording> {
    let sos = bandpass_design(lo, hi, rec.sfreq())?;
    map_channels(rec, &sos)
}

pub fn notch_design(line_freq: f64, n_harmonics: usize, fs: f64) -> Result<Sos> {
    if n_harmonics > 0 && !(line_freq > 0.0 && line_freq * (n_harmonics as f64) < fs / 2.0) {
        return Err(SignalError::Parameter(format!(
            "harmonic {} x {line_freq} Hz is not below Nyquist ({} Hz)",
            n_harmonics,
            fs / 2.0
        )));
    }
    let sections = (1..=n_harmonics)
        .map(|h| {
            let f = line_freq * h as f64;
            notch_section(f, f / NOTCH_BANDWIDTH_HZ, fs)
        })
        .collect();
    Ok(Sos { sections })
}

pub fn notch_filter(rec: &Recording, line_freq: f64, n_harmonics: usize) -> Result<Recording> {
    let sos = notch_design(line_freq, n_harmonics, rec.sfreq())?;
    if sos.sections.is_empty() {
        return Ok(rec.clone());
    }
    map_channels(rec, &sos)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::recording;
    use super::*;
    use std::f64::consts::PI;

    /// Independent evaluation of |H(e^jw)| straight from the coefficients.
    fn oracle_gain(sos: &Sos, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        sos.sections
            .iter()
            .map(|s| {
                let (mut nr, mut ni, mut dr, mut di) = (0.0, 0.0, 0.0, 0.0);
                let a = [1.0, s.a[0], s.a[1]];
                for k in 0..3 {
                    let (c, sn) = ((w * k as f64).cos(), -(w * k as f64).sin());
                    nr += s.b[k] * c;
                    ni += s.b[k] * sn;
                    dr += a[k] * c;
                    di += a[k] * sn;
                }
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }

    fn sine(f: f64, fs: f64, secs: f64) -> Vec<f64> {
        (0..(fs * secs) as usize).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    /// Amplitude of the `f` Hz component away from the edges, by projection
    /// onto sine and cosine over whole cycles.
    fn mid_amplitude(x: &[f64], f: f64, fs: f64) -> f64 {
        let skip = (2.0 * fs) as usize;
        let body = &x[skip..x.len() - skip];
        let n = body.len() as f64;
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in body.iter().enumerate() {
            let ph = 2.0 * PI * f * (i + skip) as f64 / fs;
            s += v * ph.sin();
            c += v * ph.cos();
        }
        2.0 * (s * s + c * c).sqrt() / n
    }

    #[test]
    fn passband_50hz_oracle_and_filtered() {
        let fs = 500.0;
        let sos = bandpass_design(1.0, 80.0, fs).unwrap();
        let two_pass = oracle_gain(&sos, 50.0, fs).powi(2);
        assert!((0.99..=1.01).contains(&two_pass), "{two_pass}");
        let y = filtfilt(&sos, &sine(50.0, fs, 10.0));
        let amp = mid_amplitude(&y, 50.0, fs);
        assert!((0.99..=1.01).contains(&amp), "{amp}");
        assert!((amp - two_pass).abs() < 2e-3);
    }

    #[test]
    fn dc_removed() {
        let rec = recording(vec![vec![5.0; 5000]], 500.0);
        let y = bandpass_filter(&rec, 1.0, 80.0).unwrap();
        let max = y.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 5e-3, "{max}");
    }

    #[test]
    fn slow_drift_attenuated() {
        let fs = 500.0;
        let sos = bandpass_design(1.0, 80.0, fs).unwrap();
        let db = 20.0 * oracle_gain(&sos, 0.1, fs).powi(2).log10();
        assert!(db <= -20.0, "{db}");
        let y = filtfilt(&sos, &sine(0.1, fs, 60.0));
        let amp = y[10000..20000].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp <= 0.1, "{amp}");
    }

    #[test]
    fn bad_band_edges() {
        let rec = recording(vec![vec![0.0; 100]], 100.0);
        assert!(bandpass_filter(&rec, 10.0, 5.0).is_err());
        assert!(bandpass_filter(&rec, 0.0, 5.0).is_err());
        assert!(bandpass_filter(&rec, 1.0, 50.0).is_err());
    }

    #[test]
    fn notch_removes_line() {
        let fs = 500.0;
        let sos = notch_design(60.0, 1, fs).unwrap();
        assert!(oracle_gain(&sos, 60.0, fs).powi(2) < 0.032);
        let y = filtfilt(&sos, &sine(60.0, fs, 20.0));
        let amp = y[4000..6000].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(amp <= 0.032, "{amp}");
    }

    #[test]
    fn notch_spares_alpha() {
        let fs = 500.0;
        let sos = notch_design(60.0, 1, fs).unwrap();
        let y = filtfilt(&sos, &sine(10.0, fs, 10.0));
        let amp = mid_amplitude(&y, 10.0, fs);
        assert!((0.98..=1.02).contains(&amp), "{amp}");
    }

    #[test]
    fn notch_harmonics_and_ripple() {
        let fs = 1000.0;
        let sos = notch_design(60.0, 3, fs).unwrap();
        for h in 1..=3 {
            let g = oracle_gain(&sos, 60.0 * h as f64, fs).powi(2);
            assert!(20.0 * g.log10() <= -30.0);
        }
        let mut f = 0.5;
        while f < 499.0 {
            let near = (1..=3).any(|h| (f - 60.0 * h as f64).abs() <= 2.0);
            if !near {
                let db = 20.0 * oracle_gain(&sos, f, fs).powi(2).log10();
                assert!(db.abs() <= 0.5, "{f} Hz: {db} dB");
            }
            f += 0.25;
        }
    }

    #[test]
    fn zero_harmonics_is_identity() {
        let rec = recording(vec![vec![1.0, 2.0, -3.0]], 100.0);
        assert_eq!(notch_filter(&rec, 60.0, 0).unwrap(), rec);
    }

    #[test]
    fn harmonic_above_nyquist() {
        let rec = recording(vec![vec![0.0; 100]], 250.0);
        assert!(matches!(notch_filter(&rec, 60.0, 3), Err(SignalError::Parameter(_))));
    }

    #[test]
    fn zero_phase_lag() {
        let fs = 250.0;
        let x = sine(10.0, fs, 8.0);
        let y = bandpass_design(1.0, 80.0, fs).unwrap().filtfilt(&x);
        let best = (-10i64..=10)
            .max_by(|&a, &b| {
                let c = |lag: i64| -> f64 {
                    (500..1500).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
                };
                c(a).partial_cmp(&c(b)).unwrap()
            })
            .unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn magnitude_matches_oracle() {
        let sos = bandpass_design(1.0, 40.0, 250.0).unwrap();
        for f in [0.5, 1.0, 10.0, 40.0, 100.0] {
            assert!((sos.magnitude(f, 250.0) - oracle_gain(&sos, f, 250.0)).abs() < 1e-12);
        }
    }
}
