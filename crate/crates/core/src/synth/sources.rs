use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::client::Label;
use crate::signal::{bandpass_design, standard_1020_position, Montage};

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    AlphaBrain,
    BlinkEye,
    EcgHeart,
    EmgMuscle,
    LineNoise,
    DeadChannelNoise,
}

impl SourceKind {
    pub const ALL: [SourceKind; 6] = [
        SourceKind::AlphaBrain,
        SourceKind::BlinkEye,
        SourceKind::EcgHeart,
        SourceKind::EmgMuscle,
        SourceKind::LineNoise,
        SourceKind::DeadChannelNoise,
    ];

    pub fn label(self) -> Label {
        match self {
            SourceKind::AlphaBrain => Label::Brain,
            SourceKind::BlinkEye => Label::Eye,
            SourceKind::EcgHeart => Label::Heart,
            SourceKind::EmgMuscle => Label::Muscle,
            SourceKind::LineNoise => Label::LineNoise,
            SourceKind::DeadChannelNoise => Label::ChannelNoise,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::AlphaBrain => "alpha_brain",
            SourceKind::BlinkEye => "blink_eye",
            SourceKind::EcgHeart => "ecg_heart",
            SourceKind::EmgMuscle => "emg_muscle",
            SourceKind::LineNoise => "line_noise",
            SourceKind::DeadChannelNoise => "dead_channel_noise",
        }
    }

    fn default_target(self) -> &'static str {
        match self {
            SourceKind::AlphaBrain => "Oz",
            SourceKind::BlinkEye => "Fpz",
            SourceKind::EcgHeart => LEFT_LATERAL,
            SourceKind::EmgMuscle => "T7",
            SourceKind::LineNoise => "Cz",
            SourceKind::DeadChannelNoise => "C3",
        }
    }
}

/// Region name for the broad cardiac field.
pub const LEFT_LATERAL: &str = "left_lateral";
/// Width of the Gaussian scalp bumps, radians.
pub const BUMP_SIGMA: f64 = 0.5;
const LATERAL_SIGMA: f64 = 1.2;
const QRS_WIDTH: f64 = 0.080;
/// Relative standard deviation of successive RR intervals.
pub const RR_VARIABILITY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Source RMS in microvolts before projection.
    pub amplitude_uv: f64,
    /// 10-20 label, or `left_lateral`. For dead channels the label must be
    /// in the montage.
    pub target: String,
    /// Alpha or line frequency, Hz.
    pub freq: f64,
    pub blink_rate: f64,
    pub blink_width: f64,
    pub rr_interval: f64,
    pub emg_band: (f64, f64),
}

impl SourceSpec {
    pub fn new(kind: SourceKind, amplitude_uv: f64) -> Self {
        Self {
            kind,
            amplitude_uv,
            target: kind.default_target().to_string(),
            freq: if kind == SourceKind::LineNoise { 60.0 } else { 10.0 },
            blink_rate: 0.25,
            blink_width: 0.3,
            rr_interval: 0.9,
            emg_band: (20.0, 100.0),
        }
    }

    pub fn at(mut self, target: &str) -> Self {
        self.target = target.to_string();
        self
    }

    pub fn with_freq(mut self, freq: f64) -> Self {
        self.freq = freq;
        self
    }

    pub(super) fn validate(&self, sfreq: f64) -> Result<()> {
        let nyq = sfreq / 2.0;
        let bad = |m: String| Err(SynthError::Parameter(m));
        if !(self.amplitude_uv > 0.0 && self.amplitude_uv.is_finite()) {
            return bad(format!("{} amplitude must be positive", self.kind.as_str()));
        }
        match self.kind {
            SourceKind::AlphaBrain | SourceKind::LineNoise if !(self.freq > 0.0 && self.freq < nyq) => {
                bad(format!("{} frequency {} Hz is not below Nyquist {nyq} Hz", self.kind.as_str(), self.freq))
            }
            SourceKind::EmgMuscle if !(self.emg_band.0 > 0.0 && self.emg_band.0 < self.emg_band.1 && self.emg_band.1 < nyq) => {
                bad(format!("EMG band {:?} must lie below Nyquist {nyq} Hz", self.emg_band))
            }
            SourceKind::BlinkEye if !(self.blink_rate > 0.0 && self.blink_width > 0.0) => bad("blink rate and width must be positive".into()),
            SourceKind::EcgHeart if !(self.rr_interval > QRS_WIDTH) => bad("RR interval must exceed the QRS width".into()),
            _ => Ok(()),
        }
    }
}

fn unit(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

fn bump(positions: &[[f64; 3]], centre: [f64; 3], sigma: f64) -> Vec<f64> {
    positions
        .iter()
        .map(|p| {
            let c = (p[0] * centre[0] + p[1] * centre[1] + p[2] * centre[2]).clamp(-1.0, 1.0);
            let ang = c.acos();
            (-ang * ang / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Scalp weights for one source, scaled to unit peak.
pub fn spatial_pattern(spec: &SourceSpec, montage: &Montage) -> Result<Vec<f64>> {
    let positions = montage.positions();
    let mut w = if spec.kind == SourceKind::DeadChannelNoise {
        let idx = montage
            .index_of(&spec.target)
            .ok_or_else(|| SynthError::Parameter(format!("dead channel {} is not in the montage", spec.target)))?;
        let mut w = vec![0.0; positions.len()];
        w[idx] = 1.0;
        w
    } else if spec.target == LEFT_LATERAL {
        bump(positions, unit([-0.8, 0.1, -0.5]), LATERAL_SIGMA)
    } else {
        let centre = standard_1020_position(&spec.target)
            .or_else(|| montage.index_of(&spec.target).map(|i| positions[i]))
            .ok_or_else(|| SynthError::Parameter(format!("unknown target {}", spec.target)))?;
        bump(positions, centre, BUMP_SIGMA)
    };
    let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(SynthError::Parameter(format!("{} pattern vanishes on this montage", spec.kind.as_str())));
    }
    w.iter_mut().for_each(|v| *v /= peak);
    Ok(w)
}

fn hann_bump(x: &mut [f64], centre: f64, width: f64, height: f64, sfreq: f64) {
    let half = width / 2.0;
    let lo = ((centre - half) * sfreq).ceil().max(0.0) as usize;
    let hi = (((centre + half) * sfreq).floor() as isize).min(x.len() as isize - 1);
    if hi < 0 {
        return;
    }
    for i in lo..=hi as usize {
        let t = i as f64 / sfreq - centre;
        x[i] += height * 0.5 * (1.0 + (PI * t / half).cos());
    }
}

fn triangle(x: &mut [f64], centre: f64, width: f64, height: f64, sfreq: f64) {
    let half = width / 2.0;
    let lo = ((centre - half) * sfreq).ceil().max(0.0) as usize;
    let hi = (((centre + half) * sfreq).floor() as isize).min(x.len() as isize - 1);
    if hi < 0 {
        return;
    }
    for i in lo..=hi as usize {
        let t = (i as f64 / sfreq - centre).abs();
        x[i] += height * (1.0 - t / half).max(0.0);
    }
}

/// Zero-mean waveform of `n` samples with RMS equal to the spec amplitude.
pub fn synthesize_source(spec: &SourceSpec, n: usize, sfreq: f64, seed: u64) -> Result<Vec<f64>> {
    spec.validate(sfreq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dur = n as f64 / sfreq;
    let mut x = vec![0.0; n];
    match spec.kind {
        SourceKind::AlphaBrain | SourceKind::LineNoise => {
            let phase = rng.random::<f64>() * 2.0 * PI;
            for (i, v) in x.iter_mut().enumerate() {
                *v = (2.0 * PI * spec.freq * i as f64 / sfreq + phase).sin();
            }
        }
        SourceKind::BlinkEye => {
            let mean_gap = 1.0 / spec.blink_rate;
            let mut t = rng.random::<f64>() * mean_gap;
            while t < dur {
                hann_bump(&mut x, t, spec.blink_width, 1.0, sfreq);
                t += mean_gap * rng.random_range(0.6..1.4);
            }
        }
        SourceKind::EcgHeart => {
            // Beat-to-beat variability keeps the QRS harmonics from
            // phase-locking with rhythms that sit on a multiple of 1/RR.
            let mut t = rng.random::<f64>() * spec.rr_interval;
            while t < dur + spec.rr_interval {
                triangle(&mut x, t, QRS_WIDTH, 1.0, sfreq);
                hann_bump(&mut x, t + 0.25, 0.16, 0.2, sfreq);
                let jitter: f64 = StandardNormal.sample(&mut rng);
                t += spec.rr_interval * (1.0 + RR_VARIABILITY * jitter.clamp(-3.0, 3.0));
            }
        }
        SourceKind::EmgMuscle => {
            let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let sos = bandpass_design(spec.emg_band.0, spec.emg_band.1, sfreq)
                .map_err(|e| SynthError::Parameter(e.to_string()))?;
            let band = sos.filtfilt(&noise);
            let mut env = vec![0.15; n];
            let mut t = rng.random::<f64>();
            while t < dur {
                let width = rng.random_range(0.3..1.0);
                hann_bump(&mut env, t + width / 2.0, width, rng.random_range(0.7..1.3), sfreq);
                t += width + rng.random_range(0.3..2.0);
            }
            for ((v, b), e) in x.iter_mut().zip(&band).zip(&env) {
                *v = b * e;
            }
        }
        SourceKind::DeadChannelNoise => {
            for v in x.iter_mut() {
                let u: f64 = rng.random::<f64>() - 0.5;
                *v = -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
            }
        }
    }
    let mean = x.iter().sum::<f64>() / n.max(1) as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms <= 0.0 {
        return Err(SynthError::Parameter(format!("{} source is empty for this duration", spec.kind.as_str())));
    }
    let scale = spec.amplitude_uv / rms;
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(x)
}
