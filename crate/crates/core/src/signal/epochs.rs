use super::{Recording, Result, SignalError};

/// Fixed-length, non-overlapping epochs; shape n_epochs × n_channels × samples_per_epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Epochs {
    data: Vec<f64>,
    n_epochs: usize,
    n_channels: usize,
    samples_per_epoch: usize,
    epoch_length: f64,
    sfreq: f64,
}

impl Epochs {
    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn samples_per_epoch(&self) -> usize {
        self.samples_per_epoch
    }

    pub fn epoch_length(&self) -> f64 {
        self.epoch_length
    }

    pub fn sfreq(&self) -> f64 {
        self.sfreq
    }

    pub fn get(&self, epoch: usize, channel: usize) -> &[f64] {
        let start = (epoch * self.n_channels + channel) * self.samples_per_epoch;
        &self.data[start..start + self.samples_per_epoch]
    }
}

/// Samples per epoch is `floor(epoch_length × sfreq)`; the trailing remainder is dropped.
pub fn samples_per_epoch(epoch_length: f64, sfreq: f64) -> usize {
    // guard against 2.0 * 250.0 landing a hair under an integer
    (epoch_length * sfreq + 1e-9).floor() as usize
}

pub fn make_epochs(rec: &Recording, epoch_length: f64) -> Result<Epochs> {
    let spe = samples_per_epoch(epoch_length, rec.sfreq());
    if spe < 2 {
        return Err(SignalError::Parameter(format!(
            "epoch of {epoch_length} s spans fewer than 2 samples"
        )));
    }
    let n_epochs = rec.n_samples() / spe;
    if n_epochs == 0 {
        return Err(SignalError::Parameter(format!(
            "epoch length {epoch_length} s exceeds recording duration {} s",
            rec.duration()
        )));
    }
    let mut data = Vec::with_capacity(n_epochs * rec.n_channels() * spe);
    for e in 0..n_epochs {
        for ch in rec.rows() {
            data.extend_from_slice(&ch[e * spe..(e + 1) * spe]);
        }
    }
    Ok(Epochs {
        data,
        n_epochs,
        n_channels: rec.n_channels(),
        samples_per_epoch: spe,
        epoch_length,
        sfreq: rec.sfreq(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::recording;
    use super::*;

    fn rec(secs: f64) -> Recording {
        let n = (secs * 100.0).round() as usize;
        recording(vec![(0..n).map(|i| i as f64).collect(), vec![0.0; n]], 100.0)
    }

    #[test]
    fn exact_division() {
        let ep = make_epochs(&rec(10.0), 2.0).unwrap();
        assert_eq!(ep.n_epochs(), 5);
        assert_eq!(ep.samples_per_epoch(), 200);
        assert_eq!(ep.get(1, 0)[0], 200.0);
    }

    #[test]
    fn remainder_dropped() {
        let ep = make_epochs(&rec(10.9), 2.0).unwrap();
        assert_eq!(ep.n_epochs(), 5);
        assert_eq!(ep.get(4, 0).last().copied(), Some(999.0));
    }

    #[test]
    fn too_long() {
        assert!(matches!(make_epochs(&rec(1.0), 2.0), Err(SignalError::Parameter(_))));
    }
}
