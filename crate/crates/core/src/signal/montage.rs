use std::collections::HashMap;

use super::{Result, SignalError};

/// The 19 electrodes of the classic 10-20 system.
pub const STANDARD_1020_19: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz",
    "P4", "P8", "O1", "O2",
];

// Spherical (theta, phi) in degrees: theta is the signed polar angle from the
// vertex (negative on the left), phi the azimuth measured from the interaural
// axis. x = right, y = nasion, z = vertex.
const SPHERICAL_1020: &[(&str, f64, f64)] = &[
    ("Fp1", -92.0, -72.0),
    ("Fpz", 92.0, 90.0),
    ("Fp2", 92.0, 72.0),
    ("AF3", -74.0, -65.0),
    ("AF4", 74.0, 65.0),
    ("F7", -92.0, -36.0),
    ("F3", -60.0, -51.0),
    ("Fz", 46.0, 90.0),
    ("F4", 60.0, 51.0),
    ("F8", 92.0, 36.0),
    ("FC5", -72.0, -21.0),
    ("FC1", -32.0, -45.0),
    ("FC2", 32.0, 45.0),
    ("FC6", 72.0, 21.0),
    ("T7", -92.0, 0.0),
    ("T3", -92.0, 0.0),
    ("C3", -46.0, 0.0),
    ("Cz", 0.0, 0.0),
    ("C4", 46.0, 0.0),
    ("T8", 92.0, 0.0),
    ("T4", 92.0, 0.0),
    ("CP5", -72.0, 21.0),
    ("CP1", -32.0, 45.0),
    ("CP2", 32.0, -45.0),
    ("CP6", 72.0, -21.0),
    ("P7", -92.0, 36.0),
    ("T5", -92.0, 36.0),
    ("P3", -60.0, 51.0),
    ("Pz", 46.0, -90.0),
    ("P4", 60.0, -51.0),
    ("P8", 92.0, -36.0),
    ("T6", 92.0, -36.0),
    ("PO3", -74.0, 65.0),
    ("PO4", 74.0, -65.0),
    ("O1", -92.0, 72.0),
    ("Oz", 92.0, -90.0),
    ("O2", 92.0, -72.0),
];

/// Unit-sphere position of a standard 10-20 label (case-insensitive).
pub fn standard_1020_position(label: &str) -> Option<[f64; 3]> {
    let key = label.trim();
    SPHERICAL_1020
        .iter()
        .find(|(name, _, _)| name.eq_ignore_ascii_case(key))
        .map(|&(_, theta, phi)| {
            let (t, p) = (theta.to_radians(), phi.to_radians());
            [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
        })
}

/// Electrode positions on the unit sphere, head-centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    labels: Vec<String>,
    positions: Vec<[f64; 3]>,
    index: HashMap<String, usize>,
}

impl Montage {
    /// Positions are projected onto the unit sphere unless already within 1e-12 of it.
    pub fn new(labels: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if labels.len() != positions.len() {
            return Err(SignalError::Montage(format!(
                "{} labels but {} positions",
                labels.len(),
                positions.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(SignalError::Montage(format!("duplicate label '{label}'")));
            }
        }
        let positions = positions
            .into_iter()
            .zip(&labels)
            .map(|(p, label)| {
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if !norm.is_finite() || norm < 1e-9 {
                    return Err(SignalError::Montage(format!("degenerate position for '{label}'")));
                }
                if (norm - 1.0).abs() <= 1e-12 {
                    Ok(p)
                } else {
                    Ok([p[0] / norm, p[1] / norm, p[2] / norm])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, positions, index })
    }

    /// Looks every label up in the built-in 10-20 table.
    pub fn standard_1020<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut positions = Vec::with_capacity(labels.len());
        let mut unknown = Vec::new();
        for l in labels {
            match standard_1020_position(l.as_ref()) {
                Some(p) => positions.push(p),
                None => unknown.push(l.as_ref().to_string()),
            }
        }
        if !unknown.is_empty() {
            return Err(SignalError::Montage(format!(
                "labels not in the 10-20 table: {}",
                unknown.join(", ")
            )));
        }
        Self::new(labels.iter().map(|l| l.as_ref().to_string()).collect(), positions)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}
