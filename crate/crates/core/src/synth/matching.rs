use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::client::Label;
use crate::ica::{activations, IcaError, IcaModel};
use crate::signal::Recording;

/// Components whose best assigned |correlation| falls below this are not
/// considered recovered and are labelled other_artifact.
pub const MATCH_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub component: usize,
    /// Assigned source, `None` when unassigned or below threshold.
    pub source: Option<usize>,
    /// Signed correlation with the assigned source (0 when unassigned).
    pub corr: f64,
    pub label: Label,
}

/// One-to-one assignment maximizing the summed |entry| of a components ×
/// sources matrix. Returns the assigned column per row.
pub fn assign_max_abs(corr: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (r, c) = corr.shape();
    if r == 0 || c == 0 {
        return vec![None; r];
    }
    let weight = |i: usize, j: usize| (corr[(i, j)].abs() * 1e9).round() as i64;
    if r <= c {
        let m = Matrix::from_fn(r, c, |(i, j)| weight(i, j));
        let (_, cols) = kuhn_munkres(&m);
        cols.into_iter().map(Some).collect()
    } else {
        let m = Matrix::from_fn(c, r, |(j, i)| weight(i, j));
        let (_, rows) = kuhn_munkres(&m);
        let mut out = vec![None; r];
        for (j, i) in rows.into_iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Correlation matrix, components × sources.
pub fn correlation_matrix(acts: &[&[f64]], sources: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(acts.len(), sources.len(), |i, j| pearson(acts[i], &sources[j]))
}

/// Labels every component of `model` by optimal assignment to the planted
/// sources of `truth`.
pub fn match_components(model: &IcaModel, rec: &Recording, truth: &GroundTruth) -> Result<Vec<ComponentMatch>, IcaError> {
    let acts = activations(model, rec)?;
    if truth.sources.iter().any(|s| s.len() != acts.n_samples()) {
        return Err(IcaError::Shape("ground-truth sources and recording differ in length".into()));
    }
    let rows: Vec<&[f64]> = (0..acts.n_components()).map(|i| acts.row(i)).collect();
    let corr = correlation_matrix(&rows, &truth.sources);
    Ok(assign_max_abs(&corr)
        .into_iter()
        .enumerate()
        .map(|(i, j)| match j {
            Some(j) if corr[(i, j)].abs() >= MATCH_THRESHOLD => ComponentMatch {
                component: i,
                source: Some(j),
                corr: corr[(i, j)],
                label: truth.kinds[j].label(),
            },
            _ => ComponentMatch { component: i, source: None, corr: j.map_or(0.0, |j| corr[(i, j)]), label: Label::OtherArtifact },
        })
        .collect())
}
