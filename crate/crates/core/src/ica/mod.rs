//! Whitening, FastICA and Extended Infomax decompositions, component
//! activations and artifact removal by back-projection.
//!
//! All fits run on whitened data. The stored model keeps the whitener
//! (components × channels), its pseudo-inverse the dewhitener, and the square
//! unmixing matrix in whitened space, so the composite unmixing is
//! `unmixing × whitener` and the mixing matrix `dewhitener × unmixing⁻¹`.

mod fastica;
mod infomax;
mod sidecar;

pub use fastica::{fit_fastica, FastIcaParams};
pub use infomax::{fit_extended_infomax, InfomaxParams};
pub use sidecar::{model_from_sidecar, model_to_sidecar};

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::signal::Recording;

#[derive(Debug, Error)]
pub enum IcaError {
    #[error("rank error: requested {requested} components but covariance has rank {available}")]
    Rank { requested: usize, available: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("sidecar error: {0}")]
    Sidecar(String),
}

pub type Result<T> = std::result::Result<T, IcaError>;

/// Upper bound on the default component count.
pub const MAX_DEFAULT_COMPONENTS: usize = 40;
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcaMethod {
    Fastica,
    ExtendedInfomax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub whitener: DMatrix<f64>,
    pub dewhitener: DMatrix<f64>,
    pub unmixing: DMatrix<f64>,
    pub channel_means: Vec<f64>,
    pub method: IcaMethod,
    pub seed: u64,
    pub n_iterations_used: usize,
    pub converged: bool,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.whitener.ncols()
    }

    /// `unmixing × whitener`, components × channels.
    pub fn composite_unmixing(&self) -> DMatrix<f64> {
        &self.unmixing * &self.whitener
    }

    /// `dewhitener × unmixing⁻¹`, channels × components. Column `i` is the
    /// scalp pattern of component `i`.
    pub fn mixing(&self) -> DMatrix<f64> {
        let inv = self
            .unmixing
            .clone()
            .try_inverse()
            .expect("unmixing is full rank by construction");
        &self.dewhitener * inv
    }

    /// SHA-256 of the sidecar encoding.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(model_to_sidecar(self).as_bytes()))
    }
}

/// Component time courses, row-major components × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    data: Vec<f64>,
    n_components: usize,
    n_samples: usize,
    pub sfreq: f64,
}

impl Activations {
    pub fn from_matrix(m: &DMatrix<f64>, sfreq: f64) -> Self {
        let (k, n) = m.shape();
        let mut data = Vec::with_capacity(k * n);
        for r in 0..k {
            data.extend(m.row(r).iter());
        }
        Self { data, n_components: k, n_samples: n, sfreq }
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_components, self.n_samples, &self.data)
    }
}

pub(crate) fn recording_matrix(rec: &Recording) -> DMatrix<f64> {
    DMatrix::from_row_slice(rec.n_channels(), rec.n_samples(), rec.data())
}

pub(crate) fn center(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = x.ncols() as f64;
    let means: Vec<f64> = x.row_iter().map(|r| r.sum() / n).collect();
    let mut c = x.clone();
    for (mut row, m) in c.row_iter_mut().zip(&means) {
        row.add_scalar_mut(-m);
    }
    (c, means)
}

fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x * x.transpose() / x.ncols() as f64;
    // symmetrize away rounding asymmetry
    let ct = c.transpose();
    c = (c + ct) * 0.5;
    c
}

/// Eigenvalues (descending) and matching eigenvectors of a covariance matrix.
fn sorted_eigen(cov: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(eig.eigenvectors.nrows(), order.len());
    for (j, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // fix the eigenvector sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(j, &col);
    }
    (vals, vecs)
}

fn numerical_rank(vals: &[f64]) -> usize {
    let max = vals.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&v| v > EIGEN_FLOOR * max).count()
}

/// `min(n_channels, numerical rank, 40)` for a recording.
pub fn default_n_components(rec: &Recording) -> usize {
    let (c, _) = center(&recording_matrix(rec));
    let (vals, _) = sorted_eigen(covariance(&c));
    numerical_rank(&vals).min(rec.n_channels()).min(MAX_DEFAULT_COMPONENTS)
}

#[derive(Debug, Clone)]
pub struct Whitening {
    pub whitened: DMatrix<f64>,
    pub whitener: DMatrix<f64>,
    pub dewhitener: DMatrix<f64>,
}

/// PCA whitening of row-centred data (channels × samples).
pub fn whiten(data: &DMatrix<f64>, n_components: usize) -> Result<Whitening> {
    let (c, n) = data.shape();
    if n <= c {
        return Err(IcaError::Shape(format!("need more samples ({n}) than channels ({c})")));
    }
    if n_components == 0 || n_components > c {
        return Err(IcaError::Parameter(format!(
            "n_components must be in 1..={c}, got {n_components}"
        )));
    }
    let (vals, vecs) = sorted_eigen(covariance(data));
    let rank = numerical_rank(&vals);
    if rank < n_components {
        return Err(IcaError::Rank { requested: n_components, available: rank });
    }
    let mut whitener = DMatrix::zeros(n_components, c);
    let mut dewhitener = DMatrix::zeros(c, n_components);
    for k in 0..n_components {
        let s = vals[k].sqrt();
        let v = vecs.column(k);
        whitener.set_row(k, &(v.transpose() / s));
        dewhitener.set_column(k, &(v * s));
    }
    let whitened = &whitener * data;
    Ok(Whitening { whitened, whitener, dewhitener })
}

/// Random orthogonal matrix from a seeded generator (QR of a Gaussian matrix).
pub(crate) fn random_orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `(W Wᵀ)^{-1/2} W`.
pub(crate) fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let d = eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose() * w
}

pub(crate) struct Prepared {
    pub means: Vec<f64>,
    pub white: Whitening,
}

pub(crate) fn prepare(rec: &Recording, n_components: Option<usize>) -> Result<Prepared> {
    let x = recording_matrix(rec);
    let (c, means) = center(&x);
    let k = match n_components {
        Some(k) => k,
        None => {
            let (vals, _) = sorted_eigen(covariance(&c));
            numerical_rank(&vals).min(rec.n_channels()).min(MAX_DEFAULT_COMPONENTS)
        }
    };
    if k > rec.n_channels() {
        return Err(IcaError::Parameter(format!(
            "n_components {k} exceeds channel count {}",
            rec.n_channels()
        )));
    }
    if rec.n_samples() < 20 * rec.n_channels() {
        log::warn!(
            "only {} samples for {} channels; ICA estimates may be unreliable",
            rec.n_samples(),
            rec.n_channels()
        );
    }
    let white = whiten(&c, k)?;
    Ok(Prepared { means, white })
}

/// Orders components by back-projected variance (descending) and fixes each
/// sign so the largest-magnitude mixing weight is positive.
pub(crate) fn canonicalize(unmixing: DMatrix<f64>, dewhitener: &DMatrix<f64>) -> DMatrix<f64> {
    let k = unmixing.nrows();
    let mixing = dewhitener * unmixing.clone().try_inverse().expect("full rank unmixing");
    let power: Vec<f64> = (0..k).map(|j| mixing.column(j).norm_squared()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let mut out = DMatrix::zeros(k, unmixing.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let col = mixing.column(src);
        let sign = if col[col.iamax()] < 0.0 { -1.0 } else { 1.0 };
        out.set_row(dst, &(unmixing.row(src) * sign));
    }
    out
}

/// `S = unmixing × whitener × (X − means)`.
pub fn activations(model: &IcaModel, rec: &Recording) -> Result<Activations> {
    if rec.n_channels() != model.n_channels() {
        return Err(IcaError::Shape(format!(
            "model expects {} channels, recording has {}",
            model.n_channels(),
            rec.n_channels()
        )));
    }
    let mut x = recording_matrix(rec);
    for (mut row, m) in x.row_iter_mut().zip(&model.channel_means) {
        row.add_scalar_mut(-m);
    }
    Ok(Activations::from_matrix(&(model.composite_unmixing() * x), rec.sfreq()))
}

/// Sensor-space reconstruction `A × S + means`, shaped like `template`.
pub fn back_project(model: &IcaModel, sources: &Activations, template: &Recording) -> Result<Recording> {
    if sources.n_components() != model.n_components() || template.n_channels() != model.n_channels() {
        return Err(IcaError::Shape("component or channel count does not match the model".into()));
    }
    if sources.n_samples() != template.n_samples() {
        return Err(IcaError::Shape("sample count does not match the template recording".into()));
    }
    let mut x = model.mixing() * sources.to_matrix();
    for (mut row, m) in x.row_iter_mut().zip(&model.channel_means) {
        row.add_scalar_mut(*m);
    }
    let mut data = Vec::with_capacity(x.len());
    for r in x.row_iter() {
        data.extend(r.iter());
    }
    template
        .with_data(data)
        .map_err(|e| IcaError::Shape(e.to_string()))
}

/// Zeroes the rejected component rows and projects back to sensor space.
pub fn apply_rejection(model: &IcaModel, rec: &Recording, rejected: &BTreeSet<usize>) -> Result<Recording> {
    if let Some(&bad) = rejected.iter().find(|&&i| i >= model.n_components()) {
        return Err(IcaError::Parameter(format!(
            "component {bad} out of range (model has {})",
            model.n_components()
        )));
    }
    let mut s = activations(model, rec)?.to_matrix();
    for &i in rejected {
        s.row_mut(i).fill(0.0);
    }
    let mut out = back_project(model, &Activations::from_matrix(&s, rec.sfreq()), rec)?;
    let list: Vec<String> = rejected.iter().map(|i| i.to_string()).collect();
    out.meta.insert("rejected_components".into(), list.join(","));
    Ok(out)
}

/// Normalised Amari index of a square gain matrix `P = W·A`; 0 for a scaled
/// permutation, at most 1.
pub fn amari_index(p: &DMatrix<f64>) -> f64 {
    let k = p.nrows();
    if k < 2 {
        return 0.0;
    }
    let a = p.abs();
    let rows: f64 = a
        .row_iter()
        .map(|r| r.sum() / r.max() - 1.0)
        .sum();
    let cols: f64 = a
        .column_iter()
        .map(|c| c.sum() / c.max() - 1.0)
        .sum();
    (rows + cols) / (2.0 * k as f64 * (k as f64 - 1.0))
}
