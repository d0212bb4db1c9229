//! JSON sidecar for fitted models: matrices as base64 f64 LE, row-major.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{IcaError, IcaMethod, IcaModel, Result};

#[derive(Serialize, Deserialize)]
struct EncodedMatrix {
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    method: IcaMethod,
    seed: u64,
    n_iterations_used: usize,
    converged: bool,
    n_components: usize,
    n_channels: usize,
    channel_means: String,
    whitener: EncodedMatrix,
    dewhitener: EncodedMatrix,
    unmixing: EncodedMatrix,
}

const FORMAT: &str = "eegvl-ica-model/1";

fn encode_f64s(values: impl Iterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    B64.encode(bytes)
}

fn decode_f64s(s: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(s).map_err(|e| IcaError::Sidecar(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(IcaError::Sidecar("matrix payload is not a multiple of 8 bytes".into()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn encode(m: &DMatrix<f64>) -> EncodedMatrix {
    EncodedMatrix {
        rows: m.nrows(),
        cols: m.ncols(),
        data: encode_f64s(m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>())),
    }
}

fn decode(e: &EncodedMatrix, name: &str) -> Result<DMatrix<f64>> {
    let v = decode_f64s(&e.data)?;
    if v.len() != e.rows * e.cols {
        return Err(IcaError::Sidecar(format!(
            "{name}: {} values for a {}x{} matrix",
            v.len(),
            e.rows,
            e.cols
        )));
    }
    Ok(DMatrix::from_row_slice(e.rows, e.cols, &v))
}

pub fn model_to_sidecar(model: &IcaModel) -> String {
    let doc = Sidecar {
        format: FORMAT.into(),
        method: model.method,
        seed: model.seed,
        n_iterations_used: model.n_iterations_used,
        converged: model.converged,
        n_components: model.n_components(),
        n_channels: model.n_channels(),
        channel_means: encode_f64s(model.channel_means.iter().copied()),
        whitener: encode(&model.whitener),
        dewhitener: encode(&model.dewhitener),
        unmixing: encode(&model.unmixing),
    };
    serde_json::to_string_pretty(&doc).expect("sidecar serializes")
}

pub fn model_from_sidecar(text: &str) -> Result<IcaModel> {
    let doc: Sidecar = serde_json::from_str(text).map_err(|e| IcaError::Sidecar(e.to_string()))?;
    if doc.format != FORMAT {
        return Err(IcaError::Sidecar(format!("unsupported sidecar format '{}'", doc.format)));
    }
    let model = IcaModel {
        whitener: decode(&doc.whitener, "whitener")?,
        dewhitener: decode(&doc.dewhitener, "dewhitener")?,
        unmixing: decode(&doc.unmixing, "unmixing")?,
        channel_means: decode_f64s(&doc.channel_means)?,
        method: doc.method,
        seed: doc.seed,
        n_iterations_used: doc.n_iterations_used,
        converged: doc.converged,
    };
    let (k, c) = (doc.n_components, doc.n_channels);
    if model.whitener.shape() != (k, c)
        || model.dewhitener.shape() != (c, k)
        || model.unmixing.shape() != (k, k)
        || model.channel_means.len() != c
    {
        return Err(IcaError::Sidecar("matrix shapes disagree with declared sizes".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let model = IcaModel {
            whitener: DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 1.0 / 3.0, -4.0, 5e-300, 6.0]),
            dewhitener: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            unmixing: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            channel_means: vec![1.5, -2.5, std::f64::consts::PI],
            method: IcaMethod::ExtendedInfomax,
            seed: 42,
            n_iterations_used: 17,
            converged: true,
        };
        let text = model_to_sidecar(&model);
        let back = model_from_sidecar(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_sidecar(&back), text);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = r#"{"format":"eegvl-ica-model/1","method":"fastica","seed":0,"n_iterations_used":0,"converged":true,"n_components":1,"n_channels":1,"channel_means":"","whitener":{"rows":1,"cols":1,"data":""},"dewhitener":{"rows":1,"cols":1,"data":""},"unmixing":{"rows":1,"cols":1,"data":""}}"#;
        assert!(model_from_sidecar(text).is_err());
    }
}
