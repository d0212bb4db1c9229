use super::{canonicalize, prepare, random_orthogonal, symmetric_decorrelation, IcaMethod, IcaModel, Result};
use crate::signal::Recording;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastIcaParams {
    /// `None` picks the numerical rank, capped at 40.
    pub n_components: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FastIcaParams {
    fn default() -> Self {
        Self { n_components: None, seed: 0, max_iter: 500, tol: 1e-6 }
    }
}

/// Symmetric (parallel) FastICA with the `tanh` contrast.
///
/// Convergence is declared when every row of the unmixing matrix changes
/// direction by less than `tol`, measured as `1 − |cos θ|`. Running out of
/// iterations is not an error: the model comes back with `converged = false`.
pub fn fit_fastica(rec: &Recording, params: &FastIcaParams) -> Result<IcaModel> {
    let prep = prepare(rec, params.n_components)?;
    let z = &prep.white.whitened;
    let (k, n) = z.shape();
    let zt = z.transpose();

    let mut w = random_orthogonal(k, params.seed);
    let mut converged = false;
    let mut iters = 0;
    for it in 1..=params.max_iter {
        iters = it;
        let mut g = &w * z;
        let mut g_prime_mean = vec![0.0; k];
        for (r, row_mean) in g_prime_mean.iter_mut().enumerate() {
            let mut acc = 0.0;
            for v in g.row_mut(r).iter_mut() {
                let t = v.tanh();
                *v = t;
                acc += 1.0 - t * t;
            }
            *row_mean = acc / n as f64;
        }
        let mut w_new = (&g * &zt) / n as f64;
        for r in 0..k {
            let scaled = w.row(r) * g_prime_mean[r];
            let mut row = w_new.row_mut(r);
            row -= scaled;
        }
        let w_new = symmetric_decorrelation(&w_new);
        let lim = (&w_new * w.transpose())
            .diagonal()
            .iter()
            .map(|d| (d.abs() - 1.0).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if lim < params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("FastICA did not converge within {} iterations", params.max_iter);
    }
    let unmixing = canonicalize(w, &prep.white.dewhitener);
    Ok(IcaModel {
        whitener: prep.white.whitener,
        dewhitener: prep.white.dewhitener,
        unmixing,
        channel_means: prep.means,
        method: IcaMethod::Fastica,
        seed: params.seed,
        n_iterations_used: iters,
        converged,
    })
}

