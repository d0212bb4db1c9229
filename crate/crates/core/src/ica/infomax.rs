use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{canonicalize, prepare, random_orthogonal, symmetric_decorrelation, IcaError, IcaMethod, IcaModel, Result};
use crate::signal::Recording;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfomaxParams {
    pub n_components: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
    /// Initial learning rate; `None` uses `0.01 / ln(n_channels)`.
    pub lrate: Option<f64>,
    /// Stop once the squared weight change of a full pass drops below this.
    pub tol: f64,
}

impl Default for InfomaxParams {
    fn default() -> Self {
        Self { n_components: None, seed: 0, max_iter: 512, lrate: None, tol: 1e-7 }
    }
}

const ANNEAL_ANGLE_DEG: f64 = 60.0;
const ANNEAL_STEP: f64 = 0.9;
const MAX_WEIGHT: f64 = 1e9;
const MAX_RESTARTS: usize = 3;
const KURTOSIS_WINDOW: f64 = 3000.0;
const MIN_LRATE: f64 = 1e-12;

struct Outcome {
    weights: DMatrix<f64>,
    steps: usize,
    converged: bool,
}

/// Extended Infomax (natural-gradient) with per-component kurtosis signs.
///
/// Each block applies `ΔW = lrate·(B·I − K·tanh(u)·uᵀ − u·uᵀ)·W` where `K` holds
/// +1 for super-Gaussian and −1 for sub-Gaussian components. Kurtosis signs
/// come from exponentially weighted second and fourth moments with an
/// effective window of 3000 samples, refreshed every block. The learning rate
/// is annealed by 0.9 whenever successive weight changes turn by more than
/// 60 degrees. If weights blow up the fit restarts at half the rate, at most
/// three times.
pub fn fit_extended_infomax(rec: &Recording, params: &InfomaxParams) -> Result<IcaModel> {
    let prep = prepare(rec, params.n_components)?;
    let z = &prep.white.whitened;
    let n_ch = rec.n_channels().max(3) as f64;
    let mut lrate = params.lrate.unwrap_or(0.01 / n_ch.ln());
    if !(lrate > 0.0 && lrate.is_finite()) {
        return Err(IcaError::Parameter(format!("learning rate must be positive, got {lrate}")));
    }

    let mut attempt = 0;
    let outcome = loop {
        match run(z, params, lrate) {
            Some(o) => break o,
            None if attempt < MAX_RESTARTS => {
                attempt += 1;
                lrate *= 0.5;
                log::warn!("infomax weights diverged; restarting with lrate {lrate:e}");
            }
            None => {
                return Err(IcaError::Divergence(format!(
                    "weights exceeded {MAX_WEIGHT:e} after {MAX_RESTARTS} restarts"
                )))
            }
        }
    };
    if !outcome.converged {
        log::warn!("extended infomax did not converge within {} steps", params.max_iter);
    }
    let w = symmetric_decorrelation(&outcome.weights);
    let unmixing = canonicalize(w, &prep.white.dewhitener);
    Ok(IcaModel {
        whitener: prep.white.whitener,
        dewhitener: prep.white.dewhitener,
        unmixing,
        channel_means: prep.means,
        method: IcaMethod::ExtendedInfomax,
        seed: params.seed,
        n_iterations_used: outcome.steps,
        converged: outcome.converged,
    })
}

fn run(z: &DMatrix<f64>, params: &InfomaxParams, mut lrate: f64) -> Option<Outcome> {
    let (k, n) = z.shape();
    let block = (((n as f64) / 3.0).sqrt().floor() as usize).clamp(2, n);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w = random_orthogonal(k, params.seed);
    let mut order: Vec<usize> = (0..n).collect();

    // running moments for the kurtosis sign
    let decay = (-(block as f64) / KURTOSIS_WINDOW).exp();
    let mut m2 = vec![1.0; k];
    let mut m4 = vec![3.0; k];
    let mut signs = vec![1.0; k];

    let mut old_w = w.clone();
    let mut old_delta: Option<DMatrix<f64>> = None;
    let mut xb = DMatrix::zeros(k, block);

    for step in 1..=params.max_iter {
        order.shuffle(&mut rng);
        for chunk in order.chunks_exact(block) {
            for (j, &col) in chunk.iter().enumerate() {
                xb.set_column(j, &z.column(col));
            }
            let u = &w * &xb;
            let y = u.map(f64::tanh);
            for r in 0..k {
                let (mut s2, mut s4) = (0.0, 0.0);
                for v in u.row(r).iter() {
                    let v2 = v * v;
                    s2 += v2;
                    s4 += v2 * v2;
                }
                m2[r] = decay * m2[r] + (1.0 - decay) * s2 / block as f64;
                m4[r] = decay * m4[r] + (1.0 - decay) * s4 / block as f64;
                signs[r] = if m4[r] / (m2[r] * m2[r]) - 3.0 >= 0.0 { 1.0 } else { -1.0 };
            }
            let mut ky = y;
            for r in 0..k {
                ky.row_mut(r).scale_mut(signs[r]);
            }
            let ut = u.transpose();
            let mut grad = -(&ky * &ut) - &u * &ut;
            for d in 0..k {
                grad[(d, d)] += block as f64;
            }
            w += lrate * grad * &w;
            if !w.iter().all(|v| v.is_finite()) || w.abs().max() > MAX_WEIGHT {
                return None;
            }
        }

        let delta = &w - &old_w;
        let change = delta.norm_squared();
        if let Some(prev) = &old_delta {
            let denom = (change * prev.norm_squared()).sqrt();
            if denom > 0.0 {
                let cos = (delta.dot(prev) / denom).clamp(-1.0, 1.0);
                if cos.acos().to_degrees() > ANNEAL_ANGLE_DEG {
                    lrate *= ANNEAL_STEP;
                }
            }
        }
        if step > 2 && change < params.tol {
            return Some(Outcome { weights: w, steps: step, converged: true });
        }
        if lrate < MIN_LRATE {
            return Some(Outcome { weights: w, steps: step, converged: false });
        }
        old_w = w.clone();
        old_delta = Some(delta);
    }
    Some(Outcome { weights: w, steps: params.max_iter, converged: false })
}
