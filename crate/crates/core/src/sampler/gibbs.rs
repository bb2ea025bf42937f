use rand::Rng;

use super::{sigmoid, RbmParameters, SampleSet, Sampler};
use crate::{seed, Result};

pub const DEFAULT_BURN_IN: usize = 100;

/// Block Gibbs chain from a random start. Each sweep draws
/// `h ~ P(h | v)` then `v ~ P(v | h)`; the first `n_burn_in` sweeps are
/// discarded and one `(v, h)` pair is recorded per sweep after that.
pub fn gibbs_sample(
    params: &RbmParameters,
    n_samples: usize,
    n_burn_in: usize,
    seed: u64,
) -> Result<SampleSet> {
    params.validate()?;
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    let mut rng = seed::rng(seed);
    let mut v: Vec<u8> = (0..nv).map(|_| rng.random_range(0..=1u8)).collect();
    let mut h = vec![0u8; nh];
    let mut configurations = Vec::with_capacity(n_samples);

    for sweep in 0..n_burn_in + n_samples {
        for (j, hj) in h.iter_mut().enumerate() {
            let field = params.hidden_bias[j]
                + v.iter()
                    .enumerate()
                    .filter(|(_, &vi)| vi == 1)
                    .map(|(i, _)| params.weights[[i, j]])
                    .sum::<f64>();
            *hj = (rng.random::<f64>() < sigmoid(field)) as u8;
        }
        for (i, vi) in v.iter_mut().enumerate() {
            let row = params.weights.row(i);
            let field = params.visible_bias[i]
                + h.iter()
                    .zip(row.iter())
                    .filter(|(&hj, _)| hj == 1)
                    .map(|(_, w)| w)
                    .sum::<f64>();
            *vi = (rng.random::<f64>() < sigmoid(field)) as u8;
        }
        if sweep >= n_burn_in {
            configurations.push((v.clone(), h.clone()));
        }
    }
    Ok(SampleSet::uniform(params, configurations))
}

#[derive(Debug, Clone, Copy)]
pub struct GibbsSampler {
    pub burn_in: usize,
}

impl Default for GibbsSampler {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

impl Sampler for GibbsSampler {
    fn sample(&self, params: &RbmParameters, n_samples: usize, seed: u64) -> Result<SampleSet> {
        gibbs_sample(params, n_samples, self.burn_in, seed)
    }

    fn name(&self) -> &'static str {
        "gibbs"
    }
}
