use super::{decode_state, energy_unchecked, RbmParameters, SampleSet, Sampler};
use crate::{Error, Result};

/// Largest `n_visible + n_hidden` accepted by exhaustive enumeration.
pub const MAX_EXACT_UNITS: usize = 20;

/// Boltzmann probabilities of every joint state, indexed by
/// [`state_code`](super::state_code).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub energies: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub log_partition: f64,
}

impl ProbabilityTable {
    pub fn state(&self, code: usize) -> (Vec<u8>, Vec<u8>) {
        decode_state(code as u64, self.n_visible, self.n_hidden)
    }

    /// Code of the lowest-energy state (first one on ties).
    pub fn ground_state(&self) -> usize {
        self.energies
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, be), (i, &e)| {
                if e < be {
                    (i, e)
                } else {
                    (bi, be)
                }
            })
            .0
    }

    /// Marginal probability of every visible configuration, indexed by the
    /// visible bits alone.
    pub fn visible_marginals(&self) -> Vec<f64> {
        let mask = (1usize << self.n_visible) - 1;
        let mut out = vec![0.0; 1 << self.n_visible];
        for (code, p) in self.probabilities.iter().enumerate() {
            out[code & mask] += p;
        }
        out
    }
}

fn check_size(params: &RbmParameters) -> Result<usize> {
    params.validate()?;
    let units = params.n_visible() + params.n_hidden();
    if units > MAX_EXACT_UNITS {
        return Err(Error::capacity(format!(
            "exact enumeration supports at most {MAX_EXACT_UNITS} units, model has {units}"
        )));
    }
    Ok(units)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `P(v, h) = exp(−E) / Z` over all `2^(n+m)` states.
pub fn exact_distribution(params: &RbmParameters) -> Result<ProbabilityTable> {
    let units = check_size(params)?;
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    let energies: Vec<f64> = (0..1u64 << units)
        .map(|code| {
            let (v, h) = decode_state(code, nv, nh);
            energy_unchecked(params, &v, &h)
        })
        .collect();
    let log_partition = log_sum_exp(energies.iter().map(|e| -e));
    let probabilities = energies
        .iter()
        .map(|e| (-e - log_partition).exp())
        .collect();
    Ok(ProbabilityTable {
        n_visible: nv,
        n_hidden: nh,
        energies,
        probabilities,
        log_partition,
    })
}

/// `P(v) = Σ_h exp(−E(v,h)) / Z`.
pub fn visible_marginal(params: &RbmParameters, v: &[u8]) -> Result<f64> {
    let table = exact_distribution(params)?;
    if v.len() != params.n_visible() {
        return Err(Error::invalid(format!(
            "visible vector has length {}, model has {}",
            v.len(),
            params.n_visible()
        )));
    }
    let nh = params.n_hidden();
    let log_num = log_sum_exp((0..1u64 << nh).map(|code| {
        let (_, h) = decode_state(code << v.len(), v.len(), nh);
        -energy_unchecked(params, v, &h)
    }));
    Ok((log_num - table.log_partition).exp())
}

/// Returns every state weighted by its exact probability; the requested
/// sample count and seed are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSampler;

impl Sampler for ExactSampler {
    fn sample(&self, params: &RbmParameters, _n_samples: usize, _seed: u64) -> Result<SampleSet> {
        let table = exact_distribution(params)?;
        let configurations = (0..table.probabilities.len())
            .map(|c| table.state(c))
            .collect();
        Ok(SampleSet {
            configurations,
            weights: table.probabilities,
            energies: table.energies,
        })
    }

    fn name(&self) -> &'static str {
        "exact"
    }
}
