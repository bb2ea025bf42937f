//! The RBM energy model and the samplers that supply its negative phase.
//!
//! Three implementations share the [`Sampler`] contract:
//! [`ExactSampler`] enumerates every state and is the test oracle,
//! [`GibbsSampler`] runs a block Gibbs chain, and [`SaChimeraSampler`]
//! anneals the chimera-embedded QUBO as a classical stand-in for a quantum
//! annealer.

mod anneal;
mod exact;
mod gibbs;

pub use anneal::{sa_chimera_sample, AnnealSchedule, SaChimeraSampler};
pub use exact::{exact_distribution, visible_marginal, ExactSampler, ProbabilityTable, MAX_EXACT_UNITS};
pub use gibbs::{gibbs_sample, GibbsSampler, DEFAULT_BURN_IN};

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Visible bias `a`, hidden bias `b` and weights `W` (visible × hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParameters {
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub weights: Array2<f64>,
}

impl RbmParameters {
    pub fn new(
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        weights: Array2<f64>,
    ) -> Result<Self> {
        let p = Self {
            visible_bias,
            hidden_bias,
            weights,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            weights: Array2::zeros((n_visible, n_hidden)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (nv, nh) = self.weights.dim();
        if nv != self.visible_bias.len() || nh != self.hidden_bias.len() {
            return Err(Error::invalid(format!(
                "weights are {nv}x{nh} but biases have lengths {} and {}",
                self.visible_bias.len(),
                self.hidden_bias.len()
            )));
        }
        let finite = self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
            && self.weights.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("RBM parameters contain non-finite entries"));
        }
        Ok(())
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    /// Largest absolute value over all biases and weights.
    pub fn max_abs(&self) -> f64 {
        self.visible_bias
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.weights.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_state(&self, v: &[u8], h: &[u8]) -> Result<()> {
        if v.len() != self.n_visible() || h.len() != self.n_hidden() {
            return Err(Error::invalid(format!(
                "state has {} visible and {} hidden units, model has {} and {}",
                v.len(),
                h.len(),
                self.n_visible(),
                self.n_hidden()
            )));
        }
        Ok(())
    }

    /// `b + Wᵀv` for a real-valued visible vector.
    pub(crate) fn hidden_field(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.hidden_bias.to_vec();
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                    *o += vi * w;
                }
            }
        }
        out
    }

    /// `a + Wh` for a real-valued hidden vector.
    pub(crate) fn visible_field(&self, h: &[f64]) -> Vec<f64> {
        self.weights
            .rows()
            .into_iter()
            .zip(self.visible_bias.iter())
            .map(|(row, a)| a + row.iter().zip(h).map(|(w, hj)| w * hj).sum::<f64>())
            .collect()
    }
}

pub(crate) fn energy_unchecked(params: &RbmParameters, v: &[u8], h: &[u8]) -> f64 {
    let mut e = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if vi == 1 {
            e -= params.visible_bias[i];
            for (j, &hj) in h.iter().enumerate() {
                if hj == 1 {
                    e -= params.weights[[i, j]];
                }
            }
        }
    }
    for (j, &hj) in h.iter().enumerate() {
        if hj == 1 {
            e -= params.hidden_bias[j];
        }
    }
    e
}

/// `E(v, h) = −aᵀv − bᵀh − vᵀWh`.
pub fn energy(params: &RbmParameters, v: &[u8], h: &[u8]) -> Result<f64> {
    params.check_state(v, h)?;
    Ok(energy_unchecked(params, v, h))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weighted collection of `(v, h)` configurations with their energies.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub configurations: Vec<(Vec<u8>, Vec<u8>)>,
    pub weights: Vec<f64>,
    pub energies: Vec<f64>,
}

/// Weighted first and second moments of a [`SampleSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub visible: Array1<f64>,
    pub hidden: Array1<f64>,
    pub visible_hidden: Array2<f64>,
}

impl SampleSet {
    /// Builds a set with uniform weights, computing each energy.
    pub fn uniform(params: &RbmParameters, configurations: Vec<(Vec<u8>, Vec<u8>)>) -> Self {
        let energies = configurations
            .iter()
            .map(|(v, h)| energy_unchecked(params, v, h))
            .collect();
        let weights = vec![1.0; configurations.len()];
        Self {
            configurations,
            weights,
            energies,
        }
    }

    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn moments(&self, n_visible: usize, n_hidden: usize) -> Result<Moments> {
        let total = self.total_weight();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid("sample set has no positive total weight"));
        }
        let mut visible = Array1::zeros(n_visible);
        let mut hidden = Array1::zeros(n_hidden);
        let mut vh = Array2::zeros((n_visible, n_hidden));
        for ((v, h), &w) in self.configurations.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            for (j, &hj) in h.iter().enumerate() {
                if hj == 1 {
                    hidden[j] += w;
                }
            }
            for (i, &vi) in v.iter().enumerate() {
                if vi == 1 {
                    visible[i] += w;
                    for (j, &hj) in h.iter().enumerate() {
                        if hj == 1 {
                            vh[[i, j]] += w;
                        }
                    }
                }
            }
        }
        Ok(Moments {
            visible: visible / total,
            hidden: hidden / total,
            visible_hidden: vh / total,
        })
    }

    /// Normalized weight per distinct configuration, keyed by
    /// [`state_code`].
    pub fn empirical_distribution(&self) -> std::collections::BTreeMap<u64, f64> {
        let total = self.total_weight();
        let mut map = std::collections::BTreeMap::new();
        for ((v, h), &w) in self.configurations.iter().zip(&self.weights) {
            *map.entry(state_code(v, h)).or_insert(0.0) += w / total;
        }
        map
    }

    /// Configuration with the largest total weight; ties go to the lower
    /// state code.
    pub fn modal_configuration(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let dist = self.empirical_distribution();
        let (&code, _) = dist
            .iter()
            .fold(None::<(&u64, &f64)>, |best, cur| match best {
                Some(b) if *b.1 >= *cur.1 => Some(b),
                _ => Some(cur),
            })?;
        let (v, h) = &self.configurations[0];
        Some(decode_state(code, v.len(), h.len()))
    }
}

/// Packs `(v, h)` into an integer: bit `i` is `v[i]`, bit `n + j` is `h[j]`.
pub fn state_code(v: &[u8], h: &[u8]) -> u64 {
    v.iter()
        .chain(h)
        .enumerate()
        .fold(0u64, |acc, (k, &bit)| acc | ((bit as u64) << k))
}

pub fn decode_state(code: u64, n_visible: usize, n_hidden: usize) -> (Vec<u8>, Vec<u8>) {
    let bit = |k: usize| ((code >> k) & 1) as u8;
    (
        (0..n_visible).map(bit).collect(),
        (n_visible..n_visible + n_hidden).map(bit).collect(),
    )
}

/// Source of negative-phase samples for RBM training.
pub trait Sampler: Send + Sync {
    fn sample(&self, params: &RbmParameters, n_samples: usize, seed: u64) -> Result<SampleSet>;

    fn name(&self) -> &'static str;
}
