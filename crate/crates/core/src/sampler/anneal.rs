use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RbmParameters, SampleSet, Sampler};
use crate::chimera::{
    build_chimera, default_chain_strength, embed_rbm, rbm_to_qubo, ChimeraGraph, Embedding,
    QuboProblem, DEFAULT_CELL_SIZE,
};
use crate::{seed, Error, Result};

/// Geometric temperature ladder from `t_start` down to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t_start: 10.0,
            t_end: 0.1,
            steps: 1000,
        }
    }
}

impl AnnealSchedule {
    pub fn temperatures(&self) -> Result<Vec<f64>> {
        if !(self.t_start > 0.0 && self.t_end > 0.0 && self.steps > 0) {
            return Err(Error::invalid(format!(
                "annealing schedule needs positive temperatures and steps, got {self:?}"
            )));
        }
        if self.steps == 1 {
            return Ok(vec![self.t_end]);
        }
        let ratio = (self.t_end / self.t_start).powf(1.0 / (self.steps - 1) as f64);
        Ok((0..self.steps)
            .map(|k| self.t_start * ratio.powi(k as i32))
            .collect())
    }
}

/// QUBO compacted onto the qubits actually in use.
struct Lattice {
    linear: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    chains: Vec<Vec<usize>>,
}

impl Lattice {
    fn new(qubo: &QuboProblem, embedding: &Embedding) -> Self {
        let index: BTreeMap<usize, usize> = qubo
            .linear
            .keys()
            .enumerate()
            .map(|(local, &q)| (q, local))
            .collect();
        let linear = qubo.linear.values().copied().collect();
        let mut neighbors = vec![Vec::new(); index.len()];
        for (&(a, b), &c) in &qubo.quadratic {
            let (la, lb) = (index[&a], index[&b]);
            neighbors[la].push((lb, c));
            neighbors[lb].push((la, c));
        }
        let chains = embedding
            .chains()
            .map(|chain| chain.iter().map(|q| index[q]).collect())
            .collect();
        Self {
            linear,
            neighbors,
            chains,
        }
    }

    /// Objective change from flipping qubit `q`.
    fn flip_delta(&self, x: &[u8], q: usize) -> f64 {
        let field = self.linear[q]
            + self.neighbors[q]
                .iter()
                .filter(|(n, _)| x[*n] == 1)
                .map(|(_, c)| c)
                .sum::<f64>();
        if x[q] == 1 {
            -field
        } else {
            field
        }
    }

    fn metropolis(x: &mut [u8], q: usize, delta: f64, temperature: f64, rng: &mut ChaCha8Rng) -> bool {
        if delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp() {
            x[q] ^= 1;
            true
        } else {
            false
        }
    }

    fn anneal(&self, temperatures: &[f64], rng: &mut ChaCha8Rng) -> Vec<u8> {
        let n = self.linear.len();
        let mut x: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
        for &t in temperatures {
            for q in 0..n {
                let d = self.flip_delta(&x, q);
                Self::metropolis(&mut x, q, d, t, rng);
            }
            // whole-chain moves flip a logical variable in one step
            for chain in self.chains.iter().filter(|c| c.len() > 1) {
                let mut delta = 0.0;
                for &q in chain {
                    delta += self.flip_delta(&x, q);
                    x[q] ^= 1;
                }
                if !(delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp()) {
                    chain.iter().for_each(|&q| x[q] ^= 1);
                }
            }
        }
        x
    }

    /// Majority vote per chain; an even split is settled by a coin flip.
    fn unembed(&self, x: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
        self.chains
            .iter()
            .map(|chain| {
                let ones = chain.iter().filter(|&&q| x[q] == 1).count();
                let twice = 2 * ones;
                match twice.cmp(&chain.len()) {
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Less => 0,
                    std::cmp::Ordering::Equal => rng.random_range(0..=1u8),
                }
            })
            .collect()
    }
}

/// Simulated annealing over the chimera-embedded QUBO of `params`.
///
/// Runs `n_samples` independent restarts, each from its own seeded
/// generator, and returns the un-embedded configurations with their RBM
/// energies in restart order.
pub fn sa_chimera_sample(
    params: &RbmParameters,
    n_samples: usize,
    schedule: &AnnealSchedule,
    graph: &ChimeraGraph,
    chain_strength: Option<f64>,
    seed: u64,
) -> Result<SampleSet> {
    params.validate()?;
    let temperatures = schedule.temperatures()?;
    let strength = chain_strength.unwrap_or_else(|| default_chain_strength(params));
    let embedding = embed_rbm(params.n_visible(), params.n_hidden(), graph, strength)?;
    let qubo = rbm_to_qubo(params, &embedding)?;
    let lattice = Lattice::new(&qubo, &embedding);
    let nv = params.n_visible();

    let configurations = (0..n_samples)
        .into_par_iter()
        .map(|restart| {
            let mut rng = seed::rng(seed::derive(seed, &[restart as u64]));
            let x = lattice.anneal(&temperatures, &mut rng);
            let mut logical = lattice.unembed(&x, &mut rng);
            let h = logical.split_off(nv);
            (logical, h)
        })
        .collect();
    Ok(SampleSet::uniform(params, configurations))
}

/// Annealing sampler bound to a chimera graph.
#[derive(Debug, Clone)]
pub struct SaChimeraSampler {
    pub graph: ChimeraGraph,
    pub schedule: AnnealSchedule,
    /// `None` uses [`default_chain_strength`] for each parameter set.
    pub chain_strength: Option<f64>,
}

impl SaChimeraSampler {
    pub fn new(graph: ChimeraGraph, schedule: AnnealSchedule) -> Self {
        Self {
            graph,
            schedule,
            chain_strength: None,
        }
    }
}

impl Default for SaChimeraSampler {
    /// 16×16 grid of K(4,4) cells, 2048 qubits.
    fn default() -> Self {
        Self::new(
            build_chimera(16, 16, DEFAULT_CELL_SIZE).expect("valid dimensions"),
            AnnealSchedule::default(),
        )
    }
}

impl Sampler for SaChimeraSampler {
    fn sample(&self, params: &RbmParameters, n_samples: usize, seed: u64) -> Result<SampleSet> {
        sa_chimera_sample(
            params,
            n_samples,
            &self.schedule,
            &self.graph,
            self.chain_strength,
            seed,
        )
    }

    fn name(&self) -> &'static str {
        "sa-chimera"
    }
}
