//! Parameter initialization, contrastive training against any [`Sampler`],
//! mean-field reconstruction and clamp-based classification.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::{BinaryBatch, ClampMode};
use crate::sampler::{sigmoid, RbmParameters, Sampler};
use crate::{seed, Error, Result};

pub const DEFAULT_EPOCHS: usize = 20;
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub n_hidden: usize,
    /// Negative-phase samples drawn per update.
    pub n_samples: usize,
    pub n_epochs: usize,
    pub seed: u64,
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.n_hidden == 0 || self.n_samples == 0 {
            return Err(Error::invalid("n_hidden and n_samples must be at least 1"));
        }
        Ok(())
    }
}

/// One-hot class encodings plus the all-ones neutral clamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampSpec {
    pub n_classes: usize,
}

impl Default for ClampSpec {
    fn default() -> Self {
        Self { n_classes: 2 }
    }
}

impl ClampSpec {
    pub fn encoding(&self, class: usize) -> Result<Vec<u8>> {
        if class >= self.n_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok((0..self.n_classes).map(|k| (k == class) as u8).collect())
    }

    pub fn neutral(&self) -> Vec<u8> {
        vec![1; self.n_classes]
    }

    pub fn bits(&self, mode: ClampMode, class: usize) -> Result<Vec<u8>> {
        match mode {
            ClampMode::TrueLabel => self.encoding(class),
            ClampMode::Neutral => Ok(self.neutral()),
        }
    }
}

/// Weights from `N(0, 0.01²)`, biases zero.
pub fn init_params(n_visible: usize, n_hidden: usize, seed: u64) -> Result<RbmParameters> {
    if n_visible == 0 || n_hidden == 0 {
        return Err(Error::invalid("RBM layers must have at least one unit"));
    }
    let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
    let mut rng = seed::rng(seed);
    Ok(RbmParameters {
        visible_bias: Array1::zeros(n_visible),
        hidden_bias: Array1::zeros(n_hidden),
        weights: Array2::from_shape_fn((n_visible, n_hidden), |_| normal.sample(&mut rng)),
    })
}

/// One contrastive update from a patient batch.
///
/// Positive statistics come from the batch replicas with hidden
/// probabilities `sigmoid(b + Wᵀv)`; negative statistics from
/// `hyper.n_samples` draws of `sampler`.
pub fn train_batch(
    params: &RbmParameters,
    batch: &BinaryBatch,
    sampler: &dyn Sampler,
    hyper: &Hyperparameters,
    step_seed: u64,
) -> Result<RbmParameters> {
    hyper.validate()?;
    if batch.clamp_mode != ClampMode::TrueLabel {
        return Err(Error::invalid("training batches must carry the true-label clamp"));
    }
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    if batch.width() != nv || batch.replicas.is_empty() {
        return Err(Error::invalid(format!(
            "batch vectors have length {}, model has {nv} visible units",
            batch.width()
        )));
    }

    let mut pos_v = Array1::<f64>::zeros(nv);
    let mut pos_h = Array1::<f64>::zeros(nh);
    let mut pos_vh = Array2::<f64>::zeros((nv, nh));
    // identical replicas contribute identical terms
    let mut distinct: std::collections::BTreeMap<&[u8], usize> = Default::default();
    for r in &batch.replicas {
        *distinct.entry(r.as_slice()).or_insert(0) += 1;
    }
    for (replica, &count) in &distinct {
        let w = count as f64;
        let v: Vec<f64> = replica.iter().map(|&b| b as f64).collect();
        let h: Vec<f64> = params.hidden_field(&v).into_iter().map(sigmoid).collect();
        for (j, hj) in h.iter().enumerate() {
            pos_h[j] += w * hj;
        }
        for (i, &vi) in replica.iter().enumerate() {
            if vi == 1 {
                pos_v[i] += w;
                for (j, hj) in h.iter().enumerate() {
                    pos_vh[[i, j]] += w * hj;
                }
            }
        }
    }
    let n = batch.replicas.len() as f64;
    pos_v /= n;
    pos_h /= n;
    pos_vh /= n;

    let neg = sampler
        .sample(params, hyper.n_samples, step_seed)?
        .moments(nv, nh)?;

    let lr = hyper.learning_rate;
    let updated = RbmParameters {
        visible_bias: &params.visible_bias + &((pos_v - neg.visible) * lr),
        hidden_bias: &params.hidden_bias + &((pos_h - neg.hidden) * lr),
        weights: &params.weights + &((pos_vh - neg.visible_hidden) * lr),
    };
    updated.validate()?;
    Ok(updated)
}

/// Trains from `init` for `hyper.n_epochs` epochs, one update per batch per
/// epoch with the batch order reshuffled every epoch.
pub fn train(
    init: RbmParameters,
    batches: &[BinaryBatch],
    sampler: &dyn Sampler,
    hyper: &Hyperparameters,
) -> Result<RbmParameters> {
    let mut params = init;
    let mut order: Vec<usize> = (0..batches.len()).collect();
    for epoch in 0..hyper.n_epochs {
        order.shuffle(&mut seed::rng(seed::derive(hyper.seed, &[0x5348_5546, epoch as u64])));
        for (step, &b) in order.iter().enumerate() {
            let step_seed = seed::derive(hyper.seed, &[epoch as u64, step as u64]);
            params = train_batch(&params, &batches[b], sampler, hyper, step_seed)?;
        }
    }
    Ok(params)
}

/// One mean-field up-down pass: `h = σ(b + Wᵀv)`, `v' = σ(a + W h)`.
pub fn reconstruct(params: &RbmParameters, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != params.n_visible() {
        return Err(Error::invalid(format!(
            "input has length {}, model has {} visible units",
            v.len(),
            params.n_visible()
        )));
    }
    let h: Vec<f64> = params.hidden_field(v).into_iter().map(sigmoid).collect();
    Ok(params.visible_field(&h).into_iter().map(sigmoid).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub clamp_probabilities: Vec<f64>,
}

/// Collapses a reconstructed clamp to the index of its largest entry,
/// lower index on ties.
pub fn collapse_clamp(probabilities: &[f64]) -> usize {
    probabilities
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
            if p > bp {
                (i, p)
            } else {
                (bi, bp)
            }
        })
        .0
}

/// Appends the neutral clamp to `features`, reconstructs, and reads the
/// class off the trailing clamp entries.
pub fn classify(params: &RbmParameters, features: &[f64], clamp: &ClampSpec) -> Result<Prediction> {
    if features.len() + clamp.n_classes != params.n_visible() {
        return Err(Error::invalid(format!(
            "expected {} features for a model with {} visible units and {} clamp units, got {}",
            params.n_visible().saturating_sub(clamp.n_classes),
            params.n_visible(),
            clamp.n_classes,
            features.len()
        )));
    }
    let mut v = features.to_vec();
    v.extend(clamp.neutral().into_iter().map(f64::from));
    let recon = reconstruct(params, &v)?;
    let clamp_probabilities = recon[features.len()..].to_vec();
    Ok(Prediction {
        class: collapse_clamp(&clamp_probabilities),
        clamp_probabilities,
    })
}

/// Squared Euclidean distance between a reconstructed clamp and the true
/// one-hot vector.
pub fn clamp_error(predicted: &[f64], truth: &[u8]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "clamp lengths differ: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(predicted
        .iter()
        .zip(truth)
        .map(|(p, &t)| (p - t as f64).powi(2))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::binarize_patient;
    use crate::sampler::{decode_state, visible_marginal, ExactSampler};
    use ndarray::array;

    fn hyper(lr: f64) -> Hyperparameters {
        Hyperparameters {
            learning_rate: lr,
            n_hidden: 1,
            n_samples: 16,
            n_epochs: 1,
            seed: 0,
        }
    }

    fn batch(replicas: Vec<Vec<u8>>) -> BinaryBatch {
        BinaryBatch {
            replicas,
            patient_index: 0,
            clamp_mode: ClampMode::TrueLabel,
        }
    }

    #[test]
    fn init_biases_zero_and_deterministic() {
        let p = init_params(5, 3, 7).unwrap();
        assert!(p.visible_bias.iter().chain(p.hidden_bias.iter()).all(|&x| x == 0.0));
        assert_eq!(p, init_params(5, 3, 7).unwrap());
        assert_ne!(p, init_params(5, 3, 8).unwrap());
    }

    #[test]
    fn init_weight_spread() {
        let p = init_params(100, 100, 1).unwrap();
        let n = p.weights.len() as f64;
        let mean = p.weights.sum() / n;
        let sd = (p.weights.mapv(|w| (w - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        assert!((0.008..=0.012).contains(&sd), "sd {sd}");
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let p = init_params(3, 1, 2).unwrap();
        let b = batch(vec![vec![1, 0, 1], vec![0, 1, 1]]);
        let q = train_batch(&p, &b, &ExactSampler, &hyper(0.0), 0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn train_batch_rejects_bad_batches() {
        let p = init_params(3, 1, 2).unwrap();
        assert!(train_batch(&p, &batch(vec![vec![1, 0]]), &ExactSampler, &hyper(0.1), 0).is_err());
        let mut neutral = batch(vec![vec![1, 0, 1]]);
        neutral.clamp_mode = ClampMode::Neutral;
        assert!(train_batch(&p, &neutral, &ExactSampler, &hyper(0.1), 0).is_err());
    }

    /// Mean log-likelihood of the batch, evaluated by explicit double sum.
    fn batch_log_likelihood(p: &RbmParameters, replicas: &[Vec<u8>]) -> f64 {
        let (nv, nh) = (p.n_visible(), p.n_hidden());
        let e = |v: &[u8], h: &[u8]| {
            let mut s = 0.0;
            for i in 0..nv {
                s += p.visible_bias[i] * v[i] as f64;
                for j in 0..nh {
                    s += v[i] as f64 * p.weights[[i, j]] * h[j] as f64;
                }
            }
            for j in 0..nh {
                s += p.hidden_bias[j] * h[j] as f64;
            }
            s
        };
        let mut z = 0.0;
        for c in 0..1u64 << (nv + nh) {
            let (v, h) = decode_state(c, nv, nh);
            z += e(&v, &h).exp();
        }
        replicas
            .iter()
            .map(|v| {
                let num: f64 = (0..1u64 << nh)
                    .map(|c| e(v, &decode_state(c, nh, 0).0).exp())
                    .sum();
                (num / z).ln()
            })
            .sum::<f64>()
            / replicas.len() as f64
    }

    #[test]
    fn one_by_one_update_follows_finite_difference_gradient() {
        let p = RbmParameters::new(array![0.3], array![-0.2], array![[0.7]]).unwrap();
        let replicas = vec![vec![1], vec![1], vec![0]];
        let lr = 0.5;
        let q = train_batch(&p, &batch(replicas.clone()), &ExactSampler, &hyper(lr), 0).unwrap();
        let step = 1e-4;
        let fd = |f: &dyn Fn(&mut RbmParameters, f64)| {
            let mut plus = p.clone();
            f(&mut plus, step);
            let mut minus = p.clone();
            f(&mut minus, -step);
            (batch_log_likelihood(&plus, &replicas) - batch_log_likelihood(&minus, &replicas))
                / (2.0 * step)
        };
        let ga = fd(&|m, d| m.visible_bias[0] += d);
        let gb = fd(&|m, d| m.hidden_bias[0] += d);
        let gw = fd(&|m, d| m.weights[[0, 0]] += d);
        let rel = |upd: f64, g: f64| ((upd / lr) - g).abs() / g.abs().max(1e-12);
        assert!(rel(q.visible_bias[0] - p.visible_bias[0], ga) < 1e-4);
        assert!(rel(q.hidden_bias[0] - p.hidden_bias[0], gb) < 1e-4);
        assert!(rel(q.weights[[0, 0]] - p.weights[[0, 0]], gw) < 1e-4);
    }

    #[test]
    fn all_ones_batch_gains_likelihood() {
        let mut p = init_params(3, 2, 5).unwrap();
        let b = batch(vec![vec![1, 1, 1]; 10]);
        let mut last = visible_marginal(&p, &[1, 1, 1]).unwrap();
        let h = Hyperparameters { n_hidden: 2, ..hyper(0.1) };
        for step in 0..50 {
            p = train_batch(&p, &b, &ExactSampler, &h, step).unwrap();
            let now = visible_marginal(&p, &[1, 1, 1]).unwrap();
            assert!(now > last, "step {step}: {now} <= {last}");
            last = now;
        }
    }

    #[test]
    fn reconstruct_cases() {
        let zero = RbmParameters::zeros(3, 2);
        assert_eq!(reconstruct(&zero, &[1.0, 0.0, 0.5]).unwrap(), vec![0.5; 3]);

        let sat = RbmParameters::new(array![10.0, 0.0], array![0.0], array![[0.0], [0.0]]).unwrap();
        assert!((reconstruct(&sat, &[0.0, 0.0]).unwrap()[0] - 1.0).abs() < 1e-3);

        // 2 visible, 1 hidden, by hand:
        // h = σ(0.5 + 1·1.0 + 0·(−2.0)) = σ(1.5)
        // v0 = σ(0.1 + 1.0·h), v1 = σ(−0.3 − 2.0·h)
        let p = RbmParameters::new(array![0.1, -0.3], array![0.5], array![[1.0], [-2.0]]).unwrap();
        let h = 1.0 / (1.0 + (-1.5f64).exp());
        let expected = [
            1.0 / (1.0 + (-(0.1 + h)).exp()),
            1.0 / (1.0 + (-(-0.3 - 2.0 * h)).exp()),
        ];
        let got = reconstruct(&p, &[1.0, 0.0]).unwrap();
        assert!((got[0] - expected[0]).abs() < 1e-12);
        assert!((got[1] - expected[1]).abs() < 1e-12);
        assert!(reconstruct(&p, &[1.0]).is_err());
    }

    #[test]
    fn collapse_follows_larger_clamp_value() {
        assert_eq!(collapse_clamp(&[0.23, 0.48]), 1);
        assert_eq!(collapse_clamp(&[0.5, 0.5]), 0);
    }

    #[test]
    fn symmetric_model_ties_to_class_zero() {
        let p = RbmParameters::zeros(5, 2);
        let pred = classify(&p, &[0.1, 0.2, 0.3], &ClampSpec::default()).unwrap();
        assert_eq!(pred.clamp_probabilities, vec![0.5, 0.5]);
        assert_eq!(pred.class, 0);
        let err = classify(&p, &[0.1, 0.2], &ClampSpec::default()).unwrap_err();
        assert!(err.to_string().contains("expected 3 features"));
    }

    #[test]
    fn clamp_error_cases() {
        assert_eq!(clamp_error(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert!((clamp_error(&[0.23, 0.48], &[0, 1]).unwrap() - 0.3233).abs() < 1e-12);
        assert_eq!(clamp_error(&[1.0, 0.0], &[0, 1]).unwrap(), 2.0);
        assert!(clamp_error(&[1.0], &[0, 1]).is_err());
    }

    #[test]
    fn clamp_spec_vectors() {
        let c = ClampSpec::default();
        assert_eq!(c.encoding(0).unwrap(), vec![1, 0]);
        assert_eq!(c.encoding(1).unwrap(), vec![0, 1]);
        assert_eq!(c.neutral(), vec![1, 1]);
        assert!(c.encoding(2).is_err());
    }

    #[test]
    fn saturated_single_class_model_predicts_that_class() {
        let clamp = ClampSpec::default();
        let features = [0.9, 0.1, 0.8];
        let b = binarize_patient(0, &features, &clamp.encoding(1).unwrap(), ClampMode::TrueLabel, 200, 1)
            .unwrap();
        let h = Hyperparameters {
            learning_rate: 0.5,
            n_hidden: 2,
            n_samples: 1,
            n_epochs: 100,
            seed: 3,
        };
        let p = train(init_params(5, 2, 3).unwrap(), &[b], &ExactSampler, &h).unwrap();
        assert_eq!(classify(&p, &features, &clamp).unwrap().class, 1);
    }

    #[test]
    fn training_is_reproducible() {
        let clamp = ClampSpec::default();
        let batches: Vec<_> = (0..3)
            .map(|k| {
                binarize_patient(k, &[0.2 * k as f64, 0.5], &clamp.encoding(k % 2).unwrap(), ClampMode::TrueLabel, 50, k as u64)
                    .unwrap()
            })
            .collect();
        let h = Hyperparameters {
            learning_rate: 0.25,
            n_hidden: 2,
            n_samples: 32,
            n_epochs: 3,
            seed: 9,
        };
        let sampler = crate::sampler::GibbsSampler::default();
        let a = train(init_params(4, 2, 1).unwrap(), &batches, &sampler, &h).unwrap();
        let b = train(init_params(4, 2, 1).unwrap(), &batches, &sampler, &h).unwrap();
        assert_eq!(a, b);
    }
}
