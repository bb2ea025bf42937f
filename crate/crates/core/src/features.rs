//! Feature scoring, selection, normalization and binarization.
//!
//! Everything between the raw patient-by-gene matrix and the binary replica
//! batches consumed by RBM training lives here.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Default number of binary replicas generated per patient.
pub const DEFAULT_REPLICAS: usize = 1000;

/// Patients × genes expression matrix with two-class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDataset {
    pub values: Array2<f64>,
    pub gene_ids: Vec<String>,
    pub patient_ids: Vec<String>,
    /// Class index per patient, 0 or 1.
    pub labels: Vec<usize>,
    /// Human-readable name of class 0 and class 1.
    pub class_names: [String; 2],
}

impl ExpressionDataset {
    pub fn new(
        values: Array2<f64>,
        gene_ids: Vec<String>,
        patient_ids: Vec<String>,
        labels: Vec<usize>,
        class_names: [String; 2],
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != labels.len() {
            return Err(Error::invalid(format!(
                "{rows} matrix rows but {} labels",
                labels.len()
            )));
        }
        if rows != patient_ids.len() {
            return Err(Error::invalid(format!(
                "{rows} matrix rows but {} patient ids",
                patient_ids.len()
            )));
        }
        if cols != gene_ids.len() {
            return Err(Error::invalid(format!(
                "{cols} matrix columns but {} gene ids",
                gene_ids.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!(
                "label {} at patient {pos} is not 0 or 1",
                labels[pos]
            )));
        }
        Ok(Self {
            values,
            gene_ids,
            patient_ids,
            labels,
            class_names,
        })
    }

    pub fn n_patients(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// Restricts the dataset to the given gene columns, in the given order.
    pub fn select_genes(&self, genes: &[usize]) -> Result<Self> {
        if let Some(&g) = genes.iter().find(|&&g| g >= self.n_genes()) {
            return Err(Error::invalid(format!(
                "gene index {g} out of range for {} genes",
                self.n_genes()
            )));
        }
        Ok(Self {
            values: self.values.select(Axis(1), genes),
            gene_ids: genes.iter().map(|&g| self.gene_ids[g].clone()).collect(),
            patient_ids: self.patient_ids.clone(),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        })
    }
}

/// Per-gene Fisher scores and the descending ranking derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores {
    /// Nonnegative score per gene. A zero-variance perfect separator scores
    /// `f64::INFINITY`.
    pub scores: Vec<f64>,
    /// Gene indices by descending score, ties by ascending index.
    pub ranking: Vec<usize>,
}

/// Two-class Fisher score `(μ₀ − μ₁)² / (σ₀² + σ₁²)` with population
/// variances.
pub fn fisher_score(dataset: &ExpressionDataset) -> Result<FeatureScores> {
    let counts = dataset.class_counts();
    if counts[0] < 2 || counts[1] < 2 {
        return Err(Error::invalid(format!(
            "fisher score needs at least 2 patients per class, got {} and {}",
            counts[0], counts[1]
        )));
    }
    if let Some(((r, c), _)) = dataset
        .values
        .indexed_iter()
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::invalid(format!(
            "non-finite expression value at patient {r}, gene {c}"
        )));
    }

    let scores: Vec<f64> = dataset
        .values
        .axis_iter(Axis(1))
        .map(|col| gene_fisher(col, &dataset.labels, counts))
        .collect();

    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    Ok(FeatureScores { scores, ranking })
}

fn gene_fisher(col: ArrayView1<'_, f64>, labels: &[usize], counts: [usize; 2]) -> f64 {
    let mut sum = [0.0; 2];
    for (&x, &l) in col.iter().zip(labels) {
        sum[l] += x;
    }
    let mean = [sum[0] / counts[0] as f64, sum[1] / counts[1] as f64];
    let mut ss = [0.0; 2];
    for (&x, &l) in col.iter().zip(labels) {
        let d = x - mean[l];
        ss[l] += d * d;
    }
    let var = ss[0] / counts[0] as f64 + ss[1] / counts[1] as f64;
    let num = (mean[0] - mean[1]).powi(2);
    if var == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / var
    }
}

/// First `k` genes of the ranking.
pub fn select_top_k(scores: &FeatureScores, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.ranking.len() {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {k}",
            scores.ranking.len()
        )));
    }
    Ok(scores.ranking[..k].to_vec())
}

/// Column-wise min-max statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationModel {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_normalizer(train_values: ArrayView2<'_, f64>) -> Result<NormalizationModel> {
    if train_values.nrows() == 0 || train_values.ncols() == 0 {
        return Err(Error::invalid("cannot fit a normalizer on an empty matrix"));
    }
    let (min, max) = train_values
        .axis_iter(Axis(1))
        .map(|col| {
            col.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                })
        })
        .unzip();
    Ok(NormalizationModel { min, max })
}

impl NormalizationModel {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Maps one value of feature `j` into `[0, 1]`.
    pub fn scale(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi <= lo {
            return 0.5;
        }
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "vector has {} features, normalizer expects {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(row.iter().enumerate().map(|(j, &x)| self.scale(j, x)).collect())
    }
}

/// `(x − min) / (max − min)`, clipped to `[0, 1]`; constant features map to 0.5.
pub fn apply_normalizer(
    model: &NormalizationModel,
    values: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if values.ncols() != model.n_features() {
        return Err(Error::invalid(format!(
            "matrix has {} columns, normalizer expects {}",
            values.ncols(),
            model.n_features()
        )));
    }
    Ok(Array2::from_shape_fn(values.dim(), |(i, j)| {
        model.scale(j, values[[i, j]])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampMode {
    TrueLabel,
    Neutral,
}

/// One patient expanded into binary replicas. Each replica is the feature
/// bits followed by the clamp bits.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryBatch {
    pub replicas: Vec<Vec<u8>>,
    pub patient_index: usize,
    pub clamp_mode: ClampMode,
}

impl BinaryBatch {
    pub fn n_replicas(&self) -> usize {
        self.replicas.len()
    }

    pub fn width(&self) -> usize {
        self.replicas.first().map_or(0, Vec::len)
    }

    /// Fraction of replicas carrying a one at `position`.
    pub fn column_mean(&self, position: usize) -> f64 {
        let ones: usize = self.replicas.iter().map(|r| r[position] as usize).sum();
        ones as f64 / self.replicas.len() as f64
    }
}

/// Number of ones a feature value `p` receives among `n_replicas`
/// (round half up).
pub fn ones_count(p: f64, n_replicas: usize) -> usize {
    (p * n_replicas as f64).round() as usize
}

/// Expands a normalized patient vector into `n_replicas` binary vectors.
///
/// For a feature value `p` exactly `ones_count(p, n_replicas)` replicas carry
/// a one; which replicas is a seeded random choice made independently per
/// feature. Clamp bits are copied into every replica.
pub fn binarize_patient(
    patient_index: usize,
    normalized: &[f64],
    clamp: &[u8],
    clamp_mode: ClampMode,
    n_replicas: usize,
    seed: u64,
) -> Result<BinaryBatch> {
    if n_replicas == 0 {
        return Err(Error::invalid("n_replicas must be at least 1"));
    }
    if let Some(j) = normalized
        .iter()
        .position(|p| !(0.0..=1.0).contains(p))
    {
        return Err(Error::invalid(format!(
            "normalized value {} at feature {j} is outside [0, 1]",
            normalized[j]
        )));
    }
    if let Some(&b) = clamp.iter().find(|&&b| b > 1) {
        return Err(Error::invalid(format!("clamp bit {b} is not binary")));
    }

    let n_features = normalized.len();
    let mut row = vec![0u8; n_features + clamp.len()];
    row[n_features..].copy_from_slice(clamp);
    let mut replicas = vec![row; n_replicas];

    let mut rng = seed::rng(seed);
    for (j, &p) in normalized.iter().enumerate() {
        let ones = ones_count(p, n_replicas);
        for r in index::sample(&mut rng, n_replicas, ones) {
            replicas[r][j] = 1;
        }
    }
    Ok(BinaryBatch {
        replicas,
        patient_index,
        clamp_mode,
    })
}
