//! Experiment orchestration: partition, preprocess, sweep the
//! hyperparameter grid with repetitions, validate, test and report.
//!
//! Per run the steps are: fit the normalizer on the training split, binarize
//! each training patient with its true-label clamp, train, compute the mean
//! clamp error on the validation split and the raw score on the test split.
//! All randomness derives from one master seed; grid points are independent
//! and may run in parallel, and results are merged in grid order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{
    apply_normalizer, binarize_patient, fit_normalizer, BinaryBatch, ClampMode,
    ExpressionDataset, NormalizationModel, DEFAULT_REPLICAS,
};
use crate::rbm::{self, classify, clamp_error, init_params, ClampSpec, Hyperparameters};
use crate::sampler::{
    AnnealSchedule, ExactSampler, GibbsSampler, RbmParameters, SaChimeraSampler, Sampler,
    DEFAULT_BURN_IN,
};
use crate::chimera::{build_chimera, DEFAULT_CELL_SIZE};
use crate::{seed, Error, Result};

/// Repetitions of train/validate/test per grid point.
pub const REPETITIONS: usize = 3;

pub const DEFAULT_SIZES: (usize, usize, usize) = (80, 10, 14);

const PARTITION_TAG: u64 = 0x5041_5254;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split into `(train, validation, test)` sizes.
///
/// Each class is shuffled, patients are interleaved by their fractional
/// position within their class, and the interleaved list is cut into
/// consecutive segments. Any contiguous segment then holds each class within
/// one patient of its proportional share.
pub fn partition(
    dataset: &ExpressionDataset,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<Partition> {
    let n = dataset.n_patients();
    let (n_train, n_val, n_test) = sizes;
    if n_train + n_val + n_test != n {
        return Err(Error::invalid(format!(
            "split sizes {n_train}+{n_val}+{n_test} do not sum to {n} patients"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for class in 0..2 {
        let mut members: Vec<usize> = (0..n).filter(|&p| dataset.labels[p] == class).collect();
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut rng);
        let len = members.len() as f64;
        for (t, p) in members.into_iter().enumerate() {
            keyed.push(((t as f64 + 0.5) / len, class, p));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, p)| p).collect();

    let part = Partition {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    for class in 0..2 {
        if !part.train.iter().any(|&p| dataset.labels[p] == class) {
            return Err(Error::invalid(format!(
                "class {:?} is absent from the training split",
                dataset.class_names[class]
            )));
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub n_hidden: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub n_hidden: Vec<usize>,
    pub n_samples: Vec<usize>,
}

impl HyperGrid {
    /// Hidden units 1–3, learning rates 0.25–1.25 by 0.25, samples 1–2048 in
    /// powers of two.
    pub fn full() -> Self {
        Self {
            learning_rates: vec![0.25, 0.5, 0.75, 1.0, 1.25],
            n_hidden: vec![1, 2, 3],
            n_samples: (0..12).map(|k| 1usize << k).collect(),
        }
    }

    pub fn single(point: GridPoint) -> Self {
        Self {
            learning_rates: vec![point.learning_rate],
            n_hidden: vec![point.n_hidden],
            n_samples: vec![point.n_samples],
        }
    }

    /// Points in learning rate, hidden units, samples nesting order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &learning_rate in &self.learning_rates {
            for &n_hidden in &self.n_hidden {
                for &n_samples in &self.n_samples {
                    out.push(GridPoint {
                        learning_rate,
                        n_hidden,
                        n_samples,
                    });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.learning_rates.len() * self.n_hidden.len() * self.n_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_runs(&self) -> usize {
        self.len() * REPETITIONS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplerChoice {
    Exact,
    Gibbs {
        burn_in: usize,
    },
    SaChimera {
        rows: usize,
        cols: usize,
        schedule: AnnealSchedule,
    },
}

impl SamplerChoice {
    pub fn gibbs() -> Self {
        SamplerChoice::Gibbs {
            burn_in: DEFAULT_BURN_IN,
        }
    }

    pub fn sa_chimera() -> Self {
        SamplerChoice::SaChimera {
            rows: 16,
            cols: 16,
            schedule: AnnealSchedule::default(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Sampler>> {
        Ok(match self {
            SamplerChoice::Exact => Box::new(ExactSampler),
            SamplerChoice::Gibbs { burn_in } => Box::new(GibbsSampler { burn_in: *burn_in }),
            SamplerChoice::SaChimera {
                rows,
                cols,
                schedule,
            } => Box::new(SaChimeraSampler::new(
                build_chimera(*rows, *cols, DEFAULT_CELL_SIZE)?,
                *schedule,
            )),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerChoice::Exact => "exact",
            SamplerChoice::Gibbs { .. } => "gibbs",
            SamplerChoice::SaChimera { .. } => "sa-chimera",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sizes: (usize, usize, usize),
    pub n_replicas: usize,
    pub n_epochs: usize,
    /// Worker threads for grid points; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Directory holding one finished-point file per grid point.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES,
            n_replicas: DEFAULT_REPLICAS,
            n_epochs: rbm::DEFAULT_EPOCHS,
            jobs: None,
            checkpoint_dir: None,
        }
    }
}

/// Normalized features for every patient plus the split they belong to.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub partition: Partition,
    pub normalizer: NormalizationModel,
}

/// Fits the normalizer on the training rows and applies it to all rows.
pub fn prepare(dataset: &ExpressionDataset, partition: Partition) -> Result<PreparedData> {
    let train = dataset.values.select(Axis(0), &partition.train);
    let normalizer = fit_normalizer(train.view())?;
    let features = apply_normalizer(&normalizer, dataset.values.view())?;
    Ok(PreparedData {
        features,
        labels: dataset.labels.clone(),
        partition,
        normalizer,
    })
}

/// Seed of the patient split used by every run of a sweep.
pub fn partition_seed(master: u64) -> u64 {
    seed::derive(master, &[PARTITION_TAG])
}

/// Seed of one `(grid point, repetition)` run.
pub fn run_seed(master: u64, point: &GridPoint, rep: usize) -> u64 {
    seed::derive(
        master,
        &[
            point.learning_rate.to_bits(),
            point.n_hidden as u64,
            point.n_samples as u64,
            rep as u64,
        ],
    )
}

/// Binarizes and clamps the training patients, then trains a fresh model.
pub fn train_model(
    data: &PreparedData,
    point: &GridPoint,
    sampler: &dyn Sampler,
    clamp: &ClampSpec,
    n_replicas: usize,
    n_epochs: usize,
    run_seed: u64,
) -> Result<RbmParameters> {
    let batches = data
        .partition
        .train
        .iter()
        .map(|&p| {
            binarize_patient(
                p,
                data.features.row(p).as_slice().expect("standard layout"),
                &clamp.encoding(data.labels[p])?,
                ClampMode::TrueLabel,
                n_replicas,
                seed::derive(run_seed, &[2, p as u64]),
            )
        })
        .collect::<Result<Vec<BinaryBatch>>>()?;
    let hyper = Hyperparameters {
        learning_rate: point.learning_rate,
        n_hidden: point.n_hidden,
        n_samples: point.n_samples,
        n_epochs,
        seed: seed::derive(run_seed, &[3]),
    };
    let n_visible = data.features.ncols() + clamp.n_classes;
    let init = init_params(n_visible, point.n_hidden, seed::derive(run_seed, &[1]))?;
    rbm::train(init, &batches, sampler, &hyper)
}

/// Mean clamp error over the given patients.
pub fn mean_clamp_error(
    params: &RbmParameters,
    data: &PreparedData,
    patients: &[usize],
    clamp: &ClampSpec,
) -> Result<f64> {
    if patients.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let mut total = 0.0;
    for &p in patients {
        let pred = classify(params, data.features.row(p).as_slice().expect("standard layout"), clamp)?;
        total += clamp_error(&pred.clamp_probabilities, &clamp.encoding(data.labels[p])?)?;
    }
    Ok(total / patients.len() as f64)
}

/// Number of test patients classified correctly.
pub fn score_test(
    params: &RbmParameters,
    partition: &Partition,
    data: &PreparedData,
    clamp: &ClampSpec,
) -> Result<usize> {
    if partition.test.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    let mut correct = 0;
    for &p in &partition.test {
        let pred = classify(params, data.features.row(p).as_slice().expect("standard layout"), clamp)?;
        correct += (pred.class == data.labels[p]) as usize;
    }
    Ok(correct)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub learning_rate: f64,
    pub n_hidden: usize,
    pub n_samples: usize,
    pub rep: usize,
    pub val_error: f64,
    pub raw_score: usize,
}

impl RunRecord {
    pub fn point(&self) -> GridPoint {
        GridPoint {
            learning_rate: self.learning_rate,
            n_hidden: self.n_hidden,
            n_samples: self.n_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub grid: HyperGrid,
    pub master_seed: Option<u64>,
    pub sampler: Option<String>,
    pub test_size: usize,
    pub records: Vec<RunRecord>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    master_seed: u64,
    sampler: SamplerChoice,
    sizes: (usize, usize, usize),
    n_replicas: usize,
    n_epochs: usize,
    records: Vec<RunRecord>,
}

fn checkpoint_path(dir: &Path, point: &GridPoint) -> PathBuf {
    dir.join(format!(
        "point_lr{}_h{}_s{}.json",
        point.learning_rate, point.n_hidden, point.n_samples
    ))
}

/// Loads a finished point if its checkpoint matches this sweep's settings.
fn load_checkpoint(
    path: &Path,
    master_seed: u64,
    sampler: &SamplerChoice,
    config: &SweepConfig,
) -> Option<Vec<RunRecord>> {
    let text = fs::read_to_string(path).ok()?;
    let ck: Checkpoint = serde_json::from_str(&text).ok()?;
    let matches = ck.master_seed == master_seed
        && &ck.sampler == sampler
        && ck.sizes == config.sizes
        && ck.n_replicas == config.n_replicas
        && ck.n_epochs == config.n_epochs
        && ck.records.len() == REPETITIONS;
    matches.then_some(ck.records)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn run_point(
    data: &PreparedData,
    point: &GridPoint,
    sampler: &dyn Sampler,
    clamp: &ClampSpec,
    config: &SweepConfig,
    master_seed: u64,
) -> Result<Vec<RunRecord>> {
    (0..REPETITIONS)
        .map(|rep| {
            let annotate = |source: Error| Error::GridPoint {
                lr: point.learning_rate,
                n_hidden: point.n_hidden,
                n_samples: point.n_samples,
                rep,
                source: Box::new(source),
            };
            let seed = run_seed(master_seed, point, rep);
            let params = train_model(
                data,
                point,
                sampler,
                clamp,
                config.n_replicas,
                config.n_epochs,
                seed,
            )
            .map_err(annotate)?;
            let val_error = mean_clamp_error(&params, data, &data.partition.validation, clamp)
                .map_err(annotate)?;
            let raw_score = score_test(&params, &data.partition, data, clamp).map_err(annotate)?;
            Ok(RunRecord {
                learning_rate: point.learning_rate,
                n_hidden: point.n_hidden,
                n_samples: point.n_samples,
                rep,
                val_error,
                raw_score,
            })
        })
        .collect()
}

/// Outcome of a sweep together with how many points were taken from
/// checkpoints.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub resumed_points: usize,
}

/// Runs every grid point `REPETITIONS` times. The dataset must already be
/// reduced to the selected features.
pub fn run_grid(
    dataset: &ExpressionDataset,
    grid: &HyperGrid,
    sampler: &SamplerChoice,
    config: &SweepConfig,
    master_seed: u64,
) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    let part = partition(dataset, config.sizes, partition_seed(master_seed))?;
    if part.validation.is_empty() || part.test.is_empty() {
        return Err(Error::invalid(
            "a sweep needs non-empty validation and test splits",
        ));
    }
    let test_size = part.test.len();
    let data = prepare(dataset, part)?;
    let built = sampler.build()?;
    let clamp = ClampSpec::default();
    if let Some(dir) = &config.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let points = grid.points();
    let work = || {
        points
            .par_iter()
            .map(|point| -> Result<(Vec<RunRecord>, bool)> {
                let ck = config
                    .checkpoint_dir
                    .as_ref()
                    .map(|dir| checkpoint_path(dir, point));
                if let Some(path) = &ck {
                    if let Some(records) = load_checkpoint(path, master_seed, sampler, config) {
                        return Ok((records, true));
                    }
                }
                let records = run_point(&data, point, built.as_ref(), &clamp, config, master_seed)?;
                if let Some(path) = &ck {
                    let doc = Checkpoint {
                        master_seed,
                        sampler: sampler.clone(),
                        sizes: config.sizes,
                        n_replicas: config.n_replicas,
                        n_epochs: config.n_epochs,
                        records: records.clone(),
                    };
                    let json = serde_json::to_vec_pretty(&doc).expect("checkpoint serializes");
                    write_atomic(path, &json)?;
                }
                Ok((records, false))
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let resumed_points = results.iter().filter(|(_, resumed)| *resumed).count();
    let records = results.into_iter().flat_map(|(r, _)| r).collect();
    Ok(SweepOutcome {
        report: SweepReport {
            grid: grid.clone(),
            master_seed: Some(master_seed),
            sampler: Some(sampler.name().to_string()),
            test_size,
            records,
        },
        resumed_points,
    })
}

/// Mean validation error and raw scores of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub learning_rate: f64,
    pub n_hidden: usize,
    pub n_samples: usize,
    pub mean_val_error: f64,
    pub raw_scores: Vec<usize>,
}

impl PointSummary {
    pub fn point(&self) -> GridPoint {
        GridPoint {
            learning_rate: self.learning_rate,
            n_hidden: self.n_hidden,
            n_samples: self.n_samples,
        }
    }
}

fn point_key(p: &GridPoint) -> (usize, usize, u64) {
    // nonnegative learning rates order the same as their bit patterns
    (p.n_samples, p.n_hidden, p.learning_rate.to_bits())
}

/// Groups records by grid point, each group ordered by repetition.
pub fn summarize_points(report: &SweepReport) -> Vec<PointSummary> {
    let mut groups: BTreeMap<(usize, usize, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in &report.records {
        groups.entry(point_key(&r.point())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|mut recs| {
            recs.sort_by_key(|r| r.rep);
            let mean = recs.iter().map(|r| r.val_error).sum::<f64>() / recs.len() as f64;
            PointSummary {
                learning_rate: recs[0].learning_rate,
                n_hidden: recs[0].n_hidden,
                n_samples: recs[0].n_samples,
                mean_val_error: mean,
                raw_scores: recs.iter().map(|r| r.raw_score).collect(),
            }
        })
        .collect()
}

/// Point with the lowest mean validation error; ties go to fewer samples,
/// then fewer hidden units, then the lower learning rate.
pub fn best_hyperparameters(report: &SweepReport) -> Option<PointSummary> {
    // summaries are already in tie-break order, so the first minimum wins
    summarize_points(report)
        .into_iter()
        .fold(None, |best: Option<PointSummary>, cur| match best {
            Some(b) if b.mean_val_error <= cur.mean_val_error => Some(b),
            _ => Some(cur),
        })
}

pub const CSV_HEADER: &str = "lr,n_hidden,n_samples,rep,val_error,raw_score";

/// Full records as CSV, one row per run.
pub fn report_csv(report: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.learning_rate, r.n_hidden, r.n_samples, r.rep, r.val_error, r.raw_score
        ));
    }
    out
}

/// Parses a CSV produced by [`report_csv`].
pub fn parse_report_csv(text: &str, test_size: usize) -> Result<SweepReport> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "expected header {CSV_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::invalid(format!("malformed report row {}: {line:?}", n + 2));
        if f.len() != 6 {
            return Err(bad());
        }
        let record = RunRecord {
            learning_rate: f[0].parse().map_err(|_| bad())?,
            n_hidden: f[1].parse().map_err(|_| bad())?,
            n_samples: f[2].parse().map_err(|_| bad())?,
            rep: f[3].parse().map_err(|_| bad())?,
            val_error: f[4].parse().map_err(|_| bad())?,
            raw_score: f[5].parse().map_err(|_| bad())?,
        };
        if record.raw_score > test_size {
            return Err(Error::invalid(format!(
                "raw score {} exceeds test size {test_size} on row {}",
                record.raw_score,
                n + 2
            )));
        }
        records.push(record);
    }
    let uniq_f = |f: fn(&RunRecord) -> f64| {
        let mut v: Vec<f64> = records.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let uniq_u = |f: fn(&RunRecord) -> usize| {
        let mut v: Vec<usize> = records.iter().map(f).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    Ok(SweepReport {
        grid: HyperGrid {
            learning_rates: uniq_f(|r| r.learning_rate),
            n_hidden: uniq_u(|r| r.n_hidden),
            n_samples: uniq_u(|r| r.n_samples),
        },
        master_seed: None,
        sampler: None,
        test_size,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    pub learning_rate: f64,
    pub runs: usize,
    /// `frequencies[s]` counts runs with raw score `s`.
    pub frequencies: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub master_seed: Option<u64>,
    pub sampler: Option<String>,
    pub test_size: usize,
    pub repetitions: usize,
    pub grid: HyperGrid,
    pub n_runs: usize,
    pub best: Option<PointSummary>,
    pub raw_score_axis: Vec<usize>,
    pub raw_score_histogram: Vec<ScoreHistogram>,
}

/// Raw-score frequency table per learning rate, in grid order.
pub fn score_histograms(report: &SweepReport) -> Vec<ScoreHistogram> {
    let mut lrs: Vec<f64> = report.grid.learning_rates.clone();
    for r in &report.records {
        if !lrs.iter().any(|&l| l.to_bits() == r.learning_rate.to_bits()) {
            lrs.push(r.learning_rate);
        }
    }
    lrs.into_iter()
        .map(|lr| {
            let mut frequencies = vec![0; report.test_size + 1];
            let mut runs = 0;
            for r in report
                .records
                .iter()
                .filter(|r| r.learning_rate.to_bits() == lr.to_bits())
            {
                frequencies[r.raw_score.min(report.test_size)] += 1;
                runs += 1;
            }
            ScoreHistogram {
                learning_rate: lr,
                runs,
                frequencies,
            }
        })
        .collect()
}

pub fn summarize(report: &SweepReport) -> ReportSummary {
    ReportSummary {
        master_seed: report.master_seed,
        sampler: report.sampler.clone(),
        test_size: report.test_size,
        repetitions: REPETITIONS,
        grid: report.grid.clone(),
        n_runs: report.records.len(),
        best: best_hyperparameters(report),
        raw_score_axis: (0..=report.test_size).collect(),
        raw_score_histogram: score_histograms(report),
    }
}

pub fn report_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(&summarize(report)).expect("summary serializes");
    s.push('\n');
    s
}

/// Writes the CSV records and the JSON summary.
pub fn emit_report(report: &SweepReport, csv_path: &Path, json_path: &Path) -> Result<()> {
    fs::write(csv_path, report_csv(report)).map_err(|e| Error::io(csv_path, e))?;
    fs::write(json_path, report_json(report)).map_err(|e| Error::io(json_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use proptest::prelude::*;

    fn record(lr: f64, h: usize, s: usize, rep: usize, err: f64, score: usize) -> RunRecord {
        RunRecord {
            learning_rate: lr,
            n_hidden: h,
            n_samples: s,
            rep,
            val_error: err,
            raw_score: score,
        }
    }

    fn report(records: Vec<RunRecord>) -> SweepReport {
        SweepReport {
            grid: HyperGrid { learning_rates: vec![], n_hidden: vec![], n_samples: vec![] },
            master_seed: Some(1),
            sampler: None,
            test_size: 14,
            records,
        }
    }

    fn balanced(n: usize, seed: u64) -> ExpressionDataset {
        generate_synthetic(&SyntheticSpec {
            n_patients: n,
            n_genes: 5,
            n_informative: 2,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn default_partition_is_disjoint_cover() {
        let ds = balanced(104, 3);
        let p = partition(&ds, (80, 10, 14), 7).unwrap();
        assert_eq!((p.train.len(), p.validation.len(), p.test.len()), (80, 10, 14));
        let mut all: Vec<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..104).collect::<Vec<_>>());
        // 52/52 balance puts 40 ± 1 of each class in train
        let c1 = p.train.iter().filter(|&&i| ds.labels[i] == 1).count();
        assert!((39..=41).contains(&c1));
    }

    #[test]
    fn degenerate_all_train_partition() {
        let ds = balanced(104, 3);
        let p = partition(&ds, (104, 0, 0), 1).unwrap();
        assert_eq!(p.train.len(), 104);
        assert!(p.validation.is_empty() && p.test.is_empty());
    }

    #[test]
    fn partition_errors() {
        let ds = balanced(20, 3);
        assert!(partition(&ds, (10, 5, 4), 1).is_err());
        let mut one_class = ds.clone();
        one_class.labels = vec![0; 20];
        one_class.labels[19] = 1;
        assert!(partition(&one_class, (1, 10, 9), 0).is_err());
    }

    #[test]
    fn full_grid_size() {
        let g = HyperGrid::full();
        assert_eq!(g.len(), 180);
        assert_eq!(g.n_runs(), 540);
        assert_eq!(g.n_samples.last(), Some(&2048));
    }

    #[test]
    fn best_point_and_tie_rules() {
        let mut recs = Vec::new();
        for rep in 0..3 {
            recs.push(record(0.5, 2, 64, rep, 0.4, 10));
            recs.push(record(0.75, 3, 1024, rep, 0.1, 13));
            recs.push(record(0.25, 3, 512, rep, 0.1, 12));
            recs.push(record(1.0, 1, 8, rep, 0.3, 9));
        }
        let best = best_hyperparameters(&report(recs.clone())).unwrap();
        assert_eq!((best.learning_rate, best.n_hidden, best.n_samples), (0.25, 3, 512));

        let single: Vec<_> = (0..3).map(|r| record(0.75, 3, 1024, r, 0.2, 13)).collect();
        let best = best_hyperparameters(&report(single)).unwrap();
        assert_eq!(best.raw_scores, vec![13, 13, 13]);

        let ties = vec![
            record(0.75, 1, 4, 0, 0.2, 1),
            record(0.25, 2, 4, 0, 0.2, 1),
            record(0.5, 1, 4, 0, 0.2, 1),
        ];
        let best = best_hyperparameters(&report(ties)).unwrap();
        assert_eq!((best.learning_rate, best.n_hidden), (0.5, 1));
        assert!(best_hyperparameters(&report(vec![])).is_none());
    }

    #[test]
    fn reference_outcome_shape() {
        let recs: Vec<_> = [13, 14, 13]
            .iter()
            .enumerate()
            .map(|(rep, &s)| record(0.75, 3, 1024, rep, 0.1, s))
            .collect();
        let best = best_hyperparameters(&report(recs)).unwrap();
        let total: usize = best.raw_scores.iter().sum();
        assert_eq!(total, 40);
        assert!((total as f64 / 42.0 - 0.9524).abs() < 1e-4);
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let empty = report(vec![]);
        assert_eq!(report_csv(&empty), format!("{CSV_HEADER}\n"));
        let recs = vec![record(0.75, 3, 1024, 0, 0.123456789, 13), record(0.25, 1, 1, 2, 1.5, 0)];
        let r = report(recs.clone());
        let csv = report_csv(&r);
        assert_eq!(csv.lines().count(), 3);
        let back = parse_report_csv(&csv, 14).unwrap();
        assert_eq!(back.records, recs);
        assert!(parse_report_csv("bad\n", 14).is_err());
    }

    #[test]
    fn histogram_counts_runs_per_rate() {
        let mut recs = Vec::new();
        for rep in 0..3 {
            recs.push(record(0.25, 1, 1, rep, 0.0, 7));
            recs.push(record(0.75, 1, 1, rep, 0.0, 13 + rep % 2));
        }
        let mut r = report(recs);
        r.grid.learning_rates = vec![0.25, 0.75];
        let h = score_histograms(&r);
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].frequencies[7], 3);
        assert_eq!(h[1].frequencies[13], 2);
        assert_eq!(h[1].frequencies[14], 1);
        assert!(h.iter().all(|x| x.frequencies.len() == 15 && x.frequencies.iter().sum::<usize>() == 3));
    }

    #[test]
    fn sweep_rejects_empty_grid_and_splits() {
        let ds = balanced(20, 1);
        let empty = HyperGrid { learning_rates: vec![], n_hidden: vec![1], n_samples: vec![1] };
        let cfg = SweepConfig { sizes: (14, 3, 3), ..Default::default() };
        assert!(run_grid(&ds, &empty, &SamplerChoice::Exact, &cfg, 0).is_err());
        let cfg = SweepConfig { sizes: (20, 0, 0), ..Default::default() };
        let g = HyperGrid::single(GridPoint { learning_rate: 0.5, n_hidden: 1, n_samples: 1 });
        assert!(run_grid(&ds, &g, &SamplerChoice::Exact, &cfg, 0).is_err());
    }

    #[test]
    fn single_point_sweep_has_three_records() {
        let ds = balanced(20, 1);
        let cfg = SweepConfig { sizes: (14, 3, 3), n_replicas: 50, n_epochs: 2, ..Default::default() };
        let g = HyperGrid::single(GridPoint { learning_rate: 0.5, n_hidden: 1, n_samples: 1 });
        let out = run_grid(&ds, &g, &SamplerChoice::Exact, &cfg, 4).unwrap();
        assert_eq!(out.report.records.len(), 3);
        assert!(out.report.records.iter().all(|r| r.raw_score <= 3));
        assert_eq!(out.report.records.iter().map(|r| r.rep).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn random_models_score_near_chance() {
        let ds = generate_synthetic(&SyntheticSpec {
            n_patients: 104,
            n_genes: 10,
            n_informative: 10,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let part = partition(&ds, DEFAULT_SIZES, 5).unwrap();
        let data = prepare(&ds, part.clone()).unwrap();
        let clamp = ClampSpec::default();
        let mut rng = seed::rng(77);
        let mut total = 0usize;
        for _ in 0..100 {
            use rand_distr::{Distribution, StandardNormal};
            let p = RbmParameters::new(
                ndarray::Array1::from_shape_fn(12, |_| StandardNormal.sample(&mut rng)),
                ndarray::Array1::from_shape_fn(3, |_| StandardNormal.sample(&mut rng)),
                ndarray::Array2::from_shape_fn((12, 3), |_| StandardNormal.sample(&mut rng)),
            )
            .unwrap();
            total += score_test(&p, &part, &data, &clamp).unwrap();
        }
        let mean = total as f64 / 100.0;
        assert!((mean - 7.0).abs() < 1.5, "mean random score {mean}");
    }

    proptest! {
        #[test]
        fn partitions_cover_for_all_seeds(seed in any::<u64>(), n in 8usize..60, a in 0usize..100, b in 0usize..100) {
            let ds = balanced(n, seed % 7);
            let n_val = a % (n / 4 + 1);
            let n_test = b % (n / 4 + 1);
            let sizes = (n - n_val - n_test, n_val, n_test);
            let p = partition(&ds, sizes, seed).unwrap();
            let mut all: Vec<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let frac = ds.class_counts()[1] as f64 / n as f64;
            for split in [&p.train, &p.validation, &p.test] {
                let c1 = split.iter().filter(|&&i| ds.labels[i] == 1).count() as f64;
                prop_assert!((c1 - frac * split.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn best_is_order_invariant(seed in any::<u64>()) {
            let mut recs = Vec::new();
            for (k, lr) in [0.25, 0.5, 0.75].iter().enumerate() {
                for rep in 0..3 {
                    recs.push(record(*lr, 1 + k % 2, 1 << k, rep, ((k * 7 + rep * 3) % 5) as f64 * 0.1, rep));
                }
            }
            let a = best_hyperparameters(&report(recs.clone())).unwrap();
            use rand::seq::SliceRandom;
            recs.shuffle(&mut seed::rng(seed));
            let b = best_hyperparameters(&report(recs)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
