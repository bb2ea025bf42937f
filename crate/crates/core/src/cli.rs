//! Command-line front end: `synth`, `features`, `sweep`, `train`,
//! `classify` and `report`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_expression_csv, save_expression_csv, SyntheticSpec};
use crate::features::{fisher_score, select_top_k, ExpressionDataset, NormalizationModel};
use crate::pipeline::{
    self, emit_report, mean_clamp_error, partition, prepare, run_seed, score_test, GridPoint,
    HyperGrid, SamplerChoice, SweepConfig, SweepOutcome,
};
use crate::rbm::{classify, ClampSpec, Prediction};
use crate::sampler::{AnnealSchedule, RbmParameters};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "clamp-rbm", version, about = "Clamped RBM classification of two-class expression data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic expression matrix and labels file.
    Synth(SynthArgs),
    /// Rank genes by Fisher score and write the top-k reduced matrix.
    Features(FeaturesArgs),
    /// Run the hyperparameter sweep and write CSV/JSON reports.
    Sweep(SweepArgs),
    /// Train a single model and write it as a JSON artifact.
    Train(TrainArgs),
    /// Classify a patient vector with a trained model.
    Classify(ClassifyArgs),
    /// Rebuild the JSON summary and histogram from a sweep CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 104)]
    pub n_patients: usize,
    #[arg(long, default_value_t = 20_000)]
    pub n_genes: usize,
    #[arg(long, default_value_t = 10)]
    pub n_informative: usize,
    /// Class mean distance of informative genes, in standard deviations.
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    /// Fraction of patients in class 0.
    #[arg(long, default_value_t = 0.5)]
    pub balance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "matrix.csv")]
    pub out_matrix: PathBuf,
    #[arg(long, default_value = "labels.csv")]
    pub out_labels: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Expression matrix (patients × genes, comma or tab separated).
    #[arg(long)]
    pub matrix: PathBuf,
    /// Labels file (patient_id, class).
    #[arg(long)]
    pub labels: PathBuf,
    /// Class names for class 0 and class 1; default is alphabetical.
    #[arg(long, value_delimiter = ',')]
    pub class_names: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<ExpressionDataset> {
        let names = match self.class_names.as_deref() {
            None => None,
            Some([a, b]) => Some([a.clone(), b.clone()]),
            Some(other) => {
                return Err(Error::invalid(format!(
                    "--class-names needs exactly two names, got {other:?}"
                )))
            }
        };
        load_expression_csv(&self.matrix, &self.labels, names)
    }
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "reduced.csv")]
    pub out_matrix: PathBuf,
    #[arg(long, default_value = "scores.csv")]
    pub out_scores: PathBuf,
    /// Also write the labels file next to the reduced matrix.
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Exact,
    Gibbs,
    SaChimera,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long, value_enum, default_value_t = SamplerKind::Gibbs)]
    pub sampler: SamplerKind,
    /// Gibbs burn-in sweeps.
    #[arg(long, default_value_t = crate::sampler::DEFAULT_BURN_IN)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 16)]
    pub chimera_rows: usize,
    #[arg(long, default_value_t = 16)]
    pub chimera_cols: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t_start: f64,
    #[arg(long, default_value_t = 0.1)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1000)]
    pub anneal_steps: usize,
}

impl SamplerArgs {
    pub fn choice(&self) -> SamplerChoice {
        match self.sampler {
            SamplerKind::Exact => SamplerChoice::Exact,
            SamplerKind::Gibbs => SamplerChoice::Gibbs {
                burn_in: self.burn_in,
            },
            SamplerKind::SaChimera => SamplerChoice::SaChimera {
                rows: self.chimera_rows,
                cols: self.chimera_cols,
                schedule: AnnealSchedule {
                    t_start: self.t_start,
                    t_end: self.t_end,
                    steps: self.anneal_steps,
                },
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Select the top-k Fisher genes before partitioning.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Train, validation and test sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [80, 10, 14])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = crate::features::DEFAULT_REPLICAS)]
    pub n_replicas: usize,
    #[arg(long, default_value_t = crate::rbm::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl RunArgs {
    fn sizes(&self) -> Result<(usize, usize, usize)> {
        match self.sizes[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::invalid(format!(
                "--sizes needs train,validation,test counts, got {:?}",
                self.sizes
            ))),
        }
    }

    /// Loads the data and applies the optional Fisher selection. Returns the
    /// reduced dataset, the input gene count and the selected columns.
    fn load(&self) -> Result<(ExpressionDataset, usize, Vec<usize>)> {
        let full = self.data.load()?;
        let n_genes = full.n_genes();
        let genes = match self.top_k {
            Some(k) => select_top_k(&fisher_score(&full)?, k)?,
            None => (0..n_genes).collect(),
        };
        Ok((full.select_genes(&genes)?, n_genes, genes))
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Learning rates; default 0.25,0.5,0.75,1,1.25.
    #[arg(long, value_delimiter = ',')]
    pub lr: Option<Vec<f64>>,
    /// Hidden unit counts; default 1,2,3.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Negative-phase sample counts; default 1,2,4,...,2048.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Parallel grid points.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for per-grid-point checkpoints; finished points are reused.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long, default_value = "sweep.csv")]
    pub out_csv: PathBuf,
    #[arg(long, default_value = "sweep.json")]
    pub out_json: PathBuf,
}

impl SweepArgs {
    pub fn grid(&self) -> HyperGrid {
        let full = HyperGrid::full();
        HyperGrid {
            learning_rates: self.lr.clone().unwrap_or(full.learning_rates),
            n_hidden: self.hidden.clone().unwrap_or(full.n_hidden),
            n_samples: self.samples.clone().unwrap_or(full.n_samples),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 0.75)]
    pub lr: f64,
    #[arg(long, default_value_t = 3)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    /// Repetition index; selects the same seed stream as that sweep run.
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    #[arg(long, default_value = "model.json")]
    pub out_model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Raw expression values, one per input gene, separated by commas,
    /// tabs, spaces or newlines.
    #[arg(long)]
    pub vector: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = 14)]
    pub test_size: usize,
    #[arg(long, default_value = "summary.json")]
    pub out_json: PathBuf,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<ExpressionDataset> {
    let spec = SyntheticSpec {
        n_patients: args.n_patients,
        n_genes: args.n_genes,
        n_informative: args.n_informative,
        class_separation: args.separation,
        class_balance: args.balance,
        seed: args.seed,
    };
    let ds = generate_synthetic(&spec)?;
    save_expression_csv(&ds, &args.out_matrix, &args.out_labels)?;
    let counts = ds.class_counts();
    let _ = writeln!(
        out,
        "wrote {} patients x {} genes ({} {}, {} {}) to {} and {}",
        ds.n_patients(),
        ds.n_genes(),
        counts[0],
        ds.class_names[0],
        counts[1],
        ds.class_names[1],
        args.out_matrix.display(),
        args.out_labels.display()
    );
    Ok(ds)
}

pub fn cmd_features(args: &FeaturesArgs, out: &mut dyn Write) -> Result<Vec<usize>> {
    let ds = args.data.load()?;
    let scores = fisher_score(&ds)?;
    let top = select_top_k(&scores, args.k)?;
    let reduced = ds.select_genes(&top)?;
    let labels_out = args
        .out_labels
        .clone()
        .unwrap_or_else(|| args.out_matrix.with_extension("labels.csv"));
    save_expression_csv(&reduced, &args.out_matrix, &labels_out)?;

    let mut csv = String::from("rank,gene_index,gene_id,fisher_score\n");
    for (rank, &g) in scores.ranking.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            rank + 1,
            g,
            ds.gene_ids[g],
            scores.scores[g]
        ));
    }
    fs::write(&args.out_scores, csv).map_err(|e| Error::io(&args.out_scores, e))?;
    let _ = writeln!(
        out,
        "selected {} of {} genes: {}",
        top.len(),
        ds.n_genes(),
        top.iter()
            .map(|&g| ds.gene_ids[g].as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(top)
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<SweepOutcome> {
    let (ds, _, _) = args.run.load()?;
    let grid = args.grid();
    check(!grid.is_empty(), || "hyperparameter grid is empty".into())?;
    let config = SweepConfig {
        sizes: args.run.sizes()?,
        n_replicas: args.run.n_replicas,
        n_epochs: args.run.epochs,
        jobs: args.jobs,
        checkpoint_dir: args.checkpoint_dir.clone(),
    };
    let sampler = args.run.sampler.choice();
    let _ = writeln!(
        out,
        "planned runs: {} ({} grid points x {} repetitions), sampler {}, {} features",
        grid.n_runs(),
        grid.len(),
        pipeline::REPETITIONS,
        sampler.name(),
        ds.n_genes()
    );
    let outcome = pipeline::run_grid(&ds, &grid, &sampler, &config, args.run.seed)?;
    if outcome.resumed_points > 0 {
        let _ = writeln!(out, "resumed {} grid points from checkpoints", outcome.resumed_points);
    }
    emit_report(&outcome.report, &args.out_csv, &args.out_json)?;
    if let Some(best) = pipeline::best_hyperparameters(&outcome.report) {
        let _ = writeln!(
            out,
            "best: lr={} n_hidden={} n_samples={} mean_val_error={:.6} raw_scores={:?}/{}",
            best.learning_rate,
            best.n_hidden,
            best.n_samples,
            best.mean_val_error,
            best.raw_scores,
            outcome.report.test_size
        );
    }
    Ok(outcome)
}

/// Dense RBM parameters as nested lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDoc {
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    /// `weights[i][j]` couples visible `i` to hidden `j`.
    pub weights: Vec<Vec<f64>>,
}

impl From<&RbmParameters> for ParamsDoc {
    fn from(p: &RbmParameters) -> Self {
        Self {
            visible_bias: p.visible_bias.to_vec(),
            hidden_bias: p.hidden_bias.to_vec(),
            weights: p.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl ParamsDoc {
    pub fn to_params(&self) -> Result<RbmParameters> {
        let nh = self.hidden_bias.len();
        check(self.weights.iter().all(|r| r.len() == nh), || {
            format!("every weight row must have {nh} entries")
        })?;
        let flat: Vec<f64> = self.weights.iter().flatten().copied().collect();
        let weights = ndarray::Array2::from_shape_vec((self.weights.len(), nh), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        RbmParameters::new(
            self.visible_bias.clone().into(),
            self.hidden_bias.clone().into(),
            weights,
        )
    }
}

pub const MODEL_FORMAT: &str = "clamp-rbm-model";
pub const MODEL_VERSION: u32 = 1;

/// Everything needed to classify a raw patient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub class_names: [String; 2],
    /// Length of the raw input vector.
    pub n_input_genes: usize,
    pub feature_indices: Vec<usize>,
    pub feature_ids: Vec<String>,
    pub normalizer: NormalizationModel,
    pub clamp: ClampSpec,
    pub hyperparameters: GridPoint,
    pub params: ParamsDoc,
}

impl ModelArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ModelArtifact = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        check(model.format == MODEL_FORMAT && model.version == MODEL_VERSION, || {
            format!(
                "{} is not a {MODEL_FORMAT} v{MODEL_VERSION} document",
                path.display()
            )
        })?;
        check(
            model.feature_indices.len() == model.normalizer.n_features()
                && model.feature_indices.iter().all(|&g| g < model.n_input_genes),
            || "model feature indices do not match its normalizer".into(),
        )?;
        let params = model.params.to_params()?;
        check(
            params.n_visible() == model.feature_indices.len() + model.clamp.n_classes,
            || "model parameters do not match its feature count".into(),
        )?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("model serializes");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn predict(&self, raw: &[f64]) -> Result<Prediction> {
        check(raw.len() == self.n_input_genes, || {
            format!(
                "patient vector has {} values, model expects {}",
                raw.len(),
                self.n_input_genes
            )
        })?;
        let selected: Vec<f64> = self.feature_indices.iter().map(|&g| raw[g]).collect();
        let normalized = self.normalizer.apply_row(&selected)?;
        classify(&self.params.to_params()?, &normalized, &self.clamp)
    }
}

pub struct TrainOutcome {
    pub model: ModelArtifact,
    pub val_error: Option<f64>,
    pub raw_score: Option<usize>,
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let (ds, n_input_genes, genes) = args.run.load()?;
    let part = partition(&ds, args.run.sizes()?, pipeline::partition_seed(args.run.seed))?;
    let data = prepare(&ds, part)?;
    let point = GridPoint {
        learning_rate: args.lr,
        n_hidden: args.hidden,
        n_samples: args.samples,
    };
    let sampler = args.run.sampler.choice().build()?;
    let clamp = ClampSpec::default();
    let params = pipeline::train_model(
        &data,
        &point,
        sampler.as_ref(),
        &clamp,
        args.run.n_replicas,
        args.run.epochs,
        run_seed(args.run.seed, &point, args.rep),
    )?;
    let val_error = (!data.partition.validation.is_empty())
        .then(|| mean_clamp_error(&params, &data, &data.partition.validation, &clamp))
        .transpose()?;
    let raw_score = (!data.partition.test.is_empty())
        .then(|| score_test(&params, &data.partition, &data, &clamp))
        .transpose()?;

    let model = ModelArtifact {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        class_names: ds.class_names.clone(),
        n_input_genes,
        feature_ids: ds.gene_ids.clone(),
        feature_indices: genes,
        normalizer: data.normalizer.clone(),
        clamp,
        hyperparameters: point,
        params: ParamsDoc::from(&params),
    };
    model.save(&args.out_model)?;
    let _ = writeln!(out, "wrote model to {}", args.out_model.display());
    if let Some(e) = val_error {
        let _ = writeln!(out, "validation mean clamp error: {e:.6}");
    }
    if let Some(s) = raw_score {
        let _ = writeln!(out, "test raw score: {s}/{}", data.partition.test.len());
    }
    Ok(TrainOutcome {
        model,
        val_error,
        raw_score,
    })
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    location: format!("value {}", i + 1),
                    message: format!("not a finite number: {t:?}"),
                })
        })
        .collect()
}

pub fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<Prediction> {
    let model = ModelArtifact::load(&args.model)?;
    let raw = read_vector(&args.vector)?;
    let pred = model.predict(&raw)?;
    let _ = writeln!(
        out,
        "class: {} (index {})\nclamp probabilities: {}",
        model.class_names[pred.class],
        pred.class,
        pred.clamp_probabilities
            .iter()
            .map(|p| format!("{p:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(pred)
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<pipeline::ReportSummary> {
    let text = fs::read_to_string(&args.csv).map_err(|e| Error::io(&args.csv, e))?;
    let report = pipeline::parse_report_csv(&text, args.test_size)?;
    fs::write(&args.out_json, pipeline::report_json(&report))
        .map_err(|e| Error::io(&args.out_json, e))?;
    let summary = pipeline::summarize(&report);
    let _ = write!(out, "raw score");
    for h in &summary.raw_score_histogram {
        let _ = write!(out, "\tlr={}", h.learning_rate);
    }
    let _ = writeln!(out);
    for s in &summary.raw_score_axis {
        let _ = write!(out, "{s}");
        for h in &summary.raw_score_histogram {
            let _ = write!(out, "\t{}", h.frequencies[*s]);
        }
        let _ = writeln!(out);
    }
    Ok(summary)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, out).map(drop),
        Command::Features(a) => cmd_features(&a, out).map(drop),
        Command::Sweep(a) => cmd_sweep(&a, out).map(drop),
        Command::Train(a) => cmd_train(&a, out).map(drop),
        Command::Classify(a) => cmd_classify(&a, out).map(drop),
        Command::Report(a) => cmd_report(&a, out).map(drop),
    }
}
