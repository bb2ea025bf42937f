//! Expression matrix IO and the synthetic two-class generator.
//!
//! Matrix file: delimited text (comma or tab, detected from the header
//! line). The first row holds a corner label followed by gene identifiers;
//! every following row is a patient identifier followed by one numeric value
//! per gene.
//!
//! Labels file: same delimiter rules, a header row, then one
//! `patient_id,class_name` row per patient. Dataset rows follow the order of
//! the labels file.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::features::ExpressionDataset;
use crate::{seed, Error, Result};

fn detect_delimiter(path: &Path) -> Result<u8> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(if first.matches('\t').count() > first.matches(',').count() {
        b'\t'
    } else {
        b','
    })
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let delimiter = detect_delimiter(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_error(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let location = e
        .position()
        .map_or_else(|| "unknown position".to_string(), |p| format!("line {}", p.line()));
    parse_error(path, location, e.to_string())
}

/// Raw matrix: patient ids, gene ids and values in file order.
pub struct RawMatrix {
    pub patient_ids: Vec<String>,
    pub gene_ids: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_matrix(path: &Path) -> Result<RawMatrix> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 {
        return Err(parse_error(path, "line 1".into(), "header needs at least one gene column"));
    }
    let gene_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for g in &gene_ids {
        if !seen.insert(g) {
            return Err(parse_error(path, "line 1".into(), format!("duplicate gene id {g:?}")));
        }
    }

    let mut patient_ids = Vec::new();
    let mut flat = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        if record.len() != gene_ids.len() + 1 {
            return Err(parse_error(
                path,
                format!("line {line}"),
                format!("expected {} fields, found {}", gene_ids.len() + 1, record.len()),
            ));
        }
        let pid = record[0].to_string();
        if !seen.insert(pid.clone()) {
            return Err(parse_error(path, format!("line {line}"), format!("duplicate patient id {pid:?}")));
        }
        for (col, cell) in record.iter().enumerate().skip(1) {
            let value: f64 = cell.parse().map_err(|_| {
                parse_error(
                    path,
                    format!("line {line}, column {}", col + 1),
                    format!("non-numeric cell {cell:?}"),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_error(
                    path,
                    format!("line {line}, column {}", col + 1),
                    format!("non-finite value {cell:?}"),
                ));
            }
            flat.push(value);
        }
        patient_ids.push(pid);
    }
    let values = Array2::from_shape_vec((patient_ids.len(), gene_ids.len()), flat)
        .expect("row lengths checked");
    Ok(RawMatrix {
        patient_ids,
        gene_ids,
        values,
    })
}

fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        if record.len() != 2 {
            return Err(parse_error(
                path,
                format!("line {line}"),
                format!("expected patient_id and class, found {} fields", record.len()),
            ));
        }
        let pid = record[0].to_string();
        if !seen.insert(pid.clone()) {
            return Err(parse_error(path, format!("line {line}"), format!("duplicate patient id {pid:?}")));
        }
        out.push((pid, record[1].to_string()));
    }
    Ok(out)
}

/// Loads a dataset. `class_names` fixes which name is class 0 and class 1;
/// when absent the two names found in the labels file are sorted
/// alphabetically.
pub fn load_expression_csv(
    matrix_path: &Path,
    labels_path: &Path,
    class_names: Option<[String; 2]>,
) -> Result<ExpressionDataset> {
    let raw = read_matrix(matrix_path)?;
    let labels = read_labels(labels_path)?;

    let class_names = match class_names {
        Some(names) => names,
        None => {
            let found: BTreeSet<&str> = labels.iter().map(|(_, c)| c.as_str()).collect();
            let names: Vec<&str> = found.into_iter().collect();
            if names.len() != 2 {
                return Err(Error::invalid(format!(
                    "expected exactly 2 classes in {}, found {names:?}",
                    labels_path.display()
                )));
            }
            [names[0].to_string(), names[1].to_string()]
        }
    };

    let row_of: HashMap<&str, usize> = raw
        .patient_ids
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let labelled: BTreeSet<&str> = labels.iter().map(|(p, _)| p.as_str()).collect();
    if let Some(p) = raw.patient_ids.iter().find(|p| !labelled.contains(p.as_str())) {
        return Err(Error::invalid(format!(
            "patient {p:?} is in {} but has no label in {}",
            matrix_path.display(),
            labels_path.display()
        )));
    }

    let mut rows = Vec::with_capacity(labels.len());
    let mut label_idx = Vec::with_capacity(labels.len());
    for (pid, class) in &labels {
        let row = *row_of.get(pid.as_str()).ok_or_else(|| {
            Error::invalid(format!(
                "patient {pid:?} is labelled in {} but missing from {}",
                labels_path.display(),
                matrix_path.display()
            ))
        })?;
        let idx = class_names.iter().position(|c| c == class).ok_or_else(|| {
            Error::invalid(format!(
                "patient {pid:?} has class {class:?}, expected one of {class_names:?}"
            ))
        })?;
        rows.push(row);
        label_idx.push(idx);
    }

    ExpressionDataset::new(
        raw.values.select(ndarray::Axis(0), &rows),
        raw.gene_ids,
        labels.into_iter().map(|(p, _)| p).collect(),
        label_idx,
        class_names,
    )
}

/// Writes the matrix and labels files. Values use the shortest decimal form
/// that parses back to the same `f64`.
pub fn save_expression_csv(
    dataset: &ExpressionDataset,
    matrix_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    write_matrix(dataset, matrix_path).map_err(|e| Error::io(matrix_path, e))?;
    write_labels(dataset, labels_path).map_err(|e| Error::io(labels_path, e))
}

fn write_matrix(dataset: &ExpressionDataset, path: &Path) -> std::io::Result<()> {
    let mut m = std::io::BufWriter::new(File::create(path)?);
    write!(m, "patient_id")?;
    for g in &dataset.gene_ids {
        write!(m, ",{g}")?;
    }
    writeln!(m)?;
    for (pid, row) in dataset.patient_ids.iter().zip(dataset.values.rows()) {
        write!(m, "{pid}")?;
        for x in row {
            write!(m, ",{x}")?;
        }
        writeln!(m)?;
    }
    m.flush()
}

fn write_labels(dataset: &ExpressionDataset, path: &Path) -> std::io::Result<()> {
    let mut l = std::io::BufWriter::new(File::create(path)?);
    writeln!(l, "patient_id,class")?;
    for (pid, &label) in dataset.patient_ids.iter().zip(&dataset.labels) {
        writeln!(l, "{pid},{}", dataset.class_names[label])?;
    }
    l.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    pub n_genes: usize,
    pub n_informative: usize,
    /// Distance between class means of an informative gene, in within-class
    /// standard deviations.
    pub class_separation: f64,
    /// Fraction of patients in class 0.
    pub class_balance: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_patients: 104,
            n_genes: 20_000,
            n_informative: 10,
            class_separation: 3.0,
            class_balance: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.n_genes == 0 {
            return Err(Error::invalid("synthetic dataset needs patients and genes"));
        }
        if self.n_informative > self.n_genes {
            return Err(Error::invalid(format!(
                "n_informative {} exceeds n_genes {}",
                self.n_informative, self.n_genes
            )));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::invalid(format!(
                "class balance must be in (0, 1), got {}",
                self.class_balance
            )));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(Error::invalid("class separation must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Indices of the informative genes, ascending.
    pub fn informative_indices(&self) -> Vec<usize> {
        let mut rng = seed::rng(seed::derive(self.seed, &[0x494e_464f]));
        let mut idx = index::sample(&mut rng, self.n_genes, self.n_informative).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn n_class0(&self) -> usize {
        (self.n_patients as f64 * self.class_balance).round() as usize
    }
}

/// Gaussian expression values with per-gene baseline and spread. Informative
/// genes shift class 1 by `class_separation` standard deviations (direction
/// chosen per gene); the rest are identically distributed in both classes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ExpressionDataset> {
    spec.validate()?;
    let n0 = spec.n_class0();
    let mut labels: Vec<usize> = (0..spec.n_patients).map(|p| (p >= n0) as usize).collect();
    labels.shuffle(&mut seed::rng(seed::derive(spec.seed, &[0x4c41_4245])));

    let informative = spec.informative_indices();
    let mut shift = vec![0.0; spec.n_genes];
    let mut rng = seed::rng(seed::derive(spec.seed, &[0x5348_4946]));
    for &g in &informative {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        shift[g] = sign * spec.class_separation;
    }

    let mut rng = seed::rng(seed::derive(spec.seed, &[0x4241_5345]));
    let baseline: Vec<(f64, f64)> = (0..spec.n_genes)
        .map(|_| (rng.random_range(2.0..12.0), rng.random_range(0.5..2.0)))
        .collect();

    let mut rng = seed::rng(seed::derive(spec.seed, &[0x4e4f_4953]));
    let mut values = Array2::zeros((spec.n_patients, spec.n_genes));
    for (p, mut row) in values.rows_mut().into_iter().enumerate() {
        for (g, x) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let (mu, sd) = baseline[g];
            *x = mu + sd * (z + shift[g] * labels[p] as f64);
        }
    }

    let width = (spec.n_genes.max(2) - 1).to_string().len();
    let pwidth = (spec.n_patients.max(2) - 1).to_string().len();
    ExpressionDataset::new(
        values,
        (0..spec.n_genes).map(|g| format!("GENE{g:0width$}")).collect(),
        (0..spec.n_patients).map(|p| format!("P{p:0pwidth$}")).collect(),
        labels,
        ["Adenocarcinoma".into(), "SquamousCellCarcinoma".into()],
    )
}
