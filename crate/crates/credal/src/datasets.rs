//! Synthetic data generators, OoD shifts, and CSV ingestion.
//!
//! Training always targets hard labels; ground-truth conditional
//! distributions, when a generator or label file provides them, are carried
//! separately and used only for evaluation (coverage needs them, training
//! does not).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::prob::PROB_SUM_TOL;
use crate::rng::split_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    /// Generator parameters, shift offsets, source paths.
    pub params: serde_json::Value,
}

/// A fixed classification sample: `n` rows of `n_features` features with
/// hard labels in `[0, n_classes)`, optionally accompanied by the
/// ground-truth conditional distribution of each row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    n_features: usize,
    n_classes: usize,
    features: Vec<f64>,
    hard_labels: Vec<usize>,
    ground_truth: Option<Vec<f64>>,
}

impl Dataset {
    pub fn from_parts(
        name: &str,
        seed: u64,
        features: Vec<Vec<f64>>,
        hard_labels: Vec<usize>,
        ground_truth: Option<Vec<Vec<f64>>>,
        n_classes: usize,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Input("dataset must contain at least one row".into()));
        }
        if features.len() != hard_labels.len() {
            return Err(Error::Input(format!(
                "{} feature rows but {} labels",
                features.len(),
                hard_labels.len()
            )));
        }
        let n_features = features[0].len();
        if n_features == 0 {
            return Err(Error::Input("rows must have at least one feature".into()));
        }
        if features.iter().any(|r| r.len() != n_features) {
            return Err(Error::Input("ragged feature rows".into()));
        }
        if n_classes == 0 {
            return Err(Error::Input("n_classes must be positive".into()));
        }
        if let Some(&bad) = hard_labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let ground_truth = match ground_truth {
            None => None,
            Some(rows) => {
                if rows.len() != features.len() {
                    return Err(Error::Input(
                        "ground-truth rows must match feature rows".into(),
                    ));
                }
                let mut flat = Vec::with_capacity(rows.len() * n_classes);
                for row in &rows {
                    validate_distribution_row(row, n_classes)?;
                    flat.extend_from_slice(row);
                }
                Some(flat)
            }
        };
        Ok(Self {
            meta: DatasetMeta {
                name: name.to_string(),
                seed,
                params: serde_json::Value::Null,
            },
            n_features,
            n_classes,
            features: features.into_iter().flatten().collect(),
            hard_labels,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.hard_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard_labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.hard_labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.hard_labels
    }

    pub fn has_ground_truth(&self) -> bool {
        self.ground_truth.is_some()
    }

    pub fn ground_truth_row(&self, i: usize) -> Option<&[f64]> {
        self.ground_truth
            .as_ref()
            .map(|g| &g[i * self.n_classes..(i + 1) * self.n_classes])
    }

    /// Translates all feature rows by `offset` and drops the ground-truth
    /// distributions (a shifted input has no claimed truth). The offset is
    /// recorded in the metadata.
    pub fn shift_ood(&self, offset: &[f64]) -> Result<Dataset> {
        if offset.len() != self.n_features {
            return Err(Error::Input(format!(
                "offset has {} entries, dataset has {} features",
                offset.len(),
                self.n_features
            )));
        }
        let mut shifted = self.clone();
        for row in 0..shifted.len() {
            for (j, &o) in offset.iter().enumerate() {
                shifted.features[row * self.n_features + j] += o;
            }
        }
        shifted.ground_truth = None;
        shifted.meta.name = format!("{}+shift", self.meta.name);
        shifted.meta.params = json!({
            "base": self.meta.params,
            "shift_offset": offset,
        });
        Ok(shifted)
    }
}

fn validate_distribution_row(row: &[f64], n_classes: usize) -> Result<()> {
    if row.len() != n_classes {
        return Err(Error::Input(format!(
            "ground-truth row has {} entries, expected {n_classes}",
            row.len()
        )));
    }
    if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Input(format!("invalid ground-truth row {row:?}")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::Input(format!(
            "ground-truth row sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

const LABEL_STREAM: u64 = 0x4C_41_42;

/// Draws a class index from `dist` using the provided uniform variate.
fn sample_class(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    dist.len() - 1
}

/// Bernoulli observations with a single constant feature.
///
/// Ground truth for every row is `(1 - theta, theta)`; labels are i.i.d.
/// draws from it.
pub fn gen_bernoulli(n: usize, theta: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [0, 1], got {theta}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, LABEL_STREAM));
    let truth = vec![1.0 - theta, theta];
    let labels: Vec<usize> = (0..n)
        .map(|_| sample_class(&truth, rng.gen::<f64>()))
        .collect();
    let features = vec![vec![1.0]; n];
    let gt = vec![truth; n];
    let mut data = Dataset::from_parts("bernoulli", seed, features, labels, Some(gt), 2)?;
    data.meta.params = json!({ "n": n, "theta": theta });
    Ok(data)
}

/// Isotropic Gaussian mixture with analytically known class posteriors.
///
/// Each row draws a component `y ~ priors`, then `x ~ N(means[y], sigma^2 I)`.
/// The stored ground truth is the Bayes posterior `p(y | x)` and the hard
/// label is re-sampled from that posterior, so labels carry the same
/// aleatoric noise an annotator pool would.
pub fn gen_gaussian_mixture(
    n: usize,
    means: &[Vec<f64>],
    sigma: f64,
    priors: &[f64],
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    let k = means.len();
    if k == 0 {
        return Err(Error::Config("need at least one mixture component".into()));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::Config("component means must share a positive dimension".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if priors.len() != k {
        return Err(Error::Config(format!(
            "{} priors for {k} components",
            priors.len()
        )));
    }
    if priors.iter().any(|&p| !p.is_finite() || p < 0.0)
        || (priors.iter().sum::<f64>() - 1.0).abs() > PROB_SUM_TOL
    {
        return Err(Error::Config(format!(
            "priors must be a probability distribution, got {priors:?}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, LABEL_STREAM));
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for _ in 0..n {
        let comp = sample_class(priors, rng.gen::<f64>());
        let x: Vec<f64> = means[comp]
            .iter()
            .map(|&mu| mu + normal.sample(&mut rng))
            .collect();
        let posterior = gaussian_posterior(&x, means, sigma, priors);
        let label = sample_class(&posterior, rng.gen::<f64>());
        features.push(x);
        labels.push(label);
        gt.push(posterior);
    }
    let mut data = Dataset::from_parts("gaussian_mixture", seed, features, labels, Some(gt), k)?;
    data.meta.params = json!({
        "n": n,
        "sigma": sigma,
        "priors": priors,
        "means": means,
    });
    Ok(data)
}

/// Bayes posterior of the mixture component given `x`, in the log domain.
pub fn gaussian_posterior(x: &[f64], means: &[Vec<f64>], sigma: f64, priors: &[f64]) -> Vec<f64> {
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut logw: Vec<f64> = means
        .iter()
        .zip(priors)
        .map(|(mu, &pi)| {
            let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
            if pi > 0.0 {
                pi.ln() - sq * inv_two_var
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logw.iter().map(|&w| (w - max).exp()).sum::<f64>().ln();
    for w in &mut logw {
        *w = (*w - lse).exp();
    }
    let sum: f64 = logw.iter().sum();
    for w in &mut logw {
        *w /= sum;
    }
    logw
}

/// How the label columns of a CSV file are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// One column holding a class index in `[0, K)`.
    Hard,
    /// `K` columns of nonnegative integer annotation counts, normalized into
    /// a ground-truth distribution; hard labels are sampled from it.
    Counts,
    /// `K` columns of probabilities summing to 1 within 1e-6; hard labels
    /// are sampled from the row.
    Probs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub n_features: usize,
    pub n_classes: usize,
    pub label_mode: LabelMode,
}

const CSV_ROW_SUM_TOL: f64 = 1e-6;

/// Loads a dataset from a headered CSV file: `n_features` feature columns
/// followed by the label column(s) dictated by the schema's label mode.
pub fn load_csv(path: &Path, schema: &CsvSchema, seed: u64) -> Result<Dataset> {
    if schema.n_features == 0 || schema.n_classes == 0 {
        return Err(Error::Config("schema dimensions must be positive".into()));
    }
    let label_cols = match schema.label_mode {
        LabelMode::Hard => 1,
        LabelMode::Counts | LabelMode::Probs => schema.n_classes,
    };
    let expected_cols = schema.n_features + label_cols;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_to_error)?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, LABEL_STREAM));

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut gt: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_to_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != expected_cols {
            return Err(Error::Parse {
                line,
                message: format!("expected {expected_cols} columns, found {}", record.len()),
            });
        }
        let parse_f64 = |field: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse '{field}' as a number"),
            })
        };
        let row: Vec<f64> = record
            .iter()
            .take(schema.n_features)
            .map(parse_f64)
            .collect::<Result<_>>()?;
        features.push(row);

        match schema.label_mode {
            LabelMode::Hard => {
                let field = record.get(schema.n_features).unwrap();
                let y: usize = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse '{field}' as a class index"),
                })?;
                if y >= schema.n_classes {
                    return Err(Error::Validation {
                        line,
                        message: format!("class index {y} out of range for {} classes", schema.n_classes),
                    });
                }
                labels.push(y);
            }
            LabelMode::Counts => {
                let mut counts = Vec::with_capacity(schema.n_classes);
                for field in record.iter().skip(schema.n_features) {
                    let c: u64 = field.trim().parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("cannot parse '{field}' as a nonnegative count"),
                    })?;
                    counts.push(c as f64);
                }
                let total: f64 = counts.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Validation {
                        line,
                        message: "count row sums to zero".into(),
                    });
                }
                let dist: Vec<f64> = counts.iter().map(|c| c / total).collect();
                labels.push(sample_class(&dist, rng.gen::<f64>()));
                gt.push(dist);
            }
            LabelMode::Probs => {
                let mut dist = Vec::with_capacity(schema.n_classes);
                for field in record.iter().skip(schema.n_features) {
                    let p = parse_f64(field)?;
                    if !(0.0..=1.0 + CSV_ROW_SUM_TOL).contains(&p) {
                        return Err(Error::Validation {
                            line,
                            message: format!("probability {p} outside [0, 1]"),
                        });
                    }
                    dist.push(p);
                }
                let sum: f64 = dist.iter().sum();
                if (sum - 1.0).abs() > CSV_ROW_SUM_TOL {
                    return Err(Error::Validation {
                        line,
                        message: format!("probability row sums to {sum}, expected 1 within {CSV_ROW_SUM_TOL}"),
                    });
                }
                for p in &mut dist {
                    *p /= sum;
                }
                labels.push(sample_class(&dist, rng.gen::<f64>()));
                gt.push(dist);
            }
        }
    }
    if features.is_empty() {
        return Err(Error::Input(format!("{} contains no data rows", path.display())));
    }
    let gt = match schema.label_mode {
        LabelMode::Hard => None,
        _ => Some(gt),
    };
    let mut data = Dataset::from_parts(
        &path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into()),
        seed,
        features,
        labels,
        gt,
        schema.n_classes,
    )?;
    data.meta.params = json!({
        "path": path.display().to_string(),
        "schema": schema,
    });
    Ok(data)
}

fn csv_to_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
