//! Synthetic Gaussian data, covariate-shift construction, splitting, and
//! CSV ingestion for externally scored data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::link::LinkFunction;

/// Feature matrix plus binary labels; the universal data carrier.
///
/// Row identifiers survive shuffles, splits, and rejection sampling, so
/// partitions can be checked for disjointness.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    ids: Vec<u64>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        let ids = (0..labels.len() as u64).collect();
        Self::with_ids(features, labels, ids)
    }

    pub fn with_ids(features: Array2<f64>, labels: Vec<u8>, ids: Vec<u64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || features.ncols() == 0 {
            return Err(Error::invalid_input(
                "dataset needs at least one row and one feature".to_string(),
            ));
        }
        if labels.len() != n || ids.len() != n {
            return Err(Error::invalid_input(format!(
                "row count mismatch: {} features, {} labels, {} ids",
                n,
                labels.len(),
                ids.len()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid_input(format!("non-finite feature value {bad}")));
        }
        if let Some(bad) = labels.iter().find(|l| **l > 1) {
            return Err(Error::invalid_input(format!("labels must be 0/1, got {bad}")));
        }
        Ok(Self { features, labels, ids })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.n() as f64
    }

    /// New dataset holding `rows` (in the given order).
    pub fn take_rows(&self, rows: &[usize]) -> Self {
        let d = self.dim();
        let mut features = Array2::<f64>::zeros((rows.len(), d));
        let mut labels = Vec::with_capacity(rows.len());
        let mut ids = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            features.row_mut(out).assign(&self.features.row(r));
            labels.push(self.labels[r]);
            ids.push(self.ids[r]);
        }
        Self { features, labels, ids }
    }
}

/// Covariance matrix, stored diagonally when that is all the caller needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// `variance · I`
    ScaledIdentity(f64),
    /// Per-coordinate variances.
    Diagonal(Vec<f64>),
    /// Full symmetric PSD matrix, row-major.
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn dim(&self, d: usize) -> usize {
        match self {
            Covariance::ScaledIdentity(_) => d,
            Covariance::Diagonal(v) => v.len(),
            Covariance::Full(m) => m.len(),
        }
    }

    /// Materialize as a dense matrix of dimension `d`.
    pub fn to_matrix(&self, d: usize) -> Result<Array2<f64>> {
        match self {
            Covariance::ScaledIdentity(v) => {
                if *v < 0.0 {
                    return Err(Error::invalid_config(format!("negative variance {v}")));
                }
                Ok(Array2::eye(d) * *v)
            }
            Covariance::Diagonal(vars) => {
                if vars.len() != d {
                    return Err(Error::invalid_config(format!(
                        "diagonal covariance has dim {} but expected {d}",
                        vars.len()
                    )));
                }
                if let Some(v) = vars.iter().find(|v| **v < 0.0) {
                    return Err(Error::invalid_config(format!("negative variance {v}")));
                }
                Ok(Array2::from_diag(&Array1::from_vec(vars.clone())))
            }
            Covariance::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid_config(format!(
                        "full covariance must be {d}x{d}"
                    )));
                }
                let mut m = Array2::<f64>::zeros((d, d));
                for (i, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        m[[i, j]] = *v;
                    }
                }
                Ok(m)
            }
        }
    }

    /// Lower Cholesky factor; errors on non-PSD input.
    pub fn cholesky_factor(&self, d: usize) -> Result<Array2<f64>> {
        let m = self.to_matrix(d)?;
        cholesky(&m).map_err(|e| Error::invalid_config(format!("covariance: {e}")))
    }

    /// aᵀ Σ b
    pub fn quadratic_form(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = a.len();
        if b.len() != d {
            return Err(Error::invalid_input("dimension mismatch in quadratic form"));
        }
        match self {
            Covariance::ScaledIdentity(v) => {
                Ok(*v * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            }
            Covariance::Diagonal(vars) => {
                if vars.len() != d {
                    return Err(Error::invalid_input("dimension mismatch in quadratic form"));
                }
                Ok(a.iter().zip(b).zip(vars).map(|((x, y), v)| x * y * v).sum())
            }
            Covariance::Full(_) => {
                let m = self.to_matrix(d)?;
                let av = Array1::from_vec(a.to_vec());
                let bv = Array1::from_vec(b.to_vec());
                Ok(av.dot(&m.dot(&bv)))
            }
        }
    }
}

/// Parameters of one Gaussian feature law with a logistic ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub mu: Vec<f64>,
    pub sigma: Covariance,
    pub beta_star: Vec<f64>,
    pub n: usize,
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.mu.len();
        if d == 0 {
            return Err(Error::invalid_config("mu must be non-empty"));
        }
        if self.beta_star.len() != d {
            return Err(Error::invalid_config(format!(
                "beta_star has dim {} but mu has dim {d}",
                self.beta_star.len()
            )));
        }
        if self.n == 0 {
            return Err(Error::invalid_config("n must be positive"));
        }
        self.sigma.cholesky_factor(d)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Draw `cfg.n` i.i.d. rows `X ~ N(mu, sigma)` with labels
/// `Y ~ Bernoulli(sigmoid(beta_star · x))`.
pub fn generate_synthetic(cfg: &GaussianConfig, rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
    cfg.validate()?;
    let d = cfg.dim();
    let l = cfg.sigma.cholesky_factor(d)?;
    let mut features = Array2::<f64>::zeros((cfg.n, d));
    let mut labels = Vec::with_capacity(cfg.n);
    let mut z = vec![0.0f64; d];
    for row in 0..cfg.n {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(rng);
        }
        let mut logit = 0.0;
        for i in 0..d {
            let mut x = cfg.mu[i];
            // lower-triangular: only the first i+1 entries of z contribute
            for k in 0..=i {
                x += l[[i, k]] * z[k];
            }
            features[[row, i]] = x;
            logit += cfg.beta_star[i] * x;
        }
        let p = LinkFunction::Logistic.phi(logit);
        labels.push(u8::from(rng.random::<f64>() < p));
    }
    LabeledDataset::new(features, labels)
}

/// Per-row keep probability for rejection-sampled covariate shift, as a
/// function of an auxiliary score `p` in `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepProb {
    /// keep with probability `1 − p`
    OneMinusP,
    /// `1 − p` below `low`, `0.1` above `high`, `2.2 − 7p` between
    Piecewise { low: f64, high: f64 },
}

impl KeepProb {
    pub fn piecewise_default() -> Self {
        KeepProb::Piecewise { low: 0.2, high: 0.3 }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match self {
            KeepProb::OneMinusP => 1.0 - p,
            KeepProb::Piecewise { low, high } => {
                let v = if p < *low {
                    1.0 - p
                } else if p > *high {
                    0.1
                } else {
                    2.2 - 7.0 * p
                };
                v.clamp(0.0, 1.0)
            }
        }
    }
}

/// Keep each row independently with probability `keep_prob(aux_scores[i])`.
/// Retained rows keep their original order and identifiers; an empty result
/// is only a warning since downstream code may retry with another seed.
pub fn rejection_shift(
    data: &LabeledDataset,
    keep_prob: &KeepProb,
    aux_scores: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    if aux_scores.len() != data.n() {
        return Err(Error::invalid_input(format!(
            "aux_scores has {} entries for {} rows",
            aux_scores.len(),
            data.n()
        )));
    }
    if let Some(bad) = aux_scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid_input(format!(
            "aux score {bad} outside [0, 1]"
        )));
    }
    let mut kept = Vec::new();
    for (i, p) in aux_scores.iter().enumerate() {
        if rng.random::<f64>() < keep_prob.eval(*p) {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        log::warn!("rejection_shift retained no rows");
        return Ok(LabeledDataset {
            features: Array2::zeros((0, data.dim())),
            labels: Vec::new(),
            ids: Vec::new(),
        });
    }
    Ok(data.take_rows(&kept))
}

/// Four-way split fractions; must sum to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val_train: f64,
    pub val_test: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val_train, self.val_test, self.test];
        if parts.iter().any(|f| *f < 0.0) {
            return Err(Error::invalid_config("split fractions must be non-negative"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_config(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// The four disjoint parts produced by [`split`].
#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: LabeledDataset,
    pub val_train: LabeledDataset,
    pub val_test: LabeledDataset,
    pub test: LabeledDataset,
}

/// Uniformly shuffle, then partition. The first three parts get
/// `floor(fraction · n)` rows each; remainder rows go to the test split.
pub fn split(data: &LabeledDataset, spec: &SplitSpec, rng: &mut ChaCha8Rng) -> Result<SplitDatasets> {
    spec.validate()?;
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (spec.train * n as f64).floor() as usize;
    let n_val_train = (spec.val_train * n as f64).floor() as usize;
    let n_val_test = (spec.val_test * n as f64).floor() as usize;
    let used = n_train + n_val_train + n_val_test;
    if used > n {
        return Err(Error::invalid_config("split fractions exceed dataset size"));
    }
    let n_test = n - used;
    for (name, frac, size) in [
        ("train", spec.train, n_train),
        ("val_train", spec.val_train, n_val_train),
        ("val_test", spec.val_test, n_val_test),
        ("test", spec.test, n_test),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(Error::degenerate(format!(
                "split '{name}' would be empty (fraction {frac}, n {n})"
            )));
        }
    }
    let a = n_train;
    let b = a + n_val_train;
    let c = b + n_val_test;
    Ok(SplitDatasets {
        train: data.take_rows(&order[..a]),
        val_train: data.take_rows(&order[a..b]),
        val_test: data.take_rows(&order[b..c]),
        test: data.take_rows(&order[c..]),
    })
}

/// Labels plus `S` score columns, as read from a scores CSV
/// (`label,l1,...,lS`).
#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub labels: Vec<u8>,
    /// n × S logits, column `0` is the deployment member.
    pub logits: Array2<f64>,
}

impl ScoreTable {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self) -> usize {
        self.logits.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.logits.column(i).to_vec()
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly on re-parse.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a feature dataset as CSV with header `label,f1,...,fd`.
pub fn write_features_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for j in 1..=data.dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for i in 0..data.n() {
        let _ = write!(out, "{}", data.labels()[i]);
        for j in 0..data.dim() {
            let _ = write!(out, ",{}", fmt_float(data.features()[[i, j]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a score table as CSV with header `label,l1,...,lS`.
pub fn write_scores_csv(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for j in 1..=table.members() {
        let _ = write!(out, ",l{j}");
    }
    out.push('\n');
    for i in 0..table.n() {
        let _ = write!(out, "{}", table.labels[i]);
        for j in 0..table.members() {
            let _ = write!(out, ",{}", fmt_float(table.logits[[i, j]]));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parse a CSV with header `label,<prefix>1,...,<prefix>k`; returns labels
/// and the numeric columns.
fn load_labeled_csv(path: &Path, prefix: &str) -> Result<(Vec<u8>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{}: {e}", path.display()),
            )),
            _ => parse_err(1, e.to_string()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "label" {
        return Err(parse_err(
            1,
            format!("expected header 'label,{prefix}1,...', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let k = headers.len() - 1;
    for (j, name) in headers.iter().skip(1).enumerate() {
        let expect = format!("{prefix}{}", j + 1);
        if name != expect {
            return Err(parse_err(1, format!("expected column '{expect}', got '{name}'")));
        }
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2; // 1-based, after the header
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != k + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", k + 1, record.len()),
            ));
        }
        let label: i64 = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("label '{}' is not an integer", &record[0])))?;
        if label != 0 && label != 1 {
            return Err(parse_err(line, format!("label must be 0 or 1, got {label}")));
        }
        labels.push(label as u8);
        for j in 1..=k {
            let v: f64 = record[j]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("'{}' is not a number", &record[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {v}")));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(2, "file has no data rows".to_string()));
    }
    let matrix = Array2::from_shape_vec((labels.len(), k), values)
        .expect("row-major construction cannot fail");
    Ok((labels, matrix))
}

/// Load a feature CSV (`label,f1,...,fd`).
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let (labels, features) = load_labeled_csv(path, "f")?;
    LabeledDataset::new(features, labels)
}

/// Load a scores CSV (`label,l1,...,lS`).
pub fn load_scores_csv(path: &Path) -> Result<ScoreTable> {
    let (labels, logits) = load_labeled_csv(path, "l")?;
    Ok(ScoreTable { labels, logits })
}
