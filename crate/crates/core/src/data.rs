//! Datasets, parameters, teachers, per-sample loss models and importance
//! weighters.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Covariates without responses, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledSet {
    dim: usize,
    data: Vec<f64>,
}

impl UnlabeledSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("covariate dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        check_finite(&data, "unlabeled covariates")?;
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples, `m`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    /// Concatenates the covariates of `other` after those of `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { dim: self.dim, data })
    }
}

/// Covariates with scalar responses. Always holds at least one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    covariates: UnlabeledSet,
    responses: Vec<f64>,
}

impl LabeledSet {
    pub fn new(covariates: UnlabeledSet, responses: Vec<f64>) -> Result<Self> {
        if covariates.len() != responses.len() {
            return Err(Error::InvalidSpec(format!(
                "{} covariate rows but {} responses",
                covariates.len(),
                responses.len()
            )));
        }
        if responses.is_empty() {
            return Err(Error::EmptyLabeledSet);
        }
        check_finite(&responses, "responses")?;
        Ok(Self { covariates, responses })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        Self::new(UnlabeledSet::from_rows(dim, rows)?, responses)
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim
    }

    /// Number of samples, `n`.
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn covariates(&self) -> &UnlabeledSet {
        &self.covariates
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.covariates.row(i)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        self.covariates.rows().zip(self.responses.iter().copied())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let responses = indices.iter().map(|&i| self.responses[i]).collect();
        Self::new(self.covariates.subset(indices), responses)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut responses = self.responses.clone();
        responses.extend_from_slice(&other.responses);
        Self::new(self.covariates.concat(&other.covariates)?, responses)
    }
}

/// A validated unlabeled/labeled pair with matching covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub unlabeled: UnlabeledSet,
    pub labeled: LabeledSet,
}

impl Datasets {
    pub fn m(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn dim(&self) -> usize {
        self.labeled.dim()
    }
}

/// Checks that the two sets can be used together and returns them as a pair.
pub fn validate_datasets(unlabeled: UnlabeledSet, labeled: LabeledSet) -> Result<Datasets> {
    if unlabeled.dim() != labeled.dim() {
        return Err(Error::DimensionMismatch {
            expected: labeled.dim(),
            got: unlabeled.dim(),
        });
    }
    if labeled.responses.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    check_finite(&unlabeled.data, "unlabeled covariates")?;
    check_finite(&labeled.covariates.data, "labeled covariates")?;
    check_finite(&labeled.responses, "responses")?;
    Ok(Datasets { unlabeled, labeled })
}

/// Model parameter vector `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSpec("parameter must have at least one entry".into()));
        }
        check_finite(&values, "parameter")?;
        Ok(Self(values))
    }

    pub fn scalar(value: f64) -> Self {
        Self(vec![value])
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self + step * direction`, unchecked for finiteness.
    pub fn moved(&self, step: f64, direction: &[f64]) -> Self {
        Self(self.0.iter().zip(direction).map(|(t, d)| t + step * d).collect())
    }
}

impl From<f64> for Parameter {
    fn from(value: f64) -> Self {
        Self::scalar(value)
    }
}

/// Ground-truth regression function used by oracle teachers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TruthFn {
    Affine { intercept: f64, slope: Vec<f64> },
    /// Lookup over a finite support; off-support covariates map to the
    /// nearest support point.
    Table { points: Vec<Vec<f64>>, values: Vec<f64> },
}

impl TruthFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TruthFn::Affine { intercept, slope } => affine(*intercept, slope, x),
            TruthFn::Table { points, values } => values[nearest(points, x)],
        }
    }
}

fn affine(intercept: f64, slope: &[f64], x: &[f64]) -> f64 {
    intercept + slope.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn nearest(points: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let dist: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    best
}

/// The teacher families. See [`Teacher`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum TeacherFamily {
    Constant { value: f64 },
    Affine { intercept: f64, slope: Vec<f64> },
    /// `truth(x) + bias + noise_sd * ξ(x)`, where `ξ(x)` is a standard normal
    /// keyed on the covariate bits and `seed`.
    NoisyOracle {
        truth: TruthFn,
        bias: f64,
        noise_sd: f64,
        seed: u64,
    },
    /// Least-squares fit; `coefficients[0]` is the intercept.
    OlsFit { coefficients: Vec<f64>, ridge: f64 },
}

/// A fixed predictor `f̂`. Predictions are pure functions of the covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    pub family: TeacherFamily,
}

impl Teacher {
    pub fn constant(value: f64) -> Self {
        Self {
            family: TeacherFamily::Constant { value },
        }
    }

    pub fn affine(intercept: f64, slope: Vec<f64>) -> Self {
        Self {
            family: TeacherFamily::Affine { intercept, slope },
        }
    }

    pub fn noisy_oracle(truth: TruthFn, bias: f64, noise_sd: f64, seed: u64) -> Self {
        Self {
            family: TeacherFamily::NoisyOracle {
                truth,
                bias,
                noise_sd,
                seed,
            },
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.family {
            TeacherFamily::Constant { value } => *value,
            TeacherFamily::Affine { intercept, slope } => affine(*intercept, slope, x),
            TeacherFamily::NoisyOracle {
                truth,
                bias,
                noise_sd,
                seed,
            } => {
                let base = truth.eval(x) + bias;
                if *noise_sd == 0.0 {
                    base
                } else {
                    base + noise_sd * rng::normal_from_hash(rng::hash_f64s(*seed, x))
                }
            }
            TeacherFamily::OlsFit { coefficients, .. } => affine(coefficients[0], &coefficients[1..], x),
        }
    }

    pub fn predict_rows<'a>(&self, rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
        rows.map(|x| self.predict(x)).collect()
    }
}

/// Per-sample loss `ℓ_θ(x, y)` on the affine score `z = θ_0 + Σ_j θ_j x_j`
/// (the first `p - 1` covariates enter the score). With `p = 1` the score is
/// `θ` itself, so squared error is `(θ - y)²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossModel {
    #[default]
    SquaredError,
    /// Cross-entropy `log(1 + e^z) - y z` for targets in `[0, 1]`.
    Logistic,
}

impl LossModel {
    pub const ALL: [LossModel; 2] = [LossModel::SquaredError, LossModel::Logistic];

    pub fn name(&self) -> &'static str {
        match self {
            LossModel::SquaredError => "squared-error",
            LossModel::Logistic => "logistic",
        }
    }

    /// Errors when `θ` uses more covariates than the data provides.
    pub fn check_dims(&self, theta: &Parameter, dim: usize) -> Result<()> {
        if theta.len() > dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: dim + 1,
                got: theta.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn score(theta: &[f64], x: &[f64]) -> f64 {
        let mut z = theta[0];
        for (t, v) in theta[1..].iter().zip(x) {
            z += t * v;
        }
        z
    }

    #[inline]
    pub fn value_at_score(&self, z: f64, y: f64) -> f64 {
        match self {
            LossModel::SquaredError => (z - y) * (z - y),
            LossModel::Logistic => softplus(z) - y * z,
        }
    }

    /// `∂ℓ/∂z`; the parameter gradient is this times `[1, x_1, ..]`.
    #[inline]
    pub fn score_derivative(&self, z: f64, y: f64) -> f64 {
        match self {
            LossModel::SquaredError => 2.0 * (z - y),
            LossModel::Logistic => sigmoid(z) - y,
        }
    }

    pub fn value(&self, theta: &Parameter, x: &[f64], y: f64) -> f64 {
        self.value_at_score(Self::score(theta.as_slice(), x), y)
    }

    pub fn gradient(&self, theta: &Parameter, x: &[f64], y: f64) -> Vec<f64> {
        let t = theta.as_slice();
        let dz = self.score_derivative(Self::score(t, x), y);
        let mut g = Vec::with_capacity(t.len());
        g.push(dz);
        g.extend(x[..t.len() - 1].iter().map(|v| dz * v));
        g
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Density-ratio weight `π(x) = P_X(x) / Q_X(x)` applied to labeled terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ImportanceWeighter {
    Constant { value: f64 },
    /// Exact lookup over a finite support; covariates outside the support
    /// get weight `NaN`, which the losses reject.
    Table { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl ImportanceWeighter {
    pub fn uniform() -> Self {
        ImportanceWeighter::Constant { value: 1.0 }
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        match self {
            ImportanceWeighter::Constant { value } => *value,
            ImportanceWeighter::Table { points, weights } => points
                .iter()
                .position(|p| p.as_slice() == x)
                .map_or(f64::NAN, |i| weights[i]),
        }
    }
}

fn csv_header(dim: usize, labeled: bool) -> Vec<String> {
    let mut header: Vec<String> = (1..=dim).map(|j| format!("x_{j}")).collect();
    if labeled {
        header.push("y".into());
    }
    header
}

fn read_table<R: Read>(reader: R, labeled: bool) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let dim = if labeled { header.len().saturating_sub(1) } else { header.len() };
    if dim == 0 || header != csv_header(dim, labeled) {
        return Err(Error::InvalidSpec(format!(
            "expected header x_1..x_d{}, got {:?}",
            if labeled { ",y" } else { "" },
            header
        )));
    }
    let mut data = Vec::new();
    let mut responses = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch {
                expected: header.len(),
                got: record.len(),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("row {}: cannot parse {field:?}", line + 1)))?;
            if labeled && j == dim {
                responses.push(v);
            } else {
                data.push(v);
            }
        }
    }
    Ok((dim, data, responses))
}

pub fn read_unlabeled<R: Read>(reader: R) -> Result<UnlabeledSet> {
    let (dim, data, _) = read_table(reader, false)?;
    UnlabeledSet::new(dim, data)
}

pub fn read_labeled<R: Read>(reader: R) -> Result<LabeledSet> {
    let (dim, data, responses) = read_table(reader, true)?;
    LabeledSet::new(UnlabeledSet::new(dim, data)?, responses)
}

pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<UnlabeledSet> {
    read_unlabeled(std::fs::File::open(path)?)
}

pub fn load_labeled(path: impl AsRef<Path>) -> Result<LabeledSet> {
    read_labeled(std::fs::File::open(path)?)
}

pub fn write_unlabeled<W: Write>(set: &UnlabeledSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(csv_header(set.dim(), false))?;
    for row in set.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_labeled<W: Write>(set: &LabeledSet, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(csv_header(set.dim(), true))?;
    for (row, y) in set.iter() {
        wtr.write_record(row.iter().chain(std::iter::once(&y)).map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}
