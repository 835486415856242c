//! Seeded synthetic data: linear-Gaussian regression data, teacher
//! construction, and enumerable covariate-shift instances.
//!
//! All draws come from [`crate::rng::stream_rng`], so a dataset is a pure
//! function of its spec and seed.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::closed_form::{fit_linear_teacher, OlsOptions};
use crate::data::{ImportanceWeighter, LabeledSet, Teacher, TruthFn, UnlabeledSet};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Eigenvalues down to this are clamped to zero; below it the covariance is
/// rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `X ~ N(x_mean, x_cov)`, `Y = β_1 + β_{(-1)}ᵀX + ε`, `ε ~ N(0, noise_sd²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGaussianSpec {
    pub d: usize,
    /// Intercept first, length `d + 1`.
    pub beta: Vec<f64>,
    pub noise_sd: f64,
    pub x_mean: Vec<f64>,
    pub x_cov: Vec<Vec<f64>>,
    #[serde(default)]
    pub m: usize,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Population quantities behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `E[Y]`.
    pub theta_star: f64,
    pub beta: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_cov: Vec<Vec<f64>>,
    pub noise_sd: f64,
}

impl GroundTruth {
    pub fn truth_fn(&self) -> TruthFn {
        TruthFn::Affine {
            intercept: self.beta[0],
            slope: self.beta[1..].to_vec(),
        }
    }

    /// `Var[Y] = β_{(-1)}ᵀ Σ β_{(-1)} + σ²`.
    pub fn var_y(&self) -> f64 {
        self.explained_variance() + self.noise_sd * self.noise_sd
    }

    pub fn explained_variance(&self) -> f64 {
        let slope = &self.beta[1..];
        let mut q = 0.0;
        for (i, row) in self.x_cov.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                q += slope[i] * s * slope[j];
            }
        }
        q
    }
}

/// Reusable sampler holding the covariance factor.
#[derive(Debug, Clone)]
pub struct LinearGaussianSampler {
    spec: LinearGaussianSpec,
    /// Row-major `d × d` factor `L` with `L Lᵀ = x_cov`.
    factor: Vec<f64>,
}

impl LinearGaussianSampler {
    pub fn new(spec: &LinearGaussianSpec) -> Result<Self> {
        let d = spec.d;
        if d == 0 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if spec.beta.len() != d + 1 {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                got: spec.beta.len(),
            });
        }
        if spec.x_mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: spec.x_mean.len(),
            });
        }
        if spec.x_cov.len() != d || spec.x_cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidSpec(format!("x_cov must be {d}x{d}")));
        }
        if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec("noise_sd must be finite and non-negative".into()));
        }
        let all = spec.beta.iter().chain(&spec.x_mean).chain(spec.x_cov.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear-Gaussian spec".into()));
        }
        let factor = symmetric_factor(&spec.x_cov)?;
        Ok(Self {
            spec: spec.clone(),
            factor,
        })
    }

    pub fn spec(&self) -> &LinearGaussianSpec {
        &self.spec
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let s = &self.spec;
        let theta_star = s.beta[0] + s.beta[1..].iter().zip(&s.x_mean).map(|(b, mu)| b * mu).sum::<f64>();
        GroundTruth {
            theta_star,
            beta: s.beta.clone(),
            x_mean: s.x_mean.clone(),
            x_cov: s.x_cov.clone(),
            noise_sd: s.noise_sd,
        }
    }

    fn draw_covariate<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut Vec<f64>) {
        let d = self.spec.d;
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let row = &self.factor[i * d..(i + 1) * d];
            out.push(self.spec.x_mean[i] + row.iter().zip(z.iter()).map(|(l, v)| l * v).sum::<f64>());
        }
    }

    /// Draws `m` unlabeled covariates, then `n` labeled pairs.
    pub fn sample(&self, m: usize, n: usize, seed: u64) -> Result<(UnlabeledSet, LabeledSet)> {
        let d = self.spec.d;
        let mut rng = rng::stream_rng(seed, streams::DATA);
        let mut z = vec![0.0; d];
        let mut unlabeled = Vec::with_capacity(m * d);
        for _ in 0..m {
            self.draw_covariate(&mut rng, &mut z, &mut unlabeled);
        }
        let mut labeled = Vec::with_capacity(n * d);
        let mut responses = Vec::with_capacity(n);
        let (intercept, slope) = (self.spec.beta[0], &self.spec.beta[1..]);
        for i in 0..n {
            self.draw_covariate(&mut rng, &mut z, &mut labeled);
            let x = &labeled[i * d..(i + 1) * d];
            let eps: f64 = rng.sample(StandardNormal);
            let mean = intercept + slope.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            responses.push(mean + self.spec.noise_sd * eps);
        }
        Ok((
            UnlabeledSet::new(d, unlabeled)?,
            LabeledSet::new(UnlabeledSet::new(d, labeled)?, responses)?,
        ))
    }
}

fn symmetric_factor(cov: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = cov.len();
    let mat = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    for i in 0..d {
        for j in 0..i {
            if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * (1.0 + mat[(i, j)].abs()) {
                return Err(Error::InvalidSpec("covariance must be symmetric".into()));
            }
        }
    }
    let eig = SymmetricEigen::new(mat);
    let mut values = eig.eigenvalues.clone();
    for v in values.iter_mut() {
        if *v < -PSD_TOLERANCE {
            return Err(Error::InvalidSpec(format!(
                "covariance is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        if *v < 0.0 {
            log::warn!("clamping covariance eigenvalue {v:e} to zero");
            *v = 0.0;
        }
    }
    let mut factor = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            factor[i * d + k] = eig.eigenvectors[(i, k)] * values[k].sqrt();
        }
    }
    Ok(factor)
}

/// Generates `(unlabeled, labeled, truth)` using the spec's own `m`, `n` and
/// `seed`.
pub fn gen_linear_gaussian(spec: &LinearGaussianSpec) -> Result<(UnlabeledSet, LabeledSet, GroundTruth)> {
    let sampler = LinearGaussianSampler::new(spec)?;
    let (u, l) = sampler.sample(spec.m, spec.n, spec.seed)?;
    Ok((u, l, sampler.ground_truth()))
}

/// Teacher families buildable from a ground-truth function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum TeacherSpec {
    /// The regression function itself.
    Perfect,
    /// Truth shifted by a constant.
    Biased { bias: f64 },
    /// Truth plus bias plus per-covariate seeded Gaussian noise.
    Noisy {
        #[serde(default)]
        bias: f64,
        noise_sd: f64,
        #[serde(default)]
        seed: u64,
    },
    Constant { value: f64 },
    Affine { intercept: f64, slope: Vec<f64> },
    /// Least squares on the supplied training data.
    Ols {
        #[serde(default)]
        ridge: f64,
    },
}

impl TeacherSpec {
    /// Short name used in report rows.
    pub fn label(&self) -> String {
        match self {
            TeacherSpec::Perfect => "perfect".into(),
            TeacherSpec::Biased { bias } => format!("biased({bias})"),
            TeacherSpec::Noisy { bias, noise_sd, .. } => format!("noisy({bias},{noise_sd})"),
            TeacherSpec::Constant { value } => format!("constant({value})"),
            TeacherSpec::Affine { .. } => "affine".into(),
            TeacherSpec::Ols { ridge } if *ridge == 0.0 => "ols".into(),
            TeacherSpec::Ols { ridge } => format!("ols({ridge})"),
        }
    }
}

/// Builds a teacher. The truth-based families need `truth`; `Ols` needs
/// `training`.
pub fn make_teacher(spec: &TeacherSpec, truth: Option<&TruthFn>, training: Option<&LabeledSet>) -> Result<Teacher> {
    let truth = || {
        truth
            .cloned()
            .ok_or_else(|| Error::InvalidSpec(format!("{} teacher needs a known regression function", spec.label())))
    };
    Ok(match spec {
        TeacherSpec::Perfect => Teacher::noisy_oracle(truth()?, 0.0, 0.0, 0),
        TeacherSpec::Biased { bias } => Teacher::noisy_oracle(truth()?, *bias, 0.0, 0),
        TeacherSpec::Noisy { bias, noise_sd, seed } => {
            if !(*noise_sd >= 0.0) {
                return Err(Error::InvalidSpec("teacher noise_sd must be non-negative".into()));
            }
            Teacher::noisy_oracle(truth()?, *bias, *noise_sd, *seed)
        }
        TeacherSpec::Constant { value } => Teacher::constant(*value),
        TeacherSpec::Affine { intercept, slope } => Teacher::affine(*intercept, slope.clone()),
        TeacherSpec::Ols { ridge } => {
            let data = training.ok_or_else(|| Error::InvalidSpec("an OLS teacher needs training data".into()))?;
            fit_linear_teacher(data, OlsOptions { ridge: *ridge })?
        }
    })
}

/// Finite covariate support with separate unlabeled (`p_x`) and labeled
/// (`q_x`) marginals and a shared finite conditional law of `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteMismatchSpec {
    pub support: Vec<Vec<f64>>,
    pub p_x: Vec<f64>,
    pub q_x: Vec<f64>,
    /// Per support point, `[value, probability]` pairs.
    pub y_given_x: Vec<Vec<[f64; 2]>>,
}

const PROB_TOLERANCE: f64 = 1e-12;

fn check_distribution(probs: &[f64], what: &str) -> Result<()> {
    if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidSpec(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidSpec(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl DiscreteMismatchSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.support.len();
        if k == 0 {
            return Err(Error::InvalidSpec("support is empty".into()));
        }
        let d = self.support[0].len();
        if d == 0 || self.support.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidSpec("support points must share a positive dimension".into()));
        }
        if self.p_x.len() != k || self.q_x.len() != k || self.y_given_x.len() != k {
            return Err(Error::InvalidSpec(format!(
                "p_x, q_x and y_given_x must each have {k} entries"
            )));
        }
        check_distribution(&self.p_x, "p_x")?;
        check_distribution(&self.q_x, "q_x")?;
        for (i, cond) in self.y_given_x.iter().enumerate() {
            if cond.is_empty() || cond.iter().any(|[v, _]| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("y_given_x[{i}] is empty or non-finite")));
            }
            let probs: Vec<f64> = cond.iter().map(|[_, p]| *p).collect();
            check_distribution(&probs, &format!("y_given_x[{i}]"))?;
        }
        for (i, (p, q)) in self.p_x.iter().zip(&self.q_x).enumerate() {
            if *p > 0.0 && *q <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "support violation at point {i}: q_x is zero where p_x is positive"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    /// `π(x) = P_X(x) / Q_X(x)` on points where `Q_X(x) > 0`.
    pub fn exact_weighter(&self) -> ImportanceWeighter {
        let (points, weights) = self
            .support
            .iter()
            .zip(self.p_x.iter().zip(&self.q_x))
            .filter(|(_, (_, q))| **q > 0.0)
            .map(|(x, (p, q))| (x.clone(), p / q))
            .unzip();
        ImportanceWeighter::Table { points, weights }
    }

    /// `E[Y | X = x]` as a lookup table.
    pub fn conditional_mean(&self) -> TruthFn {
        TruthFn::Table {
            points: self.support.clone(),
            values: self
                .y_given_x
                .iter()
                .map(|cond| cond.iter().map(|[v, p]| v * p).sum())
                .collect(),
        }
    }
}

fn draw_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Unlabeled covariates from `P_X`, labeled pairs from `Q_X × P_{Y|X}`, and the
/// exact density-ratio weighter.
pub fn gen_discrete_mismatch(
    spec: &DiscreteMismatchSpec,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(UnlabeledSet, LabeledSet, ImportanceWeighter)> {
    spec.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::InvalidSpec("discrete mismatch sampling needs m, n >= 1".into()));
    }
    let d = spec.dim();
    let mut rng = rng::stream_rng(seed, streams::DATA);
    let mut unlabeled = Vec::with_capacity(m * d);
    for _ in 0..m {
        unlabeled.extend_from_slice(&spec.support[draw_index(&mut rng, &spec.p_x)]);
    }
    let mut labeled = Vec::with_capacity(n * d);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let k = draw_index(&mut rng, &spec.q_x);
        labeled.extend_from_slice(&spec.support[k]);
        let cond = &spec.y_given_x[k];
        let probs: Vec<f64> = cond.iter().map(|[_, p]| *p).collect();
        responses.push(cond[draw_index(&mut rng, &probs)][0]);
    }
    Ok((
        UnlabeledSet::new(d, unlabeled)?,
        LabeledSet::new(UnlabeledSet::new(d, labeled)?, responses)?,
        spec.exact_weighter(),
    ))
}

/// The two-point instance used throughout the tests: support `{0, 1}`,
/// `P = (0.5, 0.5)`, `Q = (0.8, 0.2)`, `Y = X`.
pub fn two_point_mismatch() -> DiscreteMismatchSpec {
    DiscreteMismatchSpec {
        support: vec![vec![0.0], vec![1.0]],
        p_x: vec![0.5, 0.5],
        q_x: vec![0.8, 0.2],
        y_given_x: vec![vec![[0.0, 1.0]], vec![[1.0, 1.0]]],
    }
}
