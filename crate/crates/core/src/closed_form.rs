//! Closed-form mean estimators, their mean-squared-error bounds, asymptotic
//! variances under a linear teacher, and the least-squares teacher fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledSet, Teacher, TeacherFamily, UnlabeledSet};
use crate::error::{Error, Result};
use crate::sum::{self, NeumaierSum};

/// Labeled mean `(1/n) Σ y_i`.
pub fn theta_tl(labeled: &LabeledSet) -> f64 {
    sum::sum(labeled.responses().iter().copied()) / labeled.len() as f64
}

/// Pooled mean of unlabeled predictions and labeled responses.
pub fn theta_sl(unlabeled: &UnlabeledSet, labeled: &LabeledSet, teacher: &Teacher) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in unlabeled.rows() {
        acc.add(teacher.predict(x));
    }
    for &y in labeled.responses() {
        acc.add(y);
    }
    acc.total() / (unlabeled.len() + labeled.len()) as f64
}

/// `(1/(m+n)) Σ_all f̂(x) - (1/n) Σ_labeled (f̂(x) - y)`, evaluated as
/// `mean_all(f̂) - mean_labeled(f̂) + mean_labeled(y)` so that `m = 0`
/// returns the labeled mean exactly.
pub fn theta_dr(unlabeled: &UnlabeledSet, labeled: &LabeledSet, teacher: &Teacher) -> f64 {
    let m = unlabeled.len() as f64;
    let n = labeled.len() as f64;
    let mut all = NeumaierSum::new();
    let mut lab_pred = NeumaierSum::new();
    let mut lab_y = NeumaierSum::new();
    for x in unlabeled.rows() {
        all.add(teacher.predict(x));
    }
    for (x, y) in labeled.iter() {
        let f = teacher.predict(x);
        all.add(f);
        lab_pred.add(f);
        lab_y.add(y);
    }
    all.total() / (m + n) - lab_pred.total() / n + lab_y.total() / n
}

/// Options for [`fit_linear_teacher`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OlsOptions {
    /// Ridge penalty on the slope coefficients (the intercept is never
    /// penalized). Zero requires a full-rank design.
    pub ridge: f64,
}

/// Least-squares affine teacher `f̂(x) = β_1 + β_{(-1)}ᵀ x` fit on the labeled set.
pub fn fit_linear_teacher(labeled: &LabeledSet, options: OlsOptions) -> Result<Teacher> {
    let coefficients = ols_coefficients(labeled, options.ridge)?;
    Ok(Teacher {
        family: TeacherFamily::OlsFit {
            coefficients,
            ridge: options.ridge,
        },
    })
}

fn ols_coefficients(labeled: &LabeledSet, ridge: f64) -> Result<Vec<f64>> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidSpec(format!("ridge must be a finite non-negative number, got {ridge}")));
    }
    let n = labeled.len();
    let cols = labeled.dim() + 1;
    let design = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { labeled.row(i)[j - 1] });
    let y = DVector::from_column_slice(labeled.responses());

    let beta = if ridge == 0.0 {
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.max();
        let tol = (n.max(cols) as f64) * f64::EPSILON * max_sv;
        let rank = svd.rank(tol);
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        svd.solve(&y, tol).map_err(|e| Error::InvalidSpec(e.to_string()))?
    } else {
        let mut gram = design.transpose() * &design;
        for j in 1..cols {
            gram[(j, j)] += ridge;
        }
        let rhs = design.transpose() * &y;
        let chol = gram.cholesky().ok_or(Error::RankDeficient { rank: 0, cols })?;
        chol.solve(&rhs)
    };
    let beta: Vec<f64> = beta.iter().copied().collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("least-squares coefficients".into()));
    }
    Ok(beta)
}

/// Whether moments are population truths or sample plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    Population,
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub var_y: f64,
    pub var_fhat: f64,
    pub var_resid: f64,
    pub mean_resid: f64,
    pub m: usize,
    pub n: usize,
    pub source: MomentSource,
}

impl MomentSummary {
    pub fn population(var_y: f64, var_fhat: f64, var_resid: f64, mean_resid: f64, m: usize, n: usize) -> Result<Self> {
        let summary = Self {
            var_y,
            var_fhat,
            var_resid,
            mean_resid,
            m,
            n,
            source: MomentSource::Population,
        };
        summary.validate()?;
        Ok(summary)
    }

    /// Sample moments: `Var[Y]`, `Var[f̂ - Y]` and `E[f̂ - Y]` from the labeled
    /// set, `Var[f̂]` from all covariates.
    pub fn plug_in(unlabeled: &UnlabeledSet, labeled: &LabeledSet, teacher: &Teacher) -> Result<Self> {
        if labeled.len() < 2 {
            return Err(Error::InvalidSpec("plug-in moments need n >= 2".into()));
        }
        let ys = labeled.responses();
        let resid: Vec<f64> = labeled.iter().map(|(x, y)| teacher.predict(x) - y).collect();
        let preds: Vec<f64> = unlabeled
            .rows()
            .chain(labeled.covariates().rows())
            .map(|x| teacher.predict(x))
            .collect();
        let summary = Self {
            var_y: sample_variance(ys),
            var_fhat: sample_variance(&preds),
            var_resid: sample_variance(&resid),
            mean_resid: sum::mean(resid.iter().copied()),
            m: unlabeled.len(),
            n: labeled.len(),
            source: MomentSource::PlugIn,
        };
        summary.validate()?;
        Ok(summary)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyLabeledSet);
        }
        let vars = [self.var_y, self.var_fhat, self.var_resid];
        if vars.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !self.mean_resid.is_finite() {
            return Err(Error::InvalidSpec("variances must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let mean = sum::mean(values.iter().copied());
    sum::sum(values.iter().map(|v| (v - mean) * (v - mean))) / (values.len() - 1) as f64
}

/// The labeled-only MSE and the upper bounds for the self-training and doubly
/// robust mean estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseBounds {
    pub mse_tl: f64,
    pub bound_sl: f64,
    pub bound_dr: f64,
}

pub fn mse_bounds(moments: &MomentSummary) -> MseBounds {
    let m = moments.m as f64;
    let n = moments.n as f64;
    let total = m + n;
    let total_sq = total * total;
    let mse_tl = moments.var_y / n;
    let bound_sl = 2.0 * m * m / total_sq * moments.mean_resid * moments.mean_resid
        + 2.0 * m / total_sq * moments.var_resid
        + 2.0 * n / total_sq * moments.var_y;
    let mix = (m + 2.0 * n) / (total * n);
    let arbitrary_teacher = moments.var_y / n + mix * moments.var_fhat;
    let accurate_teacher = mix * moments.var_resid + moments.var_y / total;
    MseBounds {
        mse_tl,
        bound_sl,
        bound_dr: 2.0 * arbitrary_teacher.min(accurate_teacher),
    }
}

/// Population quantities for the linear-teacher variance comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiparametricSpec {
    /// `[β_1, β_{(-1)}]`, intercept first.
    pub beta: Vec<f64>,
    /// Covariance of `X`, row-major `d × d`.
    pub sigma_x: Vec<Vec<f64>>,
    /// `E[(Y - βᵀ[1, X])²]`.
    pub resid_var: f64,
    pub m: usize,
    pub n: usize,
}

/// Variances of `√n(θ̂ - θ*)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticVariances {
    pub avar_tl: f64,
    pub avar_dr: f64,
}

/// `β_{(-1)}ᵀ Σ β_{(-1)}`.
pub fn explained_variance(spec: &SemiparametricSpec) -> Result<f64> {
    let d = spec.sigma_x.len();
    if spec.beta.len() != d + 1 {
        return Err(Error::DimensionMismatch {
            expected: d + 1,
            got: spec.beta.len(),
        });
    }
    let slope = &spec.beta[1..];
    let mut acc = NeumaierSum::new();
    for (i, row) in spec.sigma_x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        for (j, s) in row.iter().enumerate() {
            if (s - spec.sigma_x[j][i]).abs() > 1e-12 * (1.0 + s.abs()) {
                return Err(Error::InvalidSpec("sigma_x must be symmetric".into()));
            }
            acc.add(slope[i] * s * slope[j]);
        }
    }
    let q = acc.total();
    if q < -1e-10 {
        return Err(Error::InvalidSpec("sigma_x is not positive semidefinite".into()));
    }
    Ok(q.max(0.0))
}

pub fn asymptotic_variances(spec: &SemiparametricSpec) -> Result<AsymptoticVariances> {
    if !(spec.resid_var >= 0.0) {
        return Err(Error::InvalidSpec("resid_var must be non-negative".into()));
    }
    if spec.n == 0 {
        return Err(Error::EmptyLabeledSet);
    }
    let explained = explained_variance(spec)?;
    let ratio = spec.n as f64 / (spec.m + spec.n) as f64;
    Ok(AsymptoticVariances {
        avar_tl: spec.resid_var + explained,
        avar_dr: spec.resid_var + ratio * explained,
    })
}
