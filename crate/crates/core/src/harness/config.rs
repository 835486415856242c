//! Experiment configuration, read from TOML.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ImportanceWeighter, LossModel};
use crate::error::{Error, Result};
use crate::losses::{CurriculumSchedule, LossKind};
use crate::optim::OptimSettings;
use crate::synth::{DiscreteMismatchSpec, LinearGaussianSpec, TeacherSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Estimate,
    MseSweep,
    GradientScaling,
    MismatchCheck,
    VarianceCheck,
    CurriculumTrain,
    GradientCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Estimate,
        ExperimentKind::MseSweep,
        ExperimentKind::GradientScaling,
        ExperimentKind::MismatchCheck,
        ExperimentKind::VarianceCheck,
        ExperimentKind::CurriculumTrain,
        ExperimentKind::GradientCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::MseSweep => "mse-sweep",
            ExperimentKind::GradientScaling => "gradient-scaling",
            ExperimentKind::MismatchCheck => "mismatch-check",
            ExperimentKind::VarianceCheck => "variance-check",
            ExperimentKind::CurriculumTrain => "curriculum-train",
            ExperimentKind::GradientCheck => "gradient-check",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GeneratorSpec {
    LinearGaussian(LinearGaussianSpec),
    DiscreteMismatch(DiscreteMismatchSpec),
    /// Literal rows.
    #[serde(rename_all = "snake_case")]
    Inline {
        unlabeled: Vec<Vec<f64>>,
        labeled: Vec<Vec<f64>>,
        responses: Vec<f64>,
    },
    /// CSV files in the `x_1..x_d[,y]` layout.
    Csv { unlabeled: String, labeled: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaName {
    /// `[E[Y]]`, the mean-estimation target.
    Mean,
    /// The generator's `β`, the squared-error minimizer over all covariates.
    Beta,
}

/// Evaluation point: a named ground-truth parameter or literal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSpec {
    Named(ThetaName),
    Values(Vec<f64>),
}

/// How the variance check obtains its teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherFit {
    /// OLS on the full labeled set, reused inside the loss.
    SameData,
    /// OLS on one half, loss on the other.
    Split,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingAxis {
    #[default]
    N,
    MPlusN,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    /// `m = round(ratio · n)`, applied after the explicit `m` values.
    pub m_ratio: Vec<f64>,
    pub trials: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Master seed; every draw in the run derives from it.
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub model: LossModel,
    #[serde(default)]
    pub losses: Vec<LossKind>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub teachers: Vec<TeacherSpec>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub theta: Option<ThetaSpec>,
    /// Curriculum weight for `curr` losses outside a schedule.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub weighting: Option<ImportanceWeighter>,
    #[serde(default)]
    pub schedule: Option<CurriculumSchedule>,
    #[serde(default)]
    pub optim: OptimSettings,
    #[serde(default)]
    pub teacher_fit: Vec<TeacherFit>,
    #[serde(default)]
    pub scaling_axis: ScalingAxis,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks that do not depend on the experiment's data.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n.contains(&0) {
            return Err(Error::Config("grid.n values must be positive".into()));
        }
        if g.m_ratio.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("grid.m_ratio values must be finite and non-negative".into()));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
            }
        }
        if let Some(s) = &self.schedule {
            CurriculumSchedule::new(s.kind, s.total_epochs).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.optim.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Compact JSON with fields in declaration order; the hashed form.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
