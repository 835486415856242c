//! Small seeded random problems for gradient and optimizer checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher, UnlabeledSet};
use crate::error::Result;
use crate::losses::{LossKind, Objective};
use crate::rng::{self, streams};

#[derive(Debug, Clone)]
pub struct Instance {
    pub unlabeled: UnlabeledSet,
    pub labeled: LabeledSet,
    pub teacher: Teacher,
    pub objective: Objective,
    pub model: LossModel,
    pub theta: Parameter,
}

fn normals<R: Rng>(rng: &mut R, count: usize, scale: f64) -> Vec<f64> {
    (0..count).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Dimension 1 to 3, parameter length 1 to `d + 1`, up to 8 samples per set.
/// Logistic instances get targets in `[0, 1]`; DR2 instances get a lookup
/// weighter over the labeled covariates.
pub fn random_instance(seed: u64, kind: LossKind, model: LossModel) -> Result<Instance> {
    let mut rng = rng::stream_rng(seed, streams::DATA);
    let d = rng.random_range(1..=3usize);
    let p = rng.random_range(1..=d + 1);
    let min_m = if kind == LossKind::Dr2 { 1 } else { 0 };
    let m = rng.random_range(min_m..=8usize);
    let n = rng.random_range(1..=8usize);
    let unlabeled = UnlabeledSet::new(d, normals(&mut rng, m * d, 1.5))?;
    let covariates = UnlabeledSet::new(d, normals(&mut rng, n * d, 1.5))?;
    let responses: Vec<f64> = match model {
        LossModel::SquaredError => normals(&mut rng, n, 2.0),
        LossModel::Logistic => (0..n).map(|_| rng.random::<f64>()).collect(),
    };
    let labeled = LabeledSet::new(covariates, responses)?;
    let teacher = Teacher::affine(rng.sample(StandardNormal), normals(&mut rng, d, 0.5));
    let objective = match kind {
        LossKind::Tl => Objective::Tl,
        LossKind::Sl => Objective::Sl,
        LossKind::Dr => Objective::Dr,
        LossKind::Dr2 => Objective::Dr2(ImportanceWeighter::Table {
            points: labeled.covariates().rows().map(<[f64]>::to_vec).collect(),
            weights: (0..n).map(|_| rng.random_range(0.2..3.0)).collect(),
        }),
        LossKind::Curriculum => Objective::Curriculum { alpha: rng.random() },
    };
    let theta = Parameter::new(normals(&mut rng, p, 1.0))?;
    Ok(Instance {
        unlabeled,
        labeled,
        teacher,
        objective,
        model,
        theta,
    })
}

/// One-dimensional mean-estimation problem with `m` in `0..=40` and `n` in
/// `1..=40`, responses and teacher on different scales.
pub fn random_mean_instance(seed: u64) -> Result<(UnlabeledSet, LabeledSet, Teacher)> {
    let mut rng = rng::stream_rng(seed, streams::DATA);
    let m = rng.random_range(0..=40usize);
    let n = rng.random_range(1..=40usize);
    let shift: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
    let unlabeled = UnlabeledSet::new(1, normals(&mut rng, m, 2.0))?;
    let covariates = UnlabeledSet::new(1, normals(&mut rng, n, 2.0))?;
    let responses = covariates
        .rows()
        .map(|x| shift + x[0] + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let labeled = LabeledSet::new(covariates, responses)?;
    let teacher = Teacher::affine(rng.sample(StandardNormal), vec![rng.random_range(0.0..2.0)]);
    Ok((unlabeled, labeled, teacher))
}
