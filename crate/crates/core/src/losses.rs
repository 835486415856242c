//! Labeled-only, self-training, doubly robust, importance-weighted doubly
//! robust, and curriculum losses with their analytic gradients.
//!
//! Every loss is an affine combination of three per-sample sums evaluated in
//! dataset order with compensated summation:
//!
//! * `S_all`: `ℓ_θ(x, f̂(x))` over the unlabeled then the labeled covariates,
//! * `S_lf`: `ℓ_θ(x, f̂(x))` over the labeled covariates,
//! * `S_ly`: `ℓ_θ(x, y)` over the labeled samples.
//!
//! The doubly robust loss is `S_all/(m+n) - S_lf/n + S_ly/n` and the curriculum
//! loss scales the last two terms by `α`, evaluated left to right so that
//! `α = 1` reproduces the doubly robust loss bit for bit.

use serde::{Deserialize, Serialize};

use crate::data::{ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher, UnlabeledSet};
use crate::error::{Error, Result};
use crate::sum::{NeumaierSum, VecSum};

/// Smallest importance weight accepted on a labeled covariate.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Which loss to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Tl,
    Sl,
    Dr,
    Dr2,
    #[serde(rename = "curr")]
    Curriculum,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Tl,
        LossKind::Sl,
        LossKind::Dr,
        LossKind::Dr2,
        LossKind::Curriculum,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Tl => "tl",
            LossKind::Sl => "sl",
            LossKind::Dr => "dr",
            LossKind::Dr2 => "dr2",
            LossKind::Curriculum => "curr",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A loss kind together with its extra argument.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Tl,
    Sl,
    Dr,
    Dr2(ImportanceWeighter),
    Curriculum { alpha: f64 },
}

impl Objective {
    pub fn kind(&self) -> LossKind {
        match self {
            Objective::Tl => LossKind::Tl,
            Objective::Sl => LossKind::Sl,
            Objective::Dr => LossKind::Dr,
            Objective::Dr2(_) => LossKind::Dr2,
            Objective::Curriculum { .. } => LossKind::Curriculum,
        }
    }
}

/// A loss bound to its datasets with teacher predictions and weights computed
/// once. Evaluation is pure in `θ`.
#[derive(Debug, Clone)]
pub struct PreparedLoss<'a> {
    objective: Objective,
    model: LossModel,
    unlabeled: &'a UnlabeledSet,
    labeled: &'a LabeledSet,
    pred_unlabeled: Vec<f64>,
    pred_labeled: Vec<f64>,
    /// `π(x_i)` on labeled covariates; only for the weighted loss.
    weights: Vec<f64>,
}

impl<'a> PreparedLoss<'a> {
    pub fn new(
        objective: Objective,
        unlabeled: &'a UnlabeledSet,
        labeled: &'a LabeledSet,
        teacher: &Teacher,
        model: LossModel,
    ) -> Result<Self> {
        if unlabeled.dim() != labeled.dim() {
            return Err(Error::DimensionMismatch {
                expected: labeled.dim(),
                got: unlabeled.dim(),
            });
        }
        let mut weights = Vec::new();
        match &objective {
            Objective::Curriculum { alpha } if !(0.0..=1.0).contains(alpha) => {
                return Err(Error::AlphaOutOfRange(*alpha));
            }
            Objective::Dr2(weighter) => {
                if unlabeled.is_empty() {
                    return Err(Error::EmptyUnlabeledSet("the weighted loss averages over m >= 1 samples"));
                }
                weights = labeled_weights(weighter, labeled)?;
            }
            _ => {}
        }
        let needs_predictions = !matches!(objective, Objective::Tl);
        let (pred_unlabeled, pred_labeled) = if needs_predictions {
            (
                teacher.predict_rows(unlabeled.rows()),
                teacher.predict_rows(labeled.covariates().rows()),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        if pred_unlabeled.iter().chain(&pred_labeled).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("teacher predictions".into()));
        }
        Ok(Self {
            objective,
            model,
            unlabeled,
            labeled,
            pred_unlabeled,
            pred_labeled,
            weights,
        })
    }

    /// The same datasets and cached predictions under a different curriculum
    /// weight or plain objective. Weighted objectives need [`PreparedLoss::new`].
    pub fn with_objective(&self, objective: Objective) -> Result<Self> {
        match &objective {
            Objective::Dr2(_) => {
                return Err(Error::InvalidSpec("re-prepare to change importance weights".into()));
            }
            Objective::Curriculum { alpha } if !(0.0..=1.0).contains(alpha) => {
                return Err(Error::AlphaOutOfRange(*alpha));
            }
            Objective::Tl => {}
            _ if self.pred_unlabeled.len() != self.m() || self.pred_labeled.len() != self.n() => {
                return Err(Error::InvalidSpec("objective needs teacher predictions".into()));
            }
            _ => {}
        }
        Ok(Self {
            objective,
            weights: Vec::new(),
            ..self.clone()
        })
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn model(&self) -> LossModel {
        self.model
    }

    pub fn m(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn unlabeled(&self) -> &'a UnlabeledSet {
        self.unlabeled
    }

    pub fn labeled(&self) -> &'a LabeledSet {
        self.labeled
    }

    pub fn unlabeled_predictions(&self) -> &[f64] {
        &self.pred_unlabeled
    }

    pub fn labeled_predictions(&self) -> &[f64] {
        &self.pred_labeled
    }

    pub fn value(&self, theta: &Parameter) -> Result<f64> {
        self.model.check_dims(theta, self.labeled.dim())?;
        let sums = self.value_sums(theta);
        Ok(self.combine(sums.map(|s| s.total())))
    }

    pub fn gradient(&self, theta: &Parameter) -> Result<Vec<f64>> {
        self.model.check_dims(theta, self.labeled.dim())?;
        let sums = self.gradient_sums(theta);
        let [all, lf, ly] = sums.map(|s| s.totals());
        Ok((0..theta.len()).map(|j| self.combine([all[j], lf[j], ly[j]])).collect())
    }

    pub fn value_and_gradient(&self, theta: &Parameter) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(theta)?, self.gradient(theta)?))
    }

    /// Applies the loss's coefficients to `[S_all, S_lf, S_ly]`. For the
    /// self-training loss `S_all` holds the unlabeled pseudo-label sum only;
    /// for the weighted loss it holds the unlabeled sum and the labeled sums
    /// carry the weights.
    fn combine(&self, [all, lf, ly]: [f64; 3]) -> f64 {
        let m = self.m() as f64;
        let n = self.n() as f64;
        match &self.objective {
            Objective::Tl => ly / n,
            Objective::Sl => (all + ly) / (m + n),
            Objective::Dr => all / (m + n) - lf / n + ly / n,
            Objective::Curriculum { alpha } => all / (m + n) - alpha * (lf / n) + alpha * (ly / n),
            Objective::Dr2(_) => all / m - lf / n + ly / n,
        }
    }

    fn pseudo_sum_covers_labeled(&self) -> bool {
        matches!(self.objective, Objective::Dr | Objective::Curriculum { .. })
    }

    fn labeled_weight(&self, i: usize) -> f64 {
        if self.weights.is_empty() {
            1.0
        } else {
            self.weights[i]
        }
    }

    fn value_sums(&self, theta: &Parameter) -> [NeumaierSum; 3] {
        let t = theta.as_slice();
        let model = self.model;
        let mut all = NeumaierSum::new();
        let mut lf = NeumaierSum::new();
        let mut ly = NeumaierSum::new();
        let tl_only = matches!(self.objective, Objective::Tl);
        let uses_lf = !matches!(self.objective, Objective::Tl | Objective::Sl);
        if !tl_only {
            for (x, &f) in self.unlabeled.rows().zip(&self.pred_unlabeled) {
                all.add(model.value_at_score(LossModel::score(t, x), f));
            }
        }
        let into_all = self.pseudo_sum_covers_labeled();
        for (i, (x, y)) in self.labeled.iter().enumerate() {
            let z = LossModel::score(t, x);
            let w = self.labeled_weight(i);
            if uses_lf {
                let v = model.value_at_score(z, self.pred_labeled[i]);
                if into_all {
                    all.add(v);
                }
                lf.add(w * v);
            }
            ly.add(w * model.value_at_score(z, y));
        }
        [all, lf, ly]
    }

    fn gradient_sums(&self, theta: &Parameter) -> [VecSum; 3] {
        let t = theta.as_slice();
        let p = t.len();
        let model = self.model;
        let mut all = VecSum::zeros(p);
        let mut lf = VecSum::zeros(p);
        let mut ly = VecSum::zeros(p);
        let tl_only = matches!(self.objective, Objective::Tl);
        let uses_lf = !matches!(self.objective, Objective::Tl | Objective::Sl);
        if !tl_only {
            for (x, &f) in self.unlabeled.rows().zip(&self.pred_unlabeled) {
                all.add_affine(model.score_derivative(LossModel::score(t, x), f), x);
            }
        }
        let into_all = self.pseudo_sum_covers_labeled();
        for (i, (x, y)) in self.labeled.iter().enumerate() {
            let z = LossModel::score(t, x);
            let w = self.labeled_weight(i);
            if uses_lf {
                let d = model.score_derivative(z, self.pred_labeled[i]);
                if into_all {
                    all.add_affine(d, x);
                }
                lf.add_affine(w * d, x);
            }
            ly.add_affine(w * model.score_derivative(z, y), x);
        }
        [all, lf, ly]
    }

    /// Curriculum loss and gradient on one mini-batch.
    ///
    /// The pseudo-label term averages each pool separately and recombines
    /// them with the full-data proportions `m/(m+n)` and `n/(m+n)`, so for
    /// uniformly drawn index subsets the batch loss is an unbiased estimate of
    /// the full curriculum loss whatever the batch's labeled fraction.
    pub fn curriculum_batch(
        &self,
        theta: &Parameter,
        alpha: f64,
        unlabeled_idx: &[usize],
        labeled_idx: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        if unlabeled_idx.is_empty() || labeled_idx.is_empty() {
            return Err(Error::InfeasibleBatch(
                "a batch needs at least one labeled and one unlabeled sample".into(),
            ));
        }
        if self.pred_unlabeled.len() != self.m() {
            return Err(Error::InvalidSpec("batch losses need teacher predictions".into()));
        }
        self.model.check_dims(theta, self.labeled.dim())?;
        let t = theta.as_slice();
        let p = t.len();
        let model = self.model;

        let mut u_val = NeumaierSum::new();
        let mut u_grad = VecSum::zeros(p);
        for &i in unlabeled_idx {
            let x = self.unlabeled.row(i);
            let z = LossModel::score(t, x);
            let f = self.pred_unlabeled[i];
            u_val.add(model.value_at_score(z, f));
            u_grad.add_affine(model.score_derivative(z, f), x);
        }
        let mut lf_val = NeumaierSum::new();
        let mut ly_val = NeumaierSum::new();
        let mut lf_grad = VecSum::zeros(p);
        let mut ly_grad = VecSum::zeros(p);
        let ys = self.labeled.responses();
        for &i in labeled_idx {
            let x = self.labeled.row(i);
            let z = LossModel::score(t, x);
            let f = self.pred_labeled[i];
            lf_val.add(model.value_at_score(z, f));
            ly_val.add(model.value_at_score(z, ys[i]));
            lf_grad.add_affine(model.score_derivative(z, f), x);
            ly_grad.add_affine(model.score_derivative(z, ys[i]), x);
        }

        let total = (self.m() + self.n()) as f64;
        let wu = self.m() as f64 / total;
        let wl = self.n() as f64 / total;
        let bu = unlabeled_idx.len() as f64;
        let bl = labeled_idx.len() as f64;
        let combine = |u: f64, lf: f64, ly: f64| {
            wu * (u / bu) + wl * (lf / bl) - alpha * (lf / bl) + alpha * (ly / bl)
        };
        let value = combine(u_val.total(), lf_val.total(), ly_val.total());
        let (ug, lfg, lyg) = (u_grad.totals(), lf_grad.totals(), ly_grad.totals());
        let grad = (0..p).map(|j| combine(ug[j], lfg[j], lyg[j])).collect();
        Ok((value, grad))
    }
}

fn labeled_weights(weighter: &ImportanceWeighter, labeled: &LabeledSet) -> Result<Vec<f64>> {
    labeled
        .covariates()
        .rows()
        .enumerate()
        .map(|(index, x)| {
            let weight = weighter.weight(x);
            // NaN fails this comparison too.
            if weight >= WEIGHT_FLOOR && weight.is_finite() {
                Ok(weight)
            } else {
                Err(Error::WeightBelowFloor {
                    index,
                    weight,
                    floor: WEIGHT_FLOOR,
                })
            }
        })
        .collect()
}

/// `(1/n) Σ_labeled ℓ_θ(x, y)`.
pub fn loss_tl(theta: &Parameter, labeled: &LabeledSet, model: LossModel) -> Result<f64> {
    let empty = UnlabeledSet::empty(labeled.dim())?;
    // The teacher is never consulted for the labeled-only loss.
    PreparedLoss::new(Objective::Tl, &empty, labeled, &Teacher::constant(0.0), model)?.value(theta)
}

/// `(1/(m+n)) [Σ_unlabeled ℓ_θ(x, f̂(x)) + Σ_labeled ℓ_θ(x, y)]`.
pub fn loss_sl(
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
) -> Result<f64> {
    PreparedLoss::new(Objective::Sl, unlabeled, labeled, teacher, model)?.value(theta)
}

/// `(1/(m+n)) Σ_all ℓ_θ(x, f̂(x)) - (1/n) Σ_labeled ℓ_θ(x, f̂(x)) + (1/n) Σ_labeled ℓ_θ(x, y)`.
pub fn loss_dr(
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
) -> Result<f64> {
    PreparedLoss::new(Objective::Dr, unlabeled, labeled, teacher, model)?.value(theta)
}

/// Covariate-shift form: `(1/m) Σ_unlabeled ℓ_θ(x, f̂(x))` plus the labeled
/// correction with each labeled term weighted by the density ratio `π(x)`.
pub fn loss_dr2(
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
    weighter: &ImportanceWeighter,
) -> Result<f64> {
    PreparedLoss::new(Objective::Dr2(weighter.clone()), unlabeled, labeled, teacher, model)?.value(theta)
}

/// Doubly robust loss with the labeled correction scaled by `alpha`.
pub fn curriculum_loss(
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
    alpha: f64,
) -> Result<f64> {
    PreparedLoss::new(Objective::Curriculum { alpha }, unlabeled, labeled, teacher, model)?.value(theta)
}

/// Exact gradient of the loss selected by `objective`.
pub fn grad_loss(
    objective: &Objective,
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
) -> Result<Vec<f64>> {
    PreparedLoss::new(objective.clone(), unlabeled, labeled, teacher, model)?.gradient(theta)
}

/// Value of the loss selected by `objective`.
pub fn eval_loss(
    objective: &Objective,
    theta: &Parameter,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
) -> Result<f64> {
    PreparedLoss::new(objective.clone(), unlabeled, labeled, teacher, model)?.value(theta)
}

/// How `α_t` evolves over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleKind {
    Constant { alpha: f64 },
    Linear,
    Quadratic,
    FinalEpochStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    pub total_epochs: usize,
}

impl CurriculumSchedule {
    pub fn new(kind: ScheduleKind, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::InvalidSpec("total_epochs must be positive".into()));
        }
        if let ScheduleKind::Constant { alpha } = kind {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::AlphaOutOfRange(alpha));
            }
        }
        Ok(Self { kind, total_epochs })
    }
}

/// `α_t` for epoch `t` in `0..=T`.
pub fn alpha_at(schedule: &CurriculumSchedule, epoch: usize) -> Result<f64> {
    let total = schedule.total_epochs;
    if epoch > total || total == 0 {
        return Err(Error::EpochOutOfRange { epoch, total });
    }
    let frac = epoch as f64 / total as f64;
    Ok(match schedule.kind {
        ScheduleKind::Constant { alpha } => alpha,
        ScheduleKind::Linear => frac,
        ScheduleKind::Quadratic => frac * frac,
        ScheduleKind::FinalEpochStep => {
            if epoch == total {
                1.0
            } else {
                0.0
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQ: LossModel = LossModel::SquaredError;

    /// Unlabeled f̂ = [1, 3]; labeled f̂ = 2, y = 4 (identity teacher).
    fn fixture() -> (UnlabeledSet, LabeledSet, Teacher) {
        (
            UnlabeledSet::new(1, vec![1.0, 3.0]).unwrap(),
            LabeledSet::new(UnlabeledSet::new(1, vec![2.0]).unwrap(), vec![4.0]).unwrap(),
            Teacher::affine(0.0, vec![1.0]),
        )
    }

    fn theta0() -> Parameter {
        Parameter::scalar(0.0)
    }

    #[test]
    fn labeled_only_values() {
        let (_, labeled, _) = fixture();
        assert_eq!(loss_tl(&theta0(), &labeled, SQ).unwrap(), 16.0);
        let two = LabeledSet::new(UnlabeledSet::new(1, vec![0.0, 0.0]).unwrap(), vec![1.0, 3.0]).unwrap();
        assert_eq!(loss_tl(&Parameter::scalar(2.0), &two, SQ).unwrap(), 1.0);
        let g = grad_loss(&Objective::Tl, &Parameter::scalar(2.0), &UnlabeledSet::empty(1).unwrap(), &two, &Teacher::constant(0.0), SQ).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn fixture_values() {
        let (u, l, t) = fixture();
        let sl = loss_sl(&theta0(), &u, &l, &t, SQ).unwrap();
        let dr = loss_dr(&theta0(), &u, &l, &t, SQ).unwrap();
        let curr = curriculum_loss(&theta0(), &u, &l, &t, SQ, 0.5).unwrap();
        assert!((sl - 26.0 / 3.0).abs() < 1e-12);
        assert!((dr - 50.0 / 3.0).abs() < 1e-12);
        assert!((curr - 32.0 / 3.0).abs() < 1e-12);
        let g = grad_loss(&Objective::Dr, &theta0(), &u, &l, &t, SQ).unwrap();
        assert!((g[0] + 8.0).abs() < 1e-12);
        let g = grad_loss(&Objective::Dr, &Parameter::scalar(4.0), &u, &l, &t, SQ).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn empty_unlabeled_reductions_are_exact() {
        let (_, l, t) = fixture();
        let empty = UnlabeledSet::empty(1).unwrap();
        for theta in [-3.0, 0.0, 0.7, 11.0] {
            let theta = Parameter::scalar(theta);
            let tl = loss_tl(&theta, &l, SQ).unwrap();
            assert_eq!(loss_sl(&theta, &empty, &l, &t, SQ).unwrap(), tl);
            assert_eq!(loss_dr(&theta, &empty, &l, &t, SQ).unwrap(), tl);
        }
    }

    #[test]
    fn weighted_loss_needs_unlabeled_samples() {
        let (_, l, t) = fixture();
        let empty = UnlabeledSet::empty(1).unwrap();
        let err = loss_dr2(&theta0(), &empty, &l, &t, SQ, &ImportanceWeighter::uniform()).unwrap_err();
        assert!(matches!(err, Error::EmptyUnlabeledSet(_)));
    }

    #[test]
    fn weighted_loss_rejects_tiny_weights() {
        let (u, l, t) = fixture();
        for value in [0.0, 1e-13, -1.0, f64::NAN] {
            let w = ImportanceWeighter::Constant { value };
            let err = loss_dr2(&theta0(), &u, &l, &t, SQ, &w).unwrap_err();
            assert!(matches!(err, Error::WeightBelowFloor { index: 0, .. }), "{value}");
        }
        let off_support = ImportanceWeighter::Table {
            points: vec![vec![0.0]],
            weights: vec![1.0],
        };
        assert!(loss_dr2(&theta0(), &u, &l, &t, SQ, &off_support).is_err());
    }

    #[test]
    fn weighted_loss_with_unit_weights_and_perfect_teacher() {
        let u = UnlabeledSet::new(1, vec![1.0, 3.0, 5.0]).unwrap();
        let l = LabeledSet::new(UnlabeledSet::new(1, vec![2.0, 7.0]).unwrap(), vec![2.0, 7.0]).unwrap();
        let t = Teacher::affine(0.0, vec![1.0]);
        let theta = Parameter::scalar(1.5);
        let dr2 = loss_dr2(&theta, &u, &l, &t, SQ, &ImportanceWeighter::uniform()).unwrap();
        let expected = (0.25 + 2.25 + 12.25) / 3.0;
        assert!((dr2 - expected).abs() < 1e-12);
    }

    #[test]
    fn curriculum_rejects_bad_alpha() {
        let (u, l, t) = fixture();
        for alpha in [-0.1, 1.1, f64::NAN] {
            assert!(curriculum_loss(&theta0(), &u, &l, &t, SQ, alpha).is_err());
        }
    }

    #[test]
    fn theta_with_too_many_entries_is_rejected() {
        let (u, l, t) = fixture();
        let theta = Parameter::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(loss_dr(&theta, &u, &l, &t, SQ).is_err());
    }

    #[test]
    fn schedules() {
        let lin = CurriculumSchedule::new(ScheduleKind::Linear, 20).unwrap();
        let quad = CurriculumSchedule::new(ScheduleKind::Quadratic, 20).unwrap();
        let step = CurriculumSchedule::new(ScheduleKind::FinalEpochStep, 20).unwrap();
        assert_eq!(alpha_at(&lin, 5).unwrap(), 0.25);
        assert_eq!(alpha_at(&quad, 10).unwrap(), 0.25);
        assert_eq!(alpha_at(&step, 19).unwrap(), 0.0);
        assert_eq!(alpha_at(&step, 20).unwrap(), 1.0);
        assert!(matches!(alpha_at(&lin, 21), Err(Error::EpochOutOfRange { epoch: 21, total: 20 })));
        assert!(CurriculumSchedule::new(ScheduleKind::Linear, 0).is_err());
        assert!(CurriculumSchedule::new(ScheduleKind::Constant { alpha: 2.0 }, 3).is_err());
        for t in 0..=20 {
            for s in [lin, quad, step] {
                let a = alpha_at(&s, t).unwrap();
                assert!((0.0..=1.0).contains(&a));
            }
        }
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, f64)> {
        (
            prop::collection::vec(-5.0f64..5.0, 0..12),
            prop::collection::vec(-5.0f64..5.0, 1..8),
            prop::collection::vec(-5.0f64..5.0, 8),
            -3.0f64..3.0,
            -2.0f64..2.0,
            -4.0f64..4.0,
        )
    }

    fn build(u: &[f64], lx: &[f64], ys: &[f64]) -> (UnlabeledSet, LabeledSet) {
        (
            UnlabeledSet::new(1, u.to_vec()).unwrap(),
            LabeledSet::new(UnlabeledSet::new(1, lx.to_vec()).unwrap(), ys[..lx.len()].to_vec()).unwrap(),
        )
    }

    proptest! {
        #[test]
        fn curriculum_endpoints((u, lx, ys, b0, b1, theta) in arb_instance()) {
            let (u, l) = build(&u, &lx, &ys);
            let t = Teacher::affine(b0, vec![b1]);
            let theta = Parameter::scalar(theta);
            let dr = loss_dr(&theta, &u, &l, &t, SQ).unwrap();
            prop_assert_eq!(curriculum_loss(&theta, &u, &l, &t, SQ, 1.0).unwrap(), dr);
            let pseudo: f64 = u.rows().chain(l.covariates().rows())
                .map(|x| SQ.value(&theta, x, t.predict(x)))
                .sum::<f64>() / (u.len() + l.len()) as f64;
            let c0 = curriculum_loss(&theta, &u, &l, &t, SQ, 0.0).unwrap();
            prop_assert!((c0 - pseudo).abs() <= 1e-12 * (1.0 + pseudo.abs()));
        }

        #[test]
        fn self_training_three_term_decomposition((u, lx, ys, b0, b1, theta) in arb_instance()) {
            let (u, l) = build(&u, &lx, &ys);
            let t = Teacher::affine(b0, vec![b1]);
            let theta = Parameter::scalar(theta);
            let total = (u.len() + l.len()) as f64;
            let pseudo_all: f64 = u.rows().chain(l.covariates().rows())
                .map(|x| SQ.value(&theta, x, t.predict(x))).sum::<f64>() / total;
            let lab_pseudo: f64 = l.covariates().rows().map(|x| SQ.value(&theta, x, t.predict(x))).sum::<f64>();
            let lab_true: f64 = l.iter().map(|(x, y)| SQ.value(&theta, x, y)).sum::<f64>();
            let rewritten = pseudo_all - lab_pseudo / total + lab_true / total;
            let sl = loss_sl(&theta, &u, &l, &t, SQ).unwrap();
            prop_assert!((sl - rewritten).abs() <= 1e-10 * (1.0 + sl.abs()));
        }

        #[test]
        fn perfect_teacher_collapses_dr((u, lx, b0, b1, theta) in (
            prop::collection::vec(-5.0f64..5.0, 0..12),
            prop::collection::vec(-5.0f64..5.0, 1..8),
            -3.0f64..3.0, -2.0f64..2.0, -4.0f64..4.0,
        )) {
            let t = Teacher::affine(b0, vec![b1]);
            let ys: Vec<f64> = lx.iter().map(|&x| t.predict(&[x])).collect();
            let (u, l) = build(&u, &lx, &ys);
            let theta = Parameter::scalar(theta);
            let total = (u.len() + l.len()) as f64;
            let pseudo_all: f64 = u.rows().chain(l.covariates().rows())
                .map(|x| SQ.value(&theta, x, t.predict(x))).sum::<f64>() / total;
            let dr = loss_dr(&theta, &u, &l, &t, SQ).unwrap();
            prop_assert!((dr - pseudo_all).abs() <= 1e-12 * (1.0 + dr.abs()));
        }

        #[test]
        fn labeled_concatenation_is_size_weighted((lx1, lx2, ys, theta) in (
            prop::collection::vec(-5.0f64..5.0, 1..5),
            prop::collection::vec(-5.0f64..5.0, 1..5),
            prop::collection::vec(-5.0f64..5.0, 10),
            -4.0f64..4.0,
        )) {
            let a = LabeledSet::new(UnlabeledSet::new(1, lx1.clone()).unwrap(), ys[..lx1.len()].to_vec()).unwrap();
            let b = LabeledSet::new(UnlabeledSet::new(1, lx2.clone()).unwrap(), ys[5..5 + lx2.len()].to_vec()).unwrap();
            let joined = a.concat(&b).unwrap();
            let theta = Parameter::scalar(theta);
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let recombined = (na * loss_tl(&theta, &a, SQ).unwrap() + nb * loss_tl(&theta, &b, SQ).unwrap()) / (na + nb);
            let direct = loss_tl(&theta, &joined, SQ).unwrap();
            prop_assert!((direct - recombined).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn dr_is_convex_quadratic_in_scalar_case((u, lx, ys, b0, b1, theta) in arb_instance()) {
            let (u, l) = build(&u, &lx, &ys);
            let t = Teacher::affine(b0, vec![b1]);
            let h = 0.5;
            let f = |v: f64| loss_dr(&Parameter::scalar(v), &u, &l, &t, SQ).unwrap();
            let second = (f(theta + h) - 2.0 * f(theta) + f(theta - h)) / (h * h);
            prop_assert!((second - 2.0).abs() < 1e-8 * (1.0 + f(theta).abs()));
        }
    }
}
