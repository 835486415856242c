//! Minimizers for the losses: full-batch gradient descent, curriculum
//! mini-batch SGD, and the split-sample estimator for teachers trained on the
//! labeled data.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher, UnlabeledSet};
use crate::error::{Error, Result};
use crate::losses::{alpha_at, CurriculumSchedule, Objective, PreparedLoss};
use crate::rng::{self, streams};

/// Losses beyond this magnitude abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Smallest backtracking step before the line search gives up.
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StepRule {
    Fixed { eta: f64 },
    /// Armijo backtracking: start at `initial`, multiply by `shrink` until the
    /// loss drops by at least `armijo * step * ‖g‖²`.
    Backtracking { initial: f64, shrink: f64, armijo: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            initial: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSettings {
    /// Full-batch step rule.
    pub step_rule: StepRule,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Labeled share of each mini-batch; `None` uses `n / (m + n)`.
    pub labeled_fraction: Option<f64>,
    /// Base SGD rate. Step `j` of an epoch uses `sgd_rate / (1 + j)`.
    pub sgd_rate: f64,
    /// Balanced cycles per epoch; see `train_curriculum`.
    pub passes_per_epoch: usize,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            step_rule: StepRule::default(),
            max_iters: 10_000,
            grad_tol: 1e-10,
            seed: 0,
            batch_size: 32,
            labeled_fraction: None,
            sgd_rate: 0.5,
            passes_per_epoch: 1,
        }
    }
}

impl OptimSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidSpec("grad_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidSpec("max_iters must be at least 1".into()));
        }
        match self.step_rule {
            StepRule::Fixed { eta } if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidSpec("fixed step must be positive".into()));
            }
            StepRule::Backtracking { initial, shrink, armijo }
                if !(initial > 0.0 && shrink > 0.0 && shrink < 1.0 && armijo > 0.0 && armijo < 1.0) =>
            {
                return Err(Error::InvalidSpec(
                    "backtracking needs initial > 0, shrink and armijo in (0, 1)".into(),
                ));
            }
            _ => {}
        }
        if !(self.sgd_rate > 0.0 && self.sgd_rate.is_finite()) {
            return Err(Error::InvalidSpec("sgd_rate must be positive".into()));
        }
        if self.passes_per_epoch == 0 {
            return Err(Error::InvalidSpec("passes_per_epoch must be at least 1".into()));
        }
        if let Some(f) = self.labeled_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidSpec("labeled_fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// Result of [`minimize_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome {
    pub theta: Parameter,
    /// Gradient norm at every accepted iterate, starting with `θ0`.
    pub grad_norms: Vec<f64>,
    /// Loss at every accepted iterate, starting with `θ0`.
    pub losses: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iters` was reached or the line search stalled; `theta`
    /// is then the lowest-loss iterate seen.
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_loss(loss: f64, iteration: usize) -> Result<()> {
    if !loss.is_finite() || loss.abs() > DIVERGENCE_THRESHOLD {
        return Err(Error::Divergence { iteration, loss });
    }
    Ok(())
}

fn check_grad(g: &[f64], iteration: usize) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient { iteration })
    }
}

/// Gradient descent on a prepared loss.
pub fn minimize_prepared(loss: &PreparedLoss<'_>, theta0: &Parameter, settings: &OptimSettings) -> Result<MinimizeOutcome> {
    settings.validate()?;
    let mut theta = theta0.clone();
    let mut value = loss.value(&theta)?;
    check_loss(value, 0)?;
    let mut grad = loss.gradient(&theta)?;
    check_grad(&grad, 0)?;
    let mut gnorm = norm(&grad);
    let mut outcome = MinimizeOutcome {
        theta: theta.clone(),
        grad_norms: vec![gnorm],
        losses: vec![value],
        iterations: 0,
        converged: gnorm <= settings.grad_tol,
    };
    if outcome.converged {
        return Ok(outcome);
    }
    let mut best = (value, theta.clone());

    for iteration in 1..=settings.max_iters {
        let direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let (next, next_value) = match settings.step_rule {
            StepRule::Fixed { eta } => {
                let next = theta.moved(eta, &direction);
                let v = loss.value(&next)?;
                (next, v)
            }
            StepRule::Backtracking { initial, shrink, armijo } => {
                let mut step = initial;
                loop {
                    let candidate = theta.moved(step, &direction);
                    let v = loss.value(&candidate)?;
                    if v.is_finite() && v <= value - armijo * step * gnorm * gnorm {
                        break (candidate, v);
                    }
                    step *= shrink;
                    if step < MIN_STEP {
                        // No representable decrease along -g.
                        outcome.theta = best.1;
                        outcome.iterations = iteration - 1;
                        return Ok(outcome);
                    }
                }
            }
        };
        check_loss(next_value, iteration)?;
        theta = next;
        value = next_value;
        grad = loss.gradient(&theta)?;
        check_grad(&grad, iteration)?;
        gnorm = norm(&grad);
        outcome.grad_norms.push(gnorm);
        outcome.losses.push(value);
        outcome.iterations = iteration;
        if value <= best.0 {
            best = (value, theta.clone());
        }
        if gnorm <= settings.grad_tol {
            outcome.theta = theta;
            outcome.converged = true;
            return Ok(outcome);
        }
    }
    outcome.theta = best.1;
    Ok(outcome)
}

/// Full-batch minimization of the loss selected by `objective`.
pub fn minimize_batch(
    objective: &Objective,
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
    theta0: &Parameter,
    settings: &OptimSettings,
) -> Result<MinimizeOutcome> {
    let loss = PreparedLoss::new(objective.clone(), unlabeled, labeled, teacher, model)?;
    minimize_prepared(&loss, theta0, settings)
}

/// Unlabeled and labeled counts per mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchComposition {
    pub unlabeled: usize,
    pub labeled: usize,
}

/// Splits `batch_size` between the pools at the configured labeled fraction,
/// keeping at least one sample of each kind.
pub fn batch_composition(settings: &OptimSettings, m: usize, n: usize) -> Result<BatchComposition> {
    let size = settings.batch_size;
    if size < 2 {
        return Err(Error::InfeasibleBatch(format!("batch_size {size} cannot hold both pools")));
    }
    if m == 0 || n == 0 {
        return Err(Error::InfeasibleBatch(format!("need samples in both pools, got m={m}, n={n}")));
    }
    let fraction = settings.labeled_fraction.unwrap_or(n as f64 / (m + n) as f64);
    let labeled = ((size as f64 * fraction).round() as usize).clamp(1, size - 1);
    let unlabeled = size - labeled;
    if labeled > n || unlabeled > m {
        return Err(Error::InfeasibleBatch(format!(
            "batch of {unlabeled} unlabeled + {labeled} labeled exceeds pools m={m}, n={n}"
        )));
    }
    Ok(BatchComposition { unlabeled, labeled })
}

/// Longest cycle `train_curriculum` will run before falling back to a single
/// pass over the larger pool.
pub const MAX_CYCLE_BATCHES: usize = 1 << 20;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Batches per cycle: the least `k` with `k * comp.unlabeled` a multiple of
/// `m` and `k * comp.labeled` a multiple of `n`.
pub fn cycle_batches(m: usize, n: usize, comp: BatchComposition) -> usize {
    let ku = m / gcd(m, comp.unlabeled);
    let kl = n / gcd(n, comp.labeled);
    let k = (ku / gcd(ku, kl)).saturating_mul(kl);
    if k > MAX_CYCLE_BATCHES {
        let pass = m.div_ceil(comp.unlabeled).max(n.div_ceil(comp.labeled));
        log::warn!("balanced cycle needs {k} batches; using {pass} per pass, so sample weights are uneven");
        return pass;
    }
    k
}

/// Indices of one pool, served from successive shuffles.
struct PoolStream {
    perm: Vec<usize>,
    pos: usize,
}

impl PoolStream {
    fn new(len: usize) -> Self {
        Self {
            perm: (0..len).collect(),
            pos: len,
        }
    }

    fn fill<R: rand::Rng>(&mut self, out: &mut [usize], rng: &mut R) {
        for slot in out {
            if self.pos == self.perm.len() {
                self.perm.shuffle(rng);
                self.pos = 0;
            }
            *slot = self.perm[self.pos];
            self.pos += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumOutcome {
    pub theta: Parameter,
    /// `α_t` for epochs `1..=T`.
    pub alphas: Vec<f64>,
    /// Full-data curriculum loss at the end of each epoch, at that epoch's `α_t`.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Curriculum-scheduled mini-batch SGD over epochs `t = 1..=T`.
///
/// Each pool is read as an endless stream of fresh permutations, and every
/// batch zips fixed-size slices from the two streams, so it holds exactly the
/// configured labeled/unlabeled counts. An epoch runs `passes_per_epoch`
/// cycles, a cycle being the fewest batches that exhaust both streams a whole
/// number of times; every sample therefore carries the same weight in an
/// epoch. Cycles longer than `MAX_CYCLE_BATCHES` fall back to one pass over
/// the larger pool. The step size restarts at `sgd_rate` each epoch and
/// decays as `1/(1 + j)`.
pub fn train_curriculum(
    unlabeled: &UnlabeledSet,
    labeled: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
    schedule: &CurriculumSchedule,
    theta0: &Parameter,
    settings: &OptimSettings,
) -> Result<CurriculumOutcome> {
    settings.validate()?;
    if schedule.total_epochs == 0 {
        return Err(Error::InvalidSpec("total_epochs must be positive".into()));
    }
    let (m, n) = (unlabeled.len(), labeled.len());
    let comp = batch_composition(settings, m, n)?;
    let base = PreparedLoss::new(Objective::Curriculum { alpha: 1.0 }, unlabeled, labeled, teacher, model)?;
    model.check_dims(theta0, labeled.dim())?;

    let batches_per_epoch = cycle_batches(m, n, comp) * settings.passes_per_epoch;
    let mut rng = rng::stream_rng(settings.seed, streams::BATCHES);
    let mut stream_u = PoolStream::new(m);
    let mut stream_l = PoolStream::new(n);
    let mut batch_u = vec![0usize; comp.unlabeled];
    let mut batch_l = vec![0usize; comp.labeled];

    let mut theta = theta0.clone();
    let mut outcome = CurriculumOutcome {
        theta: theta.clone(),
        alphas: Vec::with_capacity(schedule.total_epochs),
        epoch_losses: Vec::with_capacity(schedule.total_epochs),
        steps: 0,
    };
    for epoch in 1..=schedule.total_epochs {
        let alpha = alpha_at(schedule, epoch)?;
        for j in 0..batches_per_epoch {
            stream_u.fill(&mut batch_u, &mut rng);
            stream_l.fill(&mut batch_l, &mut rng);
            let (value, grad) = base.curriculum_batch(&theta, alpha, &batch_u, &batch_l)?;
            outcome.steps += 1;
            check_loss(value, outcome.steps)?;
            check_grad(&grad, outcome.steps)?;
            let eta = settings.sgd_rate / (1.0 + j as f64);
            theta = theta.moved(-eta, &grad);
        }
        let full = base.with_objective(Objective::Curriculum { alpha })?.value(&theta)?;
        check_loss(full, outcome.steps)?;
        outcome.alphas.push(alpha);
        outcome.epoch_losses.push(full);
    }
    outcome.theta = theta;
    Ok(outcome)
}

/// Which labeled indices estimated the loss and which trained the teacher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub estimation: Vec<usize>,
    pub training: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub theta: Parameter,
    pub split: SplitRecord,
    pub teacher: Teacher,
    pub optimization: MinimizeOutcome,
}

/// Seeded half split of `n` indices: the first `⌈n/2⌉` of a shuffled order
/// estimate, the rest train.
pub fn split_indices(n: usize, seed: u64) -> SplitRecord {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream_rng(seed, streams::SPLIT));
    let training = order.split_off(n.div_ceil(2));
    SplitRecord {
        estimation: order,
        training,
    }
}

/// Trains the teacher on one half of the labeled set and minimizes the
/// weighted doubly robust loss on the unlabeled set and the other half.
/// Labeled terms are averaged over the estimation half.
#[allow(clippy::too_many_arguments)]
pub fn split_and_estimate<F>(
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    teacher_trainer: F,
    model: LossModel,
    theta0: &Parameter,
    settings: &OptimSettings,
    seed: u64,
    weighter: Option<&ImportanceWeighter>,
) -> Result<SplitOutcome>
where
    F: FnOnce(&LabeledSet) -> Result<Teacher>,
{
    if labeled.len() < 2 {
        return Err(Error::InvalidSpec("data splitting needs n >= 2".into()));
    }
    let split = split_indices(labeled.len(), seed);
    let estimation = labeled.subset(&split.estimation)?;
    let training = labeled.subset(&split.training)?;
    let teacher = teacher_trainer(&training)?;
    let weighter = weighter.cloned().unwrap_or_else(ImportanceWeighter::uniform);
    let loss = PreparedLoss::new(Objective::Dr2(weighter), unlabeled, &estimation, &teacher, model)?;
    let optimization = minimize_prepared(&loss, theta0, settings)?;
    Ok(SplitOutcome {
        theta: optimization.theta.clone(),
        split,
        teacher,
        optimization,
    })
}
