use crate::closed_form::{
    asymptotic_variances, fit_linear_teacher, mse_bounds, theta_dr, theta_sl, theta_tl, MomentSummary, OlsOptions,
    SemiparametricSpec,
};
use crate::data::{self, ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher, TruthFn, UnlabeledSet};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, GeneratorSpec, ScalingAxis, TeacherFit, ThetaName, ThetaSpec};
use crate::harness::instances::random_instance;
use crate::harness::report::ResultRow;
use crate::losses::{LossKind, Objective, PreparedLoss};
use crate::optim::{minimize_prepared, split_and_estimate, train_curriculum, OptimSettings};
use crate::oracle::{
    default_fd_step, exact_expected_dr2, exact_expected_dr2_calibrated, exact_expected_loss, fd_gradient,
    fit_scaling, mc_trials, relative_error, summarize,
};
use crate::rng::{mix64, trial_seed};
use crate::synth::{
    gen_discrete_mismatch, make_teacher, DiscreteMismatchSpec, GroundTruth, LinearGaussianSampler, LinearGaussianSpec,
    TeacherSpec,
};

pub(crate) struct Rows {
    experiment: &'static str,
    hash: String,
    rows: Vec<ResultRow>,
}

impl Rows {
    pub(crate) fn new(experiment: &'static str, hash: String) -> Self {
        Self {
            experiment,
            hash,
            rows: Vec::new(),
        }
    }

    pub(crate) fn into_rows(self) -> Vec<ResultRow> {
        self.rows
    }

    fn push(&mut self, cell: &Cell, kind: &str, statistic: &str, value: f64, stderr: f64) {
        self.rows.push(ResultRow {
            experiment: self.experiment.to_string(),
            config_hash: self.hash.clone(),
            m: cell.m,
            n: cell.n,
            kind: kind.to_string(),
            statistic: statistic.to_string(),
            value,
            stderr,
            trials: cell.trials,
            seed: cell.seed,
        });
    }
}

/// One point of the `n × m × trials` grid.
#[derive(Debug, Clone, Copy)]
struct Cell {
    m: usize,
    n: usize,
    trials: usize,
    seed: u64,
    /// Index into the combined `m` then `m_ratio` options.
    m_option: usize,
}

fn cell_seed(master: u64, index: usize) -> u64 {
    trial_seed(mix64(master), index as u64)
}

/// Expands the grid. Missing `n` or `m` axes fall back to `defaults`; a
/// missing trials axis is an error when `need_trials` is set.
fn cells(config: &ExperimentConfig, defaults: (usize, usize), need_trials: bool) -> Result<Vec<Cell>> {
    let g = &config.grid;
    let ns = if g.n.is_empty() { vec![defaults.1] } else { g.n.clone() };
    let trials = if g.trials.is_empty() {
        if need_trials {
            return Err(Error::Config(format!("{} needs grid.trials", config.experiment)));
        }
        vec![1]
    } else {
        g.trials.clone()
    };
    let mut out = Vec::new();
    for &n in &ns {
        let mut ms: Vec<usize> = g.m.clone();
        ms.extend(g.m_ratio.iter().map(|r| (r * n as f64).round() as usize));
        if ms.is_empty() {
            ms.push(defaults.0);
        }
        for (m_option, &m) in ms.iter().enumerate() {
            for &t in &trials {
                out.push(Cell {
                    m,
                    n,
                    trials: t,
                    seed: cell_seed(config.seed, out.len()),
                    m_option,
                });
            }
        }
    }
    Ok(out)
}

fn linear_gaussian(config: &ExperimentConfig) -> Result<&LinearGaussianSpec> {
    match &config.generator {
        Some(GeneratorSpec::LinearGaussian(spec)) => Ok(spec),
        _ => Err(Error::Config(format!(
            "{} needs a linear-gaussian generator",
            config.experiment
        ))),
    }
}

fn discrete(config: &ExperimentConfig) -> Result<&DiscreteMismatchSpec> {
    match &config.generator {
        Some(GeneratorSpec::DiscreteMismatch(spec)) => Ok(spec),
        _ => Err(Error::Config(format!(
            "{} needs a discrete-mismatch generator",
            config.experiment
        ))),
    }
}

struct Draw {
    cell: Cell,
    unlabeled: UnlabeledSet,
    labeled: LabeledSet,
    truth: Option<GroundTruth>,
    truth_fn: Option<TruthFn>,
}

/// One dataset per grid cell, or the literal data for inline and CSV sources.
fn single_draws(config: &ExperimentConfig) -> Result<Vec<Draw>> {
    let fixed = |unlabeled: UnlabeledSet, labeled: LabeledSet| -> Result<Vec<Draw>> {
        let cell = Cell {
            m: unlabeled.len(),
            n: labeled.len(),
            trials: 1,
            seed: cell_seed(config.seed, 0),
            m_option: 0,
        };
        data::validate_datasets(unlabeled.clone(), labeled.clone())?;
        Ok(vec![Draw {
            cell,
            unlabeled,
            labeled,
            truth: None,
            truth_fn: None,
        }])
    };
    match &config.generator {
        None => Err(Error::Config(format!("{} needs a generator", config.experiment))),
        Some(GeneratorSpec::Inline {
            unlabeled,
            labeled,
            responses,
        }) => {
            let dim = labeled.first().map_or(0, Vec::len);
            let u = if unlabeled.is_empty() {
                UnlabeledSet::empty(dim)?
            } else {
                UnlabeledSet::from_rows(dim, unlabeled)?
            };
            fixed(u, LabeledSet::from_rows(dim, labeled, responses.clone())?)
        }
        Some(GeneratorSpec::Csv { unlabeled, labeled }) => {
            fixed(data::load_unlabeled(unlabeled)?, data::load_labeled(labeled)?)
        }
        Some(GeneratorSpec::LinearGaussian(spec)) => {
            let sampler = LinearGaussianSampler::new(spec)?;
            let truth = sampler.ground_truth();
            cells(config, (spec.m, spec.n), false)?
                .into_iter()
                .map(|cell| {
                    let (unlabeled, labeled) = sampler.sample(cell.m, cell.n, cell.seed)?;
                    Ok(Draw {
                        cell,
                        unlabeled,
                        labeled,
                        truth: Some(truth.clone()),
                        truth_fn: Some(truth.truth_fn()),
                    })
                })
                .collect()
        }
        Some(GeneratorSpec::DiscreteMismatch(spec)) => cells(config, (1, 1), false)?
            .into_iter()
            .map(|cell| {
                let (unlabeled, labeled, _) = gen_discrete_mismatch(spec, cell.m, cell.n, cell.seed)?;
                Ok(Draw {
                    cell,
                    unlabeled,
                    labeled,
                    truth: None,
                    truth_fn: Some(spec.conditional_mean()),
                })
            })
            .collect(),
    }
}

fn first_teacher(config: &ExperimentConfig) -> Result<&TeacherSpec> {
    config
        .teachers
        .first()
        .ok_or_else(|| Error::Config(format!("{} needs a teacher", config.experiment)))
}

fn resolve_theta(config: &ExperimentConfig, truth: Option<&GroundTruth>, default: Parameter) -> Result<Parameter> {
    let need_truth = || Error::Config("a named theta needs a linear-gaussian generator".into());
    match &config.theta {
        None => Ok(default),
        Some(ThetaSpec::Values(v)) => Parameter::new(v.clone()),
        Some(ThetaSpec::Named(ThetaName::Mean)) => Ok(Parameter::scalar(truth.ok_or_else(need_truth)?.theta_star)),
        Some(ThetaSpec::Named(ThetaName::Beta)) => Parameter::new(truth.ok_or_else(need_truth)?.beta.clone()),
    }
}

fn objective(config: &ExperimentConfig, kind: LossKind) -> Result<Objective> {
    Ok(match kind {
        LossKind::Tl => Objective::Tl,
        LossKind::Sl => Objective::Sl,
        LossKind::Dr => Objective::Dr,
        LossKind::Dr2 => Objective::Dr2(config.weighting.clone().unwrap_or_else(ImportanceWeighter::uniform)),
        LossKind::Curriculum => Objective::Curriculum {
            alpha: config
                .alpha
                .ok_or_else(|| Error::Config("curr losses need alpha".into()))?,
        },
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Closed-form estimates, loss values at `theta`, and full-batch minimizers.
pub(crate) fn estimate(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let teacher_spec = first_teacher(config)?;
    let losses = if config.losses.is_empty() {
        let mut l = vec![LossKind::Tl, LossKind::Sl, LossKind::Dr];
        if config.weighting.is_some() {
            l.push(LossKind::Dr2);
        }
        if config.alpha.is_some() {
            l.push(LossKind::Curriculum);
        }
        l
    } else {
        config.losses.clone()
    };
    for draw in single_draws(config)? {
        let (u, l, cell) = (&draw.unlabeled, &draw.labeled, &draw.cell);
        let teacher = make_teacher(teacher_spec, draw.truth_fn.as_ref(), Some(l))?;
        rows.push(cell, "tl", "theta", theta_tl(l), 0.0);
        rows.push(cell, "sl", "theta", theta_sl(u, l, &teacher), 0.0);
        rows.push(cell, "dr", "theta", theta_dr(u, l, &teacher), 0.0);
        let theta = resolve_theta(config, draw.truth.as_ref(), Parameter::scalar(0.0))?;
        for &kind in &losses {
            let loss = PreparedLoss::new(objective(config, kind)?, u, l, &teacher, config.model)?;
            rows.push(cell, kind.name(), "loss_at_theta", loss.value(&theta)?, 0.0);
            let outcome = minimize_prepared(&loss, &theta, &config.optim)?;
            for (j, v) in outcome.theta.as_slice().iter().enumerate() {
                rows.push(cell, kind.name(), &format!("argmin[{j}]"), *v, 0.0);
            }
            rows.push(cell, kind.name(), "converged", f64::from(u8::from(outcome.converged)), 0.0);
        }
    }
    Ok(())
}

fn quad(cov: &[Vec<f64>], a: &[f64], b: &[f64]) -> f64 {
    cov.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, s)| a[i] * s * b[j]).sum::<f64>())
        .sum()
}

/// Population `Var[Y]`, `Var[f̂]`, `Var[f̂ − Y]` and `E[f̂ − Y]` for teachers
/// built from a linear-Gaussian truth. Seeded per-covariate noise acts as
/// independent noise because covariates never repeat.
fn population_moments(truth: &GroundTruth, teacher: &TeacherSpec, m: usize, n: usize) -> Result<MomentSummary> {
    let explained = truth.explained_variance();
    let noise = truth.noise_sd * truth.noise_sd;
    let slope = &truth.beta[1..];
    let (var_fhat, var_resid, mean_resid) = match teacher {
        TeacherSpec::Perfect => (explained, noise, 0.0),
        TeacherSpec::Biased { bias } => (explained, noise, *bias),
        TeacherSpec::Noisy { bias, noise_sd, .. } => {
            let s2 = noise_sd * noise_sd;
            (explained + s2, s2 + noise, *bias)
        }
        TeacherSpec::Constant { value } => (0.0, truth.var_y(), value - truth.theta_star),
        TeacherSpec::Affine { intercept, slope: s } => {
            if s.len() != slope.len() {
                return Err(Error::DimensionMismatch {
                    expected: slope.len(),
                    got: s.len(),
                });
            }
            let diff: Vec<f64> = s.iter().zip(slope).map(|(a, b)| a - b).collect();
            let mean = intercept + s.iter().zip(&truth.x_mean).map(|(a, mu)| a * mu).sum::<f64>();
            (quad(&truth.x_cov, s, s), quad(&truth.x_cov, &diff, &diff) + noise, mean - truth.theta_star)
        }
        TeacherSpec::Ols { .. } => {
            return Err(Error::Config("ols teachers have no closed-form population moments".into()))
        }
    };
    MomentSummary::population(truth.var_y(), var_fhat, var_resid, mean_resid, m, n)
}

/// Monte Carlo MSE of the three mean estimators against their bounds.
pub(crate) fn mse_sweep(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let spec = linear_gaussian(config)?;
    if config.teachers.is_empty() {
        return Err(Error::Config("mse-sweep needs at least one teacher".into()));
    }
    if config.teachers.iter().any(|t| matches!(t, TeacherSpec::Ols { .. })) {
        return Err(Error::Config(
            "mse-sweep needs teachers with known population moments (not ols)".into(),
        ));
    }
    let sampler = LinearGaussianSampler::new(spec)?;
    let truth = sampler.ground_truth();
    let truth_fn = truth.truth_fn();
    let teachers: Vec<Teacher> = config
        .teachers
        .iter()
        .map(|t| make_teacher(t, Some(&truth_fn), None))
        .collect::<Result<_>>()?;
    // Every teacher sees the same datasets within a cell.
    for cell in cells(config, (spec.m, spec.n), true)? {
        rows.push(&cell, "truth", "theta_star", truth.theta_star, 0.0);
        let estimates = mc_trials(cell.trials, cell.seed, |_, seed| {
            let (u, l) = sampler.sample(cell.m, cell.n, seed)?;
            let tl = theta_tl(&l);
            Ok(teachers
                .iter()
                .map(|t| [tl, theta_sl(&u, &l, t), theta_dr(&u, &l, t)])
                .collect::<Vec<_>>())
        })?;
        for (t_index, teacher_spec) in config.teachers.iter().enumerate() {
            let bounds = mse_bounds(&population_moments(&truth, teacher_spec, cell.m, cell.n)?);
            let label = teacher_spec.label();
            for (k, (name, bound)) in [("tl", bounds.mse_tl), ("sl", bounds.bound_sl), ("dr", bounds.bound_dr)]
                .into_iter()
                .enumerate()
            {
                let values: Vec<f64> = estimates.iter().map(|e| e[t_index][k]).collect();
                let s = summarize(&values, truth.theta_star)?;
                let kind = format!("{name}:{label}");
                rows.push(&cell, &kind, "mse", s.mse, s.mse_se);
                rows.push(&cell, &kind, "mse_bound", bound, 0.0);
                rows.push(&cell, &kind, "mean", s.mean, s.mean_se);
                rows.push(&cell, &kind, "variance", s.variance, s.variance_se);
            }
        }
    }
    Ok(())
}

/// Mean gradient norm at the evaluation point and its log-log slope.
pub(crate) fn gradient_scaling(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let spec = linear_gaussian(config)?;
    if config.teachers.is_empty() {
        return Err(Error::Config("gradient-scaling needs at least one teacher".into()));
    }
    let losses = if config.losses.is_empty() {
        vec![LossKind::Dr]
    } else {
        config.losses.clone()
    };
    let objectives: Vec<Objective> = losses.iter().map(|k| objective(config, *k)).collect::<Result<_>>()?;
    let sampler = LinearGaussianSampler::new(spec)?;
    let truth = sampler.ground_truth();
    let truth_fn = truth.truth_fn();
    let theta = resolve_theta(config, Some(&truth), Parameter::scalar(truth.theta_star))?;
    config.model.check_dims(&theta, spec.d)?;
    let fixed_teachers: Vec<Option<Teacher>> = config
        .teachers
        .iter()
        .map(|t| match t {
            TeacherSpec::Ols { .. } => Ok(None),
            t => make_teacher(t, Some(&truth_fn), None).map(Some),
        })
        .collect::<Result<_>>()?;

    let cells = cells(config, (spec.m, spec.n), true)?;
    let combos = config.teachers.len() * objectives.len();
    let mut means: Vec<Vec<(Cell, f64)>> = vec![Vec::new(); combos];
    for cell in &cells {
        let norms = mc_trials(cell.trials, cell.seed, |_, seed| {
            let (u, l) = sampler.sample(cell.m, cell.n, seed)?;
            let mut out = Vec::with_capacity(combos);
            for (spec_t, fixed) in config.teachers.iter().zip(&fixed_teachers) {
                let teacher = match fixed {
                    Some(t) => t.clone(),
                    None => make_teacher(spec_t, None, Some(&l))?,
                };
                for obj in &objectives {
                    let loss = PreparedLoss::new(obj.clone(), &u, &l, &teacher, config.model)?;
                    out.push(norm(&loss.gradient(&theta)?));
                }
            }
            Ok(out)
        })?;
        for c in 0..combos {
            let values: Vec<f64> = norms.iter().map(|v| v[c]).collect();
            let s = summarize(&values, 0.0)?;
            let kind = format!("{}:{}", losses[c % losses.len()], config.teachers[c / losses.len()].label());
            rows.push(cell, &kind, "grad_norm", s.mean, s.mean_se);
            means[c].push((*cell, s.mean));
        }
    }

    // Along n, each m option gets its own line; along m + n all cells with
    // the same trial count share one.
    let group_of = |c: &Cell| match config.scaling_axis {
        ScalingAxis::N => (c.m_option, c.trials),
        ScalingAxis::MPlusN => (0, c.trials),
    };
    let mut groups: Vec<(usize, usize)> = cells.iter().map(group_of).collect();
    groups.sort_unstable();
    groups.dedup();
    for (c, series) in means.iter().enumerate() {
        let kind = format!("{}:{}", losses[c % losses.len()], config.teachers[c / losses.len()].label());
        for &(m_option, trials) in &groups {
            let points: Vec<(usize, f64)> = series
                .iter()
                .filter(|(cell, _)| group_of(cell) == (m_option, trials))
                .map(|(cell, v)| {
                    let size = match config.scaling_axis {
                        ScalingAxis::N => cell.n,
                        ScalingAxis::MPlusN => cell.m + cell.n,
                    };
                    (size, *v)
                })
                .collect();
            if points.len() < 3 {
                continue;
            }
            let fit = fit_scaling(&points)?;
            let summary = Cell {
                m: 0,
                n: 0,
                trials,
                seed: config.seed,
                m_option,
            };
            rows.push(&summary, &kind, "slope", fit.slope, 0.0);
            rows.push(&summary, &kind, "intercept", fit.intercept, 0.0);
            rows.push(&summary, &kind, "r_squared", fit.r_squared, 0.0);
        }
    }
    Ok(())
}

/// Exact expectations of the covariate-shift loss under each robustness
/// condition, plus optional Monte Carlo agreement rows.
pub(crate) fn mismatch_check(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let spec = discrete(config)?;
    spec.validate()?;
    let theta = match &config.theta {
        Some(ThetaSpec::Values(v)) => Parameter::new(v.clone())?,
        _ => return Err(Error::Config("mismatch-check needs literal theta values".into())),
    };
    let truth_fn = spec.conditional_mean();
    let teacher_spec = config
        .teachers
        .first()
        .cloned()
        .unwrap_or(TeacherSpec::Constant { value: 0.0 });
    let teacher = make_teacher(&teacher_spec, Some(&truth_fn), None)?;
    let exact = spec.exact_weighter();
    let wrong = config.weighting.clone().unwrap_or_else(ImportanceWeighter::uniform);
    let model = config.model;
    let summary = Cell {
        m: 0,
        n: 0,
        trials: 0,
        seed: config.seed,
        m_option: 0,
    };
    rows.push(&summary, "target", "expected_loss", exact_expected_loss(spec, &theta, model)?, 0.0);
    rows.push(
        &summary,
        "correct-pi",
        "expected_loss",
        exact_expected_dr2(spec, &theta, model, &teacher, &exact)?,
        0.0,
    );
    rows.push(
        &summary,
        "calibrated-teacher",
        "expected_loss",
        exact_expected_dr2_calibrated(spec, &theta, model, &wrong)?,
        0.0,
    );
    rows.push(
        &summary,
        "both-wrong",
        "expected_loss",
        exact_expected_dr2(spec, &theta, model, &teacher, &wrong)?,
        0.0,
    );
    if config.grid.trials.is_empty() {
        return Ok(());
    }
    for cell in cells(config, (1, 1), true)? {
        let values = mc_trials(cell.trials, cell.seed, |_, seed| {
            let (u, l, w) = gen_discrete_mismatch(spec, cell.m, cell.n, seed)?;
            PreparedLoss::new(Objective::Dr2(w), &u, &l, &teacher, model)?.value(&theta)
        })?;
        let s = summarize(&values, 0.0)?;
        rows.push(&cell, "correct-pi", "mc_mean", s.mean, s.mean_se);
    }
    Ok(())
}

/// Scaled variance of the labeled-only and doubly robust mean estimators
/// with a linear teacher fit on the labeled data.
pub(crate) fn variance_check(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let spec = linear_gaussian(config)?;
    let ridge = match config.teachers.first() {
        None => 0.0,
        Some(TeacherSpec::Ols { ridge }) => *ridge,
        Some(_) => return Err(Error::Config("variance-check teachers must be ols".into())),
    };
    let fits = if config.teacher_fit.is_empty() {
        vec![TeacherFit::SameData]
    } else {
        config.teacher_fit.clone()
    };
    let sampler = LinearGaussianSampler::new(spec)?;
    let truth = sampler.ground_truth();
    let options = OlsOptions { ridge };
    let mut kinds = vec!["tl"];
    kinds.extend(fits.iter().map(|f| match f {
        TeacherFit::SameData => "dr",
        TeacherFit::Split => "dr-split",
    }));
    for cell in cells(config, (spec.m, spec.n), true)? {
        let targets = asymptotic_variances(&SemiparametricSpec {
            beta: truth.beta.clone(),
            sigma_x: truth.x_cov.clone(),
            resid_var: truth.noise_sd * truth.noise_sd,
            m: cell.m,
            n: cell.n,
        })?;
        let estimates = mc_trials(cell.trials, cell.seed, |_, seed| {
            let (u, l) = sampler.sample(cell.m, cell.n, seed)?;
            let tl = theta_tl(&l);
            let mut out = vec![tl];
            for fit in &fits {
                out.push(match fit {
                    TeacherFit::SameData => theta_dr(&u, &l, &fit_linear_teacher(&l, options)?),
                    TeacherFit::Split => {
                        let settings = OptimSettings {
                            seed: mix64(seed),
                            ..config.optim
                        };
                        split_and_estimate(
                            &l,
                            &u,
                            |train| fit_linear_teacher(train, options),
                            LossModel::SquaredError,
                            &Parameter::scalar(tl),
                            &settings,
                            seed,
                            None,
                        )?
                        .theta
                        .as_slice()[0]
                    }
                });
            }
            Ok(out)
        })?;
        let n = cell.n as f64;
        rows.push(&cell, "truth", "theta_star", truth.theta_star, 0.0);
        for (k, kind) in kinds.iter().enumerate() {
            let values: Vec<f64> = estimates.iter().map(|e| e[k]).collect();
            let s = summarize(&values, truth.theta_star)?;
            rows.push(&cell, kind, "mean", s.mean, s.mean_se);
            rows.push(&cell, kind, "scaled_variance", n * s.variance, n * s.variance_se);
            rows.push(&cell, kind, "scaled_mse", n * s.mse, n * s.mse_se);
            match *kind {
                "tl" => rows.push(&cell, kind, "avar_target", targets.avar_tl, 0.0),
                "dr" => rows.push(&cell, kind, "avar_target", targets.avar_dr, 0.0),
                _ => {}
            }
        }
    }
    Ok(())
}

/// Curriculum SGD with per-epoch weights and losses.
pub(crate) fn curriculum_train(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let schedule = config
        .schedule
        .ok_or_else(|| Error::Config("curriculum-train needs a schedule".into()))?;
    let teacher_spec = first_teacher(config)?;
    for draw in single_draws(config)? {
        let (u, l, cell) = (&draw.unlabeled, &draw.labeled, &draw.cell);
        let teacher = make_teacher(teacher_spec, draw.truth_fn.as_ref(), Some(l))?;
        let theta0 = resolve_theta(config, draw.truth.as_ref(), Parameter::scalar(0.0))?;
        let settings = OptimSettings {
            seed: trial_seed(cell.seed, config.optim.seed),
            ..config.optim
        };
        let outcome = train_curriculum(u, l, &teacher, config.model, &schedule, &theta0, &settings)?;
        for (t, (alpha, loss)) in outcome.alphas.iter().zip(&outcome.epoch_losses).enumerate() {
            rows.push(cell, "curr", &format!("alpha[{}]", t + 1), *alpha, 0.0);
            rows.push(cell, "curr", &format!("loss[{}]", t + 1), *loss, 0.0);
        }
        for (j, v) in outcome.theta.as_slice().iter().enumerate() {
            rows.push(cell, "curr", &format!("theta[{j}]"), *v, 0.0);
        }
        rows.push(cell, "curr", "steps", outcome.steps as f64, 0.0);
        if config.model == LossModel::SquaredError && outcome.theta.len() == 1 {
            let dr = theta_dr(u, l, &teacher);
            rows.push(cell, "dr", "theta", dr, 0.0);
            rows.push(cell, "curr", "gap_to_dr", (outcome.theta.as_slice()[0] - dr).abs(), 0.0);
        }
    }
    Ok(())
}

/// Largest finite-difference disagreement over random instances for every
/// loss kind and model.
pub(crate) fn gradient_check(config: &ExperimentConfig, rows: &mut Rows) -> Result<()> {
    let losses = if config.losses.is_empty() {
        LossKind::ALL.to_vec()
    } else {
        config.losses.clone()
    };
    let trials = if config.grid.trials.is_empty() {
        vec![100]
    } else {
        config.grid.trials.clone()
    };
    for (index, &t) in trials.iter().enumerate() {
        let cell = Cell {
            m: 0,
            n: 0,
            trials: t,
            seed: cell_seed(config.seed, index),
            m_option: 0,
        };
        for &kind in &losses {
            for model in LossModel::ALL {
                let errors = mc_trials(t, trial_seed(cell.seed, kind as u64 * 2 + model as u64), |_, seed| {
                    let inst = random_instance(seed, kind, model)?;
                    let loss = PreparedLoss::new(inst.objective, &inst.unlabeled, &inst.labeled, &inst.teacher, model)?;
                    let exact = loss.gradient(&inst.theta)?;
                    let fd = fd_gradient(|th| loss.value(th), &inst.theta, default_fd_step(&inst.theta))?;
                    Ok(relative_error(&exact, &fd))
                })?;
                let worst = errors.iter().fold(0.0_f64, |a, e| a.max(*e));
                rows.push(&cell, &format!("{kind}/{}", model.name()), "max_relative_error", worst, 0.0);
            }
        }
    }
    Ok(())
}
