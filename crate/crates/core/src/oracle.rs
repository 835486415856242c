//! Independent checks: finite differences, exact expectations by enumeration,
//! Monte Carlo moments with jackknife errors, gradient covariances and
//! log-log scaling fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher};
use crate::error::{Error, Result};
use crate::rng;
use crate::sum::{NeumaierSum, VecSum};
use crate::synth::DiscreteMismatchSpec;

/// `1e-6 · (1 + ‖θ‖∞)`.
pub fn default_fd_step(theta: &Parameter) -> f64 {
    let norm = theta.as_slice().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    1e-6 * (1.0 + norm)
}

/// Central-difference gradient of `loss` at `theta`.
pub fn fd_gradient<F>(loss: F, theta: &Parameter, eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&Parameter) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidSpec(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut grad = Vec::with_capacity(theta.len());
    let mut e = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        e[i] = 1.0;
        let plus = loss(&theta.moved(eps, &e))?;
        let minus = loss(&theta.moved(-eps, &e))?;
        e[i] = 0.0;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss near theta along component {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// `‖a − b‖∞ / max(1, ‖a‖∞, ‖b‖∞)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error on vectors of different length");
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
    diff / 1.0_f64.max(inf(a)).max(inf(b))
}

/// `E_{P_X × P_{Y|X}}[ℓ_θ(X, Y)]`.
pub fn exact_expected_loss(spec: &DiscreteMismatchSpec, theta: &Parameter, model: LossModel) -> Result<f64> {
    spec.validate()?;
    model.check_dims(theta, spec.dim())?;
    let mut acc = NeumaierSum::new();
    for ((x, p), cond) in spec.support.iter().zip(&spec.p_x).zip(&spec.y_given_x) {
        for [y, py] in cond {
            acc.add(p * py * model.value(theta, x, *y));
        }
    }
    Ok(acc.total())
}

/// Expectation of the covariate-shift loss over unlabeled draws from `P_X`
/// and labeled draws from `Q_X × P_{Y|X}`:
/// `E_P[ℓ(X, f̂)] − E_Q[π ℓ(X, f̂)] + E_Q[π ℓ(X, Y)]`.
pub fn exact_expected_dr2(
    spec: &DiscreteMismatchSpec,
    theta: &Parameter,
    model: LossModel,
    teacher: &Teacher,
    weighter: &ImportanceWeighter,
) -> Result<f64> {
    spec.validate()?;
    model.check_dims(theta, spec.dim())?;
    let mut pseudo = NeumaierSum::new();
    let mut correction = NeumaierSum::new();
    let mut labeled = NeumaierSum::new();
    for (((x, p), q), cond) in spec.support.iter().zip(&spec.p_x).zip(&spec.q_x).zip(&spec.y_given_x) {
        let pseudo_loss = model.value(theta, x, teacher.predict(x));
        pseudo.add(p * pseudo_loss);
        if *q > 0.0 {
            let w = weighter.weight(x);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidSpec(format!("importance weight {w} at support point {x:?}")));
            }
            correction.add(q * w * pseudo_loss);
            for [y, py] in cond {
                labeled.add(q * w * py * model.value(theta, x, *y));
            }
        }
    }
    Ok(pseudo.total() - correction.total() + labeled.total())
}

/// [`exact_expected_dr2`] for a teacher that is loss-calibrated pointwise,
/// i.e. `ℓ_θ(x, f̂(x)) = E[ℓ_θ(x, Y) | X = x]` at every support point.
pub fn exact_expected_dr2_calibrated(
    spec: &DiscreteMismatchSpec,
    theta: &Parameter,
    model: LossModel,
    weighter: &ImportanceWeighter,
) -> Result<f64> {
    spec.validate()?;
    model.check_dims(theta, spec.dim())?;
    let mut pseudo = NeumaierSum::new();
    let mut correction = NeumaierSum::new();
    let mut labeled = NeumaierSum::new();
    for (((x, p), q), cond) in spec.support.iter().zip(&spec.p_x).zip(&spec.q_x).zip(&spec.y_given_x) {
        let mut cond_loss = NeumaierSum::new();
        for [y, py] in cond {
            cond_loss.add(py * model.value(theta, x, *y));
        }
        let cond_loss = cond_loss.total();
        pseudo.add(p * cond_loss);
        if *q > 0.0 {
            let w = weighter.weight(x);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidSpec(format!("importance weight {w} at support point {x:?}")));
            }
            correction.add(q * w * cond_loss);
            for [y, py] in cond {
                labeled.add(q * w * py * model.value(theta, x, *y));
            }
        }
    }
    Ok(pseudo.total() - correction.total() + labeled.total())
}

/// Moments of a scalar Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub trials: usize,
    pub mean: f64,
    pub mean_se: f64,
    /// `mean((estimate − θ*)²)`.
    pub mse: f64,
    pub mse_se: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub variance_se: f64,
}

/// Runs `trial(index, seed)` for every trial with seeds derived from `master`.
/// Results come back in trial order; the lowest failing trial aborts the run.
pub fn mc_trials<T, F>(trials: usize, master: u64, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let outcomes: Vec<Result<T>> = (0..trials)
        .into_par_iter()
        .map(|i| trial(i, rng::trial_seed(master, i as u64)))
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| match e {
                e @ Error::TrialFailed { .. } => e,
                e => Error::TrialFailed {
                    trial: i,
                    source: Box::new(e),
                },
            })
        })
        .collect()
}

/// Mean, MSE against `theta_star` and variance of `values` with
/// leave-one-out jackknife standard errors.
pub fn summarize(values: &[f64], theta_star: f64) -> Result<McStats> {
    let t = values.len();
    if t < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 trials, got {t}")));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::TrialFailed {
            trial: i,
            source: Box::new(Error::NonFinite("estimate".into())),
        });
    }
    let (mean, mean_se) = mean_and_se(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - theta_star) * (v - theta_star)).collect();
    let (mse, mse_se) = mean_and_se(&sq);
    let (variance, variance_se) = variance_and_jackknife(values, mean);
    Ok(McStats {
        trials: t,
        mean,
        mean_se,
        mse,
        mse_se,
        variance,
        variance_se,
    })
}

/// For a plain mean the jackknife error reduces to `s / √T`.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let t = values.len() as f64;
    let mean = crate::sum::mean(values.iter().copied());
    let ss = crate::sum::sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (t - 1.0) / t).sqrt())
}

fn variance_and_jackknife(values: &[f64], mean: f64) -> (f64, f64) {
    let t = values.len() as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let s1 = crate::sum::sum(dev.iter().copied());
    let s2 = crate::sum::sum(dev.iter().map(|d| d * d));
    let variance = (s2 - s1 * s1 / t) / (t - 1.0);
    if values.len() < 3 {
        return (variance, f64::NAN);
    }
    let loo: Vec<f64> = dev
        .iter()
        .map(|d| {
            let r1 = s1 - d;
            (s2 - d * d - r1 * r1 / (t - 1.0)) / (t - 2.0)
        })
        .collect();
    let loo_mean = crate::sum::mean(loo.iter().copied());
    let ss = crate::sum::sum(loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)));
    (variance, ((t - 1.0) / t * ss).sqrt())
}

/// Runs a scalar estimator over `trials` seeded datasets and summarizes it.
pub fn mc_statistic<F>(trials: usize, master: u64, theta_star: f64, estimator: F) -> Result<McStats>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 trials, got {trials}")));
    }
    summarize(&mc_trials(trials, master, estimator)?, theta_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCovarianceReport {
    /// `Cov[∇ℓ_θ(X, f̂(X))]`.
    pub sigma_fhat: Vec<Vec<f64>>,
    /// `Cov[∇ℓ_θ(X, f̂(X)) − ∇ℓ_θ(X, Y)]`.
    pub sigma_resid: Vec<Vec<f64>>,
    /// `Cov[∇ℓ_θ(X, Y)]`.
    pub sigma_y: Vec<Vec<f64>>,
    pub sample_count: usize,
    pub d: usize,
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let mut mean = VecSum::zeros(d);
    for r in rows {
        mean.add_scaled(1.0, r);
    }
    let mean: Vec<f64> = mean.totals().iter().map(|s| s / rows.len() as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let c = crate::sum::sum(rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])))
                / (rows.len() - 1) as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    cov
}

/// Sample covariances of the per-sample gradient vectors at `theta`.
pub fn estimate_grad_covariances(
    samples: &LabeledSet,
    teacher: &Teacher,
    model: LossModel,
    theta: &Parameter,
) -> Result<GradientCovarianceReport> {
    model.check_dims(theta, samples.dim())?;
    let d = theta.len();
    if samples.len() < d + 1 {
        return Err(Error::InvalidSpec(format!(
            "need at least {} samples for a {d}-dimensional gradient covariance",
            d + 1
        )));
    }
    let mut g_fhat = Vec::with_capacity(samples.len());
    let mut g_y = Vec::with_capacity(samples.len());
    let mut g_resid = Vec::with_capacity(samples.len());
    for (x, y) in samples.iter() {
        let a = model.gradient(theta, x, teacher.predict(x));
        let b = model.gradient(theta, x, y);
        g_resid.push(a.iter().zip(&b).map(|(u, v)| u - v).collect());
        g_fhat.push(a);
        g_y.push(b);
    }
    Ok(GradientCovarianceReport {
        sigma_fhat: covariance(&g_fhat),
        sigma_resid: covariance(&g_resid),
        sigma_y: covariance(&g_y),
        sample_count: samples.len(),
        d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln size, ln statistic)`.
pub fn fit_scaling(points: &[(usize, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InvalidSpec(format!("scaling fit needs at least 3 points, got {}", points.len())));
    }
    if let Some((s, v)) = points.iter().find(|(s, v)| !(*v > 0.0 && v.is_finite()) || *s == 0) {
        return Err(Error::InvalidSpec(format!("scaling point ({s}, {v}) is not positive")));
    }
    let xs: Vec<f64> = points.iter().map(|(s, _)| (*s as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let mx = crate::sum::mean(xs.iter().copied());
    let my = crate::sum::mean(ys.iter().copied());
    let sxx = crate::sum::sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return Err(Error::InvalidSpec("scaling fit needs at least two distinct sizes".into()));
    }
    let sxy = crate::sum::sum(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)));
    let syy = crate::sum::sum(ys.iter().map(|y| (y - my) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TruthFn, UnlabeledSet};
    use crate::losses::{grad_loss, loss_dr, Objective};
    use crate::synth::two_point_mismatch;

    #[test]
    fn fd_on_quadratic_and_constant() {
        let theta = Parameter::scalar(3.0);
        let g = fd_gradient(|t| Ok(t.as_slice()[0].powi(2)), &theta, 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = fd_gradient(|_| Ok(2.5), &Parameter::new(vec![1.0, -2.0]).unwrap(), 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(fd_gradient(|_| Ok(f64::NAN), &theta, 1e-5).is_err());
        assert!(fd_gradient(|_| Ok(0.0), &theta, 0.0).is_err());
    }

    #[test]
    fn fd_matches_dr_fixture_gradient() {
        let u = UnlabeledSet::from_rows(1, &[vec![1.0], vec![3.0]]).unwrap();
        let l = LabeledSet::from_rows(1, &[vec![2.0]], vec![4.0]).unwrap();
        let teacher = Teacher::affine(0.0, vec![1.0]);
        let model = LossModel::SquaredError;
        let theta = Parameter::scalar(0.0);
        let fd = fd_gradient(|t| loss_dr(t, &u, &l, &teacher, model), &theta, default_fd_step(&theta)).unwrap();
        let exact = grad_loss(&Objective::Dr, &theta, &u, &l, &teacher, model).unwrap();
        assert!((fd[0] + 8.0).abs() < 1e-6);
        assert!((exact[0] + 8.0).abs() < 1e-12);
    }

    #[test]
    fn expected_loss_examples() {
        let spec = two_point_mismatch();
        let sq = LossModel::SquaredError;
        assert!((exact_expected_loss(&spec, &Parameter::scalar(0.5), sq).unwrap() - 0.25).abs() < 1e-15);
        assert!((exact_expected_loss(&spec, &Parameter::scalar(1.0), sq).unwrap() - 0.5).abs() < 1e-15);
        let single = DiscreteMismatchSpec {
            support: vec![vec![2.0]],
            p_x: vec![1.0],
            q_x: vec![1.0],
            y_given_x: vec![vec![[0.75, 1.0]]],
        };
        assert_eq!(exact_expected_loss(&single, &Parameter::scalar(0.75), sq).unwrap(), 0.0);
    }

    #[test]
    fn expected_dr2_examples() {
        let spec = two_point_mismatch();
        let sq = LossModel::SquaredError;
        let zero = Teacher::constant(0.0);
        let calibrated = Teacher::noisy_oracle(spec.conditional_mean(), 0.0, 0.0, 0);
        let one = Parameter::scalar(1.0);
        let half = Parameter::scalar(0.5);
        let correct = exact_expected_dr2(&spec, &one, sq, &zero, &spec.exact_weighter()).unwrap();
        assert!((correct - 0.5).abs() < 1e-12);
        let cal = exact_expected_dr2(&spec, &half, sq, &calibrated, &ImportanceWeighter::uniform()).unwrap();
        assert!((cal - 0.25).abs() < 1e-12);
        let wrong = exact_expected_dr2(&spec, &one, sq, &zero, &ImportanceWeighter::uniform()).unwrap();
        assert!((wrong - 0.8).abs() < 1e-12);
        let bad = ImportanceWeighter::Constant { value: f64::NAN };
        assert!(exact_expected_dr2(&spec, &one, sq, &zero, &bad).is_err());
    }

    #[test]
    fn mc_degenerate_estimator() {
        let s = mc_statistic(50, 3, 1.5, |_, _| Ok(1.5)).unwrap();
        assert_eq!((s.mean, s.mse, s.variance), (1.5, 0.0, 0.0));
        assert_eq!((s.mean_se, s.mse_se, s.variance_se), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mc_reports_failing_trial() {
        let err = mc_statistic(20, 3, 0.0, |i, _| {
            if i == 7 || i == 12 {
                Err(Error::NonFinite("x".into()))
            } else {
                Ok(0.0)
            }
        })
        .unwrap_err();
        assert_eq!(err.trial_index(), Some(7));
        assert!(mc_statistic(1, 3, 0.0, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let run = |master| {
            mc_statistic(200, master, 0.0, |_, seed| {
                Ok(rng::normal_from_hash(seed))
            })
            .unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn jackknife_variance_matches_brute_force() {
        let values: Vec<f64> = (0..25).map(|i| ((i * 7919) % 31) as f64 * 0.37 - 2.0).collect();
        let s = summarize(&values, 0.0).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let t = values.len() as f64;
        let loo: Vec<f64> = (0..values.len())
            .map(|i| {
                let rest: Vec<f64> = values.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                var(&rest)
            })
            .collect();
        let lm = loo.iter().sum::<f64>() / t;
        let se = ((t - 1.0) / t * loo.iter().map(|v| (v - lm).powi(2)).sum::<f64>()).sqrt();
        assert!((s.variance - var(&values)).abs() < 1e-12);
        assert!((s.variance_se - se).abs() < 1e-10, "{} vs {se}", s.variance_se);
    }

    #[test]
    fn grad_covariances_perfect_teacher() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).sqrt()]).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let l = LabeledSet::from_rows(2, &x, y).unwrap();
        let teacher = Teacher::noisy_oracle(
            TruthFn::Affine {
                intercept: 1.0,
                slope: vec![2.0, -1.0],
            },
            0.0,
            0.0,
            0,
        );
        let theta = Parameter::new(vec![0.1, 0.2, 0.3]).unwrap();
        let rep = estimate_grad_covariances(&l, &teacher, LossModel::SquaredError, &theta).unwrap();
        assert_eq!(rep.d, 3);
        assert!(rep.sigma_resid.iter().flatten().all(|v| v.abs() < 1e-12));
        for m in [&rep.sigma_fhat, &rep.sigma_y] {
            for (i, row) in m.iter().enumerate() {
                assert!(row[i] >= 0.0);
                for (j, v) in row.iter().enumerate() {
                    assert_eq!(*v, m[j][i]);
                }
            }
        }
        let tiny = LabeledSet::from_rows(2, &x[..3], vec![0.0; 3]).unwrap();
        assert!(estimate_grad_covariances(&tiny, &teacher, LossModel::SquaredError, &theta).is_err());
    }

    #[test]
    fn scaling_fit_examples() {
        let pts: Vec<(usize, f64)> = [100, 400, 1600, 6400].iter().map(|&s| (s, (s as f64).powf(-0.5))).collect();
        let fit = fit_scaling(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let flat = fit_scaling(&[(1, 2.0), (2, 2.0), (4, 2.0)]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert!(fit_scaling(&[(1, 2.0), (2, 0.0), (4, 2.0)]).is_err());
        assert!(fit_scaling(&[(1, 2.0), (2, 1.0)]).is_err());
    }
}
