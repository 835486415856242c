//! Acceptance suite. Runs every criterion at full size, prints one PASS/FAIL
//! line per criterion and exits non-zero if any fails.

use std::path::PathBuf;
use std::time::Instant;

use drst_core::closed_form::{theta_dr, theta_sl, theta_tl};
use drst_core::harness::instances::random_mean_instance;
use drst_core::harness::{self, ExperimentConfig, ExperimentKind, ReportFormat, ResultRow};
use drst_core::losses::{loss_dr, loss_sl, loss_tl, LossKind};
use drst_core::optim::{minimize_batch, train_curriculum, OptimSettings};
use drst_core::oracle::{exact_expected_dr2, exact_expected_dr2_calibrated, exact_expected_loss};
use drst_core::synth::{two_point_mismatch, LinearGaussianSampler, LinearGaussianSpec};
use drst_core::{
    CurriculumSchedule, ImportanceWeighter, LabeledSet, LossModel, Objective, Parameter, ScheduleKind, Teacher,
    TruthFn, UnlabeledSet,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(config: &str) -> Result<Vec<ResultRow>, String> {
    let config = ExperimentConfig::from_toml_str(config).map_err(|e| e.to_string())?;
    harness::run_experiment(&config).map_err(|e| e.to_string())
}

fn find<'a>(rows: &'a [ResultRow], kind: &str, statistic: &str, m: usize) -> Result<&'a ResultRow, String> {
    rows.iter()
        .find(|r| r.kind == kind && r.statistic == statistic && r.m == m)
        .ok_or_else(|| format!("missing row {kind}/{statistic} at m={m}"))
}

fn closed_form_fixture() -> Outcome {
    let u = UnlabeledSet::from_rows(1, &[vec![1.0], vec![3.0]]).map_err(|e| e.to_string())?;
    let l = LabeledSet::from_rows(1, &[vec![2.0]], vec![4.0]).map_err(|e| e.to_string())?;
    let f = Teacher::affine(0.0, vec![1.0]);
    let model = LossModel::SquaredError;
    let zero = Parameter::scalar(0.0);
    let thetas = [theta_tl(&l), theta_sl(&u, &l, &f), theta_dr(&u, &l, &f)];
    let losses = [
        loss_tl(&zero, &l, model).map_err(|e| e.to_string())?,
        loss_sl(&zero, &u, &l, &f, model).map_err(|e| e.to_string())?,
        loss_dr(&zero, &u, &l, &f, model).map_err(|e| e.to_string())?,
    ];
    let ok = thetas == [4.0, 8.0 / 3.0, 4.0]
        && (losses[0] - 16.0).abs() <= 1e-12
        && (losses[1] - 26.0 / 3.0).abs() <= 1e-12
        && (losses[2] - 50.0 / 3.0).abs() <= 1e-12;
    check(ok, format!("thetas {thetas:?}, losses at 0 {losses:?}"))
}

const BIASES: [f64; 3] = [0.0, 0.5, 2.0];
const TEACHER_NOISE: [f64; 3] = [0.0, 0.5, 1.0];

fn mse_bound_suite() -> Outcome {
    // y = x + e with Var x = Var e = 1/2, so Var Y = 1.
    let mut config = String::from(
        r#"
experiment = "mse-sweep"
seed = 20240601

[generator]
kind = "linear-gaussian"
d = 1
beta = [0.0, 1.0]
noise_sd = 0.7071067811865476
x_mean = [0.0]
x_cov = [[0.5]]

[grid]
n = [200]
m_ratio = [10.0, 1.0, 0.5]
trials = [20000]
"#,
    );
    for (i, b) in BIASES.iter().enumerate() {
        for (j, s) in TEACHER_NOISE.iter().enumerate() {
            config.push_str(&format!(
                "\n[[teachers]]\nkind = \"noisy\"\nbias = {b:?}\nnoise_sd = {s:?}\nseed = {}\n",
                100 + 3 * i + j
            ));
        }
    }
    let rows = run(&config)?;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for mse in rows.iter().filter(|r| r.statistic == "mse") {
        let bound = find(&rows, &mse.kind, "mse_bound", mse.m)?;
        let slack = (mse.value - bound.value) / mse.stderr.max(f64::MIN_POSITIVE);
        worst = worst.max(slack);
        checked += 1;
        if mse.value > bound.value + 4.0 * mse.stderr {
            return Err(format!(
                "{} at m={}: mse {:.6e} > bound {:.6e} + 4 x {:.2e}",
                mse.kind, mse.m, mse.value, bound.value, mse.stderr
            ));
        }
    }
    let sl = find(&rows, "sl:noisy(2,0)", "mse", 2000)?.value;
    let dr = find(&rows, "dr:noisy(2,0)", "mse", 2000)?.value;
    check(
        checked == 81 && sl >= 10.0 * dr,
        format!(
            "{checked} estimator cells within bound + 4 SE (max (mse - bound)/SE = {worst:.2}); \
             m=10n, b=2, sf=0: MSE(SL)={sl:.4e}, MSE(DR)={dr:.4e}, ratio {:.1}",
            sl / dr
        ),
    )
}

fn slope_from(rows: &[ResultRow], kind: &str) -> Result<(f64, f64), String> {
    Ok((find(rows, kind, "slope", 0)?.value, find(rows, kind, "r_squared", 0)?.value))
}

fn gradient_scaling() -> Outcome {
    let biased = run(r#"
experiment = "gradient-scaling"
seed = 31
theta = "mean"

[generator]
kind = "linear-gaussian"
d = 1
beta = [1.0, 1.0]
noise_sd = 1.0
x_mean = [0.0]
x_cov = [[1.0]]

[[teachers]]
kind = "biased"
bias = 1.0

[grid]
n = [100, 400, 1600, 6400]
m_ratio = [10.0]
trials = [2000]
"#)?;
    // Fixed n: only the unlabeled count grows, so a -1/2 slope in m + n shows
    // the unlabeled samples counting fully.
    let perfect = run(r#"
experiment = "gradient-scaling"
seed = 32
theta = "mean"
scaling_axis = "m-plus-n"

[generator]
kind = "linear-gaussian"
d = 1
beta = [1.0, 1.0]
noise_sd = 0.0
x_mean = [0.0]
x_cov = [[1.0]]

[[teachers]]
kind = "perfect"

[grid]
n = [100]
m = [1000, 4000, 16000, 64000]
trials = [2000]
"#)?;
    let (s1, r1) = slope_from(&biased, "dr:biased(1)")?;
    let (s2, r2) = slope_from(&perfect, "dr:perfect")?;
    let in_range = |s: f64| (-0.6..=-0.4).contains(&s);
    check(
        in_range(s1) && r1 >= 0.99 && in_range(s2) && r2 >= 0.99,
        format!("biased teacher vs n: slope {s1:.4}, r2 {r1:.5}; perfect teacher vs m+n: slope {s2:.4}, r2 {r2:.5}"),
    )
}

fn mismatch_identities() -> Outcome {
    let spec = two_point_mismatch();
    let exact = spec.exact_weighter();
    let teachers = [
        Teacher::constant(0.0),
        Teacher::constant(0.7),
        Teacher::affine(-0.3, vec![2.0]),
        Teacher::noisy_oracle(spec.conditional_mean(), 0.4, 1.5, 8),
    ];
    let weights = [
        ImportanceWeighter::uniform(),
        ImportanceWeighter::Constant { value: 2.0 },
        ImportanceWeighter::Table {
            points: vec![vec![0.0], vec![1.0]],
            weights: vec![0.1, 7.0],
        },
    ];
    let calibrated = Teacher::noisy_oracle(TruthFn::Affine { intercept: 0.0, slope: vec![1.0] }, 0.0, 0.0, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let err = |e: drst_core::Error| e.to_string();
    for model in LossModel::ALL {
        for theta in [-1.0, 0.0, 0.5, 1.0, 2.5] {
            let theta = Parameter::scalar(theta);
            let target = exact_expected_loss(&spec, &theta, model).map_err(err)?;
            for t in &teachers {
                worst = worst.max((exact_expected_dr2(&spec, &theta, model, t, &exact).map_err(err)? - target).abs());
                count += 1;
            }
            for w in &weights {
                let a = exact_expected_dr2_calibrated(&spec, &theta, model, w).map_err(err)?;
                let b = exact_expected_dr2(&spec, &theta, model, &calibrated, w).map_err(err)?;
                worst = worst.max((a - target).abs()).max((b - target).abs());
                count += 2;
            }
        }
    }
    let one = Parameter::scalar(1.0);
    let sq = LossModel::SquaredError;
    let target = exact_expected_loss(&spec, &one, sq).map_err(err)?;
    let both_wrong =
        exact_expected_dr2(&spec, &one, sq, &Teacher::constant(0.0), &ImportanceWeighter::uniform()).map_err(err)?;
    check(
        worst <= 1e-12 && (both_wrong - 0.8).abs() <= 1e-12 && (target - 0.5).abs() <= 1e-12,
        format!("{count} identities, max |E[L_DR2] - target| = {worst:.1e}; both wrong at theta=1: {both_wrong} vs {target}"),
    )
}

fn variance_check() -> Outcome {
    let rows = run(r#"
experiment = "variance-check"
seed = 4242

[generator]
kind = "linear-gaussian"
d = 2
beta = [1.0, 0.6, 0.8]
noise_sd = 1.0
x_mean = [0.0, 0.0]
x_cov = [[1.0, 0.0], [0.0, 1.0]]

[[teachers]]
kind = "ols"

[grid]
n = [2000]
m = [6000]
trials = [20000]
"#)?;
    let theta_star = find(&rows, "truth", "theta_star", 6000)?.value;
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, target) in [("dr", 1.25), ("tl", 2.0)] {
        let var = find(&rows, kind, "scaled_variance", 6000)?;
        let mean = find(&rows, kind, "mean", 6000)?;
        let rel = (var.value - target).abs() / target;
        let z = (mean.value - theta_star).abs() / mean.stderr;
        ok &= rel <= 0.10 && z <= 4.0;
        parts.push(format!(
            "{kind}: n Var = {:.4} (target {target}, rel err {:.3}), mean off by {z:.2} SE",
            var.value, rel
        ));
    }
    check(ok, parts.join("; "))
}

fn gradient_correctness() -> Outcome {
    let rows = run("experiment = \"gradient-check\"\nseed = 606\n[grid]\ntrials = [100]\n")?;
    let worst = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let ok = rows.len() == LossKind::ALL.len() * LossModel::ALL.len() && worst <= 1e-6;
    check(ok, format!("{} kind/model pairs x 100 instances, max relative error {worst:.2e}", rows.len()))
}

fn optimizer_agreement() -> Outcome {
    let settings = OptimSettings::default();
    let model = LossModel::SquaredError;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (u, l, f) = random_mean_instance(seed).map_err(|e| e.to_string())?;
        let start = Parameter::scalar(0.0);
        for (obj, target) in [
            (Objective::Tl, theta_tl(&l)),
            (Objective::Sl, theta_sl(&u, &l, &f)),
            (Objective::Dr, theta_dr(&u, &l, &f)),
        ] {
            let out = minimize_batch(&obj, &u, &l, &f, model, &start, &settings).map_err(|e| e.to_string())?;
            worst = worst.max((out.theta.as_slice()[0] - target).abs());
        }
    }
    let schedule = CurriculumSchedule::new(ScheduleKind::Linear, 20).map_err(|e| e.to_string())?;
    let mut worst_curr: f64 = 0.0;
    for (i, (m, n)) in [(400, 100), (390, 110), (1000, 37), (50, 200), (200, 64)].into_iter().enumerate() {
        let spec = LinearGaussianSpec {
            d: 1,
            beta: vec![2.0, 1.0],
            noise_sd: 1.0,
            x_mean: vec![0.5],
            x_cov: vec![vec![1.0]],
            m,
            n,
            seed: i as u64,
        };
        let sampler = LinearGaussianSampler::new(&spec).map_err(|e| e.to_string())?;
        let (u, l) = sampler.sample(m, n, 70 + i as u64).map_err(|e| e.to_string())?;
        let f = Teacher::affine(2.3, vec![0.8]);
        let sgd = OptimSettings {
            batch_size: 20,
            seed: i as u64,
            ..settings
        };
        let out = train_curriculum(&u, &l, &f, model, &schedule, &Parameter::scalar(0.0), &sgd)
            .map_err(|e| e.to_string())?;
        worst_curr = worst_curr.max((out.theta.as_slice()[0] - theta_dr(&u, &l, &f)).abs());
    }
    check(
        worst <= 1e-8 && worst_curr <= 1e-3,
        format!("max |argmin - closed form| = {worst:.1e} over 300 fits; curriculum gap to theta_DR {worst_curr:.1e}"),
    )
}

fn determinism() -> Outcome {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for kind in ExperimentKind::ALL {
        let config = ExperimentConfig::load(root.join(format!("{kind}.toml"))).map_err(|e| e.to_string())?;
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            let a = dir.path().join(format!("{kind}.a"));
            let b = dir.path().join(format!("{kind}.b"));
            harness::run_and_emit(&config, format, Some(&a)).map_err(|e| e.to_string())?;
            // Second run on a different thread count.
            pool.install(|| harness::run_and_emit(&config, format, Some(&b))).map_err(|e| e.to_string())?;
            for (x, y) in [(a.clone(), b.clone()), (harness::config_echo_path(&a), harness::config_echo_path(&b))] {
                if std::fs::read(&x).map_err(|e| e.to_string())? != std::fs::read(&y).map_err(|e| e.to_string())? {
                    return Err(format!("{kind} ({format:?}) output differs between runs"));
                }
                compared += 1;
            }
        }
    }
    check(true, format!("{compared} file pairs byte-identical across 7 suites, 2 formats"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("closed-form fixture", closed_form_fixture),
        ("MSE bound suite", mse_bound_suite),
        ("gradient-norm scaling", gradient_scaling),
        ("mismatch exact identities", mismatch_identities),
        ("variance check", variance_check),
        ("gradient correctness", gradient_correctness),
        ("optimizer agreement", optimizer_agreement),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
