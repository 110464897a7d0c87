//! Replicated experiments: method comparisons, active-set-width sweeps,
//! and budget rate-scaling runs, all emitting CSV.
//!
//! Every replicate draws a fresh ground truth and pool, runs each
//! requested method against its own budget-metered oracle over the
//! shared pool, and scores parameter errors plus weighted prediction
//! error on a fresh evaluation pool. Replicates run in parallel;
//! aggregation is by replicate index, so reports are deterministic for
//! a fixed seed regardless of scheduling.

use crate::datagen::{generate, ModelKind, TruthSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model_selection::FitLoss;
use crate::pipeline::{
    k_step_fit, two_step_cv_fit, width_quantiles, BGrid, FitReport, KStepConfig, TwoStepConfig,
};
use crate::rng::{subseed, Stream};
use crate::sampling::UnlabeledPool;
use crate::solver::SolverConfig;
use ndarray::Array1;
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PassivePf,
    TwostepPf,
    PassiveLr,
    TwostepLr,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::PassivePf,
        Method::TwostepPf,
        Method::PassiveLr,
        Method::TwostepLr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::PassivePf => "passive_pf",
            Method::TwostepPf => "twostep_pf",
            Method::PassiveLr => "passive_lr",
            Method::TwostepLr => "twostep_lr",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Argument(format!("unknown method `{name}`")))
    }

    fn loss(&self) -> FitLoss {
        match self {
            Method::PassivePf | Method::TwostepPf => FitLoss::SmoothedRisk,
            Method::PassiveLr | Method::TwostepLr => FitLoss::Logistic,
        }
    }

    fn is_twostep(&self) -> bool {
        matches!(self, Method::TwostepPf | Method::TwostepLr)
    }
}

/// Scenario shared by all harness entry points.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub budget: f64,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    pub eval_rows: usize,
    pub solver: SolverConfig,
    pub folds: usize,
    /// Budget fractions for the CV two-step: (initial, width CV, final).
    pub twostep_split: [f64; 3],
    /// Budget fractions for fixed-width two-step sweep arms.
    pub sweep_split: [f64; 2],
    pub delta: [f64; 2],
}

impl ExperimentConfig {
    pub fn new(model: ModelKind, n: usize, d: usize, s: usize, budget: f64) -> Self {
        ExperimentConfig {
            model,
            n,
            d,
            s,
            budget,
            methods: vec![Method::TwostepPf, Method::PassivePf],
            reps: 50,
            seed: 0,
            eval_rows: 100_000,
            solver: SolverConfig::default(),
            folds: 5,
            twostep_split: [1.0 / 8.0, 1.0 / 8.0, 3.0 / 4.0],
            sweep_split: [1.0 / 8.0, 7.0 / 8.0],
            delta: [1.0, 1.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Argument("need at least one replicate".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Argument("no methods requested".into()));
        }
        if self.eval_rows == 0 {
            return Err(Error::Argument("evaluation pool must be non-empty".into()));
        }
        Ok(())
    }
}

/// One aggregated report row.
#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub model: String,
    pub method: String,
    pub metric: String,
    pub b: Option<f64>,
    pub budget: f64,
    pub mean: f64,
    pub sd: f64,
    pub reps: usize,
}

/// Raw per-replicate outcome, kept so aggregates can be regenerated.
#[derive(Debug, Clone)]
pub struct RepDetail {
    pub rep: usize,
    pub method: Method,
    pub b: Option<f64>,
    pub budget: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub pred_err: f64,
    pub labels: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub details: Vec<RepDetail>,
    pub failures: Vec<String>,
    /// Set when any row aggregates a single replicate (sd is then 0).
    pub degenerate_sd: bool,
    /// Least-squares slopes of `log mean-l2 vs log N`, rate runs only.
    pub slopes: Vec<(String, f64)>,
}

pub const METRICS: [&str; 4] = ["l1", "l2", "linf", "pred_err"];

fn norm_errors(theta_hat: &Array1<f64>, theta_star: &Array1<f64>) -> (f64, f64, f64) {
    let diff = theta_hat - theta_star;
    let l1 = diff.iter().map(|v| v.abs()).sum();
    let l2 = diff.dot(&diff).sqrt();
    let linf = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (l1, l2, linf)
}

/// Weighted misclassification of the threshold rule `sign(x - theta' z)`
/// against revealed labels, normalized so 0.5 is chance under balance.
pub fn prediction_error(theta: &Array1<f64>, eval_pool: &UnlabeledPool) -> Result<f64> {
    let labels = eval_pool
        .labels_for_evaluation()
        .ok_or_else(|| Error::Argument("evaluation pool carries no labels".into()))?;
    if eval_pool.is_empty() {
        return Err(Error::Argument("evaluation pool is empty".into()));
    }
    let positives = labels.iter().filter(|&&y| y > 0).count() as f64;
    let p_hat = (positives / labels.len() as f64).clamp(0.05, 0.95);
    let (w_plus, w_minus) = (1.0 / p_hat, 1.0 / (1.0 - p_hat));
    let margins = {
        let mut m = eval_pool.z.dot(theta);
        for (mi, xi) in m.iter_mut().zip(&eval_pool.x) {
            *mi = xi - *mi;
        }
        m
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &m) in margins.iter().enumerate() {
        let w = if labels[i] > 0 { w_plus } else { w_minus };
        let pred: i8 = if m >= 0.0 { 1 } else { -1 };
        den += w;
        if pred != labels[i] {
            num += w;
        }
    }
    Ok(num / den)
}

fn derive_seed(rep_seed: u64, tag: u64) -> u64 {
    subseed(rep_seed, Stream::Replicate, tag, 0)
}

struct RepWorld {
    truth: TruthSpec,
    pool: UnlabeledPool,
    eval: UnlabeledPool,
    fit_seed: u64,
}

fn build_world(cfg: &ExperimentConfig, rep: usize) -> Result<RepWorld> {
    let rep_seed = subseed(cfg.seed, Stream::Replicate, rep as u64, 0);
    let truth = TruthSpec::new(cfg.d, cfg.s, cfg.model, derive_seed(rep_seed, 1))?;
    let pool = generate(cfg.n, &truth, derive_seed(rep_seed, 2));
    let eval = generate(cfg.eval_rows, &truth, derive_seed(rep_seed, 3));
    Ok(RepWorld {
        truth,
        pool,
        eval,
        fit_seed: derive_seed(rep_seed, 4),
    })
}

/// Run one method arm against a fresh oracle; `fixed_b` switches the
/// two-step methods from CV width selection to a pinned width.
fn run_method(
    cfg: &ExperimentConfig,
    world: &RepWorld,
    method: Method,
    budget: f64,
    fixed_b: Option<f64>,
) -> Result<FitReport> {
    let mut oracle = world.pool.oracle(budget)?;
    let kernel = KernelSpec::gaussian_for_budget(budget);
    if method.is_twostep() {
        match fixed_b {
            Some(b) => {
                let mut kcfg = KStepConfig::two_step_fixed_b(budget, b);
                kcfg.split = cfg.sweep_split.to_vec();
                kcfg.delta = cfg.delta.to_vec();
                kcfg.kernel = kernel;
                kcfg.solver = cfg.solver.clone();
                kcfg.folds = cfg.folds;
                kcfg.loss = method.loss();
                k_step_fit(&world.pool, &mut oracle, &kcfg, world.fit_seed)
            }
            None => {
                let mut tcfg = TwoStepConfig::new(budget);
                tcfg.split = cfg.twostep_split;
                tcfg.delta = cfg.delta;
                tcfg.kernel = kernel;
                tcfg.solver = cfg.solver.clone();
                tcfg.folds = cfg.folds;
                tcfg.loss = method.loss();
                two_step_cv_fit(&world.pool, &mut oracle, &tcfg, world.fit_seed)
            }
        }
    } else {
        let mut kcfg = KStepConfig::passive(budget);
        kcfg.delta = vec![cfg.delta[0]];
        kcfg.kernel = kernel;
        kcfg.solver = cfg.solver.clone();
        kcfg.folds = cfg.folds;
        kcfg.loss = method.loss();
        k_step_fit(&world.pool, &mut oracle, &kcfg, world.fit_seed)
    }
}

fn detail_from_fit(
    rep: usize,
    method: Method,
    b: Option<f64>,
    budget: f64,
    fit: &FitReport,
    world: &RepWorld,
    wall_ms: f64,
) -> Result<RepDetail> {
    let (l1, l2, linf) = norm_errors(&fit.theta_hat, &world.truth.theta_star);
    let pred_err = prediction_error(&fit.theta_hat, &world.eval)?;
    Ok(RepDetail {
        rep,
        method,
        b,
        budget,
        l1,
        l2,
        linf,
        pred_err,
        labels: fit.total_labels,
        wall_ms,
    })
}

/// Aggregate mean/sd rows from per-replicate details, grouped by
/// `(method, b, budget)` in first-seen order.
pub fn aggregate(model: &ModelKind, details: &[RepDetail]) -> (Vec<BenchmarkRow>, bool) {
    let mut groups: Vec<((Method, Option<u64>, u64), Vec<&RepDetail>)> = Vec::new();
    for det in details {
        let key = (det.method, det.b.map(f64::to_bits), det.budget.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(det),
            None => groups.push((key, vec![det])),
        }
    }
    let mut rows = Vec::new();
    let mut degenerate = false;
    for ((method, b_bits, budget_bits), dets) in groups {
        let reps = dets.len();
        if reps == 1 {
            degenerate = true;
        }
        for metric in METRICS {
            let vals: Vec<f64> = dets
                .iter()
                .map(|d| match metric {
                    "l1" => d.l1,
                    "l2" => d.l2,
                    "linf" => d.linf,
                    _ => d.pred_err,
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let sd = if reps > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            rows.push(BenchmarkRow {
                model: model.name().to_string(),
                method: method.name().to_string(),
                metric: metric.to_string(),
                b: b_bits.map(f64::from_bits),
                budget: f64::from_bits(budget_bits),
                mean,
                sd,
                reps,
            });
        }
    }
    (rows, degenerate)
}

/// Table-style method comparison at one budget.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let outcomes: Vec<(Vec<RepDetail>, Vec<String>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut details = Vec::new();
            let mut failures = Vec::new();
            match build_world(cfg, rep) {
                Ok(world) => {
                    for &method in &cfg.methods {
                        let start = Instant::now();
                        match run_method(cfg, &world, method, cfg.budget, None) {
                            Ok(fit) => {
                                let wall = start.elapsed().as_secs_f64() * 1e3;
                                match detail_from_fit(
                                    rep, method, None, cfg.budget, &fit, &world, wall,
                                ) {
                                    Ok(d) => details.push(d),
                                    Err(e) => failures
                                        .push(format!("rep {rep} {}: {e}", method.name())),
                                }
                            }
                            Err(e) => {
                                failures.push(format!("rep {rep} {}: {e}", method.name()))
                            }
                        }
                    }
                }
                Err(e) => failures.push(format!("rep {rep}: {e}")),
            }
            (details, failures)
        })
        .collect();

    let mut details = Vec::new();
    let mut failures = Vec::new();
    for (d, f) in outcomes {
        details.extend(d);
        failures.extend(f);
    }
    let (rows, degenerate_sd) = aggregate(&cfg.model, &details);
    Ok(BenchmarkReport {
        rows,
        details,
        failures,
        degenerate_sd,
        slopes: Vec::new(),
    })
}

/// Resolve a sweep grid: explicit widths, or quantile widths from a
/// pilot first-stage fit on a dedicated pilot pool.
pub fn resolve_sweep_grid(cfg: &ExperimentConfig, grid: &BGrid) -> Result<Vec<f64>> {
    match grid {
        BGrid::Explicit(v) => {
            if v.is_empty() {
                return Err(Error::Argument("sweep grid is empty".into()));
            }
            Ok(v.clone())
        }
        BGrid::Auto { points } => {
            let pilot_seed = subseed(cfg.seed, Stream::Replicate, u64::MAX, 1);
            let truth = TruthSpec::new(cfg.d, cfg.s, cfg.model, derive_seed(pilot_seed, 1))?;
            let pool = generate(cfg.n, &truth, derive_seed(pilot_seed, 2));
            let stage1_budget = cfg.budget * cfg.sweep_split[0];
            let mut oracle = pool.oracle(stage1_budget)?;
            let mut kcfg = KStepConfig::passive(stage1_budget);
            kcfg.delta = vec![cfg.delta[0]];
            kcfg.solver = cfg.solver.clone();
            kcfg.folds = cfg.folds;
            let fit = k_step_fit(&pool, &mut oracle, &kcfg, derive_seed(pilot_seed, 3))?;
            let rows: Vec<usize> = (0..pool.len()).collect();
            width_quantiles(&pool, &rows, &fit.theta_hat, *points)
        }
    }
}

/// Fixed-width two-step runs across a width grid, with the passive
/// baselines repeated as constant rows at every width.
pub fn run_b_sweep(cfg: &ExperimentConfig, grid: &BGrid) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let widths = resolve_sweep_grid(cfg, grid)?;
    let passive: Vec<Method> = cfg.methods.iter().copied().filter(|m| !m.is_twostep()).collect();
    let twostep: Vec<Method> = cfg.methods.iter().copied().filter(|m| m.is_twostep()).collect();

    let outcomes: Vec<(Vec<RepDetail>, Vec<String>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut details = Vec::new();
            let mut failures = Vec::new();
            match build_world(cfg, rep) {
                Ok(world) => {
                    // passive arms once per replicate, then replicated per width
                    for &method in &passive {
                        let start = Instant::now();
                        match run_method(cfg, &world, method, cfg.budget, None) {
                            Ok(fit) => {
                                let wall = start.elapsed().as_secs_f64() * 1e3;
                                match detail_from_fit(
                                    rep, method, None, cfg.budget, &fit, &world, wall,
                                ) {
                                    Ok(base) => {
                                        for &b in &widths {
                                            let mut d = base.clone();
                                            d.b = Some(b);
                                            details.push(d);
                                        }
                                    }
                                    Err(e) => failures
                                        .push(format!("rep {rep} {}: {e}", method.name())),
                                }
                            }
                            Err(e) => {
                                failures.push(format!("rep {rep} {}: {e}", method.name()))
                            }
                        }
                    }
                    for &method in &twostep {
                        for &b in &widths {
                            let start = Instant::now();
                            match run_method(cfg, &world, method, cfg.budget, Some(b)) {
                                Ok(fit) => {
                                    let wall = start.elapsed().as_secs_f64() * 1e3;
                                    match detail_from_fit(
                                        rep,
                                        method,
                                        Some(b),
                                        cfg.budget,
                                        &fit,
                                        &world,
                                        wall,
                                    ) {
                                        Ok(d) => details.push(d),
                                        Err(e) => failures.push(format!(
                                            "rep {rep} {} b={b}: {e}",
                                            method.name()
                                        )),
                                    }
                                }
                                Err(e) => failures
                                    .push(format!("rep {rep} {} b={b}: {e}", method.name())),
                            }
                        }
                    }
                }
                Err(e) => failures.push(format!("rep {rep}: {e}")),
            }
            (details, failures)
        })
        .collect();

    let mut details = Vec::new();
    let mut failures = Vec::new();
    for (d, f) in outcomes {
        details.extend(d);
        failures.extend(f);
    }
    let (rows, degenerate_sd) = aggregate(&cfg.model, &details);
    Ok(BenchmarkReport {
        rows,
        details,
        failures,
        degenerate_sd,
        slopes: Vec::new(),
    })
}

/// Comparison across a budget grid plus log-log slope fits of the mean
/// l2 error against the budget.
pub fn run_rate_scaling(cfg: &ExperimentConfig, budgets: &[f64]) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if budgets.len() < 3 {
        return Err(Error::Argument("rate scaling needs at least 3 budgets".into()));
    }
    let mut details = Vec::new();
    let mut failures = Vec::new();
    for &budget in budgets {
        let outcomes: Vec<(Vec<RepDetail>, Vec<String>)> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut details = Vec::new();
                let mut failures = Vec::new();
                // budget folded into the world seed so pools differ per B
                let mut sub = cfg.clone();
                sub.seed = subseed(cfg.seed, Stream::Replicate, budget.to_bits(), 7);
                match build_world(&sub, rep) {
                    Ok(world) => {
                        for &method in &cfg.methods {
                            let start = Instant::now();
                            match run_method(&sub, &world, method, budget, None) {
                                Ok(fit) => {
                                    let wall = start.elapsed().as_secs_f64() * 1e3;
                                    match detail_from_fit(
                                        rep, method, None, budget, &fit, &world, wall,
                                    ) {
                                        Ok(d) => details.push(d),
                                        Err(e) => failures.push(format!(
                                            "rep {rep} {} N={budget}: {e}",
                                            method.name()
                                        )),
                                    }
                                }
                                Err(e) => failures.push(format!(
                                    "rep {rep} {} N={budget}: {e}",
                                    method.name()
                                )),
                            }
                        }
                    }
                    Err(e) => failures.push(format!("rep {rep} N={budget}: {e}")),
                }
                (details, failures)
            })
            .collect();
        for (d, f) in outcomes {
            details.extend(d);
            failures.extend(f);
        }
    }

    let (rows, degenerate_sd) = aggregate(&cfg.model, &details);
    let mut slopes = Vec::new();
    for &method in &cfg.methods {
        let points: Vec<(f64, f64)> = budgets
            .iter()
            .filter_map(|&budget| {
                rows.iter()
                    .find(|r| {
                        r.method == method.name() && r.metric == "l2" && r.budget == budget
                    })
                    .map(|r| (budget.ln(), r.mean.ln()))
            })
            .collect();
        if points.len() >= 2 {
            slopes.push((method.name().to_string(), least_squares_slope(&points)));
        }
    }
    Ok(BenchmarkReport {
        rows,
        details,
        failures,
        degenerate_sd,
        slopes,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn fmt_opt(b: Option<f64>) -> String {
    b.map(|v| format!("{v}")).unwrap_or_default()
}

/// `model,method,metric,b,N,mean,sd,reps` rows.
pub fn write_report_csv<W: Write>(out: &mut W, report: &BenchmarkReport) -> Result<()> {
    writeln!(out, "model,method,metric,b,N,mean,sd,reps")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            r.method,
            r.metric,
            fmt_opt(r.b),
            r.budget,
            r.mean,
            r.sd,
            r.reps
        )?;
    }
    for (method, slope) in &report.slopes {
        writeln!(out, "{},{},l2_slope,,,{},0,0", report_model(report), method, slope)?;
    }
    Ok(())
}

fn report_model(report: &BenchmarkReport) -> &str {
    report.rows.first().map(|r| r.model.as_str()).unwrap_or("")
}

/// Per-replicate detail rows, behind a flag in the CLI.
pub fn write_details_csv<W: Write>(out: &mut W, report: &BenchmarkReport) -> Result<()> {
    writeln!(out, "rep,method,b,N,l1,l2,linf,pred_err,labels,wall_ms")?;
    for d in &report.details {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            d.rep,
            d.method.name(),
            fmt_opt(d.b),
            d.budget,
            d.l1,
            d.l2,
            d.linf,
            d.pred_err,
            d.labels,
            d.wall_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ModelKind::ConditionalMean {
                mu: 2.0,
                eps_sd: 0.1,
            },
            1500,
            10,
            3,
            300.0,
        );
        cfg.reps = 2;
        cfg.eval_rows = 2000;
        cfg.seed = 42;
        cfg
    }

    #[test]
    fn prediction_error_extremes() {
        let truth = TruthSpec::new(
            10,
            3,
            ModelKind::ConditionalMean {
                mu: 2.0,
                eps_sd: 0.1,
            },
            1,
        )
        .unwrap();
        let eval = generate(20_000, &truth, 2);
        // truth separates almost perfectly
        let e = prediction_error(&truth.theta_star, &eval).unwrap();
        assert!(e < 1e-3, "error at truth = {e}");
        // a signal-free direction is chance once it swamps the mu*y offset
        let noise = crate::datagen::gen_theta(10, 10, 99).unwrap();
        let e = prediction_error(&(noise * 100.0), &eval).unwrap();
        assert!((e - 0.5).abs() < 0.03, "error = {e}");
    }

    #[test]
    fn comparison_report_shape_and_determinism() {
        let cfg = tiny_cfg();
        let report = run_comparison(&cfg).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        // 2 methods x 4 metrics
        assert_eq!(report.rows.len(), 8);
        for row in &report.rows {
            assert_eq!(row.reps, 2);
            assert!(row.sd >= 0.0);
            assert_eq!(row.model, "conditional_mean");
        }
        let report2 = run_comparison(&cfg).unwrap();
        for (a, b) in report.rows.iter().zip(&report2.rows) {
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.sd, b.sd);
        }
        // regenerating aggregates from stored details reproduces rows
        let (rows, _) = aggregate(&cfg.model, &report.details);
        for (a, b) in report.rows.iter().zip(&rows) {
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.sd, b.sd);
            assert_eq!(a.reps, b.reps);
        }
    }

    #[test]
    fn single_rep_flags_degenerate_sd() {
        let mut cfg = tiny_cfg();
        cfg.reps = 1;
        cfg.methods = vec![Method::PassivePf];
        let report = run_comparison(&cfg).unwrap();
        assert!(report.degenerate_sd);
        assert!(report.rows.iter().all(|r| r.sd == 0.0));
    }

    #[test]
    fn sweep_passive_rows_constant_across_widths() {
        let mut cfg = tiny_cfg();
        cfg.methods = vec![Method::TwostepPf, Method::PassivePf];
        let grid = BGrid::Explicit(vec![1.6, 3.0]);
        let report = run_b_sweep(&cfg, &grid).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        let passive_l2: Vec<&BenchmarkRow> = report
            .rows
            .iter()
            .filter(|r| r.method == "passive_pf" && r.metric == "l2")
            .collect();
        assert_eq!(passive_l2.len(), 2);
        assert_eq!(passive_l2[0].mean, passive_l2[1].mean);
        let twostep_l2: Vec<&BenchmarkRow> = report
            .rows
            .iter()
            .filter(|r| r.method == "twostep_pf" && r.metric == "l2")
            .collect();
        assert_eq!(twostep_l2.len(), 2);
        assert_ne!(twostep_l2[0].mean, twostep_l2[1].mean);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()).unwrap(), m);
        }
        assert!(Method::from_name("gradient_boosting").is_err());
    }

    #[test]
    fn csv_report_is_well_formed() {
        let mut cfg = tiny_cfg();
        cfg.methods = vec![Method::PassivePf];
        let report = run_comparison(&cfg).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "model,method,metric,b,N,mean,sd,reps");
        for line in lines {
            assert_eq!(line.split(',').count(), 8, "{line}");
        }
        let mut buf = Vec::new();
        write_details_csv(&mut buf, &report).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().count() > 1);
    }
}
