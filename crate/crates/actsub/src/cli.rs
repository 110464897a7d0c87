//! Command-line interface: `simulate`, `fit`, `benchmark`, `sweep`,
//! `schedule`.
//!
//! Options come from a config file plus `-o key=value` overrides (the
//! override wins); `--help` lists every accepted key. Exit codes: 0 ok,
//! 2 bad config/arguments, 3 runtime failure, 4 budget violation.

use crate::bench::{
    run_b_sweep, run_comparison, run_rate_scaling, write_details_csv, write_report_csv,
    ExperimentConfig, Method,
};
use crate::config::Config;
use crate::datagen::{generate, ModelKind, TruthSpec};
use crate::dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model_selection::FitLoss;
use crate::pipeline::{
    k_step_fit, theory_fit, theory_schedule, two_step_cv_fit, BGrid, FitReport, KStepConfig,
    LambdaRule, TheoryParams, TwoStepConfig,
};
use crate::solver::SolverConfig;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "actsub",
    about = "Active subsampling for individualized threshold estimation under a label budget",
    version,
    after_help = config_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn config_help() -> &'static str {
    use std::sync::OnceLock;
    static HELP: OnceLock<String> = OnceLock::new();
    HELP.get_or_init(Config::describe_keys)
}

#[derive(Args, Debug, Default)]
pub struct CommonOpts {
    /// Config file (flat key = value lines, dotted sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. -o pipeline.budget=2000.
    #[arg(short = 'o', long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Global seed; identical invocations produce identical outputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for replicated runs (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a simulated pool as CSV (`x,z1..zd,y`).
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// logistic | binary_response | conditional_mean
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a threshold estimate on a labeled dataset CSV.
    Fit {
        #[command(flatten)]
        common: CommonOpts,
        /// Dataset CSV with a `y` column (labels are read lazily).
        #[arg(long)]
        data: PathBuf,
        /// Label budget (overrides pipeline.budget).
        #[arg(long)]
        budget: Option<f64>,
        /// Iteration count (overrides pipeline.k).
        #[arg(long)]
        k: Option<usize>,
        /// cv | fixed | theory (overrides pipeline.mode).
        #[arg(long)]
        mode: Option<String>,
        /// Smoothness for theory mode (overrides theory.beta).
        #[arg(long)]
        beta: Option<f64>,
        /// Fit report JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Estimate CSV path (one coefficient per line).
        #[arg(long)]
        theta_out: Option<PathBuf>,
    },
    /// Replicated method comparison; writes the report CSV.
    Benchmark {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-replicate rows.
        #[arg(long)]
        details_out: Option<PathBuf>,
    },
    /// Two-step error as a function of the active-set width.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Width grid: `auto10` or a comma list (overrides bench.b_grid).
        #[arg(long)]
        b_grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        details_out: Option<PathBuf>,
    },
    /// Error scaling across label budgets, with log-log slopes.
    Scaling {
        #[command(flatten)]
        common: CommonOpts,
        /// Budget grid (overrides bench.n_grid).
        #[arg(long)]
        n_grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        details_out: Option<PathBuf>,
    },
    /// Print the theory-mode tuning schedule for a smoothness level.
    Schedule {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &CommonOpts) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    Ok(cfg)
}

fn init_workers(common: &CommonOpts) {
    if let Some(w) = common.workers {
        // a second build_global is harmless; the first pool wins
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global();
    }
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn solver_from_config(cfg: &Config) -> Result<SolverConfig> {
    let mut solver = SolverConfig::default();
    if let Some(v) = cfg.get_f64("solver.eta")? {
        solver.eta = v;
    }
    if let Some(v) = cfg.get_f64("solver.nu")? {
        solver.nu = v;
    }
    if let Some(v) = cfg.get_f64("solver.phi")? {
        solver.phi = Some(v);
    }
    if let Some(v) = cfg.get_usize("solver.stages")? {
        solver.stages = Some(v);
    }
    if let Some(v) = cfg.get_f64("solver.eps_tgt")? {
        solver.eps_tgt = v;
    }
    if let Some(v) = cfg.get_usize("solver.max_inner_iters")? {
        solver.max_inner_iters = v;
    }
    if let Some(v) = cfg.get_f64("solver.ball_radius")? {
        solver.ball_radius = Some(v);
    }
    solver.validate()?;
    Ok(solver)
}

fn kernel_from_config(cfg: &Config, budget: f64) -> Result<KernelSpec> {
    match cfg.get("kernel") {
        Some(name) => KernelSpec::from_name(name),
        None => Ok(KernelSpec::gaussian_for_budget(budget)),
    }
}

fn loss_from_config(cfg: &Config) -> Result<FitLoss> {
    match cfg.get("pipeline.loss") {
        None | Some("smoothed") => Ok(FitLoss::SmoothedRisk),
        Some("logistic") => Ok(FitLoss::Logistic),
        Some(other) => Err(Error::Config(format!(
            "pipeline.loss must be smoothed or logistic, got `{other}`"
        ))),
    }
}

fn parse_b_grid(text: &str) -> Result<BGrid> {
    if let Some(points) = text.strip_prefix("auto") {
        let points: usize = points
            .parse()
            .map_err(|_| Error::Config(format!("bad auto grid `{text}` (expected e.g. auto10)")))?;
        if points == 0 {
            return Err(Error::Config("auto grid needs at least one point".into()));
        }
        return Ok(BGrid::Auto { points });
    }
    let mut grid = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        grid.push(
            part.parse()
                .map_err(|_| Error::Config(format!("bad width `{part}` in grid")))?,
        );
    }
    if grid.is_empty() {
        return Err(Error::Config("width grid is empty".into()));
    }
    Ok(BGrid::Explicit(grid))
}

// ---------------------------------------------------------------------------
// Serializable fit report
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IterationJson {
    theta: Vec<f64>,
    labels_used: usize,
    p_hat: f64,
    sampling_prob: f64,
    rate_clamped: bool,
    lambda: f64,
    b: Option<f64>,
    omega: f64,
    converged: bool,
    support_size: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct FitReportJson {
    mode: String,
    budget: f64,
    seed: u64,
    w_plus: f64,
    w_minus: f64,
    total_labels: usize,
    width_selection_labels: usize,
    b_candidates: Vec<(f64, f64)>,
    theta_hat: Vec<f64>,
    iterations: Vec<IterationJson>,
}

impl FitReportJson {
    fn new(mode: &str, budget: f64, seed: u64, report: &FitReport) -> Self {
        FitReportJson {
            mode: mode.to_string(),
            budget,
            seed,
            w_plus: report.weights.w_plus,
            w_minus: report.weights.w_minus,
            total_labels: report.total_labels,
            width_selection_labels: report.width_selection_labels,
            b_candidates: report.b_candidates.clone(),
            theta_hat: report.theta_hat.to_vec(),
            iterations: report
                .iterations
                .iter()
                .map(|it| IterationJson {
                    theta: it.theta.to_vec(),
                    labels_used: it.labels_used,
                    p_hat: it.p_hat,
                    sampling_prob: it.sampling_prob,
                    rate_clamped: it.rate_clamped,
                    lambda: it.lambda,
                    b: it.b,
                    omega: it.omega,
                    converged: it.converged,
                    support_size: it.support_size,
                    wall_ms: it.wall_ms,
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

fn cmd_simulate(
    common: &CommonOpts,
    model: &str,
    n: usize,
    d: usize,
    s: usize,
    out: &Option<PathBuf>,
) -> Result<()> {
    let _ = load_config(common)?;
    if n == 0 {
        return Err(Error::Argument("`n` must be positive".into()));
    }
    if d == 0 {
        return Err(Error::Argument("`d` must be positive".into()));
    }
    if s == 0 || s > d {
        return Err(Error::Argument(format!("`s` must satisfy 1 <= s <= d, got {s}")));
    }
    let kind = ModelKind::from_name(model)?;
    let truth = TruthSpec::new(d, s, kind, common.seed)?;
    let pool = generate(n, &truth, common.seed.wrapping_add(1));
    let mut w = out_writer(out)?;
    dataset::write_pool_csv(&mut w, &pool)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    common: &CommonOpts,
    data: &PathBuf,
    budget_flag: Option<f64>,
    k_flag: Option<usize>,
    mode_flag: Option<String>,
    beta_flag: Option<f64>,
    out: &Option<PathBuf>,
    theta_out: &Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let ds = dataset::read_csv(data)?;
    let budget = budget_flag
        .or(cfg.get_f64("pipeline.budget")?)
        .ok_or_else(|| Error::Config("no budget (use --budget or pipeline.budget)".into()))?;
    if !(budget > 0.0) {
        return Err(Error::Argument("budget must be positive".into()));
    }
    if (ds.labeled_rows() as f64) < budget {
        return Err(Error::Budget(format!(
            "budget {budget} exceeds the {} labeled rows available",
            ds.labeled_rows()
        )));
    }
    let pool = ds.pool()?;
    let mut oracle = ds.oracle(budget);

    let mode = mode_flag
        .or_else(|| cfg.get("pipeline.mode").map(str::to_string))
        .unwrap_or_else(|| "cv".to_string());
    let k = k_flag.or(cfg.get_usize("pipeline.k")?).unwrap_or(2);
    let solver = solver_from_config(&cfg)?;
    let kernel = kernel_from_config(&cfg, budget)?;
    let loss = loss_from_config(&cfg)?;
    let folds = cfg.get_usize("pipeline.folds")?.unwrap_or(5);
    let delta_list = cfg.get_f64_list("pipeline.delta")?;
    let deltas_for = |count: usize| -> Result<Vec<f64>> {
        match &delta_list {
            None => Ok(vec![1.0; count]),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; count]),
            Some(v) if v.len() == count => Ok(v.clone()),
            Some(v) => Err(Error::Config(format!(
                "pipeline.delta has {} entries for {count} iterations",
                v.len()
            ))),
        }
    };
    let grid_len = cfg.get_usize("cv.lambda_grid_len")?.unwrap_or(20);
    let grid_span = cfg.get_f64("cv.lambda_grid_span")?.unwrap_or(1000.0);

    let report = match mode.as_str() {
        "cv" => {
            if k == 1 {
                let mut kcfg = KStepConfig::passive(budget);
                kcfg.delta = deltas_for(1)?;
                kcfg.kernel = kernel;
                kcfg.solver = solver;
                kcfg.folds = folds;
                kcfg.loss = loss;
                kcfg.lambda_grid_len = grid_len;
                kcfg.lambda_grid_span = grid_span;
                k_step_fit(&pool, &mut oracle, &kcfg, common.seed)?
            } else if k == 2 {
                let mut tcfg = TwoStepConfig::new(budget);
                if let Some(split) = cfg.get_f64_list("pipeline.split")? {
                    if split.len() != 3 {
                        return Err(Error::Config(
                            "cv mode expects 3 split fractions (initial, width CV, final)".into(),
                        ));
                    }
                    tcfg.split = [split[0], split[1], split[2]];
                }
                let d2 = deltas_for(2)?;
                tcfg.delta = [d2[0], d2[1]];
                if let Some(text) = cfg.get("pipeline.b_grid") {
                    tcfg.b_grid = parse_b_grid(text)?;
                }
                tcfg.kernel = kernel;
                tcfg.solver = solver;
                tcfg.folds = folds;
                tcfg.loss = loss;
                tcfg.lambda_grid_len = grid_len;
                tcfg.lambda_grid_span = grid_span;
                two_step_cv_fit(&pool, &mut oracle, &tcfg, common.seed)?
            } else {
                return Err(Error::Config(format!(
                    "cv mode supports k = 1 or 2, got {k}; use mode=fixed for larger k"
                )));
            }
        }
        "fixed" => {
            let b = cfg
                .get_f64_list("pipeline.b")?
                .ok_or_else(|| Error::Config("fixed mode requires pipeline.b".into()))?;
            let split = match cfg.get_f64_list("pipeline.split")? {
                Some(v) => v,
                None if k == 2 => vec![1.0 / 8.0, 7.0 / 8.0],
                None => vec![1.0 / k as f64; k],
            };
            let lambda = match cfg.get_f64_list("pipeline.lambda")? {
                Some(v) => LambdaRule::Fixed(v),
                None => LambdaRule::Cv,
            };
            let kcfg = KStepConfig {
                k,
                budget,
                split,
                delta: deltas_for(k)?,
                lambda,
                b,
                kernel,
                solver,
                folds,
                loss,
                lambda_grid_len: grid_len,
                lambda_grid_span: grid_span,
            };
            k_step_fit(&pool, &mut oracle, &kcfg, common.seed)?
        }
        "theory" => {
            let beta = beta_flag
                .or(cfg.get_f64("theory.beta")?)
                .ok_or_else(|| Error::Config("theory mode requires --beta or theory.beta".into()))?;
            let s = cfg
                .get_usize("theory.s")?
                .ok_or_else(|| Error::Config("theory mode requires theory.s".into()))?;
            let mut params = TheoryParams::new(beta, s, pool.dim(), pool.len(), budget);
            if let Some(c) = cfg.get_f64("theory.c1")? {
                params.c1 = c;
            }
            if let Some(c) = cfg.get_f64("theory.c2")? {
                params.c2 = c;
            }
            if let Some(c) = cfg.get_f64("theory.c3")? {
                params.c3 = c;
            }
            theory_fit(&pool, &mut oracle, &params, &solver, kernel, loss, common.seed)?
        }
        other => {
            return Err(Error::Config(format!(
                "pipeline.mode must be cv, fixed or theory, got `{other}`"
            )))
        }
    };

    let json = FitReportJson::new(&mode, budget, common.seed, &report);
    let mut w = out_writer(out)?;
    serde_json::to_writer_pretty(&mut w, &json)
        .map_err(|e| Error::Numerical(format!("report serialization failed: {e}")))?;
    writeln!(w)?;
    if let Some(path) = theta_out {
        let mut tw = BufWriter::new(File::create(path)?);
        writeln!(tw, "theta")?;
        for v in report.theta_hat.iter() {
            writeln!(tw, "{v}")?;
        }
    }
    Ok(())
}

fn experiment_from_config(cfg: &Config, seed: u64) -> Result<ExperimentConfig> {
    let model = ModelKind::from_name(cfg.get("bench.model").unwrap_or("conditional_mean"))?;
    let n = cfg.get_usize("bench.n")?.unwrap_or(20_000);
    let d = cfg.get_usize("bench.d")?.unwrap_or(200);
    let s = cfg.get_usize("bench.s")?.unwrap_or(10);
    let budget = cfg.get_f64("pipeline.budget")?.unwrap_or(2000.0);
    let mut out = ExperimentConfig::new(model, n, d, s, budget);
    out.seed = seed;
    out.reps = cfg.get_usize("bench.reps")?.unwrap_or(50);
    if let Some(rows) = cfg.get_usize("bench.eval_rows")? {
        out.eval_rows = rows;
    }
    if let Some(names) = cfg.get_str_list("bench.methods") {
        let mut methods = Vec::new();
        for name in names {
            methods.push(Method::from_name(&name)?);
        }
        out.methods = methods;
    }
    out.solver = solver_from_config(cfg)?;
    if let Some(folds) = cfg.get_usize("pipeline.folds")? {
        out.folds = folds;
    }
    if let Some(split) = cfg.get_f64_list("pipeline.split")? {
        match split.len() {
            3 => out.twostep_split = [split[0], split[1], split[2]],
            2 => out.sweep_split = [split[0], split[1]],
            other => {
                return Err(Error::Config(format!(
                    "pipeline.split needs 2 or 3 fractions here, got {other}"
                )))
            }
        }
    }
    if let Some(delta) = cfg.get_f64_list("pipeline.delta")? {
        match delta.len() {
            1 => out.delta = [delta[0], delta[0]],
            2 => out.delta = [delta[0], delta[1]],
            other => {
                return Err(Error::Config(format!(
                    "pipeline.delta needs 1 or 2 values here, got {other}"
                )))
            }
        }
    }
    Ok(out)
}

fn write_bench_outputs(
    report: &crate::bench::BenchmarkReport,
    out: &Option<PathBuf>,
    details_out: &Option<PathBuf>,
) -> Result<()> {
    let mut w = out_writer(out)?;
    write_report_csv(&mut w, report)?;
    if let Some(path) = details_out {
        let mut dw = BufWriter::new(File::create(path)?);
        write_details_csv(&mut dw, report)?;
    }
    for failure in &report.failures {
        eprintln!("warning: {failure}");
    }
    Ok(())
}

fn cmd_benchmark(
    common: &CommonOpts,
    out: &Option<PathBuf>,
    details_out: &Option<PathBuf>,
) -> Result<()> {
    init_workers(common);
    let cfg = load_config(common)?;
    let exp = experiment_from_config(&cfg, common.seed)?;
    let report = run_comparison(&exp)?;
    write_bench_outputs(&report, out, details_out)
}

fn cmd_sweep(
    common: &CommonOpts,
    b_grid: Option<String>,
    out: &Option<PathBuf>,
    details_out: &Option<PathBuf>,
) -> Result<()> {
    init_workers(common);
    let cfg = load_config(common)?;
    let exp = experiment_from_config(&cfg, common.seed)?;
    let grid_text = b_grid
        .or_else(|| cfg.get("bench.b_grid").map(str::to_string))
        .unwrap_or_else(|| "auto10".to_string());
    let grid = parse_b_grid(&grid_text)?;
    let report = run_b_sweep(&exp, &grid)?;
    write_bench_outputs(&report, out, details_out)
}

fn cmd_scaling(
    common: &CommonOpts,
    n_grid: Option<String>,
    out: &Option<PathBuf>,
    details_out: &Option<PathBuf>,
) -> Result<()> {
    init_workers(common);
    let cfg = load_config(common)?;
    let exp = experiment_from_config(&cfg, common.seed)?;
    let grid_text = n_grid
        .or_else(|| cfg.get("bench.n_grid").map(str::to_string))
        .unwrap_or_else(|| "500,1000,2000,4000".to_string());
    let mut budgets = Vec::new();
    for part in grid_text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        budgets.push(
            part.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad budget `{part}` in grid")))?,
        );
    }
    let report = run_rate_scaling(&exp, &budgets)?;
    write_bench_outputs(&report, out, details_out)
}

fn cmd_schedule(
    common: &CommonOpts,
    beta: f64,
    s: usize,
    d: usize,
    n: usize,
    budget: f64,
    out: &Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let mut params = TheoryParams::new(beta, s, d, n, budget);
    if let Some(c) = cfg.get_f64("theory.c1")? {
        params.c1 = c;
    }
    if let Some(c) = cfg.get_f64("theory.c2")? {
        params.c2 = c;
    }
    if let Some(c) = cfg.get_f64("theory.c3")? {
        params.c3 = c;
    }
    let schedule = theory_schedule(&params)?;
    let mut w = out_writer(out)?;
    writeln!(w, "k,N_k,delta_k,lambda_k,b_prev")?;
    for row in &schedule.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.iter,
            row.n_k,
            row.delta,
            row.lambda,
            row.b_prev.map(|b| b.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Dispatch a parsed invocation.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            model,
            n,
            d,
            s,
            out,
        } => cmd_simulate(&common, &model, n, d, s, &out),
        Command::Fit {
            common,
            data,
            budget,
            k,
            mode,
            beta,
            out,
            theta_out,
        } => cmd_fit(&common, &data, budget, k, mode, beta, &out, &theta_out),
        Command::Benchmark {
            common,
            out,
            details_out,
        } => cmd_benchmark(&common, &out, &details_out),
        Command::Sweep {
            common,
            b_grid,
            out,
            details_out,
        } => cmd_sweep(&common, b_grid, &out, &details_out),
        Command::Scaling {
            common,
            n_grid,
            out,
            details_out,
        } => cmd_scaling(&common, n_grid, &out, &details_out),
        Command::Schedule {
            common,
            beta,
            s,
            d,
            n,
            budget,
            out,
        } => cmd_schedule(&common, beta, s, d, n, budget, &out),
    }
}
