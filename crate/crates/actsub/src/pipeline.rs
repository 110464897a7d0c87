//! Orchestration of the K-step active subsampling loop, the
//! data-driven two-step variant with cross-validated penalty and
//! active-set width, and the theory-mode tuning schedules.
//!
//! A run always splits the pool into disjoint batches up front: a
//! covariate-only slice `D_0` for inclusion-probability estimation and
//! width quantiles, plus one batch per iteration. Iteration 1 samples
//! uniformly; iteration `k >= 2` samples the active set built from the
//! previous iterate. Class weights are estimated from the first labeled
//! batch and frozen for the rest of the run. With `k = 1` the loop
//! degenerates to passive uniform subsampling (no `D_0` is carved out),
//! which is exactly the passive baseline.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model_selection::{cv_b, cv_lambda, fit_target, lambda_grid, CvResult, FitLoss};
use crate::risk::{class_weights_from, ClassWeights, LabeledBatch};
use crate::sampling::{
    draw_and_label, estimate_inclusion_prob, sampling_rate, split_equal, split_fractions,
    ActiveSetSpec, LabelOracle, UnlabeledPool,
};
use crate::solver::SolverConfig;
use ndarray::Array1;
use std::time::Instant;

/// Smallest per-iteration batch the splitter will accept.
pub const MIN_BATCH_ROWS: usize = 50;

#[derive(Debug, Clone)]
pub enum LambdaRule {
    /// One target penalty per iteration.
    Fixed(Vec<f64>),
    /// Select per iteration by M-fold CV with the one-SE rule.
    Cv,
}

/// Configuration for the fixed-width K-step loop.
#[derive(Debug, Clone)]
pub struct KStepConfig {
    pub k: usize,
    pub budget: f64,
    /// Budget fractions per iteration, summing to 1.
    pub split: Vec<f64>,
    pub delta: Vec<f64>,
    pub lambda: LambdaRule,
    /// Active-set half-widths for iterations `2..=k`.
    pub b: Vec<f64>,
    pub kernel: KernelSpec,
    pub solver: SolverConfig,
    pub folds: usize,
    pub loss: FitLoss,
    pub lambda_grid_len: usize,
    pub lambda_grid_span: f64,
}

impl KStepConfig {
    pub fn passive(budget: f64) -> Self {
        KStepConfig {
            k: 1,
            budget,
            split: vec![1.0],
            delta: vec![1.0],
            lambda: LambdaRule::Cv,
            b: Vec::new(),
            kernel: KernelSpec::gaussian_for_budget(budget),
            solver: SolverConfig::default(),
            folds: 5,
            loss: FitLoss::SmoothedRisk,
            lambda_grid_len: 20,
            lambda_grid_span: 1000.0,
        }
    }

    pub fn two_step_fixed_b(budget: f64, b: f64) -> Self {
        KStepConfig {
            k: 2,
            budget,
            split: vec![1.0 / 8.0, 7.0 / 8.0],
            delta: vec![1.0, 1.0],
            lambda: LambdaRule::Cv,
            b: vec![b],
            kernel: KernelSpec::gaussian_for_budget(budget),
            solver: SolverConfig::default(),
            folds: 5,
            loss: FitLoss::SmoothedRisk,
            lambda_grid_len: 20,
            lambda_grid_span: 1000.0,
        }
    }

    fn validate(&self, pool_rows: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if !(self.budget > 0.0) {
            return Err(Error::Argument("budget must be positive".into()));
        }
        check_fractions(&self.split, self.k)?;
        if self.delta.len() != self.k {
            return Err(Error::Argument(format!(
                "need {} bandwidths, got {}",
                self.k,
                self.delta.len()
            )));
        }
        if self.delta.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Argument("bandwidths must be positive".into()));
        }
        if self.b.len() + 1 != self.k {
            return Err(Error::Argument(format!(
                "need {} active-set widths for k = {}, got {}",
                self.k - 1,
                self.k,
                self.b.len()
            )));
        }
        if let LambdaRule::Fixed(l) = &self.lambda {
            if l.len() != self.k {
                return Err(Error::Argument(format!(
                    "need {} penalties, got {}",
                    self.k,
                    l.len()
                )));
            }
        }
        if pool_rows < self.k * MIN_BATCH_ROWS {
            return Err(Error::Argument(format!(
                "pool of {pool_rows} rows is too small for k = {} (need {})",
                self.k,
                self.k * MIN_BATCH_ROWS
            )));
        }
        self.solver.validate()
    }
}

fn check_fractions(fracs: &[f64], expect_len: usize) -> Result<()> {
    if fracs.len() != expect_len {
        return Err(Error::Argument(format!(
            "need {expect_len} split fractions, got {}",
            fracs.len()
        )));
    }
    if fracs.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::Argument("split fractions must be positive".into()));
    }
    let sum: f64 = fracs.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!("split fractions sum to {sum}, not 1")));
    }
    Ok(())
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub theta: Array1<f64>,
    pub labels_used: usize,
    pub p_hat: f64,
    pub sampling_prob: f64,
    pub rate_clamped: bool,
    pub lambda: f64,
    pub b: Option<f64>,
    pub omega: f64,
    pub converged: bool,
    pub support_size: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: Vec<IterationReport>,
    pub theta_hat: Array1<f64>,
    pub weights: ClassWeights,
    pub total_labels: usize,
    /// Labels spent on width selection (two-step CV mode only).
    pub width_selection_labels: usize,
    /// `(b, min CV score)` per candidate (two-step CV mode only).
    pub b_candidates: Vec<(f64, f64)>,
}

/// Annotate iteration-scoped failures.
fn at_iteration(k: usize, e: Error) -> Error {
    match e {
        Error::Budget(m) => Error::Budget(format!("iteration {k}: {m}")),
        Error::SamplingDegenerate(m) => Error::SamplingDegenerate(format!("iteration {k}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("iteration {k}: {m}")),
        other => other,
    }
}

struct FitContext<'a> {
    kernel: &'a KernelSpec,
    solver: &'a SolverConfig,
    folds: usize,
    loss: FitLoss,
    lambda_grid_len: usize,
    lambda_grid_span: f64,
    seed: u64,
}

impl FitContext<'_> {
    /// CV when requested (folds shrink on tiny batches), then a full
    /// path fit at the chosen target penalty.
    fn select_and_fit(
        &self,
        batch: &LabeledBatch,
        delta: f64,
        weights: &ClassWeights,
        fixed_lambda: Option<f64>,
        warm: Option<&Array1<f64>>,
        cv_seed: u64,
    ) -> Result<(f64, Option<CvResult>, crate::solver::PathResult)> {
        let lambda_tgt = match fixed_lambda {
            Some(l) => (l, None),
            None => {
                let grid = lambda_grid(
                    batch,
                    delta,
                    self.kernel,
                    weights,
                    self.loss,
                    self.lambda_grid_len,
                    self.lambda_grid_span,
                )?;
                let folds = effective_folds(batch.len(), self.folds)?;
                let solver = self
                    .solver
                    .clone()
                    .with_lambda_tgt(*grid.last().expect("non-empty grid"));
                let cv = cv_lambda(
                    batch,
                    delta,
                    self.kernel,
                    weights,
                    &grid,
                    folds,
                    &solver,
                    self.loss,
                    cv_seed,
                )?;
                (cv.lambda_hat, Some(cv))
            }
        };
        let solver = self.solver.clone().with_lambda_tgt(lambda_tgt.0);
        let fit = fit_target(batch, delta, self.kernel, weights, self.loss, &solver, warm)?;
        Ok((lambda_tgt.0, lambda_tgt.1, fit))
    }
}

fn effective_folds(records: usize, requested: usize) -> Result<usize> {
    if records < 4 {
        return Err(Error::Argument(format!(
            "{records} labeled records are too few to cross-validate"
        )));
    }
    Ok(requested.min(records / 2).max(2))
}

/// K-step active subsampling with fixed active-set widths.
pub fn k_step_fit(
    pool: &UnlabeledPool,
    oracle: &mut LabelOracle,
    cfg: &KStepConfig,
    seed: u64,
) -> Result<FitReport> {
    cfg.validate(pool.len())?;
    let n = pool.len();
    // k = 1 is the passive baseline: no active set, no estimation slice
    let (d0, batches): (Vec<usize>, Vec<Vec<usize>>) = if cfg.k == 1 {
        (Vec::new(), vec![(0..n).collect()])
    } else {
        let mut all = split_equal(n, cfg.k + 1, seed);
        let d0 = all.remove(0);
        (d0, all)
    };

    let ctx = FitContext {
        kernel: &cfg.kernel,
        solver: &cfg.solver,
        folds: cfg.folds,
        loss: cfg.loss,
        lambda_grid_len: cfg.lambda_grid_len,
        lambda_grid_span: cfg.lambda_grid_span,
        seed,
    };

    let mut weights: Option<ClassWeights> = None;
    let mut iterations: Vec<IterationReport> = Vec::with_capacity(cfg.k);
    let mut theta_prev: Option<Array1<f64>> = None;

    for k in 1..=cfg.k {
        let start = Instant::now();
        let rows = &batches[k - 1];
        let n_k = cfg.budget * cfg.split[k - 1];
        let (spec, p_hat) = if k == 1 {
            (None, 1.0)
        } else {
            let theta_ref = theta_prev.clone().expect("previous iterate exists");
            let spec = ActiveSetSpec::new(theta_ref, cfg.b[k - 2]).map_err(|e| at_iteration(k, e))?;
            let p_hat = estimate_inclusion_prob(pool, &d0, &spec).map_err(|e| at_iteration(k, e))?;
            (Some(spec), p_hat)
        };
        let (c, clamped) =
            sampling_rate(n_k, rows.len(), p_hat).map_err(|e| at_iteration(k, e))?;
        let batch = draw_and_label(pool, rows, spec.as_ref(), c, oracle, seed, k as u64)
            .map_err(|e| at_iteration(k, e))?;
        if batch.is_empty() {
            return Err(at_iteration(
                k,
                Error::SamplingDegenerate("no rows were selected".into()),
            ));
        }
        let w = match weights {
            Some(w) => w,
            None => {
                let w = class_weights_from(&batch).map_err(|e| at_iteration(k, e))?;
                weights = Some(w);
                w
            }
        };
        let fixed_lambda = match &cfg.lambda {
            LambdaRule::Fixed(l) => Some(l[k - 1]),
            LambdaRule::Cv => None,
        };
        let (lambda, _cv, fit) = ctx
            .select_and_fit(
                &batch,
                cfg.delta[k - 1],
                &w,
                fixed_lambda,
                theta_prev.as_ref(),
                ctx.seed ^ (k as u64).wrapping_mul(0x9E37),
            )
            .map_err(|e| at_iteration(k, e))?;
        let last = fit.per_stage.last().expect("at least one stage");
        iterations.push(IterationReport {
            theta: fit.theta_hat.clone(),
            labels_used: batch.len(),
            p_hat,
            sampling_prob: c,
            rate_clamped: clamped,
            lambda,
            b: spec.map(|s| s.b),
            omega: last.omega,
            converged: fit.converged,
            support_size: last.support_size,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        theta_prev = Some(fit.theta_hat);
    }

    let theta_hat = theta_prev.expect("k >= 1");
    let total_labels = iterations.iter().map(|i| i.labels_used).sum();
    Ok(FitReport {
        iterations,
        theta_hat,
        weights: weights.expect("first iteration ran"),
        total_labels,
        width_selection_labels: 0,
        b_candidates: Vec::new(),
    })
}

/// Width-grid rule for the two-step CV pipeline.
#[derive(Debug, Clone)]
pub enum BGrid {
    /// Empirical quantiles of the standardized residual over `D_0` at
    /// levels `1/points, 2/points, ..., 1`.
    Auto { points: usize },
    Explicit(Vec<f64>),
}

/// Configuration for the data-driven two-step pipeline.
#[derive(Debug, Clone)]
pub struct TwoStepConfig {
    pub budget: f64,
    /// Budget fractions `(initial fit, width selection, final fit)`.
    pub split: [f64; 3],
    pub delta: [f64; 2],
    pub b_grid: BGrid,
    pub kernel: KernelSpec,
    pub solver: SolverConfig,
    pub folds: usize,
    pub loss: FitLoss,
    pub lambda_grid_len: usize,
    pub lambda_grid_span: f64,
}

impl TwoStepConfig {
    pub fn new(budget: f64) -> Self {
        TwoStepConfig {
            budget,
            split: [1.0 / 8.0, 1.0 / 8.0, 3.0 / 4.0],
            delta: [1.0, 1.0],
            b_grid: BGrid::Auto { points: 10 },
            kernel: KernelSpec::gaussian_for_budget(budget),
            solver: SolverConfig::default(),
            folds: 5,
            loss: FitLoss::SmoothedRisk,
            lambda_grid_len: 20,
            lambda_grid_span: 1000.0,
        }
    }

    fn validate(&self, pool_rows: usize) -> Result<()> {
        if !(self.budget > 0.0) {
            return Err(Error::Argument("budget must be positive".into()));
        }
        check_fractions(&self.split, 3)?;
        if self.delta.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Argument("bandwidths must be positive".into()));
        }
        match &self.b_grid {
            BGrid::Auto { points } if *points == 0 => {
                return Err(Error::Argument("width grid needs at least one point".into()))
            }
            BGrid::Explicit(v) if v.is_empty() => {
                return Err(Error::Argument("width grid needs at least one point".into()))
            }
            BGrid::Explicit(v) if v.iter().any(|&b| !(b > 0.0)) => {
                return Err(Error::Argument("width candidates must be positive".into()))
            }
            _ => {}
        }
        if pool_rows < 4 * MIN_BATCH_ROWS {
            return Err(Error::Argument(format!(
                "pool of {pool_rows} rows is too small for the two-step pipeline"
            )));
        }
        self.solver.validate()
    }
}

/// Empirical quantiles of the standardized residuals at the active-set
/// reference, taken over the estimation slice: the width at level `q`
/// makes the active set cover about a `q` fraction of the slice.
pub fn width_quantiles(
    pool: &UnlabeledPool,
    rows: &[usize],
    theta_ref: &Array1<f64>,
    points: usize,
) -> Result<Vec<f64>> {
    let probe = ActiveSetSpec::new(theta_ref.clone(), 1.0)?;
    let mut residuals: Vec<f64> = rows
        .iter()
        .map(|&i| probe.standardized_residual(pool.x[i], &pool.z.row(i)))
        .collect();
    if residuals.is_empty() {
        return Err(Error::Argument("empty estimation slice for the width grid".into()));
    }
    residuals.sort_by(f64::total_cmp);
    let m = residuals.len();
    let mut grid = Vec::with_capacity(points);
    for i in 1..=points {
        let level = i as f64 / points as f64;
        let idx = ((level * m as f64).ceil() as usize).clamp(1, m) - 1;
        grid.push(residuals[idx].max(1e-9));
    }
    grid.dedup();
    Ok(grid)
}

/// Data-driven two-step active subsampling: initial uniform fit,
/// CV-selected active-set width, final active fit.
pub fn two_step_cv_fit(
    pool: &UnlabeledPool,
    oracle: &mut LabelOracle,
    cfg: &TwoStepConfig,
    seed: u64,
) -> Result<FitReport> {
    cfg.validate(pool.len())?;
    let n = pool.len();
    // a quarter of the pool estimates inclusion probabilities and width
    // quantiles; the rest is split by budget share
    let d0_frac = 0.25;
    let fracs = [
        d0_frac,
        (1.0 - d0_frac) * cfg.split[0],
        (1.0 - d0_frac) * cfg.split[1],
        (1.0 - d0_frac) * cfg.split[2],
    ];
    let parts = split_fractions(n, &fracs, seed);
    let (d0, d1, dcv, d2) = (&parts[0], &parts[1], &parts[2], &parts[3]);
    let (n1, ncv, n2) = (
        cfg.budget * cfg.split[0],
        cfg.budget * cfg.split[1],
        cfg.budget * cfg.split[2],
    );

    let ctx = FitContext {
        kernel: &cfg.kernel,
        solver: &cfg.solver,
        folds: cfg.folds,
        loss: cfg.loss,
        lambda_grid_len: cfg.lambda_grid_len,
        lambda_grid_span: cfg.lambda_grid_span,
        seed,
    };

    // step 1: uniform sample and initial fit
    let start1 = Instant::now();
    let (c1, clamped1) = sampling_rate(n1, d1.len(), 1.0).map_err(|e| at_iteration(1, e))?;
    let batch1 =
        draw_and_label(pool, d1, None, c1, oracle, seed, 1).map_err(|e| at_iteration(1, e))?;
    if batch1.is_empty() {
        return Err(at_iteration(
            1,
            Error::SamplingDegenerate("no rows were selected".into()),
        ));
    }
    let weights = class_weights_from(&batch1).map_err(|e| at_iteration(1, e))?;
    let (lambda1, _cv1, fit1) = ctx
        .select_and_fit(&batch1, cfg.delta[0], &weights, None, None, seed ^ 0xA1)
        .map_err(|e| at_iteration(1, e))?;
    let theta1 = fit1.theta_hat.clone();
    let last1 = fit1.per_stage.last().expect("at least one stage");
    let iter1 = IterationReport {
        theta: theta1.clone(),
        labels_used: batch1.len(),
        p_hat: 1.0,
        sampling_prob: c1,
        rate_clamped: clamped1,
        lambda: lambda1,
        b: None,
        omega: last1.omega,
        converged: fit1.converged,
        support_size: last1.support_size,
        wall_ms: start1.elapsed().as_secs_f64() * 1e3,
    };

    // step 2: score each candidate width on its own sample from D_cv
    let grid = match &cfg.b_grid {
        BGrid::Auto { points } => width_quantiles(pool, d0, &theta1, *points)?,
        BGrid::Explicit(v) => v.clone(),
    };
    let mut candidates: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
    let mut cv_labels = 0usize;
    for (ci, &b) in grid.iter().enumerate() {
        let spec = ActiveSetSpec::new(theta1.clone(), b)?;
        let p_hat = estimate_inclusion_prob(pool, d0, &spec)?;
        let (c, _) = sampling_rate(ncv / grid.len() as f64, dcv.len(), p_hat)
            .map_err(|e| at_iteration(2, e))?;
        let batch = draw_and_label(pool, dcv, Some(&spec), c, oracle, seed, 100 + ci as u64)
            .map_err(|e| at_iteration(2, e))?;
        cv_labels += batch.len();
        if batch.len() < 4 {
            // too few labels to score this width
            candidates.push((b, f64::INFINITY));
            continue;
        }
        let folds = effective_folds(batch.len(), cfg.folds)?;
        let lgrid = lambda_grid(
            &batch,
            cfg.delta[1],
            &cfg.kernel,
            &weights,
            cfg.loss,
            cfg.lambda_grid_len,
            cfg.lambda_grid_span,
        )?;
        let solver = cfg
            .solver
            .clone()
            .with_lambda_tgt(*lgrid.last().expect("non-empty grid"));
        let cv = cv_lambda(
            &batch,
            cfg.delta[1],
            &cfg.kernel,
            &weights,
            &lgrid,
            folds,
            &solver,
            cfg.loss,
            seed ^ (0xB000 + ci as u64),
        )?;
        candidates.push((b, cv.cv_min));
    }
    let b_hat = cv_b(&candidates)?;

    // step 3: final active fit at the selected width
    let start2 = Instant::now();
    let spec = ActiveSetSpec::new(theta1.clone(), b_hat)?;
    let p_hat = estimate_inclusion_prob(pool, d0, &spec).map_err(|e| at_iteration(2, e))?;
    let (c2, clamped2) = sampling_rate(n2, d2.len(), p_hat).map_err(|e| at_iteration(2, e))?;
    let batch2 = draw_and_label(pool, d2, Some(&spec), c2, oracle, seed, 2)
        .map_err(|e| at_iteration(2, e))?;
    if batch2.is_empty() {
        return Err(at_iteration(
            2,
            Error::SamplingDegenerate("no rows were selected".into()),
        ));
    }
    let (lambda2, _cv2, fit2) = ctx
        .select_and_fit(
            &batch2,
            cfg.delta[1],
            &weights,
            None,
            Some(&theta1),
            seed ^ 0xA2,
        )
        .map_err(|e| at_iteration(2, e))?;
    let last2 = fit2.per_stage.last().expect("at least one stage");
    let iter2 = IterationReport {
        theta: fit2.theta_hat.clone(),
        labels_used: batch2.len(),
        p_hat,
        sampling_prob: c2,
        rate_clamped: clamped2,
        lambda: lambda2,
        b: Some(b_hat),
        omega: last2.omega,
        converged: fit2.converged,
        support_size: last2.support_size,
        wall_ms: start2.elapsed().as_secs_f64() * 1e3,
    };

    let total_labels = iter1.labels_used + cv_labels + iter2.labels_used;
    Ok(FitReport {
        theta_hat: fit2.theta_hat,
        iterations: vec![iter1, iter2],
        weights,
        total_labels,
        width_selection_labels: cv_labels,
        b_candidates: candidates,
    })
}

// ---------------------------------------------------------------------------
// Theory-mode schedules
// ---------------------------------------------------------------------------

/// Inputs for the smoothness-driven tuning schedules.
#[derive(Debug, Clone, Copy)]
pub struct TheoryParams {
    pub beta: f64,
    pub s: usize,
    pub d: usize,
    pub n: usize,
    pub budget: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl TheoryParams {
    pub fn new(beta: f64, s: usize, d: usize, n: usize, budget: f64) -> Self {
        TheoryParams {
            beta,
            s,
            d,
            n,
            budget,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ScheduleRow {
    pub iter: usize,
    pub n_k: f64,
    pub delta: f64,
    pub lambda: f64,
    /// Active-set half-width `b_{k-1}` (absent for the first iteration).
    pub b_prev: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Schedule {
    pub k: usize,
    pub beta: f64,
    pub rows: Vec<ScheduleRow>,
}

/// Smallest integer strictly greater than `x`. Values within 1e-9 of an
/// integer are snapped first so boundary cases (where the exact ratio is
/// an integer but floats land just below) resolve the way the exact
/// arithmetic would.
fn strict_ceil(x: f64) -> i64 {
    let snapped = if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
    snapped.floor() as i64 + 1
}

/// The smoothness threshold separating the two-step regime.
pub const BETA_STAR: f64 = 1.3660254037844386; // (1 + sqrt(3)) / 2

/// Iteration count and per-iteration `(N_k, delta_k, lambda_k, b_{k-1})`
/// for the three smoothness regimes.
pub fn theory_schedule(p: &TheoryParams) -> Result<Schedule> {
    if p.beta < 1.0 {
        return Err(Error::Argument(format!(
            "smoothness beta = {} below 1 is unsupported",
            p.beta
        )));
    }
    if p.s == 0 || p.d < 2 || p.n == 0 || !(p.budget > 1.0) {
        return Err(Error::Argument("degenerate schedule inputs".into()));
    }
    let beta = p.beta;
    let sld = p.s as f64 * (p.d as f64).ln();
    let logd = (p.d as f64).ln();
    let nn = p.n as f64;
    let nb = p.budget;

    let lambda_for = |b: f64, delta: f64, k_factor: f64| {
        p.c2 * (nb * k_factor * logd / (nn * nn * b * delta)).sqrt()
    };

    if beta == 1.0 {
        let k = strict_ceil(nb.ln().ln() / 3f64.ln()).max(1) as usize;
        let ksld = k as f64 * sld;
        if nb <= ksld {
            return Err(Error::Argument(format!(
                "budget {nb} too small for the beta = 1 schedule (needs > K s log d = {ksld})"
            )));
        }
        let n_k = nb / k as f64;
        let log_term = (nb / ksld).ln();
        let mut rows = Vec::with_capacity(k);
        let delta1 = p.c1 * (ksld / nb).powf(1.0 / 3.0);
        rows.push(ScheduleRow {
            iter: 1,
            n_k,
            delta: delta1,
            lambda: p.c2 * (nb * k as f64 * logd / (nn * nn * delta1)).sqrt(),
            b_prev: None,
        });
        for iter in 2..=k {
            let km1 = (iter - 1) as i32;
            let b = p.c3
                * log_term.powf((3.0 - 3.0f64.powi(-(km1 - 1))) / 4.0)
                * (ksld / nb).powf((1.0 - 3.0f64.powi(-km1)) / 2.0);
            let delta = p.c1 * (b * ksld / nb).powf(1.0 / 3.0);
            rows.push(ScheduleRow {
                iter,
                n_k,
                delta,
                lambda: lambda_for(b, delta, k as f64),
                b_prev: Some(b),
            });
        }
        return Ok(Schedule { k, beta, rows });
    }

    if beta <= BETA_STAR {
        // intermediate regime: finitely many extra iterations
        let r = beta / (2.0 * beta + 1.0);
        let inner = 1.0 - (beta + 1.0) / (2.0 * beta * beta);
        let k = (strict_ceil(inner.ln() / r.ln()) + 1).max(2) as usize;
        if nb <= sld {
            return Err(Error::Argument(format!(
                "budget {nb} too small for the schedule (needs > s log d = {sld})"
            )));
        }
        let n_k = nb / k as f64;
        let log_term = (nb / sld).ln();
        let mut rows = Vec::with_capacity(k);
        let delta1 = p.c1 * (sld / nb).powf(1.0 / (2.0 * beta + 1.0));
        rows.push(ScheduleRow {
            iter: 1,
            n_k,
            delta: delta1,
            lambda: p.c2 * (nb * logd / (nn * nn * delta1)).sqrt(),
            b_prev: None,
        });
        for iter in 2..k {
            let km1 = (iter - 1) as i32;
            let shrink = 1.0 - r.powi(km1);
            let b = p.c3
                * log_term.powf((2.0 * beta + 1.0) * shrink / (2.0 * (beta + 1.0)))
                * (sld / nb).powf(beta / (beta + 1.0) * shrink);
            let delta = p.c1 * (b * sld / nb).powf(1.0 / (2.0 * beta + 1.0));
            rows.push(ScheduleRow {
                iter,
                n_k,
                delta,
                lambda: lambda_for(b, delta, 1.0),
                b_prev: Some(b),
            });
        }
        let b_last = p.c3 * (sld / nb).powf(1.0 / (2.0 * beta));
        let delta_last = p.c1 * (sld / nb).powf(1.0 / (2.0 * beta));
        rows.push(ScheduleRow {
            iter: k,
            n_k,
            delta: delta_last,
            lambda: lambda_for(b_last, delta_last, 1.0),
            b_prev: Some(b_last),
        });
        return Ok(Schedule { k, beta, rows });
    }

    // smooth regime: two steps suffice
    let k = 2usize;
    let n_k = nb / k as f64;
    let delta1 = p.c1 * (sld / nb).powf(1.0 / (2.0 * beta + 1.0));
    let mut rows = vec![ScheduleRow {
        iter: 1,
        n_k,
        delta: delta1,
        lambda: p.c2 * (nb * logd / (nn * nn * delta1)).sqrt(),
        b_prev: None,
    }];
    let b = p.c3 * (sld / nb).powf(1.0 / (2.0 * beta));
    let delta = p.c1 * (sld / nb).powf(1.0 / (2.0 * beta));
    rows.push(ScheduleRow {
        iter: 2,
        n_k,
        delta,
        lambda: lambda_for(b, delta, 1.0),
        b_prev: Some(b),
    });
    Ok(Schedule { k, beta, rows })
}

/// Run the K-step loop with parameters taken from a theory schedule.
pub fn theory_fit(
    pool: &UnlabeledPool,
    oracle: &mut LabelOracle,
    params: &TheoryParams,
    solver: &SolverConfig,
    kernel: KernelSpec,
    loss: FitLoss,
    seed: u64,
) -> Result<FitReport> {
    let schedule = theory_schedule(params)?;
    let cfg = KStepConfig {
        k: schedule.k,
        budget: params.budget,
        split: vec![1.0 / schedule.k as f64; schedule.k],
        delta: schedule.rows.iter().map(|r| r.delta).collect(),
        lambda: LambdaRule::Fixed(schedule.rows.iter().map(|r| r.lambda).collect()),
        b: schedule.rows.iter().filter_map(|r| r.b_prev).collect(),
        kernel,
        solver: solver.clone(),
        folds: 5,
        loss,
        lambda_grid_len: 20,
        lambda_grid_span: 1000.0,
    };
    k_step_fit(pool, oracle, &cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, ModelKind, TruthSpec};

    #[test]
    fn schedule_regime_dispatch() {
        let p = TheoryParams::new(2.0, 10, 200, 20_000, 2000.0);
        let s = theory_schedule(&p).unwrap();
        assert_eq!(s.k, 2);

        let p = TheoryParams::new(1.2, 10, 200, 20_000, 2000.0);
        let s = theory_schedule(&p).unwrap();
        // ceil_strict(log_{0.35294}(0.23611)) + 1 = 2 + 1
        assert_eq!(s.k, 3);

        let p = TheoryParams::new(1.0, 10, 200, 20_000, 2000.0);
        let s = theory_schedule(&p).unwrap();
        // ceil_strict(log_3(ln 2000)) = ceil_strict(1.846) = 2
        assert_eq!(s.k, 2);

        assert!(theory_schedule(&TheoryParams::new(0.9, 10, 200, 20_000, 2000.0)).is_err());
    }

    #[test]
    fn schedule_boundary_beta_uses_intermediate_regime() {
        let at = TheoryParams::new(BETA_STAR, 10, 200, 20_000, 2000.0);
        let s = theory_schedule(&at).unwrap();
        assert!(s.k >= 3);
        let above = TheoryParams::new(BETA_STAR + 1e-6, 10, 200, 20_000, 2000.0);
        assert_eq!(theory_schedule(&above).unwrap().k, 2);
    }

    #[test]
    fn schedule_values_positive_and_delta_decreases_in_budget() {
        for beta in [1.0, 1.2, 2.0] {
            let mut prev: Option<Vec<f64>> = None;
            for budget in [1e3, 1e4, 1e5] {
                let p = TheoryParams::new(beta, 10, 200, 1_000_000, budget);
                let s = theory_schedule(&p).unwrap();
                for row in &s.rows {
                    assert!(row.delta > 0.0 && row.lambda > 0.0);
                    assert!(row.n_k > 0.0);
                    if let Some(b) = row.b_prev {
                        assert!(b > 0.0);
                    }
                }
                let deltas: Vec<f64> = s.rows.iter().map(|r| r.delta).collect();
                if let Some(prev) = &prev {
                    // compare per-iteration where lengths agree (beta = 1
                    // changes K with the budget)
                    for (a, b) in prev.iter().zip(&deltas) {
                        assert!(b < a, "delta did not shrink: {b} >= {a} at beta {beta}");
                    }
                }
                prev = Some(deltas);
            }
        }
    }

    #[test]
    fn k_step_rejects_bad_configs() {
        let truth = TruthSpec::new(6, 2, ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }, 1)
            .unwrap();
        let pool = generate(300, &truth, 2);
        let mut oracle = pool.oracle(100.0).unwrap();
        let mut cfg = KStepConfig::passive(100.0);
        cfg.split = vec![0.4, 0.6];
        assert!(k_step_fit(&pool, &mut oracle, &cfg, 0).is_err());

        let cfg = KStepConfig::two_step_fixed_b(100.0, 0.5);
        let small = generate(80, &truth, 3);
        let mut oracle = small.oracle(100.0).unwrap();
        assert!(k_step_fit(&small, &mut oracle, &cfg, 0).is_err());
    }

    #[test]
    fn passive_fit_runs_and_is_deterministic() {
        let truth = TruthSpec::new(10, 3, ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }, 5)
            .unwrap();
        let pool = generate(2_000, &truth, 6);
        let cfg = KStepConfig::passive(300.0);
        let mut o1 = pool.oracle(300.0).unwrap();
        let r1 = k_step_fit(&pool, &mut o1, &cfg, 9).unwrap();
        let mut o2 = pool.oracle(300.0).unwrap();
        let r2 = k_step_fit(&pool, &mut o2, &cfg, 9).unwrap();
        assert_eq!(r1.theta_hat, r2.theta_hat);
        assert_eq!(r1.total_labels, r2.total_labels);
        assert_eq!(r1.iterations.len(), 1);
        assert!(r1.iterations[0].converged);
        // sanity: the fit actually found signal
        let cos = r1.theta_hat.dot(&truth.theta_star)
            / r1.theta_hat.dot(&r1.theta_hat).sqrt().max(1e-12);
        assert!(cos > 0.5, "cosine to truth = {cos}");
    }

    #[test]
    fn two_step_fixed_b_improves_over_first_iterate() {
        let truth = TruthSpec::new(20, 4, ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }, 7)
            .unwrap();
        let pool = generate(6_000, &truth, 8);
        // margins sit near +/-2, so the band needs b ~ 2/sqrt(2) to catch them
        let cfg = KStepConfig::two_step_fixed_b(600.0, 1.6);
        let mut oracle = pool.oracle(600.0).unwrap();
        let report = k_step_fit(&pool, &mut oracle, &cfg, 10).unwrap();
        assert_eq!(report.iterations.len(), 2);
        let err = |t: &Array1<f64>| {
            let d = t - &truth.theta_star;
            d.dot(&d).sqrt()
        };
        let e1 = err(&report.iterations[0].theta);
        let e2 = err(&report.iterations[1].theta);
        assert!(e2 < e1, "second step did not improve: {e2} vs {e1}");
        // labels land near the budget
        assert!((report.total_labels as f64 - 600.0).abs() < 3.0 * 600.0f64.sqrt());
        // every selected row in step 2 is inside the active set by
        // construction; p_hat must be in (0, 1]
        let p = report.iterations[1].p_hat;
        assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn two_step_cv_runs_and_respects_budget() {
        let truth = TruthSpec::new(20, 4, ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }, 17)
            .unwrap();
        let pool = generate(8_000, &truth, 18);
        let cfg = TwoStepConfig::new(800.0);
        let mut oracle = pool.oracle(800.0).unwrap();
        let report = two_step_cv_fit(&pool, &mut oracle, &cfg, 19).unwrap();
        assert_eq!(report.iterations.len(), 2);
        assert!(!report.b_candidates.is_empty());
        let b_hat = report.iterations[1].b.unwrap();
        assert!(report.b_candidates.iter().any(|(b, _)| *b == b_hat));
        // the clamp can leave a shortfall below N, never an overrun
        assert!(report.total_labels as f64 <= 800.0 + 3.0 * 800.0f64.sqrt());
        assert!(report.total_labels as f64 >= 0.4 * 800.0);
        if report.iterations.iter().all(|i| !i.rate_clamped) {
            assert!((report.total_labels as f64 - 800.0).abs() < 3.0 * 800.0f64.sqrt());
        }
        assert_eq!(oracle.labels_issued(), report.total_labels);
        // single-candidate grid degenerates to that value
        let mut cfg1 = TwoStepConfig::new(400.0);
        cfg1.b_grid = BGrid::Explicit(vec![0.7]);
        let mut oracle = pool.oracle(400.0).unwrap();
        let report = two_step_cv_fit(&pool, &mut oracle, &cfg1, 20).unwrap();
        assert_eq!(report.iterations[1].b, Some(0.7));
    }
}
