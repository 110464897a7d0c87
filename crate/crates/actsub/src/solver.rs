//! Generic l1-regularized first-order solver.
//!
//! The solver minimizes `loss(theta) + lambda * ||theta||_1` for any
//! smooth loss (smoothed risk or logistic) by running a
//! proximal-gradient inner loop inside a path-following outer loop:
//! a geometric sequence of penalties `lambda_t = phi^t * lambda_0`
//! starting at `lambda_0 = ||grad loss(0)||_inf` is solved to stage
//! precision `nu * lambda_t`, each stage warm-started from the last,
//! with the final stage at the target penalty solved to `eps_tgt`.
//!
//! Stationarity is measured by the gap `omega_lambda(theta)`: the
//! l-infinity distance from the negative gradient to the subdifferential
//! of `lambda * ||theta||_1`. A fixed step size is combined with
//! backtracking halvings whenever the quadratic upper model fails, so
//! the objective is non-increasing within every stage regardless of the
//! (unknown) local smoothness constant.

use crate::error::{Error, Result};
use ndarray::{Array1, ArrayView1};

/// Smooth loss interface consumed by the solver.
pub trait LossOracle {
    fn dim(&self) -> usize;
    fn value(&self, theta: &ArrayView1<f64>) -> Result<f64>;
    fn gradient(&self, theta: &ArrayView1<f64>) -> Result<Array1<f64>>;
    /// Fused evaluation; override when one pass computes both.
    fn value_and_gradient(&self, theta: &ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        Ok((self.value(theta)?, self.gradient(theta)?))
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Initial step size; halved on backtracking failures.
    pub eta: f64,
    /// Stage precision factor: stage t stops at `omega <= nu * lambda_t`.
    pub nu: f64,
    /// Penalty decay per stage. When `None` it is derived from `stages`
    /// as `(lambda_tgt / lambda_0)^(1/T)`.
    pub phi: Option<f64>,
    /// Number of path stages. When `None` it is derived from `phi` as
    /// `ceil(log(lambda_tgt / lambda_0) / log(phi))`.
    pub stages: Option<usize>,
    /// Target penalty for the final stage.
    pub lambda_tgt: f64,
    /// Final-stage stationarity precision.
    pub eps_tgt: f64,
    pub max_inner_iters: usize,
    /// Radius of the l2-ball constraint set; `None` leaves it unbounded.
    pub ball_radius: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: 1.0,
            nu: 0.25,
            phi: None,
            stages: Some(20),
            lambda_tgt: 1e-3,
            eps_tgt: 1e-6,
            max_inner_iters: 500,
            ball_radius: None,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda_tgt(mut self, lambda_tgt: f64) -> Self {
        self.lambda_tgt = lambda_tgt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Argument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Argument(format!("nu must be in (0,1), got {}", self.nu)));
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0 && phi < 1.0) {
                return Err(Error::Argument(format!("phi must be in (0,1), got {phi}")));
            }
        }
        if self.phi.is_none() && self.stages.is_none() {
            return Err(Error::Argument("one of phi or stages must be set".into()));
        }
        if let Some(t) = self.stages {
            if t == 0 {
                return Err(Error::Argument("stage count must be positive".into()));
            }
        }
        if !(self.lambda_tgt > 0.0) {
            return Err(Error::Argument(format!(
                "lambda_tgt must be positive, got {}",
                self.lambda_tgt
            )));
        }
        if !(self.eps_tgt > 0.0) {
            return Err(Error::Argument(format!(
                "eps_tgt must be positive, got {}",
                self.eps_tgt
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Argument("max_inner_iters must be positive".into()));
        }
        if let Some(r) = self.ball_radius {
            if !(r > 0.0) {
                return Err(Error::Argument(format!("ball_radius must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Componentwise `sign(v_j) * max(|v_j| - t, 0)`.
pub fn soft_threshold(v: &ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    if t < 0.0 {
        return Err(Error::Argument(format!("threshold must be nonnegative, got {t}")));
    }
    Ok(v.mapv(|x| {
        let m = x.abs() - t;
        if m > 0.0 {
            m * x.signum()
        } else {
            0.0
        }
    }))
}

/// Euclidean projection onto the l2 ball of the given radius.
pub fn project_ball(v: &mut Array1<f64>, radius: f64) {
    let norm = v.dot(v).sqrt();
    if norm > radius {
        *v *= radius / norm;
    }
}

fn prox_step(point: &Array1<f64>, t: f64, ball: Option<f64>) -> Array1<f64> {
    let mut out = soft_threshold(&point.view(), t).expect("nonnegative threshold");
    if let Some(r) = ball {
        project_ball(&mut out, r);
    }
    out
}

/// First-order stationarity gap for `loss + lambda * ||.||_1` with an
/// unbounded constraint set: the l-infinity distance from `-grad` to
/// the subdifferential of the penalty at `theta`.
pub fn omega_criterion(theta: &ArrayView1<f64>, grad: &ArrayView1<f64>, lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (&t, &g) in theta.iter().zip(grad.iter()) {
        let gap = if t != 0.0 {
            (g + lambda * t.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(gap);
    }
    worst
}

/// Outcome of one proximal-gradient stage.
#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub theta: Array1<f64>,
    pub iters: usize,
    pub converged: bool,
    pub omega: f64,
    /// Penalized objective at every recorded iterate, starting point
    /// included.
    pub objective_trace: Vec<f64>,
}

/// Iterate `theta <- S_{lambda eta}(theta - eta grad)` until the
/// stationarity gap drops below `eps` or the iteration cap is reached.
pub fn proximal_gradient<L: LossOracle>(
    loss: &L,
    lambda: f64,
    eps: f64,
    theta0: &Array1<f64>,
    config: &SolverConfig,
) -> Result<ProxOutcome> {
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let mut theta = theta0.clone();
    let (mut val, mut grad) = loss.value_and_gradient(&theta.view())?;
    check_finite(val, &grad)?;
    let l1 = |v: &Array1<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut trace = vec![val + lambda * l1(&theta)];
    let mut omega = omega_criterion(&theta.view(), &grad.view(), lambda);
    if omega <= eps {
        return Ok(ProxOutcome {
            theta,
            iters: 0,
            converged: true,
            omega,
            objective_trace: trace,
        });
    }
    let mut eta = config.eta;
    let mut halvings = 0usize;
    for iter in 1..=config.max_inner_iters {
        // backtracking on the quadratic upper model
        let cand = loop {
            let point = &theta - &(&grad * eta);
            let cand = prox_step(&point, lambda * eta, config.ball_radius);
            let step = &cand - &theta;
            let step_sq = step.dot(&step);
            if step_sq == 0.0 {
                break cand;
            }
            let cand_val = loss.value(&cand.view())?;
            let model = val + grad.dot(&step) + step_sq / (2.0 * eta);
            if cand_val.is_finite() && cand_val <= model + 1e-12 || halvings >= 30 {
                break cand;
            }
            eta *= 0.5;
            halvings += 1;
        };
        theta = cand;
        let (v, g) = loss.value_and_gradient(&theta.view())?;
        check_finite(v, &g)?;
        val = v;
        grad = g;
        trace.push(val + lambda * l1(&theta));
        omega = omega_criterion(&theta.view(), &grad.view(), lambda);
        if omega <= eps {
            return Ok(ProxOutcome {
                theta,
                iters: iter,
                converged: true,
                omega,
                objective_trace: trace,
            });
        }
    }
    Ok(ProxOutcome {
        theta,
        iters: config.max_inner_iters,
        converged: false,
        omega,
        objective_trace: trace,
    })
}

fn check_finite(val: f64, grad: &Array1<f64>) -> Result<()> {
    if !val.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite loss or gradient".into()));
    }
    Ok(())
}

/// Per-stage diagnostics of a path-following run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StageDiag {
    pub lambda: f64,
    pub omega: f64,
    pub inner_iters: usize,
    pub objective: f64,
    pub support_size: usize,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub theta_hat: Array1<f64>,
    pub per_stage: Vec<StageDiag>,
    pub converged: bool,
    /// Set when `lambda_tgt >= lambda_0` collapsed the path to a single
    /// stage.
    pub degenerate: bool,
    /// Objective values recorded at every inner iterate, per stage.
    pub objective_traces: Vec<Vec<f64>>,
}

pub fn support_size(theta: &ArrayView1<f64>) -> usize {
    theta.iter().filter(|v| **v != 0.0).count()
}

/// The penalty sequence the path will visit, final target included.
fn stage_lambdas(lambda0: f64, config: &SolverConfig) -> Vec<f64> {
    let tgt = config.lambda_tgt;
    if tgt >= lambda0 {
        return vec![tgt];
    }
    let stages = match (config.phi, config.stages) {
        (Some(phi), _) => {
            let t = ((tgt / lambda0).ln() / phi.ln()).ceil() as usize;
            t.max(1)
        }
        (None, Some(t)) => t,
        (None, None) => unreachable!("validated"),
    };
    let phi = match config.phi {
        Some(phi) => phi,
        None => (tgt / lambda0).powf(1.0 / stages as f64),
    };
    let mut lambdas = Vec::with_capacity(stages);
    for t in 1..stages {
        lambdas.push(phi.powi(t as i32) * lambda0);
    }
    lambdas.push(tgt);
    lambdas
}

/// Solve the penalized problem along a given decreasing penalty
/// sequence, warm-starting each stage from the previous solution, and
/// return every stage iterate. Stages before the last stop at
/// `nu * lambda`; the last stops at `eps_tgt`.
pub fn path_solutions<L: LossOracle>(
    loss: &L,
    lambdas: &[f64],
    config: &SolverConfig,
    theta_init: &Array1<f64>,
) -> Result<Vec<ProxOutcome>> {
    config.validate()?;
    let mut out = Vec::with_capacity(lambdas.len());
    let mut theta = theta_init.clone();
    for (t, &lambda) in lambdas.iter().enumerate() {
        let eps = if t + 1 == lambdas.len() {
            config.eps_tgt
        } else {
            config.nu * lambda
        };
        let outcome = proximal_gradient(loss, lambda, eps, &theta, config).map_err(|e| {
            match e {
                Error::Numerical(msg) => Error::Numerical(format!("stage {}: {msg}", t + 1)),
                other => other,
            }
        })?;
        theta = outcome.theta.clone();
        out.push(outcome);
    }
    Ok(out)
}

/// Path-following from `lambda_0 = ||grad loss(start)||_inf` down to
/// the target penalty.
pub fn path_following<L: LossOracle>(
    loss: &L,
    config: &SolverConfig,
    theta_init: Option<&Array1<f64>>,
) -> Result<PathResult> {
    config.validate()?;
    let zero = Array1::zeros(loss.dim());
    let start = theta_init.unwrap_or(&zero);
    let grad0 = loss.gradient(&start.view())?;
    check_finite(0.0, &grad0)?;
    let linf = grad0.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let warm = start.iter().any(|&v| v != 0.0);
    let mut lambda0 = linf;
    if warm {
        // keep at least one stage above the target on warm starts
        if let Some(phi) = config.phi {
            let t = config.stages.unwrap_or(1);
            lambda0 = lambda0.max(config.lambda_tgt / phi.powi(t as i32));
        }
    }
    let degenerate = config.lambda_tgt >= lambda0;
    let lambdas = stage_lambdas(lambda0, config);
    let outcomes = path_solutions(loss, &lambdas, config, start)?;
    let mut per_stage = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::with_capacity(outcomes.len());
    for (outcome, &lambda) in outcomes.iter().zip(&lambdas) {
        per_stage.push(StageDiag {
            lambda,
            omega: outcome.omega,
            inner_iters: outcome.iters,
            objective: *outcome
                .objective_trace
                .last()
                .expect("trace holds at least the start"),
            support_size: support_size(&outcome.theta.view()),
        });
        traces.push(outcome.objective_trace.clone());
    }
    let last = outcomes.last().expect("at least one stage");
    Ok(PathResult {
        theta_hat: last.theta.clone(),
        converged: last.converged,
        degenerate,
        per_stage,
        objective_traces: traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{KeyedRng, Stream};
    use ndarray::array;

    /// `0.5 * ||theta - a||^2`, the canonical prox test problem.
    struct Quadratic {
        a: Array1<f64>,
    }

    impl LossOracle for Quadratic {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn value(&self, theta: &ArrayView1<f64>) -> Result<f64> {
            let d = theta - &self.a;
            Ok(0.5 * d.dot(&d))
        }
        fn gradient(&self, theta: &ArrayView1<f64>) -> Result<Array1<f64>> {
            Ok(theta - &self.a)
        }
    }

    #[test]
    fn soft_threshold_examples() {
        let v = array![3.0, -0.5, 0.0];
        let s = soft_threshold(&v.view(), 1.0).unwrap();
        assert_eq!(s, array![2.0, 0.0, 0.0]);
        let s0 = soft_threshold(&v.view(), 0.0).unwrap();
        assert_eq!(s0, v);
        assert!(soft_threshold(&v.view(), -0.1).is_err());
    }

    #[test]
    fn soft_threshold_matches_grid_oracle() {
        let mut rng = KeyedRng::new(21, Stream::Truth, 0, 0);
        for _ in 0..20 {
            let v = Array1::from_iter((0..4).map(|_| 3.0 * rng.normal()));
            let t = 2.0 * rng.uniform();
            let s = soft_threshold(&v.view(), t).unwrap();
            for j in 0..4 {
                // 1-D grid search for argmin of 0.5 (u - v)^2 + t |u|
                let mut best = f64::INFINITY;
                let mut best_u = 0.0;
                let mut u = -12.0;
                while u <= 12.0 {
                    let obj = 0.5 * (u - v[j]).powi(2) + t * u.abs();
                    if obj < best {
                        best = obj;
                        best_u = u;
                    }
                    u += 1e-4;
                }
                assert!((s[j] - best_u).abs() < 1e-4, "j={j}: {} vs {best_u}", s[j]);
            }
        }
    }

    #[test]
    fn soft_threshold_is_nonexpansive() {
        let mut rng = KeyedRng::new(22, Stream::Truth, 0, 0);
        for _ in 0..200 {
            let u = Array1::from_iter((0..6).map(|_| 4.0 * rng.normal()));
            let v = Array1::from_iter((0..6).map(|_| 4.0 * rng.normal()));
            let t = 1.5 * rng.uniform();
            let su = soft_threshold(&u.view(), t).unwrap();
            let sv = soft_threshold(&v.view(), t).unwrap();
            let dl = {
                let d = &su - &sv;
                d.dot(&d).sqrt()
            };
            let dr = {
                let d = &u - &v;
                d.dot(&d).sqrt()
            };
            assert!(dl <= dr + 1e-12);
        }
    }

    #[test]
    fn omega_trivial_cases() {
        let lambda = 0.7;
        let theta = Array1::zeros(3);
        let grad = array![0.3, -0.69, 0.0];
        assert_eq!(omega_criterion(&theta.view(), &grad.view(), lambda), 0.0);
        let theta = array![1.0, 0.0];
        let grad = array![-lambda, 0.0];
        assert_eq!(omega_criterion(&theta.view(), &grad.view(), lambda), 0.0);
    }

    #[test]
    fn omega_zero_iff_prox_fixed_point() {
        let mut rng = KeyedRng::new(23, Stream::Truth, 0, 0);
        let lambda = 0.4;
        let eta = 0.3;
        for trial in 0..100 {
            let d = 5;
            let mut theta = Array1::zeros(d);
            let mut grad = Array1::zeros(d);
            if trial % 2 == 0 {
                // construct an exact stationary pair
                for j in 0..d {
                    if rng.uniform() < 0.5 {
                        theta[j] = 2.0 * rng.normal();
                        grad[j] = -lambda * theta[j].signum();
                    } else {
                        grad[j] = lambda * (2.0 * rng.uniform() - 1.0);
                    }
                }
            } else {
                for j in 0..d {
                    theta[j] = if rng.uniform() < 0.5 { rng.normal() } else { 0.0 };
                    grad[j] = rng.normal();
                }
            }
            let omega = omega_criterion(&theta.view(), &grad.view(), lambda);
            let point = &theta - &(&grad * eta);
            let fixed = soft_threshold(&point.view(), lambda * eta).unwrap();
            let gap = (&fixed - &theta).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if omega < 1e-12 {
                assert!(gap < 1e-9, "stationary point moved by {gap}");
            }
            if omega > 1e-2 {
                assert!(gap > 1e-12, "non-stationary point fixed");
            }
        }
    }

    #[test]
    fn prox_gradient_solves_quadratic_prox_problem() {
        let a = array![2.0, -0.3, 0.0, 1.2];
        let loss = Quadratic { a: a.clone() };
        let lambda = 0.5;
        let config = SolverConfig::default();
        let out = proximal_gradient(&loss, lambda, 1e-10, &Array1::zeros(4), &config).unwrap();
        let expect = soft_threshold(&a.view(), lambda).unwrap();
        for j in 0..4 {
            assert!((out.theta[j] - expect[j]).abs() < 1e-8);
        }
        assert!(out.converged);
    }

    #[test]
    fn prox_gradient_returns_immediately_when_stationary() {
        let a = array![0.1, -0.2];
        let loss = Quadratic { a: a.clone() };
        // at theta = 0 the gradient is -a, ||grad||_inf = 0.2 <= lambda
        let out = proximal_gradient(
            &loss,
            0.5,
            1e-8,
            &Array1::zeros(2),
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.iters, 0);
        assert_eq!(out.theta, Array1::<f64>::zeros(2));
    }

    #[test]
    fn objective_descends_within_stage() {
        let mut rng = KeyedRng::new(24, Stream::Truth, 0, 0);
        let a = Array1::from_iter((0..8).map(|_| 3.0 * rng.normal()));
        let loss = Quadratic { a };
        let mut config = SolverConfig::default();
        config.eta = 4.0; // force backtracking
        let out = proximal_gradient(&loss, 0.3, 1e-9, &Array1::zeros(8), &config).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn path_lambdas_form_geometric_sequence() {
        let config = SolverConfig {
            lambda_tgt: 0.01,
            stages: Some(10),
            ..SolverConfig::default()
        };
        let lambdas = stage_lambdas(1.0, &config);
        assert_eq!(lambdas.len(), 10);
        let phi = (0.01f64).powf(0.1);
        for (t, &l) in lambdas.iter().enumerate() {
            assert!((l - phi.powi(t as i32 + 1)).abs() < 1e-12);
        }
        assert!((lambdas.last().unwrap() - 0.01).abs() < 1e-15);
        for w in lambdas.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn path_with_given_phi_recomputes_stage_count() {
        let config = SolverConfig {
            lambda_tgt: 0.01,
            phi: Some(0.9),
            stages: None,
            ..SolverConfig::default()
        };
        let lambdas = stage_lambdas(1.0, &config);
        // ceil(ln(0.01)/ln(0.9)) = ceil(43.7) = 44
        assert_eq!(lambdas.len(), 44);
        assert!((lambdas.last().unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_gives_degenerate_path_at_zero() {
        let loss = Quadratic {
            a: Array1::zeros(3),
        };
        let config = SolverConfig::default().with_lambda_tgt(0.5);
        let res = path_following(&loss, &config, None).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.per_stage.len(), 1);
        assert_eq!(res.theta_hat, Array1::<f64>::zeros(3));
        assert!(res.converged);
    }

    #[test]
    fn path_recovers_soft_threshold_solution() {
        let a = array![3.0, -2.0, 0.05, 0.0];
        let loss = Quadratic { a: a.clone() };
        let config = SolverConfig::default().with_lambda_tgt(0.5);
        let res = path_following(&loss, &config, None).unwrap();
        let expect = soft_threshold(&a.view(), 0.5).unwrap();
        for j in 0..4 {
            assert!((res.theta_hat[j] - expect[j]).abs() < 1e-6);
        }
        assert!(res.converged);
        assert!(!res.degenerate);
        for w in res.per_stage.windows(2) {
            assert!(w[1].lambda < w[0].lambda);
        }
        for trace in &res.objective_traces {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn warm_start_keeps_a_stage_above_target() {
        let a = array![0.2, -0.1];
        let loss = Quadratic { a: a.clone() };
        let config = SolverConfig {
            lambda_tgt: 0.15,
            phi: Some(0.8),
            stages: Some(5),
            ..SolverConfig::default()
        };
        // warm start very close to the solution: raw lambda_0 would be
        // below the target
        let warm = soft_threshold(&a.view(), 0.15).unwrap();
        let res = path_following(&loss, &config, Some(&warm)).unwrap();
        assert!(!res.degenerate);
        assert!(res.per_stage[0].lambda > 0.15);
    }

    #[test]
    fn ball_constraint_is_enforced() {
        let a = array![10.0, 0.0];
        let loss = Quadratic { a };
        let config = SolverConfig {
            ball_radius: Some(1.0),
            lambda_tgt: 0.01,
            ..SolverConfig::default()
        };
        let res = path_following(&loss, &config, None).unwrap();
        let norm = res.theta_hat.dot(&res.theta_hat).sqrt();
        assert!(norm <= 1.0 + 1e-12);
    }
}
