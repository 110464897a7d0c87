//! Simulation models and the sparse ground-truth parameter.
//!
//! All generation is pure given `(seed, row index)`: each row owns a
//! keyed substream (see [`crate::rng`]) and draws its variates in a
//! fixed order, so pools are identical across platforms and row
//! generation could be parallelized without changing output.
//!
//! `sign(0)` resolves to `+1` everywhere.

use crate::error::{Error, Result};
use crate::rng::{KeyedRng, Stream};
use crate::sampling::UnlabeledPool;
use ndarray::{Array1, Array2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// `Y = sign(X - theta' Z + eps)`, standard logistic noise.
    Logistic,
    /// `Y = sign(X - theta' Z + eps)`,
    /// `eps ~ N(0, sigma^2 (1 + 2 (X - theta' Z)^2))`.
    BinaryResponse { sigma: f64 },
    /// `X = mu Y + theta' Z + eps`, `Y ~ Uniform{-1, +1}`.
    ConditionalMean { mu: f64, eps_sd: f64 },
}

impl ModelKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "logistic" => Ok(ModelKind::Logistic),
            "binary_response" => Ok(ModelKind::BinaryResponse { sigma: 0.5 }),
            "conditional_mean" => Ok(ModelKind::ConditionalMean {
                mu: 2.0,
                eps_sd: 0.1,
            }),
            _ => Err(Error::Argument(format!("unknown model `{name}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::BinaryResponse { .. } => "binary_response",
            ModelKind::ConditionalMean { .. } => "conditional_mean",
        }
    }
}

/// Ground truth for one simulated scenario.
#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub d: usize,
    pub s: usize,
    pub theta_star: Array1<f64>,
    pub model: ModelKind,
}

impl TruthSpec {
    pub fn new(d: usize, s: usize, model: ModelKind, seed: u64) -> Result<Self> {
        let theta_star = gen_theta(d, s, seed)?;
        Ok(TruthSpec {
            d,
            s,
            theta_star,
            model,
        })
    }
}

#[inline]
fn sign_pm(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Sparse parameter: `s` support coordinates chosen uniformly, values
/// `Uniform(1, 2)`, before l2 normalization.
pub fn gen_theta_unnormalized(d: usize, s: usize, seed: u64) -> Result<Array1<f64>> {
    if s == 0 || s > d {
        return Err(Error::Argument(format!("sparsity s={s} must satisfy 1 <= s <= d={d}")));
    }
    let mut rng = KeyedRng::new(seed, Stream::Truth, 0, 0);
    let support = rng.sample_indices(d, s);
    let mut theta = Array1::zeros(d);
    for j in support {
        theta[j] = 1.0 + rng.uniform();
    }
    Ok(theta)
}

/// l2-normalized sparse ground-truth parameter.
pub fn gen_theta(d: usize, s: usize, seed: u64) -> Result<Array1<f64>> {
    let mut theta = gen_theta_unnormalized(d, s, seed)?;
    let norm = theta.dot(&theta).sqrt();
    theta /= norm;
    Ok(theta)
}

/// Simulate `n` rows under the given truth.
pub fn generate(n: usize, truth: &TruthSpec, seed: u64) -> UnlabeledPool {
    let d = truth.d;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Array2::zeros((n, d));
    for i in 0..n {
        let mut rng = KeyedRng::new(seed, Stream::PoolRow, i as u64, 0);
        match truth.model {
            ModelKind::Logistic => {
                let xi = rng.normal();
                let mut row = z.row_mut(i);
                for v in row.iter_mut() {
                    *v = rng.normal();
                }
                let margin = xi - row.dot(&truth.theta_star);
                let eps = rng.logistic();
                x.push(xi);
                y.push(sign_pm(margin + eps));
            }
            ModelKind::BinaryResponse { sigma } => {
                let xi = rng.normal();
                let mut row = z.row_mut(i);
                for v in row.iter_mut() {
                    *v = rng.normal();
                }
                let margin = xi - row.dot(&truth.theta_star);
                let eps = rng.normal() * sigma * (1.0 + 2.0 * margin * margin).sqrt();
                x.push(xi);
                y.push(sign_pm(margin + eps));
            }
            ModelKind::ConditionalMean { mu, eps_sd } => {
                let yi: i8 = if rng.uniform() < 0.5 { -1 } else { 1 };
                let mut row = z.row_mut(i);
                for v in row.iter_mut() {
                    *v = rng.normal();
                }
                let eps = rng.normal() * eps_sd;
                x.push(mu * yi as f64 + row.dot(&truth.theta_star) + eps);
                y.push(yi);
            }
        }
    }
    UnlabeledPool::with_sealed_labels(x, z, y).expect("consistent shapes by construction")
}

pub fn gen_logistic(n: usize, truth: &TruthSpec, seed: u64) -> UnlabeledPool {
    debug_assert!(matches!(truth.model, ModelKind::Logistic));
    generate(n, truth, seed)
}

pub fn gen_binary_response(n: usize, truth: &TruthSpec, seed: u64) -> UnlabeledPool {
    debug_assert!(matches!(truth.model, ModelKind::BinaryResponse { .. }));
    generate(n, truth, seed)
}

pub fn gen_conditional_mean(n: usize, truth: &TruthSpec, seed: u64) -> UnlabeledPool {
    debug_assert!(matches!(truth.model, ModelKind::ConditionalMean { .. }));
    generate(n, truth, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_degenerate_case() {
        let t = gen_theta(1, 1, 0).unwrap();
        assert_eq!(t[0], 1.0);
        assert!(gen_theta(3, 4, 0).is_err());
        assert!(gen_theta(3, 0, 0).is_err());
    }

    #[test]
    fn theta_support_and_norm() {
        for seed in 0..20 {
            let t = gen_theta(50, 7, seed).unwrap();
            let nnz = t.iter().filter(|v| **v != 0.0).count();
            assert_eq!(nnz, 7);
            assert!(t.iter().all(|&v| v >= 0.0));
            assert!((t.dot(&t).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_nonzeros_are_uniform_1_2() {
        // KS test against Uniform(1,2) on ~10^4 raw nonzeros
        let t = gen_theta_unnormalized(20_000, 10_000, 4).unwrap();
        let mut vals: Vec<f64> = t.iter().copied().filter(|v| *v != 0.0).collect();
        vals.sort_by(f64::total_cmp);
        let n = vals.len() as f64;
        let mut d_stat: f64 = 0.0;
        for (i, &v) in vals.iter().enumerate() {
            let f = (v - 1.0).clamp(0.0, 1.0);
            let hi = (i as f64 + 1.0) / n - f;
            let lo = f - i as f64 / n;
            d_stat = d_stat.max(hi).max(lo);
        }
        // critical value at p = 0.01
        assert!(d_stat < 1.63 / n.sqrt(), "KS statistic {d_stat}");
    }

    #[test]
    fn logistic_pool_moments() {
        let truth = TruthSpec::new(20, 5, ModelKind::Logistic, 1).unwrap();
        let n = 50_000;
        let pool = gen_logistic(n, &truth, 2);
        let labels = pool.labels_for_evaluation().unwrap();
        let pos = labels.iter().filter(|&&y| y > 0).count() as f64 / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!((pos - 0.5).abs() < 3.0 * se, "P(Y=1) = {pos}");
        // margins X - theta' Z ~ N(0, 2)
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..n {
            let m = pool.x[i] - pool.z.row(i).dot(&truth.theta_star);
            sum += m;
            sumsq += m * m;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // se of sample variance of N(0,2) is sqrt(2/n)*2
        assert!((var - 2.0).abs() < 3.0 * 2.0 * (2.0 / n as f64).sqrt(), "var = {var}");
    }

    #[test]
    fn conditional_mean_pool_structure() {
        let truth = TruthSpec::new(15, 4, ModelKind::ConditionalMean { mu: 2.0, eps_sd: 0.1 }, 3)
            .unwrap();
        let n = 50_000;
        let pool = gen_conditional_mean(n, &truth, 5);
        let labels = pool.labels_for_evaluation().unwrap();
        let mut pos_margins = Vec::new();
        let mut misclassified = 0usize;
        for i in 0..n {
            let m = pool.x[i] - pool.z.row(i).dot(&truth.theta_star);
            if labels[i] > 0 {
                pos_margins.push(m);
            }
            if (if m >= 0.0 { 1 } else { -1 }) != labels[i] {
                misclassified += 1;
            }
        }
        let k = pos_margins.len() as f64;
        let mean = pos_margins.iter().sum::<f64>() / k;
        let var = pos_margins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
        assert!((mean - 2.0).abs() < 3.0 * 0.1 / k.sqrt(), "mean = {mean}");
        assert!((var - 0.01).abs() < 3.0 * 0.01 * (2.0 / k).sqrt(), "var = {var}");
        // threshold at theta* separates almost surely: Phi(-20) ~ 0
        assert_eq!(misclassified, 0);
    }

    #[test]
    fn binary_response_conditional_variance() {
        let truth = TruthSpec::new(5, 2, ModelKind::BinaryResponse { sigma: 0.5 }, 7).unwrap();
        let n = 1_000_000;
        // reconstruct eps from the row streams at the two margin slices
        let pool = gen_binary_response(n, &truth, 9);
        let labels = pool.labels_for_evaluation().unwrap();
        let mut at0: Vec<f64> = Vec::new();
        let mut at1: Vec<f64> = Vec::new();
        for i in 0..n {
            let m = pool.x[i] - pool.z.row(i).dot(&truth.theta_star);
            // P(Y=1 | margin) = P(eps > -m); use the label as the
            // Bernoulli draw and check the slice means below
            if m.abs() < 0.01 {
                at0.push(if labels[i] > 0 { 1.0 } else { 0.0 });
            }
            if (m - 1.0).abs() < 0.01 {
                at1.push(if labels[i] > 0 { 1.0 } else { 0.0 });
            }
        }
        // median-zero noise: P(Y=1 | margin = 0) = 1/2
        let p0 = at0.iter().sum::<f64>() / at0.len() as f64;
        let se0 = 0.5 / (at0.len() as f64).sqrt();
        assert!((p0 - 0.5).abs() < 3.0 * se0, "p0 = {p0} over {}", at0.len());
        // at margin 1 the noise sd is 0.5 * sqrt(3); P(Y=1) = Phi(1/sd)
        let sd1 = 0.5 * 3.0f64.sqrt();
        let expect1 = 1.0 - crate::kernels::normal_upper_tail(1.0 / sd1);
        let p1 = at1.iter().sum::<f64>() / at1.len() as f64;
        let se1 = (expect1 * (1.0 - expect1) / at1.len() as f64).sqrt();
        assert!((p1 - expect1).abs() < 3.0 * se1, "p1 = {p1} vs {expect1}");
    }

    #[test]
    fn generation_is_deterministic() {
        let truth = TruthSpec::new(8, 3, ModelKind::Logistic, 11).unwrap();
        let a = generate(500, &truth, 13);
        let b = generate(500, &truth, 13);
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
        assert_eq!(a.labels_for_evaluation(), b.labels_for_evaluation());
        let c = generate(500, &truth, 14);
        assert_ne!(a.x, c.x);
    }
}
