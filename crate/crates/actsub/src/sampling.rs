//! Active-set construction, inclusion-probability estimation, Bernoulli
//! selection with budget accounting, and the label oracle.
//!
//! Labels are reachable only through [`LabelOracle`]; the selection
//! decision for a row is a function of `(x, z, active set, rng key)`
//! alone. Selection randomness is keyed per `(seed, batch, row)`, so
//! the decision for a row does not depend on scan order and batches can
//! be processed in any schedule.

use crate::error::{Error, Result};
use crate::risk::LabeledBatch;
use crate::rng::{KeyedRng, Stream};
use ndarray::{Array1, Array2};

/// Covariate pool; labels, when simulated, stay sealed inside and are
/// only reachable through an oracle or the evaluation accessor.
#[derive(Debug, Clone)]
pub struct UnlabeledPool {
    pub x: Vec<f64>,
    pub z: Array2<f64>,
    hidden_y: Option<Vec<i8>>,
}

impl UnlabeledPool {
    pub fn new(x: Vec<f64>, z: Array2<f64>) -> Result<Self> {
        if x.len() != z.nrows() {
            return Err(Error::Argument(format!(
                "x has {} rows but z has {}",
                x.len(),
                z.nrows()
            )));
        }
        Ok(UnlabeledPool {
            x,
            z,
            hidden_y: None,
        })
    }

    pub fn with_sealed_labels(x: Vec<f64>, z: Array2<f64>, y: Vec<i8>) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::Argument(format!(
                "{} labels for {} rows",
                y.len(),
                x.len()
            )));
        }
        let mut pool = Self::new(x, z)?;
        pool.hidden_y = Some(y);
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Budget-metered access to the sealed labels.
    pub fn oracle(&self, budget: f64) -> Result<LabelOracle> {
        match &self.hidden_y {
            Some(y) => Ok(LabelOracle::new(y.iter().map(|&v| Some(v)).collect(), budget)),
            None => Err(Error::Budget("pool carries no labels".into())),
        }
    }

    /// Full label vector for evaluation pools. Never consulted by the
    /// sampling path.
    pub fn labels_for_evaluation(&self) -> Option<&[i8]> {
        self.hidden_y.as_deref()
    }
}

/// Budget-counting gate in front of the labels.
///
/// `budget` is the expected number of labels the caller plans to
/// consume; the hard cap of `2 * budget` only guards against
/// pathological Monte-Carlo overruns.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    labels: Vec<Option<i8>>,
    budget: f64,
    hard_cap: usize,
    issued: usize,
}

impl LabelOracle {
    pub fn new(labels: Vec<Option<i8>>, budget: f64) -> Self {
        LabelOracle {
            labels,
            budget,
            hard_cap: (2.0 * budget).ceil().max(1.0) as usize,
            issued: 0,
        }
    }

    pub fn labels_issued(&self) -> usize {
        self.issued
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn budget_remaining(&self) -> usize {
        self.hard_cap - self.issued
    }

    /// Count of rows that actually carry a label.
    pub fn labels_available(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Reveal the label of one row, spending one unit of budget.
    pub fn request(&mut self, row: usize) -> Result<i8> {
        if self.issued >= self.hard_cap {
            return Err(Error::Budget(format!(
                "hard label cap {} reached (expected budget {})",
                self.hard_cap, self.budget
            )));
        }
        let label = self
            .labels
            .get(row)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Budget(format!("row {row} has no label")))?;
        self.issued += 1;
        Ok(label)
    }
}

/// Band `|x - theta_ref' z| <= b * sqrt(1 + ||theta_ref||^2)`.
#[derive(Debug, Clone)]
pub struct ActiveSetSpec {
    pub theta_ref: Array1<f64>,
    pub b: f64,
    norm: f64,
}

impl ActiveSetSpec {
    pub fn new(theta_ref: Array1<f64>, b: f64) -> Result<Self> {
        if !(b > 0.0) {
            return Err(Error::Argument(format!("active-set half-width must be positive, got {b}")));
        }
        let norm = (1.0 + theta_ref.dot(&theta_ref)).sqrt();
        Ok(ActiveSetSpec { theta_ref, b, norm })
    }

    /// Standardized residual `|x - theta_ref' z| / sqrt(1 + ||theta_ref||^2)`.
    pub fn standardized_residual(&self, x: f64, z: &ndarray::ArrayView1<f64>) -> f64 {
        (x - self.theta_ref.dot(z)).abs() / self.norm
    }
}

/// Membership of one row in the active set.
pub fn active_set_member(x: f64, z: &ndarray::ArrayView1<f64>, spec: &ActiveSetSpec) -> bool {
    spec.standardized_residual(x, z) <= spec.b
}

/// Fraction of the given pool rows inside the active set.
pub fn estimate_inclusion_prob(
    pool: &UnlabeledPool,
    rows: &[usize],
    spec: &ActiveSetSpec,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Argument(
            "inclusion probability needs a non-empty slice".into(),
        ));
    }
    let inside = rows
        .iter()
        .filter(|&&i| active_set_member(pool.x[i], &pool.z.row(i), spec))
        .count();
    Ok(inside as f64 / rows.len() as f64)
}

/// Per-row selection probability `c = min(N_k / (n_batch * p_hat), 1)`,
/// with a flag reporting whether the clamp was active.
pub fn sampling_rate(n_k: f64, n_batch: usize, p_hat: f64) -> Result<(f64, bool)> {
    if !(n_k > 0.0) {
        return Err(Error::Argument(format!("per-iteration budget must be positive, got {n_k}")));
    }
    if n_batch == 0 {
        return Err(Error::Argument("batch is empty".into()));
    }
    if p_hat <= 0.0 {
        return Err(Error::SamplingDegenerate(
            "active set is empty on the estimation slice".into(),
        ));
    }
    let raw = n_k / (n_batch as f64 * p_hat);
    if raw > 1.0 {
        Ok((1.0, true))
    } else {
        Ok((raw, false))
    }
}

/// Bernoulli-select rows of one batch (membership always true when
/// `spec` is absent), label every selected row through the oracle, and
/// assemble the risk batch with `scale = 1 / n_batch`.
pub fn draw_and_label(
    pool: &UnlabeledPool,
    rows: &[usize],
    spec: Option<&ActiveSetSpec>,
    c: f64,
    oracle: &mut LabelOracle,
    seed: u64,
    batch_index: u64,
) -> Result<LabeledBatch> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Argument(format!("selection probability must be in (0,1], got {c}")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut picked = Vec::new();
    for &i in rows {
        let member = match spec {
            Some(s) => active_set_member(pool.x[i], &pool.z.row(i), s),
            None => true,
        };
        if !member {
            continue;
        }
        let mut rng = KeyedRng::new(seed, Stream::Select, batch_index, i as u64);
        if rng.uniform() < c {
            xs.push(pool.x[i]);
            ys.push(oracle.request(i)?);
            picked.push(i);
        }
    }
    let mut z = Array2::zeros((picked.len(), pool.dim()));
    for (r, &i) in picked.iter().enumerate() {
        z.row_mut(r).assign(&pool.z.row(i));
    }
    LabeledBatch::new(xs, z, ys, rows.len(), 1.0 / rows.len() as f64)
}

/// Disjoint equal-size batches covering `0..n`, keyed by the seed.
pub fn split_equal(n: usize, parts: usize, seed: u64) -> Vec<Vec<usize>> {
    let fracs = vec![1.0 / parts as f64; parts];
    split_fractions(n, &fracs, seed)
}

/// Disjoint batches with sizes proportional to `fracs` (must sum to 1).
pub fn split_fractions(n: usize, fracs: &[f64], seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    KeyedRng::new(seed, Stream::Split, 0, 0).shuffle(&mut perm);
    let mut out = Vec::with_capacity(fracs.len());
    let mut start = 0usize;
    let mut acc = 0.0;
    for (i, &f) in fracs.iter().enumerate() {
        acc += f;
        let end = if i + 1 == fracs.len() {
            n
        } else {
            (acc * n as f64).round() as usize
        };
        out.push(perm[start..end.min(n)].to_vec());
        start = end.min(n);
    }
    out
}
