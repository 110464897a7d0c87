//! Weighted smoothed empirical risk over a sampled batch, its exact
//! gradient, and the logistic loss used by the regression baselines.
//!
//! The risk is kept in scaled form: `scale * sum_i gamma(y_i) *
//! L_delta(y_i (x_i - theta' z_i))` where `scale` is `1 / |D_k|` for a
//! batch carved out of a pool of `|D_k|` rows (only the selected rows
//! are stored). Keeping the scale inside the risk makes the penalty
//! levels comparable across batches of different sizes.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use ndarray::{Array1, Array2, ArrayView1};

/// Labeled records selected from one batch.
///
/// `batch_size_total` is the number of pool rows in the batch the
/// records were selected from (the risk denominator), not the number
/// of stored records; `scale` is its reciprocal.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub x: Vec<f64>,
    pub z: Array2<f64>,
    pub y: Vec<i8>,
    pub batch_size_total: usize,
    pub scale: f64,
}

impl LabeledBatch {
    pub fn new(
        x: Vec<f64>,
        z: Array2<f64>,
        y: Vec<i8>,
        batch_size_total: usize,
        scale: f64,
    ) -> Result<Self> {
        if x.len() != z.nrows() || x.len() != y.len() {
            return Err(Error::Argument(format!(
                "record arrays disagree: {} x, {} z rows, {} y",
                x.len(),
                z.nrows(),
                y.len()
            )));
        }
        if x.len() > batch_size_total {
            return Err(Error::Argument(format!(
                "{} records exceed batch size {batch_size_total}",
                x.len()
            )));
        }
        if y.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::Argument("labels must be -1 or +1".into()));
        }
        Ok(LabeledBatch {
            x,
            z,
            y,
            batch_size_total,
            scale,
        })
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

    /// Sub-batch from a list of record positions, with the denominator
    /// shrunk proportionally so per-record scale is preserved.
    pub fn subset(&self, keep: &[usize]) -> LabeledBatch {
        let x: Vec<f64> = keep.iter().map(|&i| self.x[i]).collect();
        let y: Vec<i8> = keep.iter().map(|&i| self.y[i]).collect();
        let mut z = Array2::zeros((keep.len(), self.dim()));
        for (r, &i) in keep.iter().enumerate() {
            z.row_mut(r).assign(&self.z.row(i));
        }
        let frac = if self.is_empty() {
            1.0
        } else {
            keep.len() as f64 / self.len() as f64
        };
        let total = (self.batch_size_total as f64 * frac).round().max(1.0);
        LabeledBatch {
            x,
            z,
            y,
            batch_size_total: total as usize,
            scale: 1.0 / total,
        }
    }

    /// Margins `x_i - theta' z_i`.
    pub fn margins(&self, theta: &ArrayView1<f64>) -> Array1<f64> {
        let mut m = self.z.dot(theta);
        for (mi, xi) in m.iter_mut().zip(&self.x) {
            *mi = xi - *mi;
        }
        m
    }
}

/// Inverse class-probability weights `gamma(y) = 1 / P(Y = y)` with the
/// probability estimate clamped to `[0.05, 0.95]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub w_plus: f64,
    pub w_minus: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            w_plus: 1.0,
            w_minus: 1.0,
        }
    }

    #[inline]
    pub fn get(&self, y: i8) -> f64 {
        if y > 0 {
            self.w_plus
        } else {
            self.w_minus
        }
    }
}

/// Estimate the class weights from the labeled records of a batch.
pub fn class_weights_from(batch: &LabeledBatch) -> Result<ClassWeights> {
    if batch.is_empty() {
        return Err(Error::Argument(
            "cannot estimate class weights from an empty batch".into(),
        ));
    }
    let positives = batch.y.iter().filter(|&&v| v > 0).count();
    let p_hat = (positives as f64 / batch.len() as f64).clamp(0.05, 0.95);
    Ok(ClassWeights {
        w_plus: 1.0 / p_hat,
        w_minus: 1.0 / (1.0 - p_hat),
    })
}

fn check_dim(batch: &LabeledBatch, theta: &ArrayView1<f64>) -> Result<()> {
    if theta.len() != batch.dim() {
        return Err(Error::Dimension {
            expected: batch.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// `scale * sum_i gamma(y_i) L_delta(y_i (x_i - theta' z_i))`.
pub fn smoothed_risk(
    theta: &ArrayView1<f64>,
    batch: &LabeledBatch,
    delta: f64,
    kernel: &KernelSpec,
    weights: &ClassWeights,
) -> Result<f64> {
    check_dim(batch, theta)?;
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let margins = batch.margins(theta);
    let mut acc = 0.0;
    for (i, &m) in margins.iter().enumerate() {
        let y = batch.y[i] as f64;
        acc += weights.get(batch.y[i]) * kernel.upper_tail(y * m / delta);
    }
    Ok(batch.scale * acc)
}

/// Exact gradient of [`smoothed_risk`] in `theta`:
/// `scale * sum_i gamma(y_i) (y_i z_i / delta) K(y_i (x_i - theta' z_i) / delta)`.
pub fn smoothed_risk_gradient(
    theta: &ArrayView1<f64>,
    batch: &LabeledBatch,
    delta: f64,
    kernel: &KernelSpec,
    weights: &ClassWeights,
) -> Result<Array1<f64>> {
    check_dim(batch, theta)?;
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    let mut coef = Array1::zeros(batch.len());
    if batch.is_empty() {
        return Ok(Array1::zeros(batch.dim()));
    }
    let margins = batch.margins(theta);
    for (i, &m) in margins.iter().enumerate() {
        let y = batch.y[i] as f64;
        coef[i] =
            batch.scale * weights.get(batch.y[i]) * y / delta * kernel.density(y * m / delta);
    }
    Ok(batch.z.t().dot(&coef))
}

/// Weighted logistic loss and gradient for the LR baselines,
/// parameterized on the same offset margins so its minimizer targets
/// the same threshold parameter:
/// `scale * sum_i gamma(y_i) log(1 + exp(-y_i (x_i - theta' z_i)))`.
pub fn logistic_loss_and_gradient(
    theta: &ArrayView1<f64>,
    batch: &LabeledBatch,
    weights: &ClassWeights,
) -> Result<(f64, Array1<f64>)> {
    check_dim(batch, theta)?;
    if batch.is_empty() {
        return Ok((0.0, Array1::zeros(batch.dim())));
    }
    let margins = batch.margins(theta);
    let mut loss = 0.0;
    let mut coef = Array1::zeros(batch.len());
    for (i, &m) in margins.iter().enumerate() {
        let y = batch.y[i] as f64;
        let w = weights.get(batch.y[i]);
        let u = y * m;
        // log(1 + e^{-u}) computed on the stable branch
        loss += w * if u > 0.0 {
            (-u).exp().ln_1p()
        } else {
            -u + u.exp().ln_1p()
        };
        // d/dtheta: gamma * y * z * sigma(-u)
        coef[i] = batch.scale * w * y / (1.0 + u.exp());
    }
    Ok((batch.scale * loss, batch.z.t().dot(&coef)))
}

/// Smoothed risk as a solver loss.
pub struct SmoothedRiskLoss<'a> {
    pub batch: &'a LabeledBatch,
    pub delta: f64,
    pub kernel: &'a KernelSpec,
    pub weights: ClassWeights,
}

impl crate::solver::LossOracle for SmoothedRiskLoss<'_> {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn value(&self, theta: &ArrayView1<f64>) -> Result<f64> {
        smoothed_risk(theta, self.batch, self.delta, self.kernel, &self.weights)
    }

    fn gradient(&self, theta: &ArrayView1<f64>) -> Result<Array1<f64>> {
        smoothed_risk_gradient(theta, self.batch, self.delta, self.kernel, &self.weights)
    }

    fn value_and_gradient(&self, theta: &ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        check_dim(self.batch, theta)?;
        let b = self.batch;
        if b.is_empty() {
            return Ok((0.0, Array1::zeros(b.dim())));
        }
        let margins = b.margins(theta);
        let mut loss = 0.0;
        let mut coef = Array1::zeros(b.len());
        for (i, &m) in margins.iter().enumerate() {
            let y = b.y[i] as f64;
            let w = self.weights.get(b.y[i]);
            let u = y * m / self.delta;
            loss += w * self.kernel.upper_tail(u);
            coef[i] = b.scale * w * y / self.delta * self.kernel.density(u);
        }
        Ok((b.scale * loss, b.z.t().dot(&coef)))
    }
}

/// Logistic loss as a solver loss.
pub struct LogisticLoss<'a> {
    pub batch: &'a LabeledBatch,
    pub weights: ClassWeights,
}

impl crate::solver::LossOracle for LogisticLoss<'_> {
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn value(&self, theta: &ArrayView1<f64>) -> Result<f64> {
        Ok(logistic_loss_and_gradient(theta, self.batch, &self.weights)?.0)
    }

    fn gradient(&self, theta: &ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(logistic_loss_and_gradient(theta, self.batch, &self.weights)?.1)
    }

    fn value_and_gradient(&self, theta: &ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        logistic_loss_and_gradient(theta, self.batch, &self.weights)
    }
}
