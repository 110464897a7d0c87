//! Kernel functions of order `l` and the induced smoothed surrogate
//! loss.
//!
//! The surrogate replaces the 0-1 loss by the upper-tail mass of a
//! kernel, `L_delta(u) = integral of K over [u/delta, inf)`, so the
//! empirical risk becomes differentiable with derivative
//! `-K(u/delta)/delta`. Three families ship:
//!
//! - `gaussian`: the standard normal density, closed-form tail via
//!   `erfc`; order 1.
//! - `epanechnikov`: `0.75 (1 - t^2)` on `[-1, 1]`, closed-form
//!   cubic tail; order 1; exercises the bounded-support case.
//! - `higher_order(l)`: a polynomial in `t^2` times the normal
//!   density, with coefficients solved from the moment system so the
//!   first `l` moments vanish. Its tail also has a closed form through
//!   the recursion `I_m(x) = x^{m-1} phi(x) + (m-1) I_{m-2}(x)`.
//!
//! All operations here are pure; a constructed [`KernelSpec`] is
//! immutable and safe to share across threads.

use crate::error::{Error, Result};
use crate::quad;
use statrs::function::erf::erfc;

const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density.
#[inline]
pub fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / SQRT_2PI
}

/// Standard normal upper tail `P(Z >= x)`.
#[inline]
pub fn normal_upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Gaussian,
    Epanechnikov,
    /// Polynomial-times-gaussian kernel whose first `l` moments vanish.
    HigherOrder(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Bounded { lo: f64, hi: f64 },
    Unbounded { tail_coefficient: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Largest `l` with vanishing moments `1..=l`.
    pub order: u32,
    pub support: Support,
    /// Coefficients of the even polynomial for `HigherOrder`: the
    /// kernel is `sum_m coeffs[m] * t^{2m} * phi(t)`.
    coeffs: Vec<f64>,
}

impl KernelSpec {
    /// Standard gaussian kernel. The tail coefficient defaults to
    /// `sqrt(log N)` at the default budget `N = 2000`; use
    /// [`KernelSpec::gaussian_for_budget`] to match another budget.
    pub fn gaussian() -> Self {
        Self::gaussian_for_budget(2000.0)
    }

    pub fn gaussian_for_budget(n: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            order: 1,
            support: Support::Unbounded {
                tail_coefficient: n.max(std::f64::consts::E).ln().sqrt(),
            },
            coeffs: vec![1.0],
        }
    }

    pub fn epanechnikov() -> Self {
        KernelSpec {
            family: KernelFamily::Epanechnikov,
            order: 1,
            support: Support::Bounded { lo: -1.0, hi: 1.0 },
            coeffs: Vec::new(),
        }
    }

    /// Kernel of order `l` built from the moment system: with
    /// `M = l / 2`, solve for `a_0..a_M` in
    /// `sum_m a_m mu_{2(j+m)} = [j == 0]` for `j = 0..=M`, where
    /// `mu_{2j} = (2j-1)!!` are the gaussian even moments.
    pub fn higher_order(l: u32) -> Result<Self> {
        if l == 0 {
            return Err(Error::Argument("kernel order must be >= 1".into()));
        }
        let m = (l / 2) as usize;
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        rhs[0] = 1.0;
        for (j, row) in a.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell = gaussian_even_moment(j + k);
            }
        }
        let coeffs = solve_dense(&mut a, &mut rhs)?;
        Ok(KernelSpec {
            family: KernelFamily::HigherOrder(l),
            order: l,
            support: Support::Unbounded {
                tail_coefficient: (2000.0f64).ln().sqrt(),
            },
            coeffs,
        })
    }

    /// Parse a config-style name: `gaussian`, `epanechnikov`,
    /// `higher_order(l)`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "gaussian" => Ok(Self::gaussian()),
            "epanechnikov" => Ok(Self::epanechnikov()),
            _ => {
                if let Some(rest) = name.strip_prefix("higher_order(") {
                    if let Some(num) = rest.strip_suffix(')') {
                        let l: u32 = num.trim().parse().map_err(|_| {
                            Error::Argument(format!("bad kernel order in `{name}`"))
                        })?;
                        return Self::higher_order(l);
                    }
                }
                Err(Error::Argument(format!("unknown kernel `{name}`")))
            }
        }
    }

    pub fn with_tail_coefficient(mut self, c: f64) -> Self {
        if let Support::Unbounded { tail_coefficient } = &mut self.support {
            *tail_coefficient = c;
        }
        self
    }

    /// Kernel density `K(t)`.
    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian => phi(t),
            KernelFamily::Epanechnikov => {
                if t.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - t * t)
                }
            }
            KernelFamily::HigherOrder(_) => {
                let t2 = t * t;
                let mut poly = 0.0;
                for &c in self.coeffs.iter().rev() {
                    poly = poly * t2 + c;
                }
                poly * phi(t)
            }
        }
    }

    /// Upper-tail mass `integral of K over [x, inf)`, in closed form.
    #[inline]
    pub fn upper_tail(&self, x: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian => normal_upper_tail(x),
            KernelFamily::Epanechnikov => {
                if x <= -1.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else {
                    0.5 - 0.75 * x + 0.25 * x.powi(3)
                }
            }
            KernelFamily::HigherOrder(_) => {
                // I_0 = Q(x), I_1 = phi(x), I_m = x^{m-1} phi(x) + (m-1) I_{m-2}
                let q = normal_upper_tail(x);
                let p = phi(x);
                let mut tail = 0.0;
                for (m, &c) in self.coeffs.iter().enumerate() {
                    tail += c * even_tail_moment(2 * m, x, q, p);
                }
                tail
            }
        }
    }
}

/// `integral of t^m phi(t) over [x, inf)` for even `m`:
/// `I_0 = Q(x)`, `I_m = x^{m-1} phi(x) + (m-1) I_{m-2}`.
fn even_tail_moment(m: usize, x: f64, q: f64, p: f64) -> f64 {
    if m == 0 {
        q
    } else {
        x.powi(m as i32 - 1) * p + (m as f64 - 1.0) * even_tail_moment(m - 2, x, q, p)
    }
}

fn gaussian_even_moment(j: usize) -> f64 {
    // mu_{2j} = (2j - 1)!!
    let mut acc = 1.0;
    let mut i = 1;
    while i < 2 * j {
        acc *= i as f64;
        i += 2;
    }
    acc
}

/// Gaussian elimination with partial pivoting for the tiny moment
/// systems.
fn solve_dense(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Numerical("singular moment system".into()));
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Smoothed surrogate loss: upper-tail kernel mass at `u / delta`.
/// Non-increasing in `u`; equals 1/2 at `u = 0` for symmetric kernels.
pub fn surrogate_loss(u: f64, delta: f64, kernel: &KernelSpec) -> Result<f64> {
    check_delta(delta)?;
    Ok(kernel.upper_tail(u / delta))
}

/// Exact derivative of [`surrogate_loss`] in `u`: `-K(u/delta)/delta`.
pub fn surrogate_loss_deriv(u: f64, delta: f64, kernel: &KernelSpec) -> Result<f64> {
    check_delta(delta)?;
    Ok(-kernel.density(u / delta) / delta)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!(
            "bandwidth delta must be positive, got {delta}"
        )));
    }
    Ok(())
}

/// Quadrature report of the kernel's defining moments.
#[derive(Debug, Clone)]
pub struct KernelReport {
    /// `integral of K` and its residual against 1.
    pub total_mass: f64,
    pub mass_residual: f64,
    /// `(j, integral of t^j K)` for `j = 1..=order`; targets are 0.
    pub moment_residuals: Vec<(u32, f64)>,
    /// `integral of K^2`.
    pub k_squared: f64,
    /// Maximum of `|K|` over the quadrature range.
    pub sup_abs: f64,
    /// For unbounded kernels, `integral of |K| over [C_N/2, inf)`.
    pub tail_integral: Option<f64>,
}

impl KernelReport {
    pub fn max_residual(&self) -> f64 {
        let mut worst = self.mass_residual.abs();
        for (_, r) in &self.moment_residuals {
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Verify the kernel's moment conditions by adaptive quadrature.
pub fn verify_kernel(kernel: &KernelSpec) -> KernelReport {
    let (lo, hi) = quadrature_range(kernel);
    let tol = 1e-10;
    let total_mass = quad::integrate(|t| kernel.density(t), lo, hi, tol);
    let mut moment_residuals = Vec::new();
    for j in 1..=kernel.order {
        let m = quad::integrate(|t| t.powi(j as i32) * kernel.density(t), lo, hi, tol);
        moment_residuals.push((j, m));
    }
    let k_squared = quad::integrate(|t| kernel.density(t).powi(2), lo, hi, tol);
    let steps = 4000;
    let sup_abs = (0..=steps)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / steps as f64;
            kernel.density(t).abs()
        })
        .fold(0.0, f64::max);
    let tail_integral = match kernel.support {
        Support::Unbounded { tail_coefficient } => Some(quad::integrate(
            |t| kernel.density(t).abs(),
            tail_coefficient / 2.0,
            hi,
            tol,
        )),
        Support::Bounded { .. } => None,
    };
    KernelReport {
        total_mass,
        mass_residual: total_mass - 1.0,
        moment_residuals,
        k_squared,
        sup_abs,
        tail_integral,
    }
}

fn quadrature_range(kernel: &KernelSpec) -> (f64, f64) {
    match kernel.support {
        Support::Bounded { lo, hi } => (lo, hi),
        // phi(16) ~ 1e-57 crushes any polynomial factor of interest
        Support::Unbounded { .. } => (-16.0, 16.0),
    }
}
