//! Inference for sparse regression: the debiased Lasso, the bias-corrected
//! ridge projection estimator, and Holm's multiplicity adjustment.
//!
//! Both estimators work on a column-scaled copy of the design with
//! `|x_j|^2 / n = 1`; constant columns are left unpenalized. Reported
//! estimates and standard errors are in the original units.

mod debiased;
mod holm;
mod mmatrix;
mod ridge;

pub use debiased::{debiased_lasso, DebiasedOptions, DebiasedReport};
pub use holm::holm_adjust;
pub use mmatrix::{compute_m, row_violation, MMatrix};

pub use ridge::{bias_corrected_ridge, RidgeOptions, RidgeReport};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows, median, ColumnScaling};
use crate::regression::scaled_lasso_weighted;

/// How the noise level entering the standard errors is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaEstimator {
    /// Residual scale of the scaled Lasso.
    ScaledLasso,
    /// Robust fit to the bulk of the standardized estimates: a MAD estimate
    /// picks out the coordinates that look null, and the noise level is
    /// matched to their spread. Falls back to the scaled Lasso when no
    /// coordinate looks null.
    EmpiricalNull,
    /// Long-run standard deviation of the Lasso residuals: a Bartlett-kernel
    /// sum of residual autocovariances with an AR(1) plug-in bandwidth.
    /// Suited to time-ordered rows whose errors are serially correlated,
    /// such as derivatives of smoothed trajectories.
    LongRun,
    /// A known value, in the units of the response.
    Fixed(f64),
}

/// Design scaled to unit mean square columns, with its covariance.
pub(crate) struct Prepared {
    pub z: DMatrix<f64>,
    pub scaling: ColumnScaling,
    pub weights: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl Prepared {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_rows(x, y)?;
        check_finite_matrix(x, "design")?;
        check_finite_vector(y, "response")?;
        if x.ncols() == 0 {
            return Err(Error::input("design has no columns"));
        }
        let scaling = ColumnScaling::fit(x);
        let z = scaling.apply(x);
        let cov = z.tr_mul(&z) / x.nrows() as f64;
        let weights = scaling.penalty_weights();
        Ok(Self {
            z,
            scaling,
            weights,
            cov,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// `sqrt(log p / n)`, the rate every default tuning constant multiplies.
    pub fn rate(&self) -> f64 {
        ((self.p() as f64).ln() / self.n() as f64).sqrt()
    }

    pub fn scaled_lasso(&self, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match scaled_lasso_weighted(&self.z, y, &self.weights) {
            Ok(est) => Ok((est.sigma_hat, est.coefficients)),
            Err(Error::ScaledLassoConvergence {
                sigma, coefficients, ..
            }) => {
                log::warn!("scaled lasso did not converge; using the last iterate (sigma = {sigma:.4e})");
                Ok((sigma, DVector::from_vec(coefficients)))
            }
            Err(e) => Err(e),
        }
    }
}

/// Noise level implied by the coordinates that look null.
///
/// `estimates[j]` is assumed to have variance `sigma^2 var[j] / n` when the
/// true coefficient is zero.
pub(crate) fn empirical_null_sigma(estimates: &[f64], var: &[f64], n: usize) -> Option<f64> {
    let nf = n as f64;
    let pairs: Vec<(f64, f64)> = estimates
        .iter()
        .zip(var)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&e, &v)| (e, v))
        .collect();
    let mut ynorm: Vec<f64> = pairs.iter().map(|(e, v)| nf.sqrt() * e / v.sqrt()).collect();
    if ynorm.len() < 2 {
        return None;
    }
    let centre = median(&mut ynorm.clone());
    let mut dev: Vec<f64> = ynorm.iter().map(|v| (v - centre).abs()).collect();
    let s0 = 1.4826 * median(&mut dev);
    if !(s0 > 0.0) {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((e, v), yn) in pairs.iter().zip(ynorm.iter_mut()) {
        if yn.abs() < 3.0 * s0 {
            num += e * e;
            den += v;
        }
    }
    (den > 0.0).then(|| (nf * num / den).sqrt())
}

/// Bartlett-kernel long-run standard deviation of a time-ordered series.
///
/// The bandwidth is `1.1447 (a n)^(1/3)` with
/// `a = 4 rho^2 / ((1 - rho)^2 (1 + rho)^2)` from a fitted AR(1) coefficient.
pub fn long_run_sigma(resid: &[f64]) -> f64 {
    long_run_variance(resid).sqrt()
}

/// Bartlett-kernel long-run variance `g0 + 2 sum_k (1 - k/(L+1)) g_k` of a
/// series taken as mean zero, with the AR(1) plug-in bandwidth.
pub fn long_run_variance(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let gamma = |k: usize| series[k..].iter().zip(series).map(|(a, b)| a * b).sum::<f64>() / nf;
    let g0 = gamma(0);
    if g0 == 0.0 {
        return 0.0;
    }
    let rho = (gamma(1) / g0).clamp(-0.999, 0.999);
    let a = 4.0 * rho * rho / ((1.0 - rho).powi(2) * (1.0 + rho).powi(2));
    let lags = ((1.1447 * (a * nf).cbrt()).ceil() as usize).min(n - 1);
    let mut total = g0;
    for k in 1..=lags {
        total += 2.0 * (1.0 - k as f64 / (lags + 1) as f64) * gamma(k);
    }
    total.max(0.0)
}

/// Autocorrelation-robust variances of `sum_i A[j, i] e_i / n`, one per row of `a`.
pub(crate) fn sandwich_variances(a: &DMatrix<f64>, resid: &[f64]) -> Vec<f64> {
    let n = resid.len() as f64;
    (0..a.nrows())
        .map(|j| {
            let u: Vec<f64> = resid.iter().enumerate().map(|(i, e)| a[(j, i)] * e).collect();
            long_run_variance(&u) / n
        })
        .collect()
}
