use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{compute_m, empirical_null_sigma, holm_adjust, long_run_sigma, sandwich_variances, Prepared, SigmaEstimator};
use crate::error::{Error, Result};
use crate::linalg::{normal_p_value, normal_quantile_two_sided};
use crate::regression::{LassoOptions, LassoProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebiasedOptions {
    /// Penalty of `|y - Z b|^2 + lambda |b|_1` on the scaled design.
    /// Defaults to `2 n c sigma sqrt(log p / n)`.
    pub lambda: Option<f64>,
    /// Defaults to `a sqrt(log p / n)`.
    pub mu: Option<f64>,
    pub lambda_const: f64,
    pub mu_const: f64,
    pub sigma: SigmaEstimator,
    pub alpha: f64,
    /// Select on Holm-adjusted rather than raw p-values.
    pub holm: bool,
}

impl Default for DebiasedOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            mu: None,
            lambda_const: 2.0,
            mu_const: 1.0,
            sigma: SigmaEstimator::ScaledLasso,
            alpha: 0.05,
            holm: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebiasedReport {
    pub estimates: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub ci_lo: DVector<f64>,
    pub ci_hi: DVector<f64>,
    pub p_values: DVector<f64>,
    pub adjusted_p: Option<DVector<f64>>,
    pub selected: Vec<bool>,
    /// Lasso fit being corrected, in original units.
    pub lasso_coefficients: DVector<f64>,
    pub sigma_hat: f64,
    pub lambda: f64,
    pub mu: f64,
    pub mu_used: Vec<f64>,
    /// Coordinates whose row of `M` fell back to `e_i / S_ii`.
    pub flagged: Vec<usize>,
    pub alpha: f64,
}

/// Debiased Lasso `b + M Z'(y - Z b) / n` with normal confidence intervals
/// `b_j +- z_{1-alpha/2} sigma sqrt((M S M')_jj / n)` and matching
/// two-sided p-values.
pub fn debiased_lasso(x: &DMatrix<f64>, y: &DVector<f64>, opts: &DebiasedOptions) -> Result<DebiasedReport> {
    let q = normal_quantile_two_sided(opts.alpha)?;
    let prep = Prepared::new(x, y)?;
    let (n, p) = (prep.n(), prep.p());
    let nf = n as f64;

    let (sigma_init, _) = match opts.sigma {
        SigmaEstimator::Fixed(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config(format!("fixed sigma must be positive, got {s}")));
            }
            (s, DVector::zeros(p))
        }
        _ => prep.scaled_lasso(y)?,
    };
    let lambda = match opts.lambda {
        Some(l) if l >= 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::config(format!("lambda must be non-negative, got {l}"))),
        None => 2.0 * nf * opts.lambda_const * sigma_init * prep.rate(),
    };
    let mu = match opts.mu {
        Some(m) => m,
        None => opts.mu_const * prep.rate(),
    };

    let problem = LassoProblem::new(&prep.z, y)?;
    let fit = problem.solve(lambda, &prep.weights, None, &LassoOptions::default())?;
    let beta = fit.coefficients;

    let mm = compute_m(&prep.cov, mu)?;
    for &i in &mm.flagged() {
        log::warn!("debiasing row {i} is infeasible; its interval is unreliable");
    }
    let resid = y - &prep.z * &beta;
    let debiased = &beta + &mm.m * prep.z.tr_mul(&resid) / nf;
    let a = &mm.m * &prep.cov * mm.m.transpose();
    let var: Vec<f64> = (0..p).map(|j| a[(j, j)].max(0.0)).collect();

    let sigma_hat = match opts.sigma {
        SigmaEstimator::EmpiricalNull => {
            empirical_null_sigma(debiased.as_slice(), &var, n).unwrap_or(sigma_init)
        }
        SigmaEstimator::LongRun => long_run_sigma(resid.as_slice()),
        _ => sigma_init,
    };

    let se: Vec<f64> = match opts.sigma {
        SigmaEstimator::LongRun => {
            let scores = &mm.m * prep.z.transpose();
            sandwich_variances(&scores, resid.as_slice()).iter().map(|v| v.sqrt()).collect()
        }
        _ => var.iter().map(|v| sigma_hat * (v / nf).sqrt()).collect(),
    };
    let mut estimates = DVector::zeros(p);
    let mut std_errors = DVector::zeros(p);
    for j in 0..p {
        estimates[j] = prep.scaling.unscale(j, debiased[j]);
        std_errors[j] = prep.scaling.unscale(j, se[j]);
    }
    let p_values = DVector::from_fn(p, |j, _| normal_p_value(estimates[j], std_errors[j]));
    let adjusted_p = if opts.holm {
        Some(DVector::from_vec(holm_adjust(p_values.as_slice())?))
    } else {
        None
    };
    let decision = adjusted_p.as_ref().unwrap_or(&p_values);
    Ok(DebiasedReport {
        ci_lo: &estimates - &std_errors * q,
        ci_hi: &estimates + &std_errors * q,
        selected: decision.iter().map(|&pv| pv <= opts.alpha).collect(),
        lasso_coefficients: DVector::from_fn(p, |j, _| prep.scaling.unscale(j, beta[j])),
        estimates,
        std_errors,
        p_values,
        adjusted_p,
        sigma_hat,
        lambda,
        mu,
        flagged: mm.flagged(),
        mu_used: mm.mu_used,
        alpha: opts.alpha,
    })
}
