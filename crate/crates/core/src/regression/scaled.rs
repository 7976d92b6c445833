use nalgebra::{DMatrix, DVector};

use super::lasso::{LassoOptions, LassoProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub sigma_hat: f64,
    /// Lasso coefficients at the final penalty.
    pub coefficients: DVector<f64>,
    /// Universal rate `sqrt(2 log p / n)`.
    pub lambda0: f64,
    pub iterations: usize,
}

/// Scaled Lasso on every column, see [`scaled_lasso_weighted`].
pub fn scaled_lasso(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<NoiseEstimate> {
    scaled_lasso_weighted(x, y, &vec![1.0; x.ncols()])
}

/// Jointly estimates coefficients and noise level by alternating
///
/// * `b <- argmin |y - X b|^2 + 2 n lambda0 sigma sum_j w_j |b_j|`
/// * `sigma <- |y - X b| / sqrt(n)`
///
/// with `lambda0 = sqrt(2 log p / n)`, until `sigma` moves by less than
/// `1e-6 |y| / sqrt(n)`. The design is expected to have columns with
/// `|x_j|^2 / n = 1`.
pub fn scaled_lasso_weighted(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64]) -> Result<NoiseEstimate> {
    const MAX_ALTERNATIONS: usize = 500;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::input("scaled lasso needs at least two rows"));
    }
    let problem = LassoProblem::new(x, y)?;
    let p = x.ncols().max(1) as f64;
    let nf = n as f64;
    let lambda0 = (2.0 * p.ln() / nf).sqrt();
    let scale = y.norm() / nf.sqrt();
    if scale == 0.0 {
        return Ok(NoiseEstimate {
            sigma_hat: 0.0,
            coefficients: DVector::zeros(x.ncols()),
            lambda0,
            iterations: 0,
        });
    }
    let opts = LassoOptions::default();
    let mut sigma = scale;
    let mut beta: Option<DVector<f64>> = None;
    for it in 1..=MAX_ALTERNATIONS {
        let fit = problem.solve(2.0 * nf * lambda0 * sigma, weights, beta.as_ref(), &opts)?;
        let rss = (y - x * &fit.coefficients).norm_squared();
        let next = (rss / nf).sqrt();
        beta = Some(fit.coefficients);
        if (next - sigma).abs() < 1e-6 * scale {
            return Ok(NoiseEstimate {
                sigma_hat: next,
                coefficients: beta.expect("set above"),
                lambda0,
                iterations: it,
            });
        }
        sigma = next;
    }
    Err(Error::ScaledLassoConvergence {
        iterations: MAX_ALTERNATIONS,
        sigma,
        coefficients: beta.map(|b| b.iter().copied().collect()).unwrap_or_default(),
    })
}
