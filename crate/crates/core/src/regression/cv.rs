use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lasso::{LassoFit, LassoOptions, LassoProblem};
use crate::error::{Error, Result};
use crate::linalg::ColumnScaling;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub folds: usize,
    pub points: usize,
    /// Smallest grid penalty as a fraction of the largest.
    pub ratio: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            points: 50,
            ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoCvFit {
    /// Refit on all rows at the chosen penalty.
    pub fit: LassoFit,
    /// Grid in decreasing order.
    pub lambdas: Vec<f64>,
    /// Mean out-of-fold squared error per grid point.
    pub cv_error: Vec<f64>,
}

/// `points` log-spaced penalties from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64], points: usize, ratio: f64) -> Result<Vec<f64>> {
    if points == 0 || !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config("lambda grid needs at least one point and a ratio in (0, 1)"));
    }
    let lmax = LassoProblem::new(x, y)?.lambda_max(weights);
    if lmax == 0.0 {
        return Ok(vec![0.0]);
    }
    if points == 1 {
        return Ok(vec![lmax]);
    }
    let step = ratio.ln() / (points - 1) as f64;
    Ok((0..points).map(|i| lmax * (step * i as f64).exp()).collect())
}

/// K-fold cross-validated Lasso with contiguous row blocks as folds.
///
/// The grid point with the smallest mean out-of-fold squared error wins;
/// among equal errors the larger penalty is preferred.
pub fn lasso_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    lambdas: &[f64],
    weights: Option<&[f64]>,
) -> Result<LassoCvFit> {
    if lambdas.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(Error::config(format!(
            "number of folds must lie in [2, {n}], got {folds}"
        )));
    }
    let p = x.ncols();
    let ones = vec![1.0; p];
    let weights = weights.unwrap_or(&ones);
    let full = LassoProblem::new(x, y)?;
    let mut grid: Vec<f64> = lambdas.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let opts = LassoOptions::default();

    let mut sq_err = vec![0.0; grid.len()];
    for k in 0..folds {
        let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
        let xf = x.rows(lo, hi - lo).into_owned();
        let yf = y.rows(lo, hi - lo).into_owned();
        let train = LassoProblem {
            gram: &full.gram - xf.tr_mul(&xf),
            xty: &full.xty - xf.tr_mul(&yf),
            yty: full.yty - yf.norm_squared(),
        };
        let mut warm: Option<DVector<f64>> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let fit = train.solve(lambda, weights, warm.as_ref(), &opts)?;
            sq_err[g] += (&yf - &xf * &fit.coefficients).norm_squared();
            warm = Some(fit.coefficients);
        }
    }
    let cv_error: Vec<f64> = sq_err.iter().map(|e| e / n as f64).collect();

    let mut best = 0;
    for g in 1..grid.len() {
        if cv_error[g] < cv_error[best] * (1.0 - 1e-12) {
            best = g;
        }
    }
    let fit = full.solve(grid[best], weights, None, &opts)?;
    Ok(LassoCvFit {
        fit,
        lambdas: grid,
        cv_error,
    })
}

/// Cross-validated Lasso on columns scaled to unit mean square. Every
/// column is penalized, a constant one included: in a function library the
/// constant is a candidate term like any other. Returns coefficients in
/// original units and the chosen penalty.
pub fn lasso_cv_scaled(x: &DMatrix<f64>, y: &DVector<f64>, opts: &CvOptions) -> Result<(DVector<f64>, f64)> {
    let scaling = ColumnScaling::fit(x);
    let z = scaling.apply(x);
    let weights = vec![1.0; x.ncols()];
    let grid = lambda_grid(&z, y, &weights, opts.points, opts.ratio)?;
    let cv = lasso_cv(&z, y, opts.folds, &grid, Some(&weights))?;
    let beta = DVector::from_fn(x.ncols(), |j, _| scaling.unscale(j, cv.fit.coefficients[j]));
    Ok((beta, cv.fit.lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::lasso::lasso;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn single_lambda_matches_plain_lasso() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(50, 6, &mut rng);
        let y = DVector::from_fn(50, |_, _| StandardNormal.sample(&mut rng));
        let cv = lasso_cv(&x, &y, 5, &[7.5], None).unwrap();
        assert_eq!(cv.fit, lasso(&x, &y, 7.5).unwrap());
    }

    #[test]
    fn bad_configuration() {
        let x = DMatrix::zeros(10, 2);
        let y = DVector::zeros(10);
        assert!(matches!(lasso_cv(&x, &y, 5, &[], None), Err(Error::Config(_))));
        assert!(matches!(lasso_cv(&x, &y, 1, &[1.0], None), Err(Error::Config(_))));
    }

    #[test]
    fn grid_is_decreasing_from_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(30, 4, &mut rng);
        let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut rng));
        let grid = lambda_grid(&x, &y, &[1.0; 4], 50, 1e-4).unwrap();
        assert_eq!(grid.len(), 50);
        assert!((grid[0] - 2.0 * x.tr_mul(&y).amax()).abs() < 1e-12 * grid[0]);
        assert!((grid[49] / grid[0] - 1e-4).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn pure_noise_gives_sparse_selection() {
        let mut sparse = 0;
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = gaussian(100, 10, &mut rng);
            let y = DVector::from_fn(100, |_, _| StandardNormal.sample(&mut rng));
            // Grid starting well above the noise level.
            let top = 4.0 * x.tr_mul(&y).amax();
            let grid: Vec<f64> = (0..30).map(|i| top * 0.8f64.powi(i)).collect();
            let cv = lasso_cv(&x, &y, 5, &grid, None).unwrap();
            if cv.fit.support().len() <= 2 {
                sparse += 1;
            }
        }
        assert!(sparse >= 320, "only {sparse}/400 sparse selections");
    }

    #[test]
    fn noiseless_sparse_signal_keeps_true_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(80, 8, &mut rng);
        let y = x.column(1) * 3.0 - x.column(5) * 2.0;
        let grid = lambda_grid(&x, &y, &[1.0; 8], 50, 1e-6).unwrap();
        let cv = lasso_cv(&x, &y, 4, &grid, None).unwrap();
        let support = cv.fit.support();
        assert!(support.contains(&1) && support.contains(&5));
    }
}
