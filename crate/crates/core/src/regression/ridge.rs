use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows, spd_solve};

/// `(X'X + lambda I)^{-1} X'y` through a Cholesky solve.
pub fn ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    ridge_weighted(x, y, lambda, &vec![1.0; x.ncols()])
}

/// `(X'X + lambda W)^{-1} X'y` with `W = diag(weights)`; zero weights leave
/// a column unpenalized.
pub fn ridge_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
) -> Result<DVector<f64>> {
    check_rows(x, y)?;
    check_finite_matrix(x, "design")?;
    check_finite_vector(y, "response")?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("ridge penalty must be non-negative, got {lambda}")));
    }
    if weights.len() != x.ncols() {
        return Err(Error::config("one ridge weight per column is required"));
    }
    let mut a = x.tr_mul(x);
    for (j, w) in weights.iter().enumerate() {
        a[(j, j)] += lambda * w;
    }
    spd_solve(&a, &x.tr_mul(y), "ridge normal matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_design() {
        let b = ridge(&DMatrix::identity(2, 2), &DVector::from_vec(vec![2.0, 2.0]), 1.0).unwrap();
        assert!((b - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn small_penalty_approaches_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 4, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(30, |_, _| StandardNormal.sample(&mut rng));
        let ols = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let b = ridge(&x, &y, 1e-10).unwrap();
        assert!((b - ols).amax() < 1e-8);
    }

    #[test]
    fn zero_penalty_on_rank_deficient_design_fails() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ridge(&x, &y, 0.0), Err(Error::Conditioning(_))));
        assert!(ridge(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn normal_equations_and_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(25, 6, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(25, |_, _| StandardNormal.sample(&mut rng));
        let mut last = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let b = ridge(&x, &y, lambda).unwrap();
            let lhs = (x.tr_mul(&x) + DMatrix::identity(6, 6) * lambda) * &b;
            let rhs = x.tr_mul(&y);
            assert!((lhs - &rhs).norm() / rhs.norm() < 1e-8);
            assert!(b.norm() < last);
            last = b.norm();
        }
    }
}
