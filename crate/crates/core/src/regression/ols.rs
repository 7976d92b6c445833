use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows};

/// Classical least squares with t-based inference.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsInference {
    pub coefficients: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub t_stats: DVector<f64>,
    pub p_values: DVector<f64>,
    pub ci_lo: DVector<f64>,
    pub ci_hi: DVector<f64>,
    /// `RSS / dof`.
    pub residual_variance: f64,
    pub dof: usize,
    pub alpha: f64,
}

/// Least squares of `y` on the columns of `x` through a QR factorization.
///
/// Columns whose QR pivot is negligible relative to the largest pivot are
/// reported as collinear with the columns before them.
pub fn ols_inference(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<OlsInference> {
    check_rows(x, y)?;
    check_finite_matrix(x, "design")?;
    check_finite_vector(y, "response")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (n, k) = x.shape();
    if k == 0 {
        return Err(Error::input("least squares needs at least one column"));
    }
    if n <= k {
        return Err(Error::input(format!(
            "least squares needs more rows than columns ({n} <= {k})"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let largest = r.diagonal().amax();
    let collinear: Vec<usize> = (0..k)
        .filter(|&j| !(r[(j, j)].abs() > 1e-10 * largest))
        .collect();
    if !collinear.is_empty() {
        return Err(Error::Collinear { columns: collinear });
    }
    let qty = qr.q().tr_mul(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Conditioning("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Conditioning("triangular inverse failed".into()))?;
    let dof = n - k;
    let rss = (y - x * &beta).norm_squared();
    let s2 = rss / dof as f64;
    let t_dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    let q = t_dist.inverse_cdf(1.0 - alpha / 2.0);

    let se = DVector::from_fn(k, |j, _| (s2 * r_inv.row(j).norm_squared()).sqrt());
    let t_stats = DVector::from_fn(k, |j, _| {
        if beta[j] == 0.0 {
            0.0
        } else {
            beta[j] / se[j]
        }
    });
    let p_values = DVector::from_fn(k, |j, _| {
        let t = t_stats[j];
        if t.is_infinite() {
            0.0
        } else {
            (2.0 * t_dist.sf(t.abs())).clamp(0.0, 1.0)
        }
    });
    Ok(OlsInference {
        ci_lo: DVector::from_fn(k, |j, _| beta[j] - q * se[j]),
        ci_hi: DVector::from_fn(k, |j, _| beta[j] + q * se[j]),
        coefficients: beta,
        std_errors: se,
        t_stats,
        p_values,
        residual_variance: s2,
        dof,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    #[test]
    fn exact_linear_response() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(10, |i, _| 3.0 - 0.5 * i as f64);
        let fit = ols_inference(&x, &y, 0.05).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[1] + 0.5).abs() < 1e-12);
        assert!(fit.residual_variance < 1e-25);
        assert!(fit.p_values.iter().all(|&p| p < 1e-10));
    }

    #[test]
    fn intercept_only_gives_mean() {
        let y = DVector::from_vec(vec![1.0, 2.0, 6.0, 3.0]);
        let fit = ols_inference(&DMatrix::from_element(4, 1, 1.0), &y, 0.05).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-14);
        assert_eq!(fit.dof, 3);
    }

    #[test]
    fn collinear_columns_are_named() {
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64,
        });
        match ols_inference(&x, &DVector::from_element(6, 1.0), 0.05) {
            Err(Error::Collinear { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let x = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(ols_inference(&x, &DVector::zeros(2), 0.05), Err(Error::Input(_))));
    }

    #[test]
    fn coverage_of_known_coefficients() {
        let mut covered = 0;
        let noise = Normal::new(0.0, 0.1).unwrap();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(100, 2, |_, _| StandardNormal.sample(&mut rng));
            let y = DVector::from_fn(100, |i, _| x[(i, 0)] + 2.0 * x[(i, 1)] + noise.sample(&mut rng));
            let fit = ols_inference(&x, &y, 0.05).unwrap();
            let ok = (0..2).all(|j| {
                let truth = [1.0, 2.0][j];
                (fit.coefficients[j] - truth).abs() <= 3.0 * fit.std_errors[j]
            });
            covered += ok as usize;
            assert!(fit.ci_lo[0] <= fit.coefficients[0] && fit.coefficients[0] <= fit.ci_hi[0]);
        }
        assert!(covered >= 198, "{covered}/200");
    }

    #[test]
    fn p_value_matches_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(30, 3, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(30, |i, _| 0.3 * x[(i, 0)] + { let z: f64 = StandardNormal.sample(&mut rng); z });
        let fit = ols_inference(&x, &y, 0.05).unwrap();
        for j in 0..3 {
            let excludes = fit.ci_lo[j] > 0.0 || fit.ci_hi[j] < 0.0;
            assert_eq!(fit.p_values[j] < 0.05, excludes);
        }
    }
}
