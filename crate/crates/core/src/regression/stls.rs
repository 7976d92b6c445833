use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows};

#[derive(Debug, Clone, PartialEq)]
pub struct StlsFit {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    /// Every coefficient was thresholded away.
    pub empty: bool,
}

/// Sequentially thresholded least squares: fit, zero every coefficient with
/// magnitude below `threshold`, refit on the survivors, and repeat until the
/// active set stops changing.
pub fn stls(x: &DMatrix<f64>, y: &DVector<f64>, threshold: f64, max_iters: usize) -> Result<StlsFit> {
    check_rows(x, y)?;
    check_finite_matrix(x, "design")?;
    check_finite_vector(y, "response")?;
    if !(threshold >= 0.0) {
        return Err(Error::config(format!("threshold must be non-negative, got {threshold}")));
    }
    let p = x.ncols();
    let mut active: Vec<usize> = (0..p).collect();
    let mut iterations = 0;
    let beta = loop {
        iterations += 1;
        let mut beta = least_squares(x, y, &active)?;
        let next: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| beta[j].abs() >= threshold)
            .collect();
        if next.len() == active.len() || iterations >= max_iters.max(1) {
            for j in 0..p {
                if !next.contains(&j) {
                    beta[j] = 0.0;
                }
            }
            break beta;
        }
        active = next;
        if active.is_empty() {
            break DVector::zeros(p);
        }
    };
    let empty = beta.iter().all(|&b| b == 0.0);
    Ok(StlsFit {
        coefficients: beta,
        iterations,
        empty,
    })
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, active: &[usize]) -> Result<DVector<f64>> {
    let sub = x.select_columns(active);
    let sol = sub
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::Conditioning(e.to_string()))?;
    let mut beta = DVector::zeros(x.ncols());
    for (a, &j) in active.iter().enumerate() {
        beta[j] = sol[a];
    }
    Ok(beta)
}
