//! Small numeric helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-sided normal tail probability `2 * (1 - Phi(|z|))`, computed through
/// `erfc` so large statistics do not round to zero early.
pub fn normal_two_sided(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// p-value of `estimate / std_error` against a standard normal.
///
/// A zero estimate is never significant, even with a zero standard error.
pub fn normal_p_value(estimate: f64, std_error: f64) -> f64 {
    if estimate == 0.0 {
        return 1.0;
    }
    if std_error == 0.0 {
        return 0.0;
    }
    normal_two_sided(estimate / std_error)
}

/// Upper `1 - alpha/2` quantile of the standard normal.
pub fn normal_quantile_two_sided(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

pub(crate) fn check_finite_matrix(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} contains non-finite entries")))
    }
}

pub(crate) fn check_finite_vector(y: &DVector<f64>, what: &str) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} contains non-finite entries")))
    }
}

pub(crate) fn check_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::input(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::input("empty design"));
    }
    Ok(())
}

/// Column scaling that makes every column satisfy `|x_j|^2 / n = 1`.
///
/// Constant non-zero columns (an intercept) are detected so that solvers can
/// leave them unpenalized. Columns are scaled, not centered, so the intercept
/// stays an ordinary regressor and keeps its own inference.
#[derive(Debug, Clone)]
pub struct ColumnScaling {
    pub scale: Vec<f64>,
    pub constant: Vec<bool>,
}

impl ColumnScaling {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut scale = Vec::with_capacity(x.ncols());
        let mut constant = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let ms = col.norm_squared() / n;
            scale.push(if ms > 0.0 { ms.sqrt() } else { 1.0 });
            let first = col[0];
            constant.push(first != 0.0 && col.iter().all(|&v| v == first));
        }
        Self { scale, constant }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col /= self.scale[j];
        }
        z
    }

    /// Penalty weights: zero for constant columns, one otherwise.
    pub fn penalty_weights(&self) -> Vec<f64> {
        self.constant
            .iter()
            .map(|&c| if c { 0.0 } else { 1.0 })
            .collect()
    }

    /// Maps a coefficient on the scaled design back to natural units.
    pub fn unscale(&self, j: usize, value: f64) -> f64 {
        value / self.scale[j]
    }
}

/// Solves the symmetric positive definite system `a x = b`.
pub(crate) fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Conditioning(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

pub(crate) fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Conditioning(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
