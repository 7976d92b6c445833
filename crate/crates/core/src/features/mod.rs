//! Candidate-term libraries and derivative estimation.

mod basis;
mod spline;

pub use basis::{build_basis, evaluate_library, DesignMatrix, MonomialBasis};
pub use spline::{
    fit_columns, fit_smoothing_spline, gcv_grid, gcv_score, Smoothing, SmoothingSpline,
    GCV_GRID_DECADES, GCV_GRID_POINTS,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Estimated time derivatives, one column per state component.
#[derive(Debug, Clone)]
pub struct DerivativeMatrix {
    pub xdot: DMatrix<f64>,
}

/// Spline values at `times`, one column per spline.
pub fn smoothed_states(splines: &[SmoothingSpline], times: &[f64]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(times.len(), splines.len());
    for (j, s) in splines.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            out[(i, j)] = s.value(t)?;
        }
    }
    Ok(out)
}

/// Analytic first derivative of each spline at `times`.
pub fn estimate_derivatives(splines: &[SmoothingSpline], times: &[f64]) -> Result<DerivativeMatrix> {
    let mut xdot = DMatrix::zeros(times.len(), splines.len());
    for (j, s) in splines.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            xdot[(i, j)] = s.derivative(t)?;
        }
    }
    Ok(DerivativeMatrix { xdot })
}

/// Second-order finite differences: three-point central stencils inside,
/// three-point one-sided stencils at the ends. Handles uneven spacing.
pub fn finite_difference_derivatives(times: &[f64], states: &DMatrix<f64>) -> Result<DerivativeMatrix> {
    let n = times.len();
    if n < 3 || states.nrows() != n {
        return Err(Error::input(
            "finite differences need at least 3 rows matching the time grid",
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::input("times must be strictly increasing"));
    }
    let mut xdot = DMatrix::zeros(n, states.ncols());
    for i in 0..n {
        let (a, b, c) = match i {
            0 => (0, 1, 2),
            _ if i == n - 1 => (n - 3, n - 2, n - 1),
            _ => (i - 1, i, i + 1),
        };
        let w = lagrange_derivative_weights(times[a], times[b], times[c], times[i]);
        for j in 0..states.ncols() {
            xdot[(i, j)] = w[0] * states[(a, j)] + w[1] * states[(b, j)] + w[2] * states[(c, j)];
        }
    }
    Ok(DerivativeMatrix { xdot })
}

/// Weights of the derivative at `x` of the quadratic through three nodes.
fn lagrange_derivative_weights(t0: f64, t1: f64, t2: f64, x: f64) -> [f64; 3] {
    [
        ((x - t1) + (x - t2)) / ((t0 - t1) * (t0 - t2)),
        ((x - t0) + (x - t2)) / ((t1 - t0) * (t1 - t2)),
        ((x - t0) + (x - t1)) / ((t2 - t0) * (t2 - t1)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn constant_data_has_zero_derivative() {
        let t = times(20);
        let y = vec![3.0; 20];
        let s = fit_smoothing_spline(&t, &y, Smoothing::Gcv).unwrap();
        let d = estimate_derivatives(&[s], &t).unwrap();
        assert!(d.xdot.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn linear_data_has_constant_derivative() {
        let t = times(20);
        let y: Vec<f64> = t.iter().map(|t| 2.0 - 0.5 * t).collect();
        let s = fit_smoothing_spline(&t, &y, Smoothing::Gcv).unwrap();
        let d = estimate_derivatives(&[s.clone()], &t).unwrap();
        assert!(d.xdot.iter().all(|v| (v + 0.5).abs() < 1e-8));
        let sm = smoothed_states(&[s], &t).unwrap();
        for (i, ti) in t.iter().enumerate() {
            assert!((sm[(i, 0)] - (2.0 - 0.5 * ti)).abs() < 1e-9);
        }
    }

    #[test]
    fn extrapolation_is_an_error() {
        let t = times(10);
        let s = fit_smoothing_spline(&t, &t, Smoothing::Fixed(1.0)).unwrap();
        assert!(estimate_derivatives(&[s], &[0.5, 1.5]).is_err());
    }

    #[test]
    fn finite_differences_are_exact_on_quadratics() {
        let t: Vec<f64> = [0.0, 0.1, 0.25, 0.5, 0.6, 1.0].to_vec();
        let x = DMatrix::from_fn(t.len(), 1, |i, _| 3.0 * t[i] * t[i] - t[i]);
        let d = finite_difference_derivatives(&t, &x).unwrap();
        for (i, ti) in t.iter().enumerate() {
            assert!((d.xdot[(i, 0)] - (6.0 * ti - 1.0)).abs() < 1e-10);
        }
    }
}
