use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows};

/// Result of minimizing `|y - X b|^2 + lambda * sum_j w_j |b_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    /// Coordinate-descent sweeps used.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every sweep (and after the final active-set solve).
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop once the largest coordinate change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

/// Sufficient statistics `X'X`, `X'y`, `y'y` for repeated Lasso solves on
/// the same data (paths, cross-validation, scaled Lasso).
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl LassoProblem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        check_rows(x, y)?;
        check_finite_matrix(x, "design")?;
        check_finite_vector(y, "response")?;
        Ok(Self {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.norm_squared(),
        })
    }

    pub fn ncols(&self) -> usize {
        self.xty.len()
    }

    pub fn objective(&self, beta: &DVector<f64>, lambda: f64, weights: &[f64]) -> f64 {
        let quad = self.yty - 2.0 * self.xty.dot(beta) + beta.dot(&(&self.gram * beta));
        let pen: f64 = beta.iter().zip(weights).map(|(b, w)| w * b.abs()).sum();
        quad + lambda * pen
    }

    /// Cyclic coordinate descent, then an exact solve on the active set
    /// with fixed signs, which is kept when it satisfies the optimality
    /// conditions.
    pub fn solve(
        &self,
        lambda: f64,
        weights: &[f64],
        warm_start: Option<&DVector<f64>>,
        opts: &LassoOptions,
    ) -> Result<LassoFit> {
        let p = self.ncols();
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::config(format!("lambda must be non-negative, got {lambda}")));
        }
        if weights.len() != p || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("penalty weights must be non-negative, one per column"));
        }
        let mut beta = match warm_start {
            Some(b) if b.len() == p => b.clone(),
            _ => DVector::zeros(p),
        };
        // grad = X'y - X'X beta
        let mut grad = &self.xty - &self.gram * &beta;
        let mut trace = vec![self.objective(&beta, lambda, weights)];
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut max_change = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let old = beta[j];
                let rho = grad[j] + gjj * old;
                let new = soft_threshold(rho, 0.5 * lambda * weights[j]) / gjj;
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    grad.axpy(-delta, &self.gram.column(j), 1.0);
                    max_change = max_change.max(delta.abs());
                }
            }
            trace.push(self.objective(&beta, lambda, weights));
            if max_change < opts.tol {
                converged = true;
                break;
            }
        }
        if let Some(polished) = self.polish(&beta, lambda, weights) {
            let obj = self.objective(&polished, lambda, weights);
            let last = *trace.last().expect("trace is non-empty");
            if obj <= last + 1e-12 * last.abs().max(1.0) {
                beta = polished;
                trace.push(obj.min(last));
            }
        }
        Ok(LassoFit {
            coefficients: beta,
            lambda,
            iterations: sweeps,
            converged,
            objective_trace: trace,
        })
    }

    fn polish(&self, beta: &DVector<f64>, lambda: f64, weights: &[f64]) -> Option<DVector<f64>> {
        let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        if active.is_empty() {
            return None;
        }
        let k = active.len();
        let g = DMatrix::from_fn(k, k, |a, b| self.gram[(active[a], active[b])]);
        let rhs = DVector::from_fn(k, |a, _| {
            let j = active[a];
            self.xty[j] - 0.5 * lambda * weights[j] * beta[j].signum()
        });
        let sol = g.cholesky()?.solve(&rhs);
        let mut out = DVector::zeros(beta.len());
        for (a, &j) in active.iter().enumerate() {
            let v = sol[a];
            let sign_ok = v.signum() == beta[j].signum() || (weights[j] == 0.0 && v.is_finite());
            if !v.is_finite() || !sign_ok || (weights[j] > 0.0 && v == 0.0) {
                return None;
            }
            out[j] = v;
        }
        let grad = &self.xty - &self.gram * &out;
        let scale = self.xty.amax().max(1.0);
        for j in 0..beta.len() {
            if out[j] == 0.0 && 2.0 * grad[j].abs() > lambda * weights[j] + 1e-9 * scale {
                return None;
            }
        }
        Some(out)
    }

    /// Smallest penalty with an all-zero penalized solution: unpenalized
    /// columns are fitted first and the remaining gradient is maximized.
    pub fn lambda_max(&self, weights: &[f64]) -> f64 {
        let p = self.ncols();
        let free: Vec<usize> = (0..p).filter(|&j| weights[j] == 0.0).collect();
        let mut grad = self.xty.clone();
        if !free.is_empty() {
            let k = free.len();
            let g = DMatrix::from_fn(k, k, |a, b| self.gram[(free[a], free[b])]);
            let c = DVector::from_fn(k, |a, _| self.xty[free[a]]);
            if let Some(chol) = g.cholesky() {
                let b = chol.solve(&c);
                for (a, &j) in free.iter().enumerate() {
                    grad.axpy(-b[a], &self.gram.column(j), 1.0);
                }
            }
        }
        (0..p)
            .filter(|&j| weights[j] > 0.0)
            .map(|j| 2.0 * grad[j].abs() / weights[j])
            .fold(0.0, f64::max)
    }
}

pub(crate) fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Lasso with every column penalized equally, from a zero start.
pub fn lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    let problem = LassoProblem::new(x, y)?;
    problem.solve(lambda, &vec![1.0; x.ncols()], None, &LassoOptions::default())
}

/// Weighted Lasso; a zero weight leaves that column unpenalized.
pub fn lasso_weighted(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
) -> Result<LassoFit> {
    LassoProblem::new(x, y)?.solve(lambda, weights, None, &LassoOptions::default())
}

/// Largest violation of the optimality conditions
/// `|2 x_j'(y - X b)| <= lambda w_j` (zero `b_j`) and
/// `2 x_j'(y - X b) = lambda w_j sign(b_j)` (non-zero `b_j`).
pub fn kkt_violation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    weights: &[f64],
) -> f64 {
    let grad = x.tr_mul(&(y - x * beta)) * 2.0;
    (0..beta.len())
        .map(|j| {
            let lw = lambda * weights[j];
            if beta[j] == 0.0 {
                (grad[j].abs() - lw).max(0.0)
            } else {
                (grad[j] - lw * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let mut y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        y += x.column(0) * 2.0 - x.column(1);
        (x, y)
    }

    #[test]
    fn single_column_closed_form() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_element(2, 1.0);
        let fit = lasso(&x, &y, 1.0).unwrap();
        assert!((fit.coefficients[0] - 0.75).abs() < 1e-14);
        assert!(fit.converged);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let (x, y) = random_problem(50, 6, 1);
        let fit = lasso(&x, &y, 0.0).unwrap();
        let ols = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((fit.coefficients - ols).amax() < 1e-6);
    }

    #[test]
    fn large_penalty_zeroes_everything() {
        let (x, y) = random_problem(40, 5, 2);
        let lmax = 2.0 * x.tr_mul(&y).amax();
        let fit = lasso(&x, &y, lmax).unwrap();
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let problem = LassoProblem::new(&x, &y).unwrap();
        assert!((problem.lambda_max(&[1.0; 5]) - lmax).abs() < 1e-12 * lmax);
    }

    #[test]
    fn unpenalized_column_is_fitted_freely() {
        let (mut x, mut y) = random_problem(60, 4, 3);
        x.column_mut(0).fill(1.0);
        y.add_scalar_mut(5.0);
        let w = [0.0, 1.0, 1.0, 1.0];
        let problem = LassoProblem::new(&x, &y).unwrap();
        let lmax = problem.lambda_max(&w);
        let fit = lasso_weighted(&x, &y, lmax * 1.0001, &w).unwrap();
        assert!((fit.coefficients[0] - y.mean()).abs() < 1e-9);
        assert!(fit.coefficients.iter().skip(1).all(|&b| b == 0.0));
        let below = lasso_weighted(&x, &y, lmax * 0.99, &w).unwrap();
        assert!(below.coefficients.iter().skip(1).any(|&b| b != 0.0));
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut x = DMatrix::from_element(3, 1, 1.0);
        x[(1, 0)] = f64::NAN;
        assert!(matches!(lasso(&x, &DVector::zeros(3), 1.0), Err(Error::Input(_))));
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(lasso(&x, &DVector::zeros(3), -1.0).is_err());
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let (x, y) = random_problem(80, 10, 4);
        let problem = LassoProblem::new(&x, &y).unwrap();
        let w = vec![1.0; 10];
        let opts = LassoOptions::default();
        let cold = problem.solve(20.0, &w, None, &opts).unwrap();
        let start = problem.solve(60.0, &w, None, &opts).unwrap();
        let warm = problem.solve(20.0, &w, Some(&start.coefficients), &opts).unwrap();
        assert!((cold.coefficients - warm.coefficients).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn kkt_and_monotone_objective(seed in 0u64..1000, frac in 0.01f64..0.9) {
            let (x, y) = random_problem(40, 8, seed);
            let lmax = 2.0 * x.tr_mul(&y).amax();
            let lambda = frac * lmax;
            let fit = lasso(&x, &y, lambda).unwrap();
            prop_assert!(fit.converged);
            prop_assert!(kkt_violation(&x, &y, &fit.coefficients, lambda, &[1.0; 8]) < 1e-6);
            for w in fit.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
        }
    }
}
