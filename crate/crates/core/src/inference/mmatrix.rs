use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::check_finite_matrix;
use crate::regression::soft_threshold;

const MAX_ESCALATIONS: usize = 8;
const MAX_SWEEPS: usize = 20_000;
const TOL: f64 = 1e-8;

/// Approximate inverse of a covariance matrix, one row per coordinate.
///
/// Row `i` minimizes `m' S m` subject to `|S m - e_i|_inf <= mu_i`. Rows
/// that stayed infeasible after every escalation of `mu` are replaced by
/// `e_i / S_ii` and flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    pub m: DMatrix<f64>,
    /// Requested bound.
    pub mu: f64,
    /// Bound actually used for each row.
    pub mu_used: Vec<f64>,
    pub feasible: Vec<bool>,
}

impl MMatrix {
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.feasible.len()).filter(|&i| !self.feasible[i]).collect()
    }
}

/// Solves each row through the penalized form
/// `min 1/2 m' S m - m_i + mu |m|_1`, whose stationarity condition
/// `S m - e_i = -mu s` (with `s` a subgradient of `|m|_1`) is exactly the
/// constraint set of the quadratic program and whose minimizers are its
/// solutions. `mu = 0` returns the exact inverse.
pub fn compute_m(sigma: &DMatrix<f64>, mu: f64) -> Result<MMatrix> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::input("covariance matrix must be square"));
    }
    check_finite_matrix(sigma, "covariance matrix")?;
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::config(format!("mu must be non-negative, got {mu}")));
    }
    if mu == 0.0 {
        if let Some(chol) = sigma.clone().cholesky() {
            return Ok(MMatrix {
                m: chol.inverse(),
                mu,
                mu_used: vec![0.0; p],
                feasible: vec![true; p],
            });
        }
    }
    let mut m = DMatrix::zeros(p, p);
    let mut mu_used = vec![mu; p];
    let mut feasible = vec![true; p];
    for i in 0..p {
        let mut level = mu;
        let mut row = None;
        for attempt in 0..=MAX_ESCALATIONS {
            if attempt > 0 {
                level *= 2.0;
                log::warn!("row {i}: no feasible solution, raising mu to {level:.3e}");
            }
            if let Some(sol) = solve_row(sigma, i, level) {
                row = Some(sol);
                break;
            }
            if level == 0.0 {
                break;
            }
        }
        match row {
            Some(sol) => {
                m.set_row(i, &sol.transpose());
                mu_used[i] = level;
            }
            None => {
                log::warn!("row {i}: infeasible after {MAX_ESCALATIONS} escalations, using e_i / S_ii");
                let d = sigma[(i, i)];
                if d > 0.0 {
                    m[(i, i)] = 1.0 / d;
                }
                mu_used[i] = level;
                feasible[i] = false;
            }
        }
    }
    Ok(MMatrix {
        m,
        mu,
        mu_used,
        feasible,
    })
}

/// Largest constraint violation `|S m - e_i|_inf - mu` of a candidate row.
pub fn row_violation(sigma: &DMatrix<f64>, i: usize, row: &DVector<f64>, mu: f64) -> f64 {
    let mut r = sigma * row;
    r[i] -= 1.0;
    r.amax() - mu
}

fn solve_row(sigma: &DMatrix<f64>, i: usize, mu: f64) -> Option<DVector<f64>> {
    let p = sigma.nrows();
    let mut m = DVector::zeros(p);
    // r = S m
    let mut r = DVector::zeros(p);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let sjj = sigma[(j, j)];
            if sjj <= 0.0 {
                continue;
            }
            let old = m[j];
            let target = if j == i { 1.0 } else { 0.0 };
            let z = target - (r[j] - sjj * old);
            let new = soft_threshold(z, mu) / sjj;
            let delta = new - old;
            if delta != 0.0 {
                m[j] = new;
                r.axpy(delta, &sigma.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if !max_change.is_finite() || m.amax() > 1e12 {
            return None;
        }
        if max_change < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    if let Some(polished) = polish_row(sigma, i, &m, mu) {
        m = polished;
    }
    (row_violation(sigma, i, &m, mu) <= 1e-8).then_some(m)
}

/// Exact solve on the active set with the signs found by coordinate descent.
fn polish_row(sigma: &DMatrix<f64>, i: usize, m: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..m.len()).filter(|&j| m[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let s = DMatrix::from_fn(k, k, |a, b| sigma[(active[a], active[b])]);
    let rhs = DVector::from_fn(k, |a, _| {
        let j = active[a];
        (if j == i { 1.0 } else { 0.0 }) - mu * m[j].signum()
    });
    let sol = s.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(m.len());
    for (a, &j) in active.iter().enumerate() {
        if !sol[a].is_finite() || sol[a].signum() != m[j].signum() || sol[a] == 0.0 {
            return None;
        }
        out[j] = sol[a];
    }
    (row_violation(sigma, i, &out, mu) <= row_violation(sigma, i, m, mu).max(0.0)).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_shrinks_diagonal() {
        let m = compute_m(&DMatrix::identity(4, 4), 0.1).unwrap();
        assert!((m.m - DMatrix::identity(4, 4) * 0.9).amax() < 1e-14);
        assert!(m.feasible.iter().all(|&f| f));
    }

    #[test]
    fn large_mu_gives_zero() {
        let m = compute_m(&DMatrix::identity(3, 3), 1.0).unwrap();
        assert!(m.m.iter().all(|&v| v == 0.0));
        let m = compute_m(&DMatrix::identity(3, 3), 2.5).unwrap();
        assert!(m.m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_mu_is_exact_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = compute_m(&s, 0.0).unwrap();
        assert!((&s * &m.m - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn singular_covariance_escalates_then_stays_feasible() {
        // Rank-one covariance: a tiny mu has no feasible point.
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let s = &v * v.transpose();
        let m = compute_m(&s, 1e-3).unwrap();
        for i in 0..3 {
            if m.feasible[i] {
                assert!(m.mu_used[i] > 1e-3);
                let row = m.m.row(i).transpose();
                assert!(row_violation(&s, i, &row, m.mu_used[i]) <= 1e-8);
            }
        }
    }

    #[test]
    fn feasibility_on_random_covariances() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: DMatrix<f64> = DMatrix::from_fn(40, 8, |_, _| StandardNormal.sample(&mut rng));
            let s = x.tr_mul(&x) / 40.0;
            let m = compute_m(&s, 0.05).unwrap();
            for i in 0..8 {
                assert!(m.feasible[i]);
                let row = m.m.row(i).transpose();
                assert!(row_violation(&s, i, &row, 0.05) <= 1e-8);
            }
        }
    }
}
