use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{empirical_null_sigma, holm_adjust, long_run_sigma, sandwich_variances, Prepared, SigmaEstimator};
use crate::error::{Error, Result};
use crate::linalg::{normal_two_sided, spd_inverse, spd_solve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeOptions {
    /// Penalty of `|y - Z b|^2 + lambda |b|^2` on the scaled design;
    /// defaults to `1 / n`.
    pub lambda: Option<f64>,
    pub xi: f64,
    pub sigma: SigmaEstimator,
    pub alpha: f64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            lambda: None,
            xi: 0.05,
            sigma: SigmaEstimator::ScaledLasso,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RidgeReport {
    /// Bias-corrected estimates in original units.
    pub estimates: DVector<f64>,
    /// Standard deviation of the corrected estimate, original units.
    pub std_errors: DVector<f64>,
    /// Bias bound, original units.
    pub delta: DVector<f64>,
    pub p_values: DVector<f64>,
    pub adjusted_p: DVector<f64>,
    pub selected: Vec<bool>,
    pub identifiable: Vec<bool>,
    pub p_diag: DVector<f64>,
    pub omega_diag: DVector<f64>,
    pub xi: f64,
    pub lambda: f64,
    pub sigma_hat: f64,
    pub alpha: f64,
}

/// Ridge estimate corrected for its projection bias.
///
/// With `P` the projection onto the row space of the design and `b0` the
/// scaled-Lasso fit,
///
/// * `b_j = c_j / P_jj - sum_{k != j} (P_jk / P_jj) b0_k`, where
///   `c = b_ridge + P (S + lambda/n W)^-1 (lambda/n) W b0` undoes the ridge
///   shrinkage within the row space
/// * `Delta_j = max_{k != j} |P_jk / P_jj| (log p / n)^(1/2 - xi)`
/// * `p_j = 2 (1 - Phi(|P_jj| (|b_j| - Delta_j)_+ / (sigma sqrt(Omega_jj / n))))`
///
/// where `Omega = (S + lambda/n W)^-1 S (S + lambda/n W)^-1` is the ridge
/// covariance up to `sigma^2 / n`. P-values are Holm adjusted and terms are
/// selected on the adjusted values.
pub fn bias_corrected_ridge(x: &DMatrix<f64>, y: &DVector<f64>, opts: &RidgeOptions) -> Result<RidgeReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    if !(0.0..=0.5).contains(&opts.xi) {
        return Err(Error::config(format!("xi must lie in [0, 1/2], got {}", opts.xi)));
    }
    let prep = Prepared::new(x, y)?;
    let (n, p) = (prep.n(), prep.p());
    let nf = n as f64;
    let lambda = match opts.lambda {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::config(format!("ridge penalty must be positive, got {l}"))),
        None => 1.0 / nf,
    };

    let proj = row_space_projection(&prep.z);
    let (sigma_init, initial) = match opts.sigma {
        SigmaEstimator::Fixed(s) => {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config(format!("fixed sigma must be positive, got {s}")));
            }
            (s, prep.scaled_lasso(y)?.1)
        }
        _ => prep.scaled_lasso(y)?,
    };

    let mut reg = prep.z.tr_mul(&prep.z);
    let mut shifted = prep.cov.clone();
    for j in 0..p {
        reg[(j, j)] += lambda * prep.weights[j];
        shifted[(j, j)] += lambda / nf * prep.weights[j];
    }
    let mut beta_ridge = spd_solve(&reg, &prep.z.tr_mul(y), "ridge normal matrix")?;
    let shifted_inv = spd_inverse(&shifted, "ridge covariance")?;
    let omega = &shifted_inv * &prep.cov * &shifted_inv;
    // Put back the shrinkage the penalty applies inside the row space,
    // estimated from the initial fit.
    let penalized = DVector::from_fn(p, |j, _| lambda / nf * prep.weights[j] * initial[j]);
    beta_ridge += &proj * (&shifted_inv * penalized);

    let rate = ((p as f64).ln() / nf).max(0.0).powf(0.5 - opts.xi);
    let mut corrected = DVector::zeros(p);
    let mut delta = DVector::zeros(p);
    let mut var = vec![0.0; p];
    let mut identifiable = vec![true; p];
    for j in 0..p {
        let pjj = proj[(j, j)];
        if pjj.abs() < 1e-10 {
            identifiable[j] = false;
            continue;
        }
        let mut bias = 0.0;
        let mut worst = 0.0f64;
        for k in 0..p {
            if k != j {
                bias += proj[(j, k)] / pjj * initial[k];
                worst = worst.max((proj[(j, k)] / pjj).abs());
            }
        }
        corrected[j] = beta_ridge[j] / pjj - bias;
        delta[j] = worst * rate;
        var[j] = omega[(j, j)].max(0.0) / (pjj * pjj);
    }

    let sigma_hat = match opts.sigma {
        SigmaEstimator::EmpiricalNull => {
            let est: Vec<f64> = (0..p).filter(|&j| identifiable[j]).map(|j| corrected[j]).collect();
            let v: Vec<f64> = (0..p).filter(|&j| identifiable[j]).map(|j| var[j]).collect();
            empirical_null_sigma(&est, &v, n).unwrap_or(sigma_init)
        }
        SigmaEstimator::LongRun => {
            let resid = y - &prep.z * &initial;
            long_run_sigma(resid.as_slice())
        }
        _ => sigma_init,
    };
    // Serially correlated errors: replace sigma^2 Omega_jj / n by a
    // long-run variance of the ridge scores.
    if opts.sigma == SigmaEstimator::LongRun {
        let resid = y - &prep.z * &initial;
        let scores = &shifted_inv * prep.z.transpose();
        let sand = sandwich_variances(&scores, resid.as_slice());
        for j in 0..p {
            if identifiable[j] {
                var[j] = sand[j] * nf / (sigma_hat * sigma_hat * proj[(j, j)].powi(2));
            }
        }
    }

    let mut p_values = DVector::from_element(p, 1.0);
    let mut std_errors = DVector::zeros(p);
    for j in 0..p {
        if !identifiable[j] {
            std_errors[j] = f64::NAN;
            continue;
        }
        let se = sigma_hat * (var[j] / nf).sqrt();
        let excess = (corrected[j].abs() - delta[j]).max(0.0);
        p_values[j] = if excess == 0.0 {
            1.0
        } else if se == 0.0 {
            0.0
        } else {
            normal_two_sided(excess / se)
        };
        std_errors[j] = prep.scaling.unscale(j, se);
    }
    let adjusted_p = DVector::from_vec(holm_adjust(p_values.as_slice())?);
    Ok(RidgeReport {
        estimates: DVector::from_fn(p, |j, _| prep.scaling.unscale(j, corrected[j])),
        std_errors,
        delta: DVector::from_fn(p, |j, _| prep.scaling.unscale(j, delta[j])),
        selected: adjusted_p.iter().map(|&pv| pv <= opts.alpha).collect(),
        p_values,
        adjusted_p,
        identifiable,
        p_diag: proj.diagonal(),
        omega_diag: omega.diagonal(),
        xi: opts.xi,
        lambda,
        sigma_hat,
        alpha: opts.alpha,
    })
}

/// `X'(XX')^- X` from the right singular vectors; exactly the identity
/// when the design has full column rank.
pub(crate) fn row_space_projection(x: &DMatrix<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s_max = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * s_max)
        .collect();
    if keep.len() == p {
        return DMatrix::identity(p, p);
    }
    let v = DMatrix::from_fn(p, keep.len(), |j, a| v_t[(keep[a], j)]);
    &v * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ColumnScaling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn full_rank_projection_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(30, 5, &mut rng);
        assert_eq!(row_space_projection(&x), DMatrix::identity(5, 5));
    }

    #[test]
    fn wide_projection_is_idempotent_with_trace_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(6, 10, &mut rng);
        let p = row_space_projection(&x);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert!((p.trace() - 6.0).abs() < 1e-10);
        assert!((&x * &p - &x).amax() < 1e-10);
    }

    fn sparseode_scaled(z: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        crate::regression::scaled_lasso(z, y).unwrap().coefficients
    }

    #[test]
    fn full_rank_reduces_to_ridge_z_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(80, 4, &mut rng);
        let y = DVector::from_fn(80, |i, _| 0.5 * x[(i, 1)] + Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let opts = RidgeOptions { sigma: SigmaEstimator::Fixed(1.0), ..Default::default() };
        let rep = bias_corrected_ridge(&x, &y, &opts).unwrap();
        assert!(rep.delta.iter().all(|&d| d == 0.0));
        let scaling = ColumnScaling::fit(&x);
        let z = scaling.apply(&x);
        let mut reg = z.tr_mul(&z);
        for j in 0..4 {
            reg[(j, j)] += 1.0 / 80.0;
        }
        let mut ridge = reg.clone().cholesky().unwrap().solve(&z.tr_mul(&y));
        let init = sparseode_scaled(&z, &y);
        ridge += reg.clone().cholesky().unwrap().solve(&(init / 80.0));
        for j in 0..4 {
            assert!((rep.estimates[j] - ridge[j] / scaling.scale[j]).abs() < 1e-12);
            let z_stat = ridge[j] / (rep.omega_diag[j] / 80.0).sqrt();
            assert!((rep.p_values[j] - normal_two_sided(z_stat)).abs() < 1e-12);
        }
    }

    #[test]
    fn adjusted_p_values_dominate_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(40, 60, &mut rng);
        let y = DVector::from_fn(40, |i, _| 2.0 * x[(i, 0)] + Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let rep = bias_corrected_ridge(&x, &y, &RidgeOptions::default()).unwrap();
        for j in 0..60 {
            assert!(rep.adjusted_p[j] >= rep.p_values[j]);
            assert!(rep.delta[j] >= 0.0);
        }
        assert!(rep.p_diag.iter().all(|&d| d < 1.0));
    }

    #[test]
    fn zero_column_is_not_identifiable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = gaussian(30, 4, &mut rng);
        x.column_mut(2).fill(0.0);
        let y = DVector::from_fn(30, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let rep = bias_corrected_ridge(&x, &y, &RidgeOptions::default()).unwrap();
        assert!(!rep.identifiable[2]);
        assert_eq!(rep.p_values[2], 1.0);
        assert!(!rep.selected[2]);
    }
}
