//! Bootstrap ensembles of sparse fits.
//!
//! Each of `q` samples redraws the rows of `(X, y)` in pairs with
//! replacement and is fitted independently. A term's inclusion probability
//! is the share of samples whose coefficient is exactly nonzero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite_matrix, check_finite_vector, check_rows, mean, median};
use crate::regression::{lasso_cv_scaled, CvOptions};

const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Mean,
    Median,
}

#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub q: usize,
    pub inclusion: Vec<f64>,
    /// One row per bootstrap sample.
    pub samples: DMatrix<f64>,
    /// Samples drawn again because a varying column came out constant.
    pub redraws: usize,
}

/// Bootstrap ensemble with a caller-supplied fitting routine. Sample `i`
/// draws its rows from a generator seeded with `seed + i`, so the report does
/// not depend on scheduling.
pub fn esindy_with<F>(x: &DMatrix<f64>, y: &DVector<f64>, q: usize, seed: u64, fit: F) -> Result<EnsembleReport>
where
    F: Fn(&DMatrix<f64>, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    check_rows(x, y)?;
    check_finite_matrix(x, "design")?;
    check_finite_vector(y, "response")?;
    if q == 0 {
        return Err(Error::config("ensemble needs at least one bootstrap sample"));
    }
    let (n, p) = x.shape();
    if n == 0 {
        return Err(Error::input("design has no rows"));
    }
    let varying: Vec<usize> = (0..p).filter(|&j| !is_constant(x.column(j).iter())).collect();

    let fits: Vec<Result<(DVector<f64>, usize)>> = (0..q)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut redraws = 0;
            let rows = loop {
                let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                // Copies of a row stay next to each other, so contiguous
                // cross-validation folds do not validate on training rows.
                rows.sort_unstable();
                let degenerate = varying
                    .iter()
                    .any(|&j| is_constant(rows.iter().map(|&r| &x[(r, j)])));
                if !degenerate || redraws == MAX_REDRAWS {
                    if degenerate {
                        log::warn!("bootstrap sample {i} still has a constant column after {MAX_REDRAWS} redraws");
                    }
                    break rows;
                }
                redraws += 1;
            };
            let xb = x.select_rows(&rows);
            let yb = DVector::from_iterator(n, rows.iter().map(|&r| y[r]));
            let beta = fit(&xb, &yb)?;
            if beta.len() != p {
                return Err(Error::input("fitting routine returned the wrong number of coefficients"));
            }
            Ok((beta, redraws))
        })
        .collect();

    let mut samples = DMatrix::zeros(q, p);
    let mut redraws = 0;
    for (i, f) in fits.into_iter().enumerate() {
        let (beta, r) = f?;
        samples.row_mut(i).copy_from(&beta.transpose());
        redraws += r;
    }
    let inclusion = (0..p)
        .map(|j| samples.column(j).iter().filter(|&&v| v != 0.0).count() as f64 / q as f64)
        .collect();
    Ok(EnsembleReport {
        q,
        inclusion,
        samples,
        redraws,
    })
}

/// Bootstrap ensemble of cross-validated Lasso fits.
pub fn esindy(x: &DMatrix<f64>, y: &DVector<f64>, q: usize, seed: u64) -> Result<EnsembleReport> {
    let opts = CvOptions::default();
    esindy_with(x, y, q, seed, |xb, yb| lasso_cv_scaled(xb, yb, &opts).map(|(b, _)| b))
}

/// Terms with inclusion probability below `threshold` are zeroed; the rest
/// take the mean or median of all their samples, zeros included.
pub fn esindy_aggregate(report: &EnsembleReport, threshold: f64, statistic: Aggregate) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let p = report.inclusion.len();
    Ok(DVector::from_fn(p, |j, _| {
        if report.inclusion[j] < threshold {
            return 0.0;
        }
        let mut col: Vec<f64> = report.samples.column(j).iter().copied().collect();
        match statistic {
            Aggregate::Mean => mean(&col),
            Aggregate::Median => median(&mut col),
        }
    }))
}

fn is_constant<'a>(mut values: impl Iterator<Item = &'a f64>) -> bool {
    match values.next() {
        Some(first) => values.all(|v| v == first),
        None => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn data(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(60, 5, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let y = x.column(1) * 2.0 + DVector::from_fn(60, |_, _| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        (x, y)
    }

    #[test]
    fn one_sample_gives_indicator() {
        let (x, y) = data(1);
        let rep = esindy(&x, &y, 1, 7).unwrap();
        for j in 0..5 {
            assert_eq!(rep.inclusion[j], if rep.samples[(0, j)] != 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn same_seed_same_report() {
        let (x, y) = data(2);
        let a = esindy(&x, &y, 12, 3).unwrap();
        let b = esindy(&x, &y, 12, 3).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.inclusion, b.inclusion);
        assert!(a.inclusion[1] == 1.0);
    }

    #[test]
    fn aggregation_rules() {
        let samples = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 2.0, 3.0, 0.0, 0.0, 5.0, 1.0, 0.0, 7.0, 0.0, 4.0]);
        let rep = EnsembleReport {
            q: 4,
            inclusion: vec![1.0, 0.25, 0.5],
            samples,
            redraws: 0,
        };
        let all = esindy_aggregate(&rep, 0.0, Aggregate::Mean).unwrap();
        assert_eq!(all.as_slice(), &[4.0, 0.25, 1.5]);
        let med = esindy_aggregate(&rep, 0.0, Aggregate::Median).unwrap();
        assert_eq!(med.as_slice(), &[4.0, 0.0, 1.0]);
        let strict = esindy_aggregate(&rep, 1.0, Aggregate::Mean).unwrap();
        assert_eq!(strict.as_slice(), &[4.0, 0.0, 0.0]);
        assert!(esindy_aggregate(&rep, 1.5, Aggregate::Mean).is_err());
    }

    #[test]
    fn constant_samples_are_redrawn() {
        // A single distinct row makes its column vary; most bootstrap draws
        // miss it.
        let mut x = DMatrix::from_element(6, 2, 1.0);
        x[(0, 1)] = 2.0;
        let y = DVector::from_element(6, 1.0);
        let rep = esindy_with(&x, &y, 4, 0, |xb, _| Ok(DVector::from_fn(2, |j, _| xb.column(j).sum()))).unwrap();
        assert!(rep.redraws > 0);
        assert!(esindy(&x, &y, 0, 0).is_err());
    }
}
