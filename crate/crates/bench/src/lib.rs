//! Shared fixtures for the benchmarks.

use nalgebra::{DMatrix, DVector};
use sparseode::harness::{DerivativeSource, ExperimentConfig, Simulation};
use sparseode::Trajectory;

/// Noisy Van der Pol states at the default protocol.
pub fn van_der_pol_states(noise: f64, seed: u64) -> Trajectory {
    let cfg = ExperimentConfig {
        noise,
        ..Default::default()
    };
    Simulation::new(&cfg).unwrap().noisy(&cfg, seed).unwrap()
}

/// Library and second-equation response from a noisy Van der Pol run.
pub fn van_der_pol_regression(noise: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let cfg = ExperimentConfig {
        noise,
        derivatives: DerivativeSource::Spline,
        ..Default::default()
    };
    let data = Simulation::new(&cfg).unwrap().dataset(&cfg, seed).unwrap();
    (data.theta, data.xdot.column(1).into_owned())
}

/// Sample second-moment matrix of the column-scaled library.
pub fn gram(theta: &DMatrix<f64>) -> DMatrix<f64> {
    let n = theta.nrows() as f64;
    let mut x = theta.clone();
    for mut col in x.column_iter_mut() {
        let norm = (col.norm_squared() / n).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    x.transpose() * &x / n
}
