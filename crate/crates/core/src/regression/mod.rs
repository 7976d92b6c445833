//! Point estimators: Lasso (plain, weighted, cross-validated), ridge, scaled
//! Lasso, least squares with t-tests, and sequentially thresholded least squares.

mod cv;
mod lasso;
mod ols;
mod ridge;
mod scaled;
mod stls;

pub use cv::{lambda_grid, lasso_cv, lasso_cv_scaled, CvOptions, LassoCvFit};
pub use lasso::{kkt_violation, lasso, lasso_weighted, LassoFit, LassoOptions, LassoProblem};
pub(crate) use lasso::soft_threshold;
pub use ols::{ols_inference, OlsInference};
pub use ridge::{ridge, ridge_weighted};
pub use scaled::{scaled_lasso, scaled_lasso_weighted, NoiseEstimate};
pub use stls::{stls, StlsFit};
