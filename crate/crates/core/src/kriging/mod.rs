//! Single-level Kriging: correlation kernel, likelihood fit and posterior prediction.

mod data;
mod fit;
mod kernel;
mod model;
pub mod optim;

pub use data::{Bounds, Dataset, DesignPoint, POINT_TOL};
pub use fit::{fit_mle, fit_mle_with_trace, BetaEstimator, FitConfig, FitTrace, StartRecord};
pub use kernel::{
    correlation_matrix, factor_correlation, kernel_eval, log_likelihood, CorrelationKernel, Kernel, KernelParams,
    DEFAULT_NUGGET, MAX_NUGGET,
};
pub use model::{KrigingModel, KrigingModelDoc, Prediction, MODEL_FORMAT_VERSION};
