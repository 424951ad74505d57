//! Correlation kernel, correlation matrices and the Gaussian log-likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::data::{Dataset, DesignPoint};
use crate::error::{Error, Result};

pub const DEFAULT_NUGGET: f64 = 1e-8;
/// Largest nugget tried before a factorization is declared singular.
pub const MAX_NUGGET: f64 = 1e-4;
/// First escalation step when the configured nugget is exactly zero.
pub const ZERO_NUGGET_STEP: f64 = 1e-10;

/// Hyperparameters of the covariance `tau2 * r(a, b; theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Inverse squared lengthscales, one per coordinate.
    pub theta: Vec<f64>,
    /// Process variance.
    pub tau2: f64,
    /// Diagonal regularization added to the correlation matrix.
    pub nugget: f64,
}

impl KernelParams {
    pub fn new(theta: Vec<f64>, tau2: f64, nugget: f64) -> Result<Self> {
        let p = KernelParams { theta, tau2, nugget };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::invalid("theta must have length >= 1"));
        }
        if let Some(t) = self.theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::invalid(format!("theta entries must be positive, got {t}")));
        }
        if !(self.tau2.is_finite() && self.tau2 > 0.0) {
            return Err(Error::invalid(format!("tau2 must be positive, got {}", self.tau2)));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::invalid(format!(
                "nugget must be nonnegative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// A stationary correlation function `r(a, b; theta)` with `r(a, a) = 1`.
pub trait CorrelationKernel {
    fn correlation(&self, a: &[f64], b: &[f64], theta: &[f64]) -> f64;
}

/// Kernels a model can be built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-sum_i theta_i (a_i - b_i)^2)`
    #[default]
    SquaredExponential,
}

impl CorrelationKernel for Kernel {
    #[inline]
    fn correlation(&self, a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
        match self {
            Kernel::SquaredExponential => {
                let s: f64 = a
                    .iter()
                    .zip(b)
                    .zip(theta)
                    .map(|((x, y), t)| t * ((x - y) * (x - y)))
                    .sum();
                (-s).exp()
            }
        }
    }
}

fn check_dim(p: &DesignPoint, params: &KernelParams) -> Result<()> {
    if p.dim() != params.dim() {
        return Err(Error::invalid(format!(
            "point has dimension {} but theta has length {}",
            p.dim(),
            params.dim()
        )));
    }
    Ok(())
}

/// Squared-exponential correlation between two points.
pub fn kernel_eval(a: &DesignPoint, b: &DesignPoint, params: &KernelParams) -> Result<f64> {
    check_dim(a, params)?;
    check_dim(b, params)?;
    Ok(Kernel::SquaredExponential.correlation(a, b, &params.theta))
}

/// `R + nugget * I` for the given points.
pub fn correlation_matrix(points: &[DesignPoint], params: &KernelParams) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("correlation matrix needs at least one point"));
    }
    for p in points {
        check_dim(p, params)?;
    }
    Ok(correlation_matrix_raw(
        Kernel::SquaredExponential,
        points.iter().map(|p| p.coords()),
        points.len(),
        &params.theta,
        params.nugget,
    ))
}

pub(crate) fn correlation_matrix_raw<'a>(
    kernel: Kernel,
    points: impl Iterator<Item = &'a [f64]> + Clone,
    n: usize,
    theta: &[f64],
    nugget: f64,
) -> DMatrix<f64> {
    let pts: Vec<&[f64]> = points.collect();
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget;
        for j in 0..i {
            let v = kernel.correlation(pts[i], pts[j], theta);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky factor of `R + nugget I` for the given points, escalating the
/// nugget on failure. Returns the factor and the nugget that succeeded.
pub fn factor_correlation(
    points: &[DesignPoint],
    params: &KernelParams,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let r = correlation_matrix(points, params)?;
    factor_with_escalation(&r, params.nugget)
}

/// Next nugget in the escalation ladder, or `None` once [`MAX_NUGGET`] is exceeded.
pub(crate) fn next_nugget(nugget: f64) -> Option<f64> {
    let next = if nugget == 0.0 {
        ZERO_NUGGET_STEP
    } else {
        nugget * 10.0
    };
    (next <= MAX_NUGGET * (1.0 + 1e-9)).then_some(next)
}

/// Cholesky factor of `r_base + nugget * I`, escalating the nugget tenfold on
/// failure up to [`MAX_NUGGET`]. `r_base` must carry a unit diagonal.
/// Returns the factor and the nugget actually used.
pub(crate) fn factor_with_escalation(
    r_base: &DMatrix<f64>,
    nugget: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut nugget = nugget;
    loop {
        let mut m = r_base.clone();
        for i in 0..m.nrows() {
            m[(i, i)] = 1.0 + nugget;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, nugget));
        }
        match next_nugget(nugget) {
            Some(n) => nugget = n,
            None => {
                return Err(Error::NumericalSingularity(format!(
                    "correlation matrix of size {} is not positive definite with nugget up to {MAX_NUGGET:e}",
                    r_base.nrows()
                )))
            }
        }
    }
}

/// `log|R|` from its Cholesky factor.
pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Gaussian log-likelihood of the observations under mean `beta` and
/// covariance `tau2 * (R + nugget * I)`, evaluated on the coordinates as given.
pub fn log_likelihood(params: &KernelParams, beta: f64, data: &Dataset) -> Result<f64> {
    params.validate()?;
    let r = correlation_matrix(data.points(), params)?;
    let chol = Cholesky::new(r).ok_or_else(|| {
        Error::NumericalSingularity("covariance matrix is not positive definite".into())
    })?;
    let resid = DVector::from_iterator(data.len(), data.observations().iter().map(|y| y - beta));
    Ok(log_likelihood_from_factor(&chol, &resid, params.tau2))
}

pub(crate) fn log_likelihood_from_factor(
    chol: &Cholesky<f64, Dyn>,
    resid: &DVector<f64>,
    tau2: f64,
) -> f64 {
    let n = resid.len() as f64;
    let w = whiten(chol, resid);
    let quad = w.norm_squared() / tau2;
    let log_det_sigma = n * tau2.ln() + log_det(chol);
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det_sigma + quad)
}

/// `L^{-1} v` for the lower Cholesky factor `L`.
pub(crate) fn whiten(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: &[f64]) -> DesignPoint {
        DesignPoint::new(x.to_vec()).unwrap()
    }

    #[test]
    fn kernel_closed_forms() {
        let params = KernelParams::new(vec![1.0], 1.0, 0.0).unwrap();
        assert_eq!(kernel_eval(&p(&[0.3]), &p(&[0.3]), &params).unwrap(), 1.0);
        assert_relative_eq!(
            kernel_eval(&p(&[0.0]), &p(&[1.0]), &params).unwrap(),
            0.367_879_441_171_442_33,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let params = KernelParams::new(vec![1.0, 2.0], 1.0, 0.0).unwrap();
        assert!(matches!(
            kernel_eval(&p(&[0.0]), &p(&[1.0]), &params),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_point_matrix() {
        let params = KernelParams::new(vec![3.0], 2.0, 1e-6).unwrap();
        let r = correlation_matrix(&[p(&[0.5])], &params).unwrap();
        assert_eq!(r.shape(), (1, 1));
        assert_eq!(r[(0, 0)], 1.0 + 1e-6);
    }

    #[test]
    fn params_validation() {
        assert!(KernelParams::new(vec![0.0], 1.0, 0.0).is_err());
        assert!(KernelParams::new(vec![1.0], -1.0, 0.0).is_err());
        assert!(KernelParams::new(vec![1.0], 1.0, -1e-3).is_err());
        assert!(KernelParams::new(vec![], 1.0, 0.0).is_err());
    }

    #[test]
    fn single_observation_likelihood() {
        let params = KernelParams::new(vec![1.0], 2.5, 1e-8).unwrap();
        let data = Dataset::from_1d(&[0.2], &[4.0]).unwrap();
        let l = log_likelihood(&params, 4.0, &data).unwrap();
        let expected = -0.5 * ((2.0 * std::f64::consts::PI).ln() + (2.5_f64 * (1.0 + 1e-8)).ln());
        assert_relative_eq!(l, expected, epsilon = 1e-14);
    }

    #[test]
    fn escalation_ladder() {
        assert_eq!(next_nugget(0.0), Some(ZERO_NUGGET_STEP));
        assert_eq!(next_nugget(1e-8), Some(1e-7));
        assert!(next_nugget(1e-5).is_some());
        assert_eq!(next_nugget(1e-4), None);
    }

    #[test]
    fn escalation_rescues_coincident_columns() {
        // Two identical rows: singular without a nugget.
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, used) = factor_with_escalation(&r, 0.0).unwrap();
        assert!(used > 0.0 && used <= MAX_NUGGET);
    }
}
