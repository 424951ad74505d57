use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::data::{Bounds, Dataset, DesignPoint};
use super::kernel::{
    correlation_matrix_raw, log_likelihood_from_factor, whiten, CorrelationKernel, Kernel,
    KernelParams,
};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Posterior mean and variance at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted single-level Kriging posterior.
///
/// Coordinates are mapped onto the unit box by `bounds` before the kernel is
/// evaluated, so `theta` is expressed in normalized units.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    kernel: Kernel,
    beta: f64,
    params: KernelParams,
    bounds: Bounds,
    training: Dataset,
    unit_points: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    /// `(R + nugget I)^{-1} (Y - beta)`
    alpha: DVector<f64>,
    log_likelihood: f64,
}

impl KrigingModel {
    /// Factors the correlation matrix for fixed hyperparameters.
    ///
    /// The nugget in `params` is used as-is; a non-positive-definite matrix is
    /// a [`Error::NumericalSingularity`].
    pub fn from_parts(
        training: Dataset,
        bounds: Bounds,
        beta: f64,
        params: KernelParams,
    ) -> Result<Self> {
        params.validate()?;
        if !beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        if training.dim() != params.dim() || bounds.dim() != params.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: data {}, theta {}, bounds {}",
                training.dim(),
                params.dim(),
                bounds.dim()
            )));
        }
        let kernel = Kernel::SquaredExponential;
        let unit_points: Vec<Vec<f64>> = training
            .points()
            .iter()
            .map(|p| bounds.normalize(p))
            .collect();
        let n = training.len();
        let r = correlation_matrix_raw(
            kernel,
            unit_points.iter().map(Vec::as_slice),
            n,
            &params.theta,
            params.nugget,
        );
        let chol = Cholesky::new(r).ok_or_else(|| {
            Error::NumericalSingularity(format!(
                "correlation matrix of size {n} is not positive definite with nugget {:e}",
                params.nugget
            ))
        })?;
        let resid = DVector::from_iterator(n, training.observations().iter().map(|y| y - beta));
        let alpha = chol.solve(&resid);
        let log_likelihood = log_likelihood_from_factor(&chol, &resid, params.tau2);
        Ok(KrigingModel {
            kernel,
            beta,
            params,
            bounds,
            training,
            unit_points,
            chol,
            alpha,
            log_likelihood,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn tau2(&self) -> f64 {
        self.params.tau2
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn training(&self) -> &Dataset {
        &self.training
    }

    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Log-likelihood of the training data at the model's hyperparameters.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Lower Cholesky factor of `R + nugget I` (normalized coordinates).
    pub fn cholesky_factor(&self) -> nalgebra::DMatrix<f64> {
        self.chol.l()
    }

    fn check_dim(&self, x: &DesignPoint) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {} but the model has dimension {}",
                x.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Correlations `r(x, x^i)` against every training point.
    pub(crate) fn cross_correlations(&self, x: &DesignPoint) -> DVector<f64> {
        let u = self.bounds.normalize(x);
        DVector::from_iterator(
            self.unit_points.len(),
            self.unit_points
                .iter()
                .map(|p| self.kernel.correlation(&u, p, &self.params.theta)),
        )
    }

    pub(crate) fn correlation(&self, a: &DesignPoint, b: &DesignPoint) -> f64 {
        let ua = self.bounds.normalize(a);
        let ub = self.bounds.normalize(b);
        self.kernel.correlation(&ua, &ub, &self.params.theta)
    }

    /// `L^{-1} r(x)`.
    pub(crate) fn whitened(&self, r: &DVector<f64>) -> DVector<f64> {
        whiten(&self.chol, r)
    }

    pub(crate) fn mean_from(&self, r: &DVector<f64>) -> f64 {
        self.beta + r.dot(&self.alpha)
    }

    pub(crate) fn variance_from_whitened(&self, w: &DVector<f64>) -> f64 {
        (self.params.tau2 * (1.0 - w.norm_squared())).max(0.0)
    }

    /// Posterior mean `beta + r(x)' (R + nugget I)^{-1} (Y - beta)`.
    pub fn mean(&self, x: &DesignPoint) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.mean_from(&self.cross_correlations(x)))
    }

    /// Posterior variance `tau2 (1 - r(x)' (R + nugget I)^{-1} r(x))`, clamped at zero.
    pub fn variance(&self, x: &DesignPoint) -> Result<f64> {
        self.check_dim(x)?;
        let r = self.cross_correlations(x);
        Ok(self.variance_from_whitened(&self.whitened(&r)))
    }

    pub fn predict(&self, x: &DesignPoint) -> Result<Prediction> {
        self.check_dim(x)?;
        let r = self.cross_correlations(x);
        let w = self.whitened(&r);
        Ok(Prediction {
            mean: self.mean_from(&r),
            variance: self.variance_from_whitened(&w),
        })
    }

    /// Posterior covariance between the field values at `a` and `b`.
    pub fn posterior_covariance(&self, a: &DesignPoint, b: &DesignPoint) -> Result<f64> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let wa = self.whitened(&self.cross_correlations(a));
        let wb = self.whitened(&self.cross_correlations(b));
        Ok(self.params.tau2 * (self.correlation(a, b) - wa.dot(&wb)))
    }

    /// The posterior after one more observation, with `beta`, `tau2`, `theta`
    /// and the nugget held fixed. The matrix is refactored from scratch.
    pub fn condition_on(&self, x: DesignPoint, y: f64) -> Result<KrigingModel> {
        self.check_dim(&x)?;
        let training = self.training.with_row(x, y)?;
        KrigingModel::from_parts(training, self.bounds.clone(), self.beta, self.params.clone())
    }
}

/// Serialized form of a [`KrigingModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingModelDoc {
    pub format_version: u32,
    pub kernel: Kernel,
    pub beta: f64,
    pub theta: Vec<f64>,
    pub tau2: f64,
    pub nugget: f64,
    pub bounds: Bounds,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl From<&KrigingModel> for KrigingModelDoc {
    fn from(m: &KrigingModel) -> Self {
        KrigingModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            kernel: m.kernel,
            beta: m.beta,
            theta: m.params.theta.clone(),
            tau2: m.params.tau2,
            nugget: m.params.nugget,
            bounds: m.bounds.clone(),
            x: m.training.points().iter().map(|p| p.coords().to_vec()).collect(),
            y: m.training.observations().to_vec(),
        }
    }
}

impl TryFrom<KrigingModelDoc> for KrigingModel {
    type Error = Error;

    fn try_from(doc: KrigingModelDoc) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let points = doc
            .x
            .into_iter()
            .map(DesignPoint::new)
            .collect::<Result<Vec<_>>>()?;
        let training = Dataset::new(points, doc.y)?;
        let bounds = Bounds::new(doc.bounds.lower, doc.bounds.upper)?;
        let params = KernelParams::new(doc.theta, doc.tau2, doc.nugget)?;
        KrigingModel::from_parts(training, bounds, doc.beta, params)
    }
}

impl Serialize for KrigingModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        KrigingModelDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for KrigingModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = KrigingModelDoc::deserialize(d)?;
        KrigingModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> KrigingModel {
        let data = Dataset::from_1d(&[-1.0, 0.0, 0.5, 2.0], &[0.3, 1.0, 0.8, -0.2]).unwrap();
        let bounds = Bounds::new(vec![-1.0], vec![2.0]).unwrap();
        let params = KernelParams::new(vec![4.0], 0.7, 0.0).unwrap();
        KrigingModel::from_parts(data, bounds, 0.475, params).unwrap()
    }

    #[test]
    fn interpolates_training_points() {
        let m = toy();
        for (x, y) in m.training().clone().iter() {
            let p = m.predict(x).unwrap();
            assert!((p.mean - y).abs() <= 1e-6 * y.abs().max(1.0));
            assert!(p.variance <= 1e-6 * m.tau2());
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let m = toy();
        let far = DesignPoint::scalar(400.0);
        assert_relative_eq!(m.mean(&far).unwrap(), m.beta(), epsilon = 1e-6);
        assert_relative_eq!(m.variance(&far).unwrap(), m.tau2(), epsilon = 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = toy();
        let p = DesignPoint::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(m.mean(&p), Err(Error::InvalidArgument(_))));
        assert!(matches!(m.variance(&p), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn conditioning_matches_covariance_update() {
        let m = toy();
        let x = DesignPoint::scalar(1.2);
        let z = DesignPoint::scalar(0.9);
        let y = 0.35;
        let updated = m.condition_on(x.clone(), y).unwrap();
        let px = m.predict(&x).unwrap();
        let pz = m.predict(&z).unwrap();
        let c = m.posterior_covariance(&z, &x).unwrap();
        let gain = c / px.variance;
        assert_relative_eq!(
            updated.mean(&z).unwrap(),
            pz.mean + gain * (y - px.mean),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            updated.variance(&z).unwrap(),
            pz.variance - c * c / px.variance,
            epsilon = 1e-10
        );
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = toy();
        let json = serde_json::to_string(&m).unwrap();
        let back: KrigingModel = serde_json::from_str(&json).unwrap();
        for i in 0..50 {
            let x = DesignPoint::scalar(-1.0 + 0.06 * i as f64);
            assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
        }
    }

    #[test]
    fn rejects_unknown_format_version() {
        let mut doc = KrigingModelDoc::from(&toy());
        doc.format_version = 99;
        assert!(matches!(KrigingModel::try_from(doc), Err(Error::Format(_))));
    }
}
