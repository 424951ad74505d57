//! Maximum-likelihood fitting of `(tau2, theta)`.
//!
//! `beta` is the sample mean of the observations (or, optionally, the
//! generalized least-squares estimate). `tau2` is profiled out in closed form,
//! `tau2 = (Y - beta)' R^{-1} (Y - beta) / n`, which leaves a concentrated
//! likelihood in `log(theta)` only. That surface is maximized by Nelder–Mead
//! from a seeded Latin hypercube of starting points; the best start wins and
//! ties go to the lowest start index.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::{Bounds, Dataset};
use super::kernel::{log_det, next_nugget, whiten, KernelParams, DEFAULT_NUGGET};
use super::model::KrigingModel;
use super::optim::{latin_hypercube, nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::rng;

/// How the constant prior mean is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaEstimator {
    /// Arithmetic mean of the observations.
    #[default]
    SampleMean,
    /// `(1' R^{-1} Y) / (1' R^{-1} 1)`, re-estimated at every `theta`.
    Gls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Starting nugget; escalated tenfold up to `1e-4` when factorization fails.
    pub nugget: f64,
    pub n_starts: usize,
    /// Nelder–Mead evaluation budget per start.
    pub max_evals: usize,
    pub seed: u64,
    /// Search box for each `theta_i` (normalized coordinates).
    pub theta_min: f64,
    pub theta_max: f64,
    pub beta: BetaEstimator,
    /// Design-space box used for normalization; defaults to the data's bounding box.
    pub bounds: Option<Bounds>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            nugget: DEFAULT_NUGGET,
            n_starts: 10,
            max_evals: 200,
            seed: 0,
            theta_min: 1e-2,
            theta_max: 1e3,
            beta: BetaEstimator::SampleMean,
            bounds: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_evals == 0 {
            return Err(Error::invalid("n_starts and max_evals must be positive"));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::invalid("nugget must be nonnegative"));
        }
        if !(self.theta_min > 0.0 && self.theta_max >= self.theta_min && self.theta_max.is_finite()) {
            return Err(Error::invalid("theta search box must satisfy 0 < theta_min <= theta_max"));
        }
        Ok(())
    }
}

/// One multistart run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start_theta: Vec<f64>,
    pub start_log_likelihood: f64,
    pub theta: Vec<f64>,
    pub log_likelihood: f64,
    pub evals: usize,
}

/// What the optimizer did, for diagnostics and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub starts: Vec<StartRecord>,
    pub best: usize,
    /// Nugget of the successful round.
    pub nugget: f64,
    /// Every nugget tried, in order.
    pub nuggets_tried: Vec<f64>,
}

/// Squared coordinate differences for every pair `j < i`, row-major.
struct PairDistances {
    n: usize,
    d: usize,
    sq: Vec<f64>,
}

impl PairDistances {
    fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let d = points.first().map_or(0, Vec::len);
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 0..n {
            for j in 0..i {
                for k in 0..d {
                    let diff = points[i][k] - points[j][k];
                    sq.push(diff * diff);
                }
            }
        }
        PairDistances { n, d, sq }
    }

    fn matrix(&self, theta: &[f64], nugget: f64) -> DMatrix<f64> {
        let mut r = DMatrix::<f64>::zeros(self.n, self.n);
        let mut idx = 0;
        for i in 0..self.n {
            r[(i, i)] = 1.0 + nugget;
            for j in 0..i {
                let s: f64 = (0..self.d).map(|k| theta[k] * self.sq[idx + k]).sum();
                idx += self.d;
                let v = (-s).exp();
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        r
    }
}

struct Objective<'a> {
    pairs: PairDistances,
    y: &'a [f64],
    beta_mode: BetaEstimator,
    tau2_floor: f64,
}

struct Evaluated {
    beta: f64,
    tau2: f64,
    log_likelihood: f64,
}

impl Objective<'_> {
    /// Concentrated log-likelihood at `theta`, or `None` when the matrix does
    /// not factor at this nugget.
    fn evaluate(&self, theta: &[f64], nugget: f64) -> Option<Evaluated> {
        let n = self.y.len();
        let chol = Cholesky::new(self.pairs.matrix(theta, nugget))?;
        let y = DVector::from_column_slice(self.y);
        let beta = match self.beta_mode {
            BetaEstimator::SampleMean => y.mean(),
            BetaEstimator::Gls => {
                let w1 = whiten(&chol, &DVector::from_element(n, 1.0));
                let wy = whiten(&chol, &y);
                w1.dot(&wy) / w1.norm_squared()
            }
        };
        let w = whiten(&chol, &y.add_scalar(-beta));
        let quad = w.norm_squared();
        let tau2 = (quad / n as f64).max(self.tau2_floor);
        let nf = n as f64;
        let l = -0.5
            * (nf * (2.0 * std::f64::consts::PI).ln() + nf * tau2.ln() + log_det(&chol) + quad / tau2);
        l.is_finite().then_some(Evaluated {
            beta,
            tau2,
            log_likelihood: l,
        })
    }
}

/// Fits `beta`, `tau2` and `theta` by maximum likelihood.
pub fn fit_mle(data: &Dataset, config: &FitConfig) -> Result<KrigingModel> {
    fit_mle_with_trace(data, config).map(|(m, _)| m)
}

pub fn fit_mle_with_trace(data: &Dataset, config: &FitConfig) -> Result<(KrigingModel, FitTrace)> {
    config.validate()?;
    let d = data.dim();
    let bounds = match &config.bounds {
        Some(b) if b.dim() != d => {
            return Err(Error::invalid(format!(
                "bounds have dimension {} but data has dimension {d}",
                b.dim()
            )))
        }
        Some(b) => b.clone(),
        None => Bounds::from_points(data.points())?,
    };
    let unit: Vec<Vec<f64>> = data.points().iter().map(|p| bounds.normalize(p)).collect();
    let y = data.observations();
    let scale = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let objective = Objective {
        pairs: PairDistances::new(&unit),
        y,
        beta_mode: config.beta,
        tau2_floor: 1e-12 * scale.max(1.0),
    };

    let lo = vec![config.theta_min.ln(); d];
    let hi = vec![config.theta_max.ln(); d];
    let starts = latin_hypercube(config.n_starts, &lo, &hi, &mut rng::stream(config.seed, rng::FIT));
    let opts = NelderMeadOptions {
        max_evals: config.max_evals,
        ..Default::default()
    };

    let mut nugget = config.nugget;
    let mut nuggets_tried = Vec::new();
    loop {
        nuggets_tried.push(nugget);
        let neg_l = |log_theta: &[f64]| -> f64 {
            let theta: Vec<f64> = log_theta.iter().map(|v| v.exp()).collect();
            objective
                .evaluate(&theta, nugget)
                .map_or(f64::INFINITY, |e| -e.log_likelihood)
        };

        let mut records = Vec::with_capacity(starts.len());
        for s in &starts {
            let start_l = -neg_l(s);
            let m = nelder_mead(neg_l, s, &lo, &hi, opts);
            records.push(StartRecord {
                start_theta: s.iter().map(|v| v.exp()).collect(),
                start_log_likelihood: start_l,
                theta: m.x.iter().map(|v| v.exp()).collect(),
                log_likelihood: -m.f,
                evals: m.evals,
            });
        }

        let best = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.log_likelihood.is_finite())
            .fold(None::<usize>, |acc, (i, r)| match acc {
                Some(b) if records[b].log_likelihood >= r.log_likelihood => Some(b),
                _ => Some(i),
            });

        if let Some(best) = best {
            let theta = records[best].theta.clone();
            let ev = objective
                .evaluate(&theta, nugget)
                .expect("best start was evaluated successfully");
            let params = KernelParams::new(theta, ev.tau2, nugget)?;
            let model = KrigingModel::from_parts(data.clone(), bounds, ev.beta, params)?;
            let trace = FitTrace {
                starts: records,
                best,
                nugget,
                nuggets_tried,
            };
            return Ok((model, trace));
        }

        match next_nugget(nugget) {
            Some(n) => nugget = n,
            None => {
                return Err(Error::FittingFailure {
                    layer: None,
                    diagnostics: format!(
                        "all {} restarts failed to factor the correlation matrix (n = {}, nuggets tried: {:?})",
                        starts.len(),
                        data.len(),
                        nuggets_tried
                    ),
                })
            }
        }
    }
}
