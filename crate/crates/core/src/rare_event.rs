//! Probability of a safety-critical event under the environment distribution.
//!
//! With the fused surface `y_T`, the estimate is `E_x[P(y_T(x) >= gamma)]`:
//! environment draws `x_1..x_n ~ f` are pushed through the Gaussian marginal
//! of `y_T(x_i)` and the tail probabilities are averaged.

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::kriging::{Bounds, DesignPoint};
use crate::multifidelity::MultiFidelityModel;
use crate::rng;

pub const DEFAULT_N_MC: usize = 100_000;

/// Marginal law of one environment coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::invalid(format!(
                        "uniform marginal needs finite low < high, got [{low}, {high}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform { low, high } => (low, high),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform { low, high } => low + (high - low) * rng.gen::<f64>(),
        }
    }
}

/// Independent product of per-coordinate marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDistribution {
    marginals: Vec<Marginal>,
    #[serde(default)]
    description: String,
}

impl EnvironmentDistribution {
    pub fn new(marginals: Vec<Marginal>, description: impl Into<String>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::invalid("environment needs at least one coordinate"));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(EnvironmentDistribution {
            marginals,
            description: description.into(),
        })
    }

    /// Independent uniforms over a box.
    pub fn uniform_box(bounds: &Bounds) -> Result<Self> {
        let marginals = bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(&low, &high)| Marginal::Uniform { low, high })
            .collect();
        EnvironmentDistribution::new(marginals, "independent uniforms over the design box")
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn support(&self) -> Bounds {
        let (lower, upper) = self.marginals.iter().map(Marginal::support).unzip();
        Bounds { lower, upper }
    }

    /// `n` i.i.d. draws from the Monte Carlo stream of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DesignPoint> {
        let mut rng = rng::stream(seed, rng::MC);
        (0..n)
            .map(|_| {
                let coords = self.marginals.iter().map(|m| m.sample(&mut rng)).collect();
                DesignPoint::new(coords).expect("marginals sample finite values")
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Event when `g(x) >= gamma`.
    Exceed,
    /// Event when `g(x) <= gamma` (e.g. minimum range at or below zero).
    FallBelow,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exceed" => Ok(Direction::Exceed),
            "fall-below" | "fall_below" => Ok(Direction::FallBelow),
            other => Err(Error::invalid(format!(
                "direction must be `exceed` or `fall-below`, got `{other}`"
            ))),
        }
    }
}

/// Threshold and direction of a safety-critical event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub gamma: f64,
    pub direction: Direction,
}

impl EventSpec {
    /// `gamma` may be infinite (always / never events) but not NaN.
    pub fn new(gamma: f64, direction: Direction) -> Result<Self> {
        if gamma.is_nan() {
            return Err(Error::invalid("gamma must not be NaN"));
        }
        Ok(EventSpec { gamma, direction })
    }

    pub fn exceed(gamma: f64) -> Self {
        EventSpec::new(gamma, Direction::Exceed).expect("gamma is not NaN")
    }

    pub fn fall_below(gamma: f64) -> Self {
        EventSpec::new(gamma, Direction::FallBelow).expect("gamma is not NaN")
    }

    /// Whether a deterministic value triggers the event (ties count).
    pub fn triggered(&self, value: f64) -> bool {
        match self.direction {
            Direction::Exceed => value >= self.gamma,
            Direction::FallBelow => value <= self.gamma,
        }
    }

    /// `P(Y triggers the event)` for `Y ~ N(mean, variance)`; a point mass
    /// when `variance` is zero.
    pub fn probability(&self, mean: f64, variance: f64) -> f64 {
        if variance <= 0.0 {
            return if self.triggered(mean) { 1.0 } else { 0.0 };
        }
        let sd = variance.sqrt();
        match self.direction {
            Direction::Exceed => gaussian_upper_tail((self.gamma - mean) / sd),
            Direction::FallBelow => gaussian_upper_tail((mean - self.gamma) / sd),
        }
    }
}

/// `P(Z >= z)` for a standard normal `Z`.
pub fn gaussian_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub n_samples: usize,
    /// Monte Carlo standard error of the average.
    pub std_error: f64,
    pub seed: u64,
}

impl ProbabilityEstimate {
    /// Average and standard error of per-sample terms, accumulated in order.
    pub(crate) fn from_terms(terms: &[f64], seed: u64) -> Self {
        let n = terms.len();
        let mean = compensated_sum(terms.iter().copied()) / n as f64;
        let var = if n > 1 {
            compensated_sum(terms.iter().map(|t| (t - mean) * (t - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        ProbabilityEstimate {
            value: mean.clamp(0.0, 1.0),
            n_samples: n,
            std_error: (var / n as f64).sqrt(),
            seed,
        }
    }
}

/// Neumaier summation.
pub(crate) fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// JSON record written for an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub value: f64,
    pub n_samples: usize,
    pub std_error: f64,
    pub seed: u64,
    pub gamma: f64,
    pub direction: Direction,
}

impl EstimateRecord {
    pub fn new(est: &ProbabilityEstimate, spec: &EventSpec) -> Self {
        EstimateRecord {
            value: est.value,
            n_samples: est.n_samples,
            std_error: est.std_error,
            seed: est.seed,
            gamma: spec.gamma,
            direction: spec.direction,
        }
    }
}

fn check_env(model: &MultiFidelityModel, env: &EnvironmentDistribution) -> Result<()> {
    if env.dim() != model.dim() {
        return Err(Error::invalid(format!(
            "environment has dimension {} but the model has dimension {}",
            env.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Surrogate estimate of the event probability using the top-fidelity surface.
pub fn event_probability(
    model: &MultiFidelityModel,
    env: &EnvironmentDistribution,
    spec: &EventSpec,
    n_mc: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if n_mc < 1 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    check_env(model, env)?;
    let top = model.top();
    let terms = env
        .sample(n_mc, seed)
        .iter()
        .map(|x| {
            let p = model.predict(x, top)?;
            Ok(spec.probability(p.mean, p.variance))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityEstimate::from_terms(&terms, seed))
}

/// Crude Monte Carlo on the true performance function (validation oracle).
pub fn crude_mc_oracle<F>(
    true_fn: F,
    env: &EnvironmentDistribution,
    spec: &EventSpec,
    n: usize,
    seed: u64,
) -> Result<ProbabilityEstimate>
where
    F: Fn(&DesignPoint) -> f64,
{
    if n < 1 {
        return Err(Error::invalid("n must be >= 1"));
    }
    let hits = env
        .sample(n, seed)
        .iter()
        .filter(|x| spec.triggered(true_fn(x)))
        .count();
    let p = hits as f64 / n as f64;
    Ok(ProbabilityEstimate {
        value: p,
        n_samples: n,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        seed,
    })
}
