//! Choosing the next experiment by information gain per unit cost.
//!
//! `IG(x, t)` is the expected squared change of the event-probability estimate
//! after one hypothetical observation `y ~ y_t(x)`. The observation enters the
//! stack as a difference observation `y - mean_{t-1}(x)` appended to layer `t`
//! with that layer's hyperparameters held fixed, so the update of every
//! Monte Carlo point is a closed-form rank-one correction of layer `t`.
//! The same environment sample set is used before and after the update.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kriging::DesignPoint;
use crate::multifidelity::{validate_nesting, MultiFidelityDataset, MultiFidelityModel};
use crate::rare_event::{compensated_sum, EnvironmentDistribution, EventSpec};

pub const DEFAULT_N_Y: usize = 64;
pub const DEFAULT_IG_N_MC: usize = 2_000;

/// Relative innovation variance below which a hypothetical observation is
/// treated as carrying no information.
const DEGENERATE_INNOVATION: f64 = 1e-12;

/// Cost of running an experiment at `x` on fidelity level `t`.
pub trait CostModel {
    fn cost(&self, x: &DesignPoint, t: usize) -> f64;
}

impl<F> CostModel for F
where
    F: Fn(&DesignPoint, usize) -> f64,
{
    fn cost(&self, x: &DesignPoint, t: usize) -> f64 {
        self(x, t)
    }
}

/// Per-level constant costs `c_1, ..., c_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelCosts(Vec<f64>);

impl LevelCosts {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::invalid("cost table is empty"));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid(format!("costs must be positive, got {c}")));
        }
        Ok(LevelCosts(costs))
    }

    /// `c_t = 10^(t-1)`.
    pub fn default_for(top: usize) -> Self {
        LevelCosts((0..top).map(|t| 10f64.powi(t as i32)).collect())
    }

    pub fn costs(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        LevelCosts::new(self.0.iter().map(|c| c * factor).collect())
    }
}

impl CostModel for LevelCosts {
    fn cost(&self, _x: &DesignPoint, t: usize) -> f64 {
        self.0.get(t.wrapping_sub(1)).copied().unwrap_or(f64::NAN)
    }
}

/// Finite search set for the next experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    points: Vec<DesignPoint>,
    levels: Vec<usize>,
}

impl CandidateSet {
    /// Levels are deduplicated and sorted ascending.
    pub fn new(points: Vec<DesignPoint>, mut levels: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("candidate set has no points"));
        }
        if levels.is_empty() {
            return Err(Error::invalid("candidate set has no levels"));
        }
        let d = points[0].dim();
        if points.iter().any(|p| p.dim() != d) {
            return Err(Error::invalid("candidate points have mixed dimensions"));
        }
        levels.sort_unstable();
        levels.dedup();
        Ok(CandidateSet { points, levels })
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.points.len() * self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A scored `(x, t)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignChoice {
    pub x: DesignPoint,
    pub t: usize,
    pub ig: f64,
    pub cost: f64,
    pub score: f64,
}

/// Monte Carlo and quadrature budgets for information gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgBudget {
    /// Number of stratified draws of the hypothetical observation.
    pub n_y: usize,
    /// Environment sample size shared by `p_n` and every `p_{n+1}`.
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for IgBudget {
    fn default() -> Self {
        IgBudget {
            n_y: DEFAULT_N_Y,
            n_mc: DEFAULT_IG_N_MC,
            seed: 0,
        }
    }
}

/// Midpoint quantiles `Phi^{-1}((i - 1/2) / n)` of the standard normal.
pub fn stratified_normal_quantiles(n: usize) -> Vec<f64> {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    (1..=n)
        .map(|i| std.inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect()
}

/// Everything about the current model and the environment sample set that
/// does not depend on the candidate.
pub struct IgContext<'a> {
    model: &'a MultiFidelityModel,
    spec: EventSpec,
    samples: Vec<DesignPoint>,
    /// Per layer, `L^{-1} r(z_j)` as columns.
    whitened: Vec<DMatrix<f64>>,
    /// Per layer, posterior variance at each sample.
    layer_var: Vec<Vec<f64>>,
    top_mean: Vec<f64>,
    top_var: Vec<f64>,
    p_n: f64,
    quantiles: Vec<f64>,
}

impl<'a> IgContext<'a> {
    pub fn new(
        model: &'a MultiFidelityModel,
        env: &EnvironmentDistribution,
        spec: &EventSpec,
        budget: &IgBudget,
    ) -> Result<Self> {
        if budget.n_y < 1 || budget.n_mc < 1 {
            return Err(Error::invalid("n_y and n_mc must be >= 1"));
        }
        if env.dim() != model.dim() {
            return Err(Error::invalid("environment and model dimensions differ"));
        }
        let samples = env.sample(budget.n_mc, budget.seed);
        let mut whitened = Vec::with_capacity(model.top());
        let mut layer_var = Vec::with_capacity(model.top());
        let mut top_mean = vec![0.0; samples.len()];
        let mut top_var = vec![0.0; samples.len()];
        for layer in model.layers() {
            let n = layer.training().len();
            let mut w_mat = DMatrix::<f64>::zeros(n, samples.len());
            let mut vars = Vec::with_capacity(samples.len());
            for (j, z) in samples.iter().enumerate() {
                let r = layer.cross_correlations(z);
                let w = layer.whitened(&r);
                let v = layer.variance_from_whitened(&w);
                top_mean[j] += layer.mean_from(&r);
                top_var[j] += v;
                vars.push(v);
                w_mat.set_column(j, &w);
            }
            whitened.push(w_mat);
            layer_var.push(vars);
        }
        let p_n = mean_of(top_mean.iter().zip(&top_var).map(|(&m, &v)| spec.probability(m, v)), samples.len());
        Ok(IgContext {
            model,
            spec: *spec,
            samples,
            whitened,
            layer_var,
            top_mean,
            top_var,
            p_n,
            quantiles: stratified_normal_quantiles(budget.n_y),
        })
    }

    /// The current estimate `p_n` on the shared sample set.
    pub fn p_n(&self) -> f64 {
        self.p_n
    }

    pub fn samples(&self) -> &[DesignPoint] {
        &self.samples
    }

    /// Information gain of observing level `t` at `x`.
    pub fn information_gain(&self, x: &DesignPoint, t: usize) -> Result<f64> {
        let layer = self.model.layer(t)?;
        if x.dim() != self.model.dim() {
            return Err(Error::invalid("candidate dimension differs from the model"));
        }
        // spread of the hypothetical observation y ~ y_t(x)
        let spread = self.model.variance(x, t)?.sqrt();

        let tau2 = layer.tau2();
        let nugget = layer.params().nugget;
        let r_x = layer.cross_correlations(x);
        let w_x = layer.whitened(&r_x);
        // predictive variance of a new layer-t observation at x
        let innovation_var = tau2 * (1.0 + nugget - w_x.norm_squared());
        if innovation_var <= DEGENERATE_INNOVATION * tau2 {
            return Ok(0.0);
        }

        // posterior covariance between layer t at each sample and at x
        let w_mat = &self.whitened[t - 1];
        let proj = w_mat.tr_mul(&w_x);
        let n = self.samples.len();
        let mut gain = Vec::with_capacity(n);
        let mut new_var = Vec::with_capacity(n);
        for j in 0..n {
            let c = tau2 * (layer.correlation(&self.samples[j], x) - proj[j]);
            gain.push(c / innovation_var);
            let layer_new = (self.layer_var[t - 1][j] - c * c / innovation_var).max(0.0);
            new_var.push(self.top_var[j] - self.layer_var[t - 1][j] + layer_new);
        }

        let sq_dev = self.quantiles.iter().map(|q| {
            let shift = spread * q;
            let p_next = mean_of(
                (0..n).map(|j| {
                    self.spec
                        .probability(self.top_mean[j] + gain[j] * shift, new_var[j])
                }),
                n,
            );
            (self.p_n - p_next).powi(2)
        });
        Ok(mean_of(sq_dev, self.quantiles.len()))
    }
}

fn mean_of(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    compensated_sum(values) / n as f64
}

/// One-shot information gain; builds an [`IgContext`] internally.
pub fn information_gain(
    model: &MultiFidelityModel,
    env: &EnvironmentDistribution,
    spec: &EventSpec,
    x: &DesignPoint,
    t: usize,
    budget: &IgBudget,
) -> Result<f64> {
    if x.dim() == model.dim() && !model.bounds().contains(x, 1e-9) {
        return Err(Error::invalid(format!("candidate {:?} is outside the design space", x.coords())));
    }
    IgContext::new(model, env, spec, budget)?.information_gain(x, t)
}

/// Scores every `(x, t)` in the candidate set, point-major in input order.
pub fn score_candidates<C: CostModel + ?Sized>(
    model: &MultiFidelityModel,
    env: &EnvironmentDistribution,
    spec: &EventSpec,
    candidates: &CandidateSet,
    cost: &C,
    budget: &IgBudget,
) -> Result<Vec<DesignChoice>> {
    let bounds = model.bounds();
    for p in candidates.points() {
        if p.dim() != model.dim() {
            return Err(Error::invalid("candidate dimension differs from the model"));
        }
        if !bounds.contains(p, 1e-9) {
            return Err(Error::invalid(format!(
                "candidate {:?} is outside the design space",
                p.coords()
            )));
        }
    }
    if let Some(&t) = candidates.levels().iter().find(|&&t| t == 0 || t > model.top()) {
        return Err(Error::invalid(format!(
            "candidate level {t} out of range 1..={}",
            model.top()
        )));
    }
    let ctx = IgContext::new(model, env, spec, budget)?;
    let mut table = Vec::with_capacity(candidates.len());
    for x in candidates.points() {
        for &t in candidates.levels() {
            let ig = ctx.information_gain(x, t)?;
            let c = cost.cost(x, t);
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid(format!(
                    "cost at level {t} must be positive, got {c}"
                )));
            }
            table.push(DesignChoice {
                x: x.clone(),
                t,
                ig,
                cost: c,
                score: ig / c,
            });
        }
    }
    Ok(table)
}

/// Argmax of a scored table; ties go to the lowest level, then the
/// lexicographically smallest point.
pub fn argmax_choice(table: &[DesignChoice]) -> Option<&DesignChoice> {
    table.iter().reduce(|best, c| {
        let better = c.score > best.score
            || (c.score == best.score
                && (c.t < best.t || (c.t == best.t && c.x.lex_cmp(&best.x).is_lt())));
        if better {
            c
        } else {
            best
        }
    })
}

/// The recommended experiment and the full scored table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub choice: DesignChoice,
    pub p_n: f64,
    pub table: Vec<DesignChoice>,
}

/// `argmax_{(x, t)} IG(x, t) / C(x, t)` over the candidate set.
pub fn select_next<C: CostModel + ?Sized>(
    model: &MultiFidelityModel,
    env: &EnvironmentDistribution,
    spec: &EventSpec,
    candidates: &CandidateSet,
    cost: &C,
    budget: &IgBudget,
) -> Result<Selection> {
    let table = score_candidates(model, env, spec, candidates, cost, budget)?;
    let choice = argmax_choice(&table)
        .cloned()
        .ok_or_else(|| Error::invalid("empty candidate set"))?;
    let p_n = IgContext::new(model, env, spec, budget)?.p_n();
    Ok(Selection { choice, p_n, table })
}

/// Appends `choice.x` to levels `1..=choice.t` with the given responses
/// (`responses[i]` is the level-`i+1` value), keeping the design nested.
pub fn augment_dataset(
    data: &MultiFidelityDataset,
    choice: &DesignChoice,
    responses: &[f64],
) -> Result<MultiFidelityDataset> {
    let t = choice.t;
    if t == 0 || t > data.top() {
        return Err(Error::invalid(format!(
            "choice level {t} out of range 1..={}",
            data.top()
        )));
    }
    if responses.len() < t {
        return Err(Error::NestingViolation {
            level: responses.len() + 1,
            lower: responses.len(),
            point: data.level(responses.len() + 1)?.len(),
            coords: choice.x.coords().to_vec(),
        });
    }
    if responses.len() > t {
        return Err(Error::invalid(format!(
            "{} responses supplied for a level-{t} experiment",
            responses.len()
        )));
    }
    let mut levels = data.clone().into_levels();
    for (i, level) in levels.iter_mut().take(t).enumerate() {
        level.data = level.data.with_row(choice.x.clone(), responses[i])?;
    }
    let out = MultiFidelityDataset::new(levels)?;
    validate_nesting(&out)?;
    Ok(out)
}
