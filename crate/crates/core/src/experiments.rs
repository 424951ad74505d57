//! End-to-end reproductions on the built-in suites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::{fit_mle, Bounds, FitConfig, KrigingModel};
use crate::multifidelity::{fit_multifidelity, MultiFidelityDataset, MultiFidelityModel};
use crate::scenarios::{
    self, build_lane_change_split, lane_change_bounds, mse_on, LaneChangeParams, SplitSpec,
};

/// Fitted hyperparameters of one layer, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub label: String,
    pub n: usize,
    pub beta: f64,
    pub theta: Vec<f64>,
    pub tau2: f64,
    pub nugget: f64,
    pub log_likelihood: f64,
}

impl LayerSummary {
    pub fn new(label: &str, m: &KrigingModel) -> Self {
        LayerSummary {
            label: label.to_string(),
            n: m.training().len(),
            beta: m.beta(),
            theta: m.params().theta.clone(),
            tau2: m.tau2(),
            nugget: m.params().nugget,
            log_likelihood: m.log_likelihood(),
        }
    }
}

pub fn summarize(model: &MultiFidelityModel) -> Vec<LayerSummary> {
    model
        .labels()
        .iter()
        .zip(model.layers())
        .map(|(l, m)| LayerSummary::new(l, m))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Checks {
    /// `mse_kriging > mse_two_level >= mse_three_level`
    pub ordering: bool,
    /// `mse_two_level <= 0.5 * mse_kriging`
    pub halved: bool,
    /// `mse_kriging` in `[0.005, 0.3]`
    pub kriging_band: bool,
    /// `mse_three_level` in `[0.0005, 0.05]`
    pub three_level_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Report {
    pub experiment: String,
    pub seed: u64,
    pub grid_points: usize,
    /// Kriging on the four `g` observations only.
    pub mse_kriging: f64,
    /// `h_2` and `g`.
    pub mse_two_level: f64,
    /// `h_1`, `h_2` and `g`.
    pub mse_three_level: f64,
    pub checks: Exp1Checks,
    pub models: Vec<Vec<LayerSummary>>,
}

impl Exp1Report {
    pub fn passed(&self) -> bool {
        let c = &self.checks;
        c.ordering && c.halved && c.kriging_band && c.three_level_band
    }
}

fn top_mse(model: &MultiFidelityModel, test: &crate::kriging::Dataset) -> Result<f64> {
    mse_on(|x| model.mean(x, model.top()), test)
}

/// Kriging versus two- and three-level stacks on the 1D suite, scored on
/// the 201-point grid.
pub fn run_exp1(seed: u64, fit: &FitConfig) -> Result<Exp1Report> {
    let design = scenarios::design_1d()?;
    let grid = scenarios::mse_grid_1d();
    let cfg = FitConfig {
        seed,
        bounds: Some(Bounds::new(
            vec![scenarios::DOMAIN_1D.0],
            vec![scenarios::DOMAIN_1D.1],
        )?),
        ..fit.clone()
    };
    let levels = design.levels();
    let stacks = [
        MultiFidelityDataset::new(levels[2..].to_vec())?,
        MultiFidelityDataset::new(levels[1..].to_vec())?,
        design.clone(),
    ];
    let mut mses = [0.0; 3];
    let mut models = Vec::with_capacity(3);
    for (i, data) in stacks.iter().enumerate() {
        let m = fit_multifidelity(data, &cfg)?;
        mses[i] = top_mse(&m, &grid)?;
        models.push(summarize(&m));
    }
    let [m1, m2, m3] = mses;
    Ok(Exp1Report {
        experiment: "exp1".into(),
        seed,
        grid_points: grid.len(),
        mse_kriging: m1,
        mse_two_level: m2,
        mse_three_level: m3,
        checks: Exp1Checks {
            ordering: m1 > m2 && m2 >= m3,
            halved: m2 <= 0.5 * m1,
            kriging_band: (0.005..=0.3).contains(&m1),
            three_level_band: (0.0005..=0.05).contains(&m3),
        },
        models,
    })
}

/// Reduced multistart budget for the lane-change fits (n up to 1000).
pub fn exp2_fit_config() -> FitConfig {
    FitConfig {
        n_starts: 3,
        max_evals: 60,
        ..FitConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Run {
    pub seed: u64,
    pub n_test: usize,
    /// Kriging on the exact high-fidelity level alone.
    pub mse_single: f64,
    /// Two-level stack on noisy historical plus exact data.
    pub mse_multi: f64,
    /// `1 - mse_multi / mse_single`
    pub reduction: f64,
    pub single: LayerSummary,
    pub multi: Vec<LayerSummary>,
}

/// One split of the lane-change grid, scored on its held-out points.
pub fn run_exp2_seed(
    seed: u64,
    split: &SplitSpec,
    params: &LaneChangeParams,
    fit: &FitConfig,
) -> Result<Exp2Run> {
    let split = build_lane_change_split(&SplitSpec { seed, ..split.clone() }, params)?;
    let cfg = FitConfig {
        seed,
        bounds: Some(lane_change_bounds()),
        ..fit.clone()
    };
    let high = split.data.level(split.data.top())?;
    let single = fit_mle(high, &cfg)?;
    let multi = fit_multifidelity(&split.data, &cfg)?;
    let mse_single = mse_on(|x| single.mean(x), &split.test)?;
    let mse_multi = top_mse(&multi, &split.test)?;
    Ok(Exp2Run {
        seed,
        n_test: split.test.len(),
        mse_single,
        mse_multi,
        reduction: 1.0 - mse_multi / mse_single,
        single: LayerSummary::new(&split.data.levels()[1].label, &single),
        multi: summarize(&multi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Report {
    pub experiment: String,
    pub runs: Vec<Exp2Run>,
    /// Runs where the stack beats single-level Kriging.
    pub wins: usize,
    pub median_reduction: f64,
}

/// Median with the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs seeds `seed, seed + 1, ..., seed + runs - 1`.
pub fn run_exp2(
    seed: u64,
    runs: usize,
    split: &SplitSpec,
    params: &LaneChangeParams,
    fit: &FitConfig,
) -> Result<Exp2Report> {
    if runs == 0 {
        return Err(Error::invalid("exp2 needs at least one run"));
    }
    let runs = (0..runs as u64)
        .map(|k| run_exp2_seed(seed.wrapping_add(k), split, params, fit))
        .collect::<Result<Vec<_>>>()?;
    let wins = runs.iter().filter(|r| r.mse_multi < r.mse_single).count();
    let reductions: Vec<f64> = runs.iter().map(|r| r.reduction).collect();
    Ok(Exp2Report {
        experiment: "exp2".into(),
        median_reduction: median(&reductions),
        wins,
        runs,
    })
}
