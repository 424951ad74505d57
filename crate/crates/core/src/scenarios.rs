//! Built-in benchmark suites.
//!
//! * A one-dimensional three-fidelity family on `[-5, 5]`:
//!   `g(x) = exp(-(x/2)^2)`, `h_2(x) = exp(-(x/3)^2) - 0.1`, `h_1(x) = 0.7 - (x/6)^2`.
//! * A lane-change cut-in scenario over `(v, Rdot, 1/R)` whose performance
//!   function is the minimum range between the cut-in vehicle and the test
//!   vehicle under a reaction-delay / constant-deceleration model.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::{Bounds, Dataset, DesignPoint};
use crate::multifidelity::{FidelityLevel, MultiFidelityDataset};
use crate::rng;

pub const DOMAIN_1D: (f64, f64) = (-5.0, 5.0);

/// Number of evenly spaced points used to score 1D surfaces.
pub const MSE_GRID_1D_POINTS: usize = 201;

/// Level 3 is the performance function `g`, levels 1 and 2 its approximations.
pub fn eval_1d(level: usize, x: f64) -> Result<f64> {
    if !(DOMAIN_1D.0..=DOMAIN_1D.1).contains(&x) {
        return Err(Error::invalid(format!("x = {x} outside [-5, 5]")));
    }
    match level {
        1 => Ok(0.7 - (x / 6.0).powi(2)),
        2 => Ok((-(x / 3.0).powi(2)).exp() - 0.1),
        3 => Ok((-(x / 2.0).powi(2)).exp()),
        _ => Err(Error::invalid(format!("1D suite has levels 1..=3, got {level}"))),
    }
}

/// The performance function `g` of the 1D suite (no domain check).
pub fn g_1d(x: f64) -> f64 {
    (-(x / 2.0).powi(2)).exp()
}

fn points_1d(xs: &[f64]) -> Vec<DesignPoint> {
    xs.iter().map(|&x| DesignPoint::scalar(x)).collect()
}

/// Design coordinates of the three 1D levels (lowest fidelity first).
pub fn design_1d_coords() -> [Vec<f64>; 3] {
    let low: Vec<f64> = (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect();
    let mid: Vec<f64> = (0..=6).map(|i| -5.0 + 1.5 * i as f64).collect();
    let top = vec![-5.0, -2.0, 1.0, 4.0];
    [low, mid, top]
}

fn level_1d(t: usize, label: &str, xs: &[f64]) -> Result<FidelityLevel> {
    let ys = xs.iter().map(|&x| eval_1d(t, x)).collect::<Result<Vec<_>>>()?;
    Ok(FidelityLevel {
        label: label.into(),
        data: Dataset::new(points_1d(xs), ys)?,
    })
}

/// The nested 21 / 7 / 4 point design of the 1D suite.
pub fn design_1d() -> Result<MultiFidelityDataset> {
    let [low, mid, top] = design_1d_coords();
    MultiFidelityDataset::new(vec![
        level_1d(1, "h1", &low)?,
        level_1d(2, "h2", &mid)?,
        level_1d(3, "g", &top)?,
    ])
}

/// 201 evenly spaced points on `[-5, 5]` with their `g` values.
pub fn mse_grid_1d() -> Dataset {
    let n = MSE_GRID_1D_POINTS - 1;
    let xs: Vec<f64> = (0..=n)
        .map(|i| DOMAIN_1D.0 + (DOMAIN_1D.1 - DOMAIN_1D.0) * i as f64 / n as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| g_1d(x)).collect();
    Dataset::from_1d(&xs, &ys).expect("grid points are distinct")
}

/// Lane-change kinematics. Defaults: 0.5 s reaction delay, 3 m/s² deceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneChangeParams {
    /// Seconds before the test vehicle starts braking.
    pub reaction_delay: f64,
    /// Deceleration of the closing speed, m/s².
    pub decel: f64,
}

impl Default for LaneChangeParams {
    fn default() -> Self {
        LaneChangeParams {
            reaction_delay: 0.5,
            decel: 3.0,
        }
    }
}

/// Cut-in state: lead velocity `v` (m/s), closing speed `rdot` (m/s), range `r` (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeInput {
    pub v: f64,
    pub rdot: f64,
    pub r: f64,
}

pub const V_RANGE: (f64, f64) = (5.0, 35.0);
pub const RDOT_RANGE: (f64, f64) = (0.0, 30.0);
pub const INV_R_RANGE: (f64, f64) = (0.1, 1.0);
const BOUND_SLACK: f64 = 1e-9;

impl LaneChangeInput {
    /// From a design point stored as `(v, rdot, 1/r)`.
    pub fn from_point(p: &DesignPoint) -> Result<Self> {
        if p.dim() != 3 {
            return Err(Error::invalid(format!(
                "lane-change points have 3 coordinates, got {}",
                p.dim()
            )));
        }
        if p[2] <= 0.0 {
            return Err(Error::invalid("1/R must be positive"));
        }
        Ok(LaneChangeInput {
            v: p[0],
            rdot: p[1],
            r: 1.0 / p[2],
        })
    }

    pub fn to_point(&self) -> DesignPoint {
        DesignPoint::new(vec![self.v, self.rdot, 1.0 / self.r]).expect("finite input")
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo - BOUND_SLACK && x <= hi + BOUND_SLACK;
        if !(self.v.is_finite() && self.rdot.is_finite() && self.r.is_finite() && self.r > 0.0) {
            return Err(Error::invalid("lane-change input must be finite with r > 0"));
        }
        if !inside(self.v, V_RANGE) || !inside(self.rdot, RDOT_RANGE) || !inside(1.0 / self.r, INV_R_RANGE) {
            return Err(Error::invalid(format!(
                "lane-change input out of bounds: v={}, rdot={}, r={}",
                self.v, self.rdot, self.r
            )));
        }
        Ok(())
    }
}

/// Minimum range reached during the cut-in:
/// `max(0, r - rdot * delay - rdot^2 / (2 * decel))`.
pub fn lane_change_min_range(input: &LaneChangeInput, params: &LaneChangeParams) -> Result<f64> {
    input.validate()?;
    if !(params.reaction_delay >= 0.0 && params.decel > 0.0) {
        return Err(Error::invalid("reaction delay must be >= 0 and deceleration > 0"));
    }
    let closure = input.rdot * params.reaction_delay + input.rdot * input.rdot / (2.0 * params.decel);
    Ok((input.r - closure).max(0.0))
}

/// Design box of the lane-change grid in `(v, rdot, 1/r)`.
pub fn lane_change_bounds() -> Bounds {
    Bounds::new(
        vec![V_RANGE.0, RDOT_RANGE.0, INV_R_RANGE.0],
        vec![V_RANGE.1, RDOT_RANGE.1, INV_R_RANGE.1],
    )
    .expect("static bounds")
}

/// The 16 × 16 × 10 mesh over `(v, rdot, 1/r)`, `v`-major.
pub fn mesh_grid_3d() -> Vec<DesignPoint> {
    let mut out = Vec::with_capacity(2560);
    for i in 0..16 {
        let v = 5.0 + 2.0 * i as f64;
        for j in 0..16 {
            let rdot = 2.0 * j as f64;
            for k in 1..=10 {
                let inv_r = k as f64 / 10.0;
                out.push(DesignPoint::new(vec![v, rdot, inv_r]).expect("finite"));
            }
        }
    }
    out
}

/// How the lane-change grid is split into training levels and a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub seed: u64,
    /// Size of the low-fidelity (noisy) level.
    pub n_low: usize,
    /// Size of the high-fidelity level, drawn from the low-fidelity points.
    pub n_high: usize,
    /// Half-width of the uniform noise added to low-fidelity observations.
    pub noise: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            n_low: 1000,
            n_high: 500,
            noise: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaneChangeSplit {
    /// Level 1: noisy observations on `D_1`; level 2: true values on `D_2 ⊆ D_1`.
    pub data: MultiFidelityDataset,
    /// Remaining grid points with true values.
    pub test: Dataset,
}

/// Splits the mesh grid into `D_1` (noisy), `D_2 ⊆ D_1` (exact) and a test set.
pub fn build_lane_change_split(spec: &SplitSpec, params: &LaneChangeParams) -> Result<LaneChangeSplit> {
    let grid = mesh_grid_3d();
    if spec.n_high == 0 || spec.n_high > spec.n_low || spec.n_low >= grid.len() {
        return Err(Error::invalid(format!(
            "need 0 < n_high <= n_low < {}, got n_high={}, n_low={}",
            grid.len(),
            spec.n_high,
            spec.n_low
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::invalid("noise amplitude must be nonnegative"));
    }
    let truth = grid
        .iter()
        .map(|p| lane_change_min_range(&LaneChangeInput::from_point(p)?, params))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.shuffle(&mut rng::stream(spec.seed, rng::SPLIT));
    let (train, test) = order.split_at(spec.n_low);
    let mut high: Vec<usize> = train[..spec.n_high].to_vec();
    let mut low: Vec<usize> = train.to_vec();
    let mut test: Vec<usize> = test.to_vec();
    low.sort_unstable();
    high.sort_unstable();
    test.sort_unstable();

    let mut noise_rng = rng::stream(spec.seed, rng::NOISE);
    let low_obs: Vec<f64> = low
        .iter()
        .map(|&i| {
            let e = if spec.noise > 0.0 {
                noise_rng.gen_range(-spec.noise..=spec.noise)
            } else {
                0.0
            };
            truth[i] + e
        })
        .collect();

    let pick = |idx: &[usize]| idx.iter().map(|&i| grid[i].clone()).collect::<Vec<_>>();
    let data = MultiFidelityDataset::new(vec![
        FidelityLevel {
            label: "historical".into(),
            data: Dataset::new(pick(&low), low_obs)?,
        },
        FidelityLevel {
            label: "current".into(),
            data: Dataset::new(pick(&high), high.iter().map(|&i| truth[i]).collect())?,
        },
    ])?;
    let test = Dataset::new(pick(&test), test.iter().map(|&i| truth[i]).collect())?;
    Ok(LaneChangeSplit { data, test })
}

/// Mean squared error of `predict` against the observations of `test`.
pub fn mse_on<F>(predict: F, test: &Dataset) -> Result<f64>
where
    F: Fn(&DesignPoint) -> Result<f64>,
{
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut sum = 0.0;
    for (x, y) in test.iter() {
        let e = predict(x)? - y;
        sum += e * e;
    }
    Ok(sum / test.len() as f64)
}
