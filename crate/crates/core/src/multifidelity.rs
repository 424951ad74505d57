//! The multi-fidelity stack `y_t(x) = d_1(x) + ... + d_t(x)`.
//!
//! Layer 1 is a Kriging fit of the lowest-fidelity data. Layer `t >= 2` is a
//! Kriging fit of the differences `Y_t(x) - Y_{t-1}(x)` over the points of
//! level `t`, which must also be observed at level `t - 1` (nested designs).
//! Layers are independent fields, so means and variances both add.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kriging::{fit_mle, Bounds, Dataset, DesignPoint, FitConfig, KrigingModel, Prediction};
use crate::rng;

/// One fidelity level: data plus a human-readable source label.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityLevel {
    pub label: String,
    pub data: Dataset,
}

/// Datasets for levels `1..=T`, lowest fidelity first.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelityDataset {
    levels: Vec<FidelityLevel>,
}

/// For each level `t >= 2` (index `t - 2`), the row of level `t - 1` that
/// holds each point of level `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub maps: Vec<Vec<usize>>,
}

impl MultiFidelityDataset {
    /// Builds the bundle; nesting is checked separately by [`validate_nesting`].
    pub fn new(levels: Vec<FidelityLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("need at least one fidelity level"));
        }
        let d = levels[0].data.dim();
        if let Some(t) = levels.iter().position(|l| l.data.dim() != d) {
            return Err(Error::invalid(format!(
                "level {} has dimension {} but level 1 has dimension {d}",
                t + 1,
                levels[t].data.dim()
            )));
        }
        Ok(MultiFidelityDataset { levels })
    }

    pub fn levels(&self) -> &[FidelityLevel] {
        &self.levels
    }

    /// Number of levels `T`.
    pub fn top(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].data.dim()
    }

    /// Data at level `t` (1-based).
    pub fn level(&self, t: usize) -> Result<&Dataset> {
        check_level(t, self.top())?;
        Ok(&self.levels[t - 1].data)
    }

    pub(crate) fn into_levels(self) -> Vec<FidelityLevel> {
        self.levels
    }
}

fn check_level(t: usize, top: usize) -> Result<()> {
    if t == 0 || t > top {
        return Err(Error::invalid(format!(
            "fidelity level {t} out of range 1..={top}"
        )));
    }
    Ok(())
}

/// Checks `X_T ⊆ ... ⊆ X_1` and returns the row alignment between adjacent levels.
pub fn validate_nesting(data: &MultiFidelityDataset) -> Result<Alignment> {
    let mut maps = Vec::with_capacity(data.top().saturating_sub(1));
    for t in 2..=data.top() {
        let upper = &data.levels[t - 1].data;
        let lower = &data.levels[t - 2].data;
        let map = upper
            .points()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                lower.find(x).ok_or_else(|| Error::NestingViolation {
                    level: t,
                    lower: t - 1,
                    point: i,
                    coords: x.coords().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        maps.push(map);
    }
    Ok(Alignment { maps })
}

/// `(X_t, D_t)` with `D_t = Y_t - Y_{t-1}` on the points of level `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceData {
    pub level: usize,
    pub data: Dataset,
}

pub fn build_difference_data(
    data: &MultiFidelityDataset,
    alignment: &Alignment,
    t: usize,
) -> Result<DifferenceData> {
    check_level(t, data.top())?;
    if t < 2 {
        return Err(Error::invalid("difference data is defined for levels >= 2"));
    }
    let map = alignment
        .maps
        .get(t - 2)
        .ok_or_else(|| Error::invalid("alignment does not cover this level"))?;
    let upper = &data.levels[t - 1].data;
    let lower = &data.levels[t - 2].data;
    if map.len() != upper.len() {
        return Err(Error::invalid("alignment does not match the dataset"));
    }
    let diffs: Vec<f64> = upper
        .observations()
        .iter()
        .zip(map)
        .map(|(y, &j)| y - lower.observations()[j])
        .collect();
    Ok(DifferenceData {
        level: t,
        data: Dataset::new(upper.points().to_vec(), diffs)?,
    })
}

/// A fitted stack of independent Kriging layers.
#[derive(Debug, Clone)]
pub struct MultiFidelityModel {
    labels: Vec<String>,
    layers: Vec<KrigingModel>,
}

/// Fits layer 1 on `(X_1, Y_1)` and layer `t` on `(X_t, D_t)`.
///
/// Every layer normalizes with the same design box: `config.bounds` when
/// given, else the bounding box of `X_1` (which contains every level).
/// Layer `t` runs its multistart with a seed derived from `config.seed` and `t`.
pub fn fit_multifidelity(
    data: &MultiFidelityDataset,
    config: &FitConfig,
) -> Result<MultiFidelityModel> {
    let alignment = validate_nesting(data)?;
    let bounds = match &config.bounds {
        Some(b) => b.clone(),
        None => Bounds::from_points(data.levels[0].data.points())?,
    };
    let mut layers = Vec::with_capacity(data.top());
    for t in 1..=data.top() {
        let layer_data = if t == 1 {
            data.levels[0].data.clone()
        } else {
            build_difference_data(data, &alignment, t)?.data
        };
        let cfg = FitConfig {
            seed: rng::derive_seed(config.seed, &format!("layer-{t}")),
            bounds: Some(bounds.clone()),
            ..config.clone()
        };
        let layer = fit_mle(&layer_data, &cfg).map_err(|e| match e {
            Error::FittingFailure { diagnostics, .. } => Error::FittingFailure {
                layer: Some(t),
                diagnostics,
            },
            Error::NumericalSingularity(msg) => Error::FittingFailure {
                layer: Some(t),
                diagnostics: msg,
            },
            other => other,
        })?;
        layers.push(layer);
    }
    let labels = data.levels.iter().map(|l| l.label.clone()).collect();
    Ok(MultiFidelityModel { labels, layers })
}

impl MultiFidelityModel {
    /// Assembles a stack from already-fitted layers (lowest first).
    pub fn from_layers(labels: Vec<String>, layers: Vec<KrigingModel>) -> Result<Self> {
        if layers.is_empty() || labels.len() != layers.len() {
            return Err(Error::invalid(
                "need one label per layer and at least one layer",
            ));
        }
        let d = layers[0].dim();
        if layers.iter().any(|l| l.dim() != d) {
            return Err(Error::invalid("layers have mixed dimensions"));
        }
        Ok(MultiFidelityModel { labels, layers })
    }

    pub fn top(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn layers(&self) -> &[KrigingModel] {
        &self.layers
    }

    /// Layer `t` (1-based): the fit of level 1, or of the differences at level `t`.
    pub fn layer(&self, t: usize) -> Result<&KrigingModel> {
        check_level(t, self.top())?;
        Ok(&self.layers[t - 1])
    }

    /// Design box shared by the layers (that of layer 1).
    pub fn bounds(&self) -> &Bounds {
        self.layers[0].bounds()
    }

    /// Posterior mean of `y_t(x)`: the sum of the first `t` layer means.
    pub fn mean(&self, x: &DesignPoint, t: usize) -> Result<f64> {
        check_level(t, self.top())?;
        self.layers[..t].iter().map(|l| l.mean(x)).sum()
    }

    /// Posterior variance of `y_t(x)`: the sum of the first `t` layer variances.
    pub fn variance(&self, x: &DesignPoint, t: usize) -> Result<f64> {
        check_level(t, self.top())?;
        self.layers[..t].iter().map(|l| l.variance(x)).sum()
    }

    pub fn predict(&self, x: &DesignPoint, t: usize) -> Result<Prediction> {
        check_level(t, self.top())?;
        let mut out = Prediction {
            mean: 0.0,
            variance: 0.0,
        };
        for l in &self.layers[..t] {
            let p = l.predict(x)?;
            out.mean += p.mean;
            out.variance += p.variance;
        }
        Ok(out)
    }

    /// Per-level predictions `[y_1(x), ..., y_T(x)]` in one pass.
    pub fn predict_all_levels(&self, x: &DesignPoint) -> Result<Vec<Prediction>> {
        let mut acc = Prediction {
            mean: 0.0,
            variance: 0.0,
        };
        self.layers
            .iter()
            .map(|l| {
                let p = l.predict(x)?;
                acc.mean += p.mean;
                acc.variance += p.variance;
                Ok(acc)
            })
            .collect()
    }

    /// Sum of the layer process variances.
    pub fn total_tau2(&self) -> f64 {
        self.layers.iter().map(KrigingModel::tau2).sum()
    }

    /// Copy of the stack with layer `t` replaced.
    pub fn with_layer(&self, t: usize, layer: KrigingModel) -> Result<Self> {
        check_level(t, self.top())?;
        let mut out = self.clone();
        out.layers[t - 1] = layer;
        Ok(out)
    }
}

pub const STACK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StackLayerDoc {
    label: String,
    model: KrigingModel,
}

#[derive(Serialize, Deserialize)]
struct StackDoc {
    format_version: u32,
    top: usize,
    layers: Vec<StackLayerDoc>,
}

impl Serialize for MultiFidelityModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StackDoc {
            format_version: STACK_FORMAT_VERSION,
            top: self.top(),
            layers: self
                .labels
                .iter()
                .zip(&self.layers)
                .map(|(label, model)| StackLayerDoc {
                    label: label.clone(),
                    model: model.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiFidelityModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = StackDoc::deserialize(d)?;
        if doc.format_version != STACK_FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "stack format version {} (expected {STACK_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.top != doc.layers.len() {
            return Err(D::Error::custom("`top` does not match the number of layers"));
        }
        let (labels, layers) = doc.layers.into_iter().map(|l| (l.label, l.model)).unzip();
        MultiFidelityModel::from_layers(labels, layers).map_err(D::Error::custom)
    }
}
