use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max-norm distance under which two design points are considered identical.
pub const POINT_TOL: f64 = 1e-10;

/// A location in the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("design point must have dimension >= 1"));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "design point coordinate {i} is not finite ({})",
                coords[i]
            )));
        }
        Ok(DesignPoint(coords))
    }

    /// One-dimensional point. Panics on a non-finite value.
    pub fn scalar(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite coordinate {x}");
        DesignPoint(vec![x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Max-norm distance to `other`.
    pub fn distance_max(&self, other: &DesignPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &DesignPoint) -> bool {
        self.dim() == other.dim() && self.distance_max(other) <= POINT_TOL
    }

    /// Lexicographic order on coordinates (total order via `f64::total_cmp`).
    pub fn lex_cmp(&self, other: &DesignPoint) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.dim().cmp(&other.dim())
    }
}

impl Deref for DesignPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Design points paired with scalar observations at one fidelity level.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DesignPoint>,
    observations: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Validates lengths, dimensions, finiteness and rejects duplicate points.
    pub fn new(points: Vec<DesignPoint>, observations: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("dataset must contain at least one point"));
        }
        if points.len() != observations.len() {
            return Err(Error::invalid(format!(
                "{} points but {} observations",
                points.len(),
                observations.len()
            )));
        }
        let dim = points[0].dim();
        if let Some(i) = points.iter().position(|p| p.dim() != dim) {
            return Err(Error::invalid(format!(
                "point {i} has dimension {} but the dataset has dimension {dim}",
                points[i].dim()
            )));
        }
        if let Some(i) = observations.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("observation {i} is not finite")));
        }
        for j in 1..points.len() {
            if let Some(i) = (0..j).find(|&i| points[i].approx_eq(&points[j])) {
                return Err(Error::DuplicatePoint { row: j, earlier: i });
            }
        }
        Ok(Dataset {
            points,
            observations,
            dim,
        })
    }

    /// Convenience constructor for one-dimensional data.
    pub fn from_1d(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let points = xs
            .iter()
            .map(|&x| DesignPoint::new(vec![x]))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(points, ys.to_vec())
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DesignPoint, f64)> {
        self.points.iter().zip(self.observations.iter().copied())
    }

    /// Index of the point matching `x` within [`POINT_TOL`], if any.
    pub fn find(&self, x: &DesignPoint) -> Option<usize> {
        self.points.iter().position(|p| p.approx_eq(x))
    }

    /// Returns a copy with one extra row appended.
    pub fn with_row(&self, x: DesignPoint, y: f64) -> Result<Self> {
        if x.dim() != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {} but the dataset has dimension {}",
                x.dim(),
                self.dim
            )));
        }
        if !y.is_finite() {
            return Err(Error::invalid("observation is not finite"));
        }
        if let Some(i) = self.find(&x) {
            return Err(Error::DuplicatePoint {
                row: self.len(),
                earlier: i,
            });
        }
        let mut out = self.clone();
        out.points.push(x);
        out.observations.push(y);
        Ok(out)
    }

    pub fn mean_observation(&self) -> f64 {
        self.observations.iter().sum::<f64>() / self.len() as f64
    }
}

/// Axis-aligned design-space box used to map coordinates onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("bounds must be nonempty and of equal length"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(format!(
                    "invalid bounds for coordinate {i}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Bounds { lower, upper })
    }

    /// Bounding box of a nonempty point set.
    pub fn from_points(points: &[DesignPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("cannot take bounds of an empty point set"))?;
        let mut lower = first.coords().to_vec();
        let mut upper = lower.clone();
        for p in points {
            if p.dim() != lower.len() {
                return Err(Error::invalid("points of mixed dimension"));
            }
            for (k, &c) in p.iter().enumerate() {
                lower[k] = lower[k].min(c);
                upper[k] = upper[k].max(c);
            }
        }
        Bounds::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn width(&self, k: usize) -> f64 {
        let w = self.upper[k] - self.lower[k];
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    /// Affine map onto the unit box; degenerate (zero-width) axes use width 1.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &c)| (c - self.lower[k]) / self.width(k))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, &c)| self.lower[k] + c * self.width(k))
            .collect()
    }

    /// Membership with an absolute slack of `tol` per coordinate.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(k, &c)| c >= self.lower[k] - tol && c <= self.upper[k] + tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty_points() {
        assert!(DesignPoint::new(vec![]).is_err());
        assert!(DesignPoint::new(vec![1.0, f64::NAN]).is_err());
        assert!(DesignPoint::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_duplicates_within_tolerance() {
        let err = Dataset::from_1d(&[0.0, 1.0, 1.0 + 1e-12], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::DuplicatePoint { row: 2, earlier: 1 }));
        assert!(Dataset::from_1d(&[0.0, 1e-9], &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn rejects_length_and_dimension_mismatch() {
        assert!(Dataset::from_1d(&[0.0, 1.0], &[1.0]).is_err());
        assert!(Dataset::from_1d(&[], &[]).is_err());
        let pts = vec![
            DesignPoint::new(vec![0.0]).unwrap(),
            DesignPoint::new(vec![0.0, 1.0]).unwrap(),
        ];
        assert!(Dataset::new(pts, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn normalization_round_trips() {
        let b = Bounds::new(vec![-5.0, 0.0], vec![5.0, 0.0]).unwrap();
        let u = b.normalize(&[0.0, 3.0]);
        assert_eq!(u, vec![0.5, 3.0]);
        assert_eq!(b.denormalize(&u), vec![0.0, 3.0]);
    }

    #[test]
    fn lexicographic_order() {
        let a = DesignPoint::new(vec![1.0, 2.0]).unwrap();
        let b = DesignPoint::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(a.lex_cmp(&b), std::cmp::Ordering::Less);
        assert_eq!(b.lex_cmp(&a), std::cmp::Ordering::Greater);
        assert_eq!(a.lex_cmp(&a), std::cmp::Ordering::Equal);
    }
}
