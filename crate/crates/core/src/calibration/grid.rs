use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Lower end of the ability range used for every grid computation.
pub const THETA_MIN: f64 = -4.0;
/// Upper end of the ability range used for every grid computation.
pub const THETA_MAX: f64 = 4.0;
pub const DEFAULT_NODES: usize = 61;

/// Ability nodes with prior masses that sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    #[serde(skip)]
    log_weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Equally spaced nodes over `[lo, hi]` carrying a Normal(`mean`, `sd`) prior.
    ///
    /// Masses follow the trapezoid rule (half weight at the two end nodes).
    pub fn normal(n: usize, lo: f64, hi: f64, mean: f64, sd: f64) -> Result<Self, CalibrationError> {
        if n < 2 || hi.partial_cmp(&lo) != Some(Ordering::Greater) || sd.is_nan() || sd <= 0.0 {
            return Err(CalibrationError::InvalidGrid(format!(
                "need n >= 2, hi > lo and sd > 0 (n={n}, lo={lo}, hi={hi}, sd={sd})"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        let raw: Vec<f64> = nodes
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let z = (x - mean) / sd;
                let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                end * (-0.5 * z * z).exp()
            })
            .collect();
        Self::from_masses(nodes, raw)
    }

    /// Builds a grid from arbitrary positive masses, normalizing them.
    pub fn from_masses(nodes: Vec<f64>, masses: Vec<f64>) -> Result<Self, CalibrationError> {
        if nodes.len() != masses.len() || nodes.is_empty() {
            return Err(CalibrationError::InvalidGrid("nodes and masses must match and be non-empty".into()));
        }
        if nodes.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(Ordering::Greater)) {
            return Err(CalibrationError::InvalidGrid("nodes must be strictly ascending".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m <= 0.0) {
            return Err(CalibrationError::InvalidGrid("masses must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        let weights: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            nodes,
            weights,
            log_weights,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl Default for QuadratureGrid {
    /// 61 nodes over `[-4, 4]` with a standard normal prior.
    fn default() -> Self {
        Self::normal(DEFAULT_NODES, THETA_MIN, THETA_MAX, 0.0, 1.0).expect("static grid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_invariants() {
        let g = QuadratureGrid::default();
        assert_eq!(g.len(), 61);
        assert_eq!(g.nodes()[0], -4.0);
        assert_eq!(g.nodes()[60], 4.0);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(g.weights().iter().all(|w| *w > 0.0));
        let mean: f64 = g.nodes().iter().zip(g.weights()).map(|(x, w)| x * w).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(QuadratureGrid::normal(1, -4.0, 4.0, 0.0, 1.0).is_err());
        assert!(QuadratureGrid::from_masses(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(QuadratureGrid::from_masses(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }
}
