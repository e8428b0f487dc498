//! Spatial grid, discrete velocity set, and the blow-up coordinate grid.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Discrete velocity set with quadrature weights, so velocity integrals are
/// weighted sums. The default is the two-velocity set `{-v0, +v0}` with unit
/// weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySet {
    speeds: Vec<f64>,
    weights: Vec<f64>,
}

impl VelocitySet {
    pub fn new(speeds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if speeds.is_empty() || speeds.len() != weights.len() {
            return Err(Error::Config(
                "velocity set needs matching, non-empty speeds and weights".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("velocity weights must be > 0".into()));
        }
        Ok(Self { speeds, weights })
    }

    pub fn two_velocity(v0: f64) -> Result<Self> {
        if !(v0 > 0.0) {
            return Err(Error::Config(format!("run speed v0 must be > 0, got {v0}")));
        }
        Self::new(vec![-v0, v0], vec![1.0, 1.0])
    }

    pub fn len(&self) -> usize {
        self.speeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speeds.is_empty()
    }

    pub fn speed(&self, i: usize) -> f64 {
        self.speeds[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total weight `|V|`, the measure of the velocity set.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// Weighted average of per-velocity values (densities).
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let s: f64 = values
            .iter()
            .zip(&self.weights)
            .map(|(&q, &w)| w * q)
            .sum();
        s / self.total_weight()
    }
}

/// Uniform periodic grid of cell-centered finite volumes on `[0, length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub nx: usize,
    pub length: f64,
    pub dx: f64,
}

impl SpatialGrid {
    pub fn new(length: f64, nx: usize) -> Result<Self> {
        if nx == 0 || !(length > 0.0) {
            return Err(Error::Config(format!("invalid spatial grid: nx={nx}, length={length}")));
        }
        Ok(Self { nx, length, dx: length / nx as f64 })
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Cell index of a (wrapped) position.
    pub fn cell_of(&self, x: f64) -> usize {
        let xw = x.rem_euclid(self.length);
        ((xw / self.dx) as usize).min(self.nx - 1)
    }
}

/// Grid for the full kinetic model: periodic in `x`, discrete velocities,
/// and a symmetric truncated domain `[-y_halfwidth, y_halfwidth]` for the
/// blow-up coordinate.
#[derive(Debug, Clone)]
pub struct FullGrid {
    pub space: SpatialGrid,
    pub vset: VelocitySet,
    pub ny: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub dy: f64,
}

impl FullGrid {
    pub fn new(space: SpatialGrid, vset: VelocitySet, ny: usize, y_halfwidth: f64) -> Result<Self> {
        if ny < 16 {
            return Err(Error::Config(format!("ny must be >= 16, got {ny}")));
        }
        if !(y_halfwidth > 0.0) {
            return Err(Error::Config(format!("y_halfwidth must be > 0, got {y_halfwidth}")));
        }
        let dy = 2.0 * y_halfwidth / ny as f64;
        Ok(Self { space, vset, ny, y_min: -y_halfwidth, y_max: y_halfwidth, dy })
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy
    }

    pub fn y_face(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy
    }

    pub fn n_cells(&self) -> usize {
        self.space.nx * self.vset.len() * self.ny
    }

    /// The truncated `y` domain must contain the limit concentration profile:
    /// its center `|u_max|/G(0)` plus three noise standard deviations
    /// `3/sqrt(G(0))`.
    pub fn validate_y_coverage(&self, u_max: f64, g0: f64) -> Result<()> {
        let needed = u_max.abs() / g0 + 3.0 / g0.sqrt();
        if self.y_max <= needed {
            return Err(Error::Config(format!(
                "y_halfwidth {} too small: needs > |u_max|/G0 + 3/sqrt(G0) = {:.4}",
                self.y_max, needed
            )));
        }
        Ok(())
    }
}
