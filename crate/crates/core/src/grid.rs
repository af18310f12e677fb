//! Uniform tensor-product box grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest per-axis sample count accepted by [`Grid::new`].
pub const MIN_RESOLUTION: usize = 8;

/// A uniform box grid in `dim` coordinates `x_0 .. x_{dim-1}`.
///
/// Non-periodic grids include both interval endpoints as samples. Periodic
/// grids sample `[lo, hi)` and treat the box as a torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<(f64, f64)>,
    resolution: Vec<usize>,
    #[serde(default)]
    periodic: bool,
}

impl Grid {
    pub fn new(extents: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        Self::build(extents, resolution, false)
    }

    /// Periodic grid on the torus `[lo, hi)` per axis.
    pub fn periodic(extents: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        Self::build(extents, resolution, true)
    }

    /// Cube `[lo, hi]^dim` with `n` samples per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![(lo, hi); dim], vec![n; dim])
    }

    fn build(extents: Vec<(f64, f64)>, resolution: Vec<usize>, periodic: bool) -> Result<Self> {
        if extents.len() != resolution.len() {
            return Err(Error::InvalidGrid(format!(
                "{} extents for {} resolutions",
                extents.len(),
                resolution.len()
            )));
        }
        if extents.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {} < 2",
                extents.len()
            )));
        }
        for (axis, (&(lo, hi), &n)) in extents.iter().zip(&resolution).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: degenerate extent [{lo}, {hi}]"
                )));
            }
            if n < MIN_RESOLUTION {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: resolution {n} < {MIN_RESOLUTION}"
                )));
            }
        }
        Ok(Self {
            extents,
            resolution,
            periodic,
        })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.extents[axis];
        let n = self.resolution[axis];
        if self.periodic {
            (hi - lo) / n as f64
        } else {
            (hi - lo) / (n - 1) as f64
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.extents[axis].0 + i as f64 * self.spacing(axis)
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Row-major stride of each axis (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim() - 1).rev() {
            s[a] = s[a + 1] * self.resolution[a + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            let n = self.resolution[a];
            idx[a] = flat % n;
            flat /= n;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    /// True when the sample is within `width` cells of some box face.
    /// Always false on periodic grids.
    pub fn in_collar(&self, flat: usize, width: usize) -> bool {
        if self.periodic {
            return false;
        }
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .zip(&self.resolution)
            .any(|(&i, &n)| i < width || i + width >= n)
    }

    /// Same box, resolution changed on every axis.
    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Self::build(self.extents.clone(), vec![n; self.dim()], self.periodic)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.extents)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate() {
        assert!(Grid::new(vec![(0.0, 1.0)], vec![9]).is_err());
        assert!(Grid::new(vec![(0.0, 1.0), (1.0, 1.0)], vec![9, 9]).is_err());
        assert!(Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![9, 7]).is_err());
    }

    #[test]
    fn unravel_matches_strides() {
        let g = Grid::new(vec![(0.0, 1.0); 3], vec![8, 9, 10]).unwrap();
        let s = g.strides();
        let mut idx = [0; 3];
        g.unravel(3 * s[0] + 4 * s[1] + 5, &mut idx);
        assert_eq!(idx, [3, 4, 5]);
        assert_eq!(g.len(), 720);
    }

    #[test]
    fn endpoints_and_periodic_spacing() {
        let g = Grid::cube(2, 0.0, 1.0, 11).unwrap();
        assert_eq!(g.coord(0, 10), 1.0);
        let p = Grid::periodic(vec![(0.0, 1.0); 2], vec![10, 10]).unwrap();
        assert!((p.spacing(0) - 0.1).abs() < 1e-15);
        assert!(!p.in_collar(0, 3));
        assert!(g.in_collar(0, 3));
    }
}
