//! Smooth compactly supported bumps used to plant test fields.

use serde::{Deserialize, Serialize};

use crate::calculus;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::Complex64 as C;

/// Radial profile in `s = |x - center|² / radius²`, equal to 1 at `s = 0`
/// and 0 for `s >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// `exp(1 - 1/(1 - s))`, C^∞.
    #[default]
    Exp,
    /// `(1 - s)^m`, C^(m-1). Its Fourier transform decays algebraically
    /// with a large exponent, which makes grid quadrature and Fourier
    /// derivatives far more accurate than for `Exp` at desk resolutions.
    Poly(u32),
}

/// `amplitude * profile(|x - center|² / radius²)`. The peak value is
/// `amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub profile: Profile,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self {
            center,
            radius,
            amplitude: 1.0,
            profile: Profile::Exp,
        }
    }

    pub fn poly(center: Vec<f64>, radius: f64, power: u32) -> Self {
        Self {
            center,
            radius,
            amplitude: 1.0,
            profile: Profile::Poly(power),
        }
    }

    /// Centred in the box, reaching `frac` of the shortest half-width.
    pub fn centered(grid: &Grid, frac: f64) -> Self {
        let center = grid.extents().iter().map(|(a, b)| 0.5 * (a + b)).collect();
        let half = grid
            .extents()
            .iter()
            .map(|(a, b)| 0.5 * (b - a))
            .fold(f64::INFINITY, f64::min);
        Self::new(center, frac * half)
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    fn s(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            / (self.radius * self.radius)
    }

    /// `(g, g', g'')` of the profile in `s`, all zero outside the support.
    fn radial(&self, s: f64) -> (f64, f64, f64) {
        if s >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        match self.profile {
            Profile::Exp => {
                let w = 1.0 / (1.0 - s);
                let g = (1.0 - w).exp();
                (g, -g * w * w, g * (w.powi(4) - 2.0 * w.powi(3)))
            }
            Profile::Poly(m) => {
                let (m, t) = (m as i32, 1.0 - s);
                let mf = m as f64;
                (
                    t.powi(m),
                    -mf * t.powi(m - 1),
                    mf * (mf - 1.0) * t.powi(m - 2),
                )
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * self.radial(self.s(x)).0
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let (_, g1, _) = self.radial(self.s(x));
        let r2 = self.radius * self.radius;
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| self.amplitude * g1 * 2.0 * (a - c) / r2)
            .collect()
    }

    /// Row-major `dim x dim` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let (_, g1, g2) = self.radial(self.s(x));
        let r2 = self.radius * self.radius;
        let dx: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let diag = if i == j { 2.0 * g1 / r2 } else { 0.0 };
                h[i * d + j] = self.amplitude * (4.0 * g2 * dx[i] * dx[j] / (r2 * r2) + diag);
            }
        }
        h
    }

    /// Support must stay `margin` cells clear of every face.
    pub fn check_inside(&self, grid: &Grid, margin: usize) -> Result<()> {
        if self.center.len() != grid.dim() {
            return Err(Error::Shape(format!(
                "bump centre of dimension {} on a {}-d grid",
                self.center.len(),
                grid.dim()
            )));
        }
        for (a, (&c, &(lo, hi))) in self.center.iter().zip(grid.extents()).enumerate() {
            let pad = margin as f64 * grid.spacing(a);
            if c - self.radius < lo + pad || c + self.radius > hi - pad {
                return Err(Error::Precondition(format!(
                    "bump support leaves the interior along axis {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid) -> Field {
        Field::scalar_from_fn(grid, |x| C::new(self.value(x), 0.0))
    }

    /// Rescale so that the grid quadrature of the bump equals `target`.
    pub fn normalized(mut self, grid: &Grid, target: f64) -> Result<Self> {
        self.amplitude = 1.0;
        let total = calculus::integrate(&self.sample(grid))?.re;
        if total <= 0.0 {
            return Err(Error::Precondition(
                "bump support contains no grid points".into(),
            ));
        }
        self.amplitude = target / total;
        Ok(self)
    }
}
