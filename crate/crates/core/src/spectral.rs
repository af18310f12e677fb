//! Discrete Fourier transforms of compactly supported fields, with the box
//! treated as a torus (extension by zero).

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::Complex64 as C;

/// Torus period along `axis`: `n h`, so that a non-periodic grid whose
/// boundary samples vanish is read as one period.
pub fn period(grid: &Grid, axis: usize) -> f64 {
    grid.resolution()[axis] as f64 * grid.spacing(axis)
}

/// Angular frequencies of the FFT bins along `axis`, in FFT order.
pub fn frequencies(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.resolution()[axis];
    let l = period(grid, axis);
    (0..n)
        .map(|m| {
            let s = if m <= n / 2 {
                m as f64
            } else {
                m as f64 - n as f64
            };
            2.0 * PI * s / l
        })
        .collect()
}

/// Apply `op` to every grid line along `axis`.
fn map_lines<F>(grid: &Grid, data: &mut [C], axis: usize, op: F)
where
    F: Fn(&mut Vec<C>) + Sync,
{
    let n = grid.resolution()[axis];
    let stride = grid.strides()[axis];
    let starts: Vec<usize> = (0..grid.len()).filter(|p| (p / stride) % n == 0).collect();
    let lines: Vec<(usize, Vec<C>)> = starts
        .par_iter()
        .map(|&s| {
            let mut buf: Vec<C> = (0..n).map(|j| data[s + j * stride]).collect();
            op(&mut buf);
            (s, buf)
        })
        .collect();
    for (s, buf) in lines {
        for (j, v) in buf.into_iter().enumerate() {
            data[s + j * stride] = v;
        }
    }
}

/// In-place forward DFT along every axis of row-major data.
fn fftn(grid: &Grid, data: &mut [C]) {
    let mut planner = FftPlanner::new();
    for (axis, &n) in grid.resolution().iter().enumerate() {
        let fft = planner.plan_fft_forward(n);
        map_lines(grid, data, axis, |buf| fft.process(buf));
    }
}

/// Fourier derivative along `axis` of a scalar field on a periodic grid.
/// The Nyquist bin of an even-length axis is dropped, so derivatives along
/// different axes commute exactly in exact arithmetic.
pub fn periodic_partial(f: &Field, axis: usize) -> Result<Field> {
    f.ensure_rank(0)?;
    let grid = f.grid();
    if !grid.is_periodic() {
        return Err(Error::UnsupportedDomain(
            "Fourier derivatives need a periodic grid".into(),
        ));
    }
    if axis >= grid.dim() {
        return Err(Error::Shape(format!(
            "axis {axis} on a {}-d grid",
            grid.dim()
        )));
    }
    let n = grid.resolution()[axis];
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut k = frequencies(grid, axis);
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    let mut data = f.values().to_vec();
    map_lines(grid, &mut data, axis, |buf| {
        fwd.process(buf);
        for (z, &km) in buf.iter_mut().zip(&k) {
            *z *= C::new(0.0, km / n as f64);
        }
        inv.process(buf);
    });
    Field::from_vec(grid, 0, data)
}

/// Samples of `f̂(k) = ∫ f(x) e^{-ik·x} dx` on the frequency lattice, one
/// array per tensor component.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    comps: Vec<Vec<C>>,
}

impl Spectrum {
    pub fn of(f: &Field) -> Self {
        let grid = f.grid().clone();
        let n = grid.len();
        let cell: f64 = (0..grid.dim()).map(|a| grid.spacing(a)).product();
        let comps = (0..f.n_components())
            .map(|c| {
                let mut d = f.values()[c * n..(c + 1) * n].to_vec();
                fftn(&grid, &mut d);
                // Shift the origin from the first sample to x = 0.
                let freqs: Vec<Vec<f64>> = (0..grid.dim()).map(|a| frequencies(&grid, a)).collect();
                let mut idx = vec![0; grid.dim()];
                for (p, z) in d.iter_mut().enumerate() {
                    grid.unravel(p, &mut idx);
                    let phase: f64 = idx
                        .iter()
                        .enumerate()
                        .map(|(a, &i)| freqs[a][i] * grid.extents()[a].0)
                        .sum();
                    *z *= C::from_polar(cell, -phase);
                }
                d
            })
            .collect();
        Self { grid, comps }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[C] {
        &self.comps[c]
    }

    /// Flat bin index of the lattice frequency `k`.
    pub fn bin(&self, k: &[f64]) -> Result<usize> {
        if k.len() != self.grid.dim() {
            return Err(Error::Shape(format!("frequency of dimension {}", k.len())));
        }
        let mut flat = 0;
        for (a, &ka) in k.iter().enumerate() {
            let n = self.grid.resolution()[a];
            let m = ka * period(&self.grid, a) / (2.0 * PI);
            let r = m.round();
            if (m - r).abs() > 1e-9 || r.abs() > (n / 2) as f64 {
                return Err(Error::Domain(format!(
                    "frequency {ka} is not a lattice frequency along axis {a}"
                )));
            }
            let i = (r as i64).rem_euclid(n as i64) as usize;
            flat = flat * n + i;
        }
        Ok(flat)
    }

    /// All components at the lattice frequency `k`.
    pub fn at(&self, k: &[f64]) -> Result<Vec<C>> {
        let b = self.bin(k)?;
        Ok(self.comps.iter().map(|c| c[b]).collect())
    }
}

/// `h^d Σ f(x_p) e^{-ik·x_p}` for one scalar component at any frequency.
pub fn direct_transform(f: &Field, k: &[f64]) -> Result<C> {
    f.ensure_rank(0)?;
    let grid = f.grid();
    let cell: f64 = (0..grid.dim()).map(|a| grid.spacing(a)).product();
    let s: C = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let x = grid.point(p);
            let ph: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            f.values()[p] * C::from_polar(1.0, -ph)
        })
        .sum();
    Ok(s * cell)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct_sum() {
        let g =
            Grid::periodic(vec![(-1.0, 1.0), (0.5, 2.5), (-0.3, 1.7)], vec![8, 10, 12]).unwrap();
        let f = Field::scalar_from_fn(&g, |x| C::new((x[0] * 3.0).sin() + x[1] * x[2], x[0]));
        let sp = Spectrum::of(&f);
        for m in [[0, 0, 0], [1, -2, 3], [-4, 5, -6], [3, 0, 1]] {
            let k: Vec<f64> = (0..3)
                .map(|a| 2.0 * PI * m[a] as f64 / period(&g, a))
                .collect();
            let want = direct_transform(&f, &k).unwrap();
            assert!(
                (sp.at(&k).unwrap()[0] - want).norm() < 1e-12 * (1.0 + want.norm()),
                "{m:?}"
            );
        }
    }

    #[test]
    fn periodic_partial_is_spectrally_accurate() {
        let g = Grid::periodic(vec![(0.0, 2.0 * PI), (-1.0, 1.0)], vec![32, 16]).unwrap();
        let f = Field::scalar_from_fn(&g, |x| C::new((x[0].sin()).exp(), (PI * x[1]).cos()));
        let d0 = periodic_partial(&f, 0).unwrap();
        let d1 = periodic_partial(&f, 1).unwrap();
        for p in 0..g.len() {
            let x = g.point(p);
            let w0 = C::new(x[0].cos() * x[0].sin().exp(), 0.0);
            let w1 = C::new(0.0, -PI * (PI * x[1]).sin());
            assert!((d0.values()[p] - w0).norm() < 1e-11);
            assert!((d1.values()[p] - w1).norm() < 1e-11);
        }
        assert!(
            periodic_partial(&Field::zeros(&Grid::cube(2, 0.0, 1.0, 8).unwrap(), 0), 0).is_err()
        );
    }

    #[test]
    fn off_lattice_rejected() {
        let g = Grid::periodic(vec![(0.0, 1.0); 2], vec![8, 8]).unwrap();
        let sp = Spectrum::of(&Field::zeros(&g, 0));
        assert!(sp.at(&[0.3, 0.0]).is_err());
        assert!(sp.at(&[2.0 * PI * 5.0, 0.0]).is_err());
    }
}
