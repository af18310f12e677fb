//! Dirichlet Green operator on a box, diagonalized by the type-I discrete
//! sine transform.
//!
//! The interior samples of each axis are expanded in `sin(k pi (x - lo) / L)`,
//! `k = 1..=n-2`, which are exact eigenfunctions of the continuous Dirichlet
//! Laplacian with eigenvalue `-(k pi / L)^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

/// Unnormalized DST-I of every line of `data` along `axis`, interior only.
/// `data` holds the full grid; boundary samples are ignored and left as-is.
fn dst_axis(grid: &Grid, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = grid.resolution()[axis];
    let m = n - 2;
    let stride = grid.strides()[axis];
    let len = 2 * (m + 1);
    // Line starts: every flat index whose coordinate along `axis` is 0.
    let starts: Vec<usize> = (0..grid.len()).filter(|p| (p / stride) % n == 0).collect();
    let lines: Vec<(usize, Vec<Complex64>)> = starts
        .par_iter()
        .map_init(
            || {
                (
                    vec![Complex64::new(0.0, 0.0); len],
                    vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), &s| {
                buf[0] = Complex64::new(0.0, 0.0);
                buf[m + 1] = Complex64::new(0.0, 0.0);
                for j in 1..=m {
                    let v = data[s + j * stride];
                    buf[j] = v;
                    buf[len - j] = -v;
                }
                fft.process_with_scratch(buf, scratch);
                let out = (1..=m).map(|k| buf[k] * Complex64::new(0.0, 0.5)).collect();
                (s, out)
            },
        )
        .collect();
    for (s, vals) in lines {
        for (j, v) in vals.into_iter().enumerate() {
            data[s + (j + 1) * stride] = v;
        }
    }
}

fn check_box(grid: &Grid) -> Result<()> {
    if grid.is_periodic() {
        return Err(Error::UnsupportedDomain(
            "Dirichlet problem on a periodic grid".into(),
        ));
    }
    Ok(())
}

/// Apply `multiplier(k)` in the sine basis, `k` the per-axis mode numbers
/// starting at 1. Boundary samples of the result are zero.
fn sine_multiplier<M>(f: &Field, multiplier: M) -> Result<Field>
where
    M: Fn(&[usize]) -> f64 + Sync,
{
    f.ensure_rank(0)?;
    let grid = f.grid();
    check_box(grid)?;
    let mut planner = FftPlanner::new();
    let ffts: Vec<Arc<dyn Fft<f64>>> = grid
        .resolution()
        .iter()
        .map(|&n| planner.plan_fft_forward(2 * (n - 1)))
        .collect();
    let mut data = f.values().to_vec();
    for (p, z) in data.iter_mut().enumerate() {
        if grid.in_collar(p, 1) {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    for a in 0..grid.dim() {
        dst_axis(grid, &mut data, a, &ffts[a]);
    }
    let norm: f64 = grid
        .resolution()
        .iter()
        .map(|&n| 2.0 / (n - 1) as f64)
        .product();
    data.par_iter_mut().enumerate().for_each_init(
        || vec![0usize; grid.dim()],
        |idx, (p, z)| {
            grid.unravel(p, idx);
            if idx
                .iter()
                .zip(grid.resolution())
                .any(|(&i, &n)| i == 0 || i == n - 1)
            {
                return;
            }
            *z *= multiplier(idx) * norm;
        },
    );
    for a in 0..grid.dim() {
        dst_axis(grid, &mut data, a, &ffts[a]);
    }
    Field::from_vec(grid, 0, data)
}

fn eigenvalue(grid: &Grid, modes: &[usize]) -> f64 {
    modes
        .iter()
        .zip(grid.extents())
        .map(|(&k, &(lo, hi))| {
            let w = k as f64 * PI / (hi - lo);
            w * w
        })
        .sum()
}

/// Solve `Δu = source` in the box with `u = 0` on the boundary.
pub fn green_dirichlet(source: &Field) -> Result<Field> {
    let grid = source.grid();
    sine_multiplier(source, |k| -1.0 / eigenvalue(grid, k))
}

/// Spectral Dirichlet Laplacian of a field vanishing on the boundary; the
/// exact inverse of [`green_dirichlet`].
pub fn dirichlet_laplacian(f: &Field) -> Result<Field> {
    let grid = f.grid();
    sine_multiplier(f, |k| -eigenvalue(grid, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::laplacian;

    #[test]
    fn zero_source() {
        let g = Grid::cube(3, 0.0, 1.0, 10).unwrap();
        let u = green_dirichlet(&Field::zeros(&g, 0)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn eigenfunction_solved_to_spectral_accuracy() {
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![17, 24]).unwrap();
        let mode = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin();
        let s = Field::scalar_from_fn(&g, |x| Complex64::new(-2.0 * PI * PI * mode(x), 0.0));
        let u = green_dirichlet(&s).unwrap();
        for p in 0..g.len() {
            assert!((u.values()[p].re - mode(&g.point(p))).abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_vanishes_and_periodic_rejected() {
        let g = Grid::cube(2, 0.0, 2.0, 12).unwrap();
        let s = Field::scalar_from_fn(&g, |x| Complex64::new(x[0] * x[1], 1.0));
        let u = green_dirichlet(&s).unwrap();
        for p in 0..g.len() {
            if g.in_collar(p, 1) {
                assert_eq!(u.values()[p], Complex64::new(0.0, 0.0));
            }
        }
        let pg = Grid::periodic(vec![(0.0, 1.0); 2], vec![8, 8]).unwrap();
        assert!(matches!(
            green_dirichlet(&Field::zeros(&pg, 0)),
            Err(Error::UnsupportedDomain(_))
        ));
    }

    #[test]
    fn dirichlet_laplacian_inverts_green() {
        let g = Grid::cube(3, 0.0, 1.0, 12).unwrap();
        let s = Field::scalar_from_fn(&g, |x| {
            let b = (PI * x[0]).sin() * (2.0 * PI * x[1]).sin() * (PI * x[2]).sin();
            Complex64::new(b, 0.5 * b)
        });
        let back = dirichlet_laplacian(&green_dirichlet(&s).unwrap()).unwrap();
        assert!(back.sub(&s).unwrap().max_abs() < 1e-11);
    }

    #[test]
    fn fd_laplacian_agrees_in_interior() {
        let g = Grid::cube(2, 0.0, 1.0, 65).unwrap();
        let s = Field::scalar_from_fn(&g, |x| {
            Complex64::new((PI * x[0]).sin() * (PI * x[1]).sin(), 0.0)
        });
        let back = laplacian(&green_dirichlet(&s).unwrap()).unwrap();
        let err = back.sub(&s).unwrap().max_abs_where(|p| !g.in_collar(p, 2));
        assert!(err < 1e-6, "{err}");
    }
}
