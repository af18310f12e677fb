//! Fourth-order finite differences and tensor-product quadrature.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;

/// Minimum samples per axis needed by the one-sided second-derivative stencil.
pub const STENCIL_WIDTH: usize = 6;

const D1_CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D1_EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const D2_CENTRAL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
const D2_EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];

fn check_grid(grid: &Grid) -> Result<()> {
    if let Some(&n) = grid.resolution().iter().find(|&&n| n < STENCIL_WIDTH) {
        return Err(Error::InvalidGrid(format!(
            "resolution {n} below stencil width {STENCIL_WIDTH}"
        )));
    }
    Ok(())
}

/// Derivative of order 1 or 2 along `axis` of one component's samples.
fn axis_derivative(grid: &Grid, src: &[Complex64], axis: usize, order: usize) -> Vec<Complex64> {
    let n = grid.resolution()[axis];
    let stride = grid.strides()[axis];
    let h = grid.spacing(axis);
    let periodic = grid.is_periodic();
    let scale = if order == 1 {
        1.0 / (12.0 * h)
    } else {
        1.0 / (12.0 * h * h)
    };
    let at = |p: usize, i: usize, off: isize| -> Complex64 {
        let j = if periodic {
            (i as isize + off).rem_euclid(n as isize) as usize
        } else {
            (i as isize + off) as usize
        };
        src[p - i * stride + j * stride]
    };
    (0..src.len())
        .into_par_iter()
        .map(|p| {
            let i = (p / stride) % n;
            let mut acc = Complex64::new(0.0, 0.0);
            let interior = periodic || (i >= 2 && i + 2 < n);
            if interior {
                let c = if order == 1 { &D1_CENTRAL } else { &D2_CENTRAL };
                for (k, &w) in c.iter().enumerate() {
                    if w != 0.0 {
                        acc += w * at(p, i, k as isize - 2);
                    }
                }
            } else {
                // One-sided stencils; mirrored at the far end (odd for d/dx).
                let (near, first) = if i < 2 { (i, true) } else { (n - 1 - i, false) };
                let sign = if first || order == 2 { 1.0 } else { -1.0 };
                let dir: isize = if first { 1 } else { -1 };
                let coeffs: &[f64] = match (order, near) {
                    (1, 0) => &D1_EDGE0,
                    (1, _) => &D1_EDGE1,
                    (_, 0) => &D2_EDGE0,
                    _ => &D2_EDGE1,
                };
                for (k, &w) in coeffs.iter().enumerate() {
                    let off = (k as isize - near as isize) * dir;
                    acc += sign * w * at(p, i, off);
                }
            }
            acc * scale
        })
        .collect()
}

/// `d/dx_axis` of a scalar field.
pub fn partial(f: &Field, axis: usize) -> Result<Field> {
    f.ensure_rank(0)?;
    check_grid(f.grid())?;
    Field::from_vec(f.grid(), 0, axis_derivative(f.grid(), f.values(), axis, 1))
}

/// Second derivative along one axis.
pub fn partial2(f: &Field, axis: usize) -> Result<Field> {
    f.ensure_rank(0)?;
    check_grid(f.grid())?;
    Field::from_vec(f.grid(), 0, axis_derivative(f.grid(), f.values(), axis, 2))
}

/// Gradient of a scalar field: fourth-order centered in the interior and
/// fourth-order one-sided at the two samples nearest each face.
pub fn gradient(f: &Field) -> Result<Field> {
    let comps = (0..f.dim())
        .map(|a| partial(f, a))
        .collect::<Result<Vec<_>>>()?;
    Field::from_components(f.grid(), 1, comps)
}

/// Gradient of every component: rank r in, rank r+1 out, new index last.
pub fn tensor_gradient(f: &Field) -> Result<Field> {
    let d = f.dim();
    let mut out = Field::zeros(f.grid(), f.rank() + 1);
    let n = f.grid().len();
    for c in 0..f.n_components() {
        let src = &f.values()[c * n..(c + 1) * n];
        for a in 0..d {
            let der = axis_derivative(f.grid(), src, a, 1);
            out.values_mut()[(c * d + a) * n..(c * d + a + 1) * n].copy_from_slice(&der);
        }
    }
    Ok(out)
}

pub fn laplacian(f: &Field) -> Result<Field> {
    f.ensure_rank(0)?;
    check_grid(f.grid())?;
    let mut acc = vec![Complex64::new(0.0, 0.0); f.grid().len()];
    for a in 0..f.dim() {
        let d2 = axis_derivative(f.grid(), f.values(), a, 2);
        acc.iter_mut().zip(d2).for_each(|(s, v)| *s += v);
    }
    Field::from_vec(f.grid(), 0, acc)
}

/// Divergence over the FIRST index: rank r in, rank r-1 out.
/// `(div T)_{k..} = sum_j d_j T_{j k ..}`.
pub fn divergence(f: &Field) -> Result<Field> {
    if f.rank() == 0 {
        return Err(Error::Shape("divergence of a scalar".into()));
    }
    check_grid(f.grid())?;
    let d = f.dim();
    let n = f.grid().len();
    let inner = d.pow(f.rank() as u32 - 1);
    let mut out = Field::zeros(f.grid(), f.rank() - 1);
    for j in 0..d {
        for rest in 0..inner {
            let c = j * inner + rest;
            let der = axis_derivative(f.grid(), &f.values()[c * n..(c + 1) * n], j, 1);
            out.values_mut()[rest * n..(rest + 1) * n]
                .iter_mut()
                .zip(der)
                .for_each(|(s, v)| *s += v);
        }
    }
    Ok(out)
}

/// Per-axis quadrature weights: composite Simpson, closed with a 3/8 panel
/// when the interval count is odd; uniform weights on periodic axes.
pub fn axis_weights(grid: &Grid, axis: usize) -> Vec<f64> {
    let n = grid.resolution()[axis];
    let h = grid.spacing(axis);
    if grid.is_periodic() {
        return vec![h; n];
    }
    let m = n - 1;
    let mut w = vec![0.0; n];
    let simpson_end = if m % 2 == 0 { m } else { m - 3 };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if m % 2 == 1 {
        let s = simpson_end;
        for (k, c) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            w[s + k] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

/// Tensor-product weights for every grid point, row-major.
pub fn quadrature_weights(grid: &Grid) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = (0..grid.dim()).map(|a| axis_weights(grid, a)).collect();
    (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0usize; grid.dim()],
            |idx, p| {
                grid.unravel(p, idx);
                idx.iter().enumerate().map(|(a, &i)| axes[a][i]).product()
            },
        )
        .collect()
}

/// Integral of a scalar field over the box.
pub fn integrate(f: &Field) -> Result<Complex64> {
    f.ensure_rank(0)?;
    if !f.is_finite() {
        return Err(Error::Shape("non-finite field".into()));
    }
    let w = quadrature_weights(f.grid());
    Ok(weighted_sum(&w, f.values()))
}

pub fn weighted_sum(w: &[f64], v: &[Complex64]) -> Complex64 {
    w.par_iter().zip(v.par_iter()).map(|(w, v)| v * *w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn first_derivative_exact_on_quartics() {
        let g = Grid::cube(2, 0.0, 1.3, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |x| c(x[0].powi(4) - 2.0 * x[0].powi(3) + x[1]));
        let d = partial(&f, 0).unwrap();
        for p in 0..g.len() {
            let x = g.point(p);
            let want = 4.0 * x[0].powi(3) - 6.0 * x[0].powi(2);
            assert!((d.values()[p].re - want).abs() < 1e-10, "{p}");
        }
    }

    #[test]
    fn second_derivative_exact_on_quintics() {
        let g = Grid::cube(2, -0.5, 1.0, 10).unwrap();
        let f = Field::scalar_from_fn(&g, |x| c(x[1].powi(5) + x[1].powi(2)));
        let d = partial2(&f, 1).unwrap();
        for p in 0..g.len() {
            let x = g.point(p);
            let want = 20.0 * x[1].powi(3) + 2.0;
            assert!((d.values()[p].re - want).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn constant_and_linear_gradients() {
        let g = Grid::cube(3, 0.0, 1.0, 8).unwrap();
        let one = Field::scalar_from_fn(&g, |_| c(1.0));
        assert!(gradient(&one).unwrap().max_abs() < 1e-12);
        let x0 = Field::scalar_from_fn(&g, |x| c(x[0]));
        let gr = gradient(&x0).unwrap();
        assert!(gr
            .component(&[0])
            .iter()
            .all(|z| (z.re - 1.0).abs() < 1e-12));
        assert!(gr.component(&[1]).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn laplacian_of_quadratics() {
        let g = Grid::cube(3, 0.0, 1.0, 8).unwrap();
        let h = Field::scalar_from_fn(&g, |x| c(x[0] * x[0] - x[1] * x[1]));
        assert!(laplacian(&h).unwrap().max_abs() < 1e-10);
        let q = Field::scalar_from_fn(&g, |x| c(x[0] * x[0]));
        let l = laplacian(&q).unwrap();
        assert!(l.values().iter().all(|z| (z.re - 2.0).abs() < 1e-9));
    }

    #[test]
    fn simpson_exact_on_cubics() {
        for n in [8, 9, 12] {
            let g = Grid::cube(3, 0.0, 1.0, n).unwrap();
            let one = Field::scalar_from_fn(&g, |_| c(1.0));
            assert!((integrate(&one).unwrap().re - 1.0).abs() < 1e-13);
            let p = Field::scalar_from_fn(&g, |x| c(x[0] * x[1] * x[2]));
            assert!((integrate(&p).unwrap().re - 0.125).abs() < 1e-13);
            let cub = Field::scalar_from_fn(&g, |x| c(x[0].powi(3)));
            assert!((integrate(&cub).unwrap().re - 0.25).abs() < 1e-13);
        }
    }

    #[test]
    fn periodic_derivative() {
        use std::f64::consts::PI;
        let g = Grid::periodic(vec![(0.0, 2.0 * PI); 2], vec![64, 8]).unwrap();
        let f = Field::scalar_from_fn(&g, |x| c(x[0].sin()));
        let d = partial(&f, 0).unwrap();
        let err = (0..g.len())
            .map(|p| (d.values()[p].re - g.point(p)[0].cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5);
    }
}
