//! Complex-valued sampled fields of tensor rank 0..=3 on a [`Grid`].
//!
//! Samples are stored component-major: all grid points of component 0,
//! then component 1, and so on. Component multi-indices are flattened
//! row-major, so `(j, k, l)` lives at `(j * dim + k) * dim + l`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAX_RANK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    rank: usize,
    data: Vec<Complex64>,
}

/// Scalar, vector and tensor fields share one representation; the rank is
/// checked by every operation that cares.
pub type ScalarField = Field;
pub type VectorField = Field;
pub type Tensor2Field = Field;
pub type Tensor3Field = Field;

impl Field {
    pub fn zeros(grid: &Grid, rank: usize) -> Self {
        assert!(rank <= MAX_RANK, "rank {rank} > {MAX_RANK}");
        let n = grid.dim().pow(rank as u32) * grid.len();
        Self {
            grid: grid.clone(),
            rank,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_vec(grid: &Grid, rank: usize, data: Vec<Complex64>) -> Result<Self> {
        if rank > MAX_RANK {
            return Err(Error::Shape(format!("rank {rank} > {MAX_RANK}")));
        }
        let want = grid.dim().pow(rank as u32) * grid.len();
        if data.len() != want {
            return Err(Error::Shape(format!(
                "{} samples, expected {want}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Shape("non-finite sample".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            rank,
            data,
        })
    }

    /// Sample a scalar function at every grid point.
    pub fn scalar_from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|p| f(&grid.point(p)))
            .collect();
        Self {
            grid: grid.clone(),
            rank: 0,
            data,
        }
    }

    /// Sample a tensor-valued function; `f` writes `dim^rank` components.
    pub fn tensor_from_fn<F>(grid: &Grid, rank: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [Complex64]) + Sync,
    {
        let nc = grid.dim().pow(rank as u32);
        let npts = grid.len();
        let per_point: Vec<Vec<Complex64>> = (0..npts)
            .into_par_iter()
            .map(|p| {
                let mut buf = vec![Complex64::new(0.0, 0.0); nc];
                f(&grid.point(p), &mut buf);
                buf
            })
            .collect();
        let mut out = Self::zeros(grid, rank);
        for (p, vals) in per_point.into_iter().enumerate() {
            for (c, v) in vals.into_iter().enumerate() {
                out.data[c * npts + p] = v;
            }
        }
        out
    }

    /// Assemble a field of rank `rank` from scalar components in flat order.
    pub fn from_components(grid: &Grid, rank: usize, comps: Vec<Field>) -> Result<Self> {
        let nc = grid.dim().pow(rank as u32);
        if comps.len() != nc {
            return Err(Error::Shape(format!(
                "{} components, expected {nc}",
                comps.len()
            )));
        }
        let mut data = Vec::with_capacity(nc * grid.len());
        for c in comps {
            if c.rank != 0 || c.grid != *grid {
                return Err(Error::Shape(
                    "component is not a scalar on this grid".into(),
                ));
            }
            data.extend_from_slice(&c.data);
        }
        Ok(Self {
            grid: grid.clone(),
            rank,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn n_components(&self) -> usize {
        self.dim().pow(self.rank as u32)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn flat_component(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank, "component index rank");
        idx.iter().fold(0, |acc, &i| acc * self.dim() + i)
    }

    pub fn component(&self, idx: &[usize]) -> &[Complex64] {
        let c = self.flat_component(idx);
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, idx: &[usize]) -> &mut [Complex64] {
        let c = self.flat_component(idx);
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copy one component out as a scalar field.
    pub fn scalar(&self, idx: &[usize]) -> Field {
        Field {
            grid: self.grid.clone(),
            rank: 0,
            data: self.component(idx).to_vec(),
        }
    }

    pub fn set_component(&mut self, idx: &[usize], src: &Field) {
        assert_eq!(src.rank, 0);
        self.component_mut(idx).copy_from_slice(&src.data);
    }

    pub fn at(&self, idx: &[usize], point: usize) -> Complex64 {
        self.component(idx)[point]
    }

    pub fn ensure_rank(&self, rank: usize) -> Result<()> {
        if self.rank == rank {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "expected rank {rank}, got {}",
                self.rank
            )))
        }
    }

    pub fn ensure_same_shape(&self, other: &Field) -> Result<()> {
        if self.rank != other.rank || self.grid != other.grid {
            return Err(Error::Shape(
                "fields live on different grids or ranks".into(),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max modulus over grid points selected by `keep`, over all components.
    pub fn max_abs_where<P: Fn(usize) -> bool>(&self, keep: P) -> f64 {
        let n = self.grid.len();
        self.data
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(i % n))
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(mut self, c: Complex64) -> Self {
        self.data.iter_mut().for_each(|z| *z *= c);
        self
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: Complex64, other: &Field) -> Result<()> {
        self.ensure_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// Pointwise product of two scalar fields.
    pub fn mul_scalar(&self, other: &Field) -> Result<Field> {
        self.ensure_rank(0)?;
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            rank: 0,
            data,
        })
    }

    /// True when every sample within `width` cells of the boundary vanishes.
    pub fn vanishes_on_collar(&self, width: usize) -> bool {
        let n = self.grid.len();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.in_collar(i % n, width))
            .all(|(_, z)| z.norm() <= 1e-14 * scale)
    }

    pub fn metadata(&self) -> FieldMetadata {
        FieldMetadata {
            dim: self.dim(),
            rank: self.rank,
            resolution: self.grid.resolution().to_vec(),
            extents: self.grid.extents().to_vec(),
            periodic: self.grid.is_periodic(),
            layout: "component-major, row-major grid, complex f64 little-endian (re, im)".into(),
        }
    }

    /// Flat binary layout: `u64` dim, `u64` rank, `u64` resolution per axis,
    /// `f64` (lo, hi) per axis, then `2 * len` `f64` samples. All
    /// little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.rank as u64).to_le_bytes())?;
        for &n in self.grid.resolution() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &(lo, hi) in self.grid.extents() {
            w.write_all(&lo.to_le_bytes())?;
            w.write_all(&hi.to_le_bytes())?;
        }
        for z in &self.data {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`Field::write_binary`]. The periodic flag is not part of
    /// the binary header; pass it from the JSON sidecar.
    pub fn read_binary<R: Read>(mut r: R, periodic: bool) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let dim = read_u64(&mut r)? as usize;
        let rank = read_u64(&mut r)? as usize;
        if !(2..=16).contains(&dim) || rank > MAX_RANK {
            return Err(Error::Shape(format!("bad header: dim {dim}, rank {rank}")));
        }
        let mut res = Vec::with_capacity(dim);
        for _ in 0..dim {
            res.push(read_u64(&mut r)? as usize);
        }
        let mut f = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut ext = Vec::with_capacity(dim);
        for _ in 0..dim {
            let lo = f()?;
            let hi = f()?;
            ext.push((lo, hi));
        }
        let grid = if periodic {
            Grid::periodic(ext, res)?
        } else {
            Grid::new(ext, res)?
        };
        let n = dim.pow(rank as u32) * grid.len();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = f()?;
            let im = f()?;
            data.push(Complex64::new(re, im));
        }
        Self::from_vec(&grid, rank, data)
    }
}

/// JSON sidecar describing a binary field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetadata {
    pub dim: usize,
    pub rank: usize,
    pub resolution: Vec<usize>,
    pub extents: Vec<(f64, f64)>,
    pub periodic: bool,
    pub layout: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_layout() {
        let g = Grid::cube(3, 0.0, 1.0, 8).unwrap();
        let mut t = Field::zeros(&g, 3);
        t.component_mut(&[1, 2, 0])[5] = Complex64::new(2.0, 0.0);
        assert_eq!(t.flat_component(&[1, 2, 0]), 15);
        assert_eq!(t.values()[15 * g.len() + 5].re, 2.0);
    }

    #[test]
    fn binary_header_is_little_endian() {
        let g = Grid::cube(2, -1.0, 1.0, 8).unwrap();
        let f = Field::scalar_from_fn(&g, |x| Complex64::new(x[0], x[1]));
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..8], &2u64.to_le_bytes());
        assert_eq!(&buf[8..16], &0u64.to_le_bytes());
        assert_eq!(&buf[32..40], &(-1.0f64).to_le_bytes());
        assert_eq!(buf.len(), 8 * (2 + 2 + 4) + 16 * 64);
        let back = Field::read_binary(&buf[..], false).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Grid::cube(2, 0.0, 1.0, 8).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 64];
        v[3].re = f64::NAN;
        assert!(Field::from_vec(&g, 0, v).is_err());
    }
}
