//! The two-gradient identity `∫ C : ∇u₁ ⊗ ∇u₂ dx = 0` over harmonic pairs
//! and the tensors that satisfy it:
//!
//! ```text
//! C_jk = ∂_j v_k + ∂_k v_j − δ_jk ∇·v + a_jk
//! ```
//!
//! with `v` vanishing on a boundary collar and `a` antisymmetric with
//! divergence-free rows. Derivatives are Fourier on periodic grids and
//! fourth-order differences otherwise; the Dirichlet solve in [`decompose`]
//! needs a non-periodic box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::Bump;
use crate::calculus::{self, quadrature_weights};
use crate::density::orthonormal_complement;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::green::green_dirichlet;
use crate::grid::Grid;
use crate::harmonic::{harmonic_polynomials, HarmonicFn};
use crate::report::{fit_slope, ExperimentReport, Metric, Table};
use crate::spectral::{frequencies, periodic_partial, Spectrum};
use crate::Complex64 as C;

/// Width in cells of the zero collar standing in for vanishing trace.
pub const COLLAR: usize = 3;
/// Max-norm bound on the discrete row divergence of `a`.
pub const DIV_TOL: f64 = 1e-10;
/// Power of the polynomial bumps used by the planted pairs.
pub const PLANT_POWER: u32 = 12;

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

/// `d/dx_axis`: Fourier on periodic grids, finite differences otherwise.
pub fn derivative(f: &Field, axis: usize) -> Result<Field> {
    if f.grid().is_periodic() {
        periodic_partial(f, axis)
    } else {
        calculus::partial(f, axis)
    }
}

/// True when the sample sits within `width` cells of an edge of the index
/// box. On a periodic grid this is the band around the seam.
fn near_edge(grid: &Grid, p: usize, width: usize) -> bool {
    let mut idx = vec![0; grid.dim()];
    grid.unravel(p, &mut idx);
    idx.iter()
        .zip(grid.resolution())
        .any(|(&i, &n)| i < width || i + width >= n)
}

fn edge_max(f: &Field, width: usize) -> f64 {
    f.max_abs_where(|p| near_edge(f.grid(), p, width))
}

/// `Σ_j ∂_j a_jk`, a vector field.
pub fn row_divergence(a: &Field) -> Result<Field> {
    a.ensure_rank(2)?;
    let d = a.dim();
    let mut out = Field::zeros(a.grid(), 1);
    for k in 0..d {
        let mut acc = Field::zeros(a.grid(), 0);
        for j in 0..d {
            acc.axpy(c(1.0), &derivative(&a.scalar(&[j, k]), j)?)?;
        }
        out.set_component(&[k], &acc);
    }
    Ok(out)
}

/// `∂_j v_k + ∂_k v_j − δ_jk ∇·v`.
pub fn sym_part_of(v: &Field) -> Result<Field> {
    v.ensure_rank(1)?;
    let d = v.dim();
    // grads[k][j] = ∂_j v_k
    let grads: Vec<Vec<Field>> = (0..d)
        .map(|k| {
            (0..d)
                .map(|j| derivative(&v.scalar(&[k]), j))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut div = Field::zeros(v.grid(), 0);
    for (k, g) in grads.iter().enumerate() {
        div.axpy(c(1.0), &g[k])?;
    }
    let mut out = Field::zeros(v.grid(), 2);
    for j in 0..d {
        for k in 0..d {
            let mut e = grads[k][j].add(&grads[j][k])?;
            if j == k {
                e.axpy(c(-1.0), &div)?;
            }
            out.set_component(&[j, k], &e);
        }
    }
    Ok(out)
}

fn transpose(t: &Field) -> Field {
    let d = t.dim();
    let mut out = t.clone();
    for j in 0..d {
        for k in 0..d {
            out.component_mut(&[j, k])
                .copy_from_slice(t.component(&[k, j]));
        }
    }
    out
}

/// `(½(C + Cᵀ), ½(C − Cᵀ))`, entry by entry.
pub fn split(t: &Field) -> Result<(Field, Field)> {
    t.ensure_rank(2)?;
    let tt = transpose(t);
    let mut s = t.clone();
    let mut a = t.clone();
    for ((s, a), (x, y)) in s
        .values_mut()
        .iter_mut()
        .zip(a.values_mut())
        .zip(t.values().iter().zip(tt.values()))
    {
        *s = 0.5 * (x + y);
        *a = 0.5 * (x - y);
    }
    Ok((s, a))
}

/// A vector field `Σ_m b_m(x) d_m` with closed-form derivatives.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpField {
    pub terms: Vec<(Bump, Vec<f64>)>,
}

impl BumpField {
    pub fn new(terms: Vec<(Bump, Vec<f64>)>) -> Self {
        Self { terms }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (b, dir) in &self.terms {
            let s = b.value(x);
            out.iter_mut().zip(dir).for_each(|(o, d)| *o += s * d);
        }
        out
    }

    /// Row-major Jacobian, `J[j d + k] = ∂_k v_j`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut out = vec![0.0; d * d];
        for (b, dir) in &self.terms {
            let g = b.grad(x);
            for j in 0..d {
                for k in 0..d {
                    out[j * d + k] += dir[j] * g[k];
                }
            }
        }
        out
    }

    pub fn check_inside(&self, grid: &Grid, margin: usize) -> Result<()> {
        for (b, dir) in &self.terms {
            if dir.len() != grid.dim() {
                return Err(Error::Shape(format!(
                    "direction of length {} on a {}-d grid",
                    dir.len(),
                    grid.dim()
                )));
            }
            b.check_inside(grid, margin)?;
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid) -> Field {
        Field::tensor_from_fn(grid, 1, |x, out| {
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o = c(v);
            }
        })
    }

    /// Closed-form `∂_j v_k + ∂_k v_j − δ_jk ∇·v`.
    pub fn sym_part(&self, grid: &Grid) -> Field {
        let d = grid.dim();
        Field::tensor_from_fn(grid, 2, |x, out| {
            let jac = self.jacobian(x);
            let div: f64 = (0..d).map(|i| jac[i * d + i]).sum();
            for j in 0..d {
                for k in 0..d {
                    let delta = if j == k { div } else { 0.0 };
                    out[j * d + k] = c(jac[k * d + j] + jac[j * d + k] - delta);
                }
            }
        })
    }
}

/// `a_jk = Σ_l Φ_ljk ∂_l φ` for the fully antisymmetric `Φ` equal to the
/// Levi-Civita symbol on each axis triple times its bump. Each entry is a
/// single signed derivative, so `a_jk = −a_kj` holds bit for bit and the
/// row divergence cancels up to commuting difference operators.
pub fn divergence_free_antisym(grid: &Grid, potentials: &[(Bump, [usize; 3])]) -> Result<Field> {
    let d = grid.dim();
    let mut a = Field::zeros(grid, 2);
    for (phi, axes) in potentials {
        let [p, q, r] = *axes;
        if p == q || q == r || p == r || axes.iter().any(|&i| i >= d) {
            return Err(Error::Precondition(format!(
                "axes {axes:?} are not three distinct axes of a {d}-d grid"
            )));
        }
        let samples = phi.sample(grid);
        let grads: Vec<Field> = axes
            .iter()
            .map(|&l| derivative(&samples, l))
            .collect::<Result<_>>()?;
        // Even permutations of (0, 1, 2) in positions (l, j, k).
        for (perm, sign) in [
            ([0, 1, 2], 1.0),
            ([1, 2, 0], 1.0),
            ([2, 0, 1], 1.0),
            ([1, 0, 2], -1.0),
            ([0, 2, 1], -1.0),
            ([2, 1, 0], -1.0),
        ] {
            let (l, j, k) = (perm[0], axes[perm[1]], axes[perm[2]]);
            let dst = a.component_mut(&[j, k]);
            dst.iter_mut()
                .zip(grads[l].values())
                .for_each(|(o, g)| *o += sign * g);
        }
    }
    Ok(a)
}

/// `(v, a)` generating a tensor invisible to every two-gradient product.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionPair {
    v: Field,
    a: Field,
}

impl ObstructionPair {
    pub fn new(v: Field, a: Field) -> Result<Self> {
        v.ensure_rank(1)?;
        a.ensure_rank(2)?;
        if v.grid() != a.grid() {
            return Err(Error::Shape("v and a live on different grids".into()));
        }
        let d = a.dim();
        for j in 0..d {
            for k in j..d {
                let exact = a
                    .component(&[j, k])
                    .iter()
                    .zip(a.component(&[k, j]))
                    .all(|(x, y)| *x == -*y);
                if !exact {
                    return Err(Error::Precondition(format!(
                        "a is not antisymmetric at ({j}, {k})"
                    )));
                }
            }
        }
        let div = row_divergence(&a)?.max_abs();
        if div > DIV_TOL {
            return Err(Error::Precondition(format!(
                "row divergence of a is {div:.3e} > {DIV_TOL:.0e}"
            )));
        }
        let lim = 1e-14 * v.max_abs();
        if edge_max(&v, COLLAR) > lim {
            return Err(Error::Precondition(format!(
                "v does not vanish on the {COLLAR}-cell collar"
            )));
        }
        Ok(Self { v, a })
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn a(&self) -> &Field {
        &self.a
    }

    pub fn grid(&self) -> &Grid {
        self.v.grid()
    }
}

/// Seeded random pair: two polynomial bumps times random directions for
/// `v`, two Levi-Civita potentials for `a` (none below three dimensions).
/// The draws do not depend on the resolution, so one seed plants the same
/// continuous pair on every grid of the same box.
pub fn random_plant(grid: &Grid, seed: u64) -> Result<(BumpField, Vec<(Bump, [usize; 3])>)> {
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mid: Vec<f64> = grid.extents().iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let half = grid
        .extents()
        .iter()
        .map(|(a, b)| 0.5 * (b - a))
        .fold(f64::INFINITY, f64::min);
    let bump = |rng: &mut ChaCha8Rng| {
        let center = mid
            .iter()
            .map(|m| m + half * rng.gen_range(-0.03..0.03))
            .collect();
        let amp = rng.gen_range(0.5..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Bump::poly(center, half * rng.gen_range(0.55..0.6), PLANT_POWER).with_amplitude(amp)
    };
    let mut terms = Vec::new();
    for _ in 0..2 {
        let b = bump(&mut rng);
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        terms.push((b, dir));
    }
    let mut pots = Vec::new();
    if d >= 3 {
        for _ in 0..2 {
            let b = bump(&mut rng);
            let mut axes = [0usize; 3];
            let mut pool: Vec<usize> = (0..d).collect();
            for slot in axes.iter_mut() {
                *slot = pool.swap_remove(rng.gen_range(0..pool.len()));
            }
            pots.push((b, axes));
        }
    }
    Ok((BumpField::new(terms), pots))
}

/// Sample a random plant as a validated pair.
pub fn random_pair(grid: &Grid, seed: u64) -> Result<ObstructionPair> {
    let (field, pots) = random_plant(grid, seed)?;
    field.check_inside(grid, COLLAR + 2)?;
    for (b, _) in &pots {
        b.check_inside(grid, COLLAR + 2)?;
    }
    ObstructionPair::new(field.sample(grid), divergence_free_antisym(grid, &pots)?)
}

/// `C = ∂_j v_k + ∂_k v_j − δ_jk ∇·v + a_jk` with grid derivatives.
pub fn build_obstruction(pair: &ObstructionPair) -> Result<Field> {
    sym_part_of(&pair.v)?.add(&pair.a)
}

/// Quadrature of `Σ_jk C_jk ∂_j u₁ ∂_k u₂`.
pub fn double_identity(t: &Field, u1: &HarmonicFn, u2: &HarmonicFn) -> Result<C> {
    Ok(double_identity_many(&[t], u1, u2)?[0])
}

/// [`double_identity`] for several tensors on one grid, sharing the
/// gradient evaluations.
pub fn double_identity_many(ts: &[&Field], u1: &HarmonicFn, u2: &HarmonicFn) -> Result<Vec<C>> {
    let Some(first) = ts.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid();
    for t in ts {
        t.ensure_rank(2)?;
        if t.grid() != grid {
            return Err(Error::Shape("tensors live on different grids".into()));
        }
    }
    u1.check_on(grid)?;
    u2.check_on(grid)?;
    let d = grid.dim();
    let n = grid.len();
    let w = quadrature_weights(grid);
    let zero = || vec![c(0.0); ts.len()];
    let sums = (0..n)
        .into_par_iter()
        .fold(zero, |mut acc, p| {
            let x = grid.point(p);
            let (g1, g2) = (u1.grad(&x), u2.grad(&x));
            for (s, t) in acc.iter_mut().zip(ts) {
                let vals = t.values();
                let mut e = c(0.0);
                for j in 0..d {
                    for k in 0..d {
                        e += vals[(j * d + k) * n + p] * g1[j] * g2[k];
                    }
                }
                *s += e * w[p];
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    Ok(sums)
}

/// `max_x max_j |∂_j u(x)|` over the grid.
pub fn grad_sup(u: &HarmonicFn, grid: &Grid) -> f64 {
    (0..grid.len())
        .into_par_iter()
        .map(|p| {
            u.grad(&grid.point(p))
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `|¼(Q(u₁+u₂) − Q(u₁−u₂)) − ½(I(u₁,u₂) + I(u₂,u₁))|`, relative to the
/// largest of the four values (or 1), where `Q(u) = I(u, u)`.
pub fn polarization_defect(t: &Field, u1: &HarmonicFn, u2: &HarmonicFn) -> Result<f64> {
    let plus = HarmonicFn::sum(vec![u1.clone(), u2.clone()]);
    let minus = HarmonicFn::sum(vec![u1.clone(), u2.clone().scaled(c(-1.0))]);
    let qp = double_identity(t, &plus, &plus)?;
    let qm = double_identity(t, &minus, &minus)?;
    let i12 = double_identity(t, u1, u2)?;
    let i21 = double_identity(t, u2, u1)?;
    let scale = [qp, qm, i12, i21]
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    Ok((0.25 * (qp - qm) - 0.5 * (i12 + i21)).norm() / scale)
}

/// `count` harmonic functions: non-constant harmonic polynomials of degree
/// at most 3 first, then seeded Calderón exponentials with `|ξ_i| ≤ 2.5`.
pub fn harmonic_dictionary(dim: usize, count: usize, seed: u64) -> Result<Vec<HarmonicFn>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = vec![0.3; dim];
    let mut out: Vec<HarmonicFn> = harmonic_polynomials(3, dim)?
        .into_iter()
        .filter(|h| h.grad(&probe).iter().any(|g| g.norm() > 0.0))
        .take(count)
        .collect();
    while out.len() < count {
        let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.5..2.5)).collect();
        if xi.iter().map(|v| v * v).sum::<f64>() < 0.25 {
            continue;
        }
        let mut comp = orthonormal_complement(&xi);
        let nu = comp.swap_remove(rng.gen_range(0..comp.len()));
        out.push(HarmonicFn::calderon(&xi, &nu, rng.gen_bool(0.5), 1.0)?);
    }
    Ok(out)
}

/// Output of [`decompose`].
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub v: Field,
    pub a: Field,
    pub b_residual: Field,
    /// `max |Σ_j ξ_j Ĉ^a_jk|` relative to `max |ξ| |Ĉ^a|` over the lattice.
    pub fourier_divergence: f64,
}

/// Split `C` into symmetric and antisymmetric parts, solve
/// `v_j = G₀(Σ_k ∂_k C^s_jk)` and return the leftover
/// `B = C^s − ∂_j v_k − ∂_k v_j + δ_jk ∇·v`.
pub fn decompose(t: &Field) -> Result<Decomposition> {
    t.ensure_rank(2)?;
    let grid = t.grid();
    if grid.is_periodic() {
        return Err(Error::UnsupportedDomain(
            "decompose solves a Dirichlet problem on a box".into(),
        ));
    }
    if edge_max(t, COLLAR) > 1e-12 * t.max_abs() {
        return Err(Error::Precondition(format!(
            "C does not vanish on the {COLLAR}-cell collar"
        )));
    }
    let (cs, ca) = split(t)?;
    let src = row_divergence(&cs)?;
    let d = grid.dim();
    let comps = (0..d)
        .map(|k| green_dirichlet(&src.scalar(&[k])))
        .collect::<Result<Vec<_>>>()?;
    let v = Field::from_components(grid, 1, comps)?;
    let b_residual = cs.sub(&sym_part_of(&v)?)?;
    let fourier_divergence = fourier_row_divergence(&ca);
    Ok(Decomposition {
        v,
        a: ca,
        b_residual,
        fourier_divergence,
    })
}

fn fourier_row_divergence(a: &Field) -> f64 {
    let grid = a.grid();
    let d = grid.dim();
    let sp = Spectrum::of(a);
    let freqs: Vec<Vec<f64>> = (0..d).map(|ax| frequencies(grid, ax)).collect();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    let mut idx = vec![0; d];
    for p in 0..grid.len() {
        grid.unravel(p, &mut idx);
        let xi: Vec<f64> = (0..d).map(|ax| freqs[ax][idx[ax]]).collect();
        let xn = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..d {
            let s: C = (0..d).map(|j| xi[j] * sp.component(j * d + k)[p]).sum();
            num = num.max(s.norm());
            for j in 0..d {
                den = den.max(xn * sp.component(j * d + k)[p].norm());
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Gaussian smoothing of every component with standard deviation `width`,
/// kernel truncated at four widths and renormalised to unit sum. Periodic
/// grids wrap; boxes extend by zero.
pub fn mollify(f: &Field, width: f64) -> Result<Field> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::Precondition(format!(
            "mollifier width {width} must be positive"
        )));
    }
    let grid = f.grid();
    let n = grid.len();
    let mut data = f.values().to_vec();
    for axis in 0..grid.dim() {
        let m = grid.resolution()[axis];
        let stride = grid.strides()[axis];
        let h = grid.spacing(axis);
        let taps = (4.0 * width / h).ceil() as isize;
        let mut kernel: Vec<f64> = (-taps..=taps)
            .map(|i| (-0.5 * (i as f64 * h / width).powi(2)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let periodic = grid.is_periodic();
        for comp in data.chunks_mut(n) {
            let src = comp.to_vec();
            comp.par_iter_mut().enumerate().for_each(|(p, out)| {
                let i = ((p / stride) % m) as isize;
                let base = p as isize - i * stride as isize;
                let mut acc = c(0.0);
                for (t, &w) in kernel.iter().enumerate() {
                    let mut j = i + t as isize - taps;
                    if periodic {
                        j = j.rem_euclid(m as isize);
                    } else if j < 0 || j >= m as isize {
                        continue;
                    }
                    acc += w * src[(base + j * stride as isize) as usize];
                }
                *out = acc;
            });
        }
    }
    Field::from_vec(grid, f.rank(), data)
}

fn det(m: &[f64], d: usize) -> f64 {
    nalgebra::DMatrix::from_row_slice(d, d, m).determinant()
}

/// RK4 for `X' = v(X)`, `J' = Dv(X) J` from `(x, I)` over `[0, t]` in
/// `steps` steps. Fails if the trajectory leaves the grid box.
fn flow(
    v: &BumpField,
    grid: &Grid,
    x: &[f64],
    t: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.len();
    let rhs = |s: &[f64]| -> Vec<f64> {
        let (pos, jm) = s.split_at(d);
        let mut out = v.value(pos);
        let dv = v.jacobian(pos);
        for i in 0..d {
            for k in 0..d {
                out.push((0..d).map(|l| dv[i * d + l] * jm[l * d + k]).sum());
            }
        }
        out
    };
    let mut s: Vec<f64> = x.to_vec();
    for i in 0..d {
        for k in 0..d {
            s.push(if i == k { 1.0 } else { 0.0 });
        }
    }
    let h = t / steps as f64;
    let shift = |s: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        s.iter().zip(k).map(|(u, v)| u + a * v).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(&s);
        let k2 = rhs(&shift(&s, &k1, 0.5 * h));
        let k3 = rhs(&shift(&s, &k2, 0.5 * h));
        let k4 = rhs(&shift(&s, &k3, h));
        for i in 0..s.len() {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !grid.contains(&s[..d]) {
            return Err(Error::Precondition(format!(
                "flow leaves the grid before t = {t}; reduce t"
            )));
        }
    }
    let jm = s.split_off(d);
    Ok((s, jm))
}

/// Steps per flow integration: `t / 64` per step.
pub const FLOW_STEPS: usize = 64;

/// Integrate the flow `Φ_t` of `v`, push the identity forward,
/// `I_t = det(DΦ)⁻¹ DΦᵀ DΦ`, and fit the order of
/// `‖I_t − I − t(∂_j v_k + ∂_k v_j − δ_jk ∇·v)‖` and of
/// `‖det DΦ_t − 1 − t ∇·v‖` in `t` (max norms over the grid).
pub fn tartar_linearization(
    v: &BumpField,
    grid: &Grid,
    t_list: &[f64],
) -> Result<ExperimentReport> {
    let d = grid.dim();
    v.check_inside(grid, 0)?;
    if t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Precondition("flow times must be positive".into()));
    }
    let mut rep = ExperimentReport::new("lincal-tartar", 0);
    rep.param("t_list", t_list);
    rep.param("flow_steps", FLOW_STEPS);
    rep.param("resolution", grid.resolution());
    rep.param("field", v);
    let mut tab = Table::new("tartar", &["t", "identity_residual", "det_residual"]);
    let (mut res_i, mut res_d) = (Vec::new(), Vec::new());
    for &t in t_list {
        let per_point: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|p| -> Result<(f64, f64)> {
                let x = grid.point(p);
                let (_, jm) = flow(v, grid, &x, t, FLOW_STEPS)?;
                let dv = v.jacobian(&x);
                let div: f64 = (0..d).map(|i| dv[i * d + i]).sum();
                let jdet = det(&jm, d);
                let mut ri: f64 = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        let jtj: f64 = (0..d).map(|l| jm[l * d + a] * jm[l * d + b]).sum();
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let lin = delta + t * (dv[b * d + a] + dv[a * d + b] - delta * div);
                        ri = ri.max((jtj / jdet - lin).abs());
                    }
                }
                Ok((ri, (jdet - 1.0 - t * div).abs()))
            })
            .collect::<Result<_>>()?;
        let ri = per_point.iter().map(|r| r.0).fold(0.0, f64::max);
        let rd = per_point.iter().map(|r| r.1).fold(0.0, f64::max);
        tab.push(vec![t, ri, rd]);
        res_i.push(ri);
        res_d.push(rd);
    }
    rep.table(tab);
    if res_i.iter().chain(&res_d).all(|r| *r == 0.0) {
        rep.metric(Metric::at_most("identity_residual_max", 0.0, 0.0));
        rep.metric(Metric::at_most("det_residual_max", 0.0, 0.0));
        return Ok(rep);
    }
    let (si, ei) = fit_slope(t_list, &res_i)?;
    let (sd, ed) = fit_slope(t_list, &res_d)?;
    rep.param("identity_slope_stderr", ei);
    rep.param("det_slope_stderr", ed);
    rep.metric(Metric::near("identity_slope", si, 2.0, 0.1));
    rep.metric(Metric::near("det_slope", sd, 2.0, 0.1));
    Ok(rep)
}

/// Default field for the gauge check: two overlapping bumps, one of them
/// compressible.
pub fn demo_field(dim: usize) -> BumpField {
    let e = |v: &[f64]| {
        (0..dim)
            .map(|i| v.get(i).copied().unwrap_or(0.0))
            .collect::<Vec<f64>>()
    };
    BumpField::new(vec![
        (Bump::new(e(&[0.0, 0.0, 0.0]), 0.6), e(&[1.0, 0.5, 0.0])),
        (
            Bump::new(e(&[0.2, -0.1, 0.1]), 0.5).with_amplitude(0.8),
            e(&[0.0, -0.3, 1.0]),
        ),
    ])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TartarOptions {
    pub t_list: Vec<f64>,
    pub resolution: usize,
}

impl Default for TartarOptions {
    fn default() -> Self {
        Self {
            t_list: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            resolution: 12,
        }
    }
}

/// [`tartar_linearization`] of [`demo_field`] on `[-1, 1]³`.
pub fn tartar_check(opts: &TartarOptions) -> Result<ExperimentReport> {
    let grid = Grid::cube(3, -1.0, 1.0, opts.resolution)?;
    tartar_linearization(&demo_field(3), &grid, &opts.t_list)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SufficiencyOptions {
    pub pairs: usize,
    pub harmonic_pairs: usize,
    pub dictionary: usize,
    pub resolution: usize,
}

impl Default for SufficiencyOptions {
    fn default() -> Self {
        Self {
            pairs: 20,
            harmonic_pairs: 100,
            dictionary: 40,
            resolution: 48,
        }
    }
}

/// `∫_{|y| < r} (1 − |y|²/r²)^m dy` in `d` dimensions.
pub fn poly_bump_integral(d: usize, r: f64, m: u32) -> f64 {
    let half = d as f64 / 2.0;
    r.powi(d as i32) * std::f64::consts::PI.powf(half) * gamma_ratio(m, half)
}

/// `Γ(m + 1) / Γ(m + 1 + h)` for half-integer or integer `h`.
fn gamma_ratio(m: u32, h: f64) -> f64 {
    // Γ(m+1)/Γ(m+1+h) = Γ(1)/Γ(1+h) · Π_{i=1..m} i/(i+h)
    let base = 1.0 / gamma_small(1.0 + h);
    (1..=m).fold(base, |acc, i| acc * i as f64 / (i as f64 + h))
}

/// Γ at positive integers and half-integers.
fn gamma_small(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 1.0;
    while x > 1.0 + 1e-12 {
        x -= 1.0;
        acc *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        acc * std::f64::consts::PI.sqrt()
    } else {
        acc
    }
}

/// Random obstruction pairs against random harmonic pairs on a periodic
/// grid, plus the non-obstruction `δ_jk φ` seen by `u₁ = u₂ = x₀`, plus
/// the polarization identity.
pub fn sufficiency_check(opts: &SufficiencyOptions, seed: u64) -> Result<ExperimentReport> {
    let grid = Grid::periodic(vec![(-1.0, 1.0); 3], vec![opts.resolution; 3])?;
    let mut rep = ExperimentReport::new("lincal-plant", seed);
    rep.param("pairs", opts.pairs);
    rep.param("harmonic_pairs", opts.harmonic_pairs);
    rep.param("dictionary", opts.dictionary);
    rep.param("resolution", opts.resolution);
    rep.param("collar", COLLAR);
    let tensors: Vec<Field> = (0..opts.pairs)
        .map(|i| build_obstruction(&random_pair(&grid, seed.wrapping_add(i as u64))?))
        .collect::<Result<_>>()?;
    let dict = harmonic_dictionary(3, opts.dictionary.max(2), seed)?;
    let sups: Vec<f64> = dict.iter().map(|u| grad_sup(u, &grid)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let picks: Vec<(usize, usize)> = (0..opts.harmonic_pairs)
        .map(|_| (rng.gen_range(0..dict.len()), rng.gen_range(0..dict.len())))
        .collect();
    let refs: Vec<&Field> = tensors.iter().collect();
    let norms: Vec<f64> = tensors.iter().map(|t| t.max_abs()).collect();
    let vol = grid.volume();
    let mut worst: f64 = 0.0;
    let mut tab = Table::new("sufficiency", &["harmonic_pair", "max_relative_identity"]);
    for (i, &(a, b)) in picks.iter().enumerate() {
        let vals = double_identity_many(&refs, &dict[a], &dict[b])?;
        let r = vals
            .iter()
            .zip(&norms)
            .map(|(v, n)| v.norm() / (n * sups[a] * sups[b] * vol).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        tab.push(vec![i as f64, r]);
        worst = worst.max(r);
    }
    rep.table(tab);
    rep.metric(Metric::at_most("max_relative_identity", worst, 1e-8));

    let phi = Bump::poly(vec![0.05, -0.1, 0.0], 0.6, PLANT_POWER);
    let diag = Field::tensor_from_fn(&grid, 2, |x, out| {
        let v = phi.value(x);
        for j in 0..3 {
            out[j * 3 + j] = c(v);
        }
    });
    let x0 = HarmonicFn::coordinate(0);
    let seen = double_identity(&diag, &x0, &x0)?;
    let want = poly_bump_integral(3, 0.6, PLANT_POWER);
    rep.param("non_obstruction_value", seen.re);
    rep.metric(Metric::at_most(
        "non_obstruction_relative_error",
        (seen - want).norm() / want,
        1e-10,
    ));

    let mut pol: f64 = 0.0;
    let rough = &tensors[0].add(&diag)?;
    for &(a, b) in picks.iter().take(5) {
        pol = pol.max(polarization_defect(rough, &dict[a], &dict[b])?);
    }
    rep.metric(Metric::at_most("polarization_defect", pol, 1e-12));
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeOptions {
    pub resolutions: Vec<usize>,
    /// Optional Gaussian pre-smoothing width (physical units).
    pub mollify: Option<f64>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            resolutions: vec![32, 40, 48, 64],
            mollify: None,
        }
    }
}

/// Round trip `decompose(build_obstruction(v, a))` under grid refinement,
/// and the non-obstruction `δ_jk φ` whose leftover stays bounded below.
pub fn decompose_refinement(opts: &DecomposeOptions, seed: u64) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("lincal-decompose", seed);
    rep.param("resolutions", &opts.resolutions);
    rep.param("collar", COLLAR);
    rep.param("mollify", opts.mollify);
    let mut tab = Table::new(
        "decompose",
        &[
            "n",
            "h",
            "v_relative_error",
            "b_relative_residual",
            "non_obstruction_residual",
            "fourier_divergence",
        ],
    );
    let mut exact_a = true;
    let phi = Bump::poly(vec![0.05, -0.1, 0.0], 0.5, PLANT_POWER);
    for &n in &opts.resolutions {
        let grid = Grid::cube(3, -1.0, 1.0, n)?;
        let pair = random_pair(&grid, seed)?;
        let mut t = build_obstruction(&pair)?;
        if let Some(w) = opts.mollify {
            t = mollify(&t, w)?;
        }
        let dec = decompose(&t)?;
        let (_, ca) = split(&t)?;
        exact_a &= dec
            .a
            .values()
            .iter()
            .zip(ca.values())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
        let v_err = dec.v.sub(pair.v())?.max_abs() / pair.v().max_abs();
        let b_res = dec.b_residual.max_abs() / t.max_abs();
        let diag = Field::tensor_from_fn(&grid, 2, |x, out| {
            let v = phi.value(x);
            for j in 0..3 {
                out[j * 3 + j] = c(v);
            }
        });
        let non = decompose(&diag)?.b_residual.max_abs() / diag.max_abs();
        tab.push(vec![
            n as f64,
            grid.spacing(0),
            v_err,
            b_res,
            non,
            dec.fourier_divergence,
        ]);
    }
    let h = tab.column("h").unwrap_or_default();
    let v_err = tab.column("v_relative_error").unwrap_or_default();
    let b_res = tab.column("b_relative_residual").unwrap_or_default();
    let non = tab.column("non_obstruction_residual").unwrap_or_default();
    rep.table(tab);
    let (sv, ev) = fit_slope(&h, &v_err)?;
    let (sb, eb) = fit_slope(&h, &b_res)?;
    rep.param("v_slope_stderr", ev);
    rep.param("b_slope_stderr", eb);
    rep.metric(Metric::at_least("v_slope", sv, 1.9));
    rep.metric(Metric::at_least("b_slope", sb, 1.9));
    rep.metric(Metric::at_least(
        "antisymmetric_part_exact",
        if exact_a { 1.0 } else { 0.0 },
        1.0,
    ));
    rep.metric(Metric::at_least(
        "non_obstruction_min_residual",
        non.iter().copied().fold(f64::INFINITY, f64::min),
        0.05,
    ));
    Ok(rep)
}
