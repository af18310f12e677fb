//! Three-gradient integral identities and the structure-recovery endgame.
//!
//! Tensors `B_jkl` are rank-3 fields. The contraction with three gradients
//! is `B : ∇u₁⊗∇u₂⊗∇u₃ = Σ B_jkl ∂_j u₁ ∂_k u₂ ∂_l u₃`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::Bump;
use crate::calculus::quadrature_weights;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::harmonic::{calderon_pair, harmonic_polynomials, HarmonicFn};
use crate::quad::{integrate, QuadOptions};
use crate::report::{ExperimentReport, Metric, Table};
use crate::spectral::Spectrum;
use crate::Complex64 as C;

const ZERO: C = C::new(0.0, 0.0);

/// `B` must vanish on the outer layer of samples; on a periodic grid the
/// seam (index 0 along any axis) plays that role.
pub fn check_support(b: &Field) -> Result<()> {
    let grid = b.grid();
    let ok = if grid.is_periodic() {
        let n = grid.len();
        let scale = b.max_abs().max(f64::MIN_POSITIVE);
        let mut idx = vec![0; grid.dim()];
        b.values().iter().enumerate().all(|(i, z)| {
            grid.unravel(i % n, &mut idx);
            !idx.contains(&0) || z.norm() <= 1e-14 * scale
        })
    } else {
        b.vanishes_on_collar(1)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(
            "tensor support touches the boundary of the grid".into(),
        ))
    }
}

fn idx3(d: usize, j: usize, k: usize, l: usize) -> usize {
    (j * d + k) * d + l
}

/// `∫ B : ∇u₁⊗∇u₂⊗∇u₃ dx` by grid quadrature with closed-form gradients.
pub fn triple_identity(b: &Field, u1: &HarmonicFn, u2: &HarmonicFn, u3: &HarmonicFn) -> Result<C> {
    b.ensure_rank(3)?;
    check_support(b)?;
    let grid = b.grid();
    for u in [u1, u2, u3] {
        u.check_on(grid)?;
    }
    let d = grid.dim();
    let n = grid.len();
    let w = quadrature_weights(grid);
    let vals = b.values();
    let total = (0..n)
        .into_par_iter()
        .map(|p| {
            if w[p] == 0.0 {
                return ZERO;
            }
            let x = grid.point(p);
            let (g1, g2, g3) = (u1.grad(&x), u2.grad(&x), u3.grad(&x));
            let mut s = ZERO;
            for j in 0..d {
                for k in 0..d {
                    let a = g1[j] * g2[k];
                    for l in 0..d {
                        let v = vals[idx3(d, j, k, l) * n + p];
                        if v != ZERO {
                            s += v * a * g3[l];
                        }
                    }
                }
            }
            s * w[p]
        })
        .sum();
    Ok(total)
}

/// Index symmetrizations of a 3-tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymMode {
    /// `½(B_jkl + B_kjl)`
    FirstTwoSym,
    /// `½(B_jkl - B_kjl)`
    FirstTwoAntisym,
    /// `½(B_jkl + B_jlk)`
    LastTwoSym,
    /// `½(B_jkl - B_jlk)`
    LastTwoAntisym,
    /// `⅓(B_jkl + B_klj + B_ljk)`
    Cyclic,
}

impl FromStr for SymMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown symmetry mode `{s}`")))
    }
}

impl fmt::Display for SymMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

/// `out_{jkl} = B_{σ(j,k,l)}`.
fn permuted(b: &Field, sigma: impl Fn(usize, usize, usize) -> (usize, usize, usize)) -> Field {
    let d = b.dim();
    let n = b.grid().len();
    let mut out = Field::zeros(b.grid(), 3);
    let src = b.values();
    let dst = out.values_mut();
    for j in 0..d {
        for k in 0..d {
            for l in 0..d {
                let (p, q, r) = sigma(j, k, l);
                let (o, i) = (idx3(d, j, k, l) * n, idx3(d, p, q, r) * n);
                dst[o..o + n].copy_from_slice(&src[i..i + n]);
            }
        }
    }
    out
}

pub fn symmetry_reduce(b: &Field, mode: SymMode) -> Result<Field> {
    b.ensure_rank(3)?;
    let half = C::new(0.5, 0.0);
    let out = match mode {
        SymMode::FirstTwoSym => b.add(&permuted(b, |j, k, l| (k, j, l)))?.scale(half),
        SymMode::FirstTwoAntisym => b.sub(&permuted(b, |j, k, l| (k, j, l)))?.scale(half),
        SymMode::LastTwoSym => b.add(&permuted(b, |j, k, l| (j, l, k)))?.scale(half),
        SymMode::LastTwoAntisym => b.sub(&permuted(b, |j, k, l| (j, l, k)))?.scale(half),
        SymMode::Cyclic => {
            let s = b.add(&permuted(b, |j, k, l| (k, l, j)))?;
            s.add(&permuted(b, |j, k, l| (l, j, k)))?
                .scale(C::new(1.0 / 3.0, 0.0))
        }
    };
    Ok(out)
}

/// `B_jkl = b_j δ_kl - b_k δ_jl`.
pub fn structure_tensor(b: &Field) -> Result<Field> {
    b.ensure_rank(1)?;
    let d = b.dim();
    let mut out = Field::zeros(b.grid(), 3);
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            out.component_mut(&[j, k, k])
                .copy_from_slice(b.component(&[j]));
            let bk = b.component(&[k]).to_vec();
            out.component_mut(&[j, k, j])
                .iter_mut()
                .zip(bk)
                .for_each(|(o, v)| *o = -v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StructureFit {
    pub b: Field,
    /// Max norm of `B` minus the reconstructed structure.
    pub residual: f64,
}

/// `b_j` = mean over `k ≠ j` of `B_jkk`, and the misfit of the structure.
pub fn structure_fit(b: &Field) -> Result<StructureFit> {
    b.ensure_rank(3)?;
    let d = b.dim();
    let mut v = Field::zeros(b.grid(), 1);
    for j in 0..d {
        let mut acc = vec![ZERO; b.grid().len()];
        for k in (0..d).filter(|&k| k != j) {
            acc.iter_mut()
                .zip(b.component(&[j, k, k]))
                .for_each(|(a, x)| *a += x);
        }
        let inv = 1.0 / (d - 1) as f64;
        v.component_mut(&[j])
            .iter_mut()
            .zip(acc)
            .for_each(|(o, a)| *o = a * inv);
    }
    let residual = b.sub(&structure_tensor(&v)?)?.max_abs();
    Ok(StructureFit { b: v, residual })
}

/// Planted test tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Zero,
    /// `ε_jkl φ` (3D only).
    LeviCivita,
    /// `b_jδ_kl - b_kδ_jl` with `b = φ e_0`.
    Structure,
    /// Structure tensor plus a fully antisymmetric part, random constants.
    Mixed,
    /// Random constants times `φ`, antisymmetric in the last two indices.
    RandomAntisym,
}

impl FromStr for PlantKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown plant kind `{s}`")))
    }
}

pub fn levi_civita(j: usize, k: usize, l: usize) -> f64 {
    match (j, k, l) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Tensor field `T_jkl φ(x)` for a constant tensor `T` (flat, row-major).
pub fn constant_times(grid: &Grid, t: &[C], phi: &Bump) -> Field {
    Field::tensor_from_fn(grid, 3, |x, out| {
        let v = phi.value(x);
        for (o, c) in out.iter_mut().zip(t) {
            *o = c * v;
        }
    })
}

pub fn plant(kind: PlantKind, grid: &Grid, phi: &Bump, seed: u64) -> Result<Field> {
    phi.check_inside(grid, 1)?;
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_c = || C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let eps: Vec<C> = (0..d * d * d)
        .map(|i| C::new(levi_civita(i / (d * d), (i / d) % d, i % d), 0.0))
        .collect();
    let field = match kind {
        PlantKind::Zero => Field::zeros(grid, 3),
        PlantKind::LeviCivita => {
            if d != 3 {
                return Err(Error::Shape(format!(
                    "Levi-Civita plant needs dimension 3, got {d}"
                )));
            }
            constant_times(grid, &eps, phi)
        }
        PlantKind::Structure => {
            let b = Field::tensor_from_fn(grid, 1, |x, out| out[0] = C::new(phi.value(x), 0.0));
            structure_tensor(&b)?
        }
        PlantKind::Mixed => {
            if d != 3 {
                return Err(Error::Shape(format!(
                    "mixed plant needs dimension 3, got {d}"
                )));
            }
            let dir: Vec<C> = (0..d).map(|_| rand_c()).collect();
            let b = Field::tensor_from_fn(grid, 1, |x, out| {
                let v = phi.value(x);
                for (o, c) in out.iter_mut().zip(&dir) {
                    *o = c * v;
                }
            });
            let a = rand_c();
            let anti: Vec<C> = eps.iter().map(|e| e * a).collect();
            structure_tensor(&b)?.add(&constant_times(grid, &anti, phi))?
        }
        PlantKind::RandomAntisym => {
            let t: Vec<C> = (0..d * d * d).map(|_| rand_c()).collect();
            symmetry_reduce(&constant_times(grid, &t, phi), SymMode::LastTwoAntisym)?
        }
    };
    Ok(field)
}

/// The constant relating the Calderón triple identity to `b̂(-2ξ)·ζ_±`.
///
/// With `u₁ = u₃ = e^{iζ_±·x}` and `u₂ = e^{2iζ_∓·x}` the gradients carry
/// `i·2i·i = -2i`, the structure contracts to `(b·ζ_±)(ζ_+·ζ_-)` because
/// `ζ_±` is null, and `ζ_+·ζ_- = |ξ|²/2`. The product is checked against the
/// closed form `-i|ξ|²`.
pub fn calderon_factor(xi: &[f64], nu: &[f64]) -> Result<C> {
    let pair = calderon_pair(xi, nu)?;
    let pm: C = pair
        .zeta_plus
        .iter()
        .zip(&pair.zeta_minus)
        .map(|(a, b)| a * b)
        .sum();
    let f = C::new(0.0, -2.0) * pm;
    let xi2: f64 = xi.iter().map(|v| v * v).sum();
    let want = C::new(0.0, -xi2);
    if (f - want).norm() > 1e-12 * xi2.max(1.0) {
        return Err(Error::Diagnostics(format!(
            "Calderón factor {f} differs from -i|ξ|² = {want}"
        )));
    }
    Ok(f)
}

/// Unit vectors completing `xi / |xi|` to an orthonormal basis.
pub fn orthonormal_complement(xi: &[f64]) -> Vec<Vec<f64>> {
    let d = xi.len();
    let n: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![xi.iter().map(|v| v / n).collect()];
    let mut cands: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    // Least aligned axes first keeps Gram-Schmidt well conditioned.
    cands.sort_by(|a, b| {
        let da: f64 = a
            .iter()
            .zip(&basis[0])
            .map(|(x, y)| x * y)
            .sum::<f64>()
            .abs();
        let db: f64 = b
            .iter()
            .zip(&basis[0])
            .map(|(x, y)| x * y)
            .sum::<f64>()
            .abs();
        da.total_cmp(&db)
    });
    for mut c in cands {
        for e in &basis {
            let p: f64 = c.iter().zip(e).map(|(x, y)| x * y).sum();
            c.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
        }
        let m: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if m > 1e-8 && basis.len() < d {
            basis.push(c.iter().map(|v| v / m).collect());
        }
    }
    basis.remove(0);
    basis
}

/// One recovered Fourier sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSample {
    pub xi: Vec<f64>,
    /// The frequency `k = -2ξ` at which `b̂` is recovered.
    pub freq: Vec<f64>,
    /// `b̂(k)·ξ`, averaged over the transverse directions.
    pub dot_xi: C,
    /// `b̂(k)·ν` for each transverse unit vector `ν`.
    pub dot_nu: Vec<C>,
    pub nus: Vec<Vec<f64>>,
    pub b_hat: Vec<C>,
    /// Spread of the `b̂·ξ` estimates across the transverse directions.
    pub spread: f64,
}

/// Recover `b̂(-2ξ)` for a structure tensor from Calderón triple identities.
pub fn calderon_recover_b(b: &Field, xis: &[Vec<f64>]) -> Result<Vec<FourierSample>> {
    let fit = structure_fit(b)?;
    let tol = 1e-10 * b.max_abs().max(1.0);
    if fit.residual > tol {
        return Err(Error::Precondition(format!(
            "structure residual {:.3e} exceeds {tol:.1e}",
            fit.residual
        )));
    }
    xis.par_iter().map(|xi| recover_one(b, xi)).collect()
}

fn recover_one(b: &Field, xi: &[f64]) -> Result<FourierSample> {
    let d = b.dim();
    if xi.len() != d {
        return Err(Error::Shape(format!(
            "xi of dimension {} for a {d}-d tensor",
            xi.len()
        )));
    }
    let n2: f64 = xi.iter().map(|v| v * v).sum();
    let n = n2.sqrt();
    if n < 1e-6 {
        return Err(Error::IllConditioned(format!(
            "|xi| = {n:.3e} too small to divide by |xi|^2"
        )));
    }
    let nus = orthonormal_complement(xi);
    let mut dot_xis = Vec::new();
    let mut dot_nu = Vec::new();
    for nu in &nus {
        let f = calderon_factor(xi, nu)?;
        let p1 = HarmonicFn::calderon(xi, nu, true, 1.0)?;
        let m2 = HarmonicFn::calderon(xi, nu, false, 2.0)?;
        let m1 = HarmonicFn::calderon(xi, nu, false, 1.0)?;
        let p2 = HarmonicFn::calderon(xi, nu, true, 2.0)?;
        let i1 = triple_identity(b, &p1, &m2, &p1)?;
        let i2 = triple_identity(b, &m1, &p2, &m1)?;
        dot_xis.push((i1 + i2) / f);
        dot_nu.push((i1 - i2) / (n2 * n));
    }
    let dot_xi = dot_xis.iter().sum::<C>() / dot_xis.len() as f64;
    let spread = dot_xis
        .iter()
        .map(|v| (v - dot_xi).norm())
        .fold(0.0, f64::max);
    let mut b_hat: Vec<C> = xi.iter().map(|v| dot_xi * (v / n2)).collect();
    for (nu, c) in nus.iter().zip(&dot_nu) {
        b_hat.iter_mut().zip(nu).for_each(|(o, v)| *o += c * v);
    }
    Ok(FourierSample {
        xi: xi.to_vec(),
        freq: xi.iter().map(|v| -2.0 * v).collect(),
        dot_xi,
        dot_nu,
        nus,
        b_hat,
        spread,
    })
}

/// Max relative error of recovered samples against the FFT of `b`.
pub fn recovery_error(b: &Field, samples: &[FourierSample]) -> Result<f64> {
    b.ensure_rank(1)?;
    let sp = Spectrum::of(b);
    let scale = (0..b.dim())
        .flat_map(|c| sp.component(c).iter().map(|z| z.norm()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for s in samples {
        let want = sp.at(&s.freq)?;
        for (a, w) in s.b_hat.iter().zip(&want) {
            worst = worst.max((a - w).norm() / scale);
        }
    }
    Ok(worst)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub const JACOBI_MAX: usize = 200;

/// Taylor coefficients `c_j = Σ_{l<=j} [5 + (-1)^{j-l}] (2l+1)!!/(2^l l!)`,
/// `j = 0..=jmax`. The ratio form `t_l = t_{l-1}(2l+1)/(2l)` avoids the
/// overflow of the double factorial; sums use compensated accumulation.
pub fn jacobi_moment_coeffs(jmax: usize) -> Result<Vec<f64>> {
    if jmax > JACOBI_MAX {
        return Err(Error::Precondition(format!("jmax = {jmax} > {JACOBI_MAX}")));
    }
    let mut t = vec![1.0; jmax + 1];
    for l in 1..=jmax {
        t[l] = t[l - 1] * (2 * l + 1) as f64 / (2 * l) as f64;
    }
    let out: Vec<f64> = (0..=jmax)
        .map(|j| {
            let mut s = Neumaier::default();
            for (l, tl) in t.iter().enumerate().take(j + 1) {
                let sign = if (j - l) % 2 == 0 { 6.0 } else { 4.0 };
                s.add(sign * tl);
            }
            s.value()
        })
        .collect();
    if let Some(j) = out.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::Diagnostics(format!(
            "coefficient {j} = {} is not positive",
            out[j]
        )));
    }
    Ok(out)
}

/// `(μ)_k / k!`
pub fn rising_coeff(mu: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (mu + i as f64) / (i + 1) as f64)
}

/// `t^{-μ}` on the branch continuous with `(t - iε)^{-μ}` as `ε → 0+`: the
/// argument of a negative `t` is taken as `-π`.
fn neg_power(t: f64, mu: f64) -> C {
    let arg = if t < 0.0 { -std::f64::consts::PI } else { 0.0 };
    C::from_polar(t.abs().powf(-mu), -mu * arg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentOptions {
    pub interval: (f64, f64),
    pub mu: f64,
    pub eps: Vec<f64>,
    pub terms: usize,
}

/// Compare `∫_I f(t)(t - iε)^{-μ} dt` with its truncated expansion
/// `Σ_k (iε)^k (μ)_k/k! ∫_I f t^{-μ-k} dt` for each `ε`.
pub fn weighted_moment_expand<F>(f: F, opts: &MomentOptions) -> Result<ExperimentReport>
where
    F: Fn(f64) -> C,
{
    let (a, b) = opts.interval;
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Precondition(format!(
            "interval [{a}, {b}] must be bounded and non-empty"
        )));
    }
    if a <= 0.0 && b >= 0.0 {
        return Err(Error::Precondition(format!(
            "interval [{a}, {b}] contains the origin"
        )));
    }
    if !(opts.mu > 0.0) {
        return Err(Error::Precondition(format!(
            "mu = {} must be positive",
            opts.mu
        )));
    }
    let dist = a.abs().min(b.abs());
    if let Some(e) = opts.eps.iter().find(|&&e| e >= dist || e <= 0.0) {
        return Err(Error::SeriesDivergence(format!(
            "eps = {e} outside (0, dist(0, I) = {dist})"
        )));
    }
    let q = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_intervals: 4000,
    };
    let k_max = opts.terms;
    let moments: Vec<C> = (0..k_max)
        .map(|k| integrate(|t| f(t) * neg_power(t, opts.mu + k as f64), a, b, q).map(|r| r.0))
        .collect::<Result<_>>()?;
    let mass = integrate(
        |t| C::new(f(t).norm() * t.abs().powf(-opts.mu), 0.0),
        a,
        b,
        q,
    )?
    .0
    .re;

    let mut rep = ExperimentReport::new("weighted-moment", 0);
    rep.param("interval", opts.interval);
    rep.param("mu", opts.mu);
    rep.param("terms", k_max);
    let mut tab = Table::new(
        "moment_series",
        &[
            "eps",
            "direct_re",
            "direct_im",
            "series_re",
            "series_im",
            "gap",
            "tail_bound",
        ],
    );
    for (i, &eps) in opts.eps.iter().enumerate() {
        let (direct, qerr) = integrate(|t| f(t) * C::new(t, -eps).powf(-opts.mu), a, b, q)?;
        let ie = C::new(0.0, eps);
        let series: C = moments
            .iter()
            .enumerate()
            .map(|(k, m)| ie.powu(k as u32) * rising_coeff(opts.mu, k) * m)
            .sum();
        let r = eps / dist;
        let growth = ((opts.mu + k_max as f64) / (k_max as f64 + 1.0)).max(1.0);
        let tail = if r * growth < 1.0 {
            mass * rising_coeff(opts.mu, k_max) * r.powi(k_max as i32) / (1.0 - r * growth)
        } else {
            f64::INFINITY
        };
        let gap = (direct - series).norm();
        tab.push(vec![
            eps, direct.re, direct.im, series.re, series.im, gap, tail,
        ]);
        rep.metric(Metric::at_most(
            format!("gap_{i}"),
            gap,
            tail + qerr + 1e-13,
        ));
    }
    rep.table(tab);
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryOptions {
    pub max_degree: u32,
    pub waves: usize,
    /// Nested dictionary sizes (number of gradient triples).
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        Self {
            max_degree: 3,
            waves: 6,
            sizes: vec![10, 20, 40, 80, 160],
            seed: 7,
        }
    }
}

/// Least-squares projection of a tensor field onto spans of
/// `∇u₁⊗∇u₂⊗∇u₃` over growing random dictionaries of harmonic polynomials
/// and Calderón waves. The decay of the relative residual is empirical
/// evidence for density only.
pub fn dictionary_projection(target: &Field, opts: &DictionaryOptions) -> Result<ExperimentReport> {
    target.ensure_rank(3)?;
    let grid = target.grid();
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut atoms: Vec<HarmonicFn> = harmonic_polynomials(opts.max_degree, d)?
        .into_iter()
        .filter(|h| !h.grad(&vec![0.3; d]).iter().all(|g| g.norm() == 0.0))
        .collect();
    for _ in 0..opts.waves {
        let xi: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let nu = orthonormal_complement(&xi).swap_remove(0);
        atoms.push(HarmonicFn::calderon(&xi, &nu, rng.gen_bool(0.5), 1.0)?);
    }
    let na = atoms.len();
    let mut triples: Vec<(usize, usize, usize)> = (0..na * na * na)
        .map(|i| (i / (na * na), (i / na) % na, i % na))
        .collect();
    triples.shuffle(&mut rng);
    let largest = opts
        .sizes
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .min(triples.len());
    triples.truncate(largest);

    let n = grid.len();
    let w: Vec<f64> = quadrature_weights(grid)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let grads: Vec<Field> = atoms
        .iter()
        .map(|a| a.sample_grad(grid))
        .collect::<Result<_>>()?;
    let rows = n * d * d * d;
    let col = |(a, b, c): (usize, usize, usize)| -> DVector<C> {
        let (ga, gb, gc) = (grads[a].values(), grads[b].values(), grads[c].values());
        DVector::from_iterator(
            rows,
            (0..d * d * d).flat_map(|t| {
                let (j, k, l) = (t / (d * d), (t / d) % d, t % d);
                (0..n).map(move |p| ga[j * n + p] * gb[k * n + p] * gc[l * n + p])
            }),
        )
        .component_mul(&DVector::from_iterator(
            rows,
            (0..d * d * d).flat_map(|_| w.iter().map(|v| C::new(*v, 0.0))),
        ))
    };
    let rhs = DVector::from_iterator(
        rows,
        target
            .values()
            .iter()
            .zip((0..rows).map(|i| w[i % n]))
            .map(|(v, s)| v * s),
    );
    let norm = rhs.norm();
    if norm == 0.0 {
        return Err(Error::Precondition("target tensor is zero".into()));
    }
    let mut rep = ExperimentReport::new("dictionary-projection", opts.seed);
    rep.param("evidence", "empirical");
    rep.param("atoms", na);
    rep.param("max_degree", opts.max_degree);
    let mut tab = Table::new("dictionary", &["size", "relative_residual"]);
    let mut cols: Vec<DVector<C>> = Vec::new();
    let mut residuals = Vec::new();
    for &s in &opts.sizes {
        let s = s.min(triples.len());
        while cols.len() < s {
            cols.push(col(triples[cols.len()]));
        }
        let a = DMatrix::from_columns(&cols);
        let svd = a.svd(true, true);
        let x = svd
            .solve(&rhs, 1e-10)
            .map_err(|e| Error::IllConditioned(e.to_string()))?;
        let r = (&rhs - DMatrix::from_columns(&cols) * x).norm() / norm;
        tab.push(vec![s as f64, r]);
        residuals.push(r);
    }
    let nonincreasing = residuals.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-9));
    rep.metric(Metric::at_least(
        "residual_nonincreasing",
        if nonincreasing { 1.0 } else { 0.0 },
        1.0,
    ));
    if let (Some(f), Some(l)) = (residuals.first(), residuals.last()) {
        rep.metric(Metric::at_most("final_relative_residual", *l, *f));
    }
    rep.table(tab);
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityOptions {
    pub plant: PlantKind,
    pub resolution: usize,
    pub dictionary: DictionaryOptions,
    pub seed: u64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            plant: PlantKind::Structure,
            resolution: 24,
            dictionary: DictionaryOptions::default(),
            seed: 1,
        }
    }
}

fn lattice_xis(grid: &Grid) -> Vec<Vec<f64>> {
    let per: Vec<f64> = (0..grid.dim())
        .map(|a| crate::spectral::period(grid, a))
        .collect();
    let ms: [&[i32]; 4] = [&[1, 0, 0], &[0, 2, -1], &[-1, 1, 3], &[2, -2, 1]];
    ms.iter()
        .map(|m| {
            (0..grid.dim())
                .map(|a| -std::f64::consts::PI * m.get(a).copied().unwrap_or(0) as f64 / per[a])
                .collect()
        })
        .collect()
}

/// Plant a tensor, fit the structure, recover `b̂` where the structure is
/// exact, and run the dictionary projection on a coarse copy.
pub fn density_check(opts: &DensityOptions) -> Result<ExperimentReport> {
    let grid = Grid::periodic(vec![(-1.0, 1.0); 3], vec![opts.resolution; 3])?;
    let phi = Bump::new(vec![0.05, -0.1, 0.0], 0.7);
    let b = plant(opts.plant, &grid, &phi, opts.seed)?;
    let fit = structure_fit(&b)?;
    let mut rep = ExperimentReport::new("density-check", opts.seed);
    rep.param("plant", opts.plant);
    rep.param("resolution", opts.resolution);
    rep.param("bump", &phi);
    let anti = symmetry_reduce(&b, SymMode::Cyclic)?;
    rep.param("structure_residual", fit.residual);
    rep.param("cyclic_part_max", anti.max_abs());
    let scale = b.max_abs().max(1.0);
    if fit.residual <= 1e-10 * scale {
        let xis = lattice_xis(&grid);
        let samples = calderon_recover_b(&b, &xis)?;
        let err = recovery_error(&fit.b, &samples)?;
        rep.metric(Metric::at_most("recovery_relative_error", err, 1e-6));
        rep.param("samples", &samples);
    } else {
        // Not of pure structure: the misfit is what the identities see.
        rep.metric(Metric::at_least(
            "structure_residual",
            fit.residual,
            1e-10 * scale,
        ));
    }
    let coarse = Grid::new(vec![(-1.0, 1.0); 3], vec![9; 3])?;
    let target = plant(
        opts.plant,
        &coarse,
        &Bump::new(vec![0.0; 3], 0.74),
        opts.seed,
    )?;
    if target.max_abs() > 0.0 {
        rep.absorb(
            "dictionary",
            dictionary_projection(&target, &opts.dictionary)?,
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    fn grid() -> Grid {
        Grid::cube(3, -1.0, 1.0, 17).unwrap()
    }

    fn coords() -> [HarmonicFn; 3] {
        [
            HarmonicFn::coordinate(0),
            HarmonicFn::coordinate(1),
            HarmonicFn::coordinate(2),
        ]
    }

    #[test]
    fn zero_tensor_gives_zero() {
        let g = grid();
        let [a, b, c] = coords();
        assert_eq!(
            triple_identity(&Field::zeros(&g, 3), &a, &b, &c).unwrap(),
            ZERO
        );
    }

    #[test]
    fn levi_civita_integrates_bump() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8).normalized(&g, 0.1).unwrap();
        let b = plant(PlantKind::LeviCivita, &g, &phi, 0).unwrap();
        let [x0, x1, x2] = coords();
        let v = triple_identity(&b, &x0, &x1, &x2).unwrap();
        assert!((v - C::new(0.1, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn support_on_boundary_rejected() {
        let g = grid();
        let b = Field::tensor_from_fn(&g, 3, |_, out| out[5] = C::new(1.0, 0.0));
        let [x0, x1, x2] = coords();
        assert!(matches!(
            triple_identity(&b, &x0, &x1, &x2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn antisymmetrized_kills_symmetric_pair() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8);
        let t: Vec<C> = (0..27)
            .map(|i| C::new((i as f64).sin(), (i as f64 * 0.7).cos()))
            .collect();
        let sym = symmetry_reduce(&constant_times(&g, &t, &phi), SymMode::LastTwoSym).unwrap();
        let anti = symmetry_reduce(&sym, SymMode::LastTwoAntisym).unwrap();
        assert!(anti.max_abs() < 1e-15);
        let u = HarmonicFn::calderon(&[1.0, 0.5, 0.0], &[0.0, 0.0, 1.0], true, 1.0).unwrap();
        let v = HarmonicFn::coordinate(1).scaled(C::new(2.0, 0.0));
        let raw = symmetry_reduce(&constant_times(&g, &t, &phi), SymMode::LastTwoAntisym).unwrap();
        assert!(triple_identity(&raw, &u, &v, &v).unwrap().norm() < 1e-12);
    }

    #[test]
    fn cyclic_examples() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8);
        let mut t = vec![ZERO; 27];
        t[idx3(3, 0, 1, 2)] = C::new(1.0, 0.0);
        let e = constant_times(&g, &t, &phi);
        let a = symmetry_reduce(&e, SymMode::Cyclic).unwrap();
        let p = g.len() / 2;
        for (j, k, l) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            assert!(
                (a.at(&[j, k, l], p) - C::new(phi.value(&g.point(p)) / 3.0, 0.0)).norm() < 1e-15
            );
        }
        assert_eq!(a.at(&[0, 2, 1], p), ZERO);
        let lc = plant(PlantKind::LeviCivita, &g, &phi, 0).unwrap();
        assert!(
            symmetry_reduce(&lc, SymMode::Cyclic)
                .unwrap()
                .sub(&lc)
                .unwrap()
                .max_abs()
                < 1e-15
        );
    }

    #[test]
    fn cyclic_average_of_identities() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8);
        let b = plant(PlantKind::RandomAntisym, &g, &phi, 3).unwrap();
        let us = [
            HarmonicFn::calderon(&[1.0, 0.0, 0.5], &[0.0, 1.0, 0.0], true, 1.0).unwrap(),
            "hpoly:dim=3;coef=1,-1;exps=2.0.0,0.2.0"
                .parse::<HarmonicFn>()
                .unwrap(),
            HarmonicFn::coordinate(2),
        ];
        let t = |i: usize, j: usize, k: usize| triple_identity(&b, &us[i], &us[j], &us[k]).unwrap();
        let lhs = triple_identity(
            &symmetry_reduce(&b, SymMode::Cyclic).unwrap(),
            &us[0],
            &us[1],
            &us[2],
        )
        .unwrap();
        let rhs = (t(0, 1, 2) + t(1, 2, 0) + t(2, 0, 1)) / 3.0;
        assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn structure_fit_examples() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8);
        let s = plant(PlantKind::Structure, &g, &phi, 0).unwrap();
        let fit = structure_fit(&s).unwrap();
        assert!(fit.residual <= 1e-12);
        assert_eq!(fit.b.component(&[0]), s.component(&[0, 1, 1]));
        assert!(fit.b.component(&[1]).iter().all(|z| *z == ZERO));

        let lc = plant(PlantKind::LeviCivita, &g, &phi, 0).unwrap();
        let fit = structure_fit(&lc).unwrap();
        assert_eq!(fit.b.max_abs(), 0.0);
        assert!((fit.residual - phi.sample(&g).max_abs()).abs() < 1e-15);
    }

    #[test]
    fn mixed_plant_residual_is_the_antisymmetric_part() {
        let g = grid();
        let phi = Bump::centered(&g, 0.8);
        let b = plant(PlantKind::Mixed, &g, &phi, 11).unwrap();
        let fit = structure_fit(&b).unwrap();
        let a = symmetry_reduce(&b, SymMode::Cyclic).unwrap();
        assert!((fit.residual - a.max_abs()).abs() < 1e-14);
        let again = structure_fit(&structure_tensor(&fit.b).unwrap()).unwrap();
        assert!(again.residual < 1e-15);
        assert!(again.b.sub(&fit.b).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn antisym_last_two_has_no_structure() {
        let g = grid();
        let b = plant(PlantKind::RandomAntisym, &g, &Bump::centered(&g, 0.8), 5).unwrap();
        let fit = structure_fit(&b).unwrap();
        assert_eq!(fit.b.max_abs(), 0.0);
        assert_eq!(fit.residual, b.max_abs());
    }

    #[test]
    fn calderon_factor_is_minus_i_xi_squared() {
        let f = calderon_factor(
            &[0.6, -0.8, 1.2],
            &orthonormal_complement(&[0.6, -0.8, 1.2])[0],
        )
        .unwrap();
        assert!((f - C::new(0.0, -(0.36 + 0.64 + 1.44))).norm() < 1e-14);
    }

    #[test]
    fn complement_is_orthonormal() {
        for xi in [
            vec![1.0, 0.0, 0.0],
            vec![0.3, -2.0, 0.7],
            vec![1.0, 1.0, 1.0, 1.0],
        ] {
            let c = orthonormal_complement(&xi);
            assert_eq!(c.len(), xi.len() - 1);
            for (i, a) in c.iter().enumerate() {
                assert!(a.iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-14);
                for (j, b) in c.iter().enumerate() {
                    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_structure_recovers_zero() {
        let g = Grid::periodic(vec![(-1.0, 1.0); 3], vec![12; 3]).unwrap();
        let s = calderon_recover_b(
            &Field::zeros(&g, 3),
            &[vec![0.5 * std::f64::consts::PI, 0.0, 0.0]],
        )
        .unwrap();
        assert!(s[0].b_hat.iter().all(|z| z.norm() == 0.0));
        assert!(matches!(
            calderon_recover_b(&Field::zeros(&g, 3), &[vec![1e-9, 0.0, 0.0]]),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn recovery_rejects_non_structure() {
        let g = Grid::periodic(vec![(-1.0, 1.0); 3], vec![12; 3]).unwrap();
        let lc = plant(PlantKind::LeviCivita, &g, &Bump::new(vec![0.0; 3], 0.7), 0).unwrap();
        assert!(matches!(
            calderon_recover_b(&lc, &[vec![1.0, 0.0, 0.0]]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn jacobi_first_values() {
        let c = jacobi_moment_coeffs(50).unwrap();
        assert_eq!(c[0], 6.0);
        assert_eq!(c[1], 13.0);
        assert!(c.iter().all(|v| *v > 0.0));
        assert!(jacobi_moment_coeffs(201).is_err());
    }

    #[test]
    fn jacobi_matches_jet_series() {
        let n = 60;
        let z = Jet::var(n);
        let one = Jet::constant(C::new(1.0, 0.0), n);
        let omz = &one - &z;
        let opz = &one + &z;
        let f = omz.powf(-1.5).unwrap()
            * (omz.recip().unwrap().scale(C::new(5.0, 0.0)) + opz.recip().unwrap());
        let c = jacobi_moment_coeffs(n).unwrap();
        for j in 0..=n {
            let want = f.coeff(j).re;
            assert!(
                (c[j] - want).abs() <= 1e-9 * want,
                "{j}: {} vs {want}",
                c[j]
            );
        }
    }

    #[test]
    fn moment_series_examples() {
        let opts = MomentOptions {
            interval: (1.0, 2.0),
            mu: 1.0,
            eps: vec![0.1],
            terms: 10,
        };
        let rep = weighted_moment_expand(|_| C::new(1.0, 0.0), &opts).unwrap();
        assert!(rep.pass());
        let t = &rep.tables[0];
        assert!(t.column("gap").unwrap()[0] < 1e-8);
        let zero = weighted_moment_expand(|_| ZERO, &opts).unwrap();
        assert_eq!(zero.tables[0].column("direct_re").unwrap()[0], 0.0);
        assert_eq!(rising_coeff(2.5, 1), 2.5);
        let bad = MomentOptions {
            eps: vec![1.0],
            ..opts.clone()
        };
        assert!(matches!(
            weighted_moment_expand(|_| ZERO, &bad),
            Err(Error::SeriesDivergence(_))
        ));
        let neg = MomentOptions {
            interval: (-2.0, -0.5),
            mu: 1.5,
            eps: vec![0.05, 0.2],
            terms: 30,
        };
        assert!(weighted_moment_expand(|t| C::new(t.cos(), t), &neg)
            .unwrap()
            .pass());
    }

    #[test]
    fn dictionary_residual_decreases() {
        let g = Grid::cube(3, -1.0, 1.0, 8).unwrap();
        let b = plant(PlantKind::Mixed, &g, &Bump::new(vec![0.0; 3], 0.7), 2).unwrap();
        let opts = DictionaryOptions {
            sizes: vec![5, 15, 45],
            ..DictionaryOptions::default()
        };
        let rep = dictionary_projection(&b, &opts).unwrap();
        assert!(rep.pass(), "{:?}", rep.metrics);
        let r = rep.tables[0].column("relative_residual").unwrap();
        assert!(r[2] < r[0]);
    }
}
