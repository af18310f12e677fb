//! A coupled quasilinear system in divergence form,
//!
//! ```text
//! −Δu^J + Σ_K ∇·(A^{JK} : ∇u^J ⊗ ∇u^K) = 0,   u^J = ε f^J on ∂Ω,
//! ```
//!
//! with `(A : ∇u ⊗ ∇v)_j = Σ_kl A_jkl ∂_k u ∂_l v`: fixed-point forward
//! solver, the Dirichlet-to-Neumann pairing against harmonic test functions
//! in volume form, and extraction of the `ε²` coefficient that exposes the
//! moments `∫ A^{JK} : ∇w ⊗ ∇v₀^J ⊗ ∇v₀^K`.
//!
//! The box is `Ω`; boundary data are restrictions of closed-form harmonic
//! functions, which are their own harmonic extensions `v₀^J`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::Bump;
use crate::calculus::{self, quadrature_weights};
use crate::density::{
    constant_times, levi_civita, orthonormal_complement, structure_tensor, triple_identity,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::green::{dirichlet_laplacian, green_dirichlet};
use crate::grid::Grid;
use crate::harmonic::{HarmonicFn, Polynomial};
use crate::report::{fit_slope, ExperimentReport, Metric, Table};
use crate::Complex64 as C;

/// Cells next to each face on which every `A^{JK}` must vanish.
pub const SUPPORT_COLLAR: usize = 3;

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

fn idx3(d: usize, j: usize, k: usize, l: usize) -> usize {
    (j * d + k) * d + l
}

/// The 2×2 table of 3-tensors `A^{JK}`, indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTensors {
    a: [[Field; 2]; 2],
}

impl CoupledTensors {
    pub fn new(a: [[Field; 2]; 2]) -> Result<Self> {
        let grid = a[0][0].grid().clone();
        if grid.is_periodic() {
            return Err(Error::UnsupportedDomain(
                "the Dirichlet problem needs a non-periodic box".into(),
            ));
        }
        let d = grid.dim();
        for (jj, row) in a.iter().enumerate() {
            for (kk, t) in row.iter().enumerate() {
                t.ensure_rank(3)?;
                if *t.grid() != grid {
                    return Err(Error::Shape(format!(
                        "A^{}{} lives on a different grid",
                        jj + 1,
                        kk + 1
                    )));
                }
                if !t.is_finite() {
                    return Err(Error::Precondition(format!(
                        "A^{}{} is not finite",
                        jj + 1,
                        kk + 1
                    )));
                }
                if !t.vanishes_on_collar(SUPPORT_COLLAR) {
                    return Err(Error::Precondition(format!(
                        "A^{}{} does not vanish within {SUPPORT_COLLAR} cells of the boundary",
                        jj + 1,
                        kk + 1
                    )));
                }
            }
            let t = &row[jj];
            for j in 0..d {
                for k in 0..d {
                    for l in (k + 1)..d {
                        if t.component(&[j, k, l]) != t.component(&[j, l, k]) {
                            return Err(Error::Precondition(format!(
                                "A^{0}{0} is not symmetric in its last two indices",
                                jj + 1
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { a })
    }

    pub fn zeros(grid: &Grid) -> Result<Self> {
        let z = Field::zeros(grid, 3);
        Self::new([[z.clone(), z.clone()], [z.clone(), z]])
    }

    pub fn get(&self, j: usize, k: usize) -> &Field {
        &self.a[j][k]
    }

    pub fn grid(&self) -> &Grid {
        self.a[0][0].grid()
    }

    /// `Ã` with `delta` added to entry `(j, k)`.
    pub fn perturbed(&self, j: usize, k: usize, delta: &Field) -> Result<Self> {
        let mut a = self.a.clone();
        a[j][k] = a[j][k].add(delta)?;
        Self::new(a)
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .flatten()
            .map(|t| t.max_abs())
            .fold(0.0, f64::max)
    }
}

/// Dirichlet data `(f¹, f²)` given by harmonic extensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub f: [HarmonicFn; 2],
}

impl BoundaryData {
    pub fn new(f1: HarmonicFn, f2: HarmonicFn) -> Self {
        Self { f: [f1, f2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Absolute bound on the discrete H¹ norm of the last update.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u: [Field; 2],
    /// `u^J − ε v₀^J`, zero on the boundary.
    pub correction: [Field; 2],
    /// Discrete H¹ norms of successive updates.
    pub history: Vec<f64>,
    pub epsilon: f64,
    /// Median ratio of successive residuals (0 when the first update
    /// vanishes).
    pub ratio: f64,
}

impl ForwardSolution {
    /// `max |Δ(u − εv₀) − Σ_K ∇·(A^{JK}:∇u^J⊗∇u^K)|` off the boundary.
    pub fn pde_residual(&self, a: &CoupledTensors, data: &BoundaryData) -> Result<f64> {
        let grid = a.grid();
        let grads = gradients(&check_data(a, data)?, &self.correction, self.epsilon)?;
        let fl = flux(a, &grads);
        let mut worst: f64 = 0.0;
        for j in 0..2 {
            let lhs = dirichlet_laplacian(&self.correction[j])?;
            let rhs = calculus::divergence(&fl[j])?;
            worst = worst.max(lhs.sub(&rhs)?.max_abs_where(|p| !grid.in_collar(p, 1)));
        }
        Ok(worst)
    }
}

/// `Σ_p w_p (|f|² + |∇f|²)` summed over components, square-rooted.
pub fn h1_norm(f: &Field, w: &[f64]) -> Result<f64> {
    let n = f.grid().len();
    let mut acc: f64 = 0.0;
    for comp in 0..f.n_components() {
        let s = Field::from_vec(f.grid(), 0, f.values()[comp * n..(comp + 1) * n].to_vec())?;
        acc += h1_from_parts(&s, &calculus::gradient(&s)?, w).powi(2);
    }
    Ok(acc.sqrt())
}

/// H¹ norm of a scalar field from its values and gradient.
fn h1_from_parts(f: &Field, grad: &Field, w: &[f64]) -> f64 {
    let n = f.grid().len();
    let g = grad.values();
    let acc: f64 = (0..n)
        .into_par_iter()
        .map(|p| {
            let e = f.values()[p].norm_sqr()
                + (0..f.dim()).map(|a| g[a * n + p].norm_sqr()).sum::<f64>();
            w[p] * e
        })
        .sum();
    acc.sqrt()
}

/// `F^J_j = Σ_K Σ_kl A^{JK}_jkl ∂_k u^J ∂_l u^K`.
fn flux(a: &CoupledTensors, grads: &[Field; 2]) -> [Field; 2] {
    let grid = a.grid();
    let d = grid.dim();
    let n = grid.len();
    let one = |jj: usize| -> Field {
        let mut f = Field::zeros(grid, 1);
        for (j, out) in f.values_mut().chunks_mut(n).enumerate() {
            for kk in 0..2 {
                let t = a.get(jj, kk);
                for k in 0..d {
                    let gk = &grads[jj].values()[k * n..(k + 1) * n];
                    for l in 0..d {
                        let coef = t.component(&[j, k, l]);
                        if coef.iter().all(|v| *v == c(0.0)) {
                            continue;
                        }
                        let gl = &grads[kk].values()[l * n..(l + 1) * n];
                        out.par_iter_mut()
                            .zip(coef.par_iter())
                            .zip(gk.par_iter().zip(gl.par_iter()))
                            .for_each(|((o, &t), (&x, &y))| *o += t * x * y);
                    }
                }
            }
        }
        f
    };
    [one(0), one(1)]
}

/// Closed-form `ε ∇v₀^J` plus difference gradients of the corrections.
fn gradients(base: &[Field; 2], corr: &[Field; 2], eps: f64) -> Result<[Field; 2]> {
    let g = |j: usize| -> Result<Field> {
        let mut out = calculus::gradient(&corr[j])?;
        out.axpy(c(eps), &base[j])?;
        Ok(out)
    };
    Ok([g(0)?, g(1)?])
}

/// `Δ⁻¹_D ∇·F^J` for both components.
fn solve_update(f: &[Field; 2]) -> Result<[Field; 2]> {
    let one = |j: usize| green_dirichlet(&calculus::divergence(&f[j])?);
    Ok([one(0)?, one(1)?])
}

fn check_data(a: &CoupledTensors, data: &BoundaryData) -> Result<[Field; 2]> {
    let grid = a.grid();
    Ok([data.f[0].sample_grad(grid)?, data.f[1].sample_grad(grid)?])
}

/// Fixed-point iteration `u ← ε v₀ + Δ⁻¹_D Σ_K ∇·(A^{JK}:∇u^J⊗∇u^K)`,
/// started from `ε v₀`.
pub fn solve_forward(
    a: &CoupledTensors,
    data: &BoundaryData,
    epsilon: f64,
    settings: &SolverSettings,
) -> Result<ForwardSolution> {
    let base = check_data(a, data)?;
    solve_with_base(a, data, &base, epsilon, settings, None)
}

fn solve_with_base(
    a: &CoupledTensors,
    data: &BoundaryData,
    base: &[Field; 2],
    epsilon: f64,
    settings: &SolverSettings,
    v1: Option<&[Field; 2]>,
) -> Result<ForwardSolution> {
    let grid = a.grid();
    let w = quadrature_weights(grid);
    let mut corr = [Field::zeros(grid, 0), Field::zeros(grid, 0)];
    let mut grad_corr = [Field::zeros(grid, 1), Field::zeros(grid, 1)];
    if let Some(v1) = v1 {
        for j in 0..2 {
            corr[j] = v1[j].clone().scale(c(epsilon * epsilon));
            grad_corr[j] = calculus::gradient(&corr[j])?;
        }
    }
    let mut history = Vec::new();
    let mut increases = 0;
    loop {
        let mut grads = grad_corr.clone();
        for j in 0..2 {
            grads[j].axpy(c(epsilon), &base[j])?;
        }
        let next = solve_update(&flux(a, &grads))?;
        let grad_next = [calculus::gradient(&next[0])?, calculus::gradient(&next[1])?];
        let mut r = 0.0;
        for j in 0..2 {
            r += h1_from_parts(
                &next[j].sub(&corr[j])?,
                &grad_next[j].sub(&grad_corr[j])?,
                &w,
            );
        }
        corr = next;
        grad_corr = grad_next;
        if let Some(&prev) = history.last() {
            increases = if r > prev { increases + 1 } else { 0 };
        }
        history.push(r);
        if r <= settings.tol {
            break;
        }
        if increases >= 3 {
            let n = history.len();
            return Err(Error::SmallnessViolated {
                ratio: history[n - 1] / history[n - 2],
            });
        }
        if history.len() >= settings.max_iter || (increases > 0 && history.len() > 3) {
            // Not diverging, yet no longer contracting: round-off floor.
            let reached = history.iter().copied().fold(f64::INFINITY, f64::min);
            return Err(Error::Resolution {
                tol: settings.tol,
                reached,
            });
        }
    }
    let ratios: Vec<f64> = history
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| p[1] / p[0])
        .collect();
    let ratio = median(&ratios);
    let u = [
        data.f[0].sample(grid)?.scale(c(epsilon)).add(&corr[0])?,
        data.f[1].sample(grid)?.scale(c(epsilon)).add(&corr[1])?,
    ];
    Ok(ForwardSolution {
        u,
        correction: corr,
        history,
        epsilon,
        ratio,
    })
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// `v₁^J = Δ⁻¹_D Σ_K ∇·(A^{JK}:∇v₀^J⊗∇v₀^K)`, the `ε²` term of `u^J`.
pub fn second_corrector(a: &CoupledTensors, data: &BoundaryData) -> Result<[Field; 2]> {
    let base = check_data(a, data)?;
    solve_update(&flux(a, &base))
}

/// `⟨n·∇u^J, w⟩ = ∫ ∇u^J·∇w − Σ_K ∫ (A^{JK}:∇u^J⊗∇u^K)·∇w`, from the
/// divergence theorem; valid because every `A^{JK}` vanishes near `∂Ω`.
pub fn dtn_pair(
    a: &CoupledTensors,
    data: &BoundaryData,
    epsilon: f64,
    w: &HarmonicFn,
    settings: &SolverSettings,
) -> Result<[C; 2]> {
    let sol = solve_forward(a, data, epsilon, settings)?;
    pair_solution(a, data, &sol, &[w.clone()]).map(|v| v[0])
}

fn pair_solution(
    a: &CoupledTensors,
    data: &BoundaryData,
    sol: &ForwardSolution,
    ws: &[HarmonicFn],
) -> Result<Vec<[C; 2]>> {
    let grid = a.grid();
    let base = check_data(a, data)?;
    let grads = gradients(&base, &sol.correction, sol.epsilon)?;
    let fl = flux(a, &grads);
    let q = quadrature_weights(grid);
    let n = grid.len();
    let d = grid.dim();
    ws.iter()
        .map(|w| {
            let gw = w.sample_grad(grid)?;
            let mut out = [c(0.0); 2];
            for (j, o) in out.iter_mut().enumerate() {
                *o = (0..n)
                    .into_par_iter()
                    .map(|p| {
                        let mut e = c(0.0);
                        for k in 0..d {
                            let gk = gw.values()[k * n + p];
                            e += (grads[j].values()[k * n + p] - fl[j].values()[k * n + p]) * gk;
                        }
                        e * q[p]
                    })
                    .sum();
            }
            Ok(out)
        })
        .collect()
}

/// Coefficients of a least-squares fit `y = c₁ε + c₂ε² + c₃ε³`.
fn cubic_fit(eps: &[f64], ys: &[C]) -> Result<[C; 3]> {
    let scale = eps.iter().copied().fold(0.0, f64::max);
    let m = DMatrix::from_fn(eps.len(), 3, |i, k| c((eps[i] / scale).powi(k as i32 + 1)));
    let sv = m.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond < 1e10) {
        return Err(Error::IllConditioned(format!(
            "ε fit condition number {cond:.2e}; widen the ε range"
        )));
    }
    let rhs = DVector::from_column_slice(ys);
    let sol = m
        .svd(true, true)
        .solve(&rhs, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    Ok([
        sol[0] / scale,
        sol[1] / scale.powi(2),
        sol[2] / scale.powi(3),
    ])
}

/// `c₂` per component with an error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrder {
    pub c2: [C; 2],
    pub c1: [C; 2],
    /// `|c₂(all ε) − c₂(all but the largest ε)|`, per component.
    pub error: [f64; 2],
}

pub const DEFAULT_EPS: [f64; 4] = [1e-2, 7.5e-3, 5e-3, 2.5e-3];

/// Fit the pairing `⟨Λ(εf), w⟩` over `eps_list` and return the `ε²`
/// coefficient for each component.
pub fn second_linearization(
    a: &CoupledTensors,
    data: &BoundaryData,
    w: &HarmonicFn,
    eps_list: &[f64],
    settings: &SolverSettings,
) -> Result<SecondOrder> {
    Ok(second_linearization_many(a, data, std::slice::from_ref(w), eps_list, settings)?[0])
}

/// [`second_linearization`] for several test functions sharing the forward
/// solves.
pub fn second_linearization_many(
    a: &CoupledTensors,
    data: &BoundaryData,
    ws: &[HarmonicFn],
    eps_list: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<SecondOrder>> {
    let mut distinct = eps_list.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || distinct[0] <= 0.0 {
        return Err(Error::IllConditioned(
            "need at least 3 distinct positive ε values; widen the ε range".into(),
        ));
    }
    let base = check_data(a, data)?;
    // Warm start at εv₀ + ε²v₁; v₁ does not depend on ε.
    let v1 = solve_update(&flux(a, &base))?;
    let pairings: Vec<Vec<[C; 2]>> = eps_list
        .par_iter()
        .map(|&e| {
            let sol = solve_with_base(a, data, &base, e, settings, Some(&v1))?;
            pair_solution(a, data, &sol, ws)
        })
        .collect::<Result<_>>()?;
    let largest = eps_list
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|p| p.0)
        .unwrap_or(0);
    let mut out = Vec::with_capacity(ws.len());
    for wi in 0..ws.len() {
        let mut so = SecondOrder {
            c2: [c(0.0); 2],
            c1: [c(0.0); 2],
            error: [0.0; 2],
        };
        for j in 0..2 {
            let ys: Vec<C> = pairings.iter().map(|p| p[wi][j]).collect();
            let full = cubic_fit(eps_list, &ys)?;
            so.c1[j] = full[0];
            so.c2[j] = full[1];
            if eps_list.len() > 3 {
                let (e2, y2): (Vec<f64>, Vec<C>) = eps_list
                    .iter()
                    .zip(&ys)
                    .enumerate()
                    .filter(|(i, _)| *i != largest)
                    .map(|(_, (e, y))| (*e, *y))
                    .unzip();
                let dropped = cubic_fit(&e2, &y2)?;
                so.error[j] = (full[1] - dropped[1]).norm();
            }
        }
        out.push(so);
    }
    Ok(out)
}

/// `Σ_K ∫ A^{JK} : ∇w ⊗ ∇v₀^J ⊗ ∇v₀^K` for each `J`, by direct quadrature.
pub fn moment(a: &CoupledTensors, data: &BoundaryData, w: &HarmonicFn) -> Result<[C; 2]> {
    let mut out = [c(0.0); 2];
    for (j, o) in out.iter_mut().enumerate() {
        for k in 0..2 {
            *o += triple_identity(a.get(j, k), w, &data.f[j], &data.f[k])?;
        }
    }
    Ok(out)
}

/// Seeded smooth coefficients: random constant tensors times polynomial
/// bumps, `A^{JJ}` symmetrised in the last two indices.
pub fn plant_tensors(grid: &Grid, amplitude: f64, seed: u64) -> Result<CoupledTensors> {
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<Field> = Vec::with_capacity(4);
    for jk in 0..4 {
        let center: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.08..0.08)).collect();
        let phi = Bump::poly(center, rng.gen_range(0.45..0.5), 8);
        phi.check_inside(grid, SUPPORT_COLLAR + 1)?;
        let mut t: Vec<C> = (0..d * d * d)
            .map(|_| c(amplitude * rng.gen_range(-1.0..1.0)))
            .collect();
        if jk == 0 || jk == 3 {
            for j in 0..d {
                for k in 0..d {
                    for l in (k + 1)..d {
                        let m = 0.5 * (t[idx3(d, j, k, l)] + t[idx3(d, j, l, k)]);
                        t[idx3(d, j, k, l)] = m;
                        t[idx3(d, j, l, k)] = m;
                    }
                }
            }
        }
        a.push(constant_times(grid, &t, &phi));
    }
    let mut it = a.into_iter();
    let mut next = || it.next().expect("four tensors");
    CoupledTensors::new([[next(), next()], [next(), next()]])
}

/// Structured changes `Ã − A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    #[default]
    None,
    /// `ε_jkl φ` added to `A¹²`.
    LeviCivita,
    /// `b_jδ_kl − b_kδ_jl` with `b = φ·(1, −½, ¼)` added to `A¹²`.
    Structure,
    /// A random constant tensor symmetric in its last two indices, times
    /// `φ`, added to `A¹¹`.
    Sym11,
}

impl std::str::FromStr for Perturbation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown perturbation `{s}`")))
    }
}

/// The bump carried by every perturbation.
pub fn perturbation_bump(dim: usize) -> Bump {
    let mut center = vec![0.0; dim];
    center[0] = 0.05;
    Bump::poly(center, 0.5, 8).with_amplitude(0.5)
}

/// `(J, K, ΔA)` for a perturbation kind, or `None`.
pub fn perturbation(
    kind: Perturbation,
    grid: &Grid,
    seed: u64,
) -> Result<Option<(usize, usize, Field)>> {
    let d = grid.dim();
    let phi = perturbation_bump(d);
    phi.check_inside(grid, SUPPORT_COLLAR + 1)?;
    Ok(match kind {
        Perturbation::None => None,
        Perturbation::LeviCivita => {
            if d != 3 {
                return Err(Error::Shape(format!(
                    "Levi-Civita perturbation needs dimension 3, got {d}"
                )));
            }
            let t: Vec<C> = (0..27)
                .map(|i| c(levi_civita(i / 9, (i / 3) % 3, i % 3)))
                .collect();
            Some((0, 1, constant_times(grid, &t, &phi)))
        }
        Perturbation::Structure => {
            let dir = [1.0, -0.5, 0.25];
            let b = Field::tensor_from_fn(grid, 1, |x, out| {
                let v = phi.value(x);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = c(v * dir.get(i).copied().unwrap_or(0.0));
                }
            });
            Some((0, 1, structure_tensor(&b)?))
        }
        Perturbation::Sym11 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
            let mut t = vec![c(0.0); d * d * d];
            for j in 0..d {
                for k in 0..d {
                    for l in k..d {
                        let v = c(rng.gen_range(-1.0..1.0));
                        t[idx3(d, j, k, l)] = v;
                        t[idx3(d, j, l, k)] = v;
                    }
                }
            }
            Some((0, 0, constant_times(grid, &t, &phi)))
        }
    })
}

/// A test function with Dirichlet data: `(w, f¹, f²)`.
#[derive(Debug, Clone)]
pub struct Triple {
    pub label: String,
    pub w: HarmonicFn,
    pub data: BoundaryData,
}

/// Linear triples, polarized triples with `f² = 0`, and Calderón-pair
/// triples `(e^{iζ₊·x}, e^{2iζ₋·x}, e^{iζ₊·x})` for seeded `ξ`, `count` in
/// total (at least the 6 fixed ones).
pub fn triple_dictionary(count: usize, seed: u64) -> Result<Vec<Triple>> {
    let x = HarmonicFn::coordinate;
    let zero = HarmonicFn::constant(0.0);
    let poly = |coef: Vec<f64>, exps: Vec<Vec<u32>>| -> Result<HarmonicFn> {
        Ok(HarmonicFn::polynomial(Polynomial {
            dim: 3,
            terms: coef.into_iter().zip(exps).collect(),
        }))
    };
    let mut out = vec![
        Triple {
            label: "linear(0,1,2)".into(),
            w: x(0),
            data: BoundaryData::new(x(1), x(2)),
        },
        Triple {
            label: "linear(1,2,0)".into(),
            w: x(1),
            data: BoundaryData::new(x(2), x(0)),
        },
        Triple {
            label: "linear(2,0,1)".into(),
            w: x(2),
            data: BoundaryData::new(x(0), x(1)),
        },
        Triple {
            label: "polarized(0,1)".into(),
            w: x(0),
            data: BoundaryData::new(x(1), zero.clone()),
        },
        Triple {
            label: "polarized(1,x0x2)".into(),
            w: x(1),
            data: BoundaryData::new(poly(vec![1.0], vec![vec![1, 0, 1]])?, zero.clone()),
        },
        Triple {
            label: "polarized(2,x0^2-x1^2)".into(),
            w: x(2),
            data: BoundaryData::new(
                poly(vec![1.0, -1.0], vec![vec![2, 0, 0], vec![0, 2, 0]])?,
                zero,
            ),
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(0.5..=2.0).contains(&norm) {
            continue;
        }
        let nu = orthonormal_complement(&xi).swap_remove(1);
        let plus = HarmonicFn::calderon(&xi, &nu, true, 1.0)?;
        let minus2 = HarmonicFn::calderon(&xi, &nu, false, 2.0)?;
        out.push(Triple {
            label: format!("calderon(xi={:.3},{:.3},{:.3})", xi[0], xi[1], xi[2]),
            w: plus.clone(),
            data: BoundaryData::new(minus2, plus),
        });
    }
    Ok(out)
}

/// Whether the experiment expects `A = Ã` to be indistinguishable.
fn expects_equal(kind: Perturbation) -> bool {
    kind == Perturbation::None
}

/// Compare extracted `c₂` moments of `A` and `Ã` over a dictionary.
pub fn uniqueness_experiment(
    a: &CoupledTensors,
    a_tilde: &CoupledTensors,
    dictionary: &[Triple],
    eps_list: &[f64],
    settings: &SolverSettings,
    expect_equal: bool,
) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("qls-unique", 0);
    rep.param("triples", dictionary.len());
    rep.param("eps_list", eps_list);
    rep.param("expect_equal", expect_equal);
    if dictionary.len() < 10 {
        rep.param(
            "warning",
            format!(
                "dictionary has {} triples (< 10): coverage is thin",
                dictionary.len()
            ),
        );
    }
    let mut tab = Table::new("uniqueness", &["triple", "gap_1", "gap_2", "noise"]);
    let mut labels = Vec::new();
    let (mut gap, mut noise): (f64, f64) = (0.0, 0.0);
    for (i, t) in dictionary.iter().enumerate() {
        let s = second_linearization(a, &t.data, &t.w, eps_list, settings)?;
        // Equal coefficients give identical deterministic solves.
        let st = if a == a_tilde {
            s
        } else {
            second_linearization(a_tilde, &t.data, &t.w, eps_list, settings)?
        };
        let g = [(s.c2[0] - st.c2[0]).norm(), (s.c2[1] - st.c2[1]).norm()];
        let nz = s.error.iter().chain(&st.error).copied().fold(0.0, f64::max);
        tab.push(vec![i as f64, g[0], g[1], nz]);
        labels.push(t.label.clone());
        gap = gap.max(g[0]).max(g[1]);
        noise = noise.max(nz);
    }
    rep.param("labels", labels);
    rep.param("max_gap", gap);
    rep.param("fit_noise", noise);
    rep.table(tab);
    if expect_equal {
        rep.metric(Metric::at_most("max_gap_minus_noise", gap - noise, 0.0));
    } else {
        let ratio = if noise > 0.0 {
            gap / noise
        } else if gap > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        rep.metric(Metric::at_least(
            "gap_over_noise",
            ratio.min(f64::MAX),
            10.0,
        ));
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlsOptions {
    pub resolution: usize,
    pub amplitude: f64,
    pub eps_list: Vec<f64>,
    pub solver: SolverSettings,
    pub perturbation: Perturbation,
    pub triples: usize,
}

impl Default for QlsOptions {
    fn default() -> Self {
        Self {
            resolution: 32,
            amplitude: 1.0,
            eps_list: DEFAULT_EPS.to_vec(),
            solver: SolverSettings::default(),
            perturbation: Perturbation::Structure,
            triples: 10,
        }
    }
}

fn box_grid(n: usize) -> Result<Grid> {
    Grid::cube(3, -1.0, 1.0, n)
}

fn default_data() -> BoundaryData {
    let xi = [1.0, 0.5, 0.0];
    let nu = orthonormal_complement(&xi).swap_remove(1);
    let wave = HarmonicFn::calderon(&xi, &nu, true, 1.0).expect("valid pair");
    BoundaryData::new(
        HarmonicFn::sum(vec![
            HarmonicFn::coordinate(0),
            HarmonicFn::coordinate(1).scaled(c(0.5)),
        ]),
        wave,
    )
}

/// ε-sweep of the forward solver: orders of `u − εv₀` and of
/// `u − εv₀ − ε²v₁`, trace, contraction ratio and PDE residual.
pub fn forward_orders(opts: &QlsOptions, seed: u64) -> Result<ExperimentReport> {
    let grid = box_grid(opts.resolution)?;
    let a = plant_tensors(&grid, opts.amplitude, seed)?;
    let data = default_data();
    let w = quadrature_weights(&grid);
    let v0 = [data.f[0].sample(&grid)?, data.f[1].sample(&grid)?];
    let v1 = second_corrector(&a, &data)?;
    let mut rep = ExperimentReport::new("qls-forward", seed);
    rep.param("resolution", opts.resolution);
    rep.param("amplitude", opts.amplitude);
    rep.param("eps_list", &opts.eps_list);
    rep.param("solver", opts.solver);
    let mut tab = Table::new(
        "forward",
        &[
            "eps",
            "first_order_error",
            "second_order_error",
            "ratio",
            "iterations",
        ],
    );
    let (mut trace, mut pde, mut ratio, mut monotone): (f64, f64, f64, bool) =
        (0.0, 0.0, 0.0, true);
    let (mut e1s, mut e2s) = (Vec::new(), Vec::new());
    let sols: Vec<ForwardSolution> = opts
        .eps_list
        .par_iter()
        .map(|&e| solve_forward(&a, &data, e, &opts.solver))
        .collect::<Result<_>>()?;
    for sol in &sols {
        let e = sol.epsilon;
        let (mut e1, mut e2) = (0.0f64, 0.0f64);
        for j in 0..2 {
            let r1 = sol.u[j].sub(&v0[j].clone().scale(c(e)))?;
            e1 = e1.max(h1_norm(&r1, &w)?);
            let mut r2 = r1.clone();
            r2.axpy(c(-e * e), &v1[j])?;
            e2 = e2.max(h1_norm(&r2, &w)?);
            let edge = sol.u[j]
                .sub(&v0[j].clone().scale(c(e)))?
                .max_abs_where(|p| grid.in_collar(p, 1));
            trace = trace.max(edge);
        }
        monotone &= sol
            .history
            .windows(2)
            .skip(1)
            .all(|p| p[1] < p[0] || p[1] == 0.0);
        pde = pde.max(sol.pde_residual(&a, &data)?);
        ratio = ratio.max(sol.ratio);
        tab.push(vec![e, e1, e2, sol.ratio, sol.history.len() as f64]);
        e1s.push(e1);
        e2s.push(e2);
    }
    rep.table(tab);
    let (s1, _) = fit_slope(&opts.eps_list, &e1s)?;
    let (s2, _) = fit_slope(&opts.eps_list, &e2s)?;
    rep.metric(Metric::near("first_order_slope", s1, 2.0, 0.1));
    rep.metric(Metric::near("second_order_slope", s2, 3.0, 0.15));
    rep.metric(Metric::at_most("boundary_trace_error", trace, 1e-10));
    rep.metric(Metric::at_most("contraction_ratio", ratio, 0.999));
    rep.metric(Metric::at_least(
        "history_decreasing",
        if monotone { 1.0 } else { 0.0 },
        1.0,
    ));
    rep.metric(Metric::at_most(
        "pde_residual",
        pde,
        10.0 * opts.solver.tol.max(1e-12),
    ));
    Ok(rep)
}

/// DtN pairing checks: `c₂` against the moment oracle on a generic triple
/// and on an `f² = 0` triple, `w ≡ 1` flux, and `A = 0`.
pub fn dtn_check(opts: &QlsOptions, seed: u64) -> Result<ExperimentReport> {
    let grid = box_grid(opts.resolution)?;
    let a = plant_tensors(&grid, opts.amplitude, seed)?;
    let mut rep = ExperimentReport::new("qls-dtn", seed);
    rep.param("resolution", opts.resolution);
    rep.param("eps_list", &opts.eps_list);
    let data = default_data();
    let w = HarmonicFn::sum(vec![
        HarmonicFn::coordinate(2),
        HarmonicFn::coordinate(0).scaled(c(0.3)),
    ]);
    let got = second_linearization(&a, &data, &w, &opts.eps_list, &opts.solver)?;
    let want = moment(&a, &data, &w)?;
    let mut rel: f64 = 0.0;
    for j in 0..2 {
        // The ε² coefficient of the pairing is minus the moment.
        rel = rel.max((got.c2[j] + want[j]).norm() / want[j].norm().max(f64::MIN_POSITIVE));
    }
    rep.param(
        "c2",
        got.c2.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    );
    rep.param(
        "moment",
        want.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    );
    rep.metric(Metric::at_most("c2_relative_error", rel, 1e-3));

    let lone = BoundaryData::new(data.f[0].clone(), HarmonicFn::constant(0.0));
    let got1 = second_linearization(&a, &lone, &w, &opts.eps_list, &opts.solver)?;
    let want1 = triple_identity(a.get(0, 0), &w, &lone.f[0], &lone.f[0])?;
    rep.metric(Metric::at_most(
        "f2_zero_relative_error",
        (got1.c2[0] + want1).norm() / want1.norm().max(f64::MIN_POSITIVE),
        1e-3,
    ));

    let flux_one = dtn_pair(
        &a,
        &data,
        opts.eps_list[0],
        &HarmonicFn::constant(1.0),
        &opts.solver,
    )?;
    rep.metric(Metric::at_most(
        "constant_flux",
        flux_one[0].norm().max(flux_one[1].norm()),
        1e-14,
    ));

    let zero = CoupledTensors::zeros(&grid)?;
    let z = second_linearization(&zero, &data, &w, &opts.eps_list, &opts.solver)?;
    rep.metric(Metric::at_most(
        "zero_tensor_c2",
        z.c2[0].norm().max(z.c2[1].norm()),
        1e-8,
    ));
    Ok(rep)
}

/// [`uniqueness_experiment`] for planted `A` against `A` plus the
/// configured perturbation.
pub fn unique_check(opts: &QlsOptions, seed: u64) -> Result<ExperimentReport> {
    let grid = box_grid(opts.resolution)?;
    let a = plant_tensors(&grid, opts.amplitude, seed)?;
    let a_tilde = match perturbation(opts.perturbation, &grid, seed)? {
        Some((j, k, delta)) => a.perturbed(j, k, &delta)?,
        None => a.clone(),
    };
    let dict = triple_dictionary(opts.triples, seed)?;
    let mut rep = uniqueness_experiment(
        &a,
        &a_tilde,
        &dict,
        &opts.eps_list,
        &opts.solver,
        expects_equal(opts.perturbation),
    )?;
    rep.seed = seed;
    rep.param("perturbation", opts.perturbation);
    rep.param("resolution", opts.resolution);
    Ok(rep)
}
