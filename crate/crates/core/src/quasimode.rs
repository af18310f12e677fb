//! Gaussian quasi-modes concentrating on the hyperplane `x_2 = 0`.
//!
//! The leading part of the construction is
//!
//! ```text
//! u(x) = e^{±τ x_0} e^{iτΨ(x_1, x_2)} a_τ(x),   τ = λ + iσ,
//! Ψ    = Σ_{j<=M} ψ_j(x_1) x_2^j,
//! a_τ  = χ(x_2/δ) h(x''') Σ_{k<=M} τ^{-k} Σ_{j<=M} v_{k;j}(x_1) x_2^j,
//! ```
//!
//! where the coefficients solve, order by order in `x_2`, the eikonal
//! equation `|∇'Ψ|² = 1` and the transport hierarchy
//! `2∇'Ψ·∇'v_k + (Δ'Ψ) v_k - iΔ'v_{k-1} = 0` (`v_{-1} = 0`). Every order
//! is a linear first-order ODE in `x_1` (Riccati for `ψ_2`).
//!
//! Low orders have closed forms in `z = x_1 - iε`. The remaining
//! coefficients are integrated with Dormand–Prince from zero initial data
//! at the left end of the `x_1` range and stored as Chebyshev interpolants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cheb::{self, Cheb};
use crate::cutoff::{self, chi};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::harmonic::{HarmonicFn, Kind};
use crate::ode::{self, OdeOptions};
use crate::quad::{integrate, QuadOptions};
use crate::report::{fit_slope, geomspace, ExperimentReport, Metric, Table};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

fn default_transverse() -> String {
    "const:c=1".into()
}

fn default_sign() -> i8 {
    1
}

fn default_dim() -> usize {
    3
}

/// Free constants of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeParams {
    pub lambda: f64,
    #[serde(default)]
    pub sigma: f64,
    pub eps: f64,
    pub delta: f64,
    pub m: usize,
    #[serde(default)]
    pub p3: C,
    #[serde(default)]
    pub p4: C,
    #[serde(default)]
    pub p5: C,
    #[serde(default)]
    pub q1: C,
    /// Harmonic factor in the variables `x_3 ..`, as a descriptor.
    #[serde(default = "default_transverse")]
    pub transverse: String,
    #[serde(default = "default_sign")]
    pub sign: i8,
    /// Interval of `x_1` on which the coefficients are built.
    pub x1_range: (f64, f64),
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl QuasimodeParams {
    /// Defaults used throughout the examples: `M = 4`, `ε = 0.5`,
    /// `x_1 ∈ [0.5, 1.5]`, `δ = 0.5`.
    pub fn new(lambda: f64, eps: f64, m: usize) -> Self {
        Self {
            lambda,
            sigma: 0.0,
            eps,
            delta: 0.5,
            m,
            p3: ZERO,
            p4: ZERO,
            p5: ZERO,
            q1: ZERO,
            transverse: default_transverse(),
            sign: 1,
            x1_range: (0.5, 1.5),
            dim: 3,
        }
    }

    pub fn tau(&self) -> C {
        C::new(self.lambda, self.sigma)
    }

    pub fn transverse_fn(&self) -> Result<HarmonicFn> {
        self.transverse.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta = {} must be positive", self.delta));
        }
        if !(2..=8).contains(&self.m) {
            return bad(format!("truncation order M = {} outside 2..=8", self.m));
        }
        if self.sign != 1 && self.sign != -1 {
            return bad(format!("sign = {} must be +1 or -1", self.sign));
        }
        if self.dim < 3 {
            return bad(format!("dimension {} < 3", self.dim));
        }
        let h = self.transverse_fn()?;
        if self.dim == 3
            && !(matches!(h.kind(), Kind::Constant(c) if *c * h.scale() == C::new(1.0, 0.0)))
        {
            return bad("the transverse factor must be the constant 1 in dimension 3".into());
        }
        let (lo, hi) = self.x1_range;
        if !(hi > lo) {
            return bad(format!("empty x1 range [{lo}, {hi}]"));
        }
        if lo <= 0.0 {
            return Err(Error::Singularity(format!(
                "x1 range [{lo}, {hi}] must lie in x1 > 0"
            )));
        }
        Ok(())
    }
}

/// `Σ c z^e` with `z = x_1 - iε`, principal branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Laurent(pub Vec<(C, f64)>);

impl Laurent {
    fn eval(&self, x: f64, eps: f64) -> [C; 3] {
        let z = C::new(x, -eps);
        let mut out = [ZERO; 3];
        for &(c, e) in &self.0 {
            if c == ZERO {
                continue;
            }
            if e == 0.0 {
                out[0] += c;
                continue;
            }
            let ze = z.powf(e - 2.0);
            out[2] += c * e * (e - 1.0) * ze;
            out[1] += c * e * ze * z;
            out[0] += c * ze * z * z;
        }
        out
    }
}

/// One coefficient function of `x_1`, with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum Coef {
    Closed(Laurent),
    Sampled { f: Cheb, d1: Cheb, d2: Cheb },
    Zero,
}

impl Coef {
    pub fn eval(&self, x: f64, eps: f64) -> [C; 3] {
        match self {
            Coef::Closed(l) => l.eval(x, eps),
            Coef::Sampled { f, d1, d2 } => [f.eval(x), d1.eval(x), d2.eval(x)],
            Coef::Zero => [ZERO; 3],
        }
    }

    pub fn value(&self, x: f64, eps: f64) -> C {
        self.eval(x, eps)[0]
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, Coef::Closed(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHierarchy {
    pub psi: Vec<Coef>,
    pub eps: f64,
    pub x1_range: (f64, f64),
    /// `min Im ψ_2` over the `x_1` range.
    pub kappa: f64,
    /// `min Im Ψ / x_2²` over the sampled cutoff support.
    pub kappa_support: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeHierarchy {
    /// `v[k][j]`.
    pub v: Vec<Vec<Coef>>,
}

/// How the closed-form orders are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Closed forms where known, ODE elsewhere.
    Closed,
    /// ODE for every order, started from the closed forms' initial values.
    Ode,
}

/// Free constants attached to orders above `M` play no role.
fn effective(p: &QuasimodeParams, order: usize, c: C) -> C {
    if order <= p.m {
        c
    } else {
        ZERO
    }
}

fn closed_psi(j: usize, p: &QuasimodeParams) -> Option<Laurent> {
    let i = C::i();
    let r = |v: f64| C::new(v, 0.0);
    Some(Laurent(match j {
        0 => vec![(r(1.0), 1.0), (i * p.eps, 0.0)],
        1 => vec![],
        2 => vec![(r(0.5), -1.0)],
        3 => vec![(p.p3, -3.0)],
        4 => vec![(r(-0.125), -3.0), (4.5 * p.p3 * p.p3, -5.0), (p.p4, -4.0)],
        5 => vec![
            (27.0 * p.p3 * p.p3 * p.p3, -7.0),
            (12.0 * p.p3 * p.p4, -6.0),
            (p.p5, -5.0),
        ],
        _ => return None,
    }))
}

fn closed_v(k: usize, j: usize, p: &QuasimodeParams) -> Option<Laurent> {
    match (k, j) {
        (0, 0) => Some(Laurent(vec![(C::new(1.0, 0.0), -0.5)])),
        // The p3 term pairs with ψ_3, which is truncated away when M < 3.
        (0, 1) => Some(Laurent(vec![
            (3.0 * effective(p, 3, p.p3), -2.5),
            (p.q1, -1.5),
        ])),
        _ => None,
    }
}

/// Chebyshev degree resolving functions analytic off the pole at `x_1 = iε`.
fn cheb_degree(range: (f64, f64), eps: f64) -> usize {
    let (m, h) = (0.5 * (range.0 + range.1), 0.5 * (range.1 - range.0));
    let w = C::new(-m, eps) / h;
    let s = (w * w - 1.0).sqrt();
    let rho = (w + s).norm().max((w - s).norm());
    let n = (60.0 / rho.ln()).ceil() as usize + 8;
    n.clamp(32, 256)
}

/// Values `[f, f', f'']` of each coefficient at one `x_1`.
type Jets = Vec<[C; 3]>;

fn get(v: &Jets, i: usize) -> [C; 3] {
    v.get(i).copied().unwrap_or([ZERO; 3])
}

/// Order-`j` coefficient of `|∇'Ψ|² - 1`.
pub fn eikonal_coeff(j: usize, psi: &Jets) -> C {
    eikonal_terms(j, psi).0
}

/// The coefficient together with the sum of the moduli of its terms.
fn eikonal_terms(j: usize, psi: &Jets) -> (C, f64) {
    let mut s = if j == 0 { C::new(-1.0, 0.0) } else { ZERO };
    let mut mag = s.norm();
    for a in 0..=j {
        let b = j - a;
        let t1 = get(psi, a)[1] * get(psi, b)[1];
        let t2 = get(psi, a + 1)[0] * get(psi, b + 1)[0] * ((a + 1) * (b + 1)) as f64;
        s += t1 + t2;
        mag += t1.norm() + t2.norm();
    }
    (s, mag)
}

/// Order-`j` coefficient of `2∇'Ψ·∇'v_k + (Δ'Ψ)v_k - iΔ'v_{k-1}`.
pub fn transport_coeff(j: usize, psi: &Jets, vk: &Jets, vkm1: Option<&Jets>) -> C {
    transport_terms(j, psi, vk, vkm1).0
}

fn transport_terms(j: usize, psi: &Jets, vk: &Jets, vkm1: Option<&Jets>) -> (C, f64) {
    let mut s = ZERO;
    let mut mag = 0.0;
    for a in 0..=j {
        let b = j - a;
        let pa = get(psi, a);
        let la = pa[2] + get(psi, a + 2)[0] * ((a + 2) * (a + 1)) as f64;
        let terms = [
            2.0 * pa[1] * get(vk, b)[1],
            2.0 * get(psi, a + 1)[0] * ((a + 1) * (b + 1)) as f64 * get(vk, b + 1)[0],
            la * get(vk, b)[0],
        ];
        for t in terms {
            s += t;
            mag += t.norm();
        }
    }
    if let Some(prev) = vkm1 {
        let lap = get(prev, j)[2] + get(prev, j + 2)[0] * ((j + 2) * (j + 1)) as f64;
        s -= C::i() * lap;
        mag += lap.norm();
    }
    (s, mag)
}

fn eval_all(coefs: &[Coef], x: f64, eps: f64) -> Jets {
    coefs.iter().map(|c| c.eval(x, eps)).collect()
}

/// Integrate `y' = rhs(x, y)` from `y(x_lo) = y0` and sample at Chebyshev
/// nodes; the derivative is sampled from the right-hand side itself.
fn solve_sampled<F>(rhs: F, range: (f64, f64), y0: C, n: usize) -> Result<Coef>
where
    F: Fn(f64, C) -> C,
{
    let mut xs = cheb::nodes(range.0, range.1, n);
    xs.reverse();
    let targets = &xs[1..];
    let sol = ode::solve(
        |x, y, d| d[0] = rhs(x, y[0]),
        range.0,
        &[y0],
        targets,
        OdeOptions::default(),
    )?;
    let mut vals = vec![y0];
    vals.extend(sol.into_iter().map(|v| v[0]));
    let ders: Vec<C> = xs.iter().zip(&vals).map(|(&x, &y)| rhs(x, y)).collect();
    vals.reverse();
    let mut ders = ders;
    ders.reverse();
    let f = Cheb::from_values(range.0, range.1, &vals);
    let d1 = Cheb::from_values(range.0, range.1, &ders).chopped(1e-15);
    let d2 = d1.derivative();
    Ok(Coef::Sampled { f, d1, d2 })
}

pub fn build_phase(params: &QuasimodeParams) -> Result<PhaseHierarchy> {
    build_phase_with(params, Route::Closed)
}

pub fn build_phase_with(params: &QuasimodeParams, route: Route) -> Result<PhaseHierarchy> {
    params.validate()?;
    let (eps, range, m) = (params.eps, params.x1_range, params.m);
    let n = cheb_degree(range, eps);
    let mut psi: Vec<Coef> = Vec::with_capacity(m + 1);
    psi.push(Coef::Closed(closed_psi(0, params).unwrap()));
    psi.push(Coef::Closed(closed_psi(1, params).unwrap()));
    for j in 2..=m {
        let closed = closed_psi(j, params);
        if route == Route::Closed {
            if let Some(l) = closed {
                psi.push(Coef::Closed(l));
                continue;
            }
        }
        let y0 = closed.map(|l| l.eval(range.0, eps)[0]).unwrap_or(ZERO);
        let known = psi.clone();
        let rhs = |x: f64, y: C| {
            let mut jets = eval_all(&known, x, eps);
            jets.push([y, ZERO, ZERO]);
            -0.5 * eikonal_coeff(j, &jets)
        };
        psi.push(solve_sampled(rhs, range, y0, n)?);
    }
    let (lo, hi) = range;
    let kappa = (0..=64)
        .map(|i| lo + (hi - lo) * i as f64 / 64.0)
        .map(|x| psi[2].value(x, eps).im)
        .fold(f64::INFINITY, f64::min);
    if kappa <= 0.0 {
        return Err(Error::Construction(format!(
            "Im ψ_2 reaches {kappa:.3e} <= 0"
        )));
    }
    let mut ph = PhaseHierarchy {
        psi,
        eps,
        x1_range: range,
        kappa,
        kappa_support: 0.0,
    };
    let mut ks = f64::INFINITY;
    for i in 0..=16 {
        let x1 = lo + (hi - lo) * i as f64 / 16.0;
        for l in 1..=40 {
            let x2 = params.delta * l as f64 / 40.0;
            for s in [x2, -x2] {
                ks = ks.min(ph.psi_value(x1, s).im / (s * s));
            }
        }
    }
    if ks <= 0.0 {
        return Err(Error::Construction(format!(
            "Im Ψ is not positive on the cutoff support (min Im Ψ / x2² = {ks:.3e}); reduce delta"
        )));
    }
    ph.kappa_support = ks;
    Ok(ph)
}

impl PhaseHierarchy {
    pub fn m(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn jets(&self, x1: f64) -> Jets {
        eval_all(&self.psi, x1, self.eps)
    }

    /// `Ψ(x_1, x_2)`.
    pub fn psi_value(&self, x1: f64, x2: f64) -> C {
        self.jets(x1)
            .iter()
            .rev()
            .fold(ZERO, |acc, j| acc * x2 + j[0])
    }

    /// Order-`j` eikonal residuals at `x_1`, `j = 0..=M`.
    pub fn eikonal_residuals(&self, x1: f64) -> Vec<C> {
        let jets = self.jets(x1);
        (0..=self.m()).map(|j| eikonal_coeff(j, &jets)).collect()
    }
}

pub fn build_amplitude(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
) -> Result<AmplitudeHierarchy> {
    build_amplitude_with(params, phase, Route::Closed)
}

pub fn build_amplitude_with(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
    route: Route,
) -> Result<AmplitudeHierarchy> {
    params.validate()?;
    if phase.m() != params.m || phase.x1_range != params.x1_range || phase.eps != params.eps {
        return Err(Error::Precondition(
            "phase hierarchy was built from different parameters".into(),
        ));
    }
    let (eps, range, m) = (params.eps, params.x1_range, params.m);
    let n = cheb_degree(range, eps);
    let mut v: Vec<Vec<Coef>> = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let mut row: Vec<Coef> = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let closed = closed_v(k, j, params);
            if route == Route::Closed {
                if let Some(l) = closed {
                    row.push(Coef::Closed(l));
                    continue;
                }
            }
            let y0 = closed.map(|l| l.eval(range.0, eps)[0]).unwrap_or(ZERO);
            let known = row.clone();
            let prev = if k > 0 { Some(&v[k - 1]) } else { None };
            let rhs = |x: f64, y: C| {
                let psi = phase.jets(x);
                let mut vk = eval_all(&known, x, eps);
                vk.push([y, ZERO, ZERO]);
                let pv = prev.map(|p| eval_all(p, x, eps));
                -0.5 * transport_coeff(j, &psi, &vk, pv.as_ref())
            };
            row.push(solve_sampled(rhs, range, y0, n)?);
        }
        v.push(row);
    }
    Ok(AmplitudeHierarchy { v })
}

impl AmplitudeHierarchy {
    pub fn jets(&self, k: usize, x1: f64, eps: f64) -> Jets {
        eval_all(&self.v[k], x1, eps)
    }

    /// Order-`j` transport residuals of `v_k` at `x_1`, `j = 0..=M`.
    pub fn transport_residuals(&self, phase: &PhaseHierarchy, k: usize, x1: f64) -> Vec<C> {
        let psi = phase.jets(x1);
        let vk = self.jets(k, x1, phase.eps);
        let prev = (k > 0).then(|| self.jets(k - 1, x1, phase.eps));
        (0..=phase.m())
            .map(|j| transport_coeff(j, &psi, &vk, prev.as_ref()))
            .collect()
    }
}

/// Largest order-`j <= M` residual of the eikonal and transport conditions
/// over `samples` points of the `x_1` range, each divided by
/// `max(1, Σ |terms|)` so that large higher-order coefficients are judged
/// at their own scale.
pub fn condition_residual(phase: &PhaseHierarchy, amp: &AmplitudeHierarchy, samples: usize) -> f64 {
    let (lo, hi) = phase.x1_range;
    let eps = phase.eps;
    let rel = |(v, mag): (C, f64)| v.norm() / mag.max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let x1 = lo + (hi - lo) * i as f64 / (samples - 1).max(1) as f64;
        let psi = phase.jets(x1);
        for j in 0..=phase.m() {
            worst = worst.max(rel(eikonal_terms(j, &psi)));
        }
        for k in 0..amp.v.len() {
            let vk = amp.jets(k, x1, eps);
            let prev = (k > 0).then(|| amp.jets(k - 1, x1, eps));
            for j in 0..=phase.m() {
                worst = worst.max(rel(transport_terms(j, &psi, &vk, prev.as_ref())));
            }
        }
    }
    worst
}

fn poly_eval(c: &[C], x: f64) -> C {
    c.iter().rev().fold(ZERO, |acc, v| acc * x + v)
}

/// Polynomial parts in `x_2` at fixed `x_1`: values and `x_1`/`x_2` derivatives.
struct Slice {
    psi: Jets,
    v: Vec<Jets>,
    tau: C,
}

impl Slice {
    fn new(
        params: &QuasimodeParams,
        phase: &PhaseHierarchy,
        amp: &AmplitudeHierarchy,
        x1: f64,
    ) -> Self {
        let v = (0..amp.v.len())
            .map(|k| amp.jets(k, x1, params.eps))
            .collect();
        Self {
            psi: phase.jets(x1),
            v,
            tau: params.tau(),
        }
    }

    /// `(Ψ, ∂_1Ψ, ∂_2Ψ)` at `x_2`.
    fn phase_at(&self, x2: f64) -> (C, C, C) {
        let mut d2 = ZERO;
        for (a, j) in self.psi.iter().enumerate().skip(1).rev() {
            d2 = d2 * x2 + j[0] * a as f64;
        }
        let val = poly_eval(&self.psi.iter().map(|j| j[0]).collect::<Vec<_>>(), x2);
        let d1 = poly_eval(&self.psi.iter().map(|j| j[1]).collect::<Vec<_>>(), x2);
        (val, d1, d2)
    }

    /// `(V, ∂_1V, ∂_2V)` at `x_2`, with `V = Σ_k τ^{-k} v_k`.
    fn amp_at(&self, x2: f64) -> (C, C, C) {
        let (mut val, mut d1, mut d2) = (ZERO, ZERO, ZERO);
        let mut tk = C::new(1.0, 0.0);
        for vk in &self.v {
            val += tk * poly_eval(&vk.iter().map(|j| j[0]).collect::<Vec<_>>(), x2);
            d1 += tk * poly_eval(&vk.iter().map(|j| j[1]).collect::<Vec<_>>(), x2);
            let mut dd = ZERO;
            for (a, j) in vk.iter().enumerate().skip(1).rev() {
                dd = dd * x2 + j[0] * a as f64;
            }
            d2 += tk * dd;
            tk /= self.tau;
        }
        (val, d1, d2)
    }

    fn m(&self) -> usize {
        self.psi.len() - 1
    }

    fn eikonal_poly(&self) -> Vec<C> {
        (0..=2 * self.m() + 2)
            .map(|j| eikonal_coeff(j, &self.psi))
            .collect()
    }

    /// Bracket `B_k` for `k = 0..=M+1` (with `v_{M+1} = 0`).
    fn transport_poly(&self, k: usize) -> Vec<C> {
        let empty: Jets = Vec::new();
        let vk = self.v.get(k).unwrap_or(&empty);
        let prev = if k > 0 { self.v.get(k - 1) } else { None };
        (0..=2 * self.m() + 2)
            .map(|j| transport_coeff(j, &self.psi, vk, prev))
            .collect()
    }

    /// `e^{-iτΨ}(τ² + Δ')(e^{iτΨ} χ V)` at `x_2`, transverse factor omitted.
    fn conjugated(&self, x2: f64, delta: f64, eik: &[C], brackets: &[Vec<C>]) -> C {
        let tau = self.tau;
        let (c0, c1, c2) = chi(x2 / delta);
        if c0 == 0.0 && c1 == 0.0 && c2 == 0.0 {
            return ZERO;
        }
        let (v, _, v2) = self.amp_at(x2);
        let (_, _, psi2) = self.phase_at(x2);
        let mut main = -tau * tau * poly_eval(eik, x2) * v;
        let mut tk = tau;
        for b in brackets {
            main += C::i() * tk * poly_eval(b, x2);
            tk /= tau;
        }
        let edge = C::i() * tau * 2.0 * psi2 * v * (c1 / delta)
            + 2.0 * v2 * (c1 / delta)
            + v * (c2 / (delta * delta));
        main * c0 + edge
    }
}

/// `(u, ∇u)` of the leading part of the quasi-mode at `point`.
pub fn eval_quasimode(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
    amp: &AmplitudeHierarchy,
    point: &[f64],
) -> Result<(C, Vec<C>)> {
    if point.len() != params.dim {
        return Err(Error::Shape(format!(
            "point of dimension {} for dim {}",
            point.len(),
            params.dim
        )));
    }
    let (x0, x1, x2) = (point[0], point[1], point[2]);
    let zero = (ZERO, vec![ZERO; params.dim]);
    let (c0, c1, _) = chi(x2 / params.delta);
    if c0 == 0.0 && c1 == 0.0 {
        return Ok(zero);
    }
    let h = params.transverse_fn()?;
    let rest = &point[3..];
    let (hv, hg) = if rest.is_empty() {
        (C::new(1.0, 0.0), Vec::new())
    } else {
        (h.value(rest), h.grad(rest))
    };
    let s = Slice::new(params, phase, amp, x1);
    let tau = params.tau();
    let sg = params.sign as f64;
    let (psi, psi1, psi2) = s.phase_at(x2);
    let (v, v1, v2) = s.amp_at(x2);
    let e = (sg * tau * x0 + C::i() * tau * psi).exp();
    let a = c0 * hv * v;
    let u = e * a;
    let mut g = vec![ZERO; params.dim];
    g[0] = sg * tau * u;
    g[1] = e * (C::i() * tau * psi1 * a + c0 * hv * v1);
    g[2] = e * (C::i() * tau * psi2 * a + hv * (c1 / params.delta * v + c0 * v2));
    for (i, d) in hg.into_iter().enumerate() {
        g[3 + i] = e * c0 * v * d;
    }
    Ok((u, g))
}

/// Sweeps for [`conjugated_residual`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualOptions {
    /// Number of `x_2` samples for the order-of-vanishing fits.
    pub n_x2: usize,
    /// `x_2` window, as multiples of `|x_1 - iε|`.
    pub x2_window: (f64, f64),
    pub lambdas: Vec<f64>,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            n_x2: 8,
            x2_window: (2e-3, 2e-2),
            lambdas: geomspace(200.0, 3200.0, 5),
        }
    }
}

pub fn conjugated_residual(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
    amp: &AmplitudeHierarchy,
    grid: &Grid,
) -> Result<ExperimentReport> {
    conjugated_residual_with(params, phase, amp, grid, &ResidualOptions::default())
}

/// Orders of vanishing in `x_2` of the eikonal and order-0 transport
/// brackets, and the decay in `λ` of the full conjugated residual.
///
/// The residual is measured as the `L²(dx_2)` norm of
/// `e^{iτ(Ψ - x_1)}(τ²+Δ')(e^{iτΨ}a_τ)` over `|x_2| <= δ` at the slice
/// `x_1` = centre of the grid's `x_1` extent, divided by `|τ|`.
pub fn conjugated_residual_with(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
    amp: &AmplitudeHierarchy,
    grid: &Grid,
    opts: &ResidualOptions,
) -> Result<ExperimentReport> {
    if grid.dim() != params.dim {
        return Err(Error::Shape(format!(
            "grid dimension {} for dim {}",
            grid.dim(),
            params.dim
        )));
    }
    if opts.n_x2 < 5 || opts.lambdas.len() < 5 {
        return Err(Error::Diagnostics(format!(
            "slope fits need at least 5 samples ({} x2, {} lambda)",
            opts.n_x2,
            opts.lambdas.len()
        )));
    }
    let (glo, ghi) = grid.extents()[1];
    let (lo, hi) = params.x1_range;
    if glo < lo || ghi > hi {
        return Err(Error::Precondition(format!(
            "grid x1 extent [{glo}, {ghi}] outside [{lo}, {hi}]"
        )));
    }
    let x1 = 0.5 * (glo + ghi);
    let m = params.m;
    let s = Slice::new(params, phase, amp, x1);
    let zn = C::new(x1, -params.eps).norm();
    let x2s = geomspace(opts.x2_window.0 * zn, opts.x2_window.1 * zn, opts.n_x2);

    let eik = s.eikonal_poly();
    let t0 = s.transport_poly(0);
    let mut orders = Table::new("x2_orders", &["x2", "eikonal", "transport0"]);
    for &x in &x2s {
        orders.push(vec![x, poly_eval(&eik, x).norm(), poly_eval(&t0, x).norm()]);
    }
    let (se, _) = fit_slope(&x2s, &orders.column("eikonal").unwrap())?;
    let (st, _) = fit_slope(&x2s, &orders.column("transport0").unwrap())?;

    let mut rep = ExperimentReport::new("quasimode-residual", 0);
    rep.param("params", params);
    rep.param("x1_slice", x1);
    rep.param("cutoff", cutoff::PROFILE);
    rep.param("kappa", phase.kappa);
    rep.param("kappa_support", phase.kappa_support);
    let target = (m + 1) as f64;
    rep.metric(Metric::near("eikonal_x2_slope", se, target, 0.3));
    rep.metric(Metric::near("transport0_x2_slope", st, target, 0.3));
    rep.metric(Metric::at_most(
        "condition_residual",
        condition_residual(phase, amp, 9),
        1e-9,
    ));

    let mut lam_tab = Table::new("lambda_decay", &["lambda", "residual"]);
    for &lam in &opts.lambdas {
        let mut p = params.clone();
        p.lambda = lam;
        let mut sl = Slice::new(&p, phase, amp, x1);
        sl.tau = p.tau();
        let brackets: Vec<Vec<C>> = (0..=m + 1).map(|k| sl.transport_poly(k)).collect();
        let tau = p.tau();
        let delta = p.delta;
        let integrand = |x2: f64| {
            let (psi, _, _) = sl.phase_at(x2);
            let w = (C::i() * tau * (psi - x1)).exp();
            let r = w * sl.conjugated(x2, delta, &eik, &brackets);
            C::new(r.norm_sqr(), 0.0)
        };
        let q = QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 4000,
        };
        let (l, _) = integrate(integrand, -delta, 0.0, q)?;
        let (r, _) = integrate(integrand, 0.0, delta, q)?;
        lam_tab.push(vec![lam, (l.re + r.re).sqrt() / tau.norm()]);
    }
    let (sl, _) = fit_slope(&opts.lambdas, &lam_tab.column("residual").unwrap())?;
    rep.metric(Metric::at_most(
        "lambda_slope",
        sl,
        -((m as f64) - 1.0) / 2.0 + 0.5,
    ));
    rep.table(orders);
    rep.table(lam_tab);
    Ok(rep)
}

/// [`conjugated_residual_with`] plus the gap between the ODE route and the
/// closed forms for `ψ_2 ..= ψ_min(5, M)` and `v_{0;0}`, `v_{0;1}`.
pub fn residual_check(
    params: &QuasimodeParams,
    grid: &Grid,
    opts: &ResidualOptions,
) -> Result<ExperimentReport> {
    let closed = build_phase(params)?;
    let amp = build_amplitude(params, &closed)?;
    let mut rep = conjugated_residual_with(params, &closed, &amp, grid, opts)?;
    let ode = build_phase_with(params, Route::Ode)?;
    let ode_amp = build_amplitude_with(params, &ode, Route::Ode)?;
    let (lo, hi) = params.x1_range;
    let mut gap: f64 = 0.0;
    for i in 0..=16 {
        let x = lo + (hi - lo) * i as f64 / 16.0;
        for j in 2..=params.m.min(5) {
            if closed.psi[j].is_closed() {
                gap = gap.max(
                    (closed.psi[j].value(x, params.eps) - ode.psi[j].value(x, params.eps)).norm(),
                );
            }
        }
        for j in 0..=1.min(params.m) {
            gap = gap.max(
                (amp.v[0][j].value(x, params.eps) - ode_amp.v[0][j].value(x, params.eps)).norm(),
            );
        }
    }
    rep.metric(Metric::at_most("ode_closed_form_gap", gap, 1e-9));
    Ok(rep)
}

/// Fitted Gaussian decay rate of `|u|` in `x_2` at fixed `(x_0, x_1)`,
/// returned with the prediction `λ Im ψ_2(x_1)`.
pub fn gaussian_decay_rate(
    params: &QuasimodeParams,
    phase: &PhaseHierarchy,
    amp: &AmplitudeHierarchy,
    x0: f64,
    x1: f64,
) -> Result<(f64, f64)> {
    let kap = phase.psi[2].value(x1, params.eps).im;
    let width = (1.0 / (params.lambda * kap)).sqrt();
    let top = (2.0 * width).min(0.5 * params.delta);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut pt = vec![0.0; params.dim];
    pt[0] = x0;
    pt[1] = x1;
    for i in 1..=16 {
        let x2 = top * i as f64 / 16.0;
        pt[2] = x2;
        let (u, _) = eval_quasimode(params, phase, amp, &pt)?;
        pt[2] = 0.0;
        let (u0, _) = eval_quasimode(params, phase, amp, &pt)?;
        xs.push(x2 * x2);
        ys.push(-(u.norm() / u0.norm()).ln());
    }
    let (rate, _, _) = crate::report::linear_fit(&xs, &ys);
    Ok((rate, params.lambda * kap))
}

/// A quasi-mode bundled with its hierarchies, sampled on grids.
#[derive(Debug, Clone)]
pub struct Quasimode {
    pub params: QuasimodeParams,
    pub phase: PhaseHierarchy,
    pub amp: AmplitudeHierarchy,
}

impl Quasimode {
    pub fn build(params: QuasimodeParams) -> Result<Self> {
        let phase = build_phase(&params)?;
        let amp = build_amplitude(&params, &phase)?;
        Ok(Self { params, phase, amp })
    }

    pub fn eval(&self, point: &[f64]) -> Result<(C, Vec<C>)> {
        eval_quasimode(&self.params, &self.phase, &self.amp, point)
    }
}

/// Normalized cutoff profile on a few points, for reports.
pub fn cutoff_samples() -> Vec<(f64, f64)> {
    (0..=8)
        .map(|i| 0.5 + i as f64 / 16.0)
        .map(|t| (t, chi(t).0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuasimodeParams {
        let mut p = QuasimodeParams::new(100.0, 0.5, 4);
        p.p3 = C::new(0.1, -0.05);
        p.p4 = C::new(-0.2, 0.1);
        p.p5 = C::new(0.05, 0.02);
        p.q1 = C::new(0.3, 0.4);
        p.delta = 0.3;
        p
    }

    #[test]
    fn psi2_value() {
        let p = QuasimodeParams::new(10.0, 0.5, 4);
        let ph = build_phase(&p).unwrap();
        let v = ph.psi[2].value(1.0, 0.5);
        assert!((v - C::new(0.4, 0.2)).norm() < 1e-15);
        let v4 = ph.psi[4].value(1.0, 0.5);
        assert!((v4 + 0.125 * C::new(1.0, -0.5).powi(-3)).norm() < 1e-15);
    }

    #[test]
    fn amplitude_closed_forms() {
        let p = QuasimodeParams::new(10.0, 0.5, 4);
        let ph = build_phase(&p).unwrap();
        let a = build_amplitude(&p, &ph).unwrap();
        let v00 = a.v[0][0].value(1.0, 0.5);
        // Polar form: |z|^{-1/2} e^{-i arg(z)/2} with z = 1 - 0.5i.
        let (r, th) = (1.25f64.sqrt(), (-0.5f64).atan2(1.0));
        let want = C::from_polar(r.powf(-0.5), -0.5 * th);
        assert!((v00 - want).norm() < 1e-15);
        assert!((v00 - C::new(0.920_442_065, 0.217_286_897)).norm() < 1e-9);
        for x in [0.5, 1.0, 1.5] {
            assert_eq!(a.v[0][1].value(x, 0.5), ZERO);
        }
    }

    #[test]
    fn conditions_hold_to_all_orders() {
        for m in [2, 4, 6, 8] {
            let mut p = params();
            p.m = m;
            p.delta = 0.2;
            let ph = build_phase(&p).unwrap();
            let a = build_amplitude(&p, &ph).unwrap();
            let r = condition_residual(&ph, &a, 7);
            assert!(r < 1e-9, "M = {m}: {r:e}");
        }
    }

    #[test]
    fn order_zero_transport_of_closed_forms() {
        let p = params();
        let ph = build_phase(&p).unwrap();
        let a = build_amplitude(&p, &ph).unwrap();
        for x in [0.5, 0.8, 1.5] {
            let r = a.transport_residuals(&ph, 0, x);
            assert!(r[0].norm() < 1e-12 && r[1].norm() < 1e-12);
        }
    }

    #[test]
    fn ode_route_reproduces_closed_forms() {
        let p = params();
        let closed = build_phase(&p).unwrap();
        let ode = build_phase_with(&p, Route::Ode).unwrap();
        let ac = build_amplitude(&p, &closed).unwrap();
        let ao = build_amplitude_with(&p, &ode, Route::Ode).unwrap();
        for x in [0.5, 0.77, 1.2, 1.5] {
            for j in 2..=4 {
                assert!((closed.psi[j].value(x, p.eps) - ode.psi[j].value(x, p.eps)).norm() < 1e-9);
            }
            for j in 0..=1 {
                assert!((ac.v[0][j].value(x, p.eps) - ao.v[0][j].value(x, p.eps)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = params();
        p.x1_range = (0.0, 1.0);
        assert!(matches!(build_phase(&p), Err(Error::Singularity(_))));
        let mut p = params();
        p.m = 9;
        assert!(build_phase(&p).is_err());
        let mut p = params();
        p.transverse = "coord:j=0".into();
        assert!(build_phase(&p).is_err());
    }

    #[test]
    fn cutoff_zeroes_far_field() {
        let q = Quasimode::build(params()).unwrap();
        let (u, g) = q.eval(&[0.0, 1.0, 0.35]).unwrap();
        assert_eq!(u, ZERO);
        assert!(g.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn gradient_matches_differences() {
        let mut p = params();
        p.lambda = 5.0;
        p.sigma = 0.7;
        let q = Quasimode::build(p).unwrap();
        let x = [0.1, 0.9, 0.17];
        let (_, g) = q.eval(&x).unwrap();
        let h = 1e-6;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (q.eval(&xp).unwrap().0 - q.eval(&xm).unwrap().0) / (2.0 * h);
            assert!(
                (fd - g[a]).norm() < 1e-6 * (1.0 + g[a].norm()),
                "{a}: {fd} vs {}",
                g[a]
            );
        }
    }

    #[test]
    fn modulus_scales_with_x0() {
        let q = Quasimode::build(params()).unwrap();
        let a = q.eval(&[0.0, 1.0, 0.05]).unwrap().0.norm();
        let b = q.eval(&[0.02, 1.0, 0.05]).unwrap().0.norm();
        assert!((b * (-100.0f64 * 0.02).exp() - a).abs() < 1e-12 * a);
    }

    #[test]
    fn gaussian_decay() {
        let q = Quasimode::build(params()).unwrap();
        let (rate, want) = gaussian_decay_rate(&q.params, &q.phase, &q.amp, 0.0, 1.0).unwrap();
        assert!((rate - want).abs() < 0.2 * want, "{rate} vs {want}");
    }
}
