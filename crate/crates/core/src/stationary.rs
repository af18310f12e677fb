//! Stationary-phase operators for `∫ e^{iλF(t)} U(t) dt` at a nondegenerate
//! critical point `t = 0`, evaluated exactly on truncated jets.
//!
//! With `G(t) = F(t) - F(0) - F''(0) t^2 / 2`,
//!
//! ```text
//! L_j U = sum_{mu=0}^{2j} i^{-j} / (nu! mu!) (-1 / (2F''(0)))^nu (G^mu U)^{(2nu)}(0),  nu = j + mu,
//! ```
//!
//! and the integral is `e^{iλF(0)} (2πi / (λF''(0)))^{1/2} Σ_j λ^{-j} L_j U`
//! up to `O(λ^{-k})` relative error after `k` terms.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{factorial, Jet};
use crate::quad::{integrate, QuadOptions};
use crate::report::{fit_slope, geomspace, ExperimentReport, Metric, Table};

const DEGENERACY_TOL: f64 = 1e-12;

/// Jet order needed by `L_j`: the `mu = 2j` term reads `t^{6j}`.
pub fn required_order(j: usize) -> usize {
    6 * j
}

/// Default jet order for a `k`-term expansion.
pub fn default_order(k: usize) -> usize {
    (2 * k + 8).max(required_order(k))
}

fn check_phase(f: &Jet) -> Result<Complex64> {
    let f2 = f.derivative_at_zero(2);
    if f2.norm() <= DEGENERACY_TOL {
        return Err(Error::Precondition(format!(
            "degenerate critical point, F''(0) = {f2}"
        )));
    }
    if f.coeff(1).norm() > DEGENERACY_TOL * (1.0 + f2.norm()) {
        return Err(Error::Precondition(format!(
            "t = 0 is not critical, F'(0) = {}",
            f.coeff(1)
        )));
    }
    Ok(f2)
}

/// The general `L_j`.
pub fn lj_general(f: &Jet, u: &Jet, j: usize) -> Result<Complex64> {
    let f2 = check_phase(f)?;
    let need = required_order(j);
    let have = f.order().min(u.order());
    if have < need {
        return Err(Error::Truncation { have, need });
    }
    let order = need.max(2);
    let mut g = f.truncate(order);
    {
        let mut c = g.coeffs().to_vec();
        c[0] = Complex64::new(0.0, 0.0);
        c[1] = Complex64::new(0.0, 0.0);
        c[2] = Complex64::new(0.0, 0.0);
        g = Jet::new(c, order);
    }
    let u = u.truncate(order);
    let base = -1.0 / (2.0 * f2);
    let phase = Complex64::i().powi(-(j as i32));
    let mut gmu_u = u.clone();
    let mut sum = Complex64::new(0.0, 0.0);
    for mu in 0..=2 * j {
        if mu > 0 {
            gmu_u = &gmu_u * &g;
        }
        let nu = j + mu;
        let term = gmu_u.derivative_at_zero(2 * nu) * base.powi(nu as i32)
            / (factorial(nu) * factorial(mu));
        sum += term;
    }
    Ok(phase * sum)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps = {eps} must be positive")));
    }
    Ok(())
}

/// `L_0..L_2` specialized to the transverse phase `F_2` below.
///
/// These are the forms implied by the general sum; [`lj_printed`] evaluates
/// the historically printed coefficients, which differ in `L_1`.
pub fn lj_specialized(u: &Jet, x1: f64, eps: f64, j: usize) -> Result<Complex64> {
    check_eps(eps)?;
    let s = x1 * x1 + eps * eps;
    let w = 3.0 * x1 * x1 - eps * eps;
    let d2 = u.derivative_at_zero(2);
    let d4 = u.derivative_at_zero(4);
    let u0 = u.coeff(0);
    match j {
        0 => Ok(u0),
        1 => Ok((d2 * s + u0 * (0.75 * w / s)) / (8.0 * eps)),
        2 => Ok(
            (d4 * (s * s) + d2 * (7.5 * w) + u0 * (105.0 * w * w / (16.0 * s * s)))
                / (128.0 * eps * eps),
        ),
        _ => Err(Error::Precondition(format!(
            "specialized L_{j} is not available"
        ))),
    }
}

/// Literal evaluations of the printed `L_1` and `L_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedL {
    /// The text read verbatim (`1/8` in `L_1`, `(x1^2 + eps)^2` in `L_2`).
    pub literal: Complex64,
    /// `L_2` with `(x1^2 + eps^2)^2`; equals `literal` for `L_1`.
    pub squared_sum: Complex64,
}

pub fn lj_printed(u: &Jet, x1: f64, eps: f64, j: usize) -> Result<PrintedL> {
    check_eps(eps)?;
    let s = x1 * x1 + eps * eps;
    let w = 3.0 * x1 * x1 - eps * eps;
    let d2 = u.derivative_at_zero(2);
    let d4 = u.derivative_at_zero(4);
    let u0 = u.coeff(0);
    match j {
        1 => {
            let v = (d2 * s + u0 * (0.125 * w / s)) / (8.0 * eps);
            Ok(PrintedL {
                literal: v,
                squared_sum: v,
            })
        }
        2 => {
            let rest = d2 * (7.5 * w) + u0 * (105.0 * w * w / (16.0 * s * s));
            let lit = (x1 * x1 + eps).powi(2);
            Ok(PrintedL {
                literal: (d4 * lit + rest) / (128.0 * eps * eps),
                squared_sum: (d4 * (s * s) + rest) / (128.0 * eps * eps),
            })
        }
        _ => Err(Error::Precondition(format!("no printed L_{j}"))),
    }
}

/// Taylor jets in `x_2` of the two transverse phase profiles at fixed `x_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub f1: Jet,
    pub f2: Jet,
}

pub fn phase_profile(x1: f64, eps: f64, order: usize) -> Result<PhaseProfile> {
    check_eps(eps)?;
    let s = x1 * x1 + eps * eps;
    let i = Complex64::i();
    let mut c1 = vec![Complex64::new(0.0, 0.0); 5];
    let mut c2 = c1.clone();
    c1[2] = i * (2.0 * x1 / s);
    c1[4] = -i * (0.5 * (x1.powi(3) - 3.0 * x1 * eps * eps) / s.powi(3));
    c2[2] = i * (2.0 * eps / s);
    c2[4] = i * (0.5 * (eps.powi(3) - 3.0 * x1 * x1 * eps) / s.powi(3));
    Ok(PhaseProfile {
        f1: Jet::new(c1, order.max(4)),
        f2: Jet::new(c2, order.max(4)),
    })
}

/// `F_2` as a function, for quadrature.
pub fn f2_value(x1: f64, eps: f64, t: f64) -> Complex64 {
    let s = x1 * x1 + eps * eps;
    let t2 = t * t;
    Complex64::i()
        * (2.0 * eps / s * t2 + 0.5 * (eps.powi(3) - 3.0 * x1 * x1 * eps) / s.powi(3) * t2 * t2)
}

/// Half-width of the window on which `Im F_2 > 0` away from the origin.
pub fn f2_positive_window(x1: f64, eps: f64) -> f64 {
    let s = x1 * x1 + eps * eps;
    let w = 3.0 * x1 * x1 - eps * eps;
    if w <= 0.0 {
        f64::INFINITY
    } else {
        (4.0 * s * s / w).sqrt()
    }
}

/// `(2πi / (λ F_2''(0)))^{1/2}`.
pub fn hormander_prefactor(x1: f64, eps: f64, lambda: f64) -> Result<Complex64> {
    check_eps(eps)?;
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    let s = x1 * x1 + eps * eps;
    let f2 = Complex64::new(0.0, 4.0 * eps / s);
    let v = (2.0 * PI * Complex64::i() / (lambda * f2)).sqrt();
    let printed = (PI * s / (2.0 * lambda * eps)).sqrt();
    if (v - printed).norm() > 1e-12 * printed {
        return Err(Error::Diagnostics(format!(
            "prefactor {v} differs from closed form {printed}"
        )));
    }
    Ok(v)
}

/// `k`-term expansion `e^{iλF(0)} (2πi/(λF''))^{1/2} Σ_{j<k} λ^{-j} L_j U`.
pub fn expansion(f: &Jet, u: &Jet, lambda: f64, k: usize) -> Result<Complex64> {
    let f2 = check_phase(f)?;
    let pref = (2.0 * PI * Complex64::i() / (lambda * f2)).sqrt();
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..k {
        s += lj_general(f, u, j)? * lambda.powi(-(j as i32));
    }
    Ok((Complex64::i() * lambda * f.coeff(0)).exp() * pref * s)
}

/// `∫_a^b e^{iλF(t)} U(t) dt` by adaptive Gauss–Kronrod.
pub fn oscillatory_quadrature<F, U>(
    f: F,
    u: U,
    lambda: f64,
    interval: (f64, f64),
    opts: QuadOptions,
) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
    U: Fn(f64) -> Complex64,
{
    if lambda < 1.0 {
        return Err(Error::Precondition(format!("lambda = {lambda} < 1")));
    }
    let (a, b) = interval;
    let integrand = |t: f64| (Complex64::i() * lambda * f(t)).exp() * u(t);
    // Split at the critical point so the peak is never straddled by a panel.
    if a < 0.0 && b > 0.0 {
        let (l, _) = integrate(&integrand, a, 0.0, opts)?;
        let (r, _) = integrate(&integrand, 0.0, b, opts)?;
        Ok(l + r)
    } else {
        Ok(integrate(integrand, a, b, opts)?.0)
    }
}

/// Relative error `|quad - expansion_k| / |prefactor|` over a `λ` sweep,
/// with the fitted log-log slope.
pub fn expansion_sweep<F, U>(
    f: F,
    u: U,
    f_jet: &Jet,
    u_jet: &Jet,
    interval: (f64, f64),
    lambdas: &[f64],
    k: usize,
) -> Result<(Table, f64)>
where
    F: Fn(f64) -> Complex64 + Sync,
    U: Fn(f64) -> Complex64 + Sync,
{
    let opts = QuadOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-15,
        max_intervals: 20000,
    };
    let f2 = check_phase(f_jet)?;
    let rows = lambdas
        .par_iter()
        .map(|&lam| {
            let q = oscillatory_quadrature(&f, &u, lam, interval, opts)?;
            let e = expansion(f_jet, u_jet, lam, k)?;
            let pref = (2.0 * PI * Complex64::i() / (lam * f2)).sqrt().norm();
            Ok(vec![lam, q.re, q.im, e.re, e.im, (q - e).norm() / pref])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        format!("expansion_k{k}"),
        &[
            "lambda",
            "quad_re",
            "quad_im",
            "expansion_re",
            "expansion_im",
            "error",
        ],
    );
    for r in rows {
        t.push(r);
    }
    let err = t.column("error").unwrap();
    let (slope, _) = fit_slope(lambdas, &err)?;
    Ok((t, slope))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryOptions {
    pub lambdas: Vec<f64>,
    /// Expansion lengths checked against quadrature.
    pub terms: Vec<usize>,
    /// Random inputs for the specialized/general comparison.
    pub samples: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            lambdas: geomspace(8.0, 128.0, 6),
            terms: vec![1, 2, 3],
            samples: 100,
        }
    }
}

fn exp_jet(a: Complex64, order: usize) -> Jet {
    Jet::var(order).scale(a).exp()
}

/// `U(t) = e^{αt} cos(γt)` and its jet.
fn test_amplitude(
    alpha: Complex64,
    gamma: f64,
    order: usize,
) -> (impl Fn(f64) -> Complex64 + Sync, Jet) {
    let i = Complex64::i();
    let jet = (&exp_jet(alpha + i * gamma, order) + &exp_jet(alpha - i * gamma, order))
        .scale(Complex64::new(0.5, 0.0));
    (move |t: f64| (alpha * t).exp() * (gamma * t).cos(), jet)
}

/// Gaussian oracle `F = it²`: the `k`-term expansion error must fall like
/// `λ^{-k}`. Then `L_1`, `L_2` in specialized form against the general sum
/// on the `F_2` jet at random `(x_1, ε, U)`, with the printed variants
/// reported alongside.
pub fn stationary_check(opts: &StationaryOptions, seed: u64) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ExperimentReport::new("stationary-phase", seed);
    rep.param("lambdas", &opts.lambdas);
    rep.param("terms", &opts.terms);
    rep.param("samples", opts.samples);
    let kmax = opts.terms.iter().copied().max().unwrap_or(1);
    let order = default_order(kmax);
    let f = Jet::new(
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::i(),
        ],
        order,
    );
    let alpha = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let gamma = rng.gen_range(0.5..1.5);
    rep.param(
        "amplitude",
        format!("exp(({:.6})t) cos({gamma:.6}t)", alpha),
    );
    let (u, ujet) = test_amplitude(alpha, gamma, order);
    for &k in &opts.terms {
        let (t, slope) = expansion_sweep(
            |t| Complex64::i() * t * t,
            &u,
            &f,
            &ujet,
            (-8.0, 8.0),
            &opts.lambdas,
            k,
        )?;
        rep.table(t);
        rep.metric(Metric::at_most(
            format!("gaussian_k{k}_slope"),
            slope,
            -(k as f64) + 0.3,
        ));
    }

    let (mut worst, mut literal_gap, mut squared_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let order = default_order(2);
    for _ in 0..opts.samples {
        let x1 = rng.gen_range(0.2..2.0);
        let eps = rng.gen_range(0.1..1.0);
        let coeffs: Vec<Complex64> = (0..=order)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let uj = Jet::new(coeffs, order);
        let f2 = phase_profile(x1, eps, order)?.f2;
        for j in 1..=2 {
            let g = lj_general(&f2, &uj, j)?;
            let s = lj_specialized(&uj, x1, eps, j)?;
            let p = lj_printed(&uj, x1, eps, j)?;
            let scale = g.norm().max(1.0);
            worst = worst.max((g - s).norm() / scale);
            literal_gap = literal_gap.max((g - p.literal).norm() / scale);
            squared_gap = squared_gap.max((g - p.squared_sum).norm() / scale);
        }
    }
    rep.param("printed_literal_gap", literal_gap);
    rep.param("printed_squared_sum_gap", squared_gap);
    rep.metric(Metric::at_most("specialized_vs_general", worst, 1e-10));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_phase(order: usize) -> Jet {
        Jet::new(
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::i(),
            ],
            order,
        )
    }

    #[test]
    fn constant_amplitude_on_gaussian() {
        let f = gaussian_phase(24);
        let one = Jet::constant(Complex64::new(1.0, 0.0), 24);
        assert!((lj_general(&f, &one, 0).unwrap() - 1.0).norm() < 1e-15);
        for j in 1..4 {
            assert!(lj_general(&f, &one, j).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn second_moment() {
        let f = gaussian_phase(6);
        let t2 = Jet::from_real(&[0.0, 0.0, 1.0], 6);
        assert!((lj_general(&f, &t2, 1).unwrap() - 0.5).norm() < 1e-15);
    }

    #[test]
    fn truncation_reported() {
        let f = gaussian_phase(10);
        let u = Jet::constant(Complex64::new(1.0, 0.0), 10);
        assert!(matches!(
            lj_general(&f, &u, 2),
            Err(Error::Truncation { have: 10, need: 12 })
        ));
    }

    #[test]
    fn degenerate_phase_rejected() {
        let f = Jet::from_real(&[0.0, 0.0, 0.0, 1.0], 8);
        assert!(matches!(lj_general(&f, &f, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn printed_l1_at_origin() {
        let eps = 0.3;
        let one = Jet::constant(Complex64::new(1.0, 0.0), 8);
        let p = lj_printed(&one, 0.0, eps, 1).unwrap();
        assert!((p.literal.re + 1.0 / (64.0 * eps)).abs() < 1e-14);
        let c = lj_specialized(&one, 0.0, eps, 1).unwrap();
        assert!((c.re + 3.0 / (32.0 * eps)).abs() < 1e-14);
    }

    #[test]
    fn prefactor_values() {
        let p = hormander_prefactor(1.0, 0.5, 100.0).unwrap();
        assert!((p.re - 0.198_166_3).abs() < 1e-6 && p.im.abs() < 1e-15);
        let q = hormander_prefactor(1.0, 0.5, 400.0).unwrap();
        assert!((q.re - 0.5 * p.re).abs() < 1e-15);
    }

    #[test]
    fn gaussian_oracle_and_specialized_forms() {
        let rep = stationary_check(
            &StationaryOptions {
                samples: 20,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert!(rep.pass(), "{:?}", rep.metrics);
        assert!(rep.params["printed_literal_gap"].as_f64().unwrap() > 1e-3);
    }

    #[test]
    fn profile_curvature() {
        let p = phase_profile(1.0, 0.5, 12).unwrap();
        let want = Complex64::new(0.0, 4.0 * 0.5 / 1.25);
        assert!((p.f2.derivative_at_zero(2) - want).norm() < 1e-12);
        assert_eq!(p.f2.coeff(0), Complex64::new(0.0, 0.0));
        assert_eq!(p.f2.coeff(1), Complex64::new(0.0, 0.0));
    }
}
