//! Chebyshev interpolants on an interval, sampled at Chebyshev–Lobatto nodes.

use std::f64::consts::PI;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Cheb {
    a: f64,
    b: f64,
    /// Coefficients of `T_0 .. T_N` (end terms already halved).
    coeffs: Vec<Complex64>,
}

/// Nodes `x_k = mid + half * cos(pi k / n)`, `k = 0..=n`, in descending order.
pub fn nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    (0..=n)
        .map(|k| m + h * (PI * k as f64 / n as f64).cos())
        .collect()
}

impl Cheb {
    /// Interpolate `values` given at [`nodes`]`(a, b, n)`.
    pub fn from_values(a: f64, b: f64, values: &[Complex64]) -> Self {
        let n = values.len() - 1;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (k, v) in values.iter().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                s += v * (w * (PI * (j * k) as f64 / n as f64).cos());
            }
            *c = s * (2.0 / n as f64);
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Self { a, b, coeffs }
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(a: f64, b: f64, n: usize, f: F) -> Self {
        let v: Vec<Complex64> = nodes(a, b, n).into_iter().map(f).collect();
        Self::from_values(a, b, &v)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Clenshaw evaluation; extrapolates outside `[a, b]`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = Complex64::new(0.0, 0.0);
        let mut b2 = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + b1 * (2.0 * t) - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + b1 * t - b2
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len() - 1;
        if n == 0 {
            return Self {
                a: self.a,
                b: self.b,
                coeffs: vec![Complex64::new(0.0, 0.0)],
            };
        }
        // Undo the halved end term so the standard recurrence applies.
        let mut c = self.coeffs.clone();
        c[n] *= 2.0;
        let mut d = vec![Complex64::new(0.0, 0.0); n + 1];
        for j in (1..=n).rev() {
            let next = if j + 1 <= n {
                d[j + 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
            d[j - 1] = next + c[j] * (2.0 * j as f64);
        }
        d[0] *= 0.5;
        d.truncate(n);
        let scale = 2.0 / (self.b - self.a);
        Self {
            a: self.a,
            b: self.b,
            coeffs: d.into_iter().map(|v| v * scale).collect(),
        }
    }

    /// Drop trailing coefficients below `rel * max |c_j|`, keeping at least one.
    pub fn chopped(&self, rel: f64) -> Self {
        let big = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let keep = self
            .coeffs
            .iter()
            .rposition(|c| c.norm() > rel * big)
            .map_or(1, |i| i + 1);
        Self {
            a: self.a,
            b: self.b,
            coeffs: self.coeffs[..keep].to_vec(),
        }
    }

    /// Magnitude of the trailing coefficients, a resolution indicator.
    pub fn tail(&self) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .take(3)
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_polynomials_and_derivatives() {
        let f = |x: f64| Complex64::new(x.powi(3) - 2.0 * x, x * x);
        let c = Cheb::from_fn(0.5, 2.0, 8, f);
        let d = c.derivative();
        let dd = d.derivative();
        for x in [0.5, 0.9, 1.3, 2.0] {
            assert!((c.eval(x) - f(x)).norm() < 1e-13);
            assert!((d.eval(x) - Complex64::new(3.0 * x * x - 2.0, 2.0 * x)).norm() < 1e-12);
            assert!((dd.eval(x) - Complex64::new(6.0 * x, 2.0)).norm() < 1e-11);
        }
    }

    #[test]
    fn chop_keeps_values() {
        let f = |x: f64| Complex64::new(x.exp(), 0.0);
        let c = Cheb::from_fn(0.0, 1.0, 40, f);
        let k = c.chopped(1e-15);
        assert!(k.coeffs().len() < 25);
        assert!((k.eval(0.3) - f(0.3)).norm() < 1e-14);
    }

    #[test]
    fn spectral_accuracy_on_analytic_function() {
        let f = |x: f64| Complex64::new(x, -0.5).powf(-0.5);
        let c = Cheb::from_fn(0.5, 1.5, 48, f);
        let err = (0..100)
            .map(|i| 0.5 + i as f64 / 99.0)
            .map(|x| (c.eval(x) - f(x)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-14, "{err}");
    }
}
