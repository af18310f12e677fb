//! Truncated Taylor series in one variable at the origin.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients `c_0 .. c_N` of a series truncated after `t^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<Complex64>,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl Jet {
    pub fn new(mut coeffs: Vec<Complex64>, order: usize) -> Self {
        coeffs.resize(order + 1, zero());
        Self { coeffs }
    }

    pub fn from_real(coeffs: &[f64], order: usize) -> Self {
        Self::new(
            coeffs.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            order,
        )
    }

    pub fn constant(c: Complex64, order: usize) -> Self {
        Self::new(vec![c], order)
    }

    /// The identity `t`.
    pub fn var(order: usize) -> Self {
        Self::new(vec![zero(), Complex64::new(1.0, 0.0)], order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_else(zero)
    }

    /// `k`-th derivative at 0, i.e. `k! c_k`.
    pub fn derivative_at_zero(&self, k: usize) -> Complex64 {
        self.coeff(k) * factorial(k)
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(self.coeffs[..=order.min(self.order())].to_vec(), order)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `d/dt`; the result has order `N - 1`.
    pub fn derivative(&self) -> Self {
        let n = self.order();
        if n == 0 {
            return Self::constant(zero(), 0);
        }
        Self {
            coeffs: (1..=n).map(|k| self.coeffs[k] * k as f64).collect(),
        }
    }

    pub fn eval(&self, t: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(zero(), |acc, c| acc * t + c)
    }

    pub fn powi(&self, p: u32) -> Self {
        let mut out = Self::constant(Complex64::new(1.0, 0.0), self.order());
        for _ in 0..p {
            out = &out * self;
        }
        out
    }

    /// Principal-branch real power; needs a non-zero constant term.
    pub fn powf(&self, alpha: f64) -> Result<Self> {
        let a = &self.coeffs;
        if a[0] == zero() {
            return Err(Error::Singularity(
                "power of a jet with zero constant term".into(),
            ));
        }
        let n = self.order();
        let mut b = vec![zero(); n + 1];
        b[0] = a[0].powf(alpha);
        for k in 1..=n {
            let mut s = zero();
            for j in 1..=k {
                s += a[j] * b[k - j] * (alpha * j as f64 - (k - j) as f64);
            }
            b[k] = s / (a[0] * k as f64);
        }
        Ok(Self { coeffs: b })
    }

    pub fn recip(&self) -> Result<Self> {
        let a = &self.coeffs;
        if a[0] == zero() {
            return Err(Error::Singularity(
                "reciprocal of a jet with zero constant term".into(),
            ));
        }
        let n = self.order();
        let mut b = vec![zero(); n + 1];
        b[0] = 1.0 / a[0];
        for k in 1..=n {
            let s: Complex64 = (1..=k).map(|j| a[j] * b[k - j]).sum();
            b[k] = -s / a[0];
        }
        Ok(Self { coeffs: b })
    }

    pub fn exp(&self) -> Self {
        let a = &self.coeffs;
        let n = self.order();
        let mut b = vec![zero(); n + 1];
        b[0] = a[0].exp();
        for k in 1..=n {
            let s: Complex64 = (1..=k).map(|j| a[j] * b[k - j] * j as f64).sum();
            b[k] = s / k as f64;
        }
        Self { coeffs: b }
    }

    fn zip(&self, o: &Jet, f: impl Fn(Complex64, Complex64) -> Complex64) -> Jet {
        let n = self.order().min(o.order());
        Jet {
            coeffs: (0..=n).map(|k| f(self.coeffs[k], o.coeffs[k])).collect(),
        }
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.zip(o, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.order().min(o.order());
        let mut c = vec![zero(); n + 1];
        for (i, a) in self.coeffs[..=n].iter().enumerate() {
            if *a == zero() {
                continue;
            }
            for (j, b) in o.coeffs[..=n - i].iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Jet { coeffs: c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr for Jet {
            type Output = Jet;
            fn $m(self, o: Jet) -> Jet {
                (&self).$m(&o)
            }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Jet, b: &Jet, tol: f64) -> bool {
        a.coeffs()
            .iter()
            .zip(b.coeffs())
            .all(|(x, y)| (x - y).norm() <= tol * (1.0 + y.norm()))
    }

    #[test]
    fn geometric_series() {
        let one_minus_t = Jet::from_real(&[1.0, -1.0], 10);
        let r = one_minus_t.recip().unwrap();
        assert!(r.coeffs().iter().all(|c| (c.re - 1.0).abs() < 1e-15));
    }

    #[test]
    fn powf_matches_binomial() {
        let j = Jet::from_real(&[1.0, -1.0], 8).powf(-1.5).unwrap();
        let mut want = 1.0;
        for k in 0..=8 {
            assert!((j.coeff(k).re - want).abs() < 1e-13, "{k}");
            want *= (1.5 + k as f64) / (k + 1) as f64;
        }
    }

    #[test]
    fn exp_of_t() {
        let e = Jet::var(12).exp();
        for k in 0..=12 {
            assert!((e.coeff(k).re - 1.0 / factorial(k)).abs() < 1e-16);
        }
    }

    #[test]
    fn powi_agrees_with_powf() {
        let a = Jet::new(
            vec![
                Complex64::new(1.3, 0.2),
                Complex64::new(-0.4, 1.0),
                Complex64::new(0.7, 0.0),
            ],
            9,
        );
        assert!(close(&a.powi(3), &a.powf(3.0).unwrap(), 1e-13));
    }

    #[test]
    fn zero_constant_term_rejected() {
        assert!(Jet::var(4).recip().is_err());
        assert!(Jet::var(4).powf(0.5).is_err());
    }
}
