//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    Piece {
        a,
        b,
        value: k * h,
        err: ((k - g) * h).norm(),
    }
}

/// `∫_a^b f`, returning the value and an error estimate.
pub fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<(Complex64, f64)> {
    let mut heap = BinaryHeap::new();
    heap.push(kronrod(&f, a, b));
    loop {
        let total: Complex64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        if err <= opts.abs_tol.max(opts.rel_tol * total.norm()) {
            return Ok((total, err));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { estimate: err });
        }
        let worst = heap.pop().expect("non-empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(Error::Quadrature { estimate: err });
        }
        heap.push(kronrod(&f, worst.a, m));
        heap.push(kronrod(&f, m, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let (v, _) = integrate(
            |t| Complex64::new(t.powi(5) - t, 0.0),
            0.0,
            2.0,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v.re - (64.0 / 6.0 - 2.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian() {
        let lam = 50.0;
        let (v, _) = integrate(
            |t| Complex64::new((-lam * t * t).exp(), 0.0),
            -3.0,
            3.0,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v.re - (std::f64::consts::PI / lam).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reports_failure() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        let r = integrate(
            |t| Complex64::new((1.0 / (t + 1e-3)).sin(), 0.0),
            0.0,
            1.0,
            opts,
        );
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
