//! Adaptive Dormand–Prince 5(4) integration of complex first-order systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_steps: 200_000,
        }
    }
}

/// Integrate `y' = f(x, y)` from `(x0, y0)` and return the state at each of
/// `targets`, which must be monotone in the direction of integration.
pub fn solve<F>(
    f: F,
    x0: f64,
    y0: &[Complex64],
    targets: &[f64],
    opts: OdeOptions,
) -> Result<Vec<Vec<Complex64>>>
where
    F: Fn(f64, &[Complex64], &mut [Complex64]),
{
    let n = y0.len();
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(targets.len());
    let mut k = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    let span = targets.iter().map(|t| (t - x0).abs()).fold(0.0, f64::max);
    let mut h = if span > 0.0 { span * 1e-3 } else { 0.0 };
    let mut steps = 0;
    for &target in targets {
        let dir = (target - x).signum();
        while (target - x).abs() > 1e-15 * (1.0 + x.abs()) {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Construction(format!(
                    "ODE step limit reached at x = {x}"
                )));
            }
            let hs = h.min((target - x).abs()) * dir;
            f(x, &y, &mut k[0]);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (r, a) in A[s].iter().enumerate().take(s) {
                        acc += k[r][i] * (a * hs);
                    }
                    tmp[i] = acc;
                }
                let (_, tail) = k.split_at_mut(s);
                f(x + C[s] * hs, &tmp, &mut tail[0]);
            }
            let mut err: f64 = 0.0;
            let mut y5 = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..n {
                let mut e = Complex64::new(0.0, 0.0);
                let mut v = y[i];
                for s in 0..7 {
                    v += k[s][i] * (B5[s] * hs);
                    e += k[s][i] * ((B5[s] - B4[s]) * hs);
                }
                y5[i] = v;
                let sc = opts.tol * (1.0 + y[i].norm().max(v.norm()));
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(Error::Construction(format!(
                    "non-finite ODE state near x = {x}"
                )));
            }
            if err <= 1.0 {
                x += hs;
                y = y5;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = hs.abs() * fac;
            if h < 1e-14 * (1.0 + x.abs()) {
                return Err(Error::Construction(format!(
                    "ODE step size underflow at x = {x}"
                )));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let r = solve(
            |_, y, d| d[0] = y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[0.5, 1.0],
            OdeOptions::default(),
        )
        .unwrap();
        assert!((r[1][0].re - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn rotation_backwards() {
        let i = Complex64::i();
        let r = solve(
            move |_, y, d| d[0] = i * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[-2.0],
            OdeOptions::default(),
        )
        .unwrap();
        assert!((r[0][0] - (-2.0 * i).exp()).norm() < 1e-10);
    }

    #[test]
    fn riccati() {
        // 2y' + 4y^2 = 0 with y(1) = 1/2 has y = 1/(2x).
        let r = solve(
            |_, y, d| d[0] = -2.0 * y[0] * y[0],
            1.0,
            &[Complex64::new(0.5, 0.0)],
            &[3.0],
            OdeOptions::default(),
        )
        .unwrap();
        assert!((r[0][0].re - 1.0 / 6.0).abs() < 1e-11);
    }
}
