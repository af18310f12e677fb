//! The smooth cutoff `χ`: equal to 1 on `|t| <= 1/2`, 0 on `|t| >= 1`, and
//! `g(1-s) / (g(1-s) + g(s))` with `g(y) = exp(-1/y)`, `s = 2|t| - 1` between.

/// Human-readable profile, recorded in reports.
pub const PROFILE: &str = "chi(t)=g(1-s)/(g(1-s)+g(s)), g(y)=exp(-1/y), s=2|t|-1 on 1/2<|t|<1";

/// `(phi, phi', phi'')` of the transition in the variable `s`.
fn transition(s: f64) -> (f64, f64, f64) {
    // phi = 1 / (1 + q), q = g(s) / g(1 - s).
    let e = 1.0 / (1.0 - s) - 1.0 / s;
    let (phi, one_minus) = if e <= 0.0 {
        let q = e.exp();
        (1.0 / (1.0 + q), q / (1.0 + q))
    } else {
        let p = (-e).exp();
        (p / (1.0 + p), 1.0 / (1.0 + p))
    };
    let r = 1.0 / (1.0 - s).powi(2) + 1.0 / (s * s);
    let dr = 2.0 / (1.0 - s).powi(3) - 2.0 / s.powi(3);
    let w = phi * one_minus;
    let d1 = -w * r;
    let d2 = -(d1 * (1.0 - 2.0 * phi) * r + w * dr);
    (phi, d1, d2)
}

/// `(χ(t), χ'(t), χ''(t))`.
pub fn chi(t: f64) -> (f64, f64, f64) {
    let a = t.abs();
    if a <= 0.5 {
        return (1.0, 0.0, 0.0);
    }
    if a >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (p, d1, d2) = transition(2.0 * a - 1.0);
    (p, 2.0 * d1 * t.signum(), 4.0 * d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        assert_eq!(chi(0.3), (1.0, 0.0, 0.0));
        assert_eq!(chi(-1.2).0, 0.0);
        assert!((chi(0.75).0 - 0.5).abs() < 1e-15);
        assert!((chi(0.6).0 + chi(0.9).0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for t in [-0.93, -0.7, 0.55, 0.62, 0.8, 0.97] {
            let fd1 = (chi(t + h).0 - chi(t - h).0) / (2.0 * h);
            let fd2 = (chi(t + h).1 - chi(t - h).1) / (2.0 * h);
            assert!((chi(t).1 - fd1).abs() < 1e-6, "{t}");
            assert!((chi(t).2 - fd2).abs() < 1e-4 * (1.0 + fd2.abs()), "{t}");
        }
    }
}
