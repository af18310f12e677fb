//! Shared fixtures for the criterion benches.

use harmgrad::{Field, Grid};
use num_complex::Complex64;

/// Smooth complex test field on the unit cube with `n` samples per axis.
pub fn smooth_field(n: usize) -> Field {
    let g = Grid::cube(3, 0.0, 1.0, n).expect("valid grid");
    Field::scalar_from_fn(&g, |x| {
        let r = (x[0] * 3.0).sin() * (x[1] * 2.0).cos() * (-x[2]).exp();
        Complex64::new(r, 0.5 * r)
    })
}
