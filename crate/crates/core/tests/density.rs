use std::f64::consts::PI;

use harmgrad::bump::Bump;
use harmgrad::density::*;
use harmgrad::spectral::{direct_transform, Spectrum};
use harmgrad::{Complex64 as C, Field, Grid};
use proptest::prelude::*;

fn periodic(n: usize) -> Grid {
    Grid::periodic(vec![(-1.0, 1.0); 3], vec![n; 3]).unwrap()
}

/// `b = (φ₁, φ₂ cos(πx₀), i φ₃)` with three different bumps.
fn planted_b(g: &Grid) -> Field {
    let bumps = [
        Bump::new(vec![0.1, 0.0, -0.2], 0.6),
        Bump::new(vec![-0.2, 0.15, 0.1], 0.7),
        Bump::new(vec![0.0, -0.1, 0.2], 0.55).with_amplitude(0.5),
    ];
    Field::tensor_from_fn(g, 1, |x, out| {
        out[0] = C::new(bumps[0].value(x), 0.0);
        out[1] = C::new(bumps[1].value(x) * (PI * x[0]).cos(), 0.0);
        out[2] = C::new(0.0, bumps[2].value(x));
    })
}

fn lattice(m: [i32; 3]) -> Vec<f64> {
    // -2ξ = π m on the period-2 torus.
    m.iter().map(|&v| -0.5 * PI * v as f64).collect()
}

#[test]
fn recovered_transform_matches_fft() {
    let g = periodic(32);
    let b = planted_b(&g);
    let bt = structure_tensor(&b).unwrap();
    let xis: Vec<Vec<f64>> = [[1, 0, 0], [0, 2, -1], [-1, 1, 3], [2, -2, 1], [0, 0, 4]]
        .into_iter()
        .map(lattice)
        .collect();
    let samples = calderon_recover_b(&bt, &xis).unwrap();
    let err = recovery_error(&b, &samples).unwrap();
    assert!(err <= 1e-6, "relative error {err:e}");

    // Sum and difference of the two identities isolate b̂·ξ and b̂·ν.
    let sp = Spectrum::of(&b);
    for s in &samples {
        let want = sp.at(&s.freq).unwrap();
        let proj = |v: &[f64]| want.iter().zip(v).map(|(a, b)| a * b).sum::<C>();
        assert!((s.dot_xi - proj(&s.xi)).norm() < 1e-9);
        for (nu, got) in s.nus.iter().zip(&s.dot_nu) {
            assert!((got - proj(nu)).norm() < 1e-9);
        }
        assert!(s.spread < 1e-9);
    }
}

#[test]
fn fft_oracle_agrees_with_direct_sum() {
    let g = periodic(16);
    let b = planted_b(&g);
    let k = lattice([1, -2, 3])
        .iter()
        .map(|v| -2.0 * v)
        .collect::<Vec<_>>();
    let sp = Spectrum::of(&b).at(&k).unwrap();
    for c in 0..3 {
        let d = direct_transform(&b.scalar(&[c]), &k).unwrap();
        assert!((sp[c] - d).norm() < 1e-12);
    }
}

#[test]
fn density_check_end_to_end() {
    let opts = DensityOptions {
        resolution: 16,
        dictionary: DictionaryOptions {
            sizes: vec![5, 10, 20],
            ..DictionaryOptions::default()
        },
        ..DensityOptions::default()
    };
    let rep = density_check(&opts).unwrap();
    assert!(rep.pass(), "{:?}", rep.failures());
    assert!(rep.get("recovery_relative_error").is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn recovery_is_linear(a in -2.0f64..2.0, c in -2.0f64..2.0, s1 in 0u64..100, s2 in 0u64..100) {
        let g = periodic(12);
        let phi = Bump::new(vec![0.0; 3], 0.7);
        let mk = |seed: u64| {
            let mut f = plant(PlantKind::Structure, &g, &phi, 0).unwrap();
            let w = C::new((seed as f64).sin(), (seed as f64).cos());
            f = f.scale(w);
            f
        };
        let (b1, b2) = (mk(s1), mk(s2));
        let mut comb = b1.clone().scale(C::new(a, 0.0));
        comb.axpy(C::new(c, 0.0), &b2).unwrap();
        let xi = vec![vec![0.5 * PI, -PI, 0.0]];
        let r = |b: &Field| calderon_recover_b(b, &xi).unwrap().remove(0).b_hat;
        let (r1, r2, rc) = (r(&b1), r(&b2), r(&comb));
        for i in 0..3 {
            let want = r1[i] * a + r2[i] * c;
            prop_assert!((rc[i] - want).norm() < 1e-10 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn structure_fit_is_a_projection(seed in 0u64..1000) {
        let g = Grid::cube(3, -1.0, 1.0, 9).unwrap();
        let b = plant(PlantKind::RandomAntisym, &g, &Bump::new(vec![0.0; 3], 0.7), seed).unwrap()
            .add(&plant(PlantKind::Mixed, &g, &Bump::new(vec![0.1, 0.0, 0.0], 0.6), seed + 1).unwrap()).unwrap();
        let fit = structure_fit(&b).unwrap();
        let again = structure_fit(&structure_tensor(&fit.b).unwrap()).unwrap();
        prop_assert!(again.residual < 1e-14);
        prop_assert!(again.b.sub(&fit.b).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn antisym_last_two_annihilates_equal_pair(seed in 0u64..1000, k in 0.2f64..1.5) {
        let g = Grid::cube(3, -1.0, 1.0, 9).unwrap();
        let b = plant(PlantKind::RandomAntisym, &g, &Bump::new(vec![0.0; 3], 0.7), seed).unwrap();
        let u = harmgrad::harmonic::HarmonicFn::calderon(&[k, 0.0, 0.3], &[0.0, 1.0, 0.0], true, 1.0).unwrap();
        let v = harmgrad::harmonic::HarmonicFn::coordinate(2);
        let w = harmgrad::harmonic::HarmonicFn::calderon(&[0.0, k, 0.0], &[1.0, 0.0, 0.0], false, 1.0).unwrap();
        prop_assert!(triple_identity(&b, &u, &v, &v).unwrap().norm() < 1e-12);
        let t1 = triple_identity(&b, &u, &v, &w).unwrap();
        let t2 = triple_identity(&b, &u, &w, &v).unwrap();
        prop_assert!((t1 + t2).norm() < 1e-12 * (1.0 + t1.norm()));
    }

    #[test]
    fn jacobi_coefficients_positive(j in 0usize..=200) {
        let c = jacobi_moment_coeffs(j).unwrap();
        prop_assert!(c.iter().all(|v| *v > 0.0));
    }
}
