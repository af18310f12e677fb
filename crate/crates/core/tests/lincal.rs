use harmgrad::bump::Bump;
use harmgrad::grid::Grid;
use harmgrad::lincal::*;
use harmgrad::{Complex64, Field};
use proptest::prelude::*;

fn show(rep: &harmgrad::report::ExperimentReport) {
    for m in &rep.metrics {
        println!(
            "{} = {:.4e} (tol {:.1e}) {}",
            m.name, m.value, m.tol, m.pass
        );
    }
    for t in &rep.tables {
        println!("{}: {:?}", t.name, t.columns);
        for r in t.rows.iter().take(8) {
            println!(
                "  {}",
                r.iter()
                    .map(|v| format!("{v:.3e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
    }
}

#[test]
fn sufficiency_over_random_pairs() {
    let opts = SufficiencyOptions {
        pairs: 6,
        harmonic_pairs: 30,
        ..Default::default()
    };
    let rep = sufficiency_check(&opts, 21).unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn decompose_round_trip_converges() {
    let rep = decompose_refinement(&DecomposeOptions::default(), 4).unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn tartar_gauge_is_second_order() {
    let rep = tartar_check(&TartarOptions::default()).unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn closed_form_symmetric_part_matches_grid_derivatives() {
    for (g, tol) in [
        (Grid::cube(3, -1.0, 1.0, 48).unwrap(), 1e-2),
        (
            Grid::periodic(vec![(-1.0, 1.0); 3], vec![48; 3]).unwrap(),
            1e-7,
        ),
    ] {
        let (field, _) = random_plant(&g, 9).unwrap();
        let grid_part = sym_part_of(&field.sample(&g)).unwrap();
        let exact = field.sym_part(&g);
        let err = grid_part.sub(&exact).unwrap().max_abs() / exact.max_abs();
        assert!(err < tol, "{err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn antisymmetric_part_is_returned_bit_for_bit(seed in 0u64..1000, w in 0.0f64..1.0) {
        let g = Grid::cube(3, -1.0, 1.0, 16).unwrap();
        let phi = Bump::poly(vec![0.0; 3], 0.4, 6);
        let t = Field::tensor_from_fn(&g, 2, |x, out| {
            let b = phi.value(x);
            for (i, o) in out.iter_mut().enumerate() {
                let s = ((seed as f64 + 1.0) * (i as f64 + 1.0 + w)).sin();
                *o = Complex64::new(s * b, 0.0);
            }
        });
        let dec = decompose(&t).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                for (got, (x, y)) in dec.a.component(&[j, k]).iter().zip(t.component(&[j, k]).iter().zip(t.component(&[k, j]))) {
                    let want = 0.5 * (x - y);
                    prop_assert_eq!(got.re.to_bits(), want.re.to_bits());
                }
            }
        }
    }

    #[test]
    fn polarization_holds(seed in 0u64..1000, i in 0usize..20, j in 0usize..20) {
        let g = Grid::cube(3, -1.0, 1.0, 12).unwrap();
        let dict = harmonic_dictionary(3, 20, seed).unwrap();
        let phi = Bump::poly(vec![0.1, 0.0, 0.0], 0.5, 6);
        let t = Field::tensor_from_fn(&g, 2, |x, out| {
            for (m, o) in out.iter_mut().enumerate() {
                *o = Complex64::new(phi.value(x) * (m as f64 - 4.0), (m * seed as usize % 7) as f64 * 0.1);
            }
        });
        prop_assert!(polarization_defect(&t, &dict[i], &dict[j]).unwrap() < 1e-12);
    }

    #[test]
    fn random_pairs_satisfy_their_invariants(seed in 0u64..10_000) {
        let g = Grid::cube(3, -1.0, 1.0, 32).unwrap();
        let pair = random_pair(&g, seed).unwrap();
        prop_assert!(row_divergence(pair.a()).unwrap().max_abs() <= DIV_TOL);
        prop_assert!(ObstructionPair::new(pair.v().clone(), pair.a().clone()).is_ok());
    }
}
