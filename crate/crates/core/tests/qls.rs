use harmgrad::grid::Grid;
use harmgrad::harmonic::HarmonicFn;
use harmgrad::qls::*;
use harmgrad::report::ExperimentReport;
use harmgrad::Complex64;
use proptest::prelude::*;

fn show(rep: &ExperimentReport) {
    for m in &rep.metrics {
        println!(
            "{} = {:.4e} (tol {:.1e}) {}",
            m.name, m.value, m.tol, m.pass
        );
    }
    for t in &rep.tables {
        println!("{}: {:?}", t.name, t.columns);
        for r in t.rows.iter().take(12) {
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

fn opts() -> QlsOptions {
    QlsOptions {
        resolution: 24,
        ..Default::default()
    }
}

#[test]
fn forward_solver_orders() {
    let rep = forward_orders(&opts(), 5).unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn second_linearization_matches_moments() {
    let rep = dtn_check(&opts(), 5).unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn equal_tensors_are_indistinguishable() {
    let rep = unique_check(
        &QlsOptions {
            perturbation: Perturbation::None,
            ..opts()
        },
        2,
    )
    .unwrap();
    show(&rep);
    assert!(rep.pass(), "{:?}", rep.failures());
}

#[test]
fn perturbations_are_seen() {
    for kind in [Perturbation::Structure, Perturbation::Sym11] {
        let rep = unique_check(
            &QlsOptions {
                perturbation: kind,
                ..opts()
            },
            2,
        )
        .unwrap();
        show(&rep);
        assert!(rep.pass(), "{kind:?}: {:?}", rep.failures());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pairing_is_linear_in_the_test_function(seed in 0u64..1000, s in -2.0f64..2.0) {
        let g = Grid::cube(3, -1.0, 1.0, 24).unwrap();
        let a = plant_tensors(&g, 1.0, seed).unwrap();
        let data = BoundaryData::new(HarmonicFn::coordinate(0), HarmonicFn::coordinate(1));
        let set = SolverSettings::default();
        let w1 = HarmonicFn::coordinate(2);
        let w2 = HarmonicFn::coordinate(0);
        let both = HarmonicFn::sum(vec![w1.clone(), w2.clone().scaled(Complex64::new(s, 0.0))]);
        let p1 = dtn_pair(&a, &data, 0.01, &w1, &set).unwrap();
        let p2 = dtn_pair(&a, &data, 0.01, &w2, &set).unwrap();
        let p = dtn_pair(&a, &data, 0.01, &both, &set).unwrap();
        for j in 0..2 {
            prop_assert!((p[j] - p1[j] - p2[j] * s).norm() < 1e-14);
        }
    }

    #[test]
    fn fixed_point_contracts(seed in 0u64..1000, eps in 1e-3f64..2e-2) {
        let g = Grid::cube(3, -1.0, 1.0, 24).unwrap();
        let a = plant_tensors(&g, 1.0, seed).unwrap();
        let data = BoundaryData::new(HarmonicFn::coordinate(0), HarmonicFn::coordinate(2));
        let sol = solve_forward(&a, &data, eps, &SolverSettings::default()).unwrap();
        prop_assert!(sol.ratio < 1.0);
        prop_assert!(*sol.history.last().unwrap() <= 1e-14);
    }
}
