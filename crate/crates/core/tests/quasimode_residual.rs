use harmgrad::quasimode::*;
use harmgrad::{Complex64 as C, Grid};

fn build(m: usize) -> (QuasimodeParams, PhaseHierarchy, AmplitudeHierarchy) {
    let mut p = QuasimodeParams::new(100.0, 0.5, m);
    p.p3 = C::new(0.1, -0.05);
    p.q1 = C::new(0.3, 0.4);
    p.delta = 0.3;
    let ph = build_phase(&p).unwrap();
    let a = build_amplitude(&p, &ph).unwrap();
    (p, ph, a)
}

fn slice_grid() -> Grid {
    Grid::new(vec![(-0.1, 0.1), (0.9, 1.1), (-0.3, 0.3)], vec![8, 8, 9]).unwrap()
}

#[test]
fn brackets_vanish_to_order_m_plus_one() {
    let (p, ph, a) = build(4);
    let rep = conjugated_residual(&p, &ph, &a, &slice_grid()).unwrap();
    for name in [
        "eikonal_x2_slope",
        "transport0_x2_slope",
        "condition_residual",
        "lambda_slope",
    ] {
        let m = rep.get(name).unwrap();
        assert!(m.pass, "{name}: {}", m.value);
    }
    assert!((rep.metric_value("eikonal_x2_slope").unwrap() - 5.0).abs() < 0.3);
}

#[test]
fn lambda_decay_improves_with_m() {
    let slope = |m| {
        let (p, ph, a) = build(m);
        conjugated_residual(&p, &ph, &a, &slice_grid())
            .unwrap()
            .metric_value("lambda_slope")
            .unwrap()
    };
    assert!(slope(6) < slope(3));
}

#[test]
fn too_few_samples_is_a_diagnostics_error() {
    let (p, ph, a) = build(3);
    let opts = ResidualOptions {
        n_x2: 4,
        ..ResidualOptions::default()
    };
    let r = conjugated_residual_with(&p, &ph, &a, &slice_grid(), &opts);
    assert!(matches!(r, Err(harmgrad::Error::Diagnostics(_))));
}
