use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use expanderlab::gl_regularization::*;
use expanderlab::pde_simulator::{RadialGrid, RadialLaplacian};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sphere_data_stay_in_the_ball_and_energy_decreases(
        d in 3u32..7,
        ell in 0.2f64..1.5,
        wobble in 0.0f64..0.5,
        eps in 0.02f64..0.1,
    ) {
        let grid = Arc::new(RadialGrid::graded(4.0, 200, 1e-3));
        let lap = RadialLaplacian::new(&grid, d);
        let h = move |r: f64| ell * r / (0.05 + r) + wobble * (3.0 * r).sin();
        let mut s = EquivariantPair::from_angle(grid, eps, h);
        let mut e = s.energy(&lap);
        for _ in 0..40 {
            s = gl_step(&s, d, 2e-4).unwrap();
            prop_assert!(s.modulus_sq().iter().all(|&p| p <= 1.0 + 1e-12));
            prop_assert_eq!(s.w[0], 0.0);
            let e1 = s.energy(&lap);
            prop_assert!(e1 <= e * (1.0 + 1e-12), "energy rose {} -> {}", e, e1);
            e = e1;
        }
    }
}

#[test]
fn implicit_penalization_fails_for_steps_far_beyond_epsilon_squared() {
    let grid = Arc::new(RadialGrid::graded(2.0, 100, 1e-3));
    let mut s = EquivariantPair::from_angle(grid.clone(), 1e-3, |r| r / (1.0 + r));
    for (v, w) in s.v.iter_mut().zip(s.w.iter_mut()) {
        *v *= 0.1;
        *w *= 0.1;
    }
    let mut stepper = GlStepper::new(&grid, 5);
    stepper.penalization = Penalization::BackwardEuler;
    assert!(matches!(stepper.step(&s, 1.0), Err(GlError::NewtonDivergence { .. })));
    // The exact flow has no step restriction.
    stepper.penalization = Penalization::ExactFlow;
    let out = stepper.step(&s, 1.0).unwrap();
    assert!(out.modulus_sq()[1..].iter().all(|p| (p - 1.0).abs() < 1e-8));
}

#[test]
fn both_penalizations_agree_for_resolved_steps() {
    let grid = Arc::new(RadialGrid::graded(2.0, 100, 1e-3));
    let s = EquivariantPair::from_angle(grid.clone(), 0.1, |r| 1.2 * r / (0.1 + r));
    let exact = GlStepper::new(&grid, 4);
    let mut implicit = exact.clone();
    implicit.penalization = Penalization::BackwardEuler;
    let (mut a, mut b) = (s.clone(), s);
    for _ in 0..20 {
        a = exact.step(&a, 1e-5).unwrap();
        b = implicit.step(&b, 1e-5).unwrap();
    }
    let diff = a.angle().iter().zip(b.angle()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn angle_round_trips_through_components() {
    let grid = Arc::new(RadialGrid::uniform(3.0, 60));
    let h = |r: f64| 2.5 * r / (1.0 + r);
    let s = EquivariantPair::from_angle(grid.clone(), 0.1, h);
    for (i, (&r, a)) in grid.nodes().iter().zip(s.angle()).enumerate().skip(1) {
        assert!((a - h(r)).abs() < 1e-14, "node {i}");
    }
}

#[test]
fn mollified_data_is_continuous_at_the_origin() {
    let h0 = |_r: f64| FRAC_PI_2 - 0.1;
    let m = mollify(&h0, 0.02);
    assert_eq!(m(0.0), 0.0);
    assert!((m(0.01) - 0.5 * h0(0.0)).abs() < 1e-15);
    assert_eq!(m(0.5), h0(0.5));
}

#[test]
fn selection_run_reports_sphere_defect_of_order_epsilon_squared() {
    let ell = FRAC_PI_2 - 0.1;
    let config = GlConfig {
        d: 5,
        epsilon_sequence: vec![0.04, 0.02, 0.01],
        dt: 2.5e-5,
        t_span: (0.0, 0.05),
        t_eval: 0.05,
        grid: RadialGrid::graded(4.0, 800, 2e-4),
        positivity_radius: 0.5,
        dissipation_window: ((0.01, 0.05), (0.2, 1.0)),
    };
    let h0 = move |_r: f64| ell;
    let sel = gl_select(&h0, &config, &h0).unwrap();
    let p = sel.defect_exponent.unwrap();
    assert!((p - 2.0).abs() <= 0.4, "defect exponent {p}: {:?}", sel.runs.iter().map(|r| r.sphere_defect).collect::<Vec<_>>());
    for run in &sel.runs {
        assert!(run.max_modulus <= 1.0 + 1e-8);
        assert!(run.max_energy_increase <= 1e-10 * run.initial_energy.max(1.0));
        assert!(run.min_first_component > 0.0);
    }
    let diss: Vec<f64> = sel.runs.iter().map(|r| r.dissipation).collect();
    let (lo, hi) = diss.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi <= 2.0 * lo, "dissipation not uniform in epsilon: {diss:?}");
}

#[test]
fn configuration_checks() {
    let good = GlConfig {
        d: 5,
        epsilon_sequence: vec![0.04, 0.02],
        dt: 1e-4,
        t_span: (0.0, 0.01),
        t_eval: 0.01,
        grid: RadialGrid::graded(4.0, 200, 1e-3),
        positivity_radius: 0.5,
        dissipation_window: ((0.0, 0.01), (0.2, 1.0)),
    };
    assert!(good.validate().is_ok());
    let mut bad = good.clone();
    bad.epsilon_sequence = vec![0.02, 0.04];
    assert!(bad.validate().is_err());
    let mut bad = good.clone();
    bad.epsilon_sequence = vec![0.04, 1e-4];
    assert!(bad.validate().is_err());
    let mut bad = good;
    bad.t_eval = 0.5;
    assert!(bad.validate().is_err());
}
