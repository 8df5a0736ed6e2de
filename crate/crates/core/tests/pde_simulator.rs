use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use expanderlab::pde_simulator::*;
use expanderlab::profile_solver::{solve_profile, solve_w, kappa_threshold, ProfileParams};
use expanderlab::{Dimension, Pole};
use proptest::prelude::*;

fn graded(r_max: f64, m: usize, r1: f64) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::graded(r_max, m, r1))
}

#[test]
fn trivial_and_equator_maps_are_stationary() {
    let g = graded(10.0, 400, 1e-3);
    let cfg = SimConfig::new(3, 1e-3, (0.0, 0.1));
    let zero = RadialField::from_fn(0.0, g.clone(), OriginBc::DirichletZero, |_| 0.0);
    let run = evolve(&zero, &cfg).unwrap();
    assert!(run.snapshots.iter().all(|s| s.sup_norm() <= 1e-10));

    let eq = RadialField::from_fn(0.0, g, OriginBc::FreeSingular, |_| FRAC_PI_2);
    let mut state = eq.clone();
    for _ in 0..100 {
        state = step(&state, &cfg).unwrap();
    }
    let dev = state.values.iter().fold(0.0f64, |m, v| m.max((v - FRAC_PI_2).abs()));
    assert!(dev <= 1e-10, "equator drifted by {dev:e}");
}

#[test]
fn laplacian_is_exact_on_quadratics_for_every_dimension() {
    for d in 3..=8 {
        let grid = RadialGrid::graded(5.0, 200, 1e-3);
        let lap = RadialLaplacian::new(&grid, d);
        let u: Vec<f64> = grid.nodes().iter().map(|r| r * r).collect();
        for i in 1..grid.len() - 1 {
            let got = lap.apply(&u, i);
            assert!((got - 2.0 * d as f64).abs() < 1e-8 * (d as f64), "d = {d}, node {i}: {got}");
        }
    }
}

#[test]
fn refinement_keeps_every_coarse_node() {
    let g = RadialGrid::graded(40.0, 400, 0.002);
    assert!((g.r1() - 0.002).abs() < 1e-12);
    let f = g.refined();
    assert_eq!(f.cells(), 2 * g.cells());
    for (i, &r) in g.nodes().iter().enumerate() {
        assert!((f.nodes()[2 * i] - r).abs() <= 1e-12 * r.max(1.0));
    }
    assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn crank_nicolson_is_second_order_in_time() {
    let g = graded(8.0, 200, 2e-3);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| 1.2 * r * r / (1.0 + r * r) * (-r * r / 8.0).exp());
    let run = |dt: f64| evolve(&init, &SimConfig::new(3, dt, (0.0, 0.05))).unwrap().last().values.clone();
    let (a, b, c) = (run(2e-3), run(1e-3), run(5e-4));
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let ratio = diff(&b, &c) / diff(&a, &b);
    assert!(ratio < 0.3, "time refinement ratio {ratio}");
}

#[test]
fn subequatorial_data_stays_below_the_equator() {
    let g = graded(10.0, 400, 1e-3);
    let delta = 0.2;
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| (FRAC_PI_2 - delta) * r / (0.1 + r));
    let run = evolve(&init, &SimConfig::new(4, 1e-3, (0.0, 0.5))).unwrap();
    for snap in &run.snapshots {
        let max = snap.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = snap.values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12 && max < FRAC_PI_2 - 1e-3, "t = {}: [{min}, {max}]", snap.time);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ordered_data_stay_ordered(d in 3u32..7, a in 0.1f64..1.2, c in 0.0f64..0.8, w in 0.5f64..6.0) {
        let g = graded(5.0, 150, 5e-3);
        let cfg = SimConfig::new(d, 2e-3, (0.0, 0.2));
        let sub = move |r: f64| a * r.min(1.0) * (1.0 + 0.2 * (w * r).sin());
        let sup = move |r: f64| sub(r) + c * r / (1.0 + r);
        let lo = evolve(&RadialField::from_fn(0.0, g.clone(), OriginBc::DirichletZero, sub), &cfg).unwrap();
        let hi = evolve(&RadialField::from_fn(0.0, g, OriginBc::DirichletZero, sup), &cfg).unwrap();
        prop_assert!(check_comparison(&lo, &hi) <= 1e-12);
    }
}

#[test]
fn hardy_constant_separates_six_and_seven() {
    assert!((hardy_constant(7) - 24.0 / 25.0).abs() < 1e-15);
    assert!((hardy_constant(6) - 1.25).abs() < 1e-15);
    assert!(hardy_constant(7) < 1.0 && hardy_constant(6) > 1.0);
}

#[test]
fn invalid_configurations_are_rejected() {
    let g = graded(5.0, 100, 5e-3);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| r / (1.0 + r));
    let mut cfg = SimConfig::new(3, 1e-3, (0.0, 0.01));
    cfg.theta = 0.3;
    assert!(matches!(evolve(&init, &cfg), Err(PdeError::InvalidConfig(_))));
    let mut cfg = SimConfig::new(3, 1e-3, (0.0, 0.01));
    cfg.nonlinearity = Nonlinearity::LinearizedValpha;
    assert!(matches!(evolve(&init, &cfg), Err(PdeError::InvalidConfig(_))));
    let cfg = SimConfig::new(3, 1e-2, (0.0, 0.01));
    assert!(matches!(step_explicit(&init, &cfg), Err(PdeError::CflViolation { .. })));
}

#[test]
fn branch_data_respects_the_admissible_range() {
    let d = Dimension::new(3).unwrap();
    let g = graded(5.0, 100, 5e-3);
    let h0 = |_r: f64| 2.0;
    // π − 2 < π/2 is fine on the South branch, but 2 > ℓ* has no North profile.
    assert!(make_branch_data(d, 2.0, Pole::South, &h0, 1e-3, g.clone(), 1e-10).is_ok());
    assert!(matches!(
        make_branch_data(d, 2.0, Pole::North, &h0, 1e-3, g, 1e-10),
        Err(PdeError::RangeError { branch: "North", .. })
    ));
}

#[test]
fn branch_data_equals_the_far_field_away_from_the_origin() {
    let d = Dimension::new(3).unwrap();
    let g = graded(10.0, 400, 5e-4);
    let ell = FRAC_PI_2 - 0.05;
    let h0 = move |r: f64| ell + 0.1 * r / (1.0 + r * r);
    let delta = 1e-3;
    for pole in [Pole::North, Pole::South] {
        let data = make_branch_data(d, ell, pole, &h0, delta, g.clone(), 1e-10).unwrap();
        for (&r, &h) in data.field.r().iter().zip(&data.field.values) {
            if r >= 1.0 {
                // The profile is within O(δ/r²) of its limit there.
                assert!((h - h0(r)).abs() <= 0.2 * delta / (r * r), "{pole:?} r = {r}");
            }
        }
        let expected_origin = if pole == Pole::North { 0.0 } else { PI };
        assert_eq!(data.field.values[0], expected_origin);
    }
}

#[test]
fn energy_check_needs_a_resolved_support() {
    let g = graded(5.0, 200, 1e-3);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| r / (1.0 + r));
    let run = evolve(&init, &SimConfig::new(3, 1e-3, (0.01, 0.05))).unwrap();
    let bad = BumpTest { t_range: (0.02, 0.04), r_range: (1e-4, 1.0), q_amplitude: 1.0 };
    assert!(matches!(energy_inequality_check(&run, &bad), Err(PdeError::UnresolvedRegion)));
    let ok = BumpTest { t_range: (0.02, 0.04), r_range: (0.05, 1.0), q_amplitude: 1.0 };
    let report = energy_inequality_check(&run, &ok).unwrap();
    assert!(report.margin >= -1e-3, "{report:?}");
}

#[test]
fn zero_perturbation_is_exactly_stationary() {
    let d = Dimension::new(3).unwrap();
    let p = solve_profile(ProfileParams::new(d, 0.8, Pole::North)).unwrap();
    let g = graded(40.0, 400, 0.01);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |_| 0.0);
    let run = evolve_selfsimilar(&init, (0.0, 2.0), &p, &SelfSimConfig::new(3, 0.01), None).unwrap();
    assert!(run.snapshots.iter().all(|s| s.sup_norm() == 0.0));
}

#[test]
fn perturbations_decay_in_the_weighted_norm() {
    let d = Dimension::new(3).unwrap();
    let p = solve_profile(ProfileParams::new(d, 0.5, Pole::North)).unwrap();
    let w = solve_w(&p, 0.5 * kappa_threshold(&p, 50.0, 1e-6).unwrap()).unwrap();
    let g = graded(40.0, 400, 0.01);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| 0.01 * r / (1.0 + r * r));
    let run = evolve_selfsimilar(&init, (0.0, 8.0), &p, &SelfSimConfig::new(3, 0.02), Some(&w)).unwrap();
    let weighted = run.weighted.as_ref().unwrap();
    let (first, last) = (weighted[0].1, weighted[weighted.len() - 1].1);
    assert!(last < 0.1 * first, "{first} -> {last}");
    let rate = run.decay_rate((2.0, 8.0)).unwrap().exponent;
    assert!((rate - 0.5).abs() < 0.1, "rate {rate}");
}

#[test]
fn smooth_step_is_a_cutoff() {
    assert_eq!(smooth_step(-0.5), 0.0);
    assert_eq!(smooth_step(1.5), 1.0);
    assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    assert_eq!(cutoff_chi(0.4), 0.0);
    assert_eq!(cutoff_chi(1.2), 1.0);
}

#[test]
fn tridiagonal_solver_matches_dense_elimination() {
    let n = 6;
    let sub = vec![0.0, -1.0, -0.5, -1.0, -2.0, -1.0];
    let diag = vec![4.0, 5.0, 3.0, 6.0, 5.0, 4.0];
    let sup = vec![-1.0, -2.0, -1.0, -0.5, -1.0, 0.0];
    let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let mut b: Vec<f64> = (0..n)
        .map(|i| diag[i] * x[i] + if i > 0 { sub[i] * x[i - 1] } else { 0.0 } + if i + 1 < n { sup[i] * x[i + 1] } else { 0.0 })
        .collect();
    solve_tridiagonal(&sub, &diag, &sup, &mut b).unwrap();
    assert!(b.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-12));
}
