use expanderlab::asymptotics::*;
use expanderlab::profile_solver::{solve_profile, ProfileParams};
use expanderlab::{Dimension, Pole, Trajectory};
use proptest::prelude::*;

fn sampled(f: impl Fn(f64) -> (f64, f64), lo: f64, hi: f64, n: usize) -> Trajectory {
    let nodes: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let mut states = Vec::new();
    let mut slopes = Vec::new();
    for &x in &nodes {
        let (v, dv) = f(x);
        states.extend_from_slice(&[v, dv]);
        slopes.extend_from_slice(&[dv, 0.0]);
    }
    Trajectory::from_samples(2, nodes, states, slopes, 1e-12)
}

proptest! {
    #[test]
    fn extrapolation_is_exact_on_the_model(l in -3.0f64..3.0, c in -50.0f64..50.0) {
        let t = sampled(|x| (l + c / (x * x), -2.0 * c / x.powi(3)), 1.0, 30.0, 300);
        let (limit, _) = tail_extrapolate(&t, (15.0, 30.0)).unwrap();
        prop_assert!((limit - l).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn power_fit_recovers_the_exponent(p in -4.0f64..-0.5, a in 0.1f64..10.0) {
        let rho: Vec<f64> = (0..50).map(|k| 5.0 + k as f64).collect();
        let v: Vec<f64> = rho.iter().map(|r| a * r.powf(p)).collect();
        let fit = fit_decay(&rho, &v, DecayModel::Power).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-9);
    }
}

fn basis(d: u32, alpha: f64) -> (expanderlab::profile_solver::VariationSolution, expanderlab::profile_solver::VariationSolution) {
    let d = Dimension::new(d).unwrap();
    let p = solve_profile(ProfileParams::new(d, alpha, Pole::North)).unwrap();
    basis_at_infinity(&Potential::from_profile(&p), d, 8.0, BasisOptions::default()).unwrap()
}

#[test]
fn basis_is_independent_on_its_span() {
    let (phi1, phi2) = basis(3, 1.0);
    for rho in log_space(10.0, 30.0, 60) {
        let det = phi1.value(rho) * phi2.derivative(rho) - phi1.derivative(rho) * phi2.value(rho);
        assert!(det != 0.0 && det.is_finite(), "degenerate at {rho}");
    }
}

#[test]
fn tails_decay_at_the_expected_rates() {
    for (d, alpha) in [(3, 0.5), (4, 1.0)] {
        let dd = Dimension::new(d).unwrap();
        let p = solve_profile(ProfileParams::new(dd, alpha, Pole::North)).unwrap();
        let rho = log_space(9.9, 30.0, 60);
        let tail: Vec<f64> = rho.iter().map(|&r| p.psi(r) - p.psi_inf).collect();
        let e = fit_decay(&rho, &tail, DecayModel::Power).unwrap().exponent;
        assert!((e + 2.0).abs() <= 0.2, "d = {d}: tail exponent {e}");
        let (phi1, phi2) = basis(d, alpha);
        let p2: Vec<f64> = rho.iter().map(|&r| phi2.value(r) - 1.0).collect();
        let e2 = fit_decay(&rho, &p2, DecayModel::Power).unwrap().exponent;
        assert!((e2 + 2.0).abs() <= 0.2, "d = {d}: phi2 exponent {e2}");
        for r in log_space(15.0, 25.0, 20) {
            let ratio = phi1.value(r) / (r.powi(-(d as i32)) * (-r * r / 4.0).exp());
            assert!(ratio.ln().abs() <= 0.1, "d = {d}: phi1 ratio {ratio} at {r}");
        }
    }
}

#[test]
fn late_launches_do_not_vanish_again() {
    let d = Dimension::new(3).unwrap();
    let p = solve_profile(ProfileParams::new(d, 3.0, Pole::North)).unwrap();
    let probes = log_space(0.5, 20.0, 20);
    let (r0, out) = estimate_r0(&Potential::from_profile(&p), d, &probes, BasisOptions::default()).unwrap();
    let r0 = r0.expect("property holds from some probe on");
    for probe in out.iter().filter(|q| q.r >= r0) {
        assert_eq!(probe.zeros_after, 0);
        assert!(probe.limit.abs() > 1e-8);
    }
}

#[test]
fn potential_bound_is_sampled() {
    let v = Potential::new(|r| 3.0 / (r * r), 1.0, 30.0);
    assert!((v.bound_c0 - 6.0).abs() < 1e-4);
    assert_eq!(Potential::zero().eval(2.0), 0.0);
}

#[test]
fn exponential_rate_fit() {
    let s: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
    let v: Vec<f64> = s.iter().map(|x| 0.3 * (-0.5 * x).exp()).collect();
    let fit = fit_exponential_rate(&s, &v).unwrap();
    assert!((fit.exponent - 0.5).abs() < 1e-9, "{}", fit.exponent);
}
