//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the report is never captured.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expanderlab::io::GridSpec;
use expanderlab::ode_core::{expander_field, integrate_adaptive};
use expanderlab::pde_simulator::*;
use expanderlab::profile_solver::*;
use expanderlab::{Dimension, Pole};
use expanderlab_cli::studies;

type Outcome = Result<(bool, String), Box<dyn std::error::Error + Send + Sync>>;
type Criterion = (&'static str, fn() -> Outcome);

fn dim(d: u32) -> Dimension {
    Dimension::new(d).expect("d >= 3")
}

fn sup_dev(values: &[f64], target: f64) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max((v - target).abs()))
}

fn stationary() -> Outcome {
    let p = solve_profile(ProfileParams::new(dim(3), 0.0, Pole::North))?;
    let t = &p.trajectory;
    let ode_zero = (0..t.len()).fold(0.0f64, |m, i| m.max(t.state(i)[0].abs()));
    let eq = integrate_adaptive(&expander_field(dim(3)), &[FRAC_PI_2, 0.0], (1e-4, 30.0), 1e-10)?;
    let ode_eq = (0..eq.len()).fold(0.0f64, |m, i| m.max((eq.state(i)[0] - FRAC_PI_2).abs()));
    let g = Arc::new(RadialGrid::graded(10.0, 400, 1e-3));
    let cfg = SimConfig::new(3, 1e-3, (0.0, 0.1));
    let mut zero = RadialField::from_fn(0.0, g.clone(), OriginBc::DirichletZero, |_| 0.0);
    let mut equator = RadialField::from_fn(0.0, g, OriginBc::FreeSingular, |_| FRAC_PI_2);
    let (mut pde_zero, mut pde_eq) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        zero = step(&zero, &cfg)?;
        equator = step(&equator, &cfg)?;
        pde_zero = pde_zero.max(sup_dev(&zero.values, 0.0));
        pde_eq = pde_eq.max(sup_dev(&equator.values, FRAC_PI_2));
    }
    let worst = ode_zero.max(ode_eq).max(pde_zero).max(pde_eq);
    Ok((
        worst <= 1e-10,
        format!("ODE 0: {ode_zero:.1e}, ODE pi/2: {ode_eq:.1e}, PDE 0: {pde_zero:.1e}, PDE pi/2: {pde_eq:.1e} (<= 1e-10)"),
    ))
}

fn monotone_quantity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let d = rng.gen_range(3..=8);
        let alpha = 10.0 * (1.0 - rng.gen::<f64>());
        let p = solve_profile(ProfileParams::new(dim(d), alpha, Pole::North))?;
        let slack = 10.0 * p.params.tol;
        for w in p.monotone_quantity().windows(2) {
            worst = worst.max((w[1] - w[0]) / (slack * w[0].abs().max(1.0)));
        }
    }
    Ok((worst <= 1.0, format!("largest increase of H in units of 10 tol: {worst:.3} (<= 1)")))
}

fn dichotomy() -> Outcome {
    let s7 = ShootSettings::for_dimension(dim(7));
    let scan7 = scan_branches(dim(7), s7.scan_range, 200)?;
    let increasing = scan7.limits.windows(2).all(|w| w[1] > w[0]);
    let max7 = scan7.limits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s3 = ShootSettings::for_dimension(dim(3));
    let scan3 = scan_branches(dim(3), s3.scan_range, 200)?;
    let changes = scan3.limits.windows(2).filter(|w| (w[0] - FRAC_PI_2) * (w[1] - FRAC_PI_2) < 0.0).count();
    let ok = increasing && max7 < FRAC_PI_2 && max7 > FRAC_PI_2 - 0.05 && changes >= 2;
    Ok((ok, format!("d=7 increasing: {increasing}, max {max7:.10} in (pi/2-0.05, pi/2); d=3 sign changes: {changes} (>= 2)")))
}

fn critical_structure() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 3..=6 {
        let mut s = ShootSettings::for_dimension(dim(d));
        let a = critical_params_with(dim(d), 1e-10, &s)?;
        s.rho_max = 50.0;
        let b = critical_params_with(dim(d), 1e-10, &s)?;
        let drift = [a.alpha0 - b.alpha0, a.alpha_star - b.alpha_star, a.ell_star - b.ell_star, a.delta_star - b.delta_star]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        ok &= a.alpha0 < a.alpha_star && a.ell_star > FRAC_PI_2 && a.delta_star > 0.0 && drift < 1e-6;
        parts.push(format!("d={d}: delta* {:.4e}, drift {drift:.1e}", a.delta_star));
    }
    Ok((ok, parts.join("; ")))
}

fn variational_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d = rng.gen_range(3..=6);
        let alpha = rng.gen_range(0.2..3.0);
        let solve = |a: f64| solve_profile(ProfileParams::new(dim(d), a, Pole::North));
        let phi = solve_variation_phi(&solve(alpha)?)?;
        let (hi, lo) = (solve(alpha + eps)?, solve(alpha - eps)?);
        for rho in [1.0, 5.0, 20.0] {
            let fd = (hi.psi(rho) - lo.psi(rho)) / (2.0 * eps);
            worst = worst.max((phi.value(rho) - fd).abs() / fd.abs());
        }
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e} (<= 1e-4)")))
}

fn asymptotic_rates() -> Outcome {
    let a = studies::asymptotics_study(3, 0.5)?;
    let ok = (a.tail_exponent + 2.0).abs() <= 0.2 && (a.phi2_exponent + 2.0).abs() <= 0.2 && a.phi1_log_spread <= 0.1;
    Ok((
        ok,
        format!(
            "tail {:.4}, phi2-1 {:.4} (-2 +/- 0.2), phi1 log spread {:.4} (<= 0.1)",
            a.tail_exponent, a.phi2_exponent, a.phi1_log_spread
        ),
    ))
}

fn tracking() -> Outcome {
    let grid = GridSpec { r_max: 40.0, cells: 400, r1: 0.002 };
    let st = studies::tracking_study(3, 1.0, grid, 100, 0.01, 1.0, 3)?;
    let bounded = (0..2).all(|k| st.errors[k] <= 2.0 * st.gaps[k]);
    let ratios: Vec<f64> = st.errors.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = bounded && ratios.iter().all(|&r| r <= 0.35);
    Ok((
        ok,
        format!("errors {:.3e}, {:.3e}, {:.3e}; gaps {:.3e}, {:.3e}; ratios {:.3}, {:.3} (<= 0.35)", st.errors[0], st.errors[1], st.errors[2], st.gaps[0], st.gaps[1], ratios[0], ratios[1]),
    ))
}

fn nonuniqueness() -> Outcome {
    let ell = FRAC_PI_2 - 0.05;
    let crit = critical_params(dim(3), 1e-10)?;
    let in_range = ell >= FRAC_PI_2 - crit.delta_star;
    let delta = 1e-3;
    let st = studies::pair_study(3, ell, GridSpec { r_max: 10.0, cells: 800, r1: 5e-4 }, 200, delta, 10.0 * delta, 0.1)?;
    let ok = in_range
        && st.separation_final > 2.0
        && st.energy_margin.iter().all(|&m| m >= -1e-3)
        && st.zeta.iter().all(|&z| z > 0.0);
    Ok((
        ok,
        format!(
            "sup|h_N-h_S| at 10 delta {:.4} (> 2), min over t {:.4}; energy margins {:.2e}, {:.2e} (>= -1e-3); zeta {:.4}, {:.4}",
            st.separation_final, st.separation_min, st.energy_margin[0], st.energy_margin[1], st.zeta[0], st.zeta[1]
        ),
    ))
}

fn stability_rate() -> Outcome {
    let st = studies::decay_study(3, 0.5, 0.01, GridSpec { r_max: 40.0, cells: 800, r1: 0.01 }, 0.01, 20.0, 5.0)?;
    Ok(((st.rate - 0.5).abs() <= 0.1, format!("fitted rate {:.4} (0.5 +/- 0.1)", st.rate)))
}

fn comparison() -> Outcome {
    let st = studies::comparison_study(7, 20, GridSpec { r_max: 5.0, cells: 200, r1: 5e-3 }, 2e-3, 0.5)?;
    let ok = st.violations.iter().all(|&v| v <= 1e-6);
    Ok((ok, format!("{} pairs, violations {:.2e}, {:.2e} (<= 1e-6)", st.pairs, st.violations[0], st.violations[1])))
}

fn supersolution() -> Outcome {
    let (kappa, found) = studies::supersolution_study(3, 0.5, 1.0, 1.0)?;
    Ok(match found {
        Some(f) => (
            f.min_upper >= -1e-8 && f.max_lower <= 1e-8,
            format!(
                "kappa {kappa:.4}, eta {}, A {:e}, s0 {}: min R+ {:.2e} (>= -1e-8), max R- {:.2e} (<= 1e-8)",
                f.params.eta, f.params.a, f.params.s0, f.min_upper, f.max_lower
            ),
        ),
        None => (false, "no admissible (eta, A, s0) found".into()),
    })
}

fn gl_selection() -> Outcome {
    let st = studies::gl_study(5, FRAC_PI_2 - 0.1, &[0.04, 0.02, 0.01], GridSpec { r_max: 8.0, cells: 1600, r1: 1e-4 }, 2.5e-5, 0.05, 1e-3)?;
    let last = *st.distances.last().expect("three runs");
    let ok = st.selection.monotone && last < 2.0 * st.reference_gap && st.max_modulus <= 1.0 + 1e-8;
    Ok((
        ok,
        format!(
            "distances {:.3e}, {:.3e}, {:.3e} (monotone: {}); final vs 2x PDE error {:.3e}; max|u|-1 {:.1e}",
            st.distances[0], st.distances[1], st.distances[2], st.selection.monotone, 2.0 * st.reference_gap, st.max_modulus - 1.0
        ),
    ))
}

fn hardy() -> Outcome {
    let (h7, h6) = (hardy_constant(7), hardy_constant(6));
    Ok(((h7 - 24.0 / 25.0).abs() < 1e-15 && (h6 - 1.25).abs() < 1e-15, format!("d=7: {h7}, d=6: {h6}")))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_expanderlab")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let root = std::env::temp_dir().join(format!("expanderlab-acceptance-{}", std::process::id()));
    let commands: [&[&str]; 3] = [
        &["profile", "--d", "3", "--alpha", "0.5"],
        &["scan", "--d", "4", "--n", "30"],
        &["pde", "expander", "--grid", "20,200,0.004"],
    ];
    let mut compared = 0;
    for (k, cmd) in commands.iter().enumerate() {
        let a = root.join(format!("{k}-a"));
        let b = root.join(format!("{k}-b"));
        let mut args = cmd.to_vec();
        let a_str = a.to_string_lossy().into_owned();
        args.extend(["--out", a_str.as_str()]);
        run_cli(&args)?;
        let manifest = a.join("manifest.json").to_string_lossy().into_owned();
        let b_str = b.to_string_lossy().into_owned();
        run_cli(&["rerun", manifest.as_str(), "--out", b_str.as_str()])?;
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa.len() != fb.len() {
            return Ok((false, format!("{cmd:?}: {} vs {} CSV files", fa.len(), fb.len())));
        }
        for (x, y) in fa.iter().zip(&fb) {
            if fs::read(x)? != fs::read(y)? {
                return Ok((false, format!("{cmd:?}: {} differs", x.display())));
            }
            compared += 1;
        }
    }
    let _ = fs::remove_dir_all(&root);
    Ok((true, format!("{compared} CSV files byte-identical across {} reruns", commands.len())))
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("stationary exactness", stationary),
        ("monotone quantity", monotone_quantity),
        ("dimension dichotomy", dichotomy),
        ("critical structure", critical_structure),
        ("variational consistency", variational_consistency),
        ("asymptotic rates", asymptotic_rates),
        ("self-similarity tracking", tracking),
        ("non-uniqueness", nonuniqueness),
        ("asymptotic stability rate", stability_rate),
        ("comparison principle", comparison),
        ("supersolution residual", supersolution),
        ("GL selection", gl_selection),
        ("Hardy constant", hardy),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {:>2} ({name}): {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
