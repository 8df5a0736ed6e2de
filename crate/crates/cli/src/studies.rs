//! Multi-run numerical studies shared by `verify` and the acceptance suite.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use expanderlab::asymptotics::{basis_at_infinity, fit_decay, BasisOptions, DecayModel, Potential};
use expanderlab::gl_regularization::{gl_select, GlConfig, GlSelection};
use expanderlab::io::GridSpec;
use expanderlab::pde_simulator::*;
use expanderlab::profile_solver::*;
use expanderlab::{Dimension, Pole};

pub type StudyResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

fn dim(d: u32) -> StudyResult<Dimension> {
    Dimension::new(d).ok_or_else(|| format!("dimension {d} must be at least 3").into())
}

fn log_config(d: u32, steps_per_decade: usize, t_span: (f64, f64)) -> SimConfig {
    let mut cfg = SimConfig::new(d, 10f64.ln() / steps_per_decade as f64, t_span);
    cfg.time_grid = TimeGrid::LogUniform;
    cfg
}

/// Largest nodewise difference between a run and its refinement at common
/// snapshots (the fine grid keeps every coarse node at even indices).
pub fn refinement_gap(coarse: &Run, fine: &Run) -> f64 {
    coarse
        .snapshots
        .iter()
        .zip(&fine.snapshots)
        .map(|(a, b)| {
            debug_assert!((a.time - b.time).abs() <= 1e-9 * a.time.abs().max(1.0));
            (0..a.values.len()).fold(0.0f64, |m, i| m.max((a.values[i] - b.values[2 * i]).abs()))
        })
        .fold(0.0, f64::max)
}

/// Sup over snapshots and nodes of `|h − ψ(r/√t)|`.
pub fn tracking_error(run: &Run, profile: &Profile) -> f64 {
    run.snapshots
        .iter()
        .map(|s| {
            let st = s.time.sqrt();
            s.r().iter().zip(&s.values).fold(0.0f64, |m, (&r, &h)| m.max((h - profile.psi(r / st)).abs()))
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingStudy {
    pub alpha: f64,
    /// Tracking error per resolution level.
    pub errors: Vec<f64>,
    /// `gaps[k]`: difference between levels `k` and `k + 1`.
    pub gaps: Vec<f64>,
    #[serde(skip)]
    pub finest: Option<Run>,
    #[serde(skip)]
    pub profile: Option<Profile>,
}

/// Evolve the exact expander snapshot at `t0` over `decades` with `levels`
/// simultaneous `(dr, dt)` halvings.
pub fn tracking_study(
    d: u32,
    ell: f64,
    grid: GridSpec,
    steps_per_decade: usize,
    t0: f64,
    decades: f64,
    levels: usize,
) -> StudyResult<TrackingStudy> {
    let profile = branch_profile(dim(d)?, ell, Pole::North, 1e-12)?;
    let base = grid.build()?;
    let cfg = log_config(d, steps_per_decade, (t0, t0 * 10f64.powf(decades)));
    let mut grids = vec![base];
    let mut cfgs = vec![cfg];
    for k in 1..levels {
        grids.push(grids[k - 1].refined());
        cfgs.push(cfgs[k - 1].halved());
    }
    let runs: Vec<Run> = grids
        .into_par_iter()
        .zip(cfgs.into_par_iter())
        .map(|(g, c)| {
            let st = t0.sqrt();
            let init = RadialField::from_fn(t0, Arc::new(g), OriginBc::DirichletZero, |r| profile.psi(r / st));
            evolve(&init, &c)
        })
        .collect::<Result<_, _>>()?;
    let errors = runs.iter().map(|r| tracking_error(r, &profile)).collect();
    let gaps = runs.windows(2).map(|w| refinement_gap(&w[0], &w[1])).collect();
    Ok(TrackingStudy { alpha: profile.params.alpha, errors, gaps, finest: runs.into_iter().last(), profile: Some(profile) })
}

/// Far-field data used by the pair demonstration.
pub fn pair_data(ell: f64, bump: f64) -> impl Fn(f64) -> f64 + Sync + Copy {
    move |r: f64| ell * (1.0 - bump * r * r / (1.0 + r * r))
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStudy {
    pub delta: f64,
    pub alpha_north: f64,
    pub alpha_south: f64,
    /// `sup_{r>0} |h_N − h_S|` at the last snapshot and its minimum over time.
    pub separation_final: f64,
    pub separation_min: f64,
    pub energy_margin: [f64; 2],
    pub zeta: [f64; 2],
    pub identical_from_one: f64,
    #[serde(skip)]
    pub pair: Option<NonuniquenessPair>,
}

fn separation_off_origin(a: &Run, b: &Run) -> Vec<f64> {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| x.values.iter().zip(&y.values).skip(1).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())))
        .collect()
}

/// Bump test functions centred in the run's time window.
pub fn default_energy_test(delta: f64, t_end: f64, r_lo: f64, r_hi: f64) -> BumpTest {
    let (a, b) = (delta.ln(), t_end.ln());
    let t_range = ((a + 0.1 * (b - a)).exp(), (a + 0.9 * (b - a)).exp());
    BumpTest { t_range, r_range: (r_lo, r_hi), q_amplitude: 1.0 }
}

pub fn pair_study(
    d: u32,
    ell: f64,
    grid: GridSpec,
    steps_per_decade: usize,
    delta: f64,
    t_end: f64,
    eps: f64,
) -> StudyResult<PairStudy> {
    let g = Arc::new(grid.build()?);
    let cfg = log_config(d, steps_per_decade, (delta, t_end));
    let h0 = pair_data(ell, 0.2);
    let pair = nonuniqueness_pair(dim(d)?, ell, &h0, &cfg, g.clone(), 1e-10)?;
    let sep = separation_off_origin(&pair.north, &pair.south);
    let test = default_energy_test(delta, t_end, 20.0 * g.r1(), 1.0);
    let en = energy_inequality_check(&pair.north, &test)?.margin;
    let es = energy_inequality_check(&pair.south, &test)?.margin;
    let zn = closeness_zeta(&pair.north, &pair.north_profile, eps);
    let zs = closeness_zeta(&pair.south, &pair.south_profile, eps);
    let (n0, s0) = (&pair.north.snapshots[0], &pair.south.snapshots[0]);
    let identical = n0
        .r()
        .iter()
        .zip(n0.values.iter().zip(&s0.values))
        .filter(|(r, _)| **r >= 1.0)
        .fold(0.0f64, |m, (_, (a, b))| m.max((a - b).abs()));
    Ok(PairStudy {
        delta,
        alpha_north: pair.north_profile.params.alpha,
        alpha_south: pair.south_profile.params.alpha,
        separation_final: *sep.last().expect("nonempty run"),
        separation_min: sep.iter().copied().fold(f64::INFINITY, f64::min),
        energy_margin: [en, es],
        zeta: [zn, zs],
        identical_from_one: identical,
        pair: Some(pair),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayStudy {
    pub rate: f64,
    pub fit_residual: f64,
    /// `sup_s ‖v(s)‖_{L∞[w]} / ‖v(0)‖_{L∞[w]}`.
    pub weighted_growth: f64,
    pub kappa: f64,
    pub series: Vec<(f64, f64)>,
}

/// Perturbation `amp·ρ/(1+ρ²)` of `ψ_α` in self-similar variables.
pub fn decay_study(
    d: u32,
    alpha: f64,
    amp: f64,
    grid: GridSpec,
    ds: f64,
    s_end: f64,
    fit_from: f64,
) -> StudyResult<DecayStudy> {
    let profile = solve_profile(ProfileParams::new(dim(d)?, alpha, Pole::North))?;
    let g = Arc::new(grid.build()?);
    let init = RadialField::from_fn(0.0, g, OriginBc::DirichletZero, |r| amp * r / (1.0 + r * r));
    let kappa = 0.5 * kappa_threshold(&profile, 50.0, 1e-6)?;
    let w = solve_w(&profile, kappa)?;
    let cfg = SelfSimConfig::new(d, ds);
    let run = evolve_selfsimilar(&init, (0.0, s_end), &profile, &cfg, Some(&w))?;
    let fit = run.decay_rate((fit_from, s_end))?;
    let weighted = run.weighted.as_ref().expect("weight supplied");
    let w0 = weighted[0].1;
    let growth = weighted.iter().fold(0.0f64, |m, x| m.max(x.1)) / w0;
    Ok(DecayStudy { rate: fit.exponent, fit_residual: fit.residual, weighted_growth: growth, kappa, series: run.deviation })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonStudy {
    /// Largest violation at each resolution.
    pub violations: Vec<f64>,
    pub pairs: usize,
}

/// Randomized ordered pairs `f ≤ f + g`, with `g ≥ 0` and both vanishing at 0.
pub fn comparison_study(seed: u64, pairs: usize, grid: GridSpec, dt: f64, t_end: f64) -> StudyResult<ComparisonStudy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(u32, [f64; 5])> = (0..pairs)
        .map(|_| {
            let d = rng.gen_range(3..=6);
            (d, [rng.gen_range(0.1..1.2), rng.gen_range(0.0..0.4), rng.gen_range(0.5..6.0), rng.gen_range(0.0..0.8), rng.gen_range(0.5..6.0)])
        })
        .collect();
    let coarse = grid.build()?;
    let levels = [coarse.clone(), coarse.refined()];
    let mut violations = Vec::new();
    for (k, g) in levels.iter().enumerate() {
        let g = Arc::new(g.clone());
        let worst = cases
            .par_iter()
            .map(|&(d, [a, b, w1, c, w2])| -> StudyResult<f64> {
                let mut cfg = SimConfig::new(d, dt / (1 << k) as f64, (0.0, t_end));
                cfg.snapshot_every = 1 << k;
                let sub = move |r: f64| a * r.min(1.0) * (1.0 + b * (w1 * r).sin());
                let sup = move |r: f64| sub(r) + c * (r / (1.0 + r)) * (1.0 + 0.5 * (w2 * r).cos());
                let lo = evolve(&RadialField::from_fn(0.0, g.clone(), OriginBc::DirichletZero, sub), &cfg)?;
                let hi = evolve(&RadialField::from_fn(0.0, g.clone(), OriginBc::DirichletZero, sup), &cfg)?;
                Ok(check_comparison(&lo, &hi))
            })
            .collect::<StudyResult<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        violations.push(worst);
    }
    Ok(ComparisonStudy { violations, pairs })
}

/// Barrier search for `d`, `α` with `κ = κ̂/2`.
pub fn supersolution_study(d: u32, alpha: f64, m: f64, r: f64) -> StudyResult<(f64, Option<SupersolutionSearch>)> {
    let profile = solve_profile(ProfileParams::new(dim(d)?, alpha, Pole::North))?;
    let kappa = 0.5 * kappa_threshold(&profile, 50.0, 1e-8)?;
    let w = solve_w(&profile, kappa)?;
    Ok((kappa, find_supersolution(&profile, &w, m, r, 1e-8)))
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsStudy {
    pub tail_exponent: f64,
    pub phi2_exponent: f64,
    /// `max |log(φ₁/(C ρ^{−d}e^{−ρ²/4}))|` over the window, with `C` the mean.
    pub phi1_log_spread: f64,
}

pub fn asymptotics_study(d: u32, alpha: f64) -> StudyResult<AsymptoticsStudy> {
    let profile = solve_profile(ProfileParams::new(dim(d)?, alpha, Pole::North))?;
    let rho: Vec<f64> = (0..=80).map(|k| 10.0 + 20.0 * k as f64 / 80.0).collect();
    let tail: Vec<f64> = rho.iter().map(|&x| profile.psi(x) - profile.psi_inf).collect();
    let tail_fit = fit_decay(&rho, &tail, DecayModel::Power)?;
    let pot = Potential::from_profile(&profile);
    let (phi1, phi2) = basis_at_infinity(&pot, dim(d)?, 10.0, BasisOptions::default())?;
    let p2: Vec<f64> = rho.iter().map(|&x| phi2.value(x) - 1.0).collect();
    let phi2_fit = fit_decay(&rho, &p2, DecayModel::Power)?;
    let df = f64::from(d);
    let window: Vec<f64> = (0..=40).map(|k| 15.0 + 10.0 * k as f64 / 40.0).collect();
    let logs: Vec<f64> = window.iter().map(|&x| (phi1.value(x) / (x.powf(-df) * (-x * x / 4.0).exp())).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let spread = logs.iter().fold(0.0f64, |m, l| m.max((l - mean).abs()));
    Ok(AsymptoticsStudy { tail_exponent: tail_fit.exponent, phi2_exponent: phi2_fit.exponent, phi1_log_spread: spread })
}

#[derive(Debug, Clone, Serialize)]
pub struct GlStudy {
    pub selection: GlSelection,
    /// `sup |h^ε − h_ref|` per ε.
    pub distances: Vec<f64>,
    /// Reference-run refinement gap at `t_eval` (PDE discretization error).
    pub reference_gap: f64,
    /// Reference run against the exact expander at `t_eval`.
    pub reference_tracking: f64,
    pub max_modulus: f64,
    pub kappa: f64,
}

/// GL runs from `h0 ≡ ℓ` against the North PDE run from the same data.
pub fn gl_study(d: u32, ell: f64, eps: &[f64], grid: GridSpec, dt: f64, t_eval: f64, ref_delta: f64) -> StudyResult<GlStudy> {
    let dd = dim(d)?;
    let base = grid.build()?;
    let h0 = move |_r: f64| ell;
    let reference_run = |g: RadialGrid, steps: usize| -> StudyResult<Run> {
        let data = make_branch_data(dd, ell, Pole::North, &h0, ref_delta, Arc::new(g), 1e-12)?;
        let mut cfg = log_config(d, steps, (ref_delta, t_eval));
        cfg.snapshot_every = usize::MAX / 4;
        Ok(evolve(&data.field, &cfg)?)
    };
    let (coarse, fine) = rayon::join(|| reference_run(base.clone(), 200), || reference_run(base.refined(), 400));
    let (coarse, fine) = (coarse?, fine?);
    let (c_last, f_last) = (coarse.last(), fine.last());
    let gap = (0..c_last.values.len()).fold(0.0f64, |m, i| m.max((c_last.values[i] - f_last.values[2 * i]).abs()));
    let profile = branch_profile(dd, ell, Pole::North, 1e-12)?;
    let st = t_eval.sqrt();
    let tracking = c_last.r().iter().zip(&c_last.values).fold(0.0f64, |m, (&r, &h)| m.max((h - profile.psi(r / st)).abs()));
    let ref_field = c_last.clone();
    let reference = move |r: f64| ref_field.interpolate(r);
    let cfg = GlConfig {
        d,
        epsilon_sequence: eps.to_vec(),
        dt,
        t_span: (0.0, t_eval),
        t_eval,
        grid: base,
        positivity_radius: 0.5,
        dissipation_window: ((0.2 * t_eval, t_eval), (0.1, 1.0)),
    };
    let selection = gl_select(&h0, &cfg, &reference)?;
    let distances = selection.runs.iter().map(|r| r.distance).collect();
    let max_modulus = selection.runs.iter().fold(0.0f64, |m, r| m.max(r.max_modulus));
    Ok(GlStudy {
        selection,
        distances,
        reference_gap: gap,
        reference_tracking: tracking,
        max_modulus,
        kappa: ell.cos(),
    })
}
