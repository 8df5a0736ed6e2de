//! Runs in self-similar variables `s = log t`, `ρ = r/√t`.

use serde::{Deserialize, Serialize};

use super::flow::{Nonlinearity, OriginBc, OuterBc, RadialField, Reaction, Scheme};
use super::grid::RadialLaplacian;
use super::PdeError;
use crate::asymptotics::{fit_exponential_rate, AsymptoticsError, DecayFit};
use crate::profile_solver::{Profile, VariationSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelfSimMode {
    /// Evolve `v − ψ_α` with the exact nonlinear remainder.
    Perturbation,
    /// Evolve the full angle.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimConfig {
    pub d: u32,
    pub ds: f64,
    pub theta: f64,
    pub mode: SelfSimMode,
    pub nonlinearity: Nonlinearity,
    pub outer_bc: OuterBc,
    pub snapshot_every: usize,
}

impl SelfSimConfig {
    /// Perturbation form with the `1/ρ` tail condition at the outer edge.
    pub fn new(d: u32, ds: f64) -> Self {
        Self {
            d,
            ds,
            theta: 0.5,
            mode: SelfSimMode::Perturbation,
            nonlinearity: Nonlinearity::FullSine,
            outer_bc: OuterBc::Decay { power: 1.0 },
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelfSimRun {
    pub config: SelfSimConfig,
    pub snapshots: Vec<RadialField>,
    /// `ψ_α` on the grid.
    pub base: Vec<f64>,
    /// `(s, ‖v(s) − ψ_α‖_∞)`.
    pub deviation: Vec<(f64, f64)>,
    /// `(s, ‖v(s) − ψ_α‖_{L∞[w]})` when a weight was supplied.
    pub weighted: Option<Vec<(f64, f64)>>,
}

impl SelfSimRun {
    /// Perturbation `v − ψ_α` for a snapshot.
    pub fn perturbation(&self, snap: &RadialField) -> Vec<f64> {
        match self.config.mode {
            SelfSimMode::Perturbation => snap.values.clone(),
            SelfSimMode::Full => snap.values.iter().zip(&self.base).map(|(v, b)| v - b).collect(),
        }
    }

    /// Exponential rate of the deviation over `s ∈ window`.
    pub fn decay_rate(&self, window: (f64, f64)) -> Result<DecayFit, AsymptoticsError> {
        let (s, v): (Vec<f64>, Vec<f64>) =
            self.deviation.iter().filter(|(s, _)| *s >= window.0 && *s <= window.1).copied().unzip();
        fit_exponential_rate(&s, &v)
    }
}

/// Evolve `initial` (perturbation or full angle, per `config.mode`) over `s_span`.
pub fn evolve_selfsimilar(
    initial: &RadialField,
    s_span: (f64, f64),
    profile: &Profile,
    config: &SelfSimConfig,
    weight: Option<&VariationSolution>,
) -> Result<SelfSimRun, PdeError> {
    if !(config.ds > 0.0) || !(0.5..=1.0).contains(&config.theta) || config.snapshot_every == 0 {
        return Err(PdeError::InvalidConfig("bad self-similar step settings".into()));
    }
    if !(s_span.1 > s_span.0) {
        return Err(PdeError::InvalidConfig("s_span must be increasing".into()));
    }
    if config.d != profile.params.d.get() {
        return Err(PdeError::InvalidConfig("dimension differs from the profile".into()));
    }
    let grid = initial.grid.clone();
    let rho = grid.nodes();
    let base: Vec<f64> = rho.iter().map(|&r| profile.psi(r)).collect();
    let (reaction, origin) = match (config.mode, config.nonlinearity) {
        (SelfSimMode::Perturbation, Nonlinearity::FullSine) => (Reaction::PerturbSine(base.clone()), OriginBc::DirichletZero),
        (SelfSimMode::Perturbation, Nonlinearity::LinearizedValpha) => {
            (Reaction::PerturbLinear(base.clone()), OriginBc::DirichletZero)
        }
        (SelfSimMode::Full, Nonlinearity::FullSine) => (Reaction::Sine, initial.origin_bc),
        (SelfSimMode::Full, Nonlinearity::LinearizedValpha) => {
            return Err(PdeError::InvalidConfig("the linearized reaction needs perturbation mode".into()))
        }
    };
    let scheme = Scheme {
        lap: RadialLaplacian::new(&grid, config.d),
        r: rho.to_vec(),
        origin,
        outer: config.outer_bc,
        drift: true,
        reaction,
    };
    let wvals: Option<Vec<f64>> = weight.map(|w| rho.iter().map(|&r| w.value(r)).collect());
    let mut run = SelfSimRun {
        config: config.clone(),
        snapshots: Vec::new(),
        base,
        deviation: Vec::new(),
        weighted: wvals.as_ref().map(|_| Vec::new()),
    };
    let record = |run: &mut SelfSimRun, field: RadialField| {
        let pert = run.perturbation(&field);
        let sup = pert.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        run.deviation.push((field.time, sup));
        if let (Some(w), Some(series)) = (&wvals, run.weighted.as_mut()) {
            let ws = pert.iter().zip(w).skip(1).fold(0.0f64, |m, (v, w)| m.max((v / w).abs()));
            series.push((field.time, ws));
        }
        run.snapshots.push(field);
    };
    let mut values = initial.values.clone();
    if let Some(v) = origin.value() {
        values[0] = if config.mode == SelfSimMode::Perturbation { 0.0 } else { v };
    }
    let n = ((s_span.1 - s_span.0) / config.ds - 1e-9).ceil().max(1.0) as usize;
    let ds = (s_span.1 - s_span.0) / n as f64;
    let make = |k: usize, values: &[f64]| RadialField {
        time: s_span.0 + ds * k as f64,
        grid: grid.clone(),
        values: values.to_vec(),
        origin_bc: initial.origin_bc,
    };
    record(&mut run, make(0, &values));
    for k in 1..=n {
        scheme.step(&mut values, ds, config.theta)?;
        if k % config.snapshot_every == 0 || k == n {
            record(&mut run, make(k, &values));
        }
    }
    Ok(run)
}
