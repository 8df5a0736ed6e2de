//! Corotational Ginzburg–Landau relaxation `u = (v, w x/|x|)` and the ε → 0
//! selection study.
//!
//! Each step is a Strang splitting: half a step of the pointwise penalization,
//! a backward-Euler diffusion step, and another half step of penalization.
//! Both substeps decrease the discrete energy and keep `|u| ≤ 1`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pde_simulator::{solve_tridiagonal, RadialGrid, RadialLaplacian};

#[derive(Debug, Error)]
pub enum GlError {
    #[error("penalization Newton solve did not converge at node {node}")]
    NewtonDivergence { node: usize },
    #[error("tridiagonal solve hit a zero pivot")]
    LinearSolveFailure,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantPair {
    pub time: f64,
    pub grid: Arc<RadialGrid>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub epsilon: f64,
}

impl EquivariantPair {
    /// `(cos h, sin h)` sampled on the grid, with `w(0) = 0`.
    pub fn from_angle(grid: Arc<RadialGrid>, epsilon: f64, h: impl Fn(f64) -> f64) -> Self {
        let (mut v, mut w): (Vec<f64>, Vec<f64>) = grid.nodes().iter().map(|&r| (h(r).cos(), h(r).sin())).unzip();
        v[0] = v[0].hypot(w[0]);
        w[0] = 0.0;
        Self { time: 0.0, grid, v, w, epsilon }
    }

    /// `h = atan2(w, v)` per node.
    pub fn angle(&self) -> Vec<f64> {
        self.v.iter().zip(&self.w).map(|(v, w)| w.atan2(*v)).collect()
    }

    pub fn modulus_sq(&self) -> Vec<f64> {
        self.v.iter().zip(&self.w).map(|(v, w)| v * v + w * w).collect()
    }

    /// Discrete `∫(|∇u|² + (1 − |u|²)²/(2ε²)) r^{d−1} dr` on `lap`'s grid.
    pub fn energy(&self, lap: &RadialLaplacian) -> f64 {
        let n = self.v.len();
        let mut e = 0.0;
        for i in 0..n - 1 {
            // `upper[i]·V_i` is the face conductance.
            let k = lap.upper[i] * lap.volume[i];
            let (dv, dw) = (self.v[i + 1] - self.v[i], self.w[i + 1] - self.w[i]);
            e += k * (dv * dv + dw * dw);
        }
        let eps2 = self.epsilon * self.epsilon;
        for i in 0..n {
            let p = self.v[i] * self.v[i] + self.w[i] * self.w[i];
            let c = if i == 0 { 0.0 } else { lap.inv_r2[i] };
            e += lap.volume[i] * (c * self.w[i] * self.w[i] + (1.0 - p) * (1.0 - p) / (2.0 * eps2));
        }
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalization {
    /// Exact flow of `u_t = −ε⁻²(|u|² − 1)u`.
    ExactFlow,
    /// Backward Euler, solved per node by Newton on the radial factor.
    BackwardEuler,
}

/// Exact penalization flow over `dt`: `|u|²` follows the logistic law.
fn penalize_exact(v: &mut f64, w: &mut f64, dt: f64, eps: f64) {
    let p0 = *v * *v + *w * *w;
    if p0 == 0.0 {
        return;
    }
    let decay = (-2.0 * dt / (eps * eps)).exp();
    let p = 1.0 / (1.0 + (1.0 / p0 - 1.0) * decay);
    let scale = (p / p0).sqrt();
    *v *= scale;
    *w *= scale;
}

/// Backward Euler: `λ(1 + a(λ²p₀ − 1)) = 1` with `u_new = λ u_old`.
fn penalize_implicit(v: &mut f64, w: &mut f64, dt: f64, eps: f64) -> Option<()> {
    let p0 = *v * *v + *w * *w;
    if p0 == 0.0 {
        return Some(());
    }
    let a = dt / (eps * eps);
    // Newton from the current state; fails once the cubic folds over below it.
    let mut lam: f64 = 1.0;
    for _ in 0..60 {
        let f = lam + a * (lam * lam * lam * p0 - lam) - 1.0;
        let df = 1.0 + a * (3.0 * lam * lam * p0 - 1.0);
        if df <= 0.0 || !df.is_finite() {
            return None;
        }
        let step = f / df;
        lam -= step;
        if step.abs() <= 1e-15 * lam.abs() {
            *v *= lam;
            *w *= lam;
            return Some(());
        }
    }
    None
}

/// Stepper holding the operator for one grid and dimension.
#[derive(Debug, Clone)]
pub struct GlStepper {
    pub d: u32,
    pub lap: RadialLaplacian,
    pub penalization: Penalization,
}

impl GlStepper {
    pub fn new(grid: &RadialGrid, d: u32) -> Self {
        Self { d, lap: RadialLaplacian::new(grid, d), penalization: Penalization::ExactFlow }
    }

    fn penalize(&self, s: &mut EquivariantPair, dt: f64) -> Result<(), GlError> {
        for i in 0..s.v.len() {
            let (mut v, mut w) = (s.v[i], s.w[i]);
            match self.penalization {
                Penalization::ExactFlow => penalize_exact(&mut v, &mut w, dt, s.epsilon),
                Penalization::BackwardEuler => {
                    penalize_implicit(&mut v, &mut w, dt, s.epsilon).ok_or(GlError::NewtonDivergence { node: i })?
                }
            }
            s.v[i] = v;
            s.w[i] = w;
        }
        Ok(())
    }

    fn diffuse(&self, s: &mut EquivariantPair, dt: f64) -> Result<(), GlError> {
        let n = s.v.len();
        let lap = &self.lap;
        let sub: Vec<f64> = (0..n).map(|i| -dt * lap.lower[i]).collect();
        let sup: Vec<f64> = (0..n).map(|i| -dt * lap.upper[i]).collect();
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + dt * (lap.lower[i] + lap.upper[i])).collect();
        solve_tridiagonal(&sub, &diag, &sup, &mut s.v).ok_or(GlError::LinearSolveFailure)?;
        let mut sub_w = sub;
        let mut sup_w = sup;
        let mut diag_w: Vec<f64> = diag.iter().zip(&lap.inv_r2).map(|(d, c)| d + dt * c).collect();
        sup_w[0] = 0.0;
        diag_w[0] = 1.0;
        sub_w[1] = 0.0;
        s.w[0] = 0.0;
        solve_tridiagonal(&sub_w, &diag_w, &sup_w, &mut s.w).ok_or(GlError::LinearSolveFailure)?;
        Ok(())
    }

    pub fn step(&self, state: &EquivariantPair, dt: f64) -> Result<EquivariantPair, GlError> {
        let mut s = state.clone();
        self.penalize(&mut s, 0.5 * dt)?;
        self.diffuse(&mut s, dt)?;
        self.penalize(&mut s, 0.5 * dt)?;
        s.time += dt;
        if s.v.iter().chain(&s.w).any(|x| !x.is_finite()) {
            return Err(GlError::NewtonDivergence { node: 0 });
        }
        Ok(s)
    }
}

/// One step with the default exact penalization.
pub fn gl_step(state: &EquivariantPair, d: u32, dt: f64) -> Result<EquivariantPair, GlError> {
    GlStepper::new(&state.grid, d).step(state, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlConfig {
    pub d: u32,
    pub epsilon_sequence: Vec<f64>,
    /// Largest step; early steps start at `ε²/8` and grow geometrically.
    pub dt: f64,
    pub t_span: (f64, f64),
    pub t_eval: f64,
    pub grid: RadialGrid,
    /// Radius for the first-component positivity monitor.
    pub positivity_radius: f64,
    /// `((t_lo, t_hi), (r_lo, r_hi))` region for the `|∂_t h|²` sum.
    pub dissipation_window: ((f64, f64), (f64, f64)),
}

impl GlConfig {
    pub fn validate(&self) -> Result<(), GlError> {
        let bad = |m: &str| Err(GlError::InvalidConfig(m.to_string()));
        if self.epsilon_sequence.is_empty() || self.epsilon_sequence.windows(2).any(|w| w[1] >= w[0]) {
            return bad("epsilon_sequence must be strictly decreasing");
        }
        let eps_min = *self.epsilon_sequence.last().expect("nonempty");
        if !(eps_min > self.grid.r1()) {
            return bad("smallest epsilon must exceed the first grid spacing");
        }
        if !(self.dt > 0.0) || !(self.t_span.1 > self.t_span.0) || self.t_span.0 != 0.0 {
            return bad("need dt > 0 and t_span = (0, T)");
        }
        if !(self.t_eval > 0.0 && self.t_eval <= self.t_span.1) {
            return bad("t_eval must lie in (0, T]");
        }
        Ok(())
    }

    fn times(&self, eps: f64) -> Vec<f64> {
        let mut t = vec![0.0];
        let mut dt = (eps * eps / 8.0).min(self.dt);
        let mut now = 0.0;
        let stops = [self.t_eval, self.t_span.1];
        for &stop in &stops {
            while now < stop - 1e-14 * stop {
                let next = (now + dt).min(stop);
                let next = if stop - next < 0.25 * dt { stop } else { next };
                t.push(next);
                now = next;
                dt = (dt * 1.05).min(self.dt);
            }
        }
        t.dedup();
        t
    }
}

/// Mollified GL data: on `[0, ε]` the angle is `r·h0(ε)/ε`.
pub fn mollify(h0: &(dyn Fn(f64) -> f64 + Sync), eps: f64) -> impl Fn(f64) -> f64 + '_ {
    move |r| if r < eps { r * h0(eps) / eps } else { h0(r) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlRunReport {
    pub epsilon: f64,
    pub steps: usize,
    /// `max |u|` over all steps.
    pub max_modulus: f64,
    /// Minimum of `v` over all steps and `r ≤ positivity_radius`.
    pub min_first_component: f64,
    /// Largest discrete energy increase over one step (≤ 0 means monotone).
    pub max_energy_increase: f64,
    pub initial_energy: f64,
    /// `‖|u|² − 1‖_∞` at `t_eval`.
    pub sphere_defect: f64,
    /// `Σ V_i (Δh/Δt)² Δt` over the dissipation window.
    pub dissipation: f64,
    /// Reconstructed angle and components at `t_eval`.
    pub angle_at_eval: Vec<f64>,
    pub v_at_eval: Vec<f64>,
    pub w_at_eval: Vec<f64>,
    /// `sup_r |h^ε − h_ref|` at `t_eval`.
    pub distance: f64,
    /// Angle at the first interior node at `t_eval`; below π/2 on the North branch.
    pub core_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlSelection {
    pub runs: Vec<GlRunReport>,
    /// Distances decrease strictly along the ε sequence.
    pub monotone: bool,
    /// Fitted exponent of the sphere defect in ε.
    pub defect_exponent: Option<f64>,
}

/// Run every ε concurrently and compare with `reference(r)` at `t_eval`.
pub fn gl_select(
    h0: &(dyn Fn(f64) -> f64 + Sync),
    config: &GlConfig,
    reference: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<GlSelection, GlError> {
    config.validate()?;
    let grid = Arc::new(config.grid.clone());
    let runs: Result<Vec<GlRunReport>, GlError> = config
        .epsilon_sequence
        .par_iter()
        .map(|&eps| run_one(h0, config, grid.clone(), eps, reference))
        .collect();
    let runs = runs?;
    let monotone = runs.windows(2).all(|w| w[1].distance < w[0].distance);
    let defect_exponent = if runs.len() >= 2 {
        let xs: Vec<f64> = runs.iter().map(|r| r.epsilon.ln()).collect();
        let ys: Vec<f64> = runs.iter().map(|r| r.sphere_defect.max(1e-300).ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(GlSelection { runs, monotone, defect_exponent })
}

fn run_one(
    h0: &(dyn Fn(f64) -> f64 + Sync),
    config: &GlConfig,
    grid: Arc<RadialGrid>,
    eps: f64,
    reference: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<GlRunReport, GlError> {
    let stepper = GlStepper::new(&grid, config.d);
    let data = mollify(h0, eps);
    let mut state = EquivariantPair::from_angle(grid.clone(), eps, data);
    let r = grid.nodes();
    let times = config.times(eps);
    let ((dt_lo, dt_hi), (dr_lo, dr_hi)) = config.dissipation_window;
    let mut energy = state.energy(&stepper.lap);
    let initial_energy = energy;
    let mut rep = GlRunReport {
        epsilon: eps,
        steps: times.len() - 1,
        max_modulus: state.modulus_sq().iter().fold(0.0f64, |m, p| m.max(p.sqrt())),
        min_first_component: f64::INFINITY,
        max_energy_increase: f64::NEG_INFINITY,
        initial_energy,
        sphere_defect: f64::NAN,
        dissipation: 0.0,
        angle_at_eval: Vec::new(),
        v_at_eval: Vec::new(),
        w_at_eval: Vec::new(),
        distance: f64::NAN,
        core_angle: f64::NAN,
    };
    let mut angle = state.angle();
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let next = stepper.step(&state, dt)?;
        let e = next.energy(&stepper.lap);
        rep.max_energy_increase = rep.max_energy_increase.max(e - energy);
        energy = e;
        let new_angle = next.angle();
        rep.max_modulus = next.modulus_sq().iter().fold(rep.max_modulus, |m, p| m.max(p.sqrt()));
        for (&ri, &vi) in r.iter().zip(&next.v) {
            if ri <= config.positivity_radius {
                rep.min_first_component = rep.min_first_component.min(vi);
            }
        }
        let tm = 0.5 * (times[k] + times[k - 1]);
        if tm >= dt_lo && tm <= dt_hi {
            for i in 0..r.len() {
                if r[i] >= dr_lo && r[i] <= dr_hi {
                    let ht = (new_angle[i] - angle[i]) / dt;
                    rep.dissipation += stepper.lap.volume[i] * ht * ht * dt;
                }
            }
        }
        if (times[k] - config.t_eval).abs() <= 1e-12 * config.t_eval {
            rep.sphere_defect = next.modulus_sq().iter().fold(0.0f64, |m, p| m.max((p - 1.0).abs()));
            rep.distance = new_angle.iter().zip(r).fold(0.0f64, |m, (h, &x)| m.max((h - reference(x)).abs()));
            rep.core_angle = new_angle[1];
            rep.angle_at_eval = new_angle.clone();
            rep.v_at_eval = next.v.clone();
            rep.w_at_eval = next.w.clone();
        }
        angle = new_angle;
        state = next;
    }
    Ok(rep)
}
