//! Implicit time stepping for the corotational heat flow.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{RadialGrid, RadialLaplacian};
use super::tridiag::solve_tridiagonal;
use super::PdeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OriginBc {
    DirichletZero,
    DirichletPi,
    /// Symmetric stencil with no constraint at `r = 0`; sanity runs only.
    FreeSingular,
}

impl OriginBc {
    pub fn value(self) -> Option<f64> {
        match self {
            OriginBc::DirichletZero => Some(0.0),
            OriginBc::DirichletPi => Some(std::f64::consts::PI),
            OriginBc::FreeSingular => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OuterBc {
    Neumann,
    Dirichlet(f64),
    /// Tail condition `u_r = −p u / r`, matching `u ~ r^{−p}`.
    Decay { power: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    FullSine,
    /// Linear reaction `−V_α v`; only meaningful for perturbation runs.
    LinearizedValpha,
}

/// How `dt` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeGrid {
    Uniform,
    /// `dt` is the step in `log t`; natural for self-similar data.
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub d: u32,
    pub dt: f64,
    pub theta: f64,
    pub t_span: (f64, f64),
    pub time_grid: TimeGrid,
    pub nonlinearity: Nonlinearity,
    pub delta_start: f64,
    pub outer_bc: OuterBc,
    /// Keep every `snapshot_every`-th step (the final state is always kept).
    pub snapshot_every: usize,
}

impl SimConfig {
    pub fn new(d: u32, dt: f64, t_span: (f64, f64)) -> Self {
        Self {
            d,
            dt,
            theta: 0.5,
            t_span,
            time_grid: TimeGrid::Uniform,
            nonlinearity: Nonlinearity::FullSine,
            delta_start: t_span.0,
            outer_bc: OuterBc::Neumann,
            snapshot_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        let bad = |m: &str| Err(PdeError::InvalidConfig(m.to_string()));
        if self.d < 3 {
            return bad("d must be at least 3");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0.5, 1]");
        }
        if !(self.t_span.1 > self.t_span.0) {
            return bad("t_span must be increasing");
        }
        if self.time_grid == TimeGrid::LogUniform && self.t_span.0 <= 0.0 {
            return bad("log-uniform stepping needs t_span.0 > 0");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be positive");
        }
        Ok(())
    }

    /// Step times from `t_span.0` to `t_span.1`, both included.
    pub fn times(&self) -> Vec<f64> {
        let (t0, t1) = self.t_span;
        match self.time_grid {
            TimeGrid::Uniform => {
                let n = (((t1 - t0) / self.dt) - 1e-9).ceil().max(1.0) as usize;
                (0..=n).map(|k| if k == n { t1 } else { t0 + (t1 - t0) * k as f64 / n as f64 }).collect()
            }
            TimeGrid::LogUniform => {
                let span = (t1 / t0).ln();
                let n = ((span / self.dt) - 1e-9).ceil().max(1.0) as usize;
                (0..=n).map(|k| if k == n { t1 } else { t0 * (span * k as f64 / n as f64).exp() }).collect()
            }
        }
    }

    /// Same run with `dt` halved.
    pub fn halved(&self) -> Self {
        Self { dt: 0.5 * self.dt, snapshot_every: 2 * self.snapshot_every, ..self.clone() }
    }
}

/// Radial field at one time. In self-similar runs `time` is `s` and the
/// values are the perturbation (or full profile) in `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub time: f64,
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    pub origin_bc: OriginBc,
}

impl RadialField {
    pub fn from_fn(time: f64, grid: Arc<RadialGrid>, origin_bc: OriginBc, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        if let Some(v) = origin_bc.value() {
            values[0] = v;
        }
        Self { time, grid, values, origin_bc }
    }

    pub fn r(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Centred (one-sided at the ends) radial derivative at every node.
    pub fn gradient(&self) -> Vec<f64> {
        gradient(self.r(), &self.values)
    }

    /// Linear interpolation at `r`, clamped to the grid.
    pub fn interpolate(&self, r: f64) -> f64 {
        let nodes = self.r();
        if r <= 0.0 {
            return self.values[0];
        }
        let last = nodes.len() - 1;
        if r >= nodes[last] {
            return self.values[last];
        }
        let i = nodes.partition_point(|&x| x <= r) - 1;
        let w = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

pub(crate) fn gradient(r: &[f64], u: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        let (hl, hr) = (r[i] - r[i - 1], r[i + 1] - r[i]);
        g[i] = (hl * hl * (u[i + 1] - u[i]) + hr * hr * (u[i] - u[i - 1])) / (hl * hr * (hl + hr));
    }
    g[0] = (u[1] - u[0]) / (r[1] - r[0]);
    g[n - 1] = (u[n - 1] - u[n - 2]) / (r[n - 1] - r[n - 2]);
    g
}

/// `(sin 2h, cos 2h)` reduced about the nearest multiple of `π/2`, so the
/// constant maps `0`, `π/2` and `π` give an exactly vanishing sine.
fn sin_cos_double(h: f64) -> (f64, f64) {
    let k = (h / FRAC_PI_2).round();
    let t = h - k * FRAC_PI_2;
    let (s, c) = (2.0 * t).sin_cos();
    if k.rem_euclid(2.0) == 1.0 {
        (-s, -c)
    } else {
        (s, c)
    }
}

/// Reaction term per node; `−c_i/2 · sin(2u)` in its various forms.
#[derive(Debug, Clone)]
pub(crate) enum Reaction {
    Sine,
    /// Perturbation about a base state sampled on the grid.
    PerturbSine(Vec<f64>),
    PerturbLinear(Vec<f64>),
}

/// Spatial operator, boundary treatment and reaction for one problem.
#[derive(Debug, Clone)]
pub(crate) struct Scheme {
    pub lap: RadialLaplacian,
    pub r: Vec<f64>,
    pub origin: OriginBc,
    pub outer: OuterBc,
    /// Self-similar drift `ρ/2 · u_ρ`: centred where that keeps the matrix
    /// monotone, upwinded from the outer side elsewhere.
    pub drift: bool,
    pub reaction: Reaction,
}

impl Scheme {
    pub fn physical(grid: &RadialGrid, d: u32, origin: OriginBc, outer: OuterBc) -> Self {
        Self {
            lap: RadialLaplacian::new(grid, d),
            r: grid.nodes().to_vec(),
            origin,
            outer,
            drift: false,
            reaction: Reaction::Sine,
        }
    }

    fn fixed_origin(&self) -> bool {
        self.origin != OriginBc::FreeSingular
    }

    fn fixed_outer(&self) -> bool {
        matches!(self.outer, OuterBc::Dirichlet(_))
    }

    fn reaction(&self, u: &[f64], i: usize) -> (f64, f64) {
        let c = self.lap.inv_r2[i];
        match &self.reaction {
            Reaction::Sine => {
                let (sin2, cos2) = sin_cos_double(u[i]);
                (-0.5 * c * sin2, -c * cos2)
            }
            Reaction::PerturbSine(base) => {
                let (b, v) = (2.0 * base[i], 2.0 * u[i]);
                // sin(b+v) − sin b = 2 cos(b + v/2) sin(v/2), exact for small v.
                (-c * (b + 0.5 * v).cos() * (0.5 * v).sin(), -c * (b + v).cos())
            }
            Reaction::PerturbLinear(base) => {
                let k = -c * (2.0 * base[i]).cos();
                (k * u[i], k)
            }
        }
    }

    /// Linear operator rows `(sub, diag, sup)` excluding the reaction.
    fn linear_row(&self, i: usize) -> (f64, f64, f64) {
        let (sub, sup, extra) = self.linear_parts(i);
        (sub, extra - (sub + sup), sup)
    }

    /// Row `i` as neighbour weights on differences plus a diagonal remainder:
    /// `(Au)_i = sub (u_{i−1} − u_i) + sup (u_{i+1} − u_i) + extra u_i`.
    fn linear_parts(&self, i: usize) -> (f64, f64, f64) {
        let n = self.r.len();
        let (mut sub, mut sup) = (self.lap.lower[i], self.lap.upper[i]);
        let mut extra = 0.0;
        let decay = match self.outer {
            OuterBc::Decay { power } => power,
            _ => 0.0,
        };
        if i + 1 == n {
            extra -= decay * self.lap.outer_face / self.r[i];
        }
        if self.drift {
            let b = 0.5 * self.r[i];
            if i > 0 && i + 1 < n {
                let (hl, hr) = (self.r[i] - self.r[i - 1], self.r[i + 1] - self.r[i]);
                let down = b * hr / (hl * (hl + hr));
                if down <= sub {
                    // Centred where the cell Péclet number keeps an M-matrix.
                    sub -= down;
                    sup += b * hl / (hr * (hl + hr));
                } else {
                    sup += b / hr;
                }
            } else if i + 1 < n {
                sup += b / (self.r[i + 1] - self.r[i]);
            } else {
                extra -= b * decay / self.r[i];
            }
        }
        if i == 0 {
            sub = 0.0;
        }
        if i + 1 == n {
            sup = 0.0;
        }
        (sub, sup, extra)
    }

    pub fn rhs(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            if (i == 0 && self.fixed_origin()) || (i + 1 == n && self.fixed_outer()) {
                out[i] = 0.0;
                continue;
            }
            // Difference form, so constants are annihilated without rounding.
            let (sub, sup, extra) = self.linear_parts(i);
            let mut acc = self.reaction(u, i).0 + extra * u[i];
            if i > 0 {
                acc += sub * (u[i - 1] - u[i]);
            }
            if i + 1 < n {
                acc += sup * (u[i + 1] - u[i]);
            }
            out[i] = acc;
        }
    }

    /// One θ-step with a single Newton linearization; returns the nonlinear
    /// residual of the θ-scheme at the new state.
    pub fn step(&self, u: &mut [f64], dt: f64, theta: f64) -> Result<f64, PdeError> {
        let n = u.len();
        let mut f0 = vec![0.0; n];
        self.rhs(u, &mut f0);
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut delta: Vec<f64> = f0.iter().map(|f| dt * f).collect();
        let k = theta * dt;
        for i in 0..n {
            if (i == 0 && self.fixed_origin()) || (i + 1 == n && self.fixed_outer()) {
                delta[i] = 0.0;
                continue;
            }
            let (a, b, c) = self.linear_row(i);
            let jac = self.reaction(u, i).1;
            sub[i] = -k * a;
            diag[i] = 1.0 - k * (b + jac);
            sup[i] = -k * c;
        }
        solve_tridiagonal(&sub, &diag, &sup, &mut delta).ok_or(PdeError::LinearSolveFailure)?;
        let old: Vec<f64> = u.to_vec();
        for i in 0..n {
            u[i] += delta[i];
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(PdeError::NonFinite);
        }
        let mut f1 = vec![0.0; n];
        self.rhs(u, &mut f1);
        let mut res: f64 = 0.0;
        for i in 0..n {
            let step = u[i] - old[i];
            res = res.max((step - dt * (theta * f1[i] + (1.0 - theta) * f0[i])).abs());
        }
        Ok(res)
    }

    /// Largest stable explicit step for the linear part.
    pub fn explicit_limit(&self) -> f64 {
        (0..self.r.len())
            .map(|i| {
                let (_, diag, _) = self.linear_row(i);
                let c = self.lap.inv_r2[i];
                2.0 / (diag.abs() + c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn step_explicit(&self, u: &mut [f64], dt: f64) -> Result<(), PdeError> {
        let limit = self.explicit_limit();
        if dt > limit {
            return Err(PdeError::CflViolation { dt, limit });
        }
        let mut f = vec![0.0; u.len()];
        self.rhs(u, &mut f);
        for (x, g) in u.iter_mut().zip(&f) {
            *x += dt * g;
        }
        Ok(())
    }
}

fn check_window(values: &[f64]) -> Result<(), PdeError> {
    const LO: f64 = -std::f64::consts::PI;
    const HI: f64 = 2.0 * std::f64::consts::PI;
    match values.iter().position(|v| !(LO..=HI).contains(v)) {
        Some(i) => Err(PdeError::OutOfWindow { node: i, value: values[i] }),
        None => Ok(()),
    }
}

/// Advance `state` by one step of size `config.dt` (uniform interpretation).
pub fn step(state: &RadialField, config: &SimConfig) -> Result<RadialField, PdeError> {
    step_by(state, config, config.dt)
}

pub fn step_by(state: &RadialField, config: &SimConfig, dt: f64) -> Result<RadialField, PdeError> {
    config.validate()?;
    if config.nonlinearity != Nonlinearity::FullSine {
        return Err(PdeError::InvalidConfig("physical runs use the full sine nonlinearity".into()));
    }
    let scheme = Scheme::physical(&state.grid, config.d, state.origin_bc, config.outer_bc);
    let mut values = state.values.clone();
    scheme.step(&mut values, dt, config.theta)?;
    check_window(&values)?;
    Ok(RadialField { time: state.time + dt, grid: state.grid.clone(), values, origin_bc: state.origin_bc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDiagnostics {
    pub time: f64,
    pub sup_norm: f64,
    /// `max r |h_r|`.
    pub scaled_gradient: f64,
    /// Largest θ-scheme residual since the previous snapshot.
    pub newton_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub config: SimConfig,
    pub snapshots: Vec<RadialField>,
    pub diagnostics: Vec<SnapshotDiagnostics>,
}

impl Run {
    pub fn last(&self) -> &RadialField {
        self.snapshots.last().expect("runs keep at least one snapshot")
    }

    /// Snapshot whose time is closest to `t`.
    pub fn at(&self, t: f64) -> &RadialField {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("runs keep at least one snapshot")
    }
}

fn diagnostics(field: &RadialField, residual: f64) -> SnapshotDiagnostics {
    let g = field.gradient();
    let scaled = field.r().iter().zip(&g).fold(0.0f64, |m, (r, g)| m.max((r * g).abs()));
    SnapshotDiagnostics { time: field.time, sup_norm: field.sup_norm(), scaled_gradient: scaled, newton_residual: residual }
}

/// Evolve over `config.t_span`; `initial.time` is replaced by `t_span.0`.
pub fn evolve(initial: &RadialField, config: &SimConfig) -> Result<Run, PdeError> {
    config.validate()?;
    if config.nonlinearity != Nonlinearity::FullSine {
        return Err(PdeError::InvalidConfig("physical runs use the full sine nonlinearity".into()));
    }
    if initial.values.iter().any(|v| !v.is_finite()) {
        return Err(PdeError::NonFinite);
    }
    let scheme = Scheme::physical(&initial.grid, config.d, initial.origin_bc, config.outer_bc);
    let times = config.times();
    let mut values = initial.values.clone();
    if let Some(v) = initial.origin_bc.value() {
        values[0] = v;
    }
    if let OuterBc::Dirichlet(v) = config.outer_bc {
        *values.last_mut().expect("grid is nonempty") = v;
    }
    let first = RadialField { time: times[0], values: values.clone(), ..initial.clone() };
    let mut diags = vec![diagnostics(&first, 0.0)];
    let mut snaps = vec![first];
    let mut res_max: f64 = 0.0;
    for k in 1..times.len() {
        let res = scheme.step(&mut values, times[k] - times[k - 1], config.theta)?;
        res_max = res_max.max(res);
        if k % config.snapshot_every == 0 || k + 1 == times.len() {
            check_window(&values)?;
            let f = RadialField { time: times[k], values: values.clone(), ..initial.clone() };
            diags.push(diagnostics(&f, res_max));
            snaps.push(f);
            res_max = 0.0;
        }
    }
    Ok(Run { config: config.clone(), snapshots: snaps, diagnostics: diags })
}

/// Forward-Euler step, kept as a reference for the implicit stepper.
pub fn step_explicit(state: &RadialField, config: &SimConfig) -> Result<RadialField, PdeError> {
    config.validate()?;
    let scheme = Scheme::physical(&state.grid, config.d, state.origin_bc, config.outer_bc);
    let mut values = state.values.clone();
    scheme.step_explicit(&mut values, config.dt)?;
    check_window(&values)?;
    Ok(RadialField { time: state.time + config.dt, grid: state.grid.clone(), values, origin_bc: state.origin_bc })
}
